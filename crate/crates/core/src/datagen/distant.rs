//! Bags of sentences per ordered entity pair, labelled with the KB
//! relations between the pair.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::kb::{EntityId, KnowledgeBase, RelationId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bag {
    pub subject: EntityId,
    pub object: EntityId,
    pub labels: BTreeSet<RelationId>,
    pub sentences: Vec<String>,
}

impl Bag {
    pub fn is_na(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistantConfig {
    pub max_bag_size: usize,
    /// NA bags kept per positive bag.
    pub na_ratio: f64,
    pub seed: u64,
}

impl Default for DistantConfig {
    fn default() -> Self {
        DistantConfig { max_bag_size: 32, na_ratio: 1.0, seed: 13 }
    }
}

/// Sentence ids per ordered pair of distinct linked entities, in pair order.
pub fn cooccurrences(corpus: &[Sentence]) -> BTreeMap<(EntityId, EntityId), Vec<String>> {
    let mut pairs: BTreeMap<(EntityId, EntityId), Vec<String>> = BTreeMap::new();
    for s in corpus {
        let ents: BTreeSet<&EntityId> = s.linked_spans().filter_map(|sp| sp.entity.as_ref()).collect();
        for a in &ents {
            for b in &ents {
                if a != b {
                    pairs.entry(((*a).clone(), (*b).clone())).or_default().push(s.id.clone());
                }
            }
        }
    }
    pairs
}

pub fn distant_supervision(corpus: &[Sentence], kb: &KnowledgeBase, cfg: &DistantConfig) -> Result<Vec<Bag>> {
    if cfg.max_bag_size == 0 || !(cfg.na_ratio >= 0.0) {
        return Err(Error::Config("max_bag_size must be positive and na_ratio non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut positive = Vec::new();
    let mut na = Vec::new();
    for ((s, o), mut ids) in cooccurrences(corpus) {
        let labels = kb.relations_between(&s, &o)?;
        if ids.len() > cfg.max_bag_size {
            let mut keep = index::sample(&mut rng, ids.len(), cfg.max_bag_size).into_vec();
            keep.sort_unstable();
            ids = keep.into_iter().map(|i| ids[i].clone()).collect();
        }
        let bag = Bag { subject: s, object: o, labels, sentences: ids };
        if bag.is_na() {
            na.push(bag);
        } else {
            positive.push(bag);
        }
    }
    let quota = ((positive.len() as f64) * cfg.na_ratio).floor() as usize;
    if na.len() > quota {
        let mut keep = index::sample(&mut rng, na.len(), quota).into_vec();
        keep.sort_unstable();
        na = keep.into_iter().map(|i| na[i].clone()).collect();
    }
    let mut bags = positive;
    bags.extend(na);
    bags.sort_by(|a, b| (&a.subject, &a.object).cmp(&(&b.subject, &b.object)));
    Ok(bags)
}

/// Seeded partition by bag into train/valid/test. Sizes are the rounded
/// products `n * ratio` for the first two splits; test takes the rest.
pub fn split_dataset(bags: &[Bag], ratios: [f64; 3], seed: u64) -> Result<(Vec<Bag>, Vec<Bag>, Vec<Bag>)> {
    if ratios.iter().any(|r| *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let n = bags.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (((n as f64) * ratios[0]).round() as usize).min(n);
    let n_valid = (((n as f64) * ratios[1]).round() as usize).min(n - n_train);
    let take = |ix: &[usize]| ix.iter().map(|&i| bags[i].clone()).collect::<Vec<_>>();
    Ok((
        take(&order[..n_train]),
        take(&order[n_train..n_train + n_valid]),
        take(&order[n_train + n_valid..]),
    ))
}

pub fn write_bags(path: &Path, bags: &[Bag]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for b in bags {
        writeln!(w, "{}", serde_json::to_string(b)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_bags(path: &Path) -> Result<Vec<Bag>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bag: Bag = serde_json::from_str(&line).map_err(|e| Error::Parse {
            file: path.display().to_string(),
            line: n + 1,
            msg: e.to_string(),
        })?;
        if bag.sentences.is_empty() {
            return Err(Error::Parse { file: path.display().to_string(), line: n + 1, msg: "bag without sentences".into() });
        }
        out.push(bag);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fallback_parse;
    use crate::kb::{Entity, KbOptions, Triple};
    use proptest::prelude::*;

    fn sentence(id: &str, ents: &[&str]) -> Sentence {
        let text: Vec<String> = ents.iter().map(|e| e.to_lowercase()).collect();
        let mut s = fallback_parse(id, &format!("{} end", text.join(" and "))).unwrap();
        for (k, e) in ents.iter().enumerate() {
            let mut sp = s.span(2 * k, 2 * k);
            sp.entity = Some(EntityId::new(*e));
            s.spans.push(sp);
        }
        s
    }

    fn kb(n: usize, triples: &[(&str, &str, &str)]) -> KnowledgeBase {
        let ents = (0..n).map(|i| Entity::new(format!("E{i}"), "T", format!("e{i}")));
        KnowledgeBase::from_parts(ents, triples.iter().map(|(a, r, b)| Triple::new(*a, *r, *b)), KbOptions::default()).unwrap()
    }

    #[test]
    fn single_and_multi_label() {
        let k = kb(2, &[("E0", "r", "E1")]);
        let c = vec![sentence("s1", &["E0", "E1"])];
        let keep_all = DistantConfig { na_ratio: 10.0, ..Default::default() };
        let bags = distant_supervision(&c, &k, &keep_all).unwrap();
        assert_eq!(bags.len(), 2);
        assert_eq!(bags[0].labels, BTreeSet::from([RelationId::new("r")]));
        assert_eq!(bags[0].sentences, vec!["s1".to_string()]);
        assert!(bags[1].is_na());
        let bags = distant_supervision(&c, &k, &DistantConfig { na_ratio: 0.0, ..Default::default() }).unwrap();
        assert_eq!(bags.len(), 1);
        let k = kb(2, &[("E0", "r1", "E1"), ("E0", "r2", "E1")]);
        let bags = distant_supervision(&c, &k, &keep_all).unwrap();
        assert_eq!(bags[0].labels.len(), 2);
        assert!(distant_supervision(&[], &k, &keep_all).unwrap().is_empty());
    }

    #[test]
    fn caps_bags_deterministically() {
        let k = kb(2, &[("E0", "r", "E1")]);
        let c: Vec<Sentence> = (0..50).map(|i| sentence(&format!("s{i:02}"), &["E0", "E1"])).collect();
        let cfg = DistantConfig { max_bag_size: 5, ..Default::default() };
        let a = distant_supervision(&c, &k, &cfg).unwrap();
        assert_eq!(a[0].sentences.len(), 5);
        assert_eq!(a, distant_supervision(&c, &k, &cfg).unwrap());
    }

    #[test]
    fn split_sizes_and_errors() {
        let bags: Vec<Bag> = (0..10)
            .map(|i| Bag { subject: EntityId::new(format!("S{i}")), object: EntityId::new("O"), labels: BTreeSet::new(), sentences: vec![format!("s{i}")] })
            .collect();
        let (tr, va, te) = split_dataset(&bags, [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (8, 1, 1));
        assert_eq!((tr.clone(), va.clone(), te.clone()), split_dataset(&bags, [0.8, 0.1, 0.1], 3).unwrap());
        let mut all: Vec<Bag> = tr.into_iter().chain(va).chain(te).collect();
        all.sort_by(|a, b| a.subject.cmp(&b.subject));
        assert_eq!(all, bags);
        assert!(split_dataset(&bags, [0.8, 0.1, 0.2], 3).is_err());
    }

    #[test]
    fn bag_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bags.jsonl");
        let bags = vec![Bag { subject: EntityId::new("A"), object: EntityId::new("B"), labels: BTreeSet::from([RelationId::new("r")]), sentences: vec!["s1".into()] }];
        write_bags(&p, &bags).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.trim(), r#"{"subject":"A","object":"B","labels":["r"],"sentences":["s1"]}"#);
        assert_eq!(read_bags(&p).unwrap(), bags);
    }

    proptest! {
        #[test]
        fn labels_come_from_kb(triples in proptest::collection::vec((0usize..6, 0usize..3, 0usize..6), 0..15),
                               sents in proptest::collection::vec(proptest::collection::btree_set(0usize..6, 2..4), 1..12)) {
            let ts: Vec<(String, String, String)> = triples.iter().filter(|(a, _, b)| a != b)
                .map(|(a, r, b)| (format!("E{a}"), format!("r{r}"), format!("E{b}"))).collect();
            let tref: Vec<(&str, &str, &str)> = ts.iter().map(|(a, r, b)| (a.as_str(), r.as_str(), b.as_str())).collect();
            let k = kb(6, &tref);
            let corpus: Vec<Sentence> = sents.iter().enumerate().map(|(i, set)| {
                let names: Vec<String> = set.iter().map(|e| format!("E{e}")).collect();
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                sentence(&format!("s{i}"), &refs)
            }).collect();
            let bags = distant_supervision(&corpus, &k, &DistantConfig { max_bag_size: 1000, na_ratio: 100.0, seed: 1 }).unwrap();
            for b in &bags {
                for l in &b.labels {
                    prop_assert!(tref.contains(&(b.subject.as_str(), l.as_str(), b.object.as_str())));
                }
                // completeness: every sentence holding both entities is in the bag
                for s in &corpus {
                    let has = |e: &EntityId| s.spans.iter().any(|sp| sp.entity.as_ref() == Some(e));
                    prop_assert_eq!(has(&b.subject) && has(&b.object), b.sentences.contains(&s.id));
                }
            }
        }
    }
}

//! Seeded synthetic KB and corpus with known answers.
//!
//! Entities are typed and named `Given Family`; a family name is shared by
//! several entities of different types and is also an alias of each, so a
//! bare family-name mention is ambiguous. Every relation has a type
//! signature and a cue phrase. Each triple is realised by a few templated
//! sentences `... subject cue object ...` whose dependency tree hangs both
//! mentions off the cue verb. A share of the triples is held out of the KB
//! and realised only in a separate held-out corpus, next to distractor
//! sentences that pair unrelated entities without a cue.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_corpus, Sentence, Span, Token};
use crate::datagen::{distant_supervision, write_bags, Bag, DistantConfig};
use crate::error::{Error, Result};
use crate::kb::{Entity, EntityId, KbOptions, KnowledgeBase, Triple};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub entities: usize,
    pub types: usize,
    pub relations: usize,
    pub triples_per_relation: usize,
    pub sentences_per_triple: usize,
    /// Distractor sentences per positive sentence.
    pub distractor_rate: f64,
    /// Share of each relation's triples kept out of the KB.
    pub heldout_fraction: f64,
    /// Entities sharing one family name.
    pub family_size: usize,
    /// Probability that a mention uses the bare family name.
    pub alias_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            entities: 200,
            types: 5,
            relations: 10,
            triples_per_relation: 40,
            sentences_per_triple: 3,
            distractor_rate: 0.2,
            heldout_fraction: 0.2,
            family_size: 3,
            alias_rate: 0.3,
            seed: 42,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [self.entities, self.types, self.relations, self.triples_per_relation, self.sentences_per_triple, self.family_size];
        if counts.contains(&0) {
            return Err(Error::Config("synthetic spec counts must be positive".into()));
        }
        if self.entities < 2 * self.types {
            return Err(Error::Config("need at least two entities per type".into()));
        }
        for (name, v) in [("distractor_rate", self.distractor_rate), ("heldout_fraction", self.heldout_fraction), ("alias_rate", self.alias_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Relation name, cue words and signature as type indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationSchema {
    pub name: String,
    pub cue: Vec<String>,
    pub subject_type: usize,
    pub object_type: usize,
}

const TYPE_NAMES: [&str; 5] = ["Person", "Organization", "City", "Work", "Award"];

const RELATIONS: [(&str, &str, usize, usize); 10] = [
    ("founded", "founded", 0, 1),
    ("works_for", "works for", 0, 1),
    ("born_in", "was born in", 0, 2),
    ("located_in", "is located in", 1, 2),
    ("wrote", "wrote", 0, 3),
    ("published_by", "was published by", 3, 1),
    ("won", "won", 0, 4),
    ("received", "received", 3, 4),
    ("sponsors", "sponsors", 1, 4),
    ("set_in", "is set in", 3, 2),
];

pub fn type_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|k| TYPE_NAMES.get(k).map_or_else(|| format!("Type{k}"), |s| s.to_string()))
        .collect()
}

pub fn relation_schemas(relations: usize, types: usize) -> Vec<RelationSchema> {
    (0..relations)
        .map(|k| match RELATIONS.get(k) {
            Some((name, cue, s, o)) => RelationSchema {
                name: name.to_string(),
                cue: cue.split(' ').map(str::to_string).collect(),
                subject_type: s % types,
                object_type: o % types,
            },
            None => RelationSchema {
                name: format!("relation_{k}"),
                cue: vec![format!("cue{k}")],
                subject_type: k % types,
                object_type: (k + 1) % types,
            },
        })
        .collect()
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ren", "tu", "sa", "vel", "dor", "an", "ix", "po", "qua", "zel", "bri", "to", "ne", "ra", "mon",
    "li", "gar", "fen", "ost", "ur", "hal",
];

/// Words the templates use; generated names must avoid them.
const TEMPLATE_WORDS: [&str; 30] = [
    "Last", "year", ",", ".", "reportedly", "in", "According", "to", "reports", "who", "is", "well", "known", "and",
    "attended", "the", "meeting", "met", "at", "conference", "Both", "were", "mentioned", "news", "later", "appeared",
    "beside", "Recently", "also", "Officials",
];

fn make_name<R: Rng>(rng: &mut R, syllables: usize) -> String {
    let mut s: String = (0..syllables).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
    s[..1].make_ascii_uppercase();
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub spec: SynthSpec,
    pub entities: Vec<Entity>,
    pub kb_triples: Vec<Triple>,
    /// True facts absent from the KB, realised in the held-out corpus.
    pub heldout_triples: Vec<Triple>,
    /// Training corpus with gold links.
    pub train: Vec<Sentence>,
    /// Held-out corpus with gold links.
    pub heldout: Vec<Sentence>,
}

/// Paths written by [`SynthData::write`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthFiles {
    pub entities: PathBuf,
    pub triples: PathBuf,
    pub heldout_triples: PathBuf,
    pub corpus: PathBuf,
    pub heldout_corpus: PathBuf,
    pub gold_corpus: PathBuf,
    pub gold_heldout: PathBuf,
    pub gold_bags: PathBuf,
}

impl SynthFiles {
    pub fn in_dir(dir: &Path) -> Self {
        SynthFiles {
            entities: dir.join("entities.tsv"),
            triples: dir.join("triples.tsv"),
            heldout_triples: dir.join("heldout_triples.tsv"),
            corpus: dir.join("corpus.jsonl"),
            heldout_corpus: dir.join("heldout.jsonl"),
            gold_corpus: dir.join("gold_corpus.jsonl"),
            gold_heldout: dir.join("gold_heldout.jsonl"),
            gold_bags: dir.join("gold_bags.jsonl"),
        }
    }
}

/// Copies without spans, as a tagger-free corpus would arrive.
pub fn strip_links(sentences: &[Sentence]) -> Vec<Sentence> {
    sentences.iter().map(|s| Sentence { spans: Vec::new(), ..s.clone() }).collect()
}

pub fn write_triple_file(path: &Path, triples: &[Triple]) -> Result<()> {
    let mut out = String::new();
    for t in triples {
        let _ = writeln!(out, "{}\t{}\t{}", t.subject, t.relation, t.object);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

impl SynthData {
    pub fn kb(&self) -> Result<KnowledgeBase> {
        KnowledgeBase::from_parts(self.entities.clone(), self.kb_triples.clone(), KbOptions::default())
    }

    /// KB plus the held-out facts.
    pub fn truth_kb(&self) -> Result<KnowledgeBase> {
        let all = self.kb_triples.iter().chain(&self.heldout_triples).cloned();
        KnowledgeBase::from_parts(self.entities.clone(), all, KbOptions::default())
    }

    /// Ordered-pair bags of the gold-linked held-out corpus labelled with
    /// every true relation, NA pairs included.
    pub fn gold_bags(&self) -> Result<Vec<Bag>> {
        let cfg = DistantConfig { max_bag_size: usize::MAX, na_ratio: f64::INFINITY, seed: 0 };
        distant_supervision(&self.heldout, &self.truth_kb()?, &cfg)
    }

    pub fn write(&self, dir: &Path) -> Result<SynthFiles> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let f = SynthFiles::in_dir(dir);
        let kb = self.kb()?;
        kb.write_entities(&f.entities)?;
        write_triple_file(&f.triples, &self.kb_triples)?;
        write_triple_file(&f.heldout_triples, &self.heldout_triples)?;
        write_corpus(&f.corpus, &strip_links(&self.train))?;
        write_corpus(&f.heldout_corpus, &strip_links(&self.heldout))?;
        write_corpus(&f.gold_corpus, &self.train)?;
        write_corpus(&f.gold_heldout, &self.heldout)?;
        write_bags(&f.gold_bags, &self.gold_bags()?)?;
        Ok(f)
    }
}

/// Sentence under construction: words with tags and heads relative to the
/// pieces, plus the mentions to annotate.
struct Builder<'a> {
    entities: &'a [Entity],
    families: &'a [String],
    words: Vec<(String, &'static str)>,
    heads: Vec<Option<usize>>,
    root: Option<usize>,
    pending: Vec<usize>,
    spans: Vec<(usize, usize, usize)>,
}

impl<'a> Builder<'a> {
    fn new(entities: &'a [Entity], families: &'a [String]) -> Self {
        Builder { entities, families, words: Vec::new(), heads: Vec::new(), root: None, pending: Vec::new(), spans: Vec::new() }
    }

    /// Attached to the root once it exists.
    fn word(&mut self, w: &str, tag: &'static str) -> &mut Self {
        self.pending.push(self.words.len());
        self.words.push((w.to_string(), tag));
        self.heads.push(None);
        self
    }

    fn root(&mut self, w: &str, tag: &'static str) -> &mut Self {
        self.root = Some(self.words.len());
        self.words.push((w.to_string(), tag));
        self.heads.push(None);
        self
    }

    fn mention<R: Rng>(&mut self, e: usize, alias_rate: f64, rng: &mut R) -> &mut Self {
        let start = self.words.len();
        if !rng.gen_bool(alias_rate) {
            let given = self.entities[e].canonical_name.split(' ').next().expect("two-word name").to_string();
            self.words.push((given, "NNP"));
            self.heads.push(Some(start + 1));
        }
        let head = self.words.len();
        self.words.push((self.families[e].clone(), "NNP"));
        self.heads.push(None);
        self.pending.push(head);
        self.spans.push((start, head, e));
        self
    }

    fn finish(&self, id: String) -> Sentence {
        let root = self.root.expect("template sets a root");
        let tokens: Vec<Token> = self
            .words
            .iter()
            .enumerate()
            .map(|(i, (w, tag))| Token {
                index: i,
                surface: w.clone(),
                pos_tag: tag.to_string(),
                head: if i == root {
                    None
                } else if self.pending.contains(&i) {
                    Some(root)
                } else {
                    self.heads[i]
                },
            })
            .collect();
        let spans = self
            .spans
            .iter()
            .map(|&(s, e, ent)| {
                let mut sp = Span::new(&tokens, s, e);
                sp.entity = Some(self.entities[ent].id.clone());
                sp.span_type = Some(self.entities[ent].entity_type.clone());
                sp
            })
            .collect();
        Sentence { id, tokens, spans }
    }
}

fn positive<R: Rng>(b: &mut Builder<'_>, s: usize, cue: &[String], o: usize, alias: f64, rng: &mut R) {
    let cue_words = |b: &mut Builder<'_>| {
        b.root(&cue[0], "VB");
        for w in &cue[1..] {
            b.word(w, "VB");
        }
    };
    match rng.gen_range(0..5) {
        0 => {
            b.mention(s, alias, rng);
            cue_words(b);
            b.mention(o, alias, rng);
        }
        1 => {
            b.word("Last", "JJ").word("year", "NN").word(",", ",").mention(s, alias, rng);
            cue_words(b);
            b.mention(o, alias, rng);
        }
        2 => {
            b.mention(s, alias, rng).word("reportedly", "RB");
            cue_words(b);
            b.mention(o, alias, rng).word("in", "IN");
            let year = rng.gen_range(1950..2020).to_string();
            b.word(&year, "CD");
        }
        3 => {
            b.word("According", "VBG").word("to", "TO").word("reports", "NNS").word(",", ",").mention(s, alias, rng);
            cue_words(b);
            b.mention(o, alias, rng);
        }
        _ => {
            b.mention(s, alias, rng).word(",", ",").word("who", "WP").word("is", "VB").word("well", "RB");
            b.word("known", "VBN").word(",", ",").word("also", "RB");
            cue_words(b);
            b.mention(o, alias, rng);
        }
    }
    b.word(".", ".");
}

fn distractor<R: Rng>(b: &mut Builder<'_>, s: usize, o: usize, alias: f64, rng: &mut R) {
    match rng.gen_range(0..4) {
        0 => {
            b.mention(s, alias, rng).word("and", "CC").mention(o, alias, rng);
            b.root("attended", "VB").word("the", "DT").word("meeting", "NN");
        }
        1 => {
            b.mention(s, alias, rng).root("met", "VB").mention(o, alias, rng);
            b.word("at", "IN").word("the", "DT").word("conference", "NN");
        }
        2 => {
            b.word("Both", "DT").mention(s, alias, rng).word("and", "CC").mention(o, alias, rng);
            b.word("were", "VB").root("mentioned", "VB").word("in", "IN").word("the", "DT").word("news", "NN");
        }
        _ => {
            b.word("Recently", "RB").word(",", ",").mention(s, alias, rng).word("later", "RB");
            b.root("appeared", "VB").word("beside", "IN").mention(o, alias, rng);
        }
    }
    b.word(".", ".");
}

/// True when some reading of the two mentions other than the planted pair
/// is related in truth. A family alias can stand for any member of the
/// family; sub-graph linking would pick such a reading with confidence.
fn misleading(b: &Builder<'_>, families: &[String], linked: &HashSet<(usize, usize)>) -> bool {
    let readings = |&(start, head, e): &(usize, usize, usize)| -> Vec<usize> {
        if start == head {
            (0..families.len()).filter(|&x| families[x] == families[e]).collect()
        } else {
            vec![e]
        }
    };
    let (a, b0) = (&b.spans[0], &b.spans[1]);
    let planted = (a.2.min(b0.2), a.2.max(b0.2));
    let (ra, rb) = (readings(a), readings(b0));
    ra.iter().any(|&x| rb.iter().any(|&y| (x.min(y), x.max(y)) != planted && linked.contains(&(x.min(y), x.max(y)))))
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let types = type_names(spec.types);
    let schemas = relation_schemas(spec.relations, spec.types);

    // names: unique given names, family names shared within a group
    let reserved: HashSet<&str> = TEMPLATE_WORDS.into_iter().collect();
    let mut used: HashSet<String> = HashSet::new();
    let mut fresh = |rng: &mut ChaCha8Rng, syl: usize| loop {
        let n = make_name(rng, syl);
        if !reserved.contains(n.as_str()) && used.insert(n.clone()) {
            break n;
        }
    };
    let given: Vec<String> = (0..spec.entities).map(|_| fresh(&mut rng, 2)).collect();

    // interleave shuffled type buckets so consecutive entities differ in type
    let mut buckets: Vec<Vec<usize>> = (0..spec.types).map(|t| (t..spec.entities).step_by(spec.types).collect()).collect();
    for b in &mut buckets {
        b.shuffle(&mut rng);
    }
    let mut order = Vec::with_capacity(spec.entities);
    for k in 0.. {
        if order.len() == spec.entities {
            break;
        }
        for b in &buckets {
            if let Some(&e) = b.get(k) {
                order.push(e);
            }
        }
    }
    let mut families = vec![String::new(); spec.entities];
    for group in order.chunks(spec.family_size) {
        let name = fresh(&mut rng, 3);
        for &e in group {
            families[e] = name.clone();
        }
    }
    let entities: Vec<Entity> = (0..spec.entities)
        .map(|i| {
            let mut e = Entity::new(format!("E{i:04}"), types[i % spec.types].clone(), format!("{} {}", given[i], families[i]));
            e.aliases.push(families[i].clone());
            e
        })
        .collect();

    // triples: distinct pairs, no pair related twice in either direction
    let mut linked: HashSet<(usize, usize)> = HashSet::new();
    let mut per_relation: Vec<Vec<(usize, usize)>> = Vec::with_capacity(schemas.len());
    for sc in &schemas {
        let subjects = &buckets[sc.subject_type];
        let objects = &buckets[sc.object_type];
        let mut got = Vec::new();
        let mut attempts = 0;
        while got.len() < spec.triples_per_relation && attempts < 100 * spec.triples_per_relation {
            attempts += 1;
            let s = *subjects.choose(&mut rng).expect("non-empty bucket");
            let o = *objects.choose(&mut rng).expect("non-empty bucket");
            if s == o || linked.contains(&(s.min(o), s.max(o))) {
                continue;
            }
            linked.insert((s.min(o), s.max(o)));
            got.push((s, o));
        }
        per_relation.push(got);
    }
    let mut kb_pairs = Vec::new();
    let mut held_pairs = Vec::new();
    for (r, pairs) in per_relation.iter_mut().enumerate() {
        pairs.shuffle(&mut rng);
        let n_held = ((pairs.len() as f64) * spec.heldout_fraction).round() as usize;
        for (k, &(s, o)) in pairs.iter().enumerate() {
            if k < n_held {
                held_pairs.push((s, r, o));
            } else {
                kb_pairs.push((s, r, o));
            }
        }
    }
    let to_triple = |&(s, r, o): &(usize, usize, usize)| {
        Triple::new(entities[s].id.0.clone(), schemas[r].name.clone(), entities[o].id.0.clone())
    };

    let corpus = |facts: &[(usize, usize, usize)], prefix: &str, rng: &mut ChaCha8Rng| -> Vec<Sentence> {
        let mut built: Vec<Builder<'_>> = Vec::new();
        for &(s, r, o) in facts {
            for _ in 0..spec.sentences_per_triple {
                let mut tries = 0;
                let b = loop {
                    let mut b = Builder::new(&entities, &families);
                    // full names after repeated failures always read correctly
                    let alias = if tries < 20 { spec.alias_rate } else { 0.0 };
                    positive(&mut b, s, &schemas[r].cue, o, alias, rng);
                    if !misleading(&b, &families, &linked) {
                        break b;
                    }
                    tries += 1;
                };
                built.push(b);
            }
        }
        let n_distractors = ((built.len() as f64) * spec.distractor_rate).round() as usize;
        let (mut made, mut tries) = (0, 0);
        while made < n_distractors && tries < 1000 * n_distractors {
            tries += 1;
            let s = rng.gen_range(0..spec.entities);
            let o = rng.gen_range(0..spec.entities);
            if s == o || linked.contains(&(s.min(o), s.max(o))) {
                continue;
            }
            let mut b = Builder::new(&entities, &families);
            distractor(&mut b, s, o, spec.alias_rate, rng);
            if misleading(&b, &families, &linked) {
                continue;
            }
            built.push(b);
            made += 1;
        }
        built.shuffle(rng);
        built.iter().enumerate().map(|(i, b)| b.finish(format!("{prefix}{i:05}"))).collect()
    };
    let train = corpus(&kb_pairs, "t", &mut rng);
    let heldout = corpus(&held_pairs, "h", &mut rng);
    let mut kb_triples: Vec<Triple> = kb_pairs.iter().map(to_triple).collect();
    let mut heldout_triples: Vec<Triple> = held_pairs.iter().map(to_triple).collect();
    kb_triples.sort();
    heldout_triples.sort();
    let data = SynthData { spec: spec.clone(), entities, kb_triples, heldout_triples, train, heldout };
    for s in data.train.iter().chain(&data.heldout) {
        s.validate()?;
    }
    Ok(data)
}

/// Entity ids of every family group with more than one member.
pub fn ambiguous_aliases(entities: &[Entity]) -> Vec<BTreeSet<EntityId>> {
    let mut by_alias: std::collections::BTreeMap<&str, BTreeSet<EntityId>> = Default::default();
    for e in entities {
        for a in &e.aliases {
            by_alias.entry(a.as_str()).or_default().insert(e.id.clone());
        }
    }
    by_alias.into_values().filter(|s| s.len() > 1).collect()
}

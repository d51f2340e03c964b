use std::collections::{BTreeSet, HashMap};

use super::Sentence;
use crate::kb::{EntityId, KnowledgeBase};

/// Alias dictionary built from KB aliases.
#[derive(Clone, Debug, Default)]
pub struct Gazetteer {
    entries: HashMap<String, BTreeSet<EntityId>>,
    max_ngram: usize,
    normalize: bool,
}

/// A dictionary hit: inclusive token range plus every entity owning the alias.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NgramMatch {
    pub start: usize,
    pub end: usize,
    pub entities: Vec<EntityId>,
}

impl Gazetteer {
    /// With `normalize`, keys and lookups are lowercased.
    pub fn from_kb(kb: &KnowledgeBase, normalize: bool) -> Self {
        let mut g = Gazetteer { entries: HashMap::new(), max_ngram: 0, normalize };
        for e in kb.entities() {
            for alias in &e.aliases {
                g.insert(alias, e.id.clone());
            }
        }
        g
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, EntityId)>, normalize: bool) -> Self {
        let mut g = Gazetteer { entries: HashMap::new(), max_ngram: 0, normalize };
        for (alias, id) in pairs {
            g.insert(alias, id);
        }
        g
    }

    fn insert(&mut self, alias: &str, id: EntityId) {
        let words: Vec<&str> = alias.split_whitespace().collect();
        if words.is_empty() {
            return;
        }
        self.max_ngram = self.max_ngram.max(words.len());
        let key = self.key(&words.join(" "));
        self.entries.entry(key).or_default().insert(id);
    }

    fn key(&self, s: &str) -> String {
        if self.normalize {
            s.to_lowercase()
        } else {
            s.to_string()
        }
    }

    pub fn max_ngram(&self) -> usize {
        self.max_ngram
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entities owning `surface` (space-joined tokens).
    pub fn lookup(&self, surface: &str) -> Option<&BTreeSet<EntityId>> {
        if self.normalize {
            self.entries.get(&surface.to_lowercase())
        } else {
            self.entries.get(surface)
        }
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.lookup(surface).is_some()
    }
}

/// Greedy left-to-right, leftmost-longest dictionary matching.
pub fn longest_ngram_match(sentence: &Sentence, gazetteer: &Gazetteer) -> Vec<NgramMatch> {
    let words = sentence.surfaces();
    let n = words.len();
    let mut out = Vec::new();
    let mut p = 0;
    while p < n {
        let longest = gazetteer.max_ngram().min(n - p);
        let hit = (1..=longest).rev().find_map(|len| {
            let surface = words[p..p + len].join(" ");
            gazetteer.lookup(&surface).map(|ids| (len, ids))
        });
        match hit {
            Some((len, ids)) => {
                out.push(NgramMatch { start: p, end: p + len - 1, entities: ids.iter().cloned().collect() });
                p += len;
            }
            None => p += 1,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fallback_parse;
    use proptest::prelude::*;

    fn gaz(aliases: &[&str]) -> Gazetteer {
        Gazetteer::from_pairs(aliases.iter().enumerate().map(|(i, a)| (*a, EntityId::new(format!("E{i}")))), false)
    }

    #[test]
    fn longest_wins_then_shorter_fallback() {
        let s = fallback_parse("s", "Avengers Endgame premiered").unwrap();
        let m = longest_ngram_match(&s, &gaz(&["Avengers Endgame", "Avengers"]));
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].start, m[0].end), (0, 1));
        let m = longest_ngram_match(&s, &gaz(&["Avengers"]));
        assert_eq!((m[0].start, m[0].end), (0, 0));
        assert!(longest_ngram_match(&s, &gaz(&["Thor"])).is_empty());
    }

    #[test]
    fn normalisation_flag() {
        let s = fallback_parse("s", "the avengers").unwrap();
        assert!(longest_ngram_match(&s, &gaz(&["Avengers"])).is_empty());
        let g = Gazetteer::from_pairs([("Avengers", EntityId::new("E"))], true);
        assert_eq!(longest_ngram_match(&s, &g).len(), 1);
    }

    /// Exhaustive oracle: enumerate every n-gram hit, then sweep
    /// left-to-right taking the longest hit starting at the cursor.
    fn oracle(words: &[String], aliases: &[String]) -> Vec<(usize, usize)> {
        let n = words.len();
        let mut hits = vec![];
        for i in 0..n {
            for j in i..n {
                let s = words[i..=j].join(" ");
                if aliases.contains(&s) {
                    hits.push((i, j));
                }
            }
        }
        let mut out = vec![];
        let mut cursor = 0;
        while cursor < n {
            let best = hits.iter().filter(|h| h.0 == cursor).max_by_key(|h| h.1);
            match best {
                Some(&h) => {
                    out.push(h);
                    cursor = h.1 + 1;
                }
                None => cursor += 1,
            }
        }
        out
    }

    proptest! {
        #[test]
        fn matches_exhaustive_oracle(words in proptest::collection::vec("[abc]", 1..14),
                                     aliases in proptest::collection::vec(proptest::collection::vec("[abc]", 1..4), 1..6)) {
            let aliases: Vec<String> = aliases.iter().map(|a| a.join(" ")).collect();
            let g = Gazetteer::from_pairs(aliases.iter().map(|a| (a.as_str(), EntityId::new("X"))), false);
            let s = fallback_parse("p", &words.join(" ")).unwrap();
            let got: Vec<(usize, usize)> = longest_ngram_match(&s, &g).iter().map(|m| (m.start, m.end)).collect();
            prop_assert_eq!(got.clone(), oracle(&words, &aliases));
            for w in got.windows(2) {
                prop_assert!(w[0].1 < w[1].0);
            }
        }
    }
}

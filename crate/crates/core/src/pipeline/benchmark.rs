//! Loader for an externally supplied relation-extraction benchmark.
//!
//! Expected layout of the benchmark directory:
//!
//! ```text
//! entities.tsv   id, type, canonical name, aliases (KB entity format)
//! triples.tsv    subject, relation, object (KB triple format)
//! test.jsonl     one labelled sentence per line:
//!                {"sentence": <corpus record>, "subject": "E1",
//!                 "object": "E2", "relations": ["r1", ...]}
//! ```
//!
//! The sentence record uses the corpus JSONL schema and must link both
//! entities. The reference release has 291,215 KB triples and 6,058 test
//! sentences.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::corpus::{parse_sentence_json, Sentence};
use crate::datagen::Bag;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kb::{load_kb, EntityId, KbOptions, KnowledgeBase, RelationId};
use crate::metrics::{eval_relation_extractor, ReMetrics};
use crate::relex::{encode_bag, RelationExtractor};

pub const BENCHMARK_ENV: &str = "KBC_BENCHMARK_DIR";
pub const EXPECTED_KB_TRIPLES: usize = 291_215;
pub const EXPECTED_TEST_SENTENCES: usize = 6_058;

const FILES: [&str; 3] = ["entities.tsv", "triples.tsv", "test.jsonl"];

#[derive(Deserialize)]
struct TestRecord {
    sentence: serde_json::Value,
    subject: String,
    object: String,
    #[serde(default)]
    relations: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct BenchmarkInstance {
    pub sentence: Sentence,
    pub subject: EntityId,
    pub object: EntityId,
    pub relations: BTreeSet<RelationId>,
}

#[derive(Debug)]
pub struct Benchmark {
    pub kb: KnowledgeBase,
    pub test: Vec<BenchmarkInstance>,
}

/// The directory named by `KBC_BENCHMARK_DIR`, if set.
pub fn benchmark_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(BENCHMARK_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

pub fn load_benchmark(dir: &Path) -> Result<Benchmark> {
    let missing: Vec<&str> = FILES.iter().copied().filter(|f| !dir.join(f).is_file()).collect();
    if !missing.is_empty() {
        return Err(Error::BenchmarkNotInstalled(format!(
            "{} lacks {}; expected {}",
            dir.display(),
            missing.join(", "),
            FILES.join(", ")
        )));
    }
    let kb = load_kb(&dir.join(FILES[0]), &dir.join(FILES[1]), KbOptions::default())?;
    let path = dir.join(FILES[2]);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut test = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse { file: path.display().to_string(), line: n + 1, msg };
        let rec: TestRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let sentence = parse_sentence_json(&rec.sentence.to_string()).map_err(|e| bad(e.to_string()))?;
        test.push(BenchmarkInstance {
            sentence,
            subject: EntityId(rec.subject),
            object: EntityId(rec.object),
            relations: rec.relations.into_iter().map(RelationId).collect(),
        });
    }
    Ok(Benchmark { kb, test })
}

impl Benchmark {
    /// Differences from the reference release sizes.
    pub fn count_mismatches(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.kb.num_triples() != EXPECTED_KB_TRIPLES {
            out.push(format!("{} KB triples, expected {EXPECTED_KB_TRIPLES}", self.kb.num_triples()));
        }
        if self.test.len() != EXPECTED_TEST_SENTENCES {
            out.push(format!("{} test sentences, expected {EXPECTED_TEST_SENTENCES}", self.test.len()));
        }
        out
    }

    /// Test sentences grouped into bags by entity pair.
    pub fn bags(&self) -> Vec<Bag> {
        let mut map: BTreeMap<(EntityId, EntityId), Bag> = BTreeMap::new();
        for t in &self.test {
            let bag = map.entry((t.subject.clone(), t.object.clone())).or_insert_with(|| Bag {
                subject: t.subject.clone(),
                object: t.object.clone(),
                labels: BTreeSet::new(),
                sentences: Vec::new(),
            });
            bag.labels.extend(t.relations.iter().cloned());
            bag.sentences.push(t.sentence.id.clone());
        }
        map.into_values().collect()
    }

    /// Bag-level scores of `model` on the test set.
    pub fn evaluate(&self, model: &RelationExtractor, table: &EmbeddingTable) -> Result<ReMetrics> {
        let index: HashMap<&str, &Sentence> = self.test.iter().map(|t| (t.sentence.id.as_str(), &t.sentence)).collect();
        let bags = self.bags();
        let vocab = model.vocab();
        let mut pred = Vec::with_capacity(bags.len());
        for b in &bags {
            let inst = encode_bag(b, &index, table, &self.kb, vocab, model.config().max_position)?;
            let p = model.predict(&inst)?;
            pred.push(p.labels.iter().map(|&j| vocab.relations[j].clone()).collect());
        }
        let gold: Vec<BTreeSet<RelationId>> = bags.iter().map(|b| b.labels.clone()).collect();
        eval_relation_extractor(&pred, &gold)
    }
}

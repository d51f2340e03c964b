//! Bag encoding for training and triple extraction over a linked corpus.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoding::{encode_tokens, find_entity_span, Instance, Vocab};
use super::model::{RelationExtractor, TrainingBag};
use super::validate::{validate_triple, RejectReason};
use crate::corpus::Sentence;
use crate::datagen::{cooccurrences, Bag};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kb::{EntityId, FactTypeTemplate, KnowledgeBase, RelationId, Triple};
use crate::par;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    /// Sentences per pair beyond this are dropped (corpus order kept).
    pub max_bag_size: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig { max_bag_size: 32 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractedTriple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
    /// Bag score of the relation.
    pub confidence: f64,
    pub sentences: Vec<String>,
}

impl ExtractedTriple {
    pub fn triple(&self) -> Triple {
        Triple { subject: self.subject.clone(), relation: self.relation.clone(), object: self.object.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectedTriple {
    pub triple: ExtractedTriple,
    pub reason: RejectReason,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Extraction {
    pub accepted: Vec<ExtractedTriple>,
    pub rejected: Vec<RejectedTriple>,
}

fn sentence_index(corpus: &[Sentence]) -> HashMap<&str, &Sentence> {
    corpus.iter().map(|s| (s.id.as_str(), s)).collect()
}

/// Encodes every sentence of `bag` for its (subject, object) pair.
pub fn encode_bag(
    bag: &Bag,
    sentences: &HashMap<&str, &Sentence>,
    table: &EmbeddingTable,
    kb: &KnowledgeBase,
    vocab: &Vocab,
    max_position: usize,
) -> Result<Vec<Instance>> {
    encode_pair(&bag.subject, &bag.object, &bag.sentences, sentences, table, kb, vocab, max_position)
}

#[allow(clippy::too_many_arguments)]
fn encode_pair(
    subject: &EntityId,
    object: &EntityId,
    ids: &[String],
    sentences: &HashMap<&str, &Sentence>,
    table: &EmbeddingTable,
    kb: &KnowledgeBase,
    vocab: &Vocab,
    max_position: usize,
) -> Result<Vec<Instance>> {
    ids.iter()
        .map(|id| {
            let s = sentences
                .get(id.as_str())
                .ok_or_else(|| Error::Sentence { id: id.clone(), msg: "not in corpus".into() })?;
            let missing = |e: &EntityId| Error::Sentence { id: id.clone(), msg: format!("no span linked to {e}") };
            let a = find_entity_span(s, subject).ok_or_else(|| missing(subject))?;
            let b = find_entity_span(s, object).ok_or_else(|| missing(object))?;
            encode_tokens(s, a, b, table, kb, vocab, max_position)
        })
        .collect()
}

/// Encoded bags with one gold flag per vocabulary relation.
pub fn training_bags(
    bags: &[Bag],
    corpus: &[Sentence],
    table: &EmbeddingTable,
    kb: &KnowledgeBase,
    vocab: &Vocab,
    max_position: usize,
) -> Result<Vec<TrainingBag>> {
    let index = sentence_index(corpus);
    par::map(bags, |b| -> Result<TrainingBag> {
        Ok(TrainingBag {
            instances: encode_bag(b, &index, table, kb, vocab, max_position)?,
            labels: vocab.relations.iter().map(|r| b.labels.contains(r)).collect(),
        })
    })
    .into_iter()
    .collect()
}

/// Predicted triples for every ordered pair of linked entities, before
/// type validation.
pub fn predict_triples(
    corpus: &[Sentence],
    kb: &KnowledgeBase,
    model: &RelationExtractor,
    table: &EmbeddingTable,
    cfg: &ExtractConfig,
) -> Result<Vec<ExtractedTriple>> {
    if cfg.max_bag_size == 0 {
        return Err(Error::Config("max_bag_size must be positive".into()));
    }
    let index = sentence_index(corpus);
    let pairs: Vec<((EntityId, EntityId), Vec<String>)> = cooccurrences(corpus)
        .into_iter()
        .map(|(p, mut ids)| {
            ids.truncate(cfg.max_bag_size);
            (p, ids)
        })
        .collect();
    let max_position = model.config().max_position;
    let vocab = model.vocab();
    let predicted = par::map(&pairs, |((s, o), ids)| -> Result<Vec<ExtractedTriple>> {
        let inst = encode_pair(s, o, ids, &index, table, kb, vocab, max_position)?;
        let p = model.predict(&inst)?;
        Ok(p.labels
            .iter()
            .map(|&j| ExtractedTriple {
                subject: s.clone(),
                relation: vocab.relations[j].clone(),
                object: o.clone(),
                confidence: p.scores[j],
                sentences: ids.clone(),
            })
            .collect())
    });
    let mut out = Vec::new();
    for batch in predicted {
        out.extend(batch?);
    }
    Ok(out)
}

/// Splits triples by type-signature validity.
pub fn validate_extracted(triples: Vec<ExtractedTriple>, kb: &KnowledgeBase, template: &FactTypeTemplate) -> Result<Extraction> {
    let mut out = Extraction::default();
    for t in triples {
        let st = kb.entity_type(&t.subject)?;
        let ot = kb.entity_type(&t.object)?;
        match validate_triple(st, &t.relation, ot, template) {
            Ok(()) => out.accepted.push(t),
            Err(reason) => out.rejected.push(RejectedTriple { triple: t, reason }),
        }
    }
    Ok(out)
}

/// [`predict_triples`] followed by [`validate_extracted`].
pub fn extract(
    corpus: &[Sentence],
    kb: &KnowledgeBase,
    model: &RelationExtractor,
    table: &EmbeddingTable,
    template: &FactTypeTemplate,
    cfg: &ExtractConfig,
) -> Result<Extraction> {
    validate_extracted(predict_triples(corpus, kb, model, table, cfg)?, kb, template)
}

fn triple_line(t: &ExtractedTriple) -> String {
    format!("{}\t{}\t{}\t{:.6}\t{}", t.subject, t.relation, t.object, t.confidence, t.sentences.join(","))
}

/// `subject relation object confidence sentence_ids`, tab-separated.
pub fn write_extracted(path: &Path, triples: &[ExtractedTriple]) -> Result<()> {
    let mut out = String::new();
    for t in triples {
        let _ = writeln!(out, "{}", triple_line(t));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Same columns as [`write_extracted`] plus the rejection reason.
pub fn write_rejected(path: &Path, rejected: &[RejectedTriple]) -> Result<()> {
    let mut out = String::new();
    for r in rejected {
        let _ = writeln!(out, "{}\t{}", triple_line(&r.triple), r.reason);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_extracted(path: &Path) -> Result<Vec<ExtractedTriple>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, msg: String| Error::Parse { file: path.display().to_string(), line, msg };
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(bad(n + 1, format!("expected 5 columns, got {}", cols.len())));
        }
        let confidence: f64 = cols[3].parse().map_err(|_| bad(n + 1, format!("bad confidence `{}`", cols[3])))?;
        out.push(ExtractedTriple {
            subject: EntityId::new(cols[0]),
            relation: RelationId::new(cols[1]),
            object: EntityId::new(cols[2]),
            confidence,
            sentences: cols[4].split(',').filter(|s| !s.is_empty()).map(str::to_string).collect(),
        });
    }
    Ok(out)
}

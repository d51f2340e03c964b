//! Linking and extraction scores, and the report written at the end of a
//! pipeline run.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{LinkMethod, Sentence};
use crate::datagen::GenerationRound;
use crate::error::{Error, Result};
use crate::kb::{EntityId, RelationId};
use crate::linker::LinkDecision;

/// Gold entity of one mention.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GoldLink {
    pub sentence_id: String,
    pub start: usize,
    pub end: usize,
    pub entity: EntityId,
}

/// Every linked span of `sentences` as a gold link.
pub fn gold_links(sentences: &[Sentence]) -> Vec<GoldLink> {
    sentences
        .iter()
        .flat_map(|s| {
            s.linked_spans().map(move |sp| GoldLink {
                sentence_id: s.id.clone(),
                start: sp.start,
                end: sp.end,
                entity: sp.entity.clone().expect("linked"),
            })
        })
        .collect()
}

/// Rates are `None` when their denominator is zero.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ElMetrics {
    /// Correct sub-graph links over sub-graph links made.
    pub precision_at_1: Option<f64>,
    /// Sub-graph links made over gold spans.
    pub coverage: Option<f64>,
    /// Correct context links over context decisions.
    pub accuracy_at_1: Option<f64>,
    /// Mean 1-based rank of the gold entity in context rankings that
    /// contain it.
    pub mean_rank: Option<f64>,
    pub subgraph_links: usize,
    pub context_links: usize,
    pub gold_spans: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Scores decisions (keyed by sentence id) against gold mentions. A
/// decision on a span that is not a gold mention counts as wrong.
pub fn eval_entity_linker(decisions: &[(String, LinkDecision)], gold: &[GoldLink]) -> ElMetrics {
    let gold_at: HashMap<(&str, usize, usize), &EntityId> =
        gold.iter().map(|g| ((g.sentence_id.as_str(), g.start, g.end), &g.entity)).collect();
    let (mut sub, mut sub_ok, mut ctx, mut ctx_ok) = (0, 0, 0, 0);
    let mut ranks = Vec::new();
    for (sid, d) in decisions {
        let truth = gold_at.get(&(sid.as_str(), d.span.start, d.span.end)).copied();
        let correct = truth == Some(&d.entity);
        match d.method {
            LinkMethod::Subgraph => {
                sub += 1;
                sub_ok += usize::from(correct);
            }
            LinkMethod::Context => {
                ctx += 1;
                ctx_ok += usize::from(correct);
                if let Some(t) = truth {
                    if let Some(p) = d.ranking.iter().position(|(e, _)| e == t) {
                        ranks.push((p + 1) as f64);
                    }
                }
            }
        }
    }
    ElMetrics {
        precision_at_1: ratio(sub_ok, sub),
        coverage: ratio(sub, gold.len()),
        accuracy_at_1: ratio(ctx_ok, ctx),
        mean_rank: (!ranks.is_empty()).then(|| ranks.iter().sum::<f64>() / ranks.len() as f64),
        subgraph_links: sub,
        context_links: ctx,
        gold_spans: gold.len(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReMetrics {
    /// Exact label-set matches over bags (NA matches NA).
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub bags: usize,
}

/// Micro-averaged over (bag, relation) decisions; an empty set is NA and
/// contributes no positives.
pub fn eval_relation_extractor(predicted: &[BTreeSet<RelationId>], gold: &[BTreeSet<RelationId>]) -> Result<ReMetrics> {
    if gold.is_empty() {
        return Err(Error::Empty("gold bags"));
    }
    if predicted.len() != gold.len() {
        return Err(Error::InvalidArgument(format!("{} predictions for {} gold bags", predicted.len(), gold.len())));
    }
    let (mut tp, mut fp, mut fn_, mut exact) = (0, 0, 0, 0);
    for (p, g) in predicted.iter().zip(gold) {
        let hit = p.intersection(g).count();
        tp += hit;
        fp += p.len() - hit;
        fn_ += g.len() - hit;
        exact += usize::from(p == g);
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(ReMetrics {
        accuracy: exact as f64 / gold.len() as f64,
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        bags: gold.len(),
    })
}

/// Fixed-schema summary of one pipeline run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Sub-graph links of the bootstrapped corpus against gold mentions.
    pub entity_linking: Option<ElMetrics>,
    /// Full linker (sub-graph, then context) on the held-out corpus.
    pub heldout_linking: Option<ElMetrics>,
    /// On gold-linked held-out bags, when gold links exist.
    pub relation_extraction: Option<ReMetrics>,
    /// On the distant-supervision test split.
    pub relation_extraction_split: Option<ReMetrics>,
    /// Share of newly extracted triples found in the reference facts.
    pub triple_precision: Option<f64>,
    pub bootstrap_rounds: Vec<GenerationRound>,
    pub counts: BTreeMap<String, usize>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

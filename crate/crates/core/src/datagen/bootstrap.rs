//! Self-training loop producing entity-linked text: a teacher recognizer
//! tags the corpus, sub-graph linking keeps only confidently linked
//! sentences, and a student recognizer is retrained on them.

use serde::{Deserialize, Serialize};

use crate::corpus::{Gazetteer, Sentence};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::linker::{
    apply_decisions, GazetteerRecognizer, Linker, Recognizer, SpanClassifier, SpanClassifierConfig, SubgraphConfig,
};
use crate::par;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub max_rounds: usize,
    /// Sentences need at least this many linked spans to be kept.
    pub min_linked_spans: usize,
    /// Nearest-neighbour candidates per span (0 = dictionary only).
    pub knn_k: usize,
    pub subgraph: SubgraphConfig,
    pub classifier: SpanClassifierConfig,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            max_rounds: 3,
            min_linked_spans: 2,
            knn_k: 10,
            subgraph: SubgraphConfig::default(),
            classifier: SpanClassifierConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRound {
    pub round_index: usize,
    pub extracted_count: usize,
}

/// Builds the recognizer used in the next round from labelled sentences.
/// Round 0 receives the dictionary-tagged corpus.
pub trait StudentTrainer {
    type Model: Recognizer;
    fn train(&mut self, round: usize, labeled: &[Sentence]) -> Result<Self::Model>;
}

/// Trains a fresh [`SpanClassifier`] each round.
pub struct ClassifierTrainer<'a> {
    pub gazetteer: &'a Gazetteer,
    pub config: SpanClassifierConfig,
}

impl StudentTrainer for ClassifierTrainer<'_> {
    type Model = SpanClassifier;
    fn train(&mut self, _round: usize, labeled: &[Sentence]) -> Result<SpanClassifier> {
        let mut clf = SpanClassifier::new(self.config.clone());
        clf.train(labeled, self.gazetteer)?;
        Ok(clf)
    }
}

#[derive(Debug)]
pub struct BootstrapOutput<M> {
    pub corpus: Vec<Sentence>,
    pub rounds: Vec<GenerationRound>,
    /// Index into `rounds` of the returned corpus.
    pub best_round: usize,
    /// Recognizer that produced the returned corpus.
    pub recognizer: M,
}

/// Recognize, sub-graph link and filter one corpus pass.
pub fn extract_round(
    corpus: &[Sentence],
    recognizer: &dyn Recognizer,
    linker: &Linker<'_>,
    min_linked_spans: usize,
) -> Result<Vec<Sentence>> {
    let sub_only = Linker { model: None, ..*linker };
    let linked = par::map(corpus, |s| -> Result<Option<Sentence>> {
        let spans = recognizer.recognize(s, sub_only.gazetteer, sub_only.kb)?;
        let decisions = sub_only.link_spans(s, &spans)?;
        Ok((decisions.len() >= min_linked_spans).then(|| apply_decisions(s, &decisions)))
    });
    let mut out = Vec::new();
    for r in linked {
        if let Some(s) = r? {
            out.push(s);
        }
    }
    Ok(out)
}

/// Runs the loop. Stops after `max_rounds` or as soon as a round extracts
/// fewer sentences than the one before, in which case the previous round's
/// corpus is returned.
pub fn bootstrap_linked_corpus<T: StudentTrainer>(
    raw: &[Sentence],
    kb: &KnowledgeBase,
    gazetteer: &Gazetteer,
    table: Option<&EmbeddingTable>,
    cfg: &BootstrapConfig,
    trainer: &mut T,
) -> Result<BootstrapOutput<T::Model>> {
    if raw.is_empty() {
        return Err(Error::Empty("bootstrap corpus"));
    }
    if cfg.max_rounds == 0 {
        return Err(Error::Config("bootstrap needs at least one round".into()));
    }
    let linker = Linker { kb, gazetteer, table, model: None, k: cfg.knn_k, subgraph: cfg.subgraph };
    let tagged: Vec<Sentence> = par::map(raw, |s| -> Result<Sentence> {
        let mut t = s.clone();
        t.spans = GazetteerRecognizer.recognize(s, gazetteer, kb)?;
        Ok(t)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut teacher = trainer
        .train(0, &tagged)
        .map_err(|e| Error::Bootstrap { round: 0, msg: e.to_string() })?;

    let mut rounds: Vec<GenerationRound> = Vec::new();
    let mut best: Option<(usize, Vec<Sentence>, T::Model)> = None;
    for round in 1..=cfg.max_rounds {
        let kept = extract_round(raw, &teacher, &linker, cfg.min_linked_spans)
            .map_err(|e| Error::Bootstrap { round, msg: e.to_string() })?;
        let count = kept.len();
        log::info!("bootstrap round {round}: {count} sentences kept");
        if let Some(prev) = rounds.last() {
            if count < prev.extracted_count {
                rounds.push(GenerationRound { round_index: round, extracted_count: count });
                break;
            }
        }
        rounds.push(GenerationRound { round_index: round, extracted_count: count });
        let student = if round < cfg.max_rounds && !kept.is_empty() {
            Some(trainer.train(round, &kept).map_err(|e| Error::Bootstrap { round, msg: e.to_string() })?)
        } else {
            None
        };
        best = Some((rounds.len() - 1, kept, teacher));
        match student {
            Some(s) => teacher = s,
            None => break,
        }
    }
    let (best_round, corpus, recognizer) =
        best.ok_or(Error::Bootstrap { round: 1, msg: "no round completed".into() })?;
    Ok(BootstrapOutput { corpus, rounds, best_round, recognizer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{fallback_parse, Span};
    use crate::kb::{Entity, KbOptions, Triple};

    /// Dictionary tagging restricted to the first `limit` sentences.
    struct Planted {
        limit: usize,
    }

    impl Recognizer for Planted {
        fn recognize(&self, s: &Sentence, g: &Gazetteer, kb: &KnowledgeBase) -> Result<Vec<Span>> {
            let idx: usize = s.id[1..].parse().unwrap();
            if idx < self.limit {
                GazetteerRecognizer.recognize(s, g, kb)
            } else {
                Ok(Vec::new())
            }
        }
    }

    struct PlantedTrainer {
        limits: Vec<usize>,
        calls: Vec<usize>,
    }

    impl StudentTrainer for PlantedTrainer {
        type Model = Planted;
        fn train(&mut self, round: usize, _: &[Sentence]) -> Result<Planted> {
            self.calls.push(round);
            Ok(Planted { limit: self.limits[round] })
        }
    }

    fn fixture() -> (KnowledgeBase, Gazetteer, Vec<Sentence>) {
        let kb = KnowledgeBase::from_parts(
            vec![Entity::new("A", "T", "alpha"), Entity::new("B", "T", "beta"), Entity::new("C", "T", "gamma")],
            vec![Triple::new("A", "r", "B")],
            KbOptions::default(),
        )
        .unwrap();
        let g = Gazetteer::from_kb(&kb, false);
        let mut corpus: Vec<Sentence> = (0..10).map(|i| fallback_parse(&format!("s{i}"), "alpha met beta").unwrap()).collect();
        corpus.push(fallback_parse("s10", "alpha met gamma").unwrap());
        (kb, g, corpus)
    }

    fn run(limits: Vec<usize>) -> (BootstrapOutput<Planted>, Vec<usize>) {
        let (kb, g, corpus) = fixture();
        let mut t = PlantedTrainer { limits, calls: vec![] };
        let cfg = BootstrapConfig { knn_k: 0, ..Default::default() };
        let out = bootstrap_linked_corpus(&corpus, &kb, &g, None, &cfg, &mut t).unwrap();
        (out, t.calls)
    }

    #[test]
    fn rise_then_fall_returns_previous_round() {
        let (out, calls) = run(vec![4, 7, 5]);
        let counts: Vec<usize> = out.rounds.iter().map(|r| r.extracted_count).collect();
        assert_eq!(counts, vec![4, 7, 5]);
        assert_eq!(out.best_round, 1);
        assert_eq!(out.corpus.len(), 7);
        assert_eq!(calls, vec![0, 1, 2]);
    }

    #[test]
    fn increasing_counts_run_three_rounds() {
        let (out, calls) = run(vec![2, 5, 8, 100]);
        assert_eq!(out.rounds.len(), 3);
        assert_eq!(out.best_round, 2);
        assert_eq!(out.corpus.len(), 8);
        assert_eq!(calls, vec![0, 1, 2]);
        for s in &out.corpus {
            assert!(s.spans.len() >= 2 && s.spans.iter().all(|sp| sp.entity.is_some()));
        }
    }

    #[test]
    fn unlinkable_sentences_are_filtered() {
        // sentence s10 pairs alpha with an unconnected entity
        let (out, _) = run(vec![11, 11, 11]);
        assert_eq!(out.corpus.len(), 10);
        assert!(out.corpus.iter().all(|s| s.id != "s10"));
        let (kb, g, _) = fixture();
        let mut t = PlantedTrainer { limits: vec![1], calls: vec![] };
        assert!(bootstrap_linked_corpus(&[], &kb, &g, None, &BootstrapConfig::default(), &mut t).is_err());
    }
}

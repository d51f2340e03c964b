//! Mention recognition, candidate generation and two-step disambiguation:
//! KB sub-graph counting first, neural context ranking for what remains.

mod candidates;
mod context;
mod recognizer;
mod subgraph;

use crate::corpus::{Gazetteer, LinkMethod, Sentence, Span};
use crate::embeddings::EmbeddingTable;
use crate::error::Result;
use crate::kb::{EntityId, KnowledgeBase};

pub use candidates::{generate_candidates, Candidate, CandidateSource};
pub use context::{hinge_loss, ContextItem, ContextLinker, ContextLinkerConfig};
pub use recognizer::{span_f1, span_type, GazetteerRecognizer, Recognizer, SpanClassifier, SpanClassifierConfig};
pub use subgraph::{subgraph_counts, subgraph_link, SubgraphConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct LinkDecision {
    pub span: Span,
    pub entity: EntityId,
    pub method: LinkMethod,
    /// Connection count for sub-graph links, scorer output for context links.
    pub score: f64,
    /// Every candidate with its score, best first.
    pub ranking: Vec<(EntityId, f64)>,
}

/// Everything [`link`] needs besides the sentence.
#[derive(Clone, Copy)]
pub struct Linker<'a> {
    pub kb: &'a KnowledgeBase,
    pub gazetteer: &'a Gazetteer,
    pub table: Option<&'a EmbeddingTable>,
    pub model: Option<&'a ContextLinker>,
    pub k: usize,
    pub subgraph: SubgraphConfig,
}

impl Linker<'_> {
    pub fn candidates(&self, spans: &[Span]) -> Result<Vec<Candidate>> {
        let mut out = Vec::with_capacity(spans.len());
        for s in spans {
            if let Some(c) = generate_candidates(s, self.gazetteer, self.table, self.k)? {
                out.push(c);
            }
        }
        Ok(out)
    }

    /// Sub-graph step, then context ranking for spans it left open. Without
    /// a context model only sub-graph decisions are returned.
    pub fn link_spans(&self, sentence: &Sentence, spans: &[Span]) -> Result<Vec<LinkDecision>> {
        let cands = self.candidates(spans)?;
        let first = subgraph_link(&cands, self.kb, self.subgraph);
        let mut out = Vec::with_capacity(cands.len());
        for (c, d) in cands.iter().zip(first) {
            match (d, self.model, self.table) {
                (Some(d), _, _) => out.push(d),
                (None, Some(model), Some(table)) => {
                    let ranking = model.rank(table, sentence, c)?;
                    let (entity, score) = ranking[0].clone();
                    out.push(LinkDecision { span: c.span.clone(), entity, method: LinkMethod::Context, score, ranking });
                }
                (None, _, _) => {}
            }
        }
        Ok(out)
    }
}

/// Recognize, generate candidates and disambiguate the spans of one sentence.
pub fn link(sentence: &Sentence, linker: &Linker<'_>, recognizer: &dyn Recognizer) -> Result<Vec<LinkDecision>> {
    let spans = recognizer.recognize(sentence, linker.gazetteer, linker.kb)?;
    linker.link_spans(sentence, &spans)
}

/// Copy of `sentence` whose spans are exactly the decisions, linked.
pub fn apply_decisions(sentence: &Sentence, decisions: &[LinkDecision]) -> Sentence {
    let mut out = sentence.clone();
    out.spans = decisions
        .iter()
        .map(|d| {
            let mut s = d.span.clone();
            s.entity = Some(d.entity.clone());
            s.method = Some(d.method);
            s
        })
        .collect();
    out.spans.sort_by_key(|s| s.start);
    out
}

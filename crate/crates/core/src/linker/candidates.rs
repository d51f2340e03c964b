use serde::{Deserialize, Serialize};

use crate::corpus::{Gazetteer, Span};
use crate::embeddings::{knn_candidates, EmbeddingTable};
use crate::error::Result;
use crate::kb::EntityId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateSource {
    Dictionary,
    Knn,
    Both,
}

/// Entities a span may refer to: dictionary hits first (by id), then
/// nearest neighbours by distance.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub span: Span,
    pub entities: Vec<EntityId>,
    pub source: CandidateSource,
}

/// `None` when neither the alias dictionary nor the embedding table
/// proposes anything. `k = 0` disables the nearest-neighbour half.
pub fn generate_candidates(
    span: &Span,
    gazetteer: &Gazetteer,
    table: Option<&EmbeddingTable>,
    k: usize,
) -> Result<Option<Candidate>> {
    let mut entities: Vec<EntityId> = gazetteer.lookup(&span.surface).map(|s| s.iter().cloned().collect()).unwrap_or_default();
    let n_dict = entities.len();
    let mut knn_added = 0;
    if let (Some(t), true) = (table, k > 0) {
        for (e, _) in knn_candidates(t, &span.surface, k)? {
            if !entities[..n_dict].contains(&e) {
                entities.push(e);
            }
            knn_added += 1;
        }
    }
    let source = match (n_dict > 0, knn_added > 0) {
        (false, false) => return Ok(None),
        (true, false) => CandidateSource::Dictionary,
        (false, true) => CandidateSource::Knn,
        (true, true) => CandidateSource::Both,
    };
    Ok(Some(Candidate { span: span.clone(), entities, source }))
}

//! Disambiguation by counting KB connections between candidates of
//! different spans.

use serde::{Deserialize, Serialize};

use super::{Candidate, LinkDecision};
use crate::corpus::LinkMethod;
use crate::kb::KnowledgeBase;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubgraphConfig {
    /// Count a pair only when a triple runs from the earlier span's
    /// candidate to the later span's candidate.
    pub directed_connections: bool,
    /// Count every parallel triple instead of one per connected pair.
    pub count_multiplicity: bool,
}

fn weight(kb: &KnowledgeBase, cfg: SubgraphConfig, a: usize, b: usize) -> usize {
    match (cfg.directed_connections, cfg.count_multiplicity) {
        (false, false) => usize::from(kb.connected_idx(a, b)),
        (false, true) => kb.connection_multiplicity_idx(a, b),
        (true, false) => usize::from(kb.connected_directed_idx(a, b)),
        (true, true) => kb.directed_multiplicity_idx(a, b),
    }
}

/// Connection counts per candidate, aligned with `candidates[i].entities`.
/// Candidates missing from the KB count zero.
pub fn subgraph_counts(candidates: &[Candidate], kb: &KnowledgeBase, cfg: SubgraphConfig) -> Vec<Vec<usize>> {
    let idx: Vec<Vec<Option<usize>>> =
        candidates.iter().map(|c| c.entities.iter().map(|e| kb.idx(e).ok()).collect()).collect();
    let mut counts: Vec<Vec<usize>> = candidates.iter().map(|c| vec![0; c.entities.len()]).collect();
    for i in 0..idx.len() {
        for j in i + 1..idx.len() {
            for (a, ea) in idx[i].iter().enumerate() {
                let Some(ea) = *ea else { continue };
                for (b, eb) in idx[j].iter().enumerate() {
                    let Some(eb) = *eb else { continue };
                    let w = weight(kb, cfg, ea, eb);
                    counts[i][a] += w;
                    counts[j][b] += w;
                }
            }
        }
    }
    counts
}

/// Links each span whose best candidate has a strictly unique, positive
/// count; other spans map to `None`.
pub fn subgraph_link(candidates: &[Candidate], kb: &KnowledgeBase, cfg: SubgraphConfig) -> Vec<Option<LinkDecision>> {
    let counts = subgraph_counts(candidates, kb, cfg);
    candidates
        .iter()
        .zip(&counts)
        .map(|(c, cs)| {
            let max = cs.iter().copied().max().unwrap_or(0);
            if max == 0 || cs.iter().filter(|&&x| x == max).count() != 1 {
                return None;
            }
            let best = cs.iter().position(|&x| x == max).expect("max is present");
            let mut ranking: Vec<_> = c.entities.iter().cloned().zip(cs.iter().map(|&x| x as f64)).collect();
            ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            Some(LinkDecision {
                span: c.span.clone(),
                entity: c.entities[best].clone(),
                method: LinkMethod::Subgraph,
                score: max as f64,
                ranking,
            })
        })
        .collect()
}

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Sentence, Span};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Which token of a multi-token span anchors the dependency path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anchor {
    First,
    #[default]
    Last,
}

impl Anchor {
    pub fn of(self, span: &Span) -> usize {
        match self {
            Anchor::First => span.start,
            Anchor::Last => span.end,
        }
    }
}

fn ancestors(sentence: &Sentence, from: usize) -> Vec<usize> {
    let mut chain = vec![from];
    let mut cur = from;
    while let Some(h) = sentence.tokens[cur].head {
        chain.push(h);
        cur = h;
    }
    chain
}

/// Unique tree path between the anchor tokens of `a` and `b`, inclusive.
pub fn shortest_dependency_path(sentence: &Sentence, a: &Span, b: &Span, anchor: Anchor) -> Result<Vec<usize>> {
    if a.overlaps(b) {
        return Err(Error::Sentence {
            id: sentence.id.clone(),
            msg: format!("spans [{}, {}] and [{}, {}] overlap", a.start, a.end, b.start, b.end),
        });
    }
    let up_a = ancestors(sentence, anchor.of(a));
    let up_b = ancestors(sentence, anchor.of(b));
    let pos_a: HashMap<usize, usize> = up_a.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let (k_b, ia) = up_b
        .iter()
        .enumerate()
        .find_map(|(k, t)| pos_a.get(t).map(|&i| (k, i)))
        .ok_or_else(|| Error::Sentence { id: sentence.id.clone(), msg: "tokens not in one tree".into() })?;
    let mut path: Vec<usize> = up_a[..=ia].to_vec();
    path.extend(up_b[..k_b].iter().rev());
    Ok(path)
}

/// Path tokens, plus the tokens of both spans when `include_internal`.
pub fn sdp_nodes(sentence: &Sentence, a: &Span, b: &Span, anchor: Anchor, include_internal: bool) -> Result<Vec<usize>> {
    let mut nodes = shortest_dependency_path(sentence, a, b, anchor)?;
    if include_internal {
        for t in (a.start..=a.end).chain(b.start..=b.end) {
            if !nodes.contains(&t) {
                nodes.push(t);
            }
        }
    }
    Ok(nodes)
}

/// `D^{-1/2} (A + I) D^{-1/2}` where `A` keeps only dependency edges whose
/// endpoints both lie in `nodes`.
pub fn sdp_adjacency(sentence: &Sentence, nodes: &[usize]) -> Tensor {
    let n = sentence.len();
    let mut on = vec![false; n];
    for &t in nodes {
        if t < n {
            on[t] = true;
        }
    }
    let mut a = Tensor::identity(n);
    for t in &sentence.tokens {
        if let Some(h) = t.head {
            if on[t.index] && on[h] {
                a.set(t.index, h, 1.0);
                a.set(h, t.index, 1.0);
            }
        }
    }
    let degree: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum::<f64>()).collect();
    for i in 0..n {
        for j in 0..n {
            let v = a.at(i, j);
            if v != 0.0 {
                a.set(i, j, v / (degree[i] * degree[j]).sqrt());
            }
        }
    }
    a
}

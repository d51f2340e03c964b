//! Per-token features of a (subject, object) instance and the vocabularies
//! they index into.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{sdp_adjacency, sdp_nodes, Anchor, Sentence, Span, UNKNOWN_POS};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kb::{KnowledgeBase, RelationId, UNTYPED};
use crate::nn::Tensor;

/// Entity-type label of tokens outside every linked span.
pub const OUTSIDE: &str = "O";

/// Index maps for relations, entity types and POS tags. Unknown types map
/// to [`UNTYPED`], unknown tags to [`UNKNOWN_POS`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub relations: Vec<RelationId>,
    pub types: Vec<String>,
    pub tags: Vec<String>,
}

impl Vocab {
    pub fn build(kb: &KnowledgeBase, corpus: &[Sentence]) -> Self {
        let mut types: BTreeSet<String> = kb.entities().iter().map(|e| e.entity_type.clone()).collect();
        types.remove(OUTSIDE);
        types.remove(UNTYPED);
        let mut tags: BTreeSet<String> = corpus.iter().flat_map(|s| s.tokens.iter().map(|t| t.pos_tag.clone())).collect();
        tags.remove(UNKNOWN_POS);
        Vocab {
            relations: kb.relations().iter().cloned().collect(),
            types: [OUTSIDE.to_string(), UNTYPED.to_string()].into_iter().chain(types).collect(),
            tags: std::iter::once(UNKNOWN_POS.to_string()).chain(tags).collect(),
        }
    }

    pub fn type_index(&self, t: &str) -> usize {
        self.types.iter().position(|x| x == t).unwrap_or(1)
    }

    pub fn tag_index(&self, t: &str) -> usize {
        self.tags.iter().position(|x| x == t).unwrap_or(0)
    }

    pub fn relation_index(&self) -> BTreeMap<&RelationId, usize> {
        self.relations.iter().enumerate().map(|(i, r)| (r, i)).collect()
    }
}

/// Signed distance of token `i` to `span`: 0 inside, negative before the
/// start, positive after the end.
pub fn relative_position(i: usize, span: &Span) -> i64 {
    if i < span.start {
        i as i64 - span.start as i64
    } else if i > span.end {
        (i - span.end) as i64
    } else {
        0
    }
}

/// Smallest absolute distance from each token to any of `others`; `None`
/// when there are no other entities.
pub fn other_entity_distances(n: usize, others: &[&Span]) -> Vec<Option<usize>> {
    (0..n)
        .map(|i| others.iter().map(|s| relative_position(i, s).unsigned_abs() as usize).min())
        .collect()
}

/// Encoded (sentence, subject span, object span) instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub sentence_id: String,
    /// Frozen word vectors, `word_dim × n`.
    pub words: Tensor,
    pub pos1: Vec<usize>,
    pub pos2: Vec<usize>,
    pub pos3: Vec<usize>,
    pub types: Vec<usize>,
    pub tags: Vec<usize>,
    pub subject: (usize, usize),
    pub object: (usize, usize),
    /// Normalised adjacency of the dependency path between the entities.
    pub adjacency: Tensor,
}

impl Instance {
    pub fn len(&self) -> usize {
        self.pos1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos1.is_empty()
    }
}

/// Bucket of a clipped signed distance in `[-max, max]`.
pub fn position_bucket(d: i64, max: usize) -> usize {
    (d.clamp(-(max as i64), max as i64) + max as i64) as usize
}

/// Bucket of an other-entity distance: 0 is the "no other entity" bucket.
pub fn other_bucket(d: Option<usize>, max: usize) -> usize {
    d.map_or(0, |d| 1 + d.min(max))
}

fn span_type_of(span: &Span, kb: &KnowledgeBase) -> String {
    if let Some(e) = &span.entity {
        if let Ok(t) = kb.entity_type(e) {
            return t.to_string();
        }
    }
    span.span_type.clone().unwrap_or_else(|| UNTYPED.to_string())
}

pub fn encode_tokens(
    sentence: &Sentence,
    subject: &Span,
    object: &Span,
    table: &EmbeddingTable,
    kb: &KnowledgeBase,
    vocab: &Vocab,
    max_position: usize,
) -> Result<Instance> {
    if subject.overlaps(object) {
        return Err(Error::Sentence {
            id: sentence.id.clone(),
            msg: format!("subject [{}, {}] overlaps object [{}, {}]", subject.start, subject.end, object.start, object.end),
        });
    }
    let n = sentence.len();
    if subject.end >= n || object.end >= n {
        return Err(Error::Sentence { id: sentence.id.clone(), msg: "entity span out of range".into() });
    }
    let others: Vec<&Span> = sentence
        .linked_spans()
        .filter(|s| !s.overlaps(subject) && !s.overlaps(object))
        .collect();
    let dist3 = other_entity_distances(n, &others);
    let mut types = vec![vocab.type_index(OUTSIDE); n];
    for s in others.iter().copied().chain([subject, object]) {
        let t = vocab.type_index(&span_type_of(s, kb));
        for slot in &mut types[s.start..=s.end] {
            *slot = t;
        }
    }
    let words: Vec<Vec<f64>> = sentence
        .tokens
        .iter()
        .map(|t| table.word(&t.surface).map_or_else(|| vec![0.0; table.dim()], <[f64]>::to_vec))
        .collect();
    let nodes = sdp_nodes(sentence, subject, object, Anchor::Last, true)?;
    Ok(Instance {
        sentence_id: sentence.id.clone(),
        words: Tensor::from_columns(&words),
        pos1: (0..n).map(|i| position_bucket(relative_position(i, subject), max_position)).collect(),
        pos2: (0..n).map(|i| position_bucket(relative_position(i, object), max_position)).collect(),
        pos3: dist3.into_iter().map(|d| other_bucket(d, max_position)).collect(),
        types,
        tags: sentence.tokens.iter().map(|t| vocab.tag_index(&t.pos_tag)).collect(),
        subject: (subject.start, subject.end),
        object: (object.start, object.end),
        adjacency: sdp_adjacency(sentence, &nodes),
    })
}

/// First span linked to `entity`.
pub fn find_entity_span<'a>(sentence: &'a Sentence, entity: &crate::kb::EntityId) -> Option<&'a Span> {
    sentence.spans.iter().find(|s| s.entity.as_ref() == Some(entity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fallback_parse;
    use crate::kb::{Entity, EntityId, KbOptions};

    fn setup() -> (Sentence, KnowledgeBase, EmbeddingTable) {
        let kb = KnowledgeBase::from_parts(
            vec![Entity::new("A", "Person", "a"), Entity::new("B", "Org", "b"), Entity::new("C", "City", "c")],
            vec![],
            KbOptions::default(),
        )
        .unwrap();
        let mut s = fallback_parse("s", "x a y b z c w").unwrap();
        for (at, e) in [(1, "A"), (3, "B")] {
            let mut sp = s.span(at, at);
            sp.entity = Some(EntityId::new(e));
            s.spans.push(sp);
        }
        (s, kb, EmbeddingTable::new(2))
    }

    #[test]
    fn positions_and_missing_others() {
        let (s, kb, t) = setup();
        let vocab = Vocab::build(&kb, std::slice::from_ref(&s));
        let inst = encode_tokens(&s, &s.spans[0], &s.spans[1], &t, &kb, &vocab, 5).unwrap();
        // subject at 1: token 0 is -1, token 2 is +1
        assert_eq!(inst.pos1[0], position_bucket(-1, 5));
        assert_eq!(inst.pos1[2], position_bucket(1, 5));
        assert_eq!(inst.pos1[1], position_bucket(0, 5));
        assert!(inst.pos3.iter().all(|&b| b == 0));
        assert_eq!(inst.types[1], vocab.type_index("Person"));
        assert_eq!(inst.types[0], vocab.type_index(OUTSIDE));
        assert_eq!(inst.words.shape(), &[2, 7]);
        assert!(encode_tokens(&s, &s.spans[0], &s.spans[0], &t, &kb, &vocab, 5).is_err());
    }

    #[test]
    fn third_position_is_min_distance() {
        let (mut s, kb, t) = setup();
        let mut sp = s.span(5, 5);
        sp.entity = Some(EntityId::new("C"));
        s.spans.push(sp);
        let vocab = Vocab::build(&kb, &[s.clone()]);
        let inst = encode_tokens(&s, &s.spans[0], &s.spans[1], &t, &kb, &vocab, 5).unwrap();
        assert_eq!(inst.pos3[3], other_bucket(Some(2), 5));
        assert_eq!(inst.pos3[5], other_bucket(Some(0), 5));
        assert_eq!(inst.types[5], vocab.type_index("City"));
        let dist = other_entity_distances(7, &[&s.span(5, 5)]);
        assert_eq!(dist[3], Some(2));
        assert_eq!(position_bucket(-100, 5), 0);
        assert_eq!(position_bucket(100, 5), 10);
    }
}

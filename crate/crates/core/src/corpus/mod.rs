//! Tokenised, tagged and dependency-parsed sentences.

mod deptree;
mod gazetteer;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::EntityId;

pub use deptree::{sdp_adjacency, sdp_nodes, shortest_dependency_path, Anchor};
pub use gazetteer::{longest_ngram_match, Gazetteer, NgramMatch};

pub const UNKNOWN_POS: &str = "UNK";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub index: usize,
    pub surface: String,
    pub pos_tag: String,
    /// `None` for the root.
    pub head: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkMethod {
    Subgraph,
    Context,
}

/// Inclusive token range naming a (possibly linked) entity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub span_type: Option<String>,
    pub entity: Option<EntityId>,
    pub method: Option<LinkMethod>,
}

impl Span {
    pub fn new(sentence_tokens: &[Token], start: usize, end: usize) -> Self {
        Span {
            start,
            end,
            surface: join_surface(sentence_tokens, start, end),
            span_type: None,
            entity: None,
            method: None,
        }
    }

    pub fn token_count(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn contains(&self, token: usize) -> bool {
        (self.start..=self.end).contains(&token)
    }
}

pub(crate) fn join_surface(tokens: &[Token], start: usize, end: usize) -> String {
    tokens[start..=end].iter().map(|t| t.surface.as_str()).collect::<Vec<_>>().join(" ")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<Token>,
    pub spans: Vec<Span>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    pub fn span(&self, start: usize, end: usize) -> Span {
        Span::new(&self.tokens, start, end)
    }

    pub fn linked_spans(&self) -> impl Iterator<Item = &Span> {
        self.spans.iter().filter(|s| s.entity.is_some())
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Sentence { id: self.id.clone(), msg: msg.into() }
    }

    /// Checks token, tree and span invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(self.err("no tokens"));
        }
        let mut roots = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            if t.index != i {
                return Err(self.err(format!("token {i} carries index {}", t.index)));
            }
            if t.surface.is_empty() || t.surface.contains(char::is_whitespace) {
                return Err(self.err(format!("token {i} is empty or contains whitespace")));
            }
            match t.head {
                None => roots += 1,
                Some(h) if h >= n => return Err(self.err(format!("head {h} of token {i} out of range"))),
                Some(h) if h == i => return Err(self.err(format!("token {i} heads itself"))),
                Some(_) => {}
            }
        }
        if roots != 1 {
            return Err(self.err(format!("expected exactly one root, found {roots}")));
        }
        for i in 0..n {
            let mut cur = i;
            let mut steps = 0;
            while let Some(h) = self.tokens[cur].head {
                cur = h;
                steps += 1;
                if steps > n {
                    return Err(self.err(format!("dependency cycle through token {i}")));
                }
            }
        }
        for (k, s) in self.spans.iter().enumerate() {
            if s.start > s.end || s.end >= n {
                return Err(self.err(format!("span [{}, {}] out of range", s.start, s.end)));
            }
            if self.spans[..k].iter().any(|o| o.overlaps(s)) {
                return Err(self.err(format!("span [{}, {}] overlaps another span", s.start, s.end)));
            }
        }
        Ok(())
    }
}

/// Whitespace tokenisation with a left-headed chain: token 0 is the root and
/// token `i` heads token `i + 1`.
pub fn fallback_parse(id: &str, raw: &str) -> Result<Sentence> {
    let words: Vec<&str> = raw.split_whitespace().collect();
    if words.is_empty() {
        return Err(Error::Sentence { id: id.to_string(), msg: "empty text".into() });
    }
    let tokens = words
        .iter()
        .enumerate()
        .map(|(i, w)| Token {
            index: i,
            surface: w.to_string(),
            pos_tag: UNKNOWN_POS.to_string(),
            head: i.checked_sub(1),
        })
        .collect();
    Ok(Sentence { id: id.to_string(), tokens, spans: Vec::new() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SpanRecord {
    start: usize,
    end: usize,
    #[serde(rename = "type", default)]
    span_type: Option<String>,
    #[serde(default)]
    entity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    method: Option<LinkMethod>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SentenceRecord {
    id: String,
    tokens: Vec<String>,
    #[serde(default)]
    pos: Option<Vec<String>>,
    #[serde(default)]
    heads: Option<Vec<i64>>,
    #[serde(default)]
    spans: Option<Vec<SpanRecord>>,
}

impl SentenceRecord {
    fn into_sentence(self) -> Result<Sentence> {
        let id = self.id;
        let err = |msg: String| Error::Sentence { id: id.clone(), msg };
        let n = self.tokens.len();
        if n == 0 {
            return Err(err("no tokens".into()));
        }
        let pos = self.pos.unwrap_or_else(|| vec![UNKNOWN_POS.to_string(); n]);
        if pos.len() != n {
            return Err(err(format!("{} POS tags for {n} tokens", pos.len())));
        }
        let heads: Vec<Option<usize>> = match self.heads {
            Some(h) => {
                if h.len() != n {
                    return Err(err(format!("{} heads for {n} tokens", h.len())));
                }
                h.into_iter()
                    .map(|x| match x {
                        -1 => Ok(None),
                        x if x >= 0 && (x as usize) < n => Ok(Some(x as usize)),
                        x => Err(err(format!("head index {x} out of range"))),
                    })
                    .collect::<Result<_>>()?
            }
            None => (0..n).map(|i| i.checked_sub(1)).collect(),
        };
        let tokens: Vec<Token> = self
            .tokens
            .into_iter()
            .zip(pos)
            .zip(heads)
            .enumerate()
            .map(|(i, ((surface, pos_tag), head))| Token { index: i, surface, pos_tag, head })
            .collect();
        let mut spans = Vec::new();
        for s in self.spans.unwrap_or_default() {
            if s.start > s.end || s.end >= n {
                return Err(err(format!("span [{}, {}] out of range", s.start, s.end)));
            }
            spans.push(Span {
                start: s.start,
                end: s.end,
                surface: join_surface(&tokens, s.start, s.end),
                span_type: s.span_type,
                entity: s.entity.map(EntityId),
                method: s.method,
            });
        }
        let sent = Sentence { id, tokens, spans };
        sent.validate()?;
        Ok(sent)
    }

    fn from_sentence(s: &Sentence) -> Self {
        SentenceRecord {
            id: s.id.clone(),
            tokens: s.tokens.iter().map(|t| t.surface.clone()).collect(),
            pos: Some(s.tokens.iter().map(|t| t.pos_tag.clone()).collect()),
            heads: Some(s.tokens.iter().map(|t| t.head.map_or(-1, |h| h as i64)).collect()),
            spans: Some(
                s.spans
                    .iter()
                    .map(|sp| SpanRecord {
                        start: sp.start,
                        end: sp.end,
                        span_type: sp.span_type.clone(),
                        entity: sp.entity.as_ref().map(|e| e.0.clone()),
                        method: sp.method,
                    })
                    .collect(),
            ),
        }
    }
}

pub fn parse_sentence_json(line: &str) -> Result<Sentence> {
    let rec: SentenceRecord = serde_json::from_str(line)?;
    rec.into_sentence()
}

pub fn sentence_to_json(s: &Sentence) -> String {
    serde_json::to_string(&SentenceRecord::from_sentence(s)).expect("sentence record serialises")
}

/// Reads a corpus JSONL file, validating every sentence.
pub fn ingest_corpus(path: &Path) -> Result<Vec<Sentence>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SentenceRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            file: path.display().to_string(),
            line: n + 1,
            msg: e.to_string(),
        })?;
        out.push(rec.into_sentence()?);
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, sentences: &[Sentence]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for s in sentences {
        writeln!(w, "{}", sentence_to_json(s)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_minimal_line() {
        let s = parse_sentence_json(r#"{"id":"s1","tokens":["a","b","c"],"heads":[-1,0,0]}"#).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.tokens[2].head, Some(0));
        assert_eq!(s.tokens[1].pos_tag, UNKNOWN_POS);
        let s = parse_sentence_json(r#"{"id":"s2","tokens":["a","b"]}"#).unwrap();
        assert_eq!(s.tokens[1].head, Some(0));
    }

    #[test]
    fn rejects_bad_trees() {
        let e = parse_sentence_json(r#"{"id":"cyc","tokens":["a","b","c"],"heads":[1,0,1]}"#).unwrap_err();
        assert!(matches!(e, Error::Sentence { ref id, .. } if id == "cyc"), "{e}");
        assert!(parse_sentence_json(r#"{"id":"x","tokens":["a","b"],"heads":[-1,5]}"#).is_err());
        assert!(parse_sentence_json(r#"{"id":"x","tokens":["a","b"],"heads":[-1,-1]}"#).is_err());
        assert!(parse_sentence_json(r#"{"id":"x","tokens":["a","b"],"spans":[{"start":0,"end":1},{"start":1,"end":1}]}"#).is_err());
        assert!(parse_sentence_json(r#"{"id":"x","tokens":[]}"#).is_err());
    }

    #[test]
    fn fallback_chain() {
        let s = fallback_parse("r", "a b c").unwrap();
        let heads: Vec<Option<usize>> = s.tokens.iter().map(|t| t.head).collect();
        assert_eq!(heads, vec![None, Some(0), Some(1)]);
        assert_eq!(fallback_parse("r", "hello").unwrap().tokens[0].head, None);
        assert!(fallback_parse("r", "  \t ").is_err());
    }

    proptest! {
        #[test]
        fn fallback_output_is_valid(raw in "[a-z ]{0,40}") {
            match fallback_parse("p", &raw) {
                Ok(s) => prop_assert!(s.validate().is_ok()),
                Err(_) => prop_assert!(raw.trim().is_empty()),
            }
        }

        #[test]
        fn jsonl_round_trip(words in proptest::collection::vec("[a-z]{1,6}", 1..12), seed in 0usize..1000) {
            let n = words.len();
            let mut s = fallback_parse("rt", &words.join(" ")).unwrap();
            // random tree: each token i > 0 attaches to some earlier token
            for i in 1..n {
                s.tokens[i].head = Some((seed * 31 + i * 7) % i);
            }
            if n >= 2 {
                let mut sp = s.span(0, 0);
                sp.entity = Some(EntityId::new("E1"));
                sp.span_type = Some("T".into());
                sp.method = Some(LinkMethod::Context);
                s.spans.push(sp);
                s.spans.push(s.span(n - 1, n - 1));
            }
            let back = parse_sentence_json(&sentence_to_json(&s)).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}

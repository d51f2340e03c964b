//! Entity-name span recognizers: a dictionary matcher and a trainable
//! logistic span classifier over hashed features.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{longest_ngram_match, Gazetteer, Sentence, Span};
use crate::error::{Error, Result};
use crate::kb::{KnowledgeBase, UNTYPED};
use crate::nn::ops::sigmoid;
use crate::nn::{Checkpoint, ParamStore, Tensor};
use crate::par;

pub trait Recognizer: Sync {
    /// Non-overlapping typed spans in token order.
    fn recognize(&self, sentence: &Sentence, gazetteer: &Gazetteer, kb: &KnowledgeBase) -> Result<Vec<Span>>;
}

/// KB type shared by every entity owning `surface`, else [`UNTYPED`].
pub fn span_type(surface: &str, gazetteer: &Gazetteer, kb: &KnowledgeBase) -> String {
    let Some(ids) = gazetteer.lookup(surface) else {
        return UNTYPED.to_string();
    };
    let types: BTreeSet<&str> = ids.iter().filter_map(|id| kb.entity_type(id).ok()).collect();
    match types.len() {
        1 => types.into_iter().next().unwrap_or(UNTYPED).to_string(),
        _ => UNTYPED.to_string(),
    }
}

fn typed(sentence: &Sentence, start: usize, end: usize, gazetteer: &Gazetteer, kb: &KnowledgeBase) -> Span {
    let mut s = sentence.span(start, end);
    s.span_type = Some(span_type(&s.surface, gazetteer, kb));
    s
}

/// Longest-match dictionary tagging.
#[derive(Clone, Copy, Debug, Default)]
pub struct GazetteerRecognizer;

impl Recognizer for GazetteerRecognizer {
    fn recognize(&self, sentence: &Sentence, gazetteer: &Gazetteer, kb: &KnowledgeBase) -> Result<Vec<Span>> {
        Ok(longest_ngram_match(sentence, gazetteer)
            .into_iter()
            .map(|m| typed(sentence, m.start, m.end, gazetteer, kb))
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpanClassifierConfig {
    /// log2 of the hashed feature space size.
    pub hash_bits: u32,
    pub max_span_len: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for SpanClassifierConfig {
    fn default() -> Self {
        SpanClassifierConfig { hash_bits: 16, max_span_len: 4, epochs: 6, learning_rate: 0.2, l2: 1e-6, seed: 7 }
    }
}

/// Binary logistic model deciding whether a token range names an entity.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanClassifier {
    cfg: SpanClassifierConfig,
    weights: Option<Vec<f64>>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn shape(word: &str) -> char {
    match word.chars().next() {
        Some(c) if c.is_uppercase() => 'X',
        Some(c) if c.is_numeric() => 'd',
        Some(c) if c.is_alphabetic() => 'x',
        _ => '.',
    }
}

impl SpanClassifier {
    pub fn new(cfg: SpanClassifierConfig) -> Self {
        SpanClassifier { cfg, weights: None }
    }

    pub fn config(&self) -> &SpanClassifierConfig {
        &self.cfg
    }

    pub fn is_trained(&self) -> bool {
        self.weights.is_some()
    }

    fn features(&self, words: &[&str], start: usize, end: usize, gazetteer: &Gazetteer) -> Vec<usize> {
        let mask = (1usize << self.cfg.hash_bits) - 1;
        let at = |i: isize| -> &str {
            if i < 0 {
                "<s>"
            } else {
                words.get(i as usize).copied().unwrap_or("</s>")
            }
        };
        let surface = words[start..=end].join(" ");
        let len = end + 1 - start;
        let in_gaz = gazetteer.contains(&surface);
        let shapes: String = words[start..=end].iter().map(|w| shape(w)).collect();
        let (s, e) = (start as isize, end as isize);
        let feats = [
            "bias".to_string(),
            format!("s={surface}"),
            format!("g={in_gaz}"),
            format!("gl={in_gaz}/{len}"),
            format!("len={len}"),
            format!("shape={shapes}"),
            format!("first={}", words[start]),
            format!("last={}", words[end]),
            format!("w-1={}", at(s - 1)),
            format!("w-2={}", at(s - 2)),
            format!("w+1={}", at(e + 1)),
            format!("w+2={}", at(e + 2)),
            format!("sh-1={}", shape(at(s - 1))),
            format!("sh+1={}", shape(at(e + 1))),
        ];
        feats.iter().map(|f| fnv1a(f.as_bytes()) as usize & mask).collect()
    }

    fn score(w: &[f64], feats: &[usize]) -> f64 {
        sigmoid(feats.iter().map(|&f| w[f]).sum())
    }

    fn examples(&self, sentence: &Sentence, gazetteer: &Gazetteer) -> Vec<(Vec<usize>, f64)> {
        let words = sentence.surfaces();
        let gold: BTreeSet<(usize, usize)> = sentence.spans.iter().map(|s| (s.start, s.end)).collect();
        let mut out = Vec::new();
        for start in 0..words.len() {
            for end in start..(start + self.cfg.max_span_len).min(words.len()) {
                let y = if gold.contains(&(start, end)) { 1.0 } else { 0.0 };
                out.push((self.features(&words, start, end, gazetteer), y));
            }
        }
        out
    }

    /// Fits on the spans already present in `sentences` (every other range
    /// up to `max_span_len` tokens is a negative).
    pub fn train(&mut self, sentences: &[Sentence], gazetteer: &Gazetteer) -> Result<()> {
        if sentences.is_empty() {
            return Err(Error::Empty("span classifier training set"));
        }
        let mut data: Vec<(Vec<usize>, f64)> =
            par::map(sentences, |s| self.examples(s, gazetteer)).into_iter().flatten().collect();
        let mut w = vec![0.0; 1 << self.cfg.hash_bits];
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let total = (data.len() * self.cfg.epochs).max(1) as f64;
        let mut done = 0.0;
        for _ in 0..self.cfg.epochs {
            data.shuffle(&mut rng);
            for (feats, y) in &data {
                let lr = self.cfg.learning_rate * (1.0 - done / total).max(0.05);
                done += 1.0;
                let g = (y - Self::score(&w, feats)) * lr;
                for &f in feats {
                    w[f] += g - lr * self.cfg.l2 * w[f];
                }
            }
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("span classifier weights".into()));
        }
        self.weights = Some(w);
        Ok(())
    }

    /// Probability that `[start, end]` is an entity name.
    pub fn probability(&self, sentence: &Sentence, start: usize, end: usize, gazetteer: &Gazetteer) -> Result<f64> {
        let w = self.weights.as_ref().ok_or(Error::NotTrained("span classifier"))?;
        Ok(Self::score(w, &self.features(&sentence.surfaces(), start, end, gazetteer)))
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let w = self.weights.as_ref().ok_or(Error::NotTrained("span classifier"))?;
        let mut store = ParamStore::new();
        store.add("weights", Tensor::vector(w.clone()));
        Ok(Checkpoint::new(store).with_meta("config", vec![serde_json::to_string(&self.cfg)?]))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let cfg: SpanClassifierConfig = match ck.meta("config")? {
            [one] => serde_json::from_str(one)?,
            _ => return Err(Error::Checkpoint("span classifier config must be one item".into())),
        };
        let id = ck.store.find("weights").ok_or_else(|| Error::Checkpoint("missing weights".into()))?;
        let w = ck.store.get(id).data().to_vec();
        if w.len() != 1 << cfg.hash_bits {
            return Err(Error::Checkpoint(format!("weights have {} entries for {} hash bits", w.len(), cfg.hash_bits)));
        }
        Ok(SpanClassifier { cfg, weights: Some(w) })
    }
}

impl Recognizer for SpanClassifier {
    fn recognize(&self, sentence: &Sentence, gazetteer: &Gazetteer, kb: &KnowledgeBase) -> Result<Vec<Span>> {
        let w = self.weights.as_ref().ok_or(Error::NotTrained("span classifier"))?;
        let words = sentence.surfaces();
        let mut scored = Vec::new();
        for start in 0..words.len() {
            for end in start..(start + self.cfg.max_span_len).min(words.len()) {
                let p = Self::score(w, &self.features(&words, start, end, gazetteer));
                if p > 0.5 {
                    scored.push((p, start, end));
                }
            }
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(b.2.cmp(&a.2)));
        let mut taken: Vec<(usize, usize)> = Vec::new();
        for (_, s, e) in scored {
            if taken.iter().all(|&(ts, te)| e < ts || te < s) {
                taken.push((s, e));
            }
        }
        taken.sort_unstable();
        Ok(taken.into_iter().map(|(s, e)| typed(sentence, s, e, gazetteer, kb)).collect())
    }
}

/// Span-level precision, recall and F1 of `predicted` against `gold`
/// boundaries.
pub fn span_f1(predicted: &[Vec<Span>], gold: &[Vec<Span>]) -> (f64, f64, f64) {
    let (mut tp, mut np, mut ng) = (0usize, 0usize, 0usize);
    for (p, g) in predicted.iter().zip(gold) {
        let gs: BTreeSet<(usize, usize)> = g.iter().map(|s| (s.start, s.end)).collect();
        tp += p.iter().filter(|s| gs.contains(&(s.start, s.end))).count();
        np += p.len();
        ng += gs.len();
    }
    let prec = if np == 0 { 0.0 } else { tp as f64 / np as f64 };
    let rec = if ng == 0 { 0.0 } else { tp as f64 / ng as f64 };
    let f1 = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
    (prec, rec, f1)
}

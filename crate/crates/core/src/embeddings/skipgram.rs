//! Skip-gram with negative sampling over KB neighbour pairs and over a
//! word/entity token stream.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::table::{EmbeddingTable, Symbol};
use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::kb::{EntityId, KnowledgeBase};
use crate::nn::ops::{sigmoid, softplus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives: usize,
    pub window: usize,
    pub seed: u64,
    /// Run the KB neighbour-pair objective inside every joint epoch.
    pub interleave_kb_objective: bool,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 32,
            epochs: 30,
            learning_rate: 0.025,
            negatives: 5,
            window: 5,
            seed: 1,
            interleave_kb_objective: true,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.negatives == 0 || self.window == 0 {
            return Err(Error::Config("skip-gram needs dim > 0, negatives >= 1, window >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("skip-gram learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub epoch_losses: Vec<f64>,
    /// Entities with no KB neighbour; their vectors keep their initial value
    /// under the neighbour-pair objective.
    pub isolated: Vec<EntityId>,
}

/// Unigram^0.75 sampler restricted to one namespace.
struct NegativeSampler {
    rows: Vec<usize>,
    dist: Option<WeightedIndex<f64>>,
}

impl NegativeSampler {
    fn new(rows: Vec<usize>, counts: &[u64]) -> Self {
        let weights: Vec<f64> = rows.iter().map(|&r| (counts[r] as f64).powf(0.75)).collect();
        let dist = WeightedIndex::new(&weights).ok();
        NegativeSampler { rows, dist }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Option<usize> {
        self.dist.as_ref().map(|d| self.rows[d.sample(rng)])
    }
}

struct Sgd<'a> {
    table: &'a mut EmbeddingTable,
    negatives: usize,
    lr0: f64,
    total: f64,
    done: f64,
}

impl Sgd<'_> {
    fn lr(&self) -> f64 {
        self.lr0 * (1.0 - self.done / self.total).max(1e-4)
    }

    /// One positive pair plus `negatives` samples; returns the pair loss.
    fn step(&mut self, input: usize, output: usize, sampler: &NegativeSampler, rng: &mut ChaCha8Rng) -> f64 {
        let d = self.table.dim();
        let lr = self.lr();
        self.done += 1.0;
        let mut grad_in = vec![0.0; d];
        let mut loss = 0.0;
        let in_vec: Vec<f64> = self.table.vectors[input * d..(input + 1) * d].to_vec();
        let mut targets = vec![(output, 1.0)];
        if sampler.rows.len() > 1 {
            for _ in 0..self.negatives {
                // redraw collisions with the positive so every pair gets k negatives
                for _ in 0..8 {
                    match sampler.sample(rng) {
                        Some(n) if n != output => {
                            targets.push((n, 0.0));
                            break;
                        }
                        Some(_) => continue,
                        None => break,
                    }
                }
            }
        }
        for (t, label) in targets {
            let out = &mut self.table.context[t * d..(t + 1) * d];
            let x: f64 = in_vec.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
            loss += if label > 0.5 { softplus(-x) } else { softplus(x) };
            let g = (label - sigmoid(x)) * lr;
            for k in 0..d {
                grad_in[k] += g * out[k];
                out[k] += g * in_vec[k];
            }
        }
        for (v, g) in self.table.vectors[input * d..(input + 1) * d].iter_mut().zip(&grad_in) {
            *v += g;
        }
        loss
    }
}

/// Ordered 1-hop pairs `(input row, output row)` over all KB neighbours.
fn kb_pairs(kb: &KnowledgeBase, table: &EmbeddingTable) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, e) in kb.entities().iter().enumerate() {
        let Some(v) = table.row_of(&Symbol::Entity(e.id.clone())) else { continue };
        for &j in kb.neighbors_idx(i) {
            if let Some(u) = table.row_of(&Symbol::Entity(kb.id_at(j).clone())) {
                pairs.push((v, u));
            }
        }
    }
    pairs
}

/// Neighbour-pair skip-gram over the KB graph.
pub fn train_node_embeddings(kb: &KnowledgeBase, cfg: &SkipGramConfig) -> Result<(EmbeddingTable, TrainStats)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = EmbeddingTable::new(cfg.dim);
    for e in kb.entities() {
        table.insert(Symbol::Entity(e.id.clone()), &mut rng);
    }
    let mut stats = TrainStats::default();
    for (i, e) in kb.entities().iter().enumerate() {
        let deg = kb.neighbors_idx(i).len() as u64;
        table.counts[i] = deg;
        if deg == 0 {
            stats.isolated.push(e.id.clone());
        }
    }
    let mut pairs = kb_pairs(kb, &table);
    let sampler = NegativeSampler::new(table.entity_rows(), &table.counts);
    let total = (pairs.len() * cfg.epochs).max(1) as f64;
    let mut sgd = Sgd { table: &mut table, negatives: cfg.negatives, lr0: cfg.learning_rate, total, done: 0.0 };
    for _ in 0..cfg.epochs {
        pairs.shuffle(&mut rng);
        let mut sum = 0.0;
        for &(v, u) in &pairs {
            sum += sgd.step(v, u, &sampler, &mut rng);
        }
        let mean = if pairs.is_empty() { 0.0 } else { sum / pairs.len() as f64 };
        if !mean.is_finite() {
            return Err(Error::NonFinite("node embedding loss".into()));
        }
        stats.epoch_losses.push(mean);
    }
    Ok((table, stats))
}

/// Token stream of one sentence: each linked span contributes its surface
/// words followed by its entity symbol.
pub fn linked_stream(sentence: &Sentence) -> Vec<Symbol> {
    let mut out = Vec::with_capacity(sentence.len() + sentence.spans.len());
    let mut t = 0;
    while t < sentence.len() {
        let span = sentence.spans.iter().find(|s| s.start == t && s.entity.is_some());
        match span {
            Some(s) => {
                for k in s.start..=s.end {
                    out.push(Symbol::Word(sentence.tokens[k].surface.clone()));
                }
                out.push(Symbol::Entity(s.entity.clone().expect("filtered on entity")));
                t = s.end + 1;
            }
            None => {
                out.push(Symbol::Word(sentence.tokens[t].surface.clone()));
                t += 1;
            }
        }
    }
    out
}

/// Joint word/entity training, starting from `init` (typically the output
/// of [`train_node_embeddings`]).
pub fn train_joint_embeddings(
    sentences: &[Sentence],
    kb: &KnowledgeBase,
    init: &EmbeddingTable,
    cfg: &SkipGramConfig,
) -> Result<(EmbeddingTable, TrainStats)> {
    cfg.validate()?;
    if sentences.is_empty() {
        return Err(Error::Empty("joint embedding corpus"));
    }
    if init.dim() != cfg.dim {
        return Err(Error::Config(format!("initial table has dim {}, config asks {}", init.dim(), cfg.dim)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6a_6f69_6e74);
    let mut table = init.clone();
    for e in kb.entities() {
        table.insert(Symbol::Entity(e.id.clone()), &mut rng);
    }
    let mut streams: Vec<Vec<usize>> = Vec::with_capacity(sentences.len());
    for s in sentences {
        let rows: Vec<usize> = linked_stream(s).into_iter().map(|sym| table.insert(sym, &mut rng)).collect();
        streams.push(rows);
    }
    let mut stats = TrainStats::default();
    table.counts.iter_mut().for_each(|c| *c = 0);
    for (i, e) in kb.entities().iter().enumerate() {
        let r = table.row_of(&Symbol::Entity(e.id.clone())).expect("inserted above");
        table.counts[r] += kb.neighbors_idx(i).len() as u64;
        if kb.neighbors_idx(i).is_empty() {
            stats.isolated.push(e.id.clone());
        }
    }
    for s in &streams {
        for &r in s {
            table.counts[r] += 1;
        }
    }
    let words_sampler =
        NegativeSampler::new((0..table.len()).filter(|&r| !table.symbols()[r].is_entity()).collect(), &table.counts);
    let entity_sampler = NegativeSampler::new(table.entity_rows(), &table.counts);

    let mut text_pairs = 0usize;
    for s in &streams {
        for t in 0..s.len() {
            let lo = t.saturating_sub(cfg.window);
            let hi = (t + cfg.window).min(s.len() - 1);
            text_pairs += hi - lo;
        }
    }
    let mut kb_pair_list = if cfg.interleave_kb_objective { kb_pairs(kb, &table) } else { Vec::new() };
    let total = ((text_pairs + kb_pair_list.len()) * cfg.epochs).max(1) as f64;
    let mut order: Vec<usize> = (0..streams.len()).collect();
    let is_entity: Vec<bool> = table.symbols().iter().map(Symbol::is_entity).collect();
    let mut sgd = Sgd { table: &mut table, negatives: cfg.negatives, lr0: cfg.learning_rate, total, done: 0.0 };
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut n = 0usize;
        for &si in &order {
            let s = &streams[si];
            for t in 0..s.len() {
                let lo = t.saturating_sub(cfg.window);
                let hi = (t + cfg.window).min(s.len() - 1);
                for c in lo..=hi {
                    if c == t {
                        continue;
                    }
                    let sampler = if is_entity[s[c]] { &entity_sampler } else { &words_sampler };
                    sum += sgd.step(s[t], s[c], sampler, &mut rng);
                    n += 1;
                }
            }
        }
        kb_pair_list.shuffle(&mut rng);
        for &(v, u) in &kb_pair_list {
            sum += sgd.step(v, u, &entity_sampler, &mut rng);
            n += 1;
        }
        let mean = if n == 0 { 0.0 } else { sum / n as f64 };
        if !mean.is_finite() {
            return Err(Error::NonFinite("joint embedding loss".into()));
        }
        stats.epoch_losses.push(mean);
    }
    Ok((table, stats))
}

//! Neural ranking of candidates from sentence context: a bidirectional
//! LSTM encodes the sentence, a two-layer perceptron scores
//! `[context; name words; entity vector]`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Candidate;
use crate::corpus::{Sentence, Span};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kb::{EntityId, KnowledgeBase};
use crate::nn::lstm::BiLstmCache;
use crate::nn::{Activation, Adam, BiLstm, Checkpoint, Grads, Mlp, ParamStore};
use crate::par;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextLinkerConfig {
    pub lstm_hidden: usize,
    pub mlp_hidden: usize,
    pub margin: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Append a 0/1 channel flagging the mention's tokens to every encoder
    /// input, so the context vector knows which mention is being ranked.
    pub mark_mention: bool,
}

impl Default for ContextLinkerConfig {
    fn default() -> Self {
        ContextLinkerConfig {
            lstm_hidden: 32,
            mlp_hidden: 64,
            margin: 0.8,
            epochs: 40,
            learning_rate: 0.01,
            batch_size: 16,
            seed: 11,
            mark_mention: true,
        }
    }
}

/// One supervised span: the gold entity and the candidate list negatives
/// are drawn from.
#[derive(Clone, Debug)]
pub struct ContextItem<'a> {
    pub sentence: &'a Sentence,
    pub span: Span,
    pub gold: EntityId,
    pub candidates: Vec<EntityId>,
}

/// `max(0, s' - s + margin)`.
pub fn hinge_loss(positive: f64, negative: f64, margin: f64) -> f64 {
    (negative - positive + margin).max(0.0)
}

#[derive(Clone, Debug)]
pub struct ContextLinker {
    cfg: ContextLinkerConfig,
    dim: usize,
    store: ParamStore,
    encoder: BiLstm,
    scorer: Mlp,
    trained: bool,
}

struct Encoded {
    xs_cache: BiLstmCache,
    n: usize,
    v_c: Vec<f64>,
    w_e: Vec<f64>,
}

fn word_or_zero(table: &EmbeddingTable, w: &str) -> Vec<f64> {
    table.word(w).map_or_else(|| vec![0.0; table.dim()], <[f64]>::to_vec)
}

impl ContextLinker {
    pub fn new(dim: usize, cfg: ContextLinkerConfig) -> Result<Self> {
        if dim == 0 || cfg.lstm_hidden == 0 || cfg.mlp_hidden == 0 || cfg.batch_size == 0 {
            return Err(Error::Config("context linker sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        let enc_in = dim + usize::from(cfg.mark_mention);
        let encoder = BiLstm::new(&mut store, "encoder", enc_in, cfg.lstm_hidden, &mut rng);
        let scorer = Mlp::new(
            &mut store,
            "scorer",
            (2 * cfg.lstm_hidden + 2 * dim, cfg.mlp_hidden, 1),
            (Activation::Relu, Activation::Sigmoid),
            &mut rng,
        );
        Ok(ContextLinker { cfg, dim, store, encoder, scorer, trained: false })
    }

    pub fn config(&self) -> &ContextLinkerConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    /// Scorer input width: context, name words and entity vector.
    pub fn input_dim(&self) -> usize {
        2 * self.cfg.lstm_hidden + 2 * self.dim
    }

    fn encode(&self, store: &ParamStore, table: &EmbeddingTable, sentence: &Sentence, span: &Span) -> Result<Encoded> {
        if table.dim() != self.dim {
            return Err(Error::Shape(format!("table dim {} but linker expects {}", table.dim(), self.dim)));
        }
        let mut xs: Vec<Vec<f64>> = sentence.tokens.iter().map(|t| word_or_zero(table, &t.surface)).collect();
        let words = xs.clone();
        if self.cfg.mark_mention {
            for (t, x) in xs.iter_mut().enumerate() {
                x.push(if span.contains(t) { 1.0 } else { 0.0 });
            }
        }
        let (hs, xs_cache) = self.encoder.forward(store, &xs)?;
        let h = self.cfg.lstm_hidden;
        let n = hs.len();
        let mut v_c = hs[n - 1][..h].to_vec();
        v_c.extend_from_slice(&hs[0][h..]);
        let mut w_e = vec![0.0; self.dim];
        for w in &words[span.start..=span.end] {
            for (a, b) in w_e.iter_mut().zip(w) {
                *a += b;
            }
        }
        let k = span.token_count() as f64;
        w_e.iter_mut().for_each(|v| *v /= k);
        Ok(Encoded { xs_cache, n, v_c, w_e })
    }

    fn input(&self, enc: &Encoded, table: &EmbeddingTable, entity: &EntityId) -> Result<Vec<f64>> {
        let v_e = table.entity(entity).ok_or_else(|| Error::UnknownEntity(entity.0.clone()))?;
        let mut x = enc.v_c.clone();
        x.extend_from_slice(&enc.w_e);
        x.extend_from_slice(v_e);
        Ok(x)
    }

    fn score_with(&self, store: &ParamStore, table: &EmbeddingTable, sentence: &Sentence, span: &Span, entity: &EntityId) -> Result<f64> {
        let enc = self.encode(store, table, sentence, span)?;
        Ok(self.scorer.forward(store, &self.input(&enc, table, entity)?)?.y[0])
    }

    /// Sigmoid-bounded ranking score of `entity` for `span`.
    pub fn score(&self, table: &EmbeddingTable, sentence: &Sentence, span: &Span, entity: &EntityId) -> Result<f64> {
        if !self.trained {
            return Err(Error::NotTrained("context linker"));
        }
        self.score_with(&self.store, table, sentence, span, entity)
    }

    /// Scores for every candidate, sorted best first (ties by entity id).
    pub fn rank(&self, table: &EmbeddingTable, sentence: &Sentence, candidate: &Candidate) -> Result<Vec<(EntityId, f64)>> {
        if !self.trained {
            return Err(Error::NotTrained("context linker"));
        }
        let enc = self.encode(&self.store, table, sentence, &candidate.span)?;
        let mut out = Vec::with_capacity(candidate.entities.len());
        for e in &candidate.entities {
            out.push((e.clone(), self.scorer.forward(&self.store, &self.input(&enc, table, e)?)?.y[0]));
        }
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(out)
    }

    /// Hinge loss of one (gold, negative) pair and its gradient.
    fn item_loss_grad(
        &self,
        store: &ParamStore,
        table: &EmbeddingTable,
        item: &ContextItem<'_>,
        negative: &EntityId,
    ) -> Result<(f64, Grads)> {
        let mut grads = Grads::new(store);
        let enc = self.encode(store, table, item.sentence, &item.span)?;
        let pos = self.scorer.forward(store, &self.input(&enc, table, &item.gold)?)?;
        let neg = self.scorer.forward(store, &self.input(&enc, table, negative)?)?;
        let loss = hinge_loss(pos.y[0], neg.y[0], self.cfg.margin);
        if loss > 0.0 {
            let dx_pos = self.scorer.backward(store, &mut grads, &pos, &[-1.0]);
            let dx_neg = self.scorer.backward(store, &mut grads, &neg, &[1.0]);
            let h = self.cfg.lstm_hidden;
            let dv_c: Vec<f64> = dx_pos[..2 * h].iter().zip(&dx_neg[..2 * h]).map(|(a, b)| a + b).collect();
            let mut douts = vec![vec![0.0; 2 * h]; enc.n];
            douts[enc.n - 1][..h].copy_from_slice(&dv_c[..h]);
            douts[0][h..].iter_mut().zip(&dv_c[h..]).for_each(|(d, g)| *d += g);
            self.encoder.backward(store, &mut grads, &enc.xs_cache, &douts);
        }
        Ok((loss, grads))
    }

    fn sample_negative(item: &ContextItem<'_>, kb: &KnowledgeBase, table: &EmbeddingTable, rng: &mut ChaCha8Rng) -> Option<EntityId> {
        let pool: Vec<&EntityId> = item.candidates.iter().filter(|e| **e != item.gold && table.entity(e).is_some()).collect();
        if let Some(e) = pool.choose(rng) {
            return Some((*e).clone());
        }
        if kb.num_entities() < 2 {
            return None;
        }
        for _ in 0..32 {
            let e = kb.id_at(rng.gen_range(0..kb.num_entities()));
            if *e != item.gold && table.entity(e).is_some() {
                return Some(e.clone());
            }
        }
        None
    }

    /// Trains with one sampled negative per item per epoch; returns the mean
    /// hinge loss of every epoch.
    pub fn train(&mut self, items: &[ContextItem<'_>], kb: &KnowledgeBase, table: &EmbeddingTable) -> Result<Vec<f64>> {
        if items.is_empty() {
            return Err(Error::Empty("context linker training items"));
        }
        for it in items {
            if table.entity(&it.gold).is_none() {
                return Err(Error::UnknownEntity(it.gold.0.clone()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ 0x5eed);
        let mut adam = Adam::new(self.cfg.learning_rate);
        let mut order: Vec<usize> = (0..items.len()).collect();
        let mut losses = Vec::with_capacity(self.cfg.epochs);
        for _ in 0..self.cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            let mut count = 0usize;
            for batch in order.chunks(self.cfg.batch_size) {
                let jobs: Vec<(usize, EntityId)> = batch
                    .iter()
                    .filter_map(|&i| Self::sample_negative(&items[i], kb, table, &mut rng).map(|n| (i, n)))
                    .collect();
                if jobs.is_empty() {
                    continue;
                }
                let store = &self.store;
                let results = par::map(&jobs, |(i, neg)| self.item_loss_grad(store, table, &items[*i], neg));
                let mut grads = Grads::new(&self.store);
                for r in results {
                    let (l, g) = r?;
                    total += l;
                    count += 1;
                    grads.add(&g);
                }
                grads.scale(1.0 / jobs.len() as f64);
                adam.step(&mut self.store, &grads)?;
            }
            let mean = if count == 0 { 0.0 } else { total / count as f64 };
            if !mean.is_finite() {
                return Err(Error::NonFinite("context linker loss".into()));
            }
            losses.push(mean);
        }
        self.trained = true;
        Ok(losses)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        if !self.trained {
            return Err(Error::NotTrained("context linker"));
        }
        Ok(Checkpoint::new(self.store.clone())
            .with_meta("config", vec![serde_json::to_string(&self.cfg)?])
            .with_meta("dim", vec![self.dim.to_string()]))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let cfg: ContextLinkerConfig = match ck.meta("config")? {
            [one] => serde_json::from_str(one)?,
            _ => return Err(Error::Checkpoint("context linker config must be one item".into())),
        };
        let dim: usize = match ck.meta("dim")? {
            [d] => d.parse().map_err(|_| Error::Checkpoint(format!("bad dim `{d}`")))?,
            _ => return Err(Error::Checkpoint("context linker dim must be one item".into())),
        };
        let mut m = ContextLinker::new(dim, cfg)?;
        m.store.load_from(&ck.store)?;
        m.trained = true;
        Ok(m)
    }

    #[cfg(test)]
    fn mark_trained(&mut self) {
        self.trained = true;
    }
}

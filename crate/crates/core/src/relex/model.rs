//! Bag-level relation classifier. Each sentence is encoded twice, by a
//! piecewise-pooled convolution and by a BiLSTM followed by graph
//! convolutions over the dependency path. A self-attention gate weights the
//! concatenated vector before the bag sum.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoding::{Instance, Vocab};
use super::loss::{sliding_margin_grad, sliding_margin_loss};
use crate::error::{Error, Result};
use crate::nn::conv::max_pool_backward;
use crate::nn::gcn::GcnCache;
use crate::nn::lstm::BiLstmCache;
use crate::nn::ops::{softmax_rows, softmax_rows_backward, MlpCache};
use crate::nn::{max_pool, max_pool_range, Activation, Adam, BiLstm, Checkpoint, Conv1d, GcnLayer, Grads, Linear, Mlp, ParamId, ParamStore, Tensor};
use crate::par;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReConfig {
    pub position_dim: usize,
    pub type_dim: usize,
    pub tag_dim: usize,
    /// Encoder width `d_h`; must be even (the BiLSTM splits it).
    pub hidden: usize,
    pub conv_width: usize,
    pub gcn_layers: usize,
    pub margin: f64,
    /// Weight of the negative-label term.
    pub down_weight: f64,
    pub threshold_init: f64,
    /// Relative positions are clipped to `±max_position`.
    pub max_position: usize,
    /// Attention normalises over tokens for each feature (true) or over
    /// features for each token (false).
    pub attention_over_tokens: bool,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ReConfig {
    fn default() -> Self {
        ReConfig {
            position_dim: 5,
            type_dim: 5,
            tag_dim: 5,
            hidden: 16,
            conv_width: 3,
            gcn_layers: 1,
            margin: 0.1,
            down_weight: 0.5,
            threshold_init: 0.5,
            max_position: 30,
            attention_over_tokens: true,
            learning_rate: 0.005,
            epochs: 15,
            batch_size: 16,
            seed: 17,
        }
    }
}

impl ReConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.position_dim, self.type_dim, self.tag_dim, self.hidden, self.conv_width, self.max_position];
        if dims.contains(&0) {
            return Err(Error::Config("relation extractor dimensions must be positive".into()));
        }
        if !self.hidden.is_multiple_of(2) {
            return Err(Error::Config(format!("hidden size {} must be even", self.hidden)));
        }
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(Error::Config(format!("margin {} must lie in (0, 1)", self.margin)));
        }
        if !(self.down_weight > 0.0) {
            return Err(Error::Config("down_weight must be positive".into()));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config("batch_size and learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self, word_dim: usize) -> usize {
        word_dim + 3 * self.position_dim + self.type_dim + self.tag_dim
    }
}

/// One supervised bag: encoded sentences and a gold flag per relation.
#[derive(Clone, Debug)]
pub struct TrainingBag {
    pub instances: Vec<Instance>,
    pub labels: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BagPrediction {
    pub scores: Vec<f64>,
    /// Relation indices whose score exceeds the threshold; empty means NA.
    pub labels: Vec<usize>,
}

/// Per-sentence encoder outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceVectors {
    pub s_pcnn: Vec<f64>,
    pub s_gcn: Vec<f64>,
    pub gate: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Tables {
    pos1: ParamId,
    pos2: ParamId,
    pos3: ParamId,
    types: ParamId,
    tags: ParamId,
}

#[derive(Clone, Debug)]
struct SentenceCache {
    x: Tensor,
    pcnn_arg: [Vec<Option<usize>>; 3],
    s_pcnn: Vec<f64>,
    lstm: BiLstmCache,
    gcn: Vec<GcnCache>,
    gcn_arg: [Vec<Option<usize>>; 3],
    s_gcn: Vec<f64>,
    att_hidden: Tensor,
    att: Tensor,
    s_att_e: Vec<f64>,
    gate: MlpCache,
}

impl SentenceCache {
    fn s(&self) -> Vec<f64> {
        [self.s_pcnn.as_slice(), self.s_gcn.as_slice()].concat()
    }
}

struct BagCache {
    sentences: Vec<SentenceCache>,
    out: MlpCache,
}

#[derive(Clone, Debug)]
pub struct RelationExtractor {
    cfg: ReConfig,
    vocab: Vocab,
    word_dim: usize,
    store: ParamStore,
    tables: Tables,
    conv: Conv1d,
    lstm: BiLstm,
    gcn: Vec<GcnLayer>,
    att1: Linear,
    att2: Linear,
    proj: Linear,
    gate: Mlp,
    out: Mlp,
    threshold: ParamId,
    trained: bool,
}

/// `v = Σ_i g_i ⊙ s_i`. Each coordinate sums its terms in sorted order, so
/// the result does not depend on sentence order.
pub fn aggregate_bag(s: &[Vec<f64>], g: &[Vec<f64>]) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Err(Error::Empty("bag"));
    }
    if s.len() != g.len() {
        return Err(Error::Shape(format!("{} sentence vectors but {} gates", s.len(), g.len())));
    }
    let d = s[0].len();
    if s.iter().chain(g).any(|v| v.len() != d) {
        return Err(Error::Shape("bag vectors differ in length".into()));
    }
    let mut terms = vec![0.0; s.len()];
    Ok((0..d)
        .map(|k| {
            for (t, (si, gi)) in terms.iter_mut().zip(s.iter().zip(g)) {
                *t = si[k] * gi[k];
            }
            terms.sort_by(f64::total_cmp);
            terms.iter().sum()
        })
        .collect())
}

fn attention(q: &Tensor, over_tokens: bool) -> Tensor {
    if over_tokens {
        softmax_rows(q)
    } else {
        softmax_rows(&q.transpose()).transpose()
    }
}

fn attention_backward(p: &Tensor, dp: &Tensor, over_tokens: bool) -> Tensor {
    if over_tokens {
        softmax_rows_backward(p, dp)
    } else {
        softmax_rows_backward(&p.transpose(), &dp.transpose()).transpose()
    }
}

fn tanh_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(y, d)| d * (1.0 - y * y)).collect()
}

impl RelationExtractor {
    pub fn new(word_dim: usize, vocab: Vocab, cfg: ReConfig) -> Result<Self> {
        cfg.validate()?;
        if word_dim == 0 {
            return Err(Error::Config("word dimension must be positive".into()));
        }
        if vocab.relations.is_empty() {
            return Err(Error::Config("relation vocabulary is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        let buckets = 2 * cfg.max_position + 1;
        let mut table = |store: &mut ParamStore, name: &str, rows: usize, dim: usize| {
            store.add(name, Tensor::uniform(&[rows, dim], 0.5, &mut rng))
        };
        let tables = Tables {
            pos1: table(&mut store, "emb.pos1", buckets, cfg.position_dim),
            pos2: table(&mut store, "emb.pos2", buckets, cfg.position_dim),
            pos3: table(&mut store, "emb.pos3", cfg.max_position + 2, cfg.position_dim),
            types: table(&mut store, "emb.type", vocab.types.len(), cfg.type_dim),
            tags: table(&mut store, "emb.tag", vocab.tags.len(), cfg.tag_dim),
        };
        let de = cfg.input_dim(word_dim);
        let dh = cfg.hidden;
        let r = vocab.relations.len();
        let conv = Conv1d::new(&mut store, "pcnn", de, dh, cfg.conv_width, &mut rng);
        let lstm = BiLstm::new(&mut store, "cgcn.lstm", de, dh / 2, &mut rng);
        let gcn = (0..cfg.gcn_layers)
            .map(|l| GcnLayer::new(&mut store, &format!("cgcn.gcn{l}"), dh, dh, &mut rng))
            .collect();
        let att1 = Linear::new(&mut store, "gate.att1", de, dh, &mut rng);
        let att2 = Linear::new(&mut store, "gate.att2", dh, de, &mut rng);
        let proj = Linear::without_bias(&mut store, "gate.proj", de, dh, &mut rng);
        let gate = Mlp::new(&mut store, "gate.mlp", (dh, dh, 6 * dh), (Activation::Relu, Activation::Sigmoid), &mut rng);
        let out = Mlp::new(&mut store, "out", (6 * dh, 3 * dh, r), (Activation::Relu, Activation::Sigmoid), &mut rng);
        let threshold = store.add("threshold", Tensor::vector(vec![cfg.threshold_init]));
        Ok(RelationExtractor {
            cfg,
            vocab,
            word_dim,
            store,
            tables,
            conv,
            lstm,
            gcn,
            att1,
            att2,
            proj,
            gate,
            out,
            threshold,
            trained: false,
        })
    }

    pub fn config(&self) -> &ReConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn word_dim(&self) -> usize {
        self.word_dim
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn threshold(&self) -> f64 {
        self.store.get(self.threshold).data()[0]
    }

    fn table_layout(&self) -> [(ParamId, usize); 5] {
        let c = &self.cfg;
        [
            (self.tables.pos1, c.position_dim),
            (self.tables.pos2, c.position_dim),
            (self.tables.pos3, c.position_dim),
            (self.tables.types, c.type_dim),
            (self.tables.tags, c.tag_dim),
        ]
    }

    fn indices(inst: &Instance) -> [&[usize]; 5] {
        [&inst.pos1, &inst.pos2, &inst.pos3, &inst.types, &inst.tags]
    }

    /// Token matrix `X`, `d_e × n`.
    pub fn embed(&self, store: &ParamStore, inst: &Instance) -> Result<Tensor> {
        let n = inst.len();
        if n == 0 {
            return Err(Error::Sentence { id: inst.sentence_id.clone(), msg: "empty sentence".into() });
        }
        if inst.words.rows() != self.word_dim || inst.words.cols() != n {
            return Err(Error::Shape(format!(
                "word matrix {:?} for {n} tokens of dimension {}",
                inst.words.shape(),
                self.word_dim
            )));
        }
        let de = self.cfg.input_dim(self.word_dim);
        let mut x = Tensor::zeros(&[de, n]);
        for t in 0..n {
            for k in 0..self.word_dim {
                x.set(k, t, inst.words.at(k, t));
            }
        }
        let mut offset = self.word_dim;
        for ((id, dim), idx) in self.table_layout().into_iter().zip(Self::indices(inst)) {
            let table = store.get(id);
            for (t, &i) in idx.iter().enumerate() {
                if i >= table.rows() {
                    return Err(Error::Shape(format!("feature index {i} outside table of {} rows", table.rows())));
                }
                for (k, &v) in table.row(i).iter().enumerate() {
                    x.set(offset + k, t, v);
                }
            }
            offset += dim;
        }
        Ok(x)
    }

    /// Segment boundaries at the two entity starts, ordered left to right.
    fn split_points(inst: &Instance) -> (usize, usize) {
        let (a, b) = (inst.subject.0, inst.object.0);
        (a.min(b), a.max(b))
    }

    fn forward_sentence(&self, store: &ParamStore, inst: &Instance) -> Result<SentenceCache> {
        let x = self.embed(store, inst)?;
        let n = x.cols();
        let dh = self.cfg.hidden;
        if inst.adjacency.shape() != [n, n] {
            return Err(Error::Shape(format!("adjacency {:?} for {n} tokens", inst.adjacency.shape())));
        }
        if inst.subject.1 >= n || inst.object.1 >= n {
            return Err(Error::Shape("entity span outside sentence".into()));
        }

        let conv = self.conv.forward(store, &x)?;
        let (i, j) = Self::split_points(inst);
        let mut pooled = Vec::with_capacity(3 * dh);
        let mut pcnn_arg: [Vec<Option<usize>>; 3] = Default::default();
        for (k, seg) in [0..i, i..j, j..n].into_iter().enumerate() {
            let (v, a) = max_pool(&conv, seg)?;
            pooled.extend(v);
            pcnn_arg[k] = a;
        }
        let s_pcnn: Vec<f64> = pooled.iter().map(|v| v.tanh()).collect();

        let (outs, lstm) = self.lstm.forward(store, &x.columns())?;
        let mut h = Tensor::from_columns(&outs);
        let mut gcn = Vec::with_capacity(self.gcn.len());
        for layer in &self.gcn {
            let (next, c) = layer.forward(store, &h, &inst.adjacency)?;
            gcn.push(c);
            h = next;
        }
        let pools = [
            max_pool(&h, 0..n)?,
            max_pool_range(&h, inst.subject.0, inst.subject.1)?,
            max_pool_range(&h, inst.object.0, inst.object.1)?,
        ];
        let mut s_gcn = Vec::with_capacity(3 * dh);
        let mut gcn_arg: [Vec<Option<usize>>; 3] = Default::default();
        for (k, (v, a)) in pools.into_iter().enumerate() {
            s_gcn.extend(v.iter().map(|v| v.tanh()));
            gcn_arg[k] = a;
        }

        let mut att_hidden = self.att1.forward_cols(store, &x)?;
        for v in att_hidden.data_mut() {
            *v = v.max(0.0);
        }
        let att = attention(&self.att2.forward_cols(store, &att_hidden)?, self.cfg.attention_over_tokens);
        let s_att_e: Vec<f64> = (0..x.rows()).map(|f| (0..n).map(|t| att.at(f, t) * x.at(f, t)).sum()).collect();
        let s_att = self.proj.forward(store, &s_att_e)?;
        let gate = self.gate.forward(store, &s_att)?;
        debug_assert_eq!(gate.y.len(), 6 * dh);
        debug_assert_eq!(s_pcnn.len() + s_gcn.len(), 6 * dh);
        Ok(SentenceCache { x, pcnn_arg, s_pcnn, lstm, gcn, gcn_arg, s_gcn, att_hidden, att, s_att_e, gate })
    }

    fn backward_sentence(&self, store: &ParamStore, grads: &mut Grads, inst: &Instance, c: &SentenceCache, ds: &[f64], dg: &[f64]) {
        let dh = self.cfg.hidden;
        let n = c.x.cols();
        let mut dx = Tensor::zeros(c.x.shape());

        let d_att_in = self.gate.backward(store, grads, &c.gate, dg);
        let d_e = self.proj.backward(store, grads, &c.s_att_e, &d_att_in);
        let mut dp = Tensor::zeros(c.att.shape());
        for (f, &d) in d_e.iter().enumerate() {
            for t in 0..n {
                dp.set(f, t, d * c.x.at(f, t));
                dx.set(f, t, d * c.att.at(f, t));
            }
        }
        let dq = attention_backward(&c.att, &dp, self.cfg.attention_over_tokens);
        let mut da = self.att2.backward_cols(store, grads, &c.att_hidden, &dq);
        for (g, &a) in da.data_mut().iter_mut().zip(c.att_hidden.data()) {
            if a <= 0.0 {
                *g = 0.0;
            }
        }
        dx.add_assign(&self.att1.backward_cols(store, grads, &c.x, &da));

        let dpool = tanh_backward(&c.s_pcnn, &ds[..3 * dh]);
        let mut dconv = Tensor::zeros(&[dh, n]);
        for (k, arg) in c.pcnn_arg.iter().enumerate() {
            max_pool_backward(&mut dconv, arg, &dpool[k * dh..(k + 1) * dh]);
        }
        dx.add_assign(&self.conv.backward(store, grads, &c.x, &dconv));

        let dpool = tanh_backward(&c.s_gcn, &ds[3 * dh..]);
        let mut dh_t = Tensor::zeros(&[dh, n]);
        for (k, arg) in c.gcn_arg.iter().enumerate() {
            max_pool_backward(&mut dh_t, arg, &dpool[k * dh..(k + 1) * dh]);
        }
        for (layer, cache) in self.gcn.iter().zip(&c.gcn).rev() {
            dh_t = layer.backward(store, grads, cache, &inst.adjacency, &dh_t);
        }
        let dxs = self.lstm.backward(store, grads, &c.lstm, &dh_t.columns());
        dx.add_assign(&Tensor::from_columns(&dxs));

        // scatter into the feature tables; word vectors stay frozen
        let mut offset = self.word_dim;
        for ((id, dim), idx) in self.table_layout().into_iter().zip(Self::indices(inst)) {
            let g = grads.get_mut(id);
            for (t, &i) in idx.iter().enumerate() {
                for (k, slot) in g.row_mut(i).iter_mut().enumerate() {
                    *slot += dx.at(offset + k, t);
                }
            }
            offset += dim;
        }
    }

    fn forward_bag(&self, store: &ParamStore, instances: &[Instance]) -> Result<BagCache> {
        if instances.is_empty() {
            return Err(Error::Empty("bag"));
        }
        let sentences: Vec<SentenceCache> =
            instances.iter().map(|i| self.forward_sentence(store, i)).collect::<Result<_>>()?;
        let s: Vec<Vec<f64>> = sentences.iter().map(SentenceCache::s).collect();
        let g: Vec<Vec<f64>> = sentences.iter().map(|c| c.gate.y.clone()).collect();
        let v = aggregate_bag(&s, &g)?;
        let out = self.out.forward(store, &v)?;
        Ok(BagCache { sentences, out })
    }

    /// Sentence-level encoder outputs with the current parameters.
    pub fn encode_sentence(&self, inst: &Instance) -> Result<SentenceVectors> {
        let c = self.forward_sentence(&self.store, inst)?;
        Ok(SentenceVectors { s_pcnn: c.s_pcnn, s_gcn: c.s_gcn, gate: c.gate.y })
    }

    /// Bag vector `v` with the current parameters.
    pub fn bag_vector(&self, instances: &[Instance]) -> Result<Vec<f64>> {
        Ok(self.forward_bag(&self.store, instances)?.out.x)
    }

    pub fn bag_loss(&self, store: &ParamStore, bag: &TrainingBag) -> Result<f64> {
        let c = self.forward_bag(store, &bag.instances)?;
        let b = store.get(self.threshold).data()[0];
        Ok(sliding_margin_loss(&c.out.y, &bag.labels, b, self.cfg.margin, self.cfg.down_weight))
    }

    pub fn bag_loss_grad(&self, store: &ParamStore, bag: &TrainingBag) -> Result<(f64, Grads)> {
        if bag.labels.len() != self.vocab.relations.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} relations",
                bag.labels.len(),
                self.vocab.relations.len()
            )));
        }
        let c = self.forward_bag(store, &bag.instances)?;
        let b = store.get(self.threshold).data()[0];
        let (m, w) = (self.cfg.margin, self.cfg.down_weight);
        let loss = sliding_margin_loss(&c.out.y, &bag.labels, b, m, w);
        let (dr, db) = sliding_margin_grad(&c.out.y, &bag.labels, b, m, w);
        let mut grads = Grads::new(store);
        grads.get_mut(self.threshold).data_mut()[0] += db;
        let dv = self.out.backward(store, &mut grads, &c.out, &dr);
        for (inst, sc) in bag.instances.iter().zip(&c.sentences) {
            let s = sc.s();
            let ds: Vec<f64> = dv.iter().zip(&sc.gate.y).map(|(d, g)| d * g).collect();
            let dg: Vec<f64> = dv.iter().zip(&s).map(|(d, s)| d * s).collect();
            self.backward_sentence(store, &mut grads, inst, sc, &ds, &dg);
        }
        Ok((loss, grads))
    }

    /// Minibatch Adam over the bags; returns the mean loss of each epoch.
    pub fn train(&mut self, bags: &[TrainingBag]) -> Result<Vec<f64>> {
        if bags.is_empty() {
            return Err(Error::Empty("relation extractor training bags"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ 0xba65);
        let mut adam = Adam::new(self.cfg.learning_rate);
        let mut order: Vec<usize> = (0..bags.len()).collect();
        let mut losses = Vec::with_capacity(self.cfg.epochs);
        for epoch in 0..self.cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(self.cfg.batch_size) {
                let store = &self.store;
                let results = par::map(batch, |&i| self.bag_loss_grad(store, &bags[i]));
                let mut grads = Grads::new(&self.store);
                for r in results {
                    let (l, g) = r?;
                    total += l;
                    grads.add(&g);
                }
                grads.scale(1.0 / batch.len() as f64);
                adam.step(&mut self.store, &grads)?;
            }
            let mean = total / bags.len() as f64;
            if !mean.is_finite() {
                return Err(Error::NonFinite("relation extractor loss".into()));
            }
            log::debug!("relation extractor epoch {epoch}: loss {mean:.5}");
            losses.push(mean);
        }
        self.trained = true;
        Ok(losses)
    }

    /// Scores and predicted relation indices (`r_j > B`) for one bag.
    pub fn predict(&self, instances: &[Instance]) -> Result<BagPrediction> {
        if !self.trained {
            return Err(Error::NotTrained("relation extractor"));
        }
        self.predict_untrained(instances)
    }

    fn predict_untrained(&self, instances: &[Instance]) -> Result<BagPrediction> {
        let c = self.forward_bag(&self.store, instances)?;
        let b = self.threshold();
        let labels = c.out.y.iter().enumerate().filter(|(_, &r)| r > b).map(|(j, _)| j).collect();
        Ok(BagPrediction { scores: c.out.y, labels })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        if !self.trained {
            return Err(Error::NotTrained("relation extractor"));
        }
        Ok(Checkpoint::new(self.store.clone())
            .with_meta("config", vec![serde_json::to_string(&self.cfg)?])
            .with_meta("vocab", vec![serde_json::to_string(&self.vocab)?])
            .with_meta("word_dim", vec![self.word_dim.to_string()]))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let one = |key: &str| -> Result<String> {
            match ck.meta(key)? {
                [v] => Ok(v.clone()),
                _ => Err(Error::Checkpoint(format!("relation extractor `{key}` must be one item"))),
            }
        };
        let cfg: ReConfig = serde_json::from_str(&one("config")?)?;
        let vocab: Vocab = serde_json::from_str(&one("vocab")?)?;
        let wd = one("word_dim")?;
        let word_dim = wd.parse().map_err(|_| Error::Checkpoint(format!("bad word_dim `{wd}`")))?;
        let mut m = RelationExtractor::new(word_dim, vocab, cfg)?;
        m.store.load_from(&ck.store)?;
        m.trained = true;
        Ok(m)
    }

    #[cfg(test)]
    pub(crate) fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

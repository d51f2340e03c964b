//! Independent oracles shared by the integration tests and the acceptance
//! runner. Nothing here calls the code path it is used to check.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use kbc::corpus::{fallback_parse, sdp_adjacency, sdp_nodes, Anchor, LinkMethod, Sentence, Span};
use kbc::datagen::{distant_supervision, DistantConfig};
use kbc::kb::{Entity, EntityId, KnowledgeBase, RelationId, Triple};
use kbc::linker::{Candidate, CandidateSource};
use kbc::nn::conv::max_pool_backward;
use kbc::nn::{
    check_gradients, max_pool, Activation, BiLstm, Conv1d, GcnLayer, GradCheckReport, Grads, Mlp, ParamStore, Tensor,
};
use kbc::relex::{
    other_bucket, position_bucket, relative_position, sliding_margin_grad, sliding_margin_loss, Instance, ReConfig,
    RelationExtractor, TrainingBag, Vocab,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// sub-graph linking

/// Straight reading of the counting rule: a candidate scores one point per
/// candidate of every other span it shares a triple with (either
/// direction); a span links when its top score is positive and unique.
/// Works from the raw triple list, not the KB's indexes.
pub fn brute_force_link(candidates: &[Candidate], triples: &[Triple]) -> Vec<Option<EntityId>> {
    let related = |a: &EntityId, b: &EntityId| {
        triples.iter().any(|t| (&t.subject == a && &t.object == b) || (&t.subject == b && &t.object == a))
    };
    candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let scores: Vec<usize> = c
                .entities
                .iter()
                .map(|e| {
                    candidates
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, other)| other.entities.iter().filter(|f| related(e, f)).count())
                        .sum()
                })
                .collect();
            let best = *scores.iter().max()?;
            let winners: Vec<usize> = (0..scores.len()).filter(|&k| scores[k] == best).collect();
            (best > 0 && winners.len() == 1).then(|| c.entities[winners[0]].clone())
        })
        .collect()
}

/// A random KB of at most 50 entities and 2-5 spans with 1-6 distinct
/// candidates each.
pub fn random_link_case(rng: &mut ChaCha8Rng) -> (KnowledgeBase, Vec<Triple>, Vec<Candidate>) {
    let n = rng.gen_range(2..=50);
    let ids: Vec<String> = (0..n).map(|i| format!("E{i}")).collect();
    let entities: Vec<Entity> = ids.iter().map(|id| Entity::new(id.as_str(), "T", id.as_str())).collect();
    let density = rng.gen_range(0.0..0.3);
    let mut triples = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.gen_bool(density / 2.0) {
                triples.push(Triple::new(ids[a].as_str(), format!("r{}", rng.gen_range(0..3)), ids[b].as_str()));
            }
        }
    }
    let kb = KnowledgeBase::from_parts(entities, triples.clone(), Default::default()).unwrap();
    let words = (0..12).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
    let sentence = fallback_parse("s", &words).unwrap();
    let spans = rng.gen_range(2..=5);
    let candidates = (0..spans)
        .map(|i| {
            let k = rng.gen_range(1..=6.min(n));
            let mut pick: Vec<EntityId> = ids.choose_multiple(rng, k).map(|s| EntityId::new(s.as_str())).collect();
            pick.shuffle(rng);
            Candidate { span: sentence.span(2 * i, 2 * i), entities: pick, source: CandidateSource::Dictionary }
        })
        .collect();
    (kb, triples, candidates)
}

// ---------------------------------------------------------------------------
// distant supervision

#[derive(Debug, Default)]
pub struct SoundnessReport {
    pub labels_checked: usize,
    pub unsupported_labels: usize,
    pub positive_mentions: usize,
    pub unbagged_mentions: usize,
}

/// Checks bags built without a size cap against relations read straight
/// from the triple list.
pub fn distant_soundness(corpus: &[Sentence], kb: &KnowledgeBase) -> SoundnessReport {
    let mut truth: BTreeMap<(&EntityId, &EntityId), BTreeSet<&RelationId>> = BTreeMap::new();
    for t in kb.triples() {
        truth.entry((&t.subject, &t.object)).or_default().insert(&t.relation);
    }
    let cfg = DistantConfig { max_bag_size: usize::MAX, na_ratio: 0.0, seed: 0 };
    let bags = distant_supervision(corpus, kb, &cfg).unwrap();
    let mut r = SoundnessReport::default();
    let mut bagged: HashSet<(&EntityId, &EntityId, &str)> = HashSet::new();
    for b in &bags {
        for l in &b.labels {
            r.labels_checked += 1;
            if !truth.get(&(&b.subject, &b.object)).is_some_and(|set| set.contains(l)) {
                r.unsupported_labels += 1;
            }
        }
        for s in &b.sentences {
            bagged.insert((&b.subject, &b.object, s.as_str()));
        }
    }
    for s in corpus {
        let ents: BTreeSet<&EntityId> = s.spans.iter().filter_map(|sp| sp.entity.as_ref()).collect();
        for a in &ents {
            for b in &ents {
                if a != b && truth.contains_key(&(*a, *b)) {
                    r.positive_mentions += 1;
                    if !bagged.contains(&(*a, *b, s.id.as_str())) {
                        r.unbagged_mentions += 1;
                    }
                }
            }
        }
    }
    r
}

// ---------------------------------------------------------------------------
// gradient checks

const H: f64 = 1e-5;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::uniform(shape, 1.0, rng)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check(mut store: ParamStore, grads: &Grads, loss: impl Fn(&ParamStore) -> f64) -> GradCheckReport {
    check_gradients(&mut store, grads, &[], H, loss)
}

fn conv_point(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (de, dh, n) = (4, 3, 6);
    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(&mut rng, &[de, n]));
    let conv = Conv1d::new(&mut store, "conv", de, dh, 3, &mut rng);
    store.get_mut(conv.b).data_mut().iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
    let c = random_tensor(&mut rng, &[dh, n]);
    let mut g = Grads::new(&store);
    let dx = conv.backward(&store, &mut g, store.get(x), &c);
    g.get_mut(x).add_assign(&dx);
    check(store, &g, |st| dot(conv.forward(st, st.get(x)).unwrap().data(), c.data()))
}

/// Convolution, three max-pooled segments and tanh, as in the piecewise
/// sentence encoder.
fn piecewise_point(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (de, dh, n) = (4, 3, 8);
    let cuts = [0, rng.gen_range(1..4), rng.gen_range(4..7), n];
    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(&mut rng, &[de, n]));
    let conv = Conv1d::new(&mut store, "conv", de, dh, 3, &mut rng);
    let c: Vec<f64> = (0..3 * dh).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let forward = |st: &ParamStore| {
        let h = conv.forward(st, st.get(x)).unwrap();
        let mut pooled = Vec::new();
        let mut args = Vec::new();
        for k in 0..3 {
            let (v, a) = max_pool(&h, cuts[k]..cuts[k + 1]).unwrap();
            pooled.extend(v);
            args.push(a);
        }
        (Activation::Tanh.forward(&pooled), args)
    };
    let (y, args) = forward(&store);
    let dp = Activation::Tanh.backward(&y, &c);
    let mut dh_t = Tensor::zeros(&[dh, n]);
    for (k, a) in args.iter().enumerate() {
        max_pool_backward(&mut dh_t, a, &dp[k * dh..(k + 1) * dh]);
    }
    let mut g = Grads::new(&store);
    let dx = conv.backward(&store, &mut g, store.get(x), &dh_t);
    g.get_mut(x).add_assign(&dx);
    check(store, &g, |st| dot(&forward(st).0, &c))
}

fn lstm_point(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (de, hidden, n) = (3, 4, 5);
    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(&mut rng, &[de, n]));
    let lstm = BiLstm::new(&mut store, "lstm", de, hidden, &mut rng);
    let c: Vec<Vec<f64>> = (0..n).map(|_| (0..2 * hidden).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let loss = |st: &ParamStore| {
        let (out, _) = lstm.forward(st, &st.get(x).columns()).unwrap();
        out.iter().zip(&c).map(|(o, c)| dot(o, c)).sum::<f64>()
    };
    let (_, cache) = lstm.forward(&store, &store.get(x).columns()).unwrap();
    let mut g = Grads::new(&store);
    let dxs = lstm.backward(&store, &mut g, &cache, &c);
    g.get_mut(x).add_assign(&Tensor::from_columns(&dxs));
    check(store, &g, loss)
}

fn gcn_point(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, out, n) = (4, 3, 6);
    let s = fallback_parse("g", "a b c d e f").unwrap();
    let (i, j) = (rng.gen_range(0..2), rng.gen_range(3..n));
    let nodes = sdp_nodes(&s, &s.span(i, i), &s.span(j, j), Anchor::Last, true).unwrap();
    let adj = sdp_adjacency(&s, &nodes);
    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(&mut rng, &[d, n]));
    let gcn = GcnLayer::new(&mut store, "gcn", d, out, &mut rng);
    store.get_mut(gcn.b).data_mut().iter_mut().for_each(|b| *b = rng.gen_range(0.0..0.5));
    let c = random_tensor(&mut rng, &[out, n]);
    let (_, cache) = gcn.forward(&store, store.get(x), &adj).unwrap();
    let mut g = Grads::new(&store);
    let dx = gcn.backward(&store, &mut g, &cache, &adj, &c);
    g.get_mut(x).add_assign(&dx);
    check(store, &g, |st| dot(gcn.forward(st, st.get(x), &adj).unwrap().0.data(), c.data()))
}

fn mlp_point(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(&mut rng, &[6]));
    let mlp = Mlp::new(&mut store, "mlp", (6, 5, 3), (Activation::Relu, Activation::Sigmoid), &mut rng);
    let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let cache = mlp.forward(&store, store.get(x).data()).unwrap();
    let mut g = Grads::new(&store);
    let dx = mlp.backward(&store, &mut g, &cache, &c);
    g.get_mut(x).add_assign(&Tensor::vector(dx));
    check(store, &g, |st| dot(&mlp.forward(st, st.get(x).data()).unwrap().y, &c))
}

fn sliding_margin_point(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = 6;
    let gold: Vec<bool> = (0..k).map(|_| rng.gen_bool(0.5)).collect();
    let (margin, weight) = (0.1, 0.5);
    let mut store = ParamStore::new();
    let r = store.add("r", Tensor::vector((0..k).map(|_| rng.gen_range(0.05..0.95)).collect()));
    let b = store.add("b", Tensor::vector(vec![rng.gen_range(0.3..0.7)]));
    let (dr, db) = sliding_margin_grad(store.get(r).data(), &gold, store.get(b).data()[0], margin, weight);
    let mut g = Grads::new(&store);
    g.get_mut(r).add_assign(&Tensor::vector(dr));
    g.get_mut(b).data_mut()[0] = db;
    check(store, &g, |st| sliding_margin_loss(st.get(r).data(), &gold, st.get(b).data()[0], margin, weight))
}

pub fn small_vocab(relations: usize) -> Vocab {
    Vocab {
        relations: (0..relations).map(|i| RelationId::new(format!("r{i}"))).collect(),
        types: vec!["O".into(), "UNTYPED".into(), "A".into()],
        tags: vec!["UNK".into(), "NN".into()],
    }
}

pub fn small_re_config() -> ReConfig {
    ReConfig { position_dim: 2, type_dim: 2, tag_dim: 2, hidden: 4, max_position: 4, ..Default::default() }
}

/// A single-token-entity instance over `text` with random word vectors.
pub fn instance(id: &str, text: &str, subj: usize, obj: usize, word_dim: usize, seed: u64) -> Instance {
    let s = fallback_parse(id, text).unwrap();
    let n = s.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (s.span(subj, subj), s.span(obj, obj));
    let nodes = sdp_nodes(&s, &a, &b, Anchor::Last, true).unwrap();
    let m = 4;
    Instance {
        sentence_id: id.into(),
        words: Tensor::uniform(&[word_dim, n], 1.0, &mut rng),
        pos1: (0..n).map(|i| position_bucket(relative_position(i, &a), m)).collect(),
        pos2: (0..n).map(|i| position_bucket(relative_position(i, &b), m)).collect(),
        pos3: (0..n).map(|i| other_bucket((i % 3 == 0).then_some(i % 5), m)).collect(),
        types: (0..n).map(|i| if i == subj || i == obj { 2 } else { 0 }).collect(),
        tags: (0..n).map(|i| i % 2).collect(),
        subject: (subj, subj),
        object: (obj, obj),
        adjacency: sdp_adjacency(&s, &nodes),
    }
}

/// Two-sentence bag through the whole extractor; `only` restricts the check
/// to parameters whose name starts with the prefix.
fn model_point(seed: u64, only: Option<&str>) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ReConfig { seed, attention_over_tokens: rng.gen_bool(0.5), ..small_re_config() };
    let m = RelationExtractor::new(3, small_vocab(3), cfg).unwrap();
    let bag = TrainingBag {
        instances: vec![
            instance("a", "w0 w1 w2 w3", rng.gen_range(0..2), 3, 3, seed ^ 1),
            instance("b", "w0 w1 w2 w3 w4", 4, rng.gen_range(0..3), 3, seed ^ 2),
        ],
        labels: (0..3).map(|_| rng.gen_bool(0.5)).collect(),
    };
    let (_, g) = m.bag_loss_grad(m.store(), &bag).unwrap();
    let mut store = m.store().clone();
    let ids: Vec<_> = match only {
        Some(p) => store.ids().filter(|&id| store.param(id).name.starts_with(p)).collect(),
        None => Vec::new(),
    };
    check_gradients(&mut store, &g, &ids, H, |st| m.bag_loss(st, &bag).unwrap())
}

pub const GRADIENT_POINTS: u64 = 5;

/// Worst finite-difference error of each operation over
/// [`GRADIENT_POINTS`] random points.
pub fn gradient_suite() -> Vec<(&'static str, GradCheckReport)> {
    let ops: [(&'static str, &dyn Fn(u64) -> GradCheckReport); 8] = [
        ("conv1d", &conv_point),
        ("piecewise pooling", &piecewise_point),
        ("bilstm", &lstm_point),
        ("gcn layer", &gcn_point),
        ("selective gate", &|s| model_point(s, Some("gate."))),
        ("prediction mlp", &mlp_point),
        ("sliding-margin loss", &sliding_margin_point),
        ("full extractor", &|s| model_point(s, None)),
    ];
    ops.iter()
        .map(|(name, f)| {
            let mut total = GradCheckReport::default();
            for p in 0..GRADIENT_POINTS {
                total.merge(f(1000 + p));
            }
            (*name, total)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// misc fixtures

/// Linked copy of `s` with spans `(start, end, entity)`.
pub fn with_links(mut s: Sentence, links: &[(usize, usize, &str)]) -> Sentence {
    for &(a, b, e) in links {
        let mut sp: Span = s.span(a, b);
        sp.entity = Some(EntityId::new(e));
        sp.method = Some(LinkMethod::Subgraph);
        s.spans.push(sp);
    }
    s
}

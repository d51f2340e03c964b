//! Rayon-backed `par::map` against the plain sequential loop on the three
//! hot paths: k-NN candidate queries, sub-graph linking of a corpus and
//! relation-extractor bag gradients.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kbc::corpus::{Gazetteer, Sentence};
use kbc::datagen::{distant_supervision, DistantConfig};
use kbc::embeddings::{knn_candidates, train_joint_embeddings, train_node_embeddings, EmbeddingTable, SkipGramConfig};
use kbc::kb::KnowledgeBase;
use kbc::linker::{generate_candidates, subgraph_link, SubgraphConfig};
use kbc::par;
use kbc::relex::{training_bags, ReConfig, RelationExtractor, TrainingBag, Vocab};
use kbc::synth::{generate, SynthSpec};

struct Fixture {
    kb: KnowledgeBase,
    gaz: Gazetteer,
    table: EmbeddingTable,
    corpus: Vec<Sentence>,
    model: RelationExtractor,
    bags: Vec<TrainingBag>,
}

fn fixture() -> Fixture {
    let data = generate(&SynthSpec::default()).unwrap();
    let kb = data.kb().unwrap();
    let gaz = Gazetteer::from_kb(&kb, false);
    let sg = SkipGramConfig { epochs: 3, ..Default::default() };
    let (nodes, _) = train_node_embeddings(&kb, &sg).unwrap();
    let (table, _) = train_joint_embeddings(&data.train, &kb, &nodes, &sg).unwrap();
    let vocab = Vocab::build(&kb, &data.train);
    let model = RelationExtractor::new(table.dim(), vocab.clone(), ReConfig::default()).unwrap();
    let cfg = DistantConfig { max_bag_size: 8, ..Default::default() };
    let bags = distant_supervision(&data.train, &kb, &cfg).unwrap();
    let mut bags = training_bags(&bags, &data.train, &table, &kb, &vocab, ReConfig::default().max_position).unwrap();
    bags.truncate(128);
    Fixture { kb, gaz, table, corpus: data.train, model, bags }
}

fn link_sentence(f: &Fixture, s: &Sentence) -> usize {
    let cands: Vec<_> = s
        .spans
        .iter()
        .filter_map(|sp| generate_candidates(sp, &f.gaz, Some(&f.table), 10).unwrap())
        .collect();
    subgraph_link(&cands, &f.kb, SubgraphConfig::default()).iter().flatten().count()
}

fn bench(c: &mut Criterion) {
    let f = fixture();
    let names: Vec<String> = f.kb.entities().iter().map(|e| e.canonical_name.clone()).collect();

    let mut g = c.benchmark_group("knn");
    g.bench_function(BenchmarkId::new("sequential", names.len()), |b| {
        b.iter(|| par::map_sequential(&names, |n| knn_candidates(&f.table, n, 10).unwrap().len()))
    });
    g.bench_function(BenchmarkId::new("parallel", names.len()), |b| {
        b.iter(|| par::map(&names, |n| knn_candidates(&f.table, n, 10).unwrap().len()))
    });
    g.finish();

    let mut g = c.benchmark_group("subgraph_link");
    g.bench_function(BenchmarkId::new("sequential", f.corpus.len()), |b| {
        b.iter(|| par::map_sequential(&f.corpus, |s| link_sentence(&f, s)))
    });
    g.bench_function(BenchmarkId::new("parallel", f.corpus.len()), |b| {
        b.iter(|| par::map(&f.corpus, |s| link_sentence(&f, s)))
    });
    g.finish();

    let mut g = c.benchmark_group("bag_gradients");
    g.sample_size(10);
    let store = f.model.store();
    g.bench_function(BenchmarkId::new("sequential", f.bags.len()), |b| {
        b.iter(|| par::map_sequential(&f.bags, |bag| f.model.bag_loss_grad(store, bag).unwrap().0))
    });
    g.bench_function(BenchmarkId::new("parallel", f.bags.len()), |b| {
        b.iter(|| par::map(&f.bags, |bag| f.model.bag_loss_grad(store, bag).unwrap().0))
    });
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);

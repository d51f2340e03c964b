use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::corpus::{ingest_corpus, write_corpus, Gazetteer, LinkMethod, Sentence, Span};
use crate::datagen::{
    bootstrap_linked_corpus, distant_supervision, read_bags, split_dataset, write_bags, Bag, ClassifierTrainer,
    DistantConfig, GenerationRound,
};
use crate::embeddings::{train_joint_embeddings, train_node_embeddings, EmbeddingTable};
use crate::error::{Error, Result};
use crate::kb::{load_kb, read_triples, EntityId, KbOptions, KnowledgeBase, RelationId, Triple};
use crate::linker::{
    apply_decisions, generate_candidates, link, ContextItem, ContextLinker, GazetteerRecognizer, LinkDecision, Linker,
    Recognizer, SpanClassifier,
};
use crate::metrics::{eval_entity_linker, eval_relation_extractor, gold_links, MetricsReport, ReMetrics};
use crate::nn::Checkpoint;
use crate::par;
use crate::relex::{
    predict_triples, read_extracted, training_bags, validate_extracted, write_extracted, write_rejected, RelationExtractor,
    Vocab,
};

/// Artifact locations under the output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Layout { root: root.to_path_buf() }
    }
    fn at(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
    pub fn kb_entities(&self) -> PathBuf {
        self.at("kb/entities.tsv")
    }
    pub fn kb_triples(&self) -> PathBuf {
        self.at("kb/triples.tsv")
    }
    pub fn corpus(&self) -> PathBuf {
        self.at("corpus.jsonl")
    }
    pub fn heldout(&self) -> PathBuf {
        self.at("heldout.jsonl")
    }
    pub fn embeddings(&self) -> PathBuf {
        self.at("embeddings.txt")
    }
    pub fn linked_corpus(&self) -> PathBuf {
        self.at("linked_corpus.jsonl")
    }
    pub fn recognizer(&self) -> PathBuf {
        self.at("recognizer.ckpt")
    }
    pub fn rounds(&self) -> PathBuf {
        self.at("bootstrap_rounds.json")
    }
    pub fn context_linker(&self) -> PathBuf {
        self.at("context_linker.ckpt")
    }
    pub fn bags(&self, split: &str) -> PathBuf {
        self.at(&format!("bags/{split}.jsonl"))
    }
    pub fn relex(&self) -> PathBuf {
        self.at("relex.ckpt")
    }
    pub fn heldout_linked(&self) -> PathBuf {
        self.at("heldout_linked.jsonl")
    }
    pub fn heldout_links(&self) -> PathBuf {
        self.at("heldout_links.jsonl")
    }
    pub fn predicted(&self) -> PathBuf {
        self.at("predicted.tsv")
    }
    pub fn extracted(&self) -> PathBuf {
        self.at("extracted.tsv")
    }
    pub fn rejected(&self) -> PathBuf {
        self.at("rejected.tsv")
    }
    pub fn enriched_entities(&self) -> PathBuf {
        self.at("kb_enriched/entities.tsv")
    }
    pub fn enriched_triples(&self) -> PathBuf {
        self.at("kb_enriched/triples.tsv")
    }
    pub fn provenance(&self) -> PathBuf {
        self.at("kb_enriched/provenance.jsonl")
    }
    pub fn metrics(&self) -> PathBuf {
        self.at("metrics.json")
    }
}

pub const SPLITS: [&str; 3] = ["train", "valid", "test"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Embeddings,
    Bootstrap,
    TrainEl,
    GenBags,
    TrainRe,
    Extract,
    Validate,
    Enrich,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Ingest,
        Stage::Embeddings,
        Stage::Bootstrap,
        Stage::TrainEl,
        Stage::GenBags,
        Stage::TrainRe,
        Stage::Extract,
        Stage::Validate,
        Stage::Enrich,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Embeddings => "train-embeddings",
            Stage::Bootstrap => "bootstrap",
            Stage::TrainEl => "train-el",
            Stage::GenBags => "gen-bags",
            Stage::TrainRe => "train-re",
            Stage::Extract => "extract",
            Stage::Validate => "validate",
            Stage::Enrich => "enrich",
            Stage::Eval => "eval",
        }
    }

    pub fn enabled(self, cfg: &PipelineConfig) -> bool {
        let t = &cfg.stages;
        match self {
            Stage::Ingest => t.ingest,
            Stage::Embeddings => t.embeddings,
            Stage::Bootstrap => t.bootstrap,
            Stage::TrainEl => t.train_el,
            Stage::GenBags => t.gen_bags,
            Stage::TrainRe => t.train_re,
            Stage::Extract => t.extract,
            Stage::Validate => t.validate,
            Stage::Enrich => t.enrich,
            Stage::Eval => t.eval,
        }
    }

    /// Files whose content feeds the stage, labelled for the cache key.
    pub fn inputs(self, cfg: &PipelineConfig, l: &Layout) -> Vec<(String, PathBuf)> {
        let kb = || vec![("kb.entities".to_string(), l.kb_entities()), ("kb.triples".to_string(), l.kb_triples())];
        let mut v = match self {
            Stage::Ingest => {
                let p = &cfg.paths;
                let mut v = vec![
                    ("entities".to_string(), p.entities.clone()),
                    ("triples".to_string(), p.triples.clone()),
                    ("corpus".to_string(), p.corpus.clone()),
                ];
                if let Some(h) = &p.heldout_corpus {
                    v.push(("heldout".into(), h.clone()));
                }
                return v;
            }
            Stage::Embeddings => vec![("corpus".into(), l.corpus())],
            Stage::Bootstrap => vec![("corpus".into(), l.corpus()), ("embeddings".into(), l.embeddings())],
            Stage::TrainEl => vec![("embeddings".into(), l.embeddings()), ("linked".into(), l.linked_corpus())],
            Stage::GenBags => vec![("linked".into(), l.linked_corpus())],
            Stage::TrainRe => vec![
                ("embeddings".into(), l.embeddings()),
                ("linked".into(), l.linked_corpus()),
                ("bags.train".into(), l.bags("train")),
            ],
            Stage::Extract => vec![
                ("heldout".into(), l.heldout()),
                ("embeddings".into(), l.embeddings()),
                ("recognizer".into(), l.recognizer()),
                ("context".into(), l.context_linker()),
                ("relex".into(), l.relex()),
            ],
            Stage::Validate => vec![("predicted".into(), l.predicted())],
            Stage::Enrich => vec![("extracted".into(), l.extracted())],
            Stage::Eval => {
                let p = &cfg.paths;
                let mut v = vec![
                    ("embeddings".into(), l.embeddings()),
                    ("linked".into(), l.linked_corpus()),
                    ("rounds".into(), l.rounds()),
                    ("relex".into(), l.relex()),
                    ("bags.test".into(), l.bags("test")),
                    ("heldout.links".into(), l.heldout_links()),
                    ("extracted".into(), l.extracted()),
                    ("rejected".into(), l.rejected()),
                    ("enriched".into(), l.enriched_triples()),
                ];
                for (label, f) in [
                    ("gold.corpus", &p.gold_corpus),
                    ("gold.heldout", &p.gold_heldout),
                    ("reference", &p.reference_triples),
                ] {
                    if let Some(f) = f {
                        v.push((label.into(), f.clone()));
                    }
                }
                v
            }
        };
        v.extend(kb());
        v
    }

    pub fn outputs(self, l: &Layout) -> Vec<PathBuf> {
        match self {
            Stage::Ingest => vec![l.kb_entities(), l.kb_triples(), l.corpus(), l.heldout()],
            Stage::Embeddings => vec![l.embeddings()],
            Stage::Bootstrap => vec![l.linked_corpus(), l.recognizer(), l.rounds()],
            Stage::TrainEl => vec![l.context_linker()],
            Stage::GenBags => SPLITS.iter().map(|s| l.bags(s)).collect(),
            Stage::TrainRe => vec![l.relex()],
            Stage::Extract => vec![l.heldout_linked(), l.heldout_links(), l.predicted()],
            Stage::Validate => vec![l.extracted(), l.rejected()],
            Stage::Enrich => vec![l.enriched_entities(), l.enriched_triples(), l.provenance()],
            Stage::Eval => vec![l.metrics()],
        }
    }

    /// The configuration the stage depends on, serialised for the cache key.
    pub fn fingerprint(self, cfg: &PipelineConfig) -> Result<String> {
        let v = match self {
            Stage::Ingest | Stage::Validate | Stage::Enrich | Stage::Eval => serde_json::Value::Null,
            Stage::Embeddings => serde_json::to_value((&cfg.linking, &cfg.embeddings))?,
            Stage::Bootstrap => serde_json::to_value((&cfg.linking, &cfg.bootstrap))?,
            Stage::TrainEl => serde_json::to_value((&cfg.linking, &cfg.context))?,
            Stage::GenBags => serde_json::to_value((&cfg.distant, &cfg.split, cfg.split_seed()))?,
            Stage::TrainRe => serde_json::to_value(&cfg.relex)?,
            Stage::Extract => serde_json::to_value((&cfg.linking, &cfg.bootstrap.subgraph, &cfg.extract))?,
        };
        Ok(v.to_string())
    }

    pub fn run(self, cfg: &PipelineConfig, l: &Layout) -> Result<()> {
        match self {
            Stage::Ingest => ingest(cfg, l),
            Stage::Embeddings => embeddings(cfg, l),
            Stage::Bootstrap => bootstrap(cfg, l),
            Stage::TrainEl => train_el(cfg, l),
            Stage::GenBags => gen_bags(cfg, l),
            Stage::TrainRe => train_re(cfg, l),
            Stage::Extract => extract(cfg, l),
            Stage::Validate => validate(l),
            Stage::Enrich => enrich(l),
            Stage::Eval => eval(cfg, l).map(|_| ()),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Stage> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage `{s}`")))
    }
}

fn mkdirs(path: &Path) -> Result<()> {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => std::fs::create_dir_all(d).map_err(|e| Error::io(d, e)),
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    mkdirs(path)?;
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { file: path.display().to_string(), line: 0, msg: e.to_string() })
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    mkdirs(path)?;
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for it in items {
        writeln!(w, "{}", serde_json::to_string(it)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse { file: path.display().to_string(), line: n + 1, msg: e.to_string() })
        })
        .collect()
}

pub fn load_store(l: &Layout) -> Result<KnowledgeBase> {
    load_kb(&l.kb_entities(), &l.kb_triples(), KbOptions::default())
}

fn gazetteer(cfg: &PipelineConfig, kb: &KnowledgeBase) -> Gazetteer {
    Gazetteer::from_kb(kb, cfg.linking.normalize_aliases)
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(Error::Config(format!("paths.{what} is not set")));
    }
    Ok(())
}

fn unlinked(mut corpus: Vec<Sentence>) -> Vec<Sentence> {
    for s in &mut corpus {
        s.spans.clear();
    }
    corpus
}

fn ingest(cfg: &PipelineConfig, l: &Layout) -> Result<()> {
    ingest_kb(cfg, l)?;
    ingest_text(cfg, l).map(|_| ())
}

/// Loads and checks the KB files, then writes normalised copies.
pub fn ingest_kb(cfg: &PipelineConfig, l: &Layout) -> Result<KnowledgeBase> {
    let p = &cfg.paths;
    require(&p.entities, "entities")?;
    require(&p.triples, "triples")?;
    let kb = load_kb(&p.entities, &p.triples, KbOptions::default())?;
    mkdirs(&l.kb_entities())?;
    kb.write_entities(&l.kb_entities())?;
    kb.write_triples(&l.kb_triples())?;
    log::info!("ingested {} entities, {} triples", kb.num_entities(), kb.num_triples());
    Ok(kb)
}

/// Parses the training and held-out corpora and writes them without spans.
/// Returns the two sentence counts.
pub fn ingest_text(cfg: &PipelineConfig, l: &Layout) -> Result<(usize, usize)> {
    let p = &cfg.paths;
    require(&p.corpus, "corpus")?;
    let corpus = unlinked(ingest_corpus(&p.corpus)?);
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let heldout = match &p.heldout_corpus {
        Some(h) => unlinked(ingest_corpus(h)?),
        None => corpus.clone(),
    };
    mkdirs(&l.corpus())?;
    write_corpus(&l.corpus(), &corpus)?;
    write_corpus(&l.heldout(), &heldout)?;
    log::info!("ingested {} + {} sentences", corpus.len(), heldout.len());
    Ok((corpus.len(), heldout.len()))
}

/// Dictionary-tagged copy of `corpus` with only unambiguous mentions linked.
pub fn unambiguous_links(corpus: &[Sentence], kb: &KnowledgeBase, gaz: &Gazetteer) -> Result<Vec<Sentence>> {
    par::map(corpus, |s| -> Result<Sentence> {
        let mut t = s.clone();
        t.spans = GazetteerRecognizer.recognize(s, gaz, kb)?;
        for sp in &mut t.spans {
            if let Some(set) = gaz.lookup(&sp.surface).filter(|set| set.len() == 1) {
                sp.entity = set.iter().next().cloned();
            }
        }
        Ok(t)
    })
    .into_iter()
    .collect()
}

fn embeddings(cfg: &PipelineConfig, l: &Layout) -> Result<()> {
    let kb = load_store(l)?;
    let gaz = gazetteer(cfg, &kb);
    let corpus = ingest_corpus(&l.corpus())?;
    let (nodes, node_stats) = train_node_embeddings(&kb, &cfg.embeddings)?;
    if !node_stats.isolated.is_empty() {
        log::warn!("{} entities have no KB neighbours", node_stats.isolated.len());
    }
    let tagged = unambiguous_links(&corpus, &kb, &gaz)?;
    let (table, stats) = train_joint_embeddings(&tagged, &kb, &nodes, &cfg.embeddings)?;
    log::info!("joint embeddings: {} symbols, final loss {:?}", table.len(), stats.epoch_losses.last());
    table.save(&l.embeddings())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub rounds: Vec<GenerationRound>,
    pub best_round: usize,
}

fn bootstrap(cfg: &PipelineConfig, l: &Layout) -> Result<()> {
    let kb = load_store(l)?;
    let gaz = gazetteer(cfg, &kb);
    let table = EmbeddingTable::load(&l.embeddings())?;
    let raw = ingest_corpus(&l.corpus())?;
    let mut trainer = ClassifierTrainer { gazetteer: &gaz, config: cfg.bootstrap.classifier.clone() };
    let out = bootstrap_linked_corpus(&raw, &kb, &gaz, Some(&table), &cfg.bootstrap, &mut trainer)?;
    write_corpus(&l.linked_corpus(), &out.corpus)?;
    out.recognizer.to_checkpoint()?.save(&l.recognizer())?;
    write_json(&l.rounds(), &BootstrapSummary { rounds: out.rounds, best_round: out.best_round })
}

fn train_el(cfg: &PipelineConfig, l: &Layout) -> Result<()> {
    let kb = load_store(l)?;
    let gaz = gazetteer(cfg, &kb);
    let table = EmbeddingTable::load(&l.embeddings())?;
    let linked = ingest_corpus(&l.linked_corpus())?;
    let mut items = Vec::new();
    for s in &linked {
        for sp in s.linked_spans() {
            let gold = sp.entity.clone().expect("linked span");
            if table.entity(&gold).is_none() {
                continue;
            }
            let candidates = generate_candidates(sp, &gaz, Some(&table), cfg.linking.knn_k)?
                .map(|c| c.entities)
                .unwrap_or_default();
            items.push(ContextItem { sentence: s, span: sp.clone(), gold, candidates });
        }
    }
    let mut model = ContextLinker::new(table.dim(), cfg.context.clone())?;
    let losses = model.train(&items, &kb, &table)?;
    log::info!("context linker: {} items, final loss {:?}", items.len(), losses.last());
    model.to_checkpoint()?.save(&l.context_linker())
}

fn gen_bags(cfg: &PipelineConfig, l: &Layout) -> Result<()> {
    let kb = load_store(l)?;
    let linked = ingest_corpus(&l.linked_corpus())?;
    let bags = distant_supervision(&linked, &kb, &cfg.distant)?;
    let (train, valid, test) = split_dataset(&bags, cfg.split.ratios(), cfg.split_seed())?;
    mkdirs(&l.bags("train"))?;
    for (name, part) in SPLITS.iter().zip([&train, &valid, &test]) {
        write_bags(&l.bags(name), part)?;
    }
    log::info!("bags: {} train, {} valid, {} test", train.len(), valid.len(), test.len());
    Ok(())
}

fn train_re(cfg: &PipelineConfig, l: &Layout) -> Result<()> {
    let kb = load_store(l)?;
    let table = EmbeddingTable::load(&l.embeddings())?;
    let linked = ingest_corpus(&l.linked_corpus())?;
    let bags = read_bags(&l.bags("train"))?;
    let vocab = Vocab::build(&kb, &linked);
    let encoded = training_bags(&bags, &linked, &table, &kb, &vocab, cfg.relex.max_position)?;
    let mut model = RelationExtractor::new(table.dim(), vocab, cfg.relex.clone())?;
    let losses = model.train(&encoded)?;
    log::info!("relation extractor: {} bags, final loss {:?}", encoded.len(), losses.last());
    model.to_checkpoint()?.save(&l.relex())
}

/// One linking decision on the held-out corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub sentence_id: String,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub entity: EntityId,
    pub method: LinkMethod,
    pub score: f64,
    pub ranking: Vec<(EntityId, f64)>,
}

impl LinkRecord {
    fn new(sentence_id: &str, d: &LinkDecision) -> Self {
        LinkRecord {
            sentence_id: sentence_id.to_string(),
            start: d.span.start,
            end: d.span.end,
            surface: d.span.surface.clone(),
            entity: d.entity.clone(),
            method: d.method,
            score: d.score,
            ranking: d.ranking.clone(),
        }
    }

    fn decision(&self) -> (String, LinkDecision) {
        let span = Span {
            start: self.start,
            end: self.end,
            surface: self.surface.clone(),
            span_type: None,
            entity: None,
            method: None,
        };
        let d = LinkDecision {
            span,
            entity: self.entity.clone(),
            method: self.method,
            score: self.score,
            ranking: self.ranking.clone(),
        };
        (self.sentence_id.clone(), d)
    }
}

fn extract(cfg: &PipelineConfig, l: &Layout) -> Result<()> {
    let kb = load_store(l)?;
    let gaz = gazetteer(cfg, &kb);
    let table = EmbeddingTable::load(&l.embeddings())?;
    let heldout = ingest_corpus(&l.heldout())?;
    let recognizer = SpanClassifier::from_checkpoint(&Checkpoint::load(&l.recognizer())?)?;
    let context = ContextLinker::from_checkpoint(&Checkpoint::load(&l.context_linker())?)?;
    let model = RelationExtractor::from_checkpoint(&Checkpoint::load(&l.relex())?)?;
    let linker = Linker {
        kb: &kb,
        gazetteer: &gaz,
        table: Some(&table),
        model: Some(&context),
        k: cfg.linking.knn_k,
        subgraph: cfg.bootstrap.subgraph,
    };
    let results = par::map(&heldout, |s| link(s, &linker, &recognizer).map(|d| (apply_decisions(s, &d), d)));
    let mut linked = Vec::with_capacity(heldout.len());
    let mut records = Vec::new();
    for r in results {
        let (s, decisions) = r?;
        records.extend(decisions.iter().map(|d| LinkRecord::new(&s.id, d)));
        linked.push(s);
    }
    write_corpus(&l.heldout_linked(), &linked)?;
    write_jsonl(&l.heldout_links(), &records)?;
    let triples = predict_triples(&linked, &kb, &model, &table, &cfg.extract)?;
    log::info!("extract: {} links, {} candidate triples", records.len(), triples.len());
    write_extracted(&l.predicted(), &triples)
}

fn validate(l: &Layout) -> Result<()> {
    let kb = load_store(l)?;
    let template = kb.build_fact_type_templates();
    let out = validate_extracted(read_extracted(&l.predicted())?, &kb, &template)?;
    log::info!("validate: {} accepted, {} rejected", out.accepted.len(), out.rejected.len());
    write_extracted(&l.extracted(), &out.accepted)?;
    write_rejected(&l.rejected(), &out.rejected)
}

fn enrich(l: &Layout) -> Result<()> {
    let mut kb = load_store(l)?;
    let mut seen = HashSet::new();
    let new: Vec<_> = read_extracted(&l.extracted())?
        .into_iter()
        .filter(|t| !kb.contains_triple(&t.triple()) && seen.insert(t.triple()))
        .collect();
    let triples: Vec<Triple> = new.iter().map(|t| t.triple()).collect();
    let added = kb.add_triples(&triples)?;
    log::info!("enrich: {added} triples added, {} total", kb.num_triples());
    mkdirs(&l.enriched_entities())?;
    kb.write_entities(&l.enriched_entities())?;
    kb.write_triples(&l.enriched_triples())?;
    write_jsonl(&l.provenance(), &new)
}

fn predicted_labels(
    bags: &[Bag],
    corpus: &[Sentence],
    kb: &KnowledgeBase,
    table: &EmbeddingTable,
    model: &RelationExtractor,
) -> Result<ReMetrics> {
    let vocab = model.vocab();
    let index: HashMap<&str, &Sentence> = corpus.iter().map(|s| (s.id.as_str(), s)).collect();
    let preds = par::map(bags, |b| -> Result<BTreeSet<RelationId>> {
        let inst = crate::relex::encode_bag(b, &index, table, kb, vocab, model.config().max_position)?;
        let p = model.predict(&inst)?;
        Ok(p.labels.iter().map(|&j| vocab.relations[j].clone()).collect())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let gold: Vec<BTreeSet<RelationId>> = bags.iter().map(|b| b.labels.clone()).collect();
    eval_relation_extractor(&preds, &gold)
}

/// Computes every metric the available inputs allow and writes
/// `metrics.json`.
pub fn eval(cfg: &PipelineConfig, l: &Layout) -> Result<MetricsReport> {
    let kb = load_store(l)?;
    let table = EmbeddingTable::load(&l.embeddings())?;
    let model = RelationExtractor::from_checkpoint(&Checkpoint::load(&l.relex())?)?;
    let linked = ingest_corpus(&l.linked_corpus())?;
    let summary: BootstrapSummary = read_json(&l.rounds())?;
    let p = &cfg.paths;
    let mut r = MetricsReport { bootstrap_rounds: summary.rounds, ..Default::default() };

    if let Some(gc) = &p.gold_corpus {
        let gold = ingest_corpus(gc)?;
        let decisions: Vec<(String, LinkDecision)> = linked
            .iter()
            .flat_map(|s| {
                s.linked_spans().map(move |sp| {
                    let d = LinkDecision {
                        span: sp.clone(),
                        entity: sp.entity.clone().expect("linked span"),
                        method: sp.method.unwrap_or(LinkMethod::Subgraph),
                        score: 1.0,
                        ranking: Vec::new(),
                    };
                    (s.id.clone(), d)
                })
            })
            .collect();
        r.entity_linking = Some(eval_entity_linker(&decisions, &gold_links(&gold)));
    }

    let links: Vec<LinkRecord> = read_jsonl(&l.heldout_links())?;
    let reference = match &p.reference_triples {
        Some(f) => {
            let known: HashSet<&str> = kb.entities().iter().map(|e| e.id.as_str()).collect();
            Some(read_triples(f, &known, KbOptions::default())?)
        }
        None => None,
    };
    if let Some(gh) = &p.gold_heldout {
        let gold = ingest_corpus(gh)?;
        let decisions: Vec<_> = links.iter().map(LinkRecord::decision).collect();
        r.heldout_linking = Some(eval_entity_linker(&decisions, &gold_links(&gold)));
        if let Some(reference) = &reference {
            let mut truth = kb.clone();
            truth.add_triples(reference)?;
            let all = DistantConfig { max_bag_size: usize::MAX, na_ratio: f64::INFINITY, seed: 0 };
            let bags = distant_supervision(&gold, &truth, &all)?;
            if !bags.is_empty() {
                r.relation_extraction = Some(predicted_labels(&bags, &gold, &kb, &table, &model)?);
            }
        }
    }

    let test = read_bags(&l.bags("test"))?;
    if !test.is_empty() {
        r.relation_extraction_split = Some(predicted_labels(&test, &linked, &kb, &table, &model)?);
    }

    let accepted = read_extracted(&l.extracted())?;
    let new: BTreeSet<Triple> = accepted.iter().map(|t| t.triple()).filter(|t| !kb.contains_triple(t)).collect();
    if let Some(reference) = &reference {
        let reference: BTreeSet<&Triple> = reference.iter().collect();
        if !new.is_empty() {
            r.triple_precision = Some(new.iter().filter(|t| reference.contains(t)).count() as f64 / new.len() as f64);
        }
    }

    let count = |path: &Path| -> Result<usize> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(text.lines().filter(|l| !l.trim().is_empty()).count())
    };
    let c = &mut r.counts;
    c.insert("kb_entities".into(), kb.num_entities());
    c.insert("kb_triples".into(), kb.num_triples());
    c.insert("corpus_sentences".into(), count(&l.corpus())?);
    c.insert("heldout_sentences".into(), count(&l.heldout())?);
    c.insert("linked_sentences".into(), linked.len());
    for s in SPLITS {
        c.insert(format!("bags_{s}"), count(&l.bags(s))?);
    }
    c.insert("heldout_links".into(), links.len());
    c.insert("extracted_triples".into(), accepted.len());
    c.insert("rejected_triples".into(), count(&l.rejected())?);
    c.insert("new_triples".into(), new.len());
    c.insert("enriched_kb_triples".into(), count(&l.enriched_triples())?);

    std::fs::write(l.metrics(), r.to_json()? + "\n").map_err(|e| Error::io(l.metrics(), e))?;
    Ok(r)
}

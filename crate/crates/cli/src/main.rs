use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kbc::pipeline::{self, Layout, PipelineConfig, Stage};
use kbc::synth;

#[derive(Parser)]
#[command(name = "kbc", version, about = "Build and enrich a knowledge base from text")]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Ignore the stage cache.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Load and check the KB files, writing normalised copies.
    IngestKb {
        #[arg(long)]
        entities: Option<PathBuf>,
        #[arg(long)]
        triples: Option<PathBuf>,
    },
    /// Parse the training and held-out corpora.
    IngestCorpus {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        heldout: Option<PathBuf>,
    },
    /// Generate a synthetic KB and corpus plus a matching run configuration
    /// (model settings are kept; k-NN candidate lists are cut to 1).
    Synth {
        /// Where to write the data (default: <out>/data).
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Train KB node embeddings, then joint word/entity embeddings.
    TrainEmbeddings(StageArgs),
    /// Self-train a recognizer and produce the entity-linked corpus.
    Bootstrap(StageArgs),
    /// Train the context ranker for mentions sub-graph linking leaves open.
    TrainEl(StageArgs),
    /// Distant supervision and the train/valid/test split.
    GenBags(StageArgs),
    /// Train the relation extractor.
    TrainRe(StageArgs),
    /// Link the held-out corpus and predict triples.
    Extract(StageArgs),
    /// Check predicted triples against KB type signatures.
    Validate(StageArgs),
    /// Add accepted triples to a copy of the KB.
    Enrich(StageArgs),
    /// Compute metrics; prints the report as JSON.
    Eval(StageArgs),
    /// Run every enabled stage, skipping those whose inputs are unchanged.
    RunAll {
        /// Rerun every enabled stage regardless of the cache.
        #[arg(long)]
        force: bool,
        /// Generate synthetic data first when no input paths are configured.
        #[arg(long)]
        synthetic: bool,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg = cfg.with_seed(s);
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn print_metrics(cfg: &PipelineConfig) -> Result<()> {
    let path = Layout::new(&cfg.out_dir).metrics();
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    print!("{text}");
    Ok(())
}

/// Writes synthetic data to `dir` and points `cfg` at it.
fn synthesize(cfg: &mut PipelineConfig, dir: &Path) -> Result<PathBuf> {
    let data = synth::generate(&cfg.synth)?;
    data.write(dir)?;
    let dir = std::path::absolute(dir)?;
    let out = std::path::absolute(&cfg.out_dir)?;
    *cfg = cfg.clone().with_synthetic_inputs(&dir, &out);
    let run = dir.join("run.toml");
    std::fs::write(&run, cfg.to_toml()?)?;
    Ok(run)
}

fn stage(cfg: &PipelineConfig, s: Stage, args: &StageArgs) -> Result<()> {
    let ran = kbc::par::with_threads(cfg.threads, || pipeline::run_stage(cfg, s, args.force))?;
    if !ran {
        eprintln!("{s}: up to date (use --force to rerun)");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let layout = Layout::new(&cfg.out_dir);
    match &cli.command {
        Command::IngestKb { entities, triples } => {
            if let Some(e) = entities {
                cfg.paths.entities = e.clone();
            }
            if let Some(t) = triples {
                cfg.paths.triples = t.clone();
            }
            let kb = pipeline::ingest_kb(&cfg, &layout)?;
            println!("{} entities, {} triples, {} relations", kb.num_entities(), kb.num_triples(), kb.relations().len());
        }
        Command::IngestCorpus { corpus, heldout } => {
            if let Some(c) = corpus {
                cfg.paths.corpus = c.clone();
            }
            if heldout.is_some() {
                cfg.paths.heldout_corpus = heldout.clone();
            }
            let (n, h) = pipeline::ingest_text(&cfg, &layout)?;
            println!("{n} training sentences, {h} held-out sentences");
        }
        Command::Synth { dir } => {
            let dir = dir.clone().unwrap_or_else(|| cfg.out_dir.join("data"));
            let run = synthesize(&mut cfg, &dir)?;
            println!("wrote {} (run with: kbc --config {} run-all)", dir.display(), run.display());
        }
        Command::TrainEmbeddings(a) => stage(&cfg, Stage::Embeddings, a)?,
        Command::Bootstrap(a) => stage(&cfg, Stage::Bootstrap, a)?,
        Command::TrainEl(a) => stage(&cfg, Stage::TrainEl, a)?,
        Command::GenBags(a) => stage(&cfg, Stage::GenBags, a)?,
        Command::TrainRe(a) => stage(&cfg, Stage::TrainRe, a)?,
        Command::Extract(a) => stage(&cfg, Stage::Extract, a)?,
        Command::Validate(a) => stage(&cfg, Stage::Validate, a)?,
        Command::Enrich(a) => stage(&cfg, Stage::Enrich, a)?,
        Command::Eval(a) => {
            stage(&cfg, Stage::Eval, a)?;
            print_metrics(&cfg)?;
        }
        Command::RunAll { force, synthetic } => {
            if *synthetic {
                if !cfg.paths.entities.as_os_str().is_empty() {
                    bail!("--synthetic conflicts with configured input paths");
                }
                let dir = cfg.out_dir.join("data");
                synthesize(&mut cfg, &dir)?;
            }
            if *force {
                let cache = pipeline::StageCache::new(&cfg.out_dir);
                for s in Stage::ALL {
                    cache.invalidate(s.name());
                }
            }
            let t0 = std::time::Instant::now();
            let r = pipeline::run_pipeline(&cfg)?;
            let names = |v: &[Stage]| v.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ");
            eprintln!("executed: [{}]  cached: [{}]  in {:.1}s", names(&r.executed), names(&r.cached), t0.elapsed().as_secs_f64());
            if cfg.stages.eval {
                print_metrics(&cfg)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

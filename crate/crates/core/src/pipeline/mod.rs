//! End-to-end orchestration: file-based stages with a content-hash cache,
//! a TOML run configuration and the metrics report.

mod benchmark;
mod cache;
mod config;
mod stages;

pub use benchmark::{
    benchmark_dir_from_env, load_benchmark, Benchmark, BenchmarkInstance, BENCHMARK_ENV, EXPECTED_KB_TRIPLES,
    EXPECTED_TEST_SENTENCES,
};
pub use cache::{stage_key, StageCache};
pub use config::{InputPaths, LinkingConfig, PipelineConfig, SplitConfig, StageToggles};
pub use stages::{eval, ingest_kb, ingest_text, load_store, unambiguous_links, BootstrapSummary, Layout, LinkRecord, Stage, SPLITS};

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::par;

/// What one call to [`run_pipeline`] did.
#[derive(Debug, Default)]
pub struct PipelineRun {
    pub executed: Vec<Stage>,
    pub cached: Vec<Stage>,
    pub disabled: Vec<Stage>,
    /// Read back from `metrics.json` when it exists.
    pub report: Option<MetricsReport>,
}

/// Runs one stage unless its cache entry is fresh (or `force` is set).
/// Returns whether the stage executed.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage, force: bool) -> Result<bool> {
    let wrap = |e: Error| Error::Stage { stage: stage.name(), source: Box::new(e) };
    let layout = Layout::new(&cfg.out_dir);
    let cache = StageCache::new(&cfg.out_dir);
    let key = stage_key(stage.name(), &stage.fingerprint(cfg).map_err(wrap)?, &stage.inputs(cfg, &layout)).map_err(wrap)?;
    if !force && cache.is_fresh(stage.name(), &key, &stage.outputs(&layout)) {
        log::info!("{stage}: up to date");
        return Ok(false);
    }
    cache.invalidate(stage.name());
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| wrap(Error::io(&cfg.out_dir, e)))?;
    let t0 = std::time::Instant::now();
    stage.run(cfg, &layout).map_err(wrap)?;
    log::info!("{stage}: done in {:.1}s", t0.elapsed().as_secs_f64());
    cache.record(stage.name(), &key).map_err(wrap)?;
    Ok(true)
}

/// Runs every enabled stage in order inside a pool of `cfg.threads`
/// workers.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    par::with_threads(cfg.threads, || {
        let mut run = PipelineRun::default();
        for stage in Stage::ALL {
            if !stage.enabled(cfg) {
                run.disabled.push(stage);
            } else if run_stage(cfg, stage, false)? {
                run.executed.push(stage);
            } else {
                run.cached.push(stage);
            }
        }
        let metrics = Layout::new(&cfg.out_dir).metrics();
        if metrics.is_file() {
            let text = std::fs::read_to_string(&metrics).map_err(|e| Error::io(&metrics, e))?;
            run.report = Some(serde_json::from_str(&text)?);
        }
        Ok(run)
    })
}

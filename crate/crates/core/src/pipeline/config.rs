use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{BootstrapConfig, DistantConfig};
use crate::embeddings::SkipGramConfig;
use crate::error::{Error, Result};
use crate::linker::ContextLinkerConfig;
use crate::relex::{ExtractConfig, ReConfig};
use crate::synth::SynthSpec;

/// Input files. Relative paths in a config file are resolved against the
/// file's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub entities: PathBuf,
    pub triples: PathBuf,
    /// Training text, JSONL. Existing spans are ignored.
    pub corpus: PathBuf,
    /// Text to extract new facts from; defaults to `corpus`.
    pub heldout_corpus: Option<PathBuf>,
    /// Gold-linked copy of `corpus`, for linking metrics.
    pub gold_corpus: Option<PathBuf>,
    /// Gold-linked copy of `heldout_corpus`.
    pub gold_heldout: Option<PathBuf>,
    /// Facts absent from the KB that extraction should recover.
    pub reference_triples: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub ingest: bool,
    pub embeddings: bool,
    pub bootstrap: bool,
    pub train_el: bool,
    pub gen_bags: bool,
    pub train_re: bool,
    pub extract: bool,
    pub validate: bool,
    pub enrich: bool,
    pub eval: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            ingest: true,
            embeddings: true,
            bootstrap: true,
            train_el: true,
            gen_bags: true,
            train_re: true,
            extract: true,
            validate: true,
            enrich: true,
            eval: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkingConfig {
    /// Nearest-neighbour candidates per mention for context training and
    /// held-out linking.
    pub knn_k: usize,
    pub normalize_aliases: bool,
}

impl Default for LinkingConfig {
    fn default() -> Self {
        LinkingConfig { knn_k: 10, normalize_aliases: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { train: 0.8, valid: 0.1, test: 0.1 }
    }
}

impl SplitConfig {
    pub fn ratios(&self) -> [f64; 3] {
        [self.train, self.valid, self.test]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Every stochastic component derives its seed from this one.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads, 0 = one per core.
    pub threads: usize,
    pub paths: InputPaths,
    pub stages: StageToggles,
    pub linking: LinkingConfig,
    pub embeddings: SkipGramConfig,
    pub bootstrap: BootstrapConfig,
    pub context: ContextLinkerConfig,
    pub distant: DistantConfig,
    pub split: SplitConfig,
    pub relex: ReConfig,
    pub extract: ExtractConfig,
    /// Used by `synth` and by end-to-end runs on generated data.
    pub synth: SynthSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            out_dir: PathBuf::from("out"),
            threads: 0,
            paths: InputPaths::default(),
            stages: StageToggles::default(),
            linking: LinkingConfig::default(),
            embeddings: SkipGramConfig::default(),
            bootstrap: BootstrapConfig::default(),
            context: ContextLinkerConfig::default(),
            distant: DistantConfig::default(),
            split: SplitConfig::default(),
            relex: ReConfig::default(),
            extract: ExtractConfig::default(),
            synth: SynthSpec::default(),
        }
        .reseeded()
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() && !p.as_os_str().is_empty() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg = cfg.reseeded();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.paths;
        for f in [&mut p.entities, &mut p.triples, &mut p.corpus, &mut cfg.out_dir] {
            rebase(base, f);
        }
        for f in [&mut p.heldout_corpus, &mut p.gold_corpus, &mut p.gold_heldout, &mut p.reference_triples]
            .into_iter()
            .flatten()
        {
            rebase(base, f);
        }
        Ok(cfg)
    }

    /// Overwrites every component seed with one derived from `seed`.
    pub fn reseeded(mut self) -> Self {
        let s = self.seed;
        self.embeddings.seed = s.wrapping_add(1);
        self.bootstrap.classifier.seed = s.wrapping_add(2);
        self.context.seed = s.wrapping_add(3);
        self.distant.seed = s.wrapping_add(4);
        self.relex.seed = s.wrapping_add(5);
        self.synth.seed = s.wrapping_add(6);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.reseeded()
    }

    /// Seed of the bag split.
    pub fn split_seed(&self) -> u64 {
        self.seed.wrapping_add(7)
    }

    pub fn validate(&self) -> Result<()> {
        self.embeddings.validate()?;
        self.relex.validate()?;
        let r = self.split.ratios();
        if r.iter().any(|x| *x < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios {r:?} must be non-negative and sum to 1")));
        }
        if self.extract.max_bag_size == 0 || self.distant.max_bag_size == 0 {
            return Err(Error::Config("bag sizes must be positive".into()));
        }
        if self.bootstrap.max_rounds == 0 {
            return Err(Error::Config("bootstrap needs at least one round".into()));
        }
        Ok(())
    }

    /// Configuration for a run over a generated dataset in `data_dir`.
    pub fn for_synthetic(data_dir: &Path, out_dir: &Path, spec: SynthSpec, seed: u64) -> Self {
        PipelineConfig { synth: spec, ..Default::default() }.with_seed(seed).with_synthetic_inputs(data_dir, out_dir)
    }

    /// Points the inputs at a generated dataset in `data_dir`, keeping every
    /// model setting.
    pub fn with_synthetic_inputs(mut self, data_dir: &Path, out_dir: &Path) -> Self {
        let files = crate::synth::SynthFiles::in_dir(data_dir);
        self.out_dir = out_dir.to_path_buf();
        self.paths = InputPaths {
            entities: files.entities,
            triples: files.triples,
            corpus: files.corpus,
            heldout_corpus: Some(files.heldout_corpus),
            gold_corpus: Some(files.gold_corpus),
            gold_heldout: Some(files.gold_heldout),
            reference_triples: Some(files.heldout_triples),
        };
        // Name words sit next to their KB neighbours in the joint space, so
        // wide k-NN lists hand sub-graph counting the swapped reading of
        // every related pair. Every synthetic mention is in the dictionary.
        self.linking.knn_k = 1;
        self.bootstrap.knn_k = 1;
        self
    }
}

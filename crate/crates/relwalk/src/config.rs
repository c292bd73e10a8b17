//! JSON run configuration. Relative paths are resolved against the directory
//! of the config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use relwalk_core::eval::LogisticRegression;
use relwalk_core::extension::{ExtensionConfig, PartnerMode, TargetMode};
use relwalk_core::selection::{SamplingParams, StrategyId};
use relwalk_core::{Database, Kernel, Kernels, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::exit::UsageError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub relation: String,
    pub attribute: String,
}

/// Trainer hyperparameters; the seed comes from the run's seed list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub dim: usize,
    pub n_samples: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub retry_cap: usize,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainerSection {
            dim: d.dim,
            n_samples: d.n_samples,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            retry_cap: d.retry_cap,
        }
    }
}

impl TrainerSection {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            n_samples: self.n_samples,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed,
            retry_cap: self.retry_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelOverride {
    pub relation: String,
    pub attribute: String,
    /// Bandwidth of the Gaussian kernel of a numeric attribute.
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSection {
    /// Walks per walk scheme for the mutual-information strategy.
    pub walk_budget: usize,
    /// Quadruples per scheme for kernel variance; `None` uses 10% of an
    /// epoch's per-scheme samples.
    pub pair_budget: Option<usize>,
    pub facts_per_scheme: usize,
    pub sampling_epochs: usize,
    /// Trainer used by the one-epoch and sampling strategies; `None` reuses
    /// the main trainer settings.
    pub light_trainer: Option<TrainerSection>,
}

impl Default for ScoringSection {
    fn default() -> Self {
        let s = SamplingParams::default();
        ScoringSection {
            walk_budget: 1000,
            pair_budget: None,
            facts_per_scheme: s.facts_per_scheme,
            sampling_epochs: s.epochs,
            light_trainer: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineSection {
    pub per_epoch_removals: usize,
    pub invert: bool,
}

impl Default for OnlineSection {
    fn default() -> Self {
        OnlineSection {
            per_epoch_removals: 1,
            invert: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtensionSection {
    pub partners_per_scheme: usize,
    pub samples_per_partner: usize,
    pub lambda: f64,
    pub retry_cap: usize,
    pub all_partners: bool,
    pub exact_targets: bool,
}

impl Default for ExtensionSection {
    fn default() -> Self {
        let d = ExtensionConfig::default();
        ExtensionSection {
            partners_per_scheme: d.partners_per_scheme,
            samples_per_partner: d.samples_per_partner,
            lambda: d.lambda,
            retry_cap: d.retry_cap,
            all_partners: false,
            exact_targets: false,
        }
    }
}

impl ExtensionSection {
    pub fn with_seed(&self, seed: u64) -> ExtensionConfig {
        ExtensionConfig {
            partners_per_scheme: self.partners_per_scheme,
            samples_per_partner: self.samples_per_partner,
            lambda: self.lambda,
            seed,
            retry_cap: self.retry_cap,
            partners: if self.all_partners {
                PartnerMode::All
            } else {
                PartnerMode::Sampled
            },
            targets: if self.exact_targets {
                TargetMode::Exact
            } else {
                TargetMode::Sampled
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub l2: f64,
    pub learning_rate: f64,
    pub iterations: usize,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let d = LogisticRegression::default();
        ClassifierSection {
            l2: d.l2,
            learning_rate: d.learning_rate,
            iterations: d.iterations,
        }
    }
}

impl ClassifierSection {
    pub fn build(&self) -> LogisticRegression {
        LogisticRegression {
            l2: self.l2,
            learning_rate: self.learning_rate,
            iterations: self.iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicSection {
    /// Fractions of labelled task facts deleted before training.
    pub fractions: Vec<f64>,
}

impl Default for DynamicSection {
    fn default() -> Self {
        DynamicSection {
            fractions: (1..=9).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

fn default_version() -> u32 {
    CONFIG_VERSION
}
fn default_l_max() -> usize {
    3
}
fn default_strategies() -> Vec<String> {
    vec!["kvar".to_string()]
}
fn default_ratios() -> Vec<f64> {
    vec![1.0]
}
fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_folds() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub dataset_dir: PathBuf,
    pub schema: PathBuf,
    pub task: TaskConfig,
    #[serde(default = "default_l_max")]
    pub l_max: usize,
    #[serde(default)]
    pub trainer: TrainerSection,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
    #[serde(default = "default_ratios")]
    pub ratios: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub kernels: Vec<KernelOverride>,
    #[serde(default)]
    pub scoring: ScoringSection,
    #[serde(default)]
    pub online: OnlineSection,
    #[serde(default)]
    pub extension: ExtensionSection,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub dynamic: DynamicSection,
}

impl RunConfig {
    /// A config for `dataset_dir` and `schema` with every other field at
    /// its default.
    pub fn new(dataset_dir: PathBuf, schema: PathBuf, task: TaskConfig) -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            dataset_dir,
            schema,
            task,
            l_max: default_l_max(),
            trainer: TrainerSection::default(),
            strategies: default_strategies(),
            ratios: default_ratios(),
            seeds: default_seeds(),
            folds: default_folds(),
            split_seed: 0,
            kernels: Vec::new(),
            scoring: ScoringSection::default(),
            online: OnlineSection::default(),
            extension: ExtensionSection::default(),
            classifier: ClassifierSection::default(),
            dynamic: DynamicSection::default(),
        }
    }

    /// Parses `bytes`, resolving relative paths against `base`.
    pub fn parse(bytes: &[u8], base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_slice(bytes).context("parsing run config")?;
        if cfg.version != CONFIG_VERSION {
            bail!(
                "run config version {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            );
        }
        if cfg.dataset_dir.is_relative() {
            cfg.dataset_dir = base.join(&cfg.dataset_dir);
        }
        if cfg.schema.is_relative() {
            cfg.schema = base.join(&cfg.schema);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; also returns its raw bytes for hashing.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::parse(&bytes, base).with_context(|| format!("in {}", path.display()))?;
        Ok((cfg, bytes))
    }

    pub fn validate(&self) -> Result<()> {
        self.trainer.with_seed(0).validate()?;
        if let Some(light) = &self.scoring.light_trainer {
            light.with_seed(0).validate()?;
        }
        self.strategy_ids()?;
        if self.ratios.is_empty() || self.ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            bail!(UsageError("ratios must be non-empty and lie in (0, 1]".to_string()));
        }
        if self.seeds.is_empty() {
            bail!(UsageError("at least one seed is required".to_string()));
        }
        if self.folds < 2 {
            bail!(UsageError("folds must be >= 2".to_string()));
        }
        if self.scoring.walk_budget == 0 || self.scoring.sampling_epochs == 0 {
            bail!(UsageError("walk budget and sampling epochs must be positive".to_string()));
        }
        if self.dynamic.fractions.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            bail!(UsageError("dynamic fractions must lie in (0, 1)".to_string()));
        }
        self.extension.with_seed(0).validate()?;
        Ok(())
    }

    pub fn strategy_ids(&self) -> Result<Vec<StrategyId>> {
        if self.strategies.is_empty() {
            bail!(UsageError("no strategy configured".to_string()));
        }
        self.strategies
            .iter()
            .map(|s| s.parse::<StrategyId>().map_err(|e| UsageError(e.to_string()).into()))
            .collect()
    }

    pub fn light_trainer(&self, seed: u64) -> TrainConfig {
        self.scoring
            .light_trainer
            .unwrap_or(self.trainer)
            .with_seed(seed)
    }

    pub fn sampling_params(&self) -> SamplingParams {
        SamplingParams {
            facts_per_scheme: self.scoring.facts_per_scheme,
            epochs: self.scoring.sampling_epochs,
        }
    }

    /// Default kernels of `db` with the configured overrides applied.
    pub fn kernels_for(&self, db: &Database) -> Result<Kernels> {
        let mut kernels = Kernels::defaults(db);
        for o in &self.kernels {
            let schema = db.schema();
            let rel = schema.relation_id(&o.relation)?;
            let attr = schema.attr_index(rel, &o.attribute)?;
            kernels
                .set(db, rel, attr, Kernel::Gaussian { sigma: o.sigma })
                .with_context(|| format!("kernel override for {}.{}", o.relation, o.attribute))?;
        }
        Ok(kernels)
    }
}

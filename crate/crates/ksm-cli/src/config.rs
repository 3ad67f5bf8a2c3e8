//! Declarative run configuration.
//!
//! One JSON file fully determines a run. Sections: `dataset` and `kernel`
//! are always required; `model`, `training`, `compare`, and `analyze` are
//! required by the commands that use them. Unknown keys anywhere are
//! rejected so typos fail loudly instead of silently using defaults.

use std::path::PathBuf;

use ksm::error::{KsmError, Result};
use ksm::train::{Phase, TrainConfig};
use ksm::Kernel;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub dataset: DatasetSection,
    pub kernel: Kernel,
    #[serde(default)]
    pub model: ModelSection,
    pub training: Option<TrainingSection>,
    pub compare: Option<CompareSection>,
    pub analyze: Option<AnalyzeSection>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let config: Config = serde_json::from_str(text)?;
        config.dataset.validate()?;
        if let Some(t) = &config.training {
            // Surface schedule problems at parse time, not mid-run.
            t.to_train_config(config.model.lambda)?.validate()?;
        }
        if let Some(c) = &config.compare {
            c.validate()?;
        }
        if let Some(a) = &config.analyze {
            a.validate()?;
        }
        Ok(config)
    }

    pub fn training(&self) -> Result<&TrainingSection> {
        self.training.as_ref().ok_or_else(|| {
            KsmError::InvalidArgument("config has no `training` section".to_string())
        })
    }

    pub fn compare(&self) -> Result<&CompareSection> {
        self.compare.as_ref().ok_or_else(|| {
            KsmError::InvalidArgument("config has no `compare` section".to_string())
        })
    }

    pub fn analyze(&self) -> Result<&AnalyzeSection> {
        self.analyze.as_ref().ok_or_else(|| {
            KsmError::InvalidArgument("config has no `analyze` section".to_string())
        })
    }
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// Raw dataset table; which fields are meaningful depends on `source`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// "half_moons" or "idx".
    pub source: String,
    // half_moons
    pub count: Option<usize>,
    pub noise_std: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    // idx
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub crop: usize,
    pub subsample: Option<usize>,
    #[serde(default)]
    pub subsample_seed: u64,
}

impl DatasetSection {
    fn validate(&self) -> Result<()> {
        let forbid = |cond: bool, field: &str| -> Result<()> {
            if cond {
                Err(KsmError::InvalidArgument(format!(
                    "dataset source {:?} does not take `{field}`",
                    self.source
                )))
            } else {
                Ok(())
            }
        };
        match self.source.as_str() {
            "half_moons" => {
                if self.count.is_none() {
                    return Err(KsmError::InvalidArgument(
                        "dataset source \"half_moons\" requires `count`".to_string(),
                    ));
                }
                if self.noise_std.is_none() {
                    return Err(KsmError::InvalidArgument(
                        "dataset source \"half_moons\" requires `noise_std`".to_string(),
                    ));
                }
                forbid(self.images.is_some(), "images")?;
                forbid(self.labels.is_some(), "labels")?;
                forbid(self.crop != 0, "crop")?;
                forbid(self.subsample.is_some(), "subsample")?;
                Ok(())
            }
            "idx" => {
                if self.images.is_none() {
                    return Err(KsmError::InvalidArgument(
                        "dataset source \"idx\" requires `images`".to_string(),
                    ));
                }
                forbid(self.count.is_some(), "count")?;
                forbid(self.noise_std.is_some(), "noise_std")?;
                Ok(())
            }
            other => Err(KsmError::InvalidArgument(format!(
                "unknown dataset source {other:?} (expected \"half_moons\" or \"idx\")"
            ))),
        }
    }

}

// ---------------------------------------------------------------------------
// Model / training
// ---------------------------------------------------------------------------

fn default_lambda() -> f64 {
    0.001
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n: Option<usize>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

impl Default for ModelSection {
    fn default() -> ModelSection {
        ModelSection {
            n: None,
            lambda: default_lambda(),
        }
    }
}

impl ModelSection {
    pub fn n(&self) -> Result<usize> {
        self.n.ok_or_else(|| {
            KsmError::InvalidArgument("config `model.n` is required here".to_string())
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSection {
    pub iterations: usize,
    pub eta_w: f64,
    #[serde(default)]
    pub eta_q: f64,
    pub eta_l: f64,
}

fn default_batch() -> usize {
    64
}
fn default_q_floor() -> f64 {
    1e-4
}
fn default_log_every() -> usize {
    100
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub phases: Vec<PhaseSection>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_q_floor")]
    pub q_floor: f64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    /// Pin q at 1 (requires a homogeneous kernel).
    #[serde(default)]
    pub homogeneous: bool,
}

impl TrainingSection {
    pub fn to_train_config(&self, lambda: f64) -> Result<TrainConfig> {
        if self.phases.is_empty() {
            return Err(KsmError::InvalidArgument(
                "config `training.phases` must list at least one phase".to_string(),
            ));
        }
        let config = TrainConfig {
            batch_size: self.batch_size,
            phases: self
                .phases
                .iter()
                .map(|p| Phase {
                    iterations: p.iterations,
                    eta_w: p.eta_w,
                    eta_q: p.eta_q,
                    eta_l: p.eta_l,
                })
                .collect(),
            lambda,
            seed: self.seed,
            q_floor: self.q_floor,
            log_every: self.log_every,
        };
        config.validate()?;
        Ok(config)
    }
}

// ---------------------------------------------------------------------------
// Compare
// ---------------------------------------------------------------------------

fn first_duplicate<T: Clone + Ord>(values: &[T]) -> Option<T> {
    let mut sorted = values.to_vec();
    sorted.sort();
    sorted.windows(2).find(|w| w[0] == w[1]).map(|w| w[0].clone())
}

pub const COMPARE_METHODS: [&str; 6] = [
    "hebbian",
    "kernel_pca",
    "nystrom_kmeans",
    "nystrom_learned",
    "nystrom_uniform",
    "rff",
];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub dims: Vec<usize>,
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
}

impl CompareSection {
    fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.methods.is_empty() || self.seeds.is_empty() {
            return Err(KsmError::InvalidArgument(
                "config `compare` needs non-empty dims, methods, and seeds".to_string(),
            ));
        }
        for m in &self.methods {
            if !COMPARE_METHODS.contains(&m.as_str()) {
                return Err(KsmError::InvalidArgument(format!(
                    "unknown compare method {m:?} (expected one of {COMPARE_METHODS:?})"
                )));
            }
        }
        for &d in &self.dims {
            if d == 0 {
                return Err(KsmError::InvalidArgument(
                    "compare dims must be >= 1".to_string(),
                ));
            }
        }
        let dup = |name: &str, dup: Option<String>| -> Result<()> {
            match dup {
                Some(v) => Err(KsmError::InvalidArgument(format!(
                    "compare `{name}` lists {v} more than once"
                ))),
                None => Ok(()),
            }
        };
        dup("methods", first_duplicate(&self.methods).map(|m| format!("{m:?}")))?;
        dup("dims", first_duplicate(&self.dims).map(|d| d.to_string()))?;
        dup("seeds", first_duplicate(&self.seeds).map(|s| s.to_string()))?;
        Ok(())
    }

    pub fn needs_training(&self) -> bool {
        self.methods.iter().any(|m| m == "hebbian" || m == "nystrom_learned")
    }
}

// ---------------------------------------------------------------------------
// Analyze
// ---------------------------------------------------------------------------

pub const ANALYZE_TASKS: [&str; 5] = ["classify", "cluster", "histogram", "rfields", "spectrum"];

fn default_bins() -> usize {
    100
}
fn default_n_init() -> usize {
    100
}
fn default_weight_decays() -> Vec<f64> {
    vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0]
}
fn default_classify_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}
fn default_test_fraction() -> f64 {
    0.25
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSection {
    pub k: usize,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySection {
    pub labels_per_class: Vec<usize>,
    #[serde(default = "default_weight_decays")]
    pub weight_decays: Vec<f64>,
    #[serde(default = "default_classify_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeSection {
    pub checkpoint: PathBuf,
    pub tasks: Vec<String>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    pub cluster: Option<ClusterSection>,
    pub classify: Option<ClassifySection>,
}

impl AnalyzeSection {
    fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(KsmError::InvalidArgument(
                "config `analyze.tasks` must list at least one task".to_string(),
            ));
        }
        for t in &self.tasks {
            if !ANALYZE_TASKS.contains(&t.as_str()) {
                return Err(KsmError::InvalidArgument(format!(
                    "unknown analyze task {t:?} (expected one of {ANALYZE_TASKS:?})"
                )));
            }
        }
        if self.tasks.iter().any(|t| t == "cluster") && self.cluster.is_none() {
            return Err(KsmError::InvalidArgument(
                "analyze task \"cluster\" requires the `analyze.cluster` section".to_string(),
            ));
        }
        if self.tasks.iter().any(|t| t == "classify") && self.classify.is_none() {
            return Err(KsmError::InvalidArgument(
                "analyze task \"classify\" requires the `analyze.classify` section".to_string(),
            ));
        }
        if let Some(c) = &self.classify {
            if !(c.test_fraction > 0.0 && c.test_fraction < 1.0) {
                return Err(KsmError::InvalidArgument(format!(
                    "analyze.classify.test_fraction must be in (0, 1), got {}",
                    c.test_fraction
                )));
            }
            if c.labels_per_class.is_empty() {
                return Err(KsmError::InvalidArgument(
                    "analyze.classify.labels_per_class must be non-empty".to_string(),
                ));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

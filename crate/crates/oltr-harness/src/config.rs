//! Experiment configuration: a JSON document mirroring [`ExperimentConfig`]
//! field for field, with every field also reachable from a CLI flag.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use oltr_core::clicksim::ClickBehavior;
use oltr_core::data::SyntheticSpec;
use oltr_core::learner::TrainConfig;
use oltr_core::rewards::RewardVariant;

/// Where the query/document data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    /// Directory holding `train.txt`, optional `vali.txt` and `test.txt`
    /// in LETOR format. `feature_dim` is inferred when absent.
    Letor {
        dir: PathBuf,
        #[serde(default)]
        feature_dim: Option<usize>,
    },
    Synthetic { spec: SyntheticSpec },
}

/// Optional per-axis value lists; the cartesian product defines the sweep
/// cells. An absent axis uses the base train config's value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepAxes {
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    #[serde(default)]
    pub reward: Option<Vec<RewardVariant>>,
    #[serde(default)]
    pub eta_model: Option<Vec<f64>>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.gamma.is_none() && self.reward.is_none() && self.eta_model.is_none()
    }
}

fn default_runs() -> usize {
    15
}

fn default_tau() -> f64 {
    0.9995
}

fn default_smoothing() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub clicks: ClickBehavior,
    /// True propensity exponent of the simulated user.
    pub eta_true: f64,
    /// Base per-run training configuration; sweep axes override its
    /// reward variant, gamma and eta_model per cell, and `seed` is the
    /// base from which run seeds are derived (`seed + run_index`).
    pub train: TrainConfig,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub sweep: SweepAxes,
    pub out_dir: PathBuf,
    /// Worker threads for fanning out runs; 0 picks the rayon default.
    #[serde(default)]
    pub parallelism: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Moving-average window for the smoothed plot CSVs.
    #[serde(default = "default_smoothing")]
    pub smoothing_window: usize,
    /// Min-max normalize features, fitted on the train split.
    #[serde(default)]
    pub normalize: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let config: ExperimentConfig = serde_json::from_reader(BufReader::new(file))
            .with_context(|| format!("parsing {}", path.display()))?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    /// Structural checks; per-cell reward validity is checked inside each
    /// run so one bad cell cannot abort its siblings.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.runs == 0 {
            bail!("runs must be >= 1");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            bail!("tau must be in (0, 1), got {}", self.tau);
        }
        if self.smoothing_window == 0 {
            bail!("smoothing_window must be >= 1");
        }
        let empty_axis = [
            self.sweep.gamma.as_ref().map(Vec::len),
            self.sweep.reward.as_ref().map(Vec::len),
            self.sweep.eta_model.as_ref().map(Vec::len),
        ]
        .into_iter()
        .flatten()
        .any(|len| len == 0);
        if empty_axis {
            bail!("sweep axes must be non-empty when present");
        }
        Ok(())
    }

    /// Cartesian product of the sweep axes over the base reward spec.
    pub fn cells(&self) -> Vec<Cell> {
        let base = self.train.reward;
        let rewards = self
            .sweep
            .reward
            .clone()
            .unwrap_or_else(|| vec![base.variant]);
        let gammas = self.sweep.gamma.clone().unwrap_or_else(|| vec![base.gamma]);
        let etas = self
            .sweep
            .eta_model
            .clone()
            .unwrap_or_else(|| vec![base.eta_model]);
        let mut cells = Vec::new();
        for &variant in &rewards {
            for &gamma in &gammas {
                for &eta_model in &etas {
                    cells.push(Cell {
                        variant,
                        gamma,
                        eta_model,
                    });
                }
            }
        }
        cells
    }
}

/// One sweep cell: the reward configuration shared by its `runs` seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub variant: RewardVariant,
    pub gamma: f64,
    pub eta_model: f64,
}

impl Cell {
    /// Directory-safe identifier, also used as the `cell` column in plot
    /// CSVs.
    pub fn id(&self) -> String {
        format!(
            "reward-{}_gamma-{}_etam-{}",
            self.variant, self.gamma, self.eta_model
        )
    }

    /// The base train config specialized to this cell and seed.
    pub fn train_config(&self, base: &TrainConfig, seed: u64) -> TrainConfig {
        let mut config = base.clone();
        config.reward.variant = self.variant;
        config.reward.gamma = self.gamma;
        config.reward.eta_model = self.eta_model;
        config.seed = seed;
        config
    }
}

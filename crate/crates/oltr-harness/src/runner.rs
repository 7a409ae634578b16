//! Executes an experiment: `cells x runs` seeded training runs fanned out
//! over a worker pool, per-run CSV/JSON artifacts, per-cell aggregates and
//! pairwise significance tests.
//!
//! Output layout under the experiment directory:
//!
//! ```text
//! config.json                              resolved configuration echo
//! summary.json                             ExperimentSummary
//! cells/<cell>/seed_<s>/online.csv         impression,online_ndcg
//! cells/<cell>/seed_<s>/offline.csv        impression,offline_ndcg
//! cells/<cell>/seed_<s>/variance.csv       window,variance_trace
//! cells/<cell>/seed_<s>/policy.json        final weights
//! cells/<cell>/seed_<s>/summary.json       per-run scalars
//! plots/<family>.csv                       long-format curves (see plots)
//! ```

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use oltr_core::clicksim::Simulator;
use oltr_core::data::{
    generate_synthetic, infer_feature_dim, load_letor, FeatureScaler, Split,
};
use oltr_core::learner::{train_offline_skyline, train_online, TrainConfig};
use oltr_core::metrics::{welch_t_test, MetricsLog};
use oltr_core::{Dataset64, Policy64};

use crate::config::{Cell, DataSource, ExperimentConfig};
use crate::plots::emit_plot_data;

/// Datasets resolved from a [`DataSource`], already normalized if asked.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub train: Dataset64,
    pub validation: Option<Dataset64>,
    pub test: Dataset64,
}

pub fn load_data(source: &DataSource, normalize: bool) -> anyhow::Result<LoadedData> {
    let mut data = match source {
        DataSource::Synthetic { spec } => {
            let generated = generate_synthetic::<f64>(spec).context("generating synthetic data")?;
            LoadedData {
                train: generated.train,
                validation: Some(generated.validation),
                test: generated.test,
            }
        }
        DataSource::Letor { dir, feature_dim } => {
            let train_path = dir.join("train.txt");
            let vali_path = dir.join("vali.txt");
            let test_path = dir.join("test.txt");
            let dim = match feature_dim {
                Some(dim) => *dim,
                None => {
                    let mut dim = infer_feature_dim(&train_path)?;
                    for path in [&vali_path, &test_path] {
                        if path.exists() {
                            dim = dim.max(infer_feature_dim(path)?);
                        }
                    }
                    dim
                }
            };
            let mut train: Dataset64 = load_letor(&train_path, dim)?;
            train.split = Split::Train;
            let validation = if vali_path.exists() {
                let mut ds: Dataset64 = load_letor(&vali_path, dim)?;
                ds.split = Split::Validation;
                Some(ds)
            } else {
                None
            };
            let mut test: Dataset64 = load_letor(&test_path, dim)
                .with_context(|| format!("a test split is required at {}", test_path.display()))?;
            test.split = Split::Test;
            LoadedData {
                train,
                validation,
                test,
            }
        }
    };
    if normalize {
        let scaler = FeatureScaler::fit(&data.train);
        data.train = scaler.apply(&data.train);
        data.validation = data.validation.as_ref().map(|ds| scaler.apply(ds));
        data.test = scaler.apply(&data.test);
    }
    Ok(data)
}

/// Scalar outcomes of one seeded run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: String,
    pub seed: u64,
    pub final_offline_ndcg: f64,
    /// Tau-discounted cumulative online nDCG.
    pub online_performance: f64,
    pub variance_trace: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunFailure {
    pub cell: String,
    pub seed: u64,
    pub error: String,
}

/// Mean / standard deviation / raw values of one metric across seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    pub std_dev: f64,
    pub values: Vec<f64>,
}

impl SampleStats {
    fn from_values(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = if values.is_empty() {
            f64::NAN
        } else {
            values.iter().sum::<f64>() / n
        };
        let std_dev = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        SampleStats {
            mean,
            std_dev,
            values,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: String,
    pub reward: String,
    pub gamma: f64,
    pub eta_model: f64,
    pub completed_runs: usize,
    pub failed_runs: usize,
    pub final_offline_ndcg: SampleStats,
    pub online_performance: SampleStats,
    /// Mean over runs of each run's mean gradient-variance trace.
    pub mean_variance_trace: Option<f64>,
}

/// Welch test between two cells on one metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub cell_a: String,
    pub cell_b: String,
    pub metric: String,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub cells: Vec<CellSummary>,
    pub pairwise: Vec<PairwiseTest>,
    pub failures: Vec<RunFailure>,
}

impl ExperimentSummary {
    pub fn cell(&self, id: &str) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.cell == id)
    }
}

fn run_dir(out_dir: &Path, cell: &Cell, seed: u64) -> PathBuf {
    out_dir
        .join("cells")
        .join(cell.id())
        .join(format!("seed_{seed}"))
}

fn execute_run(
    config: &ExperimentConfig,
    data: &LoadedData,
    cell: &Cell,
    seed: u64,
) -> anyhow::Result<RunRecord> {
    let train_config: TrainConfig = cell.train_config(&config.train, seed);
    let (policy, log): (Policy64, MetricsLog) = if train_config.reward.variant.is_full_information()
    {
        train_offline_skyline(&train_config, &data.train, &data.test)?
    } else {
        let simulator = Simulator::new(config.eta_true, config.clicks)?;
        train_online(&train_config, &data.train, &data.test, &simulator)?
    };

    let dir = run_dir(&config.out_dir, cell, seed);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    log.write_online_csv(&dir.join("online.csv"))?;
    log.write_offline_csv(&dir.join("offline.csv"))?;
    log.write_variance_csv(&dir.join("variance.csv"))?;
    policy.save(&dir.join("policy.json"))?;

    let record = RunRecord {
        cell: cell.id(),
        seed,
        final_offline_ndcg: log.final_offline_ndcg().unwrap_or(f64::NAN),
        online_performance: log.cumulative_online_performance(config.tau),
        variance_trace: log.variance_trace.clone(),
    };
    let summary_file = fs::File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(summary_file), &record)?;
    Ok(record)
}

/// Run the whole experiment. Individual run failures are recorded in the
/// summary without aborting sibling runs; the experiment itself only fails
/// on invalid configuration or unusable data.
pub fn run_experiment(config: &ExperimentConfig) -> anyhow::Result<ExperimentSummary> {
    config.validate()?;
    let data = load_data(&config.data, config.normalize)?;
    let cells = config.cells();

    fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("creating {}", config.out_dir.display()))?;
    config.save(&config.out_dir.join("config.json"))?;

    let tasks: Vec<(usize, u64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(cell_idx, _)| {
            (0..config.runs as u64).map(move |run| (cell_idx, config.train.seed + run))
        })
        .collect();

    let execute_all = || {
        tasks
            .par_iter()
            .map(|&(cell_idx, seed)| {
                let cell = &cells[cell_idx];
                let outcome = catch_unwind(AssertUnwindSafe(|| {
                    execute_run(config, &data, cell, seed)
                }))
                .unwrap_or_else(|panic| {
                    let message = panic
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| panic.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "unknown panic".into());
                    Err(anyhow::anyhow!("panic: {message}"))
                });
                outcome.map_err(|e| RunFailure {
                    cell: cell.id(),
                    seed,
                    error: format!("{e:#}"),
                })
            })
            .collect::<Vec<_>>()
    };
    let outcomes = if config.parallelism > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .context("building worker pool")?
            .install(execute_all)
    } else {
        execute_all()
    };

    let mut summaries = Vec::with_capacity(cells.len());
    let mut failures = Vec::new();
    for (cell_idx, cell) in cells.iter().enumerate() {
        let mut offline = Vec::new();
        let mut online = Vec::new();
        let mut trace_means = Vec::new();
        let mut failed = 0usize;
        for (task_idx, &(task_cell, _)) in tasks.iter().enumerate() {
            if task_cell != cell_idx {
                continue;
            }
            match &outcomes[task_idx] {
                Ok(record) => {
                    offline.push(record.final_offline_ndcg);
                    online.push(record.online_performance);
                    if !record.variance_trace.is_empty() {
                        trace_means.push(
                            record.variance_trace.iter().map(|&(_, v)| v).sum::<f64>()
                                / record.variance_trace.len() as f64,
                        );
                    }
                }
                Err(failure) => {
                    failed += 1;
                    failures.push(failure.clone());
                }
            }
        }
        summaries.push(CellSummary {
            cell: cell.id(),
            reward: cell.variant.to_string(),
            gamma: cell.gamma,
            eta_model: cell.eta_model,
            completed_runs: offline.len(),
            failed_runs: failed,
            mean_variance_trace: if trace_means.is_empty() {
                None
            } else {
                Some(trace_means.iter().sum::<f64>() / trace_means.len() as f64)
            },
            final_offline_ndcg: SampleStats::from_values(offline),
            online_performance: SampleStats::from_values(online),
        });
    }

    let mut pairwise = Vec::new();
    for i in 0..summaries.len() {
        for j in (i + 1)..summaries.len() {
            for (metric, a, b) in [
                (
                    "final_offline_ndcg",
                    &summaries[i].final_offline_ndcg.values,
                    &summaries[j].final_offline_ndcg.values,
                ),
                (
                    "online_performance",
                    &summaries[i].online_performance.values,
                    &summaries[j].online_performance.values,
                ),
            ] {
                if a.len() >= 2 && b.len() >= 2 {
                    if let Ok(test) = welch_t_test(a, b) {
                        pairwise.push(PairwiseTest {
                            cell_a: summaries[i].cell.clone(),
                            cell_b: summaries[j].cell.clone(),
                            metric: metric.into(),
                            t: test.t,
                            p: test.p,
                        });
                    }
                }
            }
        }
    }

    let summary = ExperimentSummary {
        cells: summaries,
        pairwise,
        failures,
    };
    let file = fs::File::create(config.out_dir.join("summary.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &summary)?;

    if summary.cells.iter().any(|c| c.completed_runs > 0) {
        emit_plot_data(&config.out_dir, config.smoothing_window)?;
    } else {
        bail!(
            "every run failed; first error: {}",
            summary
                .failures
                .first()
                .map(|f| f.error.as_str())
                .unwrap_or("none recorded")
        );
    }
    Ok(summary)
}

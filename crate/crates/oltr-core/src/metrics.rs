//! Ranking quality measures and experiment aggregates.
//!
//! Offline performance is the test-set mean nDCG@10 of the greedy (argmax)
//! ranking; online performance is the tau-discounted sum of the nDCG@10 of
//! the lists users actually saw during training.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::Dataset;
use crate::policy::Policy;
use crate::{Error, Result, Scalar};

/// Gain assigned to a relevance grade inside DCG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `2^grade - 1`, the usual convention for graded web benchmarks.
    #[default]
    Exponential,
    /// `grade` itself.
    Linear,
}

impl Gain {
    fn of<T: Scalar>(&self, grade: u8) -> T {
        match self {
            Gain::Exponential => T::from_config(2.0f64.powi(i32::from(grade)) - 1.0),
            Gain::Linear => T::from_config(f64::from(grade)),
        }
    }
}

fn dcg_at_k<T: Scalar>(grades: &[u8], k: usize, gain: Gain) -> T {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain.of::<T>(g) / T::from_config((i + 2) as f64).log2())
        .sum()
}

/// nDCG@k of a displayed grade list, normalized by the ideal reordering of
/// that same list. Returns 0 when the ideal DCG is 0.
pub fn ndcg_at_k<T: Scalar>(grades: &[u8], k: usize) -> T {
    ndcg_at_k_with_gain(grades, k, Gain::Exponential)
}

pub fn ndcg_at_k_with_gain<T: Scalar>(grades: &[u8], k: usize, gain: Gain) -> T {
    ndcg_vs_ideal_with_gain(grades, grades, k, gain)
}

/// nDCG@k of a displayed list normalized by the ideal ordering of a wider
/// candidate pool. Used for online nDCG, where a truncated SERP must be
/// scored against the best ranking the whole candidate set allows.
pub fn ndcg_vs_ideal<T: Scalar>(displayed: &[u8], pool: &[u8], k: usize) -> T {
    ndcg_vs_ideal_with_gain(displayed, pool, k, Gain::Exponential)
}

pub fn ndcg_vs_ideal_with_gain<T: Scalar>(displayed: &[u8], pool: &[u8], k: usize, gain: Gain) -> T {
    let mut ideal: Vec<u8> = pool.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let ideal_dcg: T = dcg_at_k(&ideal, k, gain);
    if ideal_dcg == T::zero() {
        return T::zero();
    }
    dcg_at_k::<T>(displayed, k, gain) / ideal_dcg
}

fn kahan_sum<T: Scalar>(values: impl Iterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut compensation = T::zero();
    for v in values {
        let y = v - compensation;
        let t = sum + y;
        compensation = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Discounted cumulative user experience: `sum_i tau^i * ndcg_i`.
pub fn online_performance<T: Scalar>(per_impression_ndcg: &[T], tau: T) -> T {
    kahan_sum(
        per_impression_ndcg
            .iter()
            .enumerate()
            .map(|(i, &v)| tau.powi(i as i32) * v),
    )
}

/// Mean nDCG@k over a dataset when each query's candidates are ranked
/// greedily by descending policy score (ties broken by original order).
pub fn offline_performance<T: Scalar>(
    policy: &Policy<T>,
    dataset: &Dataset<T>,
    k: usize,
) -> Result<f64> {
    offline_performance_with_gain(policy, dataset, k, Gain::Exponential)
}

pub fn offline_performance_with_gain<T: Scalar>(
    policy: &Policy<T>,
    dataset: &Dataset<T>,
    k: usize,
    gain: Gain,
) -> Result<f64> {
    if dataset.queries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for query in &dataset.queries {
        let mut scored: Vec<(usize, T)> = Vec::with_capacity(query.candidates.len());
        for (i, doc) in query.candidates.iter().enumerate() {
            scored.push((i, policy.score(doc)?));
        }
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal));
        let ranked: Vec<u8> = scored
            .iter()
            .map(|&(i, _)| query.candidates[i].relevance)
            .collect();
        total += ndcg_at_k_with_gain::<f64>(&ranked, k, gain);
    }
    Ok(total / dataset.queries.len() as f64)
}

/// Welch's unequal-variance t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
    /// Welch-Satterthwaite degrees of freedom.
    pub df: f64,
}

fn mean_and_var(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-tailed Welch t-test between two samples of size >= 2.
///
/// Degenerate zero-variance inputs are handled explicitly: equal means
/// give `p = 1`, different ones `p = 0`.
pub fn welch_t_test(sample_a: &[f64], sample_b: &[f64]) -> Result<WelchTest> {
    if sample_a.len() < 2 || sample_b.len() < 2 {
        return Err(Error::InvalidConfig(
            "welch test needs at least two observations per sample".into(),
        ));
    }
    let (mean_a, var_a) = mean_and_var(sample_a);
    let (mean_b, var_b) = mean_and_var(sample_b);
    let se_a = var_a / sample_a.len() as f64;
    let se_b = var_b / sample_b.len() as f64;
    let se2 = se_a + se_b;

    if se2 == 0.0 {
        return Ok(if mean_a == mean_b {
            WelchTest {
                t: 0.0,
                p: 1.0,
                df: f64::INFINITY,
            }
        } else {
            WelchTest {
                t: (mean_a - mean_b).signum() * f64::INFINITY,
                p: 0.0,
                df: f64::INFINITY,
            }
        });
    }

    let t = (mean_a - mean_b) / se2.sqrt();
    let df = se2 * se2
        / (se_a * se_a / (sample_a.len() as f64 - 1.0) + se_b * se_b / (sample_b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::InvalidConfig(format!("degenerate t distribution: {e}")))?;
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(WelchTest { t, p, df })
}

/// Everything one training run records.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsLog {
    /// nDCG@10 of each displayed list, impression by impression.
    pub online_ndcg: Vec<f64>,
    /// `(impression count, test-set mean nDCG@10)` at each evaluation point.
    pub offline_ndcg: Vec<(usize, f64)>,
    /// `(window index, covariance trace)` per completed gradient window.
    pub variance_trace: Vec<(usize, f64)>,
}

impl MetricsLog {
    pub fn final_offline_ndcg(&self) -> Option<f64> {
        self.offline_ndcg.last().map(|&(_, v)| v)
    }

    /// Tau-discounted cumulative online nDCG over the run.
    pub fn cumulative_online_performance(&self, tau: f64) -> f64 {
        online_performance(&self.online_ndcg, tau)
    }

    pub fn write_online_csv(&self, path: &Path) -> Result<()> {
        let mut out = csv_writer(path)?;
        write_all(&mut out, path, "impression,online_ndcg", self.online_ndcg.iter().enumerate().map(|(i, v)| (i + 1, *v)))
    }

    pub fn write_offline_csv(&self, path: &Path) -> Result<()> {
        let mut out = csv_writer(path)?;
        write_all(&mut out, path, "impression,offline_ndcg", self.offline_ndcg.iter().copied())
    }

    pub fn write_variance_csv(&self, path: &Path) -> Result<()> {
        let mut out = csv_writer(path)?;
        write_all(&mut out, path, "window,variance_trace", self.variance_trace.iter().copied())
    }
}

fn csv_writer(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(BufWriter::new(file))
}

fn write_all(
    out: &mut BufWriter<File>,
    path: &Path,
    header: &str,
    rows: impl Iterator<Item = (usize, f64)>,
) -> Result<()> {
    let io_err = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    writeln!(out, "{header}").map_err(io_err)?;
    for (index, value) in rows {
        writeln!(out, "{index},{value}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

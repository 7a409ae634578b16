//! The trainable ranker: a linear scorer and its softmax action
//! distribution over the still-unranked candidates.
//!
//! Policies are immutable snapshots; an update produces a new snapshot
//! (see [`crate::learner::apply_update`]).

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Document;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T> {
    /// Weight vector, one entry per feature.
    pub weights: Vec<T>,
    pub learning_rate: T,
}

/// On-disk checkpoint form: weights are stored as f64 regardless of the
/// in-memory scalar type.
#[derive(Serialize, Deserialize)]
struct PolicyCheckpoint {
    weights: Vec<f64>,
    lr: f64,
}

impl<T: Scalar> Policy<T> {
    /// All-zero weights: the initial uniform (maximum-exploration) policy.
    pub fn zeros(feature_dim: usize, learning_rate: T) -> Self {
        Policy {
            weights: vec![T::zero(); feature_dim],
            learning_rate,
        }
    }

    pub fn new(weights: Vec<T>, learning_rate: T) -> Self {
        Policy {
            weights,
            learning_rate,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.len()
    }

    /// Inner product of the weights with a document's features.
    pub fn score(&self, doc: &Document<T>) -> Result<T> {
        if doc.features.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: doc.features.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(&doc.features)
            .map(|(&w, &x)| w * x)
            .sum())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let checkpoint = PolicyCheckpoint {
            weights: self
                .weights
                .iter()
                .map(|w| w.to_f64().expect("policy weights are finite"))
                .collect(),
            lr: self.learning_rate.to_f64().expect("finite learning rate"),
        };
        let file = File::create(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::to_writer_pretty(BufWriter::new(file), &checkpoint)
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let checkpoint: PolicyCheckpoint = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Policy {
            weights: checkpoint.weights.iter().map(|&w| T::from_config(w)).collect(),
            learning_rate: T::from_config(checkpoint.lr),
        })
    }
}

/// Softmax distribution over a subset of candidates.
///
/// `candidate_indices[i]` is the document ordinal the probability
/// `probabilities[i]` belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution<T> {
    pub candidate_indices: Vec<usize>,
    pub probabilities: Vec<T>,
}

impl<T> ActionDistribution<T> {
    pub fn len(&self) -> usize {
        self.candidate_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidate_indices.is_empty()
    }
}

/// Softmax over all candidates.
pub fn action_distribution<T: Scalar>(
    policy: &Policy<T>,
    candidates: &[Document<T>],
) -> Result<ActionDistribution<T>> {
    let all: Vec<usize> = (0..candidates.len()).collect();
    action_distribution_subset(policy, candidates, &all)
}

/// Softmax over the candidates named by `subset` (document ordinals into
/// `candidates`). Scores are shifted by their maximum before
/// exponentiation, so magnitudes up to ~1e4 stay finite.
pub fn action_distribution_subset<T: Scalar>(
    policy: &Policy<T>,
    candidates: &[Document<T>],
    subset: &[usize],
) -> Result<ActionDistribution<T>> {
    if subset.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut scores = Vec::with_capacity(subset.len());
    for &ordinal in subset {
        scores.push(policy.score(&candidates[ordinal])?);
    }
    let max = scores
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let mut probabilities: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: T = probabilities.iter().copied().sum();
    for p in &mut probabilities {
        *p /= total;
    }
    Ok(ActionDistribution {
        candidate_indices: subset.to_vec(),
        probabilities,
    })
}

/// Draw one action; returns a position into the distribution's
/// `candidate_indices`/`probabilities`, not the document ordinal.
pub fn sample_action<T: Scalar>(dist: &ActionDistribution<T>, rng: &mut impl Rng) -> usize {
    let u: T = rng.gen_range(T::zero()..T::one());
    let mut acc = T::zero();
    for (pos, &p) in dist.probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return pos;
        }
    }
    // rounding can leave acc fractionally below one
    dist.probabilities.len() - 1
}

/// Gradient of `log pi(chosen | candidates)` with respect to the policy
/// weights: `features(chosen) - sum_a pi(a) * features(a)`.
pub fn log_policy_gradient<T: Scalar>(
    policy: &Policy<T>,
    candidates: &[Document<T>],
    chosen: usize,
) -> Result<Vec<T>> {
    let all: Vec<usize> = (0..candidates.len()).collect();
    log_policy_gradient_subset(policy, candidates, &all, chosen)
}

/// Same as [`log_policy_gradient`] but over a candidate subset;
/// `chosen_pos` indexes into `subset`.
pub fn log_policy_gradient_subset<T: Scalar>(
    policy: &Policy<T>,
    candidates: &[Document<T>],
    subset: &[usize],
    chosen_pos: usize,
) -> Result<Vec<T>> {
    let dist = action_distribution_subset(policy, candidates, subset)?;
    debug_assert!(chosen_pos < subset.len());
    let dim = policy.feature_dim();
    let mut grad = vec![T::zero(); dim];
    for (&ordinal, &p) in subset.iter().zip(&dist.probabilities) {
        for (g, &x) in grad.iter_mut().zip(&candidates[ordinal].features) {
            *g -= p * x;
        }
    }
    let chosen_features = &candidates[subset[chosen_pos]].features;
    if chosen_features.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: chosen_features.len(),
        });
    }
    for (g, &x) in grad.iter_mut().zip(chosen_features) {
        *g += x;
    }
    Ok(grad)
}

//! Simulated users: rank-dependent observation (position bias) composed
//! with relevance-conditioned click probabilities,
//! `P(c_k=1) = P(c_k=1 | o_k=1, rel(d_k)) * P(o_k=1 | k)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::episode::Episode;
use crate::{Error, Result};

/// Position bias model: a result at rank `k` is observed with probability
/// `(1/k)^eta`. `eta = 0` switches position bias off entirely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    eta: f64,
}

impl PropensityModel {
    pub fn new(eta: f64) -> Result<Self> {
        if eta.is_nan() || eta < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "propensity exponent must be >= 0, got {eta}"
            )));
        }
        Ok(PropensityModel { eta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `P(o=1 | k) = (1/k)^eta`. Panics if `k < 1`; ranks start at 1.
    pub fn observation_probability(&self, k: usize) -> f64 {
        assert!(k >= 1, "rank positions start at 1");
        (1.0 / k as f64).powf(self.eta)
    }
}

/// Conditional click probabilities given observation, by relevance grade.
///
/// `Perfect` and `Noisy` follow the standard simulation tables;
/// `DeterministicBinary` clicks iff an observed document has grade > 0 and
/// exists for noise-free unbiasedness checks rather than realism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClickBehavior {
    Perfect,
    Noisy,
    #[serde(rename = "detbin")]
    DeterministicBinary,
}

impl ClickBehavior {
    /// `P(c=1 | o=1, rel(d) = grade)`.
    pub fn click_prob(&self, grade: u8) -> f64 {
        let g = usize::from(grade.min(4));
        match self {
            ClickBehavior::Perfect => [0.0, 0.2, 0.4, 0.8, 1.0][g],
            ClickBehavior::Noisy => [0.4, 0.6, 0.7, 0.8, 0.9][g],
            ClickBehavior::DeterministicBinary => {
                if grade > 0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl FromStr for ClickBehavior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perfect" => Ok(ClickBehavior::Perfect),
            "noisy" => Ok(ClickBehavior::Noisy),
            "detbin" => Ok(ClickBehavior::DeterministicBinary),
            other => Err(Error::InvalidConfig(format!(
                "unknown click behavior `{other}` (expected perfect|noisy|detbin)"
            ))),
        }
    }
}

impl fmt::Display for ClickBehavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ClickBehavior::Perfect => "perfect",
            ClickBehavior::Noisy => "noisy",
            ClickBehavior::DeterministicBinary => "detbin",
        };
        f.write_str(name)
    }
}

/// A complete simulated user: position bias plus click behavior.
///
/// Holds the *true* propensity exponent, which the learner never sees;
/// the learner's assumed exponent lives in its reward spec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Simulator {
    pub propensity: PropensityModel,
    pub behavior: ClickBehavior,
}

impl Simulator {
    pub fn new(eta_true: f64, behavior: ClickBehavior) -> Result<Self> {
        Ok(Simulator {
            propensity: PropensityModel::new(eta_true)?,
            behavior,
        })
    }

    pub fn simulate<T>(&self, episode: &Episode<'_, T>, rng: &mut impl Rng) -> Vec<bool> {
        simulate_clicks(episode, &self.propensity, self.behavior, rng)
    }
}

/// Draw a click vector for a displayed ranking: each rank is observed with
/// probability `(1/k)^eta`, and an observed document is clicked with the
/// behavior's grade-conditional probability.
pub fn simulate_clicks<T>(
    episode: &Episode<'_, T>,
    model: &PropensityModel,
    behavior: ClickBehavior,
    rng: &mut impl Rng,
) -> Vec<bool> {
    episode
        .steps
        .iter()
        .map(|step| {
            let observed = rng.gen_bool(model.observation_probability(step.rank));
            observed && rng.gen_bool(behavior.click_prob(episode.query.candidates[step.chosen].relevance))
        })
        .collect()
}

//! Per-step rewards for ranking episodes and their inverse-propensity
//! reshapings.
//!
//! The DCG weight `lambda(t) = 1 / log2(t + 2)` prices rank `k = t + 1`.
//! With click `c` and model propensity `p = (1/k)^eta_model`:
//!
//! * full information: `lambda * y` (label instead of click)
//! * `naive+`: `lambda * c`
//! * `ips+`:   `lambda * c / p`
//! * `naive-`: `lambda * (c - 1)`
//! * `ips-`:   `lambda * (c - 1) + ((1 - p) / p) * lambda * c`
//! * `naive+-` / `ips+-`: sum of the two sides
//!
//! The IPS forms make the expected episode return match the label-based
//! DCG (its negative counterpart for `ips-`) under position-biased
//! observation; [`expected_return_oracle`] estimates those expectations by
//! simulation so the claim is testable.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardVariant {
    /// Label-based DCG reward for full-information (skyline) training.
    #[serde(rename = "dcg")]
    DcgFullInfo,
    #[serde(rename = "naive+")]
    NaivePos,
    #[serde(rename = "ips+")]
    IpsPos,
    #[serde(rename = "naive-")]
    NaiveNeg,
    #[serde(rename = "ips-")]
    IpsNeg,
    #[serde(rename = "naive+-")]
    NaiveBoth,
    #[serde(rename = "ips+-")]
    IpsBoth,
}

impl RewardVariant {
    pub const ALL: [RewardVariant; 7] = [
        RewardVariant::DcgFullInfo,
        RewardVariant::NaivePos,
        RewardVariant::IpsPos,
        RewardVariant::NaiveNeg,
        RewardVariant::IpsNeg,
        RewardVariant::NaiveBoth,
        RewardVariant::IpsBoth,
    ];

    /// Whether the variant reads relevance labels rather than clicks.
    pub fn is_full_information(&self) -> bool {
        matches!(self, RewardVariant::DcgFullInfo)
    }
}

impl FromStr for RewardVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dcg" => Ok(RewardVariant::DcgFullInfo),
            "naive+" => Ok(RewardVariant::NaivePos),
            "ips+" => Ok(RewardVariant::IpsPos),
            "naive-" => Ok(RewardVariant::NaiveNeg),
            "ips-" => Ok(RewardVariant::IpsNeg),
            "naive+-" => Ok(RewardVariant::NaiveBoth),
            "ips+-" => Ok(RewardVariant::IpsBoth),
            other => Err(Error::InvalidConfig(format!(
                "unknown reward variant `{other}` (expected dcg|naive+|ips+|naive-|ips-|naive+-|ips+-)"
            ))),
        }
    }
}

impl fmt::Display for RewardVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            RewardVariant::DcgFullInfo => "dcg",
            RewardVariant::NaivePos => "naive+",
            RewardVariant::IpsPos => "ips+",
            RewardVariant::NaiveNeg => "naive-",
            RewardVariant::IpsNeg => "ips-",
            RewardVariant::NaiveBoth => "naive+-",
            RewardVariant::IpsBoth => "ips+-",
        };
        f.write_str(name)
    }
}

/// Learning-signal configuration: which reward, how future rewards are
/// discounted, and the propensity exponent the learner assumes.
///
/// `eta_model` is deliberately separate from the simulator's true exponent;
/// only the learner consumes it, which is what makes propensity-mismatch
/// experiments possible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub variant: RewardVariant,
    /// Discount factor in `[0, 1]`; 0 reduces the MDP to a contextual bandit.
    pub gamma: f64,
    /// Propensity exponent assumed when reshaping rewards.
    pub eta_model: f64,
    /// Optional cap on the inverse-propensity weight `1/p` (propensity
    /// clipping). `None` leaves weights unclipped.
    #[serde(default)]
    pub ips_weight_cap: Option<f64>,
}

impl RewardSpec {
    pub fn new(variant: RewardVariant, gamma: f64, eta_model: f64) -> Self {
        RewardSpec {
            variant,
            gamma,
            eta_model,
            ips_weight_cap: None,
        }
    }

    /// Check ranges, including that the model propensity stays positive at
    /// the deepest rank that will be used.
    pub fn validate(&self, max_rank: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.eta_model.is_nan() || self.eta_model < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "eta_model must be >= 0, got {}",
                self.eta_model
            )));
        }
        if let Some(cap) = self.ips_weight_cap {
            if cap.is_nan() || cap < 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "ips_weight_cap must be >= 1, got {cap}"
                )));
            }
        }
        let deepest = (1.0 / max_rank.max(1) as f64).powf(self.eta_model);
        if deepest <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "model propensity underflows to 0 at rank {max_rank} with eta_model {}",
                self.eta_model
            )));
        }
        Ok(())
    }
}

/// Immediate reward earned at one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReward<T> {
    pub step: usize,
    pub value: T,
}

/// DCG weight of time step `t` (rank `t + 1`): `1 / log2(t + 2)`.
pub fn dcg_weight<T: Scalar>(t: usize) -> T {
    T::one() / T::from_config((t + 2) as f64).log2()
}

/// Reward for the document placed at step `t`, given its click (or, for
/// the full-information variant, its binarized label).
pub fn step_reward<T: Scalar>(spec: &RewardSpec, t: usize, clicked: bool) -> Result<StepReward<T>> {
    let lambda: T = dcg_weight(t);
    let c = if clicked { T::one() } else { T::zero() };
    let rank = t + 1;
    let propensity = (1.0 / rank as f64).powf(spec.eta_model);
    if propensity <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "model propensity underflows to 0 at rank {rank} with eta_model {}",
            spec.eta_model
        )));
    }
    let mut inv_propensity = 1.0 / propensity;
    if let Some(cap) = spec.ips_weight_cap {
        inv_propensity = inv_propensity.min(cap);
    }
    let p = T::from_config(propensity);
    let w = T::from_config(inv_propensity);

    let naive_pos = lambda * c;
    let ips_pos = lambda * c * w;
    let naive_neg = lambda * (c - T::one());
    let ips_neg = naive_neg + (T::one() - p) * w * lambda * c;

    let value = match spec.variant {
        RewardVariant::DcgFullInfo => lambda * c,
        RewardVariant::NaivePos => naive_pos,
        RewardVariant::IpsPos => ips_pos,
        RewardVariant::NaiveNeg => naive_neg,
        RewardVariant::IpsNeg => ips_neg,
        RewardVariant::NaiveBoth => naive_pos + naive_neg,
        RewardVariant::IpsBoth => ips_pos + ips_neg,
    };
    Ok(StepReward { step: t, value })
}

/// Discounted return `G_t = sum_{m >= t} gamma^(m - t) * R_m`.
///
/// With `gamma = 1` and `t = 0` this is the plain cumulative episode
/// reward; with `gamma = 0` it is exactly the immediate reward at `t`.
pub fn episode_return<T: Scalar>(spec: &RewardSpec, rewards: &[StepReward<T>], from: usize) -> T {
    let gamma = T::from_config(spec.gamma);
    rewards
        .iter()
        .filter(|r| r.step >= from)
        .map(|r| gamma.powi((r.step - from) as i32) * r.value)
        .sum()
}

/// Monte Carlo estimate of an expected episode return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub mean: f64,
    pub std_dev: f64,
    pub trials: usize,
}

impl OracleEstimate {
    /// Standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        self.std_dev / (self.trials as f64).sqrt()
    }
}

/// Simulate the expected cumulative reward of a fixed ranking under
/// noise-free binary clicks: each rank is observed with the *true*
/// propensity `(1/k)^eta_true`, an observed relevant document is always
/// clicked, and rewards are computed with the learner's `eta_model`.
///
/// Averaging over trials estimates the quantity the reshaping functions
/// make claims about, so bias and unbiasedness are directly measurable.
pub fn expected_return_oracle(
    labels: &[bool],
    variant: RewardVariant,
    eta_true: f64,
    eta_model: f64,
    n_trials: usize,
    rng: &mut impl Rng,
) -> OracleEstimate {
    assert!(n_trials >= 1, "need at least one trial");
    let spec = RewardSpec::new(variant, 1.0, eta_model);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_trials {
        let mut delta = 0.0;
        for (t, &relevant) in labels.iter().enumerate() {
            let observed = rng.gen_bool((1.0 / (t + 1) as f64).powf(eta_true));
            let clicked = observed && relevant;
            delta += step_reward::<f64>(&spec, t, clicked)
                .expect("validated propensity")
                .value;
        }
        sum += delta;
        sum_sq += delta * delta;
    }
    let n = n_trials as f64;
    let mean = sum / n;
    let var = if n_trials > 1 {
        ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    OracleEstimate {
        mean,
        std_dev: var.sqrt(),
        trials: n_trials,
    }
}

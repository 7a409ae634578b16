//! REINFORCE training for the ranking MDP.
//!
//! Each impression samples a query, rolls out a ranking, collects feedback
//! (simulated clicks, or relevance labels for the skyline), accumulates
//! `sum_t G_t * grad log pi(a_t | s_t)` and applies one policy update.
//! Gradient vectors are also fed into fixed-size windows whose covariance
//! trace measures estimator variance.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clicksim::Simulator;
use crate::data::{sample_query, Dataset};
use crate::episode::{run_episode, Episode};
use crate::metrics::{ndcg_vs_ideal, offline_performance, MetricsLog};
use crate::policy::{log_policy_gradient_subset, Policy};
use crate::rewards::{episode_return, step_reward, RewardSpec, StepReward};
use crate::{Error, Result, Scalar};

/// Everything a single training run needs besides the datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub reward: RewardSpec,
    /// Number of documents displayed per impression.
    pub serp_size: usize,
    pub impressions: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Offline evaluation (and checkpoint) cadence, in impressions.
    pub eval_every: usize,
    /// Episodes per gradient-variance window.
    #[serde(default = "default_variance_window")]
    pub variance_window: usize,
    /// When set, a policy checkpoint is written at each evaluation point.
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
}

fn default_variance_window() -> usize {
    1000
}

impl TrainConfig {
    pub fn new(reward: RewardSpec) -> Self {
        TrainConfig {
            reward,
            serp_size: 10,
            impressions: 10_000,
            learning_rate: 0.01,
            seed: 1,
            eval_every: 1000,
            variance_window: default_variance_window(),
            checkpoint_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.serp_size == 0 {
            return Err(Error::InvalidConfig("serp_size must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be >= 1".into()));
        }
        if self.variance_window < 2 {
            return Err(Error::InvalidConfig("variance_window must be >= 2".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        self.reward.validate(self.serp_size)
    }
}

/// Accumulated REINFORCE gradient for one episode with feedback attached:
/// `sum_t G_t * grad log pi(a_t | s_t)`, where `G_t` is the
/// gamma-discounted return of the step rewards. The policy is not touched.
pub fn episode_gradient<T: Scalar>(
    policy: &Policy<T>,
    episode: &Episode<'_, T>,
    spec: &RewardSpec,
) -> Result<Vec<T>> {
    let clicks = episode.clicks()?;
    if clicks.len() != episode.steps.len() {
        return Err(Error::DimensionMismatch {
            expected: episode.steps.len(),
            got: clicks.len(),
        });
    }
    let rewards: Vec<StepReward<T>> = episode
        .steps
        .iter()
        .zip(clicks)
        .enumerate()
        .map(|(t, (_, &clicked))| step_reward(spec, t, clicked))
        .collect::<Result<_>>()?;

    let mut delta = vec![T::zero(); policy.feature_dim()];
    for (t, step) in episode.steps.iter().enumerate() {
        let ret = episode_return(spec, &rewards, t);
        if ret == T::zero() {
            continue;
        }
        let chosen_pos = step
            .state_before
            .iter()
            .position(|&o| o == step.chosen)
            .expect("chosen ordinal is part of the recorded state");
        let grad = log_policy_gradient_subset(
            policy,
            &episode.query.candidates,
            &step.state_before,
            chosen_pos,
        )?;
        for (d, g) in delta.iter_mut().zip(grad) {
            *d += ret * g;
        }
    }
    Ok(delta)
}

/// One gradient-ascent step: a new policy snapshot with
/// `weights + learning_rate * delta`. Non-finite gradient components abort
/// the run rather than being clipped, so a misconfigured propensity
/// exponent surfaces immediately.
pub fn apply_update<T: Scalar>(policy: &Policy<T>, delta: &[T]) -> Result<Policy<T>> {
    if delta.len() != policy.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: policy.weights.len(),
            got: delta.len(),
        });
    }
    for (index, &d) in delta.iter().enumerate() {
        if !d.is_finite() {
            return Err(Error::NonFiniteGradient {
                index,
                value: d.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let weights = policy
        .weights
        .iter()
        .zip(delta)
        .map(|(&w, &d)| w + policy.learning_rate * d)
        .collect();
    Ok(Policy {
        weights,
        learning_rate: policy.learning_rate,
    })
}

/// Fixed-capacity store of recent episode gradients.
#[derive(Debug, Clone)]
pub struct GradientWindow<T> {
    capacity: usize,
    vectors: Vec<Vec<T>>,
}

impl<T: Scalar> GradientWindow<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 2, "a variance window needs at least 2 vectors");
        GradientWindow {
            capacity,
            vectors: Vec::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<T>] {
        &self.vectors
    }

    /// Add a gradient; when the window fills, return its covariance trace
    /// and start the next window.
    pub fn push(&mut self, gradient: Vec<T>) -> Option<T> {
        self.vectors.push(gradient);
        if self.vectors.len() == self.capacity {
            let trace = gradient_variance(self).expect("full window has >= 2 vectors");
            self.vectors.clear();
            Some(trace)
        } else {
            None
        }
    }
}

/// Trace of the sample covariance matrix of the stored gradients: the sum
/// of per-coordinate variances with unbiased `1/(n-1)` normalization.
pub fn gradient_variance<T: Scalar>(window: &GradientWindow<T>) -> Result<T> {
    let vectors = window.vectors();
    if vectors.len() < 2 {
        return Err(Error::WindowTooSmall {
            need: 2,
            got: vectors.len(),
        });
    }
    let n = T::from_config(vectors.len() as f64);
    let dim = vectors[0].len();
    let mut trace = T::zero();
    for j in 0..dim {
        let mean = vectors.iter().map(|v| v[j]).sum::<T>() / n;
        let ss = vectors
            .iter()
            .map(|v| (v[j] - mean) * (v[j] - mean))
            .sum::<T>();
        trace += ss / (n - T::one());
    }
    Ok(trace)
}

enum FeedbackSource<'a> {
    Simulated(&'a Simulator),
    /// Binarized relevance labels (grade > 0) stand in for clicks.
    FullInformation,
}

/// Online training against a simulated user.
///
/// Runs `impressions` episodes of sample-query / rank / observe-clicks /
/// update, logging the online nDCG@10 of every displayed list and the
/// offline test nDCG@10 every `eval_every` impressions. Fully determined
/// by `(config, datasets)`.
pub fn train_online<T: Scalar>(
    config: &TrainConfig,
    train: &Dataset<T>,
    test: &Dataset<T>,
    simulator: &Simulator,
) -> Result<(Policy<T>, MetricsLog)> {
    if config.reward.variant.is_full_information() {
        return Err(Error::InvalidConfig(
            "the dcg reward reads relevance labels; use train_offline_skyline".into(),
        ));
    }
    run_loop(config, train, test, FeedbackSource::Simulated(simulator))
}

/// Full-information skyline: the same loop driven by binarized relevance
/// labels instead of clicks (no user simulation, any gamma including 1).
pub fn train_offline_skyline<T: Scalar>(
    config: &TrainConfig,
    train: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<(Policy<T>, MetricsLog)> {
    if !config.reward.variant.is_full_information() {
        return Err(Error::InvalidConfig(
            "skyline training requires the dcg reward variant".into(),
        ));
    }
    run_loop(config, train, test, FeedbackSource::FullInformation)
}

fn run_loop<T: Scalar>(
    config: &TrainConfig,
    train: &Dataset<T>,
    test: &Dataset<T>,
    feedback: FeedbackSource<'_>,
) -> Result<(Policy<T>, MetricsLog)> {
    config.validate()?;
    if train.feature_dim != test.feature_dim {
        return Err(Error::DimensionMismatch {
            expected: train.feature_dim,
            got: test.feature_dim,
        });
    }

    let mut policy: Policy<T> =
        Policy::zeros(train.feature_dim, T::from_config(config.learning_rate));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = MetricsLog::default();
    let mut window = GradientWindow::new(config.variance_window);
    let mut windows_done = 0usize;

    log.offline_ndcg.push((0, offline_performance(&policy, test, 10)?));

    for i in 0..config.impressions {
        let query = sample_query(train, &mut rng)?;
        let mut episode = run_episode(&policy, query, config.serp_size, &mut rng)?;

        let displayed = episode.displayed_grades();
        let pool = query.grades();
        log.online_ndcg.push(ndcg_vs_ideal::<f64>(&displayed, &pool, 10));

        let clicks = match &feedback {
            FeedbackSource::Simulated(sim) => sim.simulate(&episode, &mut rng),
            FeedbackSource::FullInformation => episode
                .steps
                .iter()
                .map(|s| query.candidates[s.chosen].relevance > 0)
                .collect(),
        };
        episode.set_clicks(clicks)?;

        let delta = episode_gradient(&policy, &episode, &config.reward)?;
        policy = apply_update(&policy, &delta)?;
        if let Some(trace) = window.push(delta) {
            windows_done += 1;
            log.variance_trace
                .push((windows_done, trace.to_f64().unwrap_or(f64::NAN)));
        }

        let count = i + 1;
        if count.is_multiple_of(config.eval_every) {
            log.offline_ndcg
                .push((count, offline_performance(&policy, test, 10)?));
            if let Some(dir) = &config.checkpoint_dir {
                policy.save(&dir.join(format!("checkpoint_{count:08}.json")))?;
            }
        }
    }

    if config.impressions > 0 && !config.impressions.is_multiple_of(config.eval_every) {
        log.offline_ndcg
            .push((config.impressions, offline_performance(&policy, test, 10)?));
    }

    Ok((policy, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clicksim::ClickBehavior;
    use crate::data::{generate_synthetic, Document, Query, SyntheticSpec};
    use crate::policy::log_policy_gradient_subset;
    use crate::rewards::RewardVariant;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn query(n: usize, dim: usize) -> Query<f64> {
        Query {
            query_id: "q".into(),
            candidates: (0..n)
                .map(|i| Document {
                    features: (0..dim)
                        .map(|j| 0.3 * ((i + j) as f64) - 0.5 * (j as f64))
                        .collect(),
                    relevance: (i % 5) as u8,
                    doc_index: i,
                })
                .collect(),
        }
    }

    fn episode_with_clicks<'q>(
        policy: &Policy<f64>,
        q: &'q Query<f64>,
        serp: usize,
        clicks: Vec<bool>,
        seed: u64,
    ) -> Episode<'q, f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ep = run_episode(policy, q, serp, &mut rng).unwrap();
        ep.set_clicks(clicks).unwrap();
        ep
    }

    #[test]
    fn zero_rewards_give_zero_gradient() {
        let q = query(5, 3);
        let policy = Policy::new(vec![0.2, -0.1, 0.4], 0.01);
        let ep = episode_with_clicks(&policy, &q, 3, vec![false; 3], 0);
        let spec = RewardSpec::new(RewardVariant::NaivePos, 0.0, 1.0);
        let delta = episode_gradient(&policy, &ep, &spec).unwrap();
        assert_eq!(delta, vec![0.0; 3]);
    }

    #[test]
    fn single_step_gradient_is_reward_times_log_gradient() {
        let q = query(4, 2);
        let policy = Policy::new(vec![0.5, -0.3], 0.01);
        let ep = episode_with_clicks(&policy, &q, 1, vec![true], 1);
        let spec = RewardSpec::new(RewardVariant::IpsPos, 0.0, 1.0);
        let delta = episode_gradient(&policy, &ep, &spec).unwrap();

        let reward = step_reward::<f64>(&spec, 0, true).unwrap().value;
        let pos = ep.steps[0]
            .state_before
            .iter()
            .position(|&o| o == ep.steps[0].chosen)
            .unwrap();
        let grad =
            log_policy_gradient_subset(&policy, &q.candidates, &ep.steps[0].state_before, pos)
                .unwrap();
        for j in 0..2 {
            assert_abs_diff_eq!(delta[j], reward * grad[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn three_step_bandit_gradient_matches_hand_assembly() {
        let q = query(6, 3);
        let policy = Policy::new(vec![0.1, 0.2, -0.4], 0.01);
        let clicks = [true, false, true];
        let ep = episode_with_clicks(&policy, &q, 3, clicks.to_vec(), 2);
        let spec = RewardSpec::new(RewardVariant::IpsBoth, 0.0, 1.0);
        let delta = episode_gradient(&policy, &ep, &spec).unwrap();

        let mut expected = [0.0; 3];
        for (t, step) in ep.steps.iter().enumerate() {
            let r = step_reward::<f64>(&spec, t, clicks[t]).unwrap().value;
            let pos = step
                .state_before
                .iter()
                .position(|&o| o == step.chosen)
                .unwrap();
            let g = log_policy_gradient_subset(&policy, &q.candidates, &step.state_before, pos)
                .unwrap();
            for j in 0..3 {
                expected[j] += r * g[j];
            }
        }
        for j in 0..3 {
            assert_abs_diff_eq!(delta[j], expected[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn discounting_weights_later_rewards_into_earlier_steps() {
        let q = query(6, 3);
        let policy = Policy::new(vec![0.1, 0.2, -0.4], 0.01);
        let clicks = [false, true, false];
        let ep = episode_with_clicks(&policy, &q, 3, clicks.to_vec(), 3);
        let spec = RewardSpec {
            gamma: 0.5,
            ..RewardSpec::new(RewardVariant::NaivePos, 0.0, 1.0)
        };
        let delta = episode_gradient(&policy, &ep, &spec).unwrap();

        let rewards: Vec<_> = (0..3)
            .map(|t| step_reward::<f64>(&spec, t, clicks[t]).unwrap())
            .collect();
        let mut expected = [0.0; 3];
        for (t, step) in ep.steps.iter().enumerate() {
            let g_t = episode_return(&spec, &rewards, t);
            let pos = step
                .state_before
                .iter()
                .position(|&o| o == step.chosen)
                .unwrap();
            let g = log_policy_gradient_subset(&policy, &q.candidates, &step.state_before, pos)
                .unwrap();
            for j in 0..3 {
                expected[j] += g_t * g[j];
            }
        }
        for j in 0..3 {
            assert_abs_diff_eq!(delta[j], expected[j], epsilon = 1e-12);
        }
        // gamma = 0.5 with a click only at t=1: step 0 still receives signal
        assert!(delta.iter().any(|&d| d != 0.0));
    }

    #[test]
    fn gradient_requires_clicks() {
        let q = query(4, 2);
        let policy = Policy::zeros(2, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ep = run_episode(&policy, &q, 2, &mut rng).unwrap();
        let spec = RewardSpec::new(RewardVariant::NaivePos, 0.0, 1.0);
        assert!(matches!(
            episode_gradient(&policy, &ep, &spec),
            Err(Error::ClicksMissing)
        ));
    }

    #[test]
    fn zero_clicks_distinguish_positive_from_two_sided_rewards() {
        let q = query(5, 3);
        let policy = Policy::new(vec![0.3, 0.0, -0.2], 0.01);
        let ep = episode_with_clicks(&policy, &q, 4, vec![false; 4], 5);
        let pos_only = RewardSpec::new(RewardVariant::IpsPos, 0.0, 1.0);
        let two_sided = RewardSpec::new(RewardVariant::IpsBoth, 0.0, 1.0);
        assert_eq!(
            episode_gradient(&policy, &ep, &pos_only).unwrap(),
            vec![0.0; 3]
        );
        let both = episode_gradient(&policy, &ep, &two_sided).unwrap();
        assert!(both.iter().any(|&d| d != 0.0));
    }

    #[test]
    fn apply_update_moves_along_the_gradient() {
        let policy = Policy::new(vec![0.0, 0.0], 1.0);
        let updated = apply_update(&policy, &[1.0, -1.0]).unwrap();
        assert_eq!(updated.weights, vec![1.0, -1.0]);
        let unchanged = apply_update(&policy, &[0.0, 0.0]).unwrap();
        assert_eq!(unchanged.weights, policy.weights);
    }

    #[test]
    fn apply_update_rejects_non_finite_gradients() {
        let policy = Policy::new(vec![0.0, 0.0], 0.01);
        assert!(matches!(
            apply_update(&policy, &[1.0, f64::NAN]),
            Err(Error::NonFiniteGradient { index: 1, .. })
        ));
        assert!(apply_update(&policy, &[1.0, f64::INFINITY]).is_err());
        assert!(apply_update(&policy, &[1.0]).is_err());
    }

    #[test]
    fn identical_gradients_have_zero_variance() {
        let mut w = GradientWindow::new(3);
        assert!(w.push(vec![0.5, -1.0]).is_none());
        assert!(w.push(vec![0.5, -1.0]).is_none());
        let trace = w.push(vec![0.5, -1.0]).unwrap();
        assert_eq!(trace, 0.0);
        assert!(w.is_empty(), "window resets after completing");
    }

    #[test]
    fn opposite_unit_gradients_have_trace_two() {
        let mut w = GradientWindow::new(2);
        w.push(vec![1.0, 0.0]);
        let trace = w.push(vec![-1.0, 0.0]).unwrap();
        assert_eq!(trace, 2.0);
    }

    #[test]
    fn variance_trace_is_translation_invariant() {
        let raw = [vec![0.2, -0.4], vec![1.0, 0.3], vec![-0.7, 0.9]];
        let offset = [10.0, -3.5];
        let mut a = GradientWindow::new(4);
        let mut b = GradientWindow::new(4);
        for v in &raw {
            a.push(v.clone());
            b.push(v.iter().zip(&offset).map(|(x, o)| x + o).collect());
        }
        let ta = gradient_variance(&a).unwrap();
        let tb = gradient_variance(&b).unwrap();
        assert_abs_diff_eq!(ta, tb, epsilon = 1e-12);
    }

    #[test]
    fn variance_needs_two_vectors() {
        let mut w: GradientWindow<f64> = GradientWindow::new(5);
        assert!(gradient_variance(&w).is_err());
        w.push(vec![1.0]);
        assert!(matches!(
            gradient_variance(&w),
            Err(Error::WindowTooSmall { got: 1, .. })
        ));
    }

    fn small_synthetic() -> crate::data::SyntheticData<f64> {
        generate_synthetic(&SyntheticSpec {
            n_queries: 20,
            docs_per_query: 12,
            feature_dim: 4,
            relevance_distribution: [0.4, 0.2, 0.2, 0.1, 0.1],
            noise_scale: 0.0,
            seed: 9,
        })
        .unwrap()
    }

    fn online_config(variant: RewardVariant, impressions: usize) -> TrainConfig {
        TrainConfig {
            impressions,
            eval_every: 50,
            variance_window: 25,
            ..TrainConfig::new(RewardSpec::new(variant, 0.0, 1.0))
        }
    }

    #[test]
    fn zero_impressions_return_the_initial_policy() {
        let data = small_synthetic();
        let sim = Simulator::new(1.0, ClickBehavior::Perfect).unwrap();
        let config = online_config(RewardVariant::IpsBoth, 0);
        let (policy, log) = train_online(&config, &data.train, &data.test, &sim).unwrap();
        assert_eq!(policy.weights, vec![0.0; 4]);
        assert_eq!(log.online_ndcg.len(), 0);
        assert_eq!(log.offline_ndcg.len(), 1);
        assert_eq!(log.offline_ndcg[0].0, 0);
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let data = small_synthetic();
        let sim = Simulator::new(1.0, ClickBehavior::Noisy).unwrap();
        let config = online_config(RewardVariant::IpsBoth, 120);
        let (pa, la) = train_online(&config, &data.train, &data.test, &sim).unwrap();
        let (pb, lb) = train_online(&config, &data.train, &data.test, &sim).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(la, lb);
        assert_eq!(la.online_ndcg.len(), 120);
        // eval at 0, every 50, plus the final off-cadence point
        let points: Vec<usize> = la.offline_ndcg.iter().map(|&(i, _)| i).collect();
        assert_eq!(points, vec![0, 50, 100, 120]);
        assert_eq!(la.variance_trace.len(), 4);
    }

    #[test]
    fn skyline_ignores_clicks_and_supports_gamma_one() {
        let data = small_synthetic();
        let mut config = online_config(RewardVariant::DcgFullInfo, 60);
        config.reward.gamma = 1.0;
        let (policy, log) = train_offline_skyline(&config, &data.train, &data.test).unwrap();
        assert!(policy.weights.iter().any(|&w| w != 0.0));
        assert_eq!(log.online_ndcg.len(), 60);
    }

    #[test]
    fn variant_and_loop_must_agree() {
        let data = small_synthetic();
        let sim = Simulator::new(1.0, ClickBehavior::Perfect).unwrap();
        let skyline_cfg = online_config(RewardVariant::DcgFullInfo, 10);
        assert!(train_online(&skyline_cfg, &data.train, &data.test, &sim).is_err());
        let online_cfg = online_config(RewardVariant::IpsPos, 10);
        assert!(train_offline_skyline(&online_cfg, &data.train, &data.test).is_err());
    }

    #[test]
    fn all_irrelevant_labels_never_move_the_skyline() {
        let data = generate_synthetic::<f64>(&SyntheticSpec {
            n_queries: 5,
            docs_per_query: 8,
            feature_dim: 3,
            relevance_distribution: [1.0, 0.0, 0.0, 0.0, 0.0],
            noise_scale: 0.0,
            seed: 3,
        })
        .unwrap();
        let config = online_config(RewardVariant::DcgFullInfo, 100);
        let (policy, _) = train_offline_skyline(&config, &data.train, &data.test).unwrap();
        assert_eq!(policy.weights, vec![0.0; 3]);
    }

    #[test]
    fn mismatched_feature_dims_are_rejected() {
        let data = small_synthetic();
        let other = generate_synthetic::<f64>(&SyntheticSpec {
            n_queries: 3,
            docs_per_query: 4,
            feature_dim: 7,
            relevance_distribution: [0.4, 0.2, 0.2, 0.1, 0.1],
            noise_scale: 0.0,
            seed: 1,
        })
        .unwrap();
        let sim = Simulator::new(1.0, ClickBehavior::Perfect).unwrap();
        let config = online_config(RewardVariant::IpsPos, 5);
        assert!(train_online(&config, &data.train, &other.test, &sim).is_err());
    }
}

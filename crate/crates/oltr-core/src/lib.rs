//! Online learning to rank as a Markov decision process.
//!
//! A ranked result list is built one position at a time: the state is the
//! set of still-unranked candidate documents, an action picks one of them,
//! and a softmax policy over linear document scores decides how. Training
//! uses REINFORCE on rewards derived either from relevance labels (the
//! full-information skyline) or from simulated user clicks, where inverse
//! propensity scoring undoes the position bias baked into click data.
//!
//! The crate is organised along the experiment pipeline:
//!
//! * [`data`]: LETOR/SVMlight loading and synthetic dataset generation
//! * [`policy`]: linear scorer, softmax action distribution, log-policy gradient
//! * [`episode`]: rolling out one ranking under a policy
//! * [`clicksim`]: position-biased click simulation
//! * [`rewards`]: reward functions, IPS reshaping and discounted returns
//! * [`learner`]: the online training loop and its skyline counterpart
//! * [`metrics`]: nDCG, online performance and significance testing
//!
//! All numeric kernels are generic over the scalar type via [`Scalar`]
//! (`f32` or `f64`); the `*64` aliases below cover the common case.

pub mod clicksim;
pub mod data;
pub mod episode;
mod error;
pub mod learner;
pub mod metrics;
pub mod policy;
pub mod rewards;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision aliases for the main pipeline types.
pub type Document64 = data::Document<f64>;
pub type Query64 = data::Query<f64>;
pub type Dataset64 = data::Dataset<f64>;
pub type Policy64 = policy::Policy<f64>;
pub type ActionDistribution64 = policy::ActionDistribution<f64>;
pub type Episode64<'q> = episode::Episode<'q, f64>;

/// Single-precision aliases.
pub type Document32 = data::Document<f32>;
pub type Query32 = data::Query<f32>;
pub type Dataset32 = data::Dataset<f32>;
pub type Policy32 = policy::Policy<f32>;

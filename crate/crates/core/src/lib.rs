//! Evolved Hebbian plasticity rules with K-Means rule merging.
//!
//! A feedforward controller's synapses are governed by a small set of local
//! ABCD learning rules. The rule parameters (not the weights) are optimized
//! with a mirrored-sampling evolution strategy, and during evolution similar
//! rules are periodically merged by K-Means, halving the rule count each time.
//!
//! The numerical core ([`net`], [`rules`], [`kmeans`], [`es`]) is generic over
//! the scalar type through [`Scalar`]. The harness, environments and I/O run on
//! `f64`; the aliases below name the concrete types they use.

pub mod env;
pub mod error;
pub mod es;
pub mod harness;
pub mod io;
pub mod kmeans;
pub mod net;
pub mod rules;
pub mod scalar;
pub(crate) mod seed;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Plastic or static network on `f64`.
pub type Network = net::NetworkState<f64>;
/// Rule set on `f64`.
pub type Rules = rules::RuleSet<f64>;
/// Single ABCD rule on `f64`.
pub type Rule = rules::RuleParams<f64>;
/// Evolution-strategy state on `f64`.
pub type Es = es::EsState<f64>;
/// Network on `f32`, for memory-bound experiments.
pub type Network32 = net::NetworkState<f32>;
/// Rule set on `f32`.
pub type Rules32 = rules::RuleSet<f32>;
/// Evolution-strategy state on `f32`.
pub type Es32 = es::EsState<f32>;

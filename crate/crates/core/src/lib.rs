//! Multilevel splitting for static rare-event probabilities.
//!
//! A static problem `P[S(X) <= gamma]` with independent marginals is embedded in a
//! monotone continuous-time Markov process: each coordinate is driven by an independent
//! Gamma process `G_i(t)` and mapped through its marginal quantile, so the embedded path
//! has exactly the law of `X` at `t = 1`. Poisson marginals are simulated natively as
//! Poisson processes. A fixed-effort splitting estimator then walks a schedule of times
//! `0 < t_1 < ... < t_L = 1`, keeping only paths still below the threshold.
//!
//! Modules:
//! - [`dist`]: marginal laws, tail-stable quantiles and special functions.
//! - [`process`]: Gamma and Poisson process increments, seeded streams.
//! - [`model`]: problem description, embedding and importance functions.
//! - [`split`]: the splitting estimator and its replication driver.
//! - [`sched`]: level-placement heuristics.
//! - [`baseline`]: naive Monte Carlo and Poisson importance sampling.
//! - [`stats`]: replication statistics, reports and exact oracles.
//! - [`scenario`]: scenario JSON parsing and built-in table presets.
//! - [`pipeline`]: one-call estimation with resolved defaults.

// reference constants are kept at full published precision; `!(x > 0.0)` rejects NaN on purpose
#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod dist;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod process;
pub mod scenario;
pub mod sched;
pub mod split;
pub mod stats;

pub use error::{Error, Result};

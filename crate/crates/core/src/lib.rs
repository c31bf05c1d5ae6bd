//! Privacy-preserving dynamic pricing with demand learning.
//!
//! This crate implements a contextual pricing pipeline in which every
//! statistic the seller's policy consumes is released under differential
//! privacy with respect to the customer interaction stream:
//!
//! * [`covariance`] — a tree-aggregation protocol that continually releases
//!   the noisy second-moment matrix of the observed features, paying each
//!   sample into at most ⌈log₂ T⌉ partial sums.
//! * [`mle`] — a constrained generalized-linear-model estimator privatized
//!   by objective perturbation (one Gaussian tilt of the loss per release).
//! * [`policy`] — the pricing rule: periods are priced from cached private
//!   releases via an upper-confidence-bound rule over a price grid, and the
//!   estimate is refreshed only when the private determinant doubles.
//! * [`budget`] — the (ε, δ) accounting used to calibrate all of the above,
//!   including the per-level split inside the tree and the per-refresh split
//!   across the at most `d_inf` estimator releases.
//! * [`glm`] — the exponential-family demand model (Gaussian / logistic with
//!   a temperature), its links, bounds, and sampling.
//! * [`market`] — the synthetic market: feature maps, the revenue oracle,
//!   regret and consumer-surplus tracking, and input-perturbation noising.
//! * [`harness`] — experiment configuration, seeded multi-trial execution,
//!   and CSV/JSON emission for the benchmark scenarios.
//!
//! The accompanying `dp-pricer` binary drives [`harness`] from the command
//! line.

pub mod budget;
pub mod covariance;
pub mod error;
pub mod glm;
pub mod linalg;
pub mod market;
pub mod mle;
pub mod policy;

pub mod harness;

pub use budget::PrivacyBudget;
pub use error::{Error, Result};
pub use glm::{GlmKind, GlmSpec};
pub use linalg::SymMat;

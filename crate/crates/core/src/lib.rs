//! Causally abstracted multi-armed bandits.
//!
//! A base bandit is solved with the help of a cheaper, coarser abstract
//! bandit related to it by an intervention map `omega` and a reward map
//! `tau`. The crate provides:
//!
//! - [`bandit`]: arm statistics, the [`Environment`](bandit::Environment)
//!   contract, intervention maps and regret accounting.
//! - [`metrics`]: one-dimensional 2-Wasserstein distances and estimators of
//!   the interventional-consistency and reward-discrepancy errors.
//! - [`algorithms`]: UCB and AT-UCB (abstract thresholding followed by UCB on
//!   the surviving base arms).
//! - [`sirs`]: stochastic community SIRS simulators used as base and
//!   abstract environments.
//! - [`theory`]: closed-form validators for the regret analysis on Gaussian
//!   instances.
//! - [`harness`]: configuration, experiment commands and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod bandit;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod sirs;
pub mod stream;
pub mod theory;

pub use error::{CamabError, Result};
pub use stream::{Stream, StreamRng};

//! Trustworthy-ML toolkit: group fairness metrics, differential-privacy and
//! sparsification primitives, a deterministic federated-learning simulator,
//! a fuzzy-rule clinical explainer, CART triage with confidence rerouting,
//! and a gradient-reversal debiased priority ranker.

pub mod cli;
pub mod data_io;
pub mod equity;
pub mod error;
pub mod fairness;
pub mod fedsim;
pub mod fuzzy;
pub mod output;
pub mod privacy;
pub mod rng;
pub mod triage;

pub use error::{Error, Result};

//! Churn-constrained classifier training via distillation against a base model.
//!
//! Retraining a deployed classifier on fresh data usually changes many
//! predictions that did not need to change. This crate treats the deployed
//! model as a distillation teacher: training against labels mixed as
//! `λ·e_y + (1−λ)·g(x)` minimizes a convex combination of empirical risk and
//! empirical churn toward the base model `g`, which is the Lagrangian of the
//! churn-constrained problem `min R̂(h) s.t. Ĉ(h) ≤ ε`.
//!
//! The pieces:
//!
//! - [`simplex`]: probability vectors, proper scoring functions, and the
//!   risk/churn estimators.
//! - [`oracle`]: closed-form minimizers and brute-force grid search used as
//!   ground truth against everything trained.
//! - [`nn`]: a small fully-connected softmax classifier with manual backprop,
//!   Adam, and early stopping.
//! - [`targets`]: label transformations (distillation, anchor, smoothing,
//!   mixup) and co-distillation training.
//! - [`algorithm`]: the λ-grid sweep plus the constrained convex program over
//!   the ensemble simplex.
//! - [`data`] / [`experiment`]: dataset ingestion, synthetic generators, the
//!   multi-baseline experiment runner, and report emission.
//! - [`verify`]: the executable contract checks binding trained artifacts to
//!   the oracles.

pub mod algorithm;
pub mod data;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod oracle;
pub(crate) mod seeds;
pub mod simplex;
pub mod synth;
pub mod targets;
pub mod verify;

pub use error::{Error, Result};
pub use simplex::{ProbabilityVector, Scoring};

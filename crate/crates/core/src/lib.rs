//! Doubly robust estimation of an outcome mean when nonresponse depends on
//! the outcome itself.
//!
//! The response mechanism follows an exponential tilting model
//! `P(R=1 | y, z, u) = expit{eta(z, u; xi) + h(y, z, u; gamma)}`, and an
//! instrument `Z` that is independent of the outcome given the baseline
//! covariates `U` identifies the tilting parameter `gamma`. Two estimators of
//! `(mu, gamma)` are provided, both consistent when the baseline response
//! index is correct and at least one of the instrument and outcome nuisance
//! models is correct:
//!
//! * [`inference::estimate_phi_tilde`]: inverse probability weighted moments.
//! * [`inference::estimate_phi_hat`]: the same moments augmented with the
//!   nonrespondent outcome law (binary outcome and instrument).
//!
//! Variances come from the sandwich of the full stacked estimating system.
//! The [`simulation`] module runs the seeded Monte Carlo design with the five
//! misspecification scenarios and [`oracle`] gives exact expectations on a
//! small discrete population.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod formula;
pub mod inference;
pub mod models;
pub mod moments;
pub mod oracle;
pub mod simulation;
pub mod solver;
mod summation;

pub use data::{Dataset, ObservedRecord, ParamLayout, ParamVector};
pub use error::{Error, Result};
pub use formula::{DesignFormula, Term};
pub use inference::{EstimationResult, EstimatorId};
pub use models::{ModelSpec, OutcomeKind};
pub use solver::{SolveOutcome, SolverConfig};

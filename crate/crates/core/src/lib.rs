//! Bayesian and fixed false-alarm quickest detection of a disorder in a
//! compound Poisson process with exponential jumps.
//!
//! * [`model`]: parameters, thresholds `B̄`, `B̂` and regime classification.
//! * [`posterior`]: exact posterior dynamics and a direct Bayes oracle.
//! * [`bayes`]: closed-form value function and optimal boundary `B*`.
//! * [`variational`]: false-alarm probability `u(π; B)` and the boundary `B(α)`.
//! * [`simulate`]: event-driven Monte Carlo of threshold rules.
//! * [`verify`] and [`cli`]: invariant suite and command-line front end.

pub mod bayes;
pub mod cli;
pub mod error;
pub mod model;
pub mod posterior;
pub mod quad;
pub mod roots;
pub mod simulate;
pub mod variational;
pub mod verify;

pub use bayes::{solve_bayes, BayesSolution};
pub use error::{DisorderError, Result};
pub use model::{classify_case, CaseLabel, ModelParams, Preset};
pub use simulate::{RiskEstimate, SimConfig};
pub use variational::{solve_variational, VariationalSolution};

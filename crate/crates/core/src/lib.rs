//! Covariate and random-effect correlation selection for nonlinear
//! mixed-effects models.
//!
//! The penalized maximum-likelihood problem
//!
//! ```text
//! argmax  l(theta) - lambda_beta * |W_beta o beta|_1 - lambda_gamma * |W_gamma o Gamma_-|_1
//! ```
//!
//! is solved with a stochastic approximation proximal gradient solver
//! ([`sapg`]). The two regularization parameters are calibrated by
//! minimizing BIC ([`likelihood`]) with a particle swarm using warm
//! restarts, or with a plain grid ([`pso`]).
//!
//! The covariance of the log-normal individual parameters is handled in
//! modified-Cholesky form `Omega = Delta Gamma Gamma^T Delta` ([`model`]).

pub mod error;
pub mod likelihood;
pub mod mcmc;
pub mod model;
pub mod pk;
pub mod pso;
pub mod sapg;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use likelihood::{bic, loglik_is, refit_support, IsConfig, LogLikEstimate, SupportMask};
pub use mcmc::{mh_sweep, suffstats_from_sample, ChainState, SuffStats};
pub use model::{
    assemble_omega, build_design_matrix, complete_loglik, decompose_omega, Dataset, ModelDims,
    PenaltyWeights, SubjectRecord, ThetaParams,
};
pub use pk::{DosingRegimen, PkParams, StructuralModel, TwoCompartment};
pub use pso::{grid_search, pso_select, PsoConfig, SwarmResult};
pub use sapg::{sapg_run, Lambda, SapgConfig, SapgOutput, StepMode, WarmStart};
pub use sim::{simulate_dataset, SimScenario};

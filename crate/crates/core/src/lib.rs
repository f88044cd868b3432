//! Monte Carlo and quadrature toolkit for the path-measure representation of
//! the polaron's effective mass: interval point processes, Gaussian functionals
//! of marked configurations, the mark-integrated kernels, and estimators for
//! the finite-horizon diffusion constant.

// `!(x > 0.0)` is deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod gaussian;
pub mod kernels;
pub mod model;
pub mod pointprocess;
pub mod quad;
pub mod verify;

pub use error::{Error, Result};
pub use estimator::{
    alpha_sweep, dormant_fraction_mcmc, mcmc_diffusion, optimal_c, run_chain, run_chains, theoretical_bound,
    upper_bound_mc, ChainSummary, EstimateResult, McmcConfig, SweepRow, SweepTable, UpperBoundEstimate,
    UpperBoundOptions,
};
pub use gaussian::{phi, sigma2_disjoint, sigma2_exact, sigma2_grad_u, sigma2_mc_oracle, GaussianWorkspace};
pub use kernels::{c_gamma_d, f_eps, h_eps, kappa_conditional, p_eps, NuMeasure, QuadratureSpec, Threshold};
pub use model::{DensitySpec, MemoryDensity, ModelConfig, ModelParams, ValidationReport};
pub use nalgebra::{DMatrix, DVector};
pub use pointprocess::{
    independent_marking, sample_gamma, sample_thinned_marked, Interval, IntervalConfig, MarkedConfig,
    ThinnedIntensity,
};

//! Deep-linear-network benchmark core: the regression model, random task
//! generation with exact ground-truth local learning coefficients, five
//! stochastic-gradient MCMC samplers, and the coefficient estimator.
//!
//! Everything is a pure function of explicit seeds; see the repository
//! README for the stream layout.

pub mod dataset;
pub mod dln;
pub mod estimator;
pub mod llc;
pub mod samplers;
pub mod seeds;
pub mod taskgen;
pub mod volume;

pub use dataset::{sample_batch, DatasetSpec};
pub use dln::{
    batch_loss, batch_loss_and_gradient, batch_loss_gradient, composite_matrix, forward, Batch,
    DlnArchitecture, DlnParams,
};
pub use estimator::{estimate_llc, multi_chain_estimate, wbic_beta, EstimatorConfig, LlcEstimate};
pub use llc::{analytic_llc, deltas, find_sigma, ComplementBound, LlcValue, SigmaDecomposition};
pub use samplers::{run_chain, ChainTrace, CommonHypers, SamplerConfig, SamplerKind};
pub use taskgen::{
    builtin_class, builtin_classes, generate_task, sample_architecture, sample_true_params,
    true_rank, DataParams, ModelClass, TaskSpec,
};
pub use volume::{mc_volume_exponent, population_loss, VolumeConfig, VolumeEstimate};

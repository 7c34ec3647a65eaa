//! Locally differentially private online federated learning with
//! temporally correlated noise.
//!
//! The library simulates a server coordinating n learners over R
//! communication rounds of tau local gradient steps each. Privacy noise is
//! shaped by a factorization A = B·C of the prefix-sum query matrix:
//! i.i.d. Gaussian noise calibrated against the columns of C is added once
//! and re-linearized through B, so the noise in the released models is
//! temporally correlated. The identity split (C = I) recovers independent
//! per-step noise, the binary tree and Toeplitz constructions give the
//! correlated mechanisms, and externally optimized factors can be loaded
//! from file.
//!
//! Modules
//! - [`factorization`]: building, loading, validating factorizations.
//! - [`privacy`]: (epsilon, delta) -> zCDP -> noise variance calibration.
//! - [`noise`]: per-learner streaming channels producing noise increments.
//! - [`streams`]: loss oracles, clipping, synthetic non-IID generators.
//! - [`federation`]: the round-synchronous simulation loop and diagnostics.
//! - [`metrics`]: round optima, dynamic/static regret, trace CSV.

pub mod error;
pub mod factorization;
pub mod federation;
pub mod matrix;
pub mod metrics;
pub mod noise;
pub mod privacy;
pub mod rng;
pub mod streams;

pub use error::{Error, Result};
pub use factorization::{
    build_binary_tree, build_identity, build_toeplitz, factorization_stats, load_factorization,
    toeplitz_norm_report, FactorKind, Factorization, FactorizationStats, ToeplitzNormReport,
};
pub use federation::{
    local_step, run_round, run_simulation, DataSpec, DiagnosticsFlags, DiagnosticsReport,
    GlobalState, LearnerState, NoiseSpec, RoundParams, SimConfig, SimOutput,
};
pub use metrics::{
    build_trace, compute_round_optima, cr_analog, global_optimum, round_optimum, OptimizerBudget,
    RegretRow, RegretTrace, RoundOptimum,
};
pub use noise::{open_channel, NoiseChannel};
pub use privacy::{calibrate, rho_from_eps_delta, sensitivity, PrivacyBudget};
pub use streams::{
    clip_gradient, gen_drifting_quadratic, gen_heterogeneous_logistic, logistic_loss_grad,
    loss_grad, quadratic_loss_grad, DataStream, LossKind, SamplePayload, StreamSample, StreamSpec,
};

//! Privacy calibration: convert an (epsilon, delta) budget into a
//! per-learner Gaussian noise variance through zCDP.
//!
//! The chain is: (epsilon, delta) -> rho (zCDP), clip bound + factorization
//! -> worst-case sensitivity of C·G_i, Gaussian mechanism -> per-coordinate
//! variance V_i^2 = sensitivity^2 / (2 rho).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::factorization::{factorization_stats, Factorization};

/// Resolved privacy parameters for one learner.
#[derive(Clone, Debug, Serialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    /// zCDP parameter derived from (epsilon, delta).
    pub rho: f64,
    /// Gradient-norm bound B_g enforced by clipping.
    pub clip_bound: f64,
    /// Per-coordinate Gaussian variance V_i^2.
    pub noise_variance: f64,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::invalid("epsilon", format!("must be positive and finite, got {epsilon}")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_nan() || delta <= 0.0 || delta > 1.0 {
        return Err(Error::invalid("delta", format!("must lie in (0, 1], got {delta}")));
    }
    Ok(())
}

/// zCDP parameter rho = (sqrt(epsilon + ln(1/delta)) - sqrt(ln(1/delta)))^2.
/// Monotone increasing in both epsilon and delta; collapses to epsilon at
/// delta = 1.
pub fn rho_from_eps_delta(epsilon: f64, delta: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    check_delta(delta)?;
    let l = (1.0 / delta).ln();
    let r = (epsilon + l).sqrt() - l.sqrt();
    Ok(r * r)
}

/// Worst-case change of C·G_i when one gradient row is replaced:
/// 2 * clip_bound * max_k ||c^k||.
pub fn sensitivity(clip_bound: f64, f: &Factorization) -> Result<f64> {
    if !clip_bound.is_finite() || clip_bound < 0.0 {
        return Err(Error::invalid("clip_bound", format!("must be nonnegative, got {clip_bound}")));
    }
    let stats = factorization_stats(f, 1)?;
    Ok(2.0 * clip_bound * stats.max_col_sq_norm.sqrt())
}

/// Full calibration: V_i^2 = sensitivity^2 / (2 rho)
///                        = 2 * clip_bound^2 * max ||c^k||^2 / rho.
pub fn calibrate(
    epsilon: f64,
    delta: f64,
    clip_bound: f64,
    f: &Factorization,
) -> Result<PrivacyBudget> {
    if !clip_bound.is_finite() || clip_bound <= 0.0 {
        return Err(Error::invalid("clip_bound", format!("must be positive, got {clip_bound}")));
    }
    let rho = rho_from_eps_delta(epsilon, delta)?;
    let delta_sens = sensitivity(clip_bound, f)?;
    Ok(PrivacyBudget {
        epsilon,
        delta,
        rho,
        clip_bound,
        noise_variance: delta_sens * delta_sens / (2.0 * rho),
    })
}

//! Round-synchronous execution: tau noisy local steps per learner, learner
//! aggregates g_i^r = (x^r - z_i^{r,tau}) / (eta tau), server averaging with
//! the effective step eta_tilde = eta·eta_g·tau, repeated for R rounds.
//!
//! Two bookkeeping identities run as optional diagnostics: the noise-free
//! shadow recursion x_xi^{r+1} = x_xi^r - eta_tilde·g^r, where
//! x_xi^r = x^r + (eta_tilde/tau)·b^{r-1,tau-1}·xi_bar, and (with x^0 = 0)
//! the post-processing identity
//! x^r + eta_tilde·(1/(n tau))·sum_i (grad prefix + b·xi_i) = 0.
//! A third mode re-runs the whole simulation through the prefix-sum
//! formulation (S differences) and compares trajectories.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Deserialize;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factorization::{
    build_binary_tree, build_identity, build_toeplitz, load_factorization, FactorKind,
    Factorization,
};
use crate::matrix::pairwise_mean;
use crate::metrics::{
    build_trace, compute_round_optima, OptimizerBudget, RegretTrace, RoundOptimum,
};
use crate::noise::{open_channel, NoiseChannel};
use crate::privacy::{calibrate, PrivacyBudget};
use crate::streams::{
    clip_gradient, gen_drifting_quadratic, gen_heterogeneous_logistic, loss_grad, DataStream,
    StreamSample,
};

pub const VIRTUAL_ITERATE_TOLERANCE: f64 = 1e-8;
pub const PREFIX_IDENTITY_TOLERANCE: f64 = 1e-6;
pub const DUAL_FORM_TOLERANCE: f64 = 1e-9;

/// Noise budget: an (epsilon, delta) pair to calibrate from, or an explicit
/// per-coordinate standard deviation (which wins when present).
#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    EpsilonDelta { epsilon: f64, delta: f64 },
    ExplicitStd { std: f64 },
}

/// Stream generator selection, mirrored from the config file. `table`
/// replays a sample-table CSV dumped by another run (or implementation).
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSpec {
    Logistic { alpha: f64, beta: f64 },
    Quadratic { drift_magnitude: f64, drift_period: usize },
    Table { path: String },
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsFlags {
    #[serde(default)]
    pub virtual_iterate: bool,
    #[serde(default)]
    pub dual_form_check: bool,
}

/// Simulation configuration; field names double as the JSON schema.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    #[serde(rename = "R")]
    pub rounds: usize,
    pub tau: usize,
    pub dim: usize,
    pub eta: f64,
    pub eta_g: f64,
    pub clip_bound: f64,
    /// Factorization kind name, `noiseless`, or a factorization file path.
    pub mechanism: String,
    pub budget: NoiseSpec,
    pub master_seed: u64,
    pub data_spec: DataSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsFlags,
    /// Initial model; zero vector when absent (required by the prefix
    /// post-processing identity).
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Run learners within a round on the thread pool. Output is identical
    /// to sequential mode.
    #[serde(default)]
    pub parallel: bool,
    /// Also compute static regret for logistic streams (extra offline solve).
    #[serde(default)]
    pub static_regret: bool,
    /// Offline round-optimum solver budget; library default when absent.
    #[serde(default)]
    pub opt_budget: Option<OptBudgetSpec>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OptBudgetSpec {
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl SimConfig {
    /// Effective server step eta_tilde = eta · eta_g · tau.
    pub fn effective_server_step(&self) -> f64 {
        self.eta * self.eta_g * self.tau as f64
    }

    pub fn total_steps(&self) -> usize {
        self.rounds * self.tau
    }

    pub fn is_noiseless(&self) -> bool {
        self.mechanism == "noiseless"
    }

    pub fn optimizer_budget(&self) -> OptimizerBudget {
        match self.opt_budget {
            Some(OptBudgetSpec { grad_tol, max_iters }) => OptimizerBudget { grad_tol, max_iters },
            None => OptimizerBudget::default(),
        }
    }

    /// Every violated field, for field-by-field reporting.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.n == 0 {
            errs.push("n: must be at least 1".into());
        }
        if self.rounds == 0 {
            errs.push("R: must be at least 1".into());
        }
        if self.tau == 0 {
            errs.push("tau: must be at least 1".into());
        }
        if self.dim == 0 {
            errs.push("dim: must be at least 1".into());
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            errs.push(format!("eta: must be positive, got {}", self.eta));
        }
        if !(self.eta_g > 0.0 && self.eta_g.is_finite()) {
            errs.push(format!("eta_g: must be positive, got {}", self.eta_g));
        }
        if !(self.clip_bound > 0.0 && self.clip_bound.is_finite()) {
            errs.push(format!("clip_bound: must be positive, got {}", self.clip_bound));
        }
        match self.budget {
            NoiseSpec::EpsilonDelta { epsilon, delta } => {
                if !(epsilon > 0.0 && epsilon.is_finite()) {
                    errs.push(format!("budget.epsilon: must be positive, got {epsilon}"));
                }
                if !(delta > 0.0 && delta <= 1.0) {
                    errs.push(format!("budget.delta: must lie in (0, 1], got {delta}"));
                }
            }
            NoiseSpec::ExplicitStd { std } => {
                if !(std >= 0.0 && std.is_finite()) {
                    errs.push(format!("budget.std: must be nonnegative, got {std}"));
                }
            }
        }
        match &self.data_spec {
            DataSpec::Logistic { alpha, beta } => {
                if *alpha < 0.0 {
                    errs.push(format!("data_spec.alpha: must be nonnegative, got {alpha}"));
                }
                if *beta < 0.0 {
                    errs.push(format!("data_spec.beta: must be nonnegative, got {beta}"));
                }
            }
            DataSpec::Quadratic { drift_period, .. } => {
                if *drift_period == 0 {
                    errs.push("data_spec.drift_period: must be at least 1".into());
                }
            }
            DataSpec::Table { path } => {
                if path.is_empty() {
                    errs.push("data_spec.path: must name a sample-table CSV".into());
                }
            }
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != self.dim {
                errs.push(format!(
                    "x0: length {} does not match dim {}",
                    x0.len(),
                    self.dim
                ));
            }
        }
        if let Some(b) = self.opt_budget {
            if b.grad_tol.is_nan() || b.grad_tol <= 0.0 {
                errs.push("opt_budget.grad_tol: must be positive".into());
            }
            if b.max_iters == 0 {
                errs.push("opt_budget.max_iters: must be at least 1".into());
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid("config", errs.join("; ")))
        }
    }

    /// Build the factorization this config names, sized to R·tau steps.
    pub fn resolve_factorization(&self) -> Result<Factorization> {
        let steps = self.total_steps();
        if self.is_noiseless() {
            return build_identity(steps);
        }
        match self.mechanism.parse::<FactorKind>() {
            Ok(FactorKind::BinaryTree) => build_binary_tree(steps),
            Ok(FactorKind::Toeplitz) => build_toeplitz(steps),
            Ok(FactorKind::Identity) => build_identity(steps),
            Ok(FactorKind::External) => Err(Error::invalid(
                "mechanism",
                "`external` requires a factorization file path",
            )),
            Err(_) => {
                let f = load_factorization(Path::new(&self.mechanism))?;
                if f.steps() != steps {
                    return Err(Error::ShapeMismatch {
                        expected: format!("factorization with steps = R·tau = {steps}"),
                        got: format!("{} steps in {}", f.steps(), self.mechanism),
                    });
                }
                Ok(f)
            }
        }
    }

    /// Resolve the per-coordinate noise std: explicit std wins, otherwise
    /// calibrate from (epsilon, delta, clip bound, mechanism). `noiseless`
    /// forces zero.
    pub fn resolve_noise(&self, f: &Factorization) -> Result<(f64, Option<PrivacyBudget>)> {
        if self.is_noiseless() {
            return Ok((0.0, None));
        }
        match self.budget {
            NoiseSpec::ExplicitStd { std } => Ok((std, None)),
            NoiseSpec::EpsilonDelta { epsilon, delta } => {
                let budget = calibrate(epsilon, delta, self.clip_bound, f)?;
                Ok((budget.noise_variance.sqrt(), Some(budget)))
            }
        }
    }

    /// Materialize the data stream this config describes, seeded by
    /// master_seed.
    pub fn build_stream(&self) -> Result<DataStream> {
        match &self.data_spec {
            DataSpec::Logistic { alpha, beta } => gen_heterogeneous_logistic(
                self.n,
                self.rounds,
                self.tau,
                self.dim,
                *alpha,
                *beta,
                self.master_seed,
            ),
            DataSpec::Quadratic {
                drift_magnitude,
                drift_period,
            } => gen_drifting_quadratic(
                self.n,
                self.rounds,
                self.tau,
                self.dim,
                *drift_magnitude,
                *drift_period,
                self.master_seed,
            ),
            DataSpec::Table { path } => {
                let stream =
                    DataStream::load_csv(Path::new(path), self.n, self.rounds, self.tau)?;
                if stream.dim != self.dim {
                    return Err(Error::ShapeMismatch {
                        expected: format!("table with dim {}", self.dim),
                        got: format!("dim {} in {path}", stream.dim),
                    });
                }
                Ok(stream)
            }
        }
    }
}

/// One learner's state: local iterate, noise channel, round-start snapshot.
/// The gradient prefix fields feed the diagnostics identities only; the
/// learning path never reads them.
#[derive(Clone, Debug)]
pub struct LearnerState {
    pub learner_id: u64,
    pub z: Vec<f64>,
    pub channel: NoiseChannel,
    pub round_start: Vec<f64>,
    pub grad_prefix: Vec<f64>,
    pub round_grad_sum: Vec<f64>,
}

impl LearnerState {
    pub fn new(learner_id: u64, dim: usize, channel: NoiseChannel) -> Self {
        Self {
            learner_id,
            z: vec![0.0; dim],
            channel,
            round_start: vec![0.0; dim],
            grad_prefix: vec![0.0; dim],
            round_grad_sum: vec![0.0; dim],
        }
    }
}

#[derive(Clone, Debug)]
pub struct GlobalState {
    pub x: Vec<f64>,
    pub round: usize,
    /// Noise-free shadow iterate, tracked when diagnostics are on.
    pub virtual_x: Option<Vec<f64>>,
}

impl GlobalState {
    pub fn new(x: Vec<f64>) -> Self {
        Self {
            x,
            round: 0,
            virtual_x: None,
        }
    }
}

/// One local update: z <- z - eta (clip(grad f(z)) + noise increment).
pub fn local_step(
    ls: &mut LearnerState,
    sample: &StreamSample,
    eta: f64,
    clip_bound: f64,
) -> Result<()> {
    let (_, grad) = loss_grad(&ls.z, sample)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            learner_id: sample.learner_id,
            round: sample.round,
            step: sample.step,
        });
    }
    let clipped = clip_gradient(&grad, clip_bound);
    let inc = ls.channel.next_increment()?;
    for ((z, g), nz) in ls.z.iter_mut().zip(&clipped).zip(&inc) {
        *z -= eta * (g + nz);
    }
    for (p, g) in ls.grad_prefix.iter_mut().zip(&clipped) {
        *p += g;
    }
    for (s, g) in ls.round_grad_sum.iter_mut().zip(&clipped) {
        *s += g;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug)]
pub struct RoundParams {
    pub eta: f64,
    pub eta_g: f64,
    pub tau: usize,
    pub clip_bound: f64,
    pub parallel: bool,
}

impl RoundParams {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self {
            eta: cfg.eta,
            eta_g: cfg.eta_g,
            tau: cfg.tau,
            clip_bound: cfg.clip_bound,
            parallel: cfg.parallel,
        }
    }

    fn effective_step(&self) -> f64 {
        self.eta * self.eta_g * self.tau as f64
    }
}

fn learner_round(
    ls: &mut LearnerState,
    x: &[f64],
    samples: &[StreamSample],
    p: &RoundParams,
) -> Result<()> {
    if samples.len() != p.tau {
        return Err(Error::SampleCountMismatch {
            learner_id: ls.learner_id,
            expected: p.tau,
            got: samples.len(),
        });
    }
    ls.z.copy_from_slice(x);
    ls.round_start.copy_from_slice(x);
    for s in &mut ls.round_grad_sum {
        *s = 0.0;
    }
    for sample in samples {
        local_step(ls, sample, p.eta, p.clip_bound)?;
    }
    Ok(())
}

/// Execute one round: every learner starts from gs.x, runs tau local steps,
/// reports g_i^r = (x^r - z_i^{r,tau})/(eta tau); the server takes
/// x^{r+1} = x^r - eta_tilde · mean_i g_i^r (pairwise mean in learner order,
/// so sequential and parallel modes agree bit for bit).
pub fn run_round(
    gs: &GlobalState,
    learners: &mut [LearnerState],
    round_data: &[&[StreamSample]],
    p: &RoundParams,
) -> Result<GlobalState> {
    if round_data.len() != learners.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} learner sample lists", learners.len()),
            got: format!("{}", round_data.len()),
        });
    }
    let x = &gs.x;
    if p.parallel {
        learners
            .par_iter_mut()
            .zip(round_data.par_iter())
            .try_for_each(|(ls, samples)| learner_round(ls, x, samples, p))?;
    } else {
        for (ls, samples) in learners.iter_mut().zip(round_data) {
            learner_round(ls, x, samples, p)?;
        }
    }

    let inv_eta_tau = 1.0 / (p.eta * p.tau as f64);
    let aggregates: Vec<Vec<f64>> = learners
        .iter()
        .map(|ls| {
            x.iter()
                .zip(&ls.z)
                .map(|(xr, z)| (xr - z) * inv_eta_tau)
                .collect()
        })
        .collect();
    let mean = pairwise_mean(&aggregates);
    let eta_tilde = p.effective_step();
    let next_x: Vec<f64> = x.iter().zip(&mean).map(|(xr, g)| xr - eta_tilde * g).collect();
    Ok(GlobalState {
        x: next_x,
        round: gs.round + 1,
        virtual_x: gs.virtual_x.clone(),
    })
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct DiagnosticsReport {
    pub virtual_iterate_checked: bool,
    pub max_virtual_residual: f64,
    pub prefix_identity_checked: bool,
    pub max_prefix_identity_residual: f64,
    pub dual_form_checked: bool,
    pub max_dual_form_deviation: f64,
}

pub struct SimOutput {
    pub trace: RegretTrace,
    pub final_model: Vec<f64>,
    pub diagnostics: DiagnosticsReport,
    /// Resolved per-coordinate noise std V_i.
    pub noise_std: f64,
    /// Present when the std was calibrated from (epsilon, delta).
    pub privacy: Option<PrivacyBudget>,
}

/// Prefix-sum formulation of a learner: S = gradient prefix + b^k·xi via
/// the channel's direct row product, local update from S differences. An
/// independent arithmetic path used for the equivalence diagnostic.
struct PrefixFormLearner {
    z: Vec<f64>,
    channel: NoiseChannel,
    grad_prefix: Vec<f64>,
    s_prev: Vec<f64>,
}

impl PrefixFormLearner {
    fn round(
        &mut self,
        x: &[f64],
        samples: &[StreamSample],
        p: &RoundParams,
    ) -> Result<()> {
        self.z.clear();
        self.z.extend_from_slice(x);
        for sample in samples {
            let (_, grad) = loss_grad(&self.z, sample)?;
            let clipped = clip_gradient(&grad, p.clip_bound);
            for (acc, g) in self.grad_prefix.iter_mut().zip(&clipped) {
                *acc += g;
            }
            let s = self.channel.noisy_prefix(&self.grad_prefix)?;
            self.channel.next_increment()?;
            for ((z, si), sp) in self.z.iter_mut().zip(&s).zip(&self.s_prev) {
                *z -= p.eta * (si - sp);
            }
            self.s_prev = s;
        }
        Ok(())
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Run the full simulation. Precomputed round optima may be supplied when
/// several runs share one stream (paired mechanism comparisons); otherwise
/// they are solved here.
pub fn run_simulation(
    cfg: &SimConfig,
    stream: &DataStream,
    precomputed_optima: Option<&[RoundOptimum]>,
) -> Result<SimOutput> {
    cfg.validate()?;
    if stream.n != cfg.n || stream.rounds != cfg.rounds || stream.tau != cfg.tau
        || stream.dim != cfg.dim
    {
        return Err(Error::ShapeMismatch {
            expected: format!(
                "stream shaped n={} R={} tau={} dim={}",
                cfg.n, cfg.rounds, cfg.tau, cfg.dim
            ),
            got: format!(
                "n={} R={} tau={} dim={}",
                stream.n, stream.rounds, stream.tau, stream.dim
            ),
        });
    }

    let factorization = Arc::new(cfg.resolve_factorization()?);
    let (noise_std, privacy) = cfg.resolve_noise(&factorization)?;
    let params = RoundParams::from_config(cfg);
    let eta_tilde = params.effective_step();

    let x0 = cfg.x0.clone().unwrap_or_else(|| vec![0.0; cfg.dim]);
    let x0_is_zero = x0.iter().all(|v| *v == 0.0);

    let mut learners: Vec<LearnerState> = (0..cfg.n as u64)
        .map(|i| {
            open_channel(Arc::clone(&factorization), cfg.dim, noise_std, cfg.master_seed, i)
                .map(|ch| LearnerState::new(i, cfg.dim, ch))
        })
        .collect::<Result<_>>()?;

    let check_identities = cfg.diagnostics.virtual_iterate;
    let check_dual = cfg.diagnostics.dual_form_check;

    let mut replay: Option<(Vec<PrefixFormLearner>, Vec<f64>)> = if check_dual {
        let rl = (0..cfg.n as u64)
            .map(|i| {
                open_channel(Arc::clone(&factorization), cfg.dim, noise_std, cfg.master_seed, i)
                    .map(|channel| PrefixFormLearner {
                        z: vec![0.0; cfg.dim],
                        channel,
                        grad_prefix: vec![0.0; cfg.dim],
                        s_prev: vec![0.0; cfg.dim],
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Some((rl, x0.clone()))
    } else {
        None
    };

    let mut gs = GlobalState::new(x0.clone());
    if check_identities {
        gs.virtual_x = Some(x0.clone());
    }
    let mut report = DiagnosticsReport {
        virtual_iterate_checked: check_identities,
        prefix_identity_checked: check_identities && x0_is_zero,
        dual_form_checked: check_dual,
        ..Default::default()
    };

    let mut models: Vec<Vec<f64>> = Vec::with_capacity(cfg.rounds);
    for r in 0..cfg.rounds {
        let round_data: Vec<&[StreamSample]> =
            (0..cfg.n).map(|i| stream.learner_round(r, i)).collect();
        models.push(gs.x.clone());
        let prev_virtual = gs.virtual_x.clone();
        let next = run_round(&gs, &mut learners, &round_data, &params)?;

        if check_identities {
            // Shadow recursion: x_xi^{r+1} = x_xi^r - eta_tilde g^r with
            // x_xi from its definition on both sides.
            let grad_sums: Vec<Vec<f64>> =
                learners.iter().map(|l| l.round_grad_sum.clone()).collect();
            let mut g_r = pairwise_mean(&grad_sums);
            for g in &mut g_r {
                *g /= cfg.tau as f64;
            }
            let prev_products: Vec<Vec<f64>> = learners
                .iter()
                .map(|l| l.channel.prev_row_product().to_vec())
                .collect();
            let mean_noise = pairwise_mean(&prev_products);
            let virt_next: Vec<f64> = next
                .x
                .iter()
                .zip(&mean_noise)
                .map(|(xv, nv)| xv + eta_tilde / cfg.tau as f64 * nv)
                .collect();
            let virt_prev = prev_virtual.as_ref().expect("diagnostics enabled");
            let predicted: Vec<f64> = virt_prev
                .iter()
                .zip(&g_r)
                .map(|(v, g)| v - eta_tilde * g)
                .collect();
            let residual = max_abs_diff(&virt_next, &predicted);
            report.max_virtual_residual = report.max_virtual_residual.max(residual);
            if residual > VIRTUAL_ITERATE_TOLERANCE {
                return Err(Error::DiagnosticsViolation {
                    check: "virtual_iterate",
                    round: r,
                    residual,
                    tolerance: VIRTUAL_ITERATE_TOLERANCE,
                });
            }

            if x0_is_zero {
                // Released model is a post-processing of noisy prefix sums:
                // x^{r+1} = -eta_tilde (1/(n tau)) sum_i (prefix_i + b·xi_i).
                let combined: Vec<Vec<f64>> = learners
                    .iter()
                    .map(|l| {
                        l.grad_prefix
                            .iter()
                            .zip(l.channel.prev_row_product())
                            .map(|(p, nz)| p + nz)
                            .collect()
                    })
                    .collect();
                let mean_combined = pairwise_mean(&combined);
                let residual = next
                    .x
                    .iter()
                    .zip(&mean_combined)
                    .map(|(xv, c)| (xv + eta_tilde * c / cfg.tau as f64).abs())
                    .fold(0.0, f64::max);
                report.max_prefix_identity_residual =
                    report.max_prefix_identity_residual.max(residual);
                if residual > PREFIX_IDENTITY_TOLERANCE {
                    return Err(Error::DiagnosticsViolation {
                        check: "prefix_identity",
                        round: r,
                        residual,
                        tolerance: PREFIX_IDENTITY_TOLERANCE,
                    });
                }
            }

            gs = GlobalState {
                virtual_x: Some(virt_next),
                ..next
            };
        } else {
            gs = next;
        }

        if let Some((ref mut rl, ref mut replay_x)) = replay {
            for (i, learner) in rl.iter_mut().enumerate() {
                learner.round(replay_x, round_data[i], &params)?;
            }
            let inv_eta_tau = 1.0 / (params.eta * params.tau as f64);
            let aggregates: Vec<Vec<f64>> = rl
                .iter()
                .map(|l| {
                    replay_x
                        .iter()
                        .zip(&l.z)
                        .map(|(xr, z)| (xr - z) * inv_eta_tau)
                        .collect()
                })
                .collect();
            let mean = pairwise_mean(&aggregates);
            for (xv, g) in replay_x.iter_mut().zip(&mean) {
                *xv -= eta_tilde * g;
            }
            let mut deviation = max_abs_diff(replay_x, &gs.x);
            for (l, main) in rl.iter().zip(&learners) {
                deviation = deviation.max(max_abs_diff(&l.z, &main.z));
            }
            report.max_dual_form_deviation = report.max_dual_form_deviation.max(deviation);
            if deviation > DUAL_FORM_TOLERANCE {
                return Err(Error::DiagnosticsViolation {
                    check: "dual_form",
                    round: r,
                    residual: deviation,
                    tolerance: DUAL_FORM_TOLERANCE,
                });
            }
        }
    }

    let budget = cfg.optimizer_budget();
    let optima_storage;
    let optima: &[RoundOptimum] = match precomputed_optima {
        Some(o) => o,
        None => {
            optima_storage = compute_round_optima(stream, &budget)?;
            &optima_storage
        }
    };
    let trace = build_trace(&models, stream, optima, &budget, cfg.static_regret)?;

    Ok(SimOutput {
        trace,
        final_model: gs.x,
        diagnostics: report,
        noise_std,
        privacy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_from_key, Domain};
    use crate::streams::SamplePayload;

    fn quad_sample(learner: u64, round: usize, step: usize, center: Vec<f64>) -> StreamSample {
        StreamSample {
            learner_id: learner,
            round,
            step,
            payload: SamplePayload::Quadratic { center },
        }
    }

    fn quad_config(n: usize, rounds: usize, tau: usize, dim: usize) -> SimConfig {
        SimConfig {
            n,
            rounds,
            tau,
            dim,
            eta: 0.1,
            eta_g: 1.0,
            clip_bound: 100.0,
            mechanism: "identity".into(),
            budget: NoiseSpec::ExplicitStd { std: 0.0 },
            master_seed: 1,
            data_spec: DataSpec::Quadratic {
                drift_magnitude: 0.0,
                drift_period: 1,
            },
            diagnostics: DiagnosticsFlags::default(),
            x0: None,
            parallel: false,
            static_regret: false,
            opt_budget: None,
        }
    }

    fn test_learner(dim: usize, steps: usize, std: f64) -> LearnerState {
        let f = Arc::new(build_identity(steps).unwrap());
        let ch = open_channel(f, dim, std, 7, 0).unwrap();
        LearnerState::new(0, dim, ch)
    }

    #[test]
    fn local_step_at_optimum_is_fixed_point() {
        let mut ls = test_learner(2, 4, 0.0);
        ls.z = vec![1.0, -2.0];
        let s = quad_sample(0, 0, 0, vec![1.0, -2.0]);
        local_step(&mut ls, &s, 1.0, 10.0).unwrap();
        assert_eq!(ls.z, vec![1.0, -2.0]);
    }

    #[test]
    fn local_step_explicit_move() {
        let mut ls = test_learner(2, 4, 0.0);
        let s = quad_sample(0, 0, 0, vec![2.0, 0.0]);
        local_step(&mut ls, &s, 0.5, 10.0).unwrap();
        assert_eq!(ls.z, vec![1.0, 0.0]);
    }

    #[test]
    fn single_round_is_one_noisy_sgd_step() {
        // n=1, tau=1, identity: x^1 = x^0 - eta_tilde (grad + xi^1).
        let cfg = {
            let mut c = quad_config(1, 1, 1, 2);
            c.eta = 0.25;
            c.eta_g = 2.0;
            c.budget = NoiseSpec::ExplicitStd { std: 1.5 };
            c.master_seed = 42;
            c
        };
        let stream = DataStream::from_samples(
            1,
            1,
            1,
            2,
            vec![quad_sample(0, 0, 0, vec![3.0, -1.0])],
        )
        .unwrap();
        let out = run_simulation(&cfg, &stream, None).unwrap();
        let eta_tilde = 0.25 * 2.0;
        let grad = [0.0 - 3.0, 0.0 + 1.0];
        let xi: Vec<f64> = (0..2u64)
            .map(|c| 1.5 * normal_from_key(Domain::Noise, &[42, 0, 0, c]))
            .collect();
        for c in 0..2 {
            let want = 0.0 - eta_tilde * (grad[c] + xi[c]);
            assert!((out.final_model[c] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_point_round() {
        // std=0, tau=2, all centers at theta, x0 = theta: x1 = theta.
        let theta = vec![0.5, -1.5];
        let mut cfg = quad_config(1, 1, 2, 2);
        cfg.x0 = Some(theta.clone());
        let samples = vec![
            quad_sample(0, 0, 0, theta.clone()),
            quad_sample(0, 0, 1, theta.clone()),
        ];
        let stream = DataStream::from_samples(1, 1, 2, 2, samples).unwrap();
        let out = run_simulation(&cfg, &stream, None).unwrap();
        assert_eq!(out.final_model, theta);
    }

    #[test]
    fn two_learner_averaging() {
        // std=0, n=2, tau=1, eta_tilde=1, x0=0: x1 = (theta1 + theta2)/2.
        let mut cfg = quad_config(2, 1, 1, 2);
        cfg.eta = 0.5;
        cfg.eta_g = 2.0; // eta_tilde = 1
        let samples = vec![
            quad_sample(0, 0, 0, vec![1.0, 0.0]),
            quad_sample(1, 0, 0, vec![0.0, 2.0]),
        ];
        let stream = DataStream::from_samples(2, 1, 1, 2, samples).unwrap();
        let out = run_simulation(&cfg, &stream, None).unwrap();
        assert!((out.final_model[0] - 0.5).abs() < 1e-15);
        assert!((out.final_model[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn noiseless_stationary_regret_decreases() {
        let mut cfg = quad_config(3, 12, 2, 3);
        cfg.master_seed = 5;
        let stream = cfg.build_stream().unwrap();
        let out = run_simulation(&cfg, &stream, None).unwrap();
        let rows = &out.trace.rows;
        let mut increments: Vec<f64> = Vec::new();
        let mut prev = 0.0;
        for row in rows {
            increments.push(row.cum_dyn_regret - prev);
            prev = row.cum_dyn_regret;
        }
        for w in increments.windows(2).skip(1) {
            assert!(w[1] <= w[0] + 1e-12, "regret increment grew: {w:?}");
        }
    }

    #[test]
    fn single_round_trace() {
        let cfg = quad_config(2, 1, 1, 2);
        let stream = cfg.build_stream().unwrap();
        let out = run_simulation(&cfg, &stream, None).unwrap();
        assert_eq!(out.trace.rows.len(), 1);
    }

    #[test]
    fn reruns_are_identical_and_parallel_matches() {
        let mut cfg = quad_config(4, 6, 3, 5);
        cfg.budget = NoiseSpec::ExplicitStd { std: 0.8 };
        cfg.mechanism = "binary-tree".into();
        cfg.master_seed = 31;
        let stream = cfg.build_stream().unwrap();
        let a = run_simulation(&cfg, &stream, None).unwrap();
        let b = run_simulation(&cfg, &stream, None).unwrap();
        assert_eq!(a.final_model, b.final_model);

        let mut parallel_cfg = cfg.clone();
        parallel_cfg.parallel = true;
        let c = run_simulation(&parallel_cfg, &stream, None).unwrap();
        for (x, y) in a.final_model.iter().zip(&c.final_model) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (ra, rc) in a.trace.rows.iter().zip(&c.trace.rows) {
            assert_eq!(ra.cum_dyn_regret.to_bits(), rc.cum_dyn_regret.to_bits());
        }
    }

    #[test]
    fn diagnostics_pass_on_noisy_run() {
        let mut cfg = quad_config(3, 8, 2, 4);
        cfg.mechanism = "toeplitz".into();
        cfg.budget = NoiseSpec::EpsilonDelta {
            epsilon: 2.0,
            delta: 1e-3,
        };
        cfg.clip_bound = 1.0;
        cfg.diagnostics = DiagnosticsFlags {
            virtual_iterate: true,
            dual_form_check: true,
        };
        cfg.master_seed = 11;
        let stream = cfg.build_stream().unwrap();
        let out = run_simulation(&cfg, &stream, None).unwrap();
        assert!(out.diagnostics.virtual_iterate_checked);
        assert!(out.diagnostics.max_virtual_residual <= VIRTUAL_ITERATE_TOLERANCE);
        assert!(out.diagnostics.prefix_identity_checked);
        assert!(out.diagnostics.max_prefix_identity_residual <= PREFIX_IDENTITY_TOLERANCE);
        assert!(out.diagnostics.dual_form_checked);
        assert!(out.diagnostics.max_dual_form_deviation <= DUAL_FORM_TOLERANCE);
    }

    #[test]
    fn prefix_identity_skipped_for_nonzero_x0() {
        let mut cfg = quad_config(2, 3, 2, 2);
        cfg.diagnostics.virtual_iterate = true;
        cfg.x0 = Some(vec![1.0, 1.0]);
        let stream = cfg.build_stream().unwrap();
        let out = run_simulation(&cfg, &stream, None).unwrap();
        assert!(out.diagnostics.virtual_iterate_checked);
        assert!(!out.diagnostics.prefix_identity_checked);
    }

    #[test]
    fn sample_count_mismatch_detected() {
        let cfg = quad_config(2, 2, 2, 2);
        let bad = DataStream::from_samples(
            2,
            1,
            2,
            2,
            vec![
                quad_sample(0, 0, 0, vec![0.0; 2]),
                quad_sample(0, 0, 1, vec![0.0; 2]),
                quad_sample(1, 0, 0, vec![0.0; 2]),
                quad_sample(1, 0, 1, vec![0.0; 2]),
            ],
        )
        .unwrap();
        assert!(matches!(
            run_simulation(&cfg, &bad, None),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn config_validation_lists_all_fields() {
        let mut cfg = quad_config(0, 0, 1, 2);
        cfg.eta = -1.0;
        let errs = cfg.validation_errors();
        assert!(errs.iter().any(|e| e.starts_with("n:")));
        assert!(errs.iter().any(|e| e.starts_with("R:")));
        assert!(errs.iter().any(|e| e.starts_with("eta:")));
    }

    #[test]
    fn config_json_round_trip() {
        let json = r#"{
            "n": 4, "R": 10, "tau": 2, "dim": 3,
            "eta": 0.05, "eta_g": 1.0, "clip_bound": 1.0,
            "mechanism": "toeplitz",
            "budget": {"epsilon": 2.0, "delta": 0.001},
            "master_seed": 9,
            "data_spec": {"kind": "logistic", "alpha": 0.1, "beta": 0.1},
            "diagnostics": {"virtual_iterate": true}
        }"#;
        let cfg: SimConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.rounds, 10);
        assert!(cfg.diagnostics.virtual_iterate);
        assert!(!cfg.diagnostics.dual_form_check);
        assert!(matches!(cfg.budget, NoiseSpec::EpsilonDelta { .. }));
        assert!(cfg.validate().is_ok());

        let std_json = r#"{
            "n": 1, "R": 1, "tau": 1, "dim": 1,
            "eta": 0.1, "eta_g": 1.0, "clip_bound": 1.0,
            "mechanism": "noiseless",
            "budget": {"std": 0.0},
            "master_seed": 0,
            "data_spec": {"kind": "quadratic", "drift_magnitude": 0.0, "drift_period": 1}
        }"#;
        let cfg: SimConfig = serde_json::from_str(std_json).unwrap();
        assert!(cfg.is_noiseless());
        assert!(matches!(cfg.budget, NoiseSpec::ExplicitStd { .. }));
    }
}

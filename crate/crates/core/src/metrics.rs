//! Round optima, dynamic regret, static regret, and trace assembly.
//!
//! Dynamic regret of the released models x^0..x^{R-1}:
//!     sum_r sum_t (1/n) sum_i ( f_i^{r,t}(x^r) - (f^r)* )
//! with (f^r)* the minimum of the round-averaged loss
//! f^r = (1/(n tau)) sum_{i,t} f_i^{r,t}. Quadratic optima are closed form;
//! logistic optima come from full-batch gradient descent with backtracking.
//! All evaluation runs off the retained sample table; the learning path
//! never sees these computations.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::sq_norm;
use crate::streams::{loss_grad, DataStream, LossKind, SamplePayload, StreamSample};

/// Stopping rule for the offline logistic solver.
#[derive(Clone, Copy, Debug)]
pub struct OptimizerBudget {
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for OptimizerBudget {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iters: 100_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RoundOptimum {
    pub value: f64,
    pub minimizer: Vec<f64>,
    /// False when the solver stopped on its iteration cap instead of the
    /// gradient tolerance (reported, not fatal).
    pub converged: bool,
}

/// Average loss of a sample set at x: (1/m) sum_j f_j(x).
pub fn average_loss(x: &[f64], samples: &[StreamSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += loss_grad(x, s)?.0;
    }
    Ok(total / samples.len() as f64)
}

fn average_loss_grad(x: &[f64], samples: &[StreamSample]) -> Result<(f64, Vec<f64>)> {
    let mut total = 0.0;
    let mut grad = vec![0.0; x.len()];
    for s in samples {
        let (l, g) = loss_grad(x, s)?;
        total += l;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += gi;
        }
    }
    let inv = 1.0 / samples.len() as f64;
    for g in &mut grad {
        *g *= inv;
    }
    Ok((total * inv, grad))
}

fn homogeneous_kind(samples: &[StreamSample]) -> Result<LossKind> {
    let kind = samples
        .first()
        .ok_or(Error::invalid("samples", "empty sample set"))?
        .loss_kind();
    if samples.iter().any(|s| s.loss_kind() != kind) {
        return Err(Error::UnsupportedLossKind("mixed loss kinds in one round"));
    }
    Ok(kind)
}

/// Full-batch gradient descent with Armijo backtracking.
fn gd_minimize(
    samples: &[StreamSample],
    start: Vec<f64>,
    budget: &OptimizerBudget,
) -> Result<RoundOptimum> {
    let mut x = start;
    let (mut value, mut grad) = average_loss_grad(&x, samples)?;
    let mut converged = false;
    for _ in 0..budget.max_iters {
        let g_sq = sq_norm(&grad);
        if g_sq.sqrt() <= budget.grad_tol {
            converged = true;
            break;
        }
        let mut t = 1.0f64;
        let mut next = Vec::new();
        let mut next_value = f64::INFINITY;
        for _ in 0..60 {
            let cand: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - t * gi).collect();
            let cand_value = average_loss(&cand, samples)?;
            if cand_value <= value - 1e-4 * t * g_sq {
                next = cand;
                next_value = cand_value;
                break;
            }
            t *= 0.5;
        }
        if next.is_empty() {
            // Line search stalled at float resolution.
            break;
        }
        x = next;
        value = next_value;
        grad = average_loss_grad(&x, samples)?.1;
    }
    Ok(RoundOptimum {
        value,
        minimizer: x,
        converged,
    })
}

/// Round optimum (f^r)* and its minimizer over n·tau retained samples.
/// Quadratic rounds are closed form: minimizer = mean center, value =
/// average 0.5||theta_j - mean||^2.
pub fn round_optimum(
    samples: &[StreamSample],
    dim: usize,
    budget: &OptimizerBudget,
) -> Result<RoundOptimum> {
    match homogeneous_kind(samples)? {
        LossKind::Quadratic => {
            let mut mean = vec![0.0; dim];
            for s in samples {
                if let SamplePayload::Quadratic { center } = &s.payload {
                    for (m, c) in mean.iter_mut().zip(center) {
                        *m += c;
                    }
                }
            }
            let inv = 1.0 / samples.len() as f64;
            for m in &mut mean {
                *m *= inv;
            }
            let mut value = 0.0;
            for s in samples {
                if let SamplePayload::Quadratic { center } = &s.payload {
                    value += 0.5
                        * mean
                            .iter()
                            .zip(center)
                            .map(|(m, c)| (m - c) * (m - c))
                            .sum::<f64>();
                }
            }
            Ok(RoundOptimum {
                value: value * inv,
                minimizer: mean,
                converged: true,
            })
        }
        LossKind::Logistic => gd_minimize(samples, vec![0.0; dim], budget),
    }
}

/// Offline solve from an explicit start (solver-invariance checks).
pub fn round_optimum_from(
    samples: &[StreamSample],
    start: Vec<f64>,
    budget: &OptimizerBudget,
) -> Result<RoundOptimum> {
    match homogeneous_kind(samples)? {
        LossKind::Quadratic => round_optimum(samples, start.len(), budget),
        LossKind::Logistic => gd_minimize(samples, start, budget),
    }
}

/// Per-round optima for a whole stream; rounds are independent and solved in
/// parallel (results are ordered, so the parallelism is invisible).
pub fn compute_round_optima(
    stream: &DataStream,
    budget: &OptimizerBudget,
) -> Result<Vec<RoundOptimum>> {
    (0..stream.rounds)
        .into_par_iter()
        .map(|r| round_optimum(stream.round_samples(r), stream.dim, budget))
        .collect()
}

/// Optimum of the union of all rounds (the static-regret comparator).
pub fn global_optimum(stream: &DataStream, budget: &OptimizerBudget) -> Result<RoundOptimum> {
    let all: Vec<StreamSample> = stream.iter().cloned().collect();
    round_optimum(&all, stream.dim, budget)
}

/// One trace row per round.
#[derive(Clone, Debug)]
pub struct RegretRow {
    pub round: usize,
    /// Model released for (i.e. used during) this round.
    pub model: Vec<f64>,
    /// (1/(n tau)) sum_{i,t} f_i^{r,t}(x^r)
    pub avg_round_loss: f64,
    /// (f^r)*
    pub round_opt: f64,
    pub cum_dyn_regret: f64,
    pub cum_static_regret: Option<f64>,
    pub cr_analog: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct RegretTrace {
    pub rows: Vec<RegretRow>,
    pub tau: usize,
}

impl RegretTrace {
    pub fn total_dynamic_regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cum_dyn_regret)
    }

    /// Reg_d / (R tau), the normalized form.
    pub fn normalized_dynamic_regret(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.total_dynamic_regret() / (self.rows.len() * self.tau) as f64
        }
    }

    pub fn total_static_regret(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.cum_static_regret)
    }

    /// CSV with blanks where a column does not apply.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(
            w,
            "round,avg_round_loss,round_opt,cum_dyn_regret,cum_static_regret,cr_analog"
        )?;
        for row in &self.rows {
            write!(
                w,
                "{},{},{},{}",
                row.round, row.avg_round_loss, row.round_opt, row.cum_dyn_regret
            )?;
            match row.cum_static_regret {
                Some(v) => write!(w, ",{v}")?,
                None => write!(w, ",")?,
            }
            match row.cr_analog {
                Some(v) => write!(w, ",{v}")?,
                None => write!(w, ",")?,
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Assemble the regret trace for released models x^0..x^{R-1}.
///
/// Dynamic regret always; static regret and the C_R analog whenever the
/// comparator is available (always for quadratic streams, where the global
/// optimum is closed form; for logistic only when `include_static` pays for
/// the extra offline solve).
pub fn build_trace(
    models: &[Vec<f64>],
    stream: &DataStream,
    optima: &[RoundOptimum],
    budget: &OptimizerBudget,
    include_static: bool,
) -> Result<RegretTrace> {
    if models.len() != stream.rounds {
        return Err(Error::MissingRoundData {
            round: models.len().min(stream.rounds),
        });
    }
    if optima.len() != stream.rounds {
        return Err(Error::MissingRoundData { round: optima.len() });
    }

    let want_static = include_static || stream.loss_kind() == LossKind::Quadratic;
    let global = if want_static {
        Some(global_optimum(stream, budget)?)
    } else {
        None
    };
    let track_cr = stream.loss_kind() == LossKind::Quadratic;

    let tau = stream.tau;
    let mut rows = Vec::with_capacity(stream.rounds);
    let mut cum_dyn = 0.0;
    let mut cum_static = 0.0;
    let mut cum_cr = 0.0;
    for (r, model) in models.iter().enumerate() {
        let samples = stream.round_samples(r);
        let avg = average_loss(model, samples)?;
        // sum_t (1/n) sum_i (f - (f^r)*) = tau (avg - (f^r)*)
        cum_dyn += tau as f64 * (avg - optima[r].value);
        let cum_static_regret = match &global {
            Some(g) => {
                let f_r_at_star = average_loss(&g.minimizer, samples)?;
                cum_static += tau as f64 * (avg - f_r_at_star);
                Some(cum_static)
            }
            None => None,
        };
        let cr_analog = if track_cr {
            let g = global.as_ref().expect("quadratic always has a comparator");
            cum_cr += optima[r]
                .minimizer
                .iter()
                .zip(&g.minimizer)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            Some(cum_cr)
        } else {
            None
        };
        rows.push(RegretRow {
            round: r,
            model: model.clone(),
            avg_round_loss: avg,
            round_opt: optima[r].value,
            cum_dyn_regret: cum_dyn,
            cum_static_regret,
            cr_analog,
        });
    }
    Ok(RegretTrace { rows, tau })
}

/// C_R analog for quadratic streams: sum_r ||x_r* - x*||^2.
pub fn cr_analog(
    stream: &DataStream,
    optima: &[RoundOptimum],
    global: &RoundOptimum,
) -> Result<f64> {
    if stream.loss_kind() != LossKind::Quadratic {
        return Err(Error::UnsupportedLossKind(
            "C_R analog requires a quadratic stream (singleton solution sets)",
        ));
    }
    Ok(optima
        .iter()
        .map(|o| {
            o.minimizer
                .iter()
                .zip(&global.minimizer)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum())
}

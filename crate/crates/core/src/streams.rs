//! Streaming client data: loss/gradient oracles with clipping, and seeded
//! non-IID generators. Streams are materialized into an immutable table up
//! front (one datum per learner per local step, in (round, learner, step)
//! order); the learning path walks it forward and never reads back, while
//! the metrics side reuses the same table for round optima.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{dot, norm};
use crate::rng::{normal_from_key, uniform_from_key, Domain, SplitMix64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Logistic,
    Quadratic,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SamplePayload {
    /// Feature/label pair with label in {-1, +1}.
    Logistic { feature: Vec<f64>, label: f64 },
    /// Center of the quadratic bowl 0.5 ||x - center||^2.
    Quadratic { center: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamSample {
    pub learner_id: u64,
    pub round: usize,
    pub step: usize,
    pub payload: SamplePayload,
}

impl StreamSample {
    pub fn loss_kind(&self) -> LossKind {
        match self.payload {
            SamplePayload::Logistic { .. } => LossKind::Logistic,
            SamplePayload::Quadratic { .. } => LossKind::Quadratic,
        }
    }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(t: f64) -> f64 {
    // ln(1 + e^t), stable for |t| up to ~1e3 and beyond.
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Logistic loss ln(1 + exp(-(x·a) b)) and its gradient -b·a·sigmoid(-b(x·a)).
pub fn logistic_loss_grad(x: &[f64], sample: &StreamSample) -> Result<(f64, Vec<f64>)> {
    let (feature, label) = match &sample.payload {
        SamplePayload::Logistic { feature, label } => (feature, *label),
        SamplePayload::Quadratic { .. } => return Err(Error::UnsupportedLossKind("quadratic sample passed to logistic loss")),
    };
    if feature.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: feature.len(),
            got: x.len(),
        });
    }
    let margin = label * dot(x, feature);
    let loss = softplus(-margin);
    let scale = -label * sigmoid(-margin);
    let grad = feature.iter().map(|a| scale * a).collect();
    Ok((loss, grad))
}

/// Quadratic loss 0.5 ||x - center||^2 and gradient x - center.
pub fn quadratic_loss_grad(x: &[f64], sample: &StreamSample) -> Result<(f64, Vec<f64>)> {
    let center = match &sample.payload {
        SamplePayload::Quadratic { center } => center,
        SamplePayload::Logistic { .. } => return Err(Error::UnsupportedLossKind("logistic sample passed to quadratic loss")),
    };
    if center.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: center.len(),
            got: x.len(),
        });
    }
    let grad: Vec<f64> = x.iter().zip(center).map(|(xi, c)| xi - c).collect();
    let loss = 0.5 * grad.iter().map(|g| g * g).sum::<f64>();
    Ok((loss, grad))
}

/// Loss and gradient for whichever kind the sample carries.
pub fn loss_grad(x: &[f64], sample: &StreamSample) -> Result<(f64, Vec<f64>)> {
    match sample.payload {
        SamplePayload::Logistic { .. } => logistic_loss_grad(x, sample),
        SamplePayload::Quadratic { .. } => quadratic_loss_grad(x, sample),
    }
}

/// l2 projection onto the ball of radius clip_bound. Inside the ball the
/// gradient is returned unchanged (bit for bit).
pub fn clip_gradient(g: &[f64], clip_bound: f64) -> Vec<f64> {
    debug_assert!(clip_bound > 0.0);
    let n = norm(g);
    if n <= clip_bound {
        g.to_vec()
    } else {
        let s = clip_bound / n;
        g.iter().map(|x| x * s).collect()
    }
}

/// Generator parameters; `External` marks tables loaded from file.
#[derive(Clone, Debug, PartialEq)]
pub enum StreamSpec {
    Logistic { alpha: f64, beta: f64 },
    Quadratic { drift_magnitude: f64, drift_period: usize },
    External,
}

/// Materialized sample table, (round, learner, step) order.
#[derive(Clone, Debug)]
pub struct DataStream {
    pub n: usize,
    pub rounds: usize,
    pub tau: usize,
    pub dim: usize,
    pub seed: u64,
    pub spec: StreamSpec,
    samples: Vec<StreamSample>,
}

impl DataStream {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn loss_kind(&self) -> LossKind {
        self.samples[0].loss_kind()
    }

    #[inline]
    pub fn sample(&self, round: usize, learner: usize, step: usize) -> &StreamSample {
        &self.samples[(round * self.n + learner) * self.tau + step]
    }

    /// All n·tau samples of one round, contiguous.
    pub fn round_samples(&self, round: usize) -> &[StreamSample] {
        let w = self.n * self.tau;
        &self.samples[round * w..(round + 1) * w]
    }

    /// The tau samples learner `i` processes in round `round`.
    pub fn learner_round(&self, round: usize, learner: usize) -> &[StreamSample] {
        let base = (round * self.n + learner) * self.tau;
        &self.samples[base..base + self.tau]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, StreamSample> {
        self.samples.iter()
    }

    pub fn from_samples(
        n: usize,
        rounds: usize,
        tau: usize,
        dim: usize,
        samples: Vec<StreamSample>,
    ) -> Result<Self> {
        if samples.len() != n * rounds * tau {
            return Err(Error::StreamExhausted {
                expected: n * rounds * tau,
                got: samples.len(),
            });
        }
        Ok(Self {
            n,
            rounds,
            tau,
            dim,
            seed: 0,
            spec: StreamSpec::External,
            samples,
        })
    }

    /// Dump as CSV: learner, round, step, label, f0..f{d-1}. Quadratic
    /// samples write label 0 and the center as the feature columns.
    pub fn dump_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        write!(w, "learner,round,step,label")?;
        for j in 0..self.dim {
            write!(w, ",f{j}")?;
        }
        writeln!(w)?;
        for s in &self.samples {
            let (label, values): (f64, &[f64]) = match &s.payload {
                SamplePayload::Logistic { feature, label } => (*label, feature),
                SamplePayload::Quadratic { center } => (0.0, center),
            };
            write!(w, "{},{},{},{}", s.learner_id, s.round, s.step, label)?;
            for v in values {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Load a table dumped by `dump_csv`. Label 0 marks quadratic samples.
    pub fn load_csv(path: &Path, n: usize, rounds: usize, tau: usize) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    reason: "empty sample table".into(),
                })
            }
        };
        let dim = header.split(',').count().saturating_sub(4);
        if dim == 0 {
            return Err(Error::Parse {
                line: 1,
                reason: "header must be learner,round,step,label,f0,...".into(),
            });
        }
        let mut samples = Vec::new();
        for (ln, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != dim + 4 {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} columns", dim + 4),
                    got: format!("{} at line {}", cells.len(), ln + 1),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse().map_err(|_| Error::Parse {
                    line: ln + 1,
                    reason: format!("not a number: `{}`", s.trim()),
                })
            };
            let learner_id = parse(cells[0])? as u64;
            let round = parse(cells[1])? as usize;
            let step = parse(cells[2])? as usize;
            let label = parse(cells[3])?;
            let values: Vec<f64> = cells[4..].iter().map(|c| parse(c)).collect::<Result<_>>()?;
            let payload = if label == 0.0 {
                SamplePayload::Quadratic { center: values }
            } else {
                SamplePayload::Logistic {
                    feature: values,
                    label,
                }
            };
            samples.push(StreamSample {
                learner_id,
                round,
                step,
                payload,
            });
        }
        Self::from_samples(n, rounds, tau, dim, samples)
    }
}

// Key tags for the data domain draws.
const TAG_MODEL_MEAN: u64 = 1;
const TAG_FEATURE_MEAN_SHIFT: u64 = 2;
const TAG_MODEL: u64 = 3;
const TAG_FEATURE_MEAN: u64 = 4;
const TAG_FEATURE: u64 = 5;
const TAG_LABEL: u64 = 6;
const TAG_QUAD_BASE: u64 = 7;
const TAG_DRIFT: u64 = 8;

/// Label draw shared by the generator and its statistical tests: +1 with
/// probability sigmoid(margin).
pub fn sample_label(margin: f64, u: f64) -> f64 {
    if u < sigmoid(margin) {
        1.0
    } else {
        -1.0
    }
}

/// Synthetic heterogeneous logistic stream. Per learner i the local model is
/// w_i ~ N(u_i·1, I) with u_i ~ N(0, alpha); features are drawn from
/// N(v_i, diag(k^-1.2)) with v_i ~ N(B_i·1, I), B_i ~ N(0, beta), then
/// rescaled to ||a|| <= 1; labels follow the logistic model under w_i.
pub fn gen_heterogeneous_logistic(
    n: usize,
    rounds: usize,
    tau: usize,
    dim: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
) -> Result<DataStream> {
    if n == 0 || rounds == 0 || tau == 0 || dim == 0 {
        return Err(Error::invalid("n/R/tau/dim", "must all be at least 1"));
    }
    if alpha < 0.0 || beta < 0.0 {
        return Err(Error::invalid("alpha/beta", "must be nonnegative"));
    }

    let mut models = Vec::with_capacity(n);
    let mut feature_means = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let u_i = alpha.sqrt() * normal_from_key(Domain::Data, &[seed, TAG_MODEL_MEAN, i, 0]);
        let b_i =
            beta.sqrt() * normal_from_key(Domain::Data, &[seed, TAG_FEATURE_MEAN_SHIFT, i, 0]);
        let w: Vec<f64> = (0..dim as u64)
            .map(|j| u_i + normal_from_key(Domain::Data, &[seed, TAG_MODEL, i, j]))
            .collect();
        let v: Vec<f64> = (0..dim as u64)
            .map(|j| b_i + normal_from_key(Domain::Data, &[seed, TAG_FEATURE_MEAN, i, j]))
            .collect();
        models.push(w);
        feature_means.push(v);
    }
    let feature_std: Vec<f64> = (0..dim)
        .map(|k| ((k + 1) as f64).powf(-1.2).sqrt())
        .collect();

    let mut samples = Vec::with_capacity(n * rounds * tau);
    for round in 0..rounds {
        for learner in 0..n {
            for step in 0..tau {
                let global_step = (round * tau + step) as u64;
                let i = learner as u64;
                let mut feature: Vec<f64> = (0..dim)
                    .map(|j| {
                        feature_means[learner][j]
                            + feature_std[j]
                                * normal_from_key(
                                    Domain::Data,
                                    &[seed, TAG_FEATURE, i, global_step * dim as u64 + j as u64],
                                )
                    })
                    .collect();
                let nrm = norm(&feature);
                if nrm > 1.0 {
                    for x in &mut feature {
                        *x /= nrm;
                    }
                }
                let margin = dot(&models[learner], &feature);
                let u = uniform_from_key(Domain::Data, &[seed, TAG_LABEL, i, global_step]);
                let label = sample_label(margin, u);
                samples.push(StreamSample {
                    learner_id: i,
                    round,
                    step,
                    payload: SamplePayload::Logistic { feature, label },
                });
            }
        }
    }
    Ok(DataStream {
        n,
        rounds,
        tau,
        dim,
        seed,
        spec: StreamSpec::Logistic { alpha, beta },
        samples,
    })
}

/// Quadratic stream whose round-r centers are base_i + drift_magnitude ·
/// u(floor(r / drift_period)) for a seeded sequence of unit vectors u.
/// drift_magnitude = 0 gives a stationary objective.
pub fn gen_drifting_quadratic(
    n: usize,
    rounds: usize,
    tau: usize,
    dim: usize,
    drift_magnitude: f64,
    drift_period: usize,
    seed: u64,
) -> Result<DataStream> {
    if n == 0 || rounds == 0 || tau == 0 || dim == 0 {
        return Err(Error::invalid("n/R/tau/dim", "must all be at least 1"));
    }
    if drift_period == 0 {
        return Err(Error::invalid("drift_period", "must be at least 1"));
    }

    let bases: Vec<Vec<f64>> = (0..n as u64)
        .map(|i| {
            (0..dim as u64)
                .map(|j| normal_from_key(Domain::Data, &[seed, TAG_QUAD_BASE, i, j]))
                .collect()
        })
        .collect();

    let epochs = rounds.div_ceil(drift_period);
    let drift_dirs: Vec<Vec<f64>> = (0..epochs as u64)
        .map(|e| {
            let mut rng = SplitMix64::from_key(Domain::Data, &[seed, TAG_DRIFT, e]);
            let mut v: Vec<f64> = (0..dim).map(|_| rng.next_normal()).collect();
            let nrm = norm(&v);
            if nrm < 1e-12 {
                v[0] = 1.0;
            } else {
                for x in &mut v {
                    *x /= nrm;
                }
            }
            v
        })
        .collect();

    let mut samples = Vec::with_capacity(n * rounds * tau);
    for round in 0..rounds {
        let dir = &drift_dirs[round / drift_period];
        for (learner, base) in bases.iter().enumerate() {
            let center: Vec<f64> = base
                .iter()
                .zip(dir)
                .map(|(b, u)| b + drift_magnitude * u)
                .collect();
            for step in 0..tau {
                samples.push(StreamSample {
                    learner_id: learner as u64,
                    round,
                    step,
                    payload: SamplePayload::Quadratic {
                        center: center.clone(),
                    },
                });
            }
        }
    }
    Ok(DataStream {
        n,
        rounds,
        tau,
        dim,
        seed,
        spec: StreamSpec::Quadratic {
            drift_magnitude,
            drift_period,
        },
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic_sample(feature: Vec<f64>, label: f64) -> StreamSample {
        StreamSample {
            learner_id: 0,
            round: 0,
            step: 0,
            payload: SamplePayload::Logistic { feature, label },
        }
    }

    fn quadratic_sample(center: Vec<f64>) -> StreamSample {
        StreamSample {
            learner_id: 0,
            round: 0,
            step: 0,
            payload: SamplePayload::Quadratic { center },
        }
    }

    #[test]
    fn logistic_at_origin() {
        let s = logistic_sample(vec![0.3, -0.4], 1.0);
        let (loss, grad) = logistic_loss_grad(&[0.0, 0.0], &s).unwrap();
        assert!((loss - 2.0f64.ln()).abs() < 1e-15);
        assert!((grad[0] + 0.15).abs() < 1e-15);
        assert!((grad[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn logistic_known_margin() {
        // x = ln(3) e1, a = e1, b = +1: sigmoid(-ln 3) = 1/4,
        // loss = ln(4/3), grad = -(1/4) e1.
        let s = logistic_sample(vec![1.0, 0.0], 1.0);
        let (loss, grad) = logistic_loss_grad(&[3.0f64.ln(), 0.0], &s).unwrap();
        assert!((loss - (4.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((grad[0] + 0.25).abs() < 1e-15);
        assert_eq!(grad[1], 0.0);
    }

    #[test]
    fn logistic_stable_at_huge_margin() {
        let s = logistic_sample(vec![1.0], 1.0);
        let (loss, grad) = logistic_loss_grad(&[1e3], &s).unwrap();
        assert!(loss >= 0.0 && loss.is_finite());
        assert!(grad[0].is_finite());
        let (loss_neg, grad_neg) = logistic_loss_grad(&[-1e3], &s).unwrap();
        assert!(loss_neg.is_finite() && (loss_neg - 1e3).abs() < 1.0);
        assert!((grad_neg[0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn quadratic_values() {
        let s = quadratic_sample(vec![3.0, 4.0]);
        let (loss, grad) = quadratic_loss_grad(&[0.0, 0.0], &s).unwrap();
        assert_eq!(loss, 12.5);
        assert_eq!(grad, vec![-3.0, -4.0]);
        let (loss, grad) = quadratic_loss_grad(&[3.0, 4.0], &s).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad, vec![0.0, 0.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = SplitMix64::new(42);
        let h = 1e-6;
        for case in 0..100 {
            let d = 1 + (rng.next_u64() % 6) as usize;
            let x: Vec<f64> = (0..d).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
            let s = if case % 2 == 0 {
                let feature: Vec<f64> = (0..d).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
                let label = if rng.next_f64() < 0.5 { 1.0 } else { -1.0 };
                logistic_sample(feature, label)
            } else {
                quadratic_sample((0..d).map(|_| 4.0 * rng.next_f64() - 2.0).collect())
            };
            let (_, grad) = loss_grad(&x, &s).unwrap();
            for j in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (loss_grad(&xp, &s).unwrap().0 - loss_grad(&xm, &s).unwrap().0) / (2.0 * h);
                let denom = grad[j].abs().max(1.0);
                assert!(
                    ((grad[j] - fd) / denom).abs() <= 1e-5,
                    "case {case} coord {j}: analytic {} fd {fd}",
                    grad[j]
                );
            }
        }
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_gradient(&[3.0, 4.0], 10.0), vec![3.0, 4.0]);
        let clipped = clip_gradient(&[3.0, 4.0], 1.0);
        assert!((clipped[0] - 0.6).abs() < 1e-15);
        assert!((clipped[1] - 0.8).abs() < 1e-15);
        assert_eq!(clip_gradient(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
    }

    #[test]
    fn logistic_stream_shape_and_norms() {
        let s = gen_heterogeneous_logistic(3, 4, 2, 5, 0.1, 0.1, 9).unwrap();
        assert_eq!(s.len(), 24);
        for (idx, sample) in s.iter().enumerate() {
            let expect_round = idx / 6;
            let expect_learner = (idx / 2) % 3;
            let expect_step = idx % 2;
            assert_eq!(sample.round, expect_round);
            assert_eq!(sample.learner_id, expect_learner as u64);
            assert_eq!(sample.step, expect_step);
            match &sample.payload {
                SamplePayload::Logistic { feature, label } => {
                    assert!(norm(feature) <= 1.0 + 1e-12);
                    assert!(*label == 1.0 || *label == -1.0);
                }
                _ => panic!("expected logistic"),
            }
        }
    }

    #[test]
    fn streams_are_reproducible() {
        let a = gen_heterogeneous_logistic(2, 3, 2, 4, 0.5, 0.5, 7).unwrap();
        let b = gen_heterogeneous_logistic(2, 3, 2, 4, 0.5, 0.5, 7).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x, y);
        }
        let c = gen_drifting_quadratic(2, 3, 2, 4, 1.0, 2, 7).unwrap();
        let d = gen_drifting_quadratic(2, 3, 2, 4, 1.0, 2, 7).unwrap();
        for (x, y) in c.iter().zip(d.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn label_balance_at_zero_margin() {
        let trials = 10_000;
        let mut plus = 0usize;
        for t in 0..trials {
            let u = uniform_from_key(Domain::Data, &[555, TAG_LABEL, 0, t as u64]);
            if sample_label(0.0, u) > 0.0 {
                plus += 1;
            }
        }
        let freq = plus as f64 / trials as f64;
        assert!((freq - 0.5).abs() <= 0.02, "freq {freq}");
    }

    #[test]
    fn homogeneous_learners_pass_mean_test() {
        // alpha = beta = 0: learners are exchangeable. Cluster-level Welch t
        // on per-learner feature means (coordinate 0) between two groups of
        // learners; 1% two-sided threshold.
        let n = 40;
        let s = gen_heterogeneous_logistic(n, 25, 2, 8, 0.0, 0.0, 31).unwrap();
        let mut learner_means = vec![0.0f64; n];
        let mut counts = vec![0usize; n];
        for sample in s.iter() {
            if let SamplePayload::Logistic { feature, .. } = &sample.payload {
                learner_means[sample.learner_id as usize] += feature[0];
                counts[sample.learner_id as usize] += 1;
            }
        }
        for (m, c) in learner_means.iter_mut().zip(&counts) {
            *m /= *c as f64;
        }
        let (a, b) = learner_means.split_at(n / 2);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64], m: f64| {
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
        };
        let (ma, mb) = (mean(a), mean(b));
        let (va, vb) = (var(a, ma), var(b, mb));
        let t = (ma - mb) / (va / a.len() as f64 + vb / b.len() as f64).sqrt();
        // t quantile (0.995, df ~ 38) = 2.712
        assert!(t.abs() < 2.712, "t = {t}");
    }

    #[test]
    fn quadratic_drift_structure() {
        // drift 0: one shared optimum across rounds.
        let s = gen_drifting_quadratic(2, 5, 1, 3, 0.0, 1, 11).unwrap();
        let first = s.sample(0, 0, 0).payload.clone();
        for r in 0..5 {
            assert_eq!(s.sample(r, 0, 0).payload, first);
        }
        // period = R: same centers every round (stationary after round 0).
        let s = gen_drifting_quadratic(2, 5, 1, 3, 2.0, 5, 11).unwrap();
        let first = s.sample(0, 1, 0).payload.clone();
        for r in 1..5 {
            assert_eq!(s.sample(r, 1, 0).payload, first);
        }
        // period 1, d=1, n=1: optima move by exactly drift_magnitude·u(r).
        let s = gen_drifting_quadratic(1, 4, 1, 1, 1.5, 1, 3).unwrap();
        let centers: Vec<f64> = (0..4)
            .map(|r| match &s.sample(r, 0, 0).payload {
                SamplePayload::Quadratic { center } => center[0],
                _ => unreachable!(),
            })
            .collect();
        for w in centers.windows(2) {
            let step = (w[1] - w[0]).abs();
            // unit vectors in d=1 are +-1, so steps are 0 or 3.
            assert!(step.abs() < 1e-12 || (step - 3.0).abs() < 1e-12, "step {step}");
        }
    }

    #[test]
    fn sample_table_round_trip() {
        let dir = std::env::temp_dir().join("ofl_core_stream_rt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("table.csv");
        let s = gen_heterogeneous_logistic(2, 2, 2, 3, 0.1, 0.1, 5).unwrap();
        s.dump_csv(&path).unwrap();
        let loaded = DataStream::load_csv(&path, 2, 2, 2).unwrap();
        assert_eq!(loaded.dim, 3);
        for (a, b) in s.iter().zip(loaded.iter()) {
            assert_eq!(a.learner_id, b.learner_id);
            match (&a.payload, &b.payload) {
                (
                    SamplePayload::Logistic { feature: fa, label: la },
                    SamplePayload::Logistic { feature: fb, label: lb },
                ) => {
                    assert_eq!(la, lb);
                    for (x, y) in fa.iter().zip(fb) {
                        assert_eq!(x, y, "text round trip must be exact");
                    }
                }
                _ => panic!("kind changed in round trip"),
            }
        }
    }
}

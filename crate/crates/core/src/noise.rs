//! Per-learner streaming noise channel.
//!
//! A channel owns the learner's W × d table of i.i.d. N(0, V_i^2) draws
//! (materialized lazily, draw-once) and walks the rows of B step by step.
//! `next_increment` yields (b^k - b^{k-1})·xi, the exact noise term added to
//! the k-th noisy gradient; `noisy_prefix` exposes the prefix-sum view
//! S = gradient prefix + b^k·xi of the same mechanism.
//!
//! Every draw is a pure function of (master_seed, learner_id, node index,
//! coordinate), so lazily materialized rows do not depend on evaluation
//! order or thread schedule.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::factorization::Factorization;
use crate::rng::{normal_from_key, Domain};

#[derive(Clone, Debug)]
pub struct NoiseChannel {
    factorization: Arc<Factorization>,
    dim: usize,
    std: f64,
    master_seed: u64,
    learner_id: u64,
    step_index: usize,
    noise_rows: Vec<Option<Box<[f64]>>>,
    /// Telescoped running product b^{step_index-1}·xi; the zero vector at
    /// step 0. Accumulated increment by increment, so the sum of emitted
    /// increments equals this vector bit for bit.
    prev_row_product: Vec<f64>,
}

/// Open a channel at step 0.
pub fn open_channel(
    factorization: Arc<Factorization>,
    dim: usize,
    std: f64,
    master_seed: u64,
    learner_id: u64,
) -> Result<NoiseChannel> {
    if dim == 0 {
        return Err(Error::invalid("dim", "must be at least 1"));
    }
    if !std.is_finite() || std < 0.0 {
        return Err(Error::invalid("std", format!("must be nonnegative, got {std}")));
    }
    let width = factorization.width();
    Ok(NoiseChannel {
        factorization,
        dim,
        std,
        master_seed,
        learner_id,
        step_index: 0,
        noise_rows: vec![None; width],
        prev_row_product: vec![0.0; dim],
    })
}

impl NoiseChannel {
    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn steps(&self) -> usize {
        self.factorization.steps()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    /// b^{step_index - 1}·xi, the cumulative noise inside the prefix sums.
    pub fn prev_row_product(&self) -> &[f64] {
        &self.prev_row_product
    }

    fn noise_row(&mut self, w: usize) -> &[f64] {
        if self.noise_rows[w].is_none() {
            let mut row = vec![0.0; self.dim].into_boxed_slice();
            for (c, slot) in row.iter_mut().enumerate() {
                *slot = self.std
                    * normal_from_key(
                        Domain::Noise,
                        &[self.master_seed, self.learner_id, w as u64, c as u64],
                    );
            }
            self.noise_rows[w] = Some(row);
        }
        self.noise_rows[w].as_deref().unwrap()
    }

    /// The noise increment (b^k - b^{k-1})·xi for the current step k;
    /// advances the channel.
    pub fn next_increment(&mut self) -> Result<Vec<f64>> {
        if self.step_index >= self.factorization.steps() {
            return Err(Error::ChannelExhausted {
                learner_id: self.learner_id,
                steps: self.factorization.steps(),
            });
        }
        let k = self.step_index;
        let mut inc = vec![0.0; self.dim];
        if self.std != 0.0 {
            let diff = self.factorization.b_row_diff_support(k);
            for (w, coeff) in diff {
                let row = self.noise_row(w);
                for (o, x) in inc.iter_mut().zip(row) {
                    *o += coeff * x;
                }
            }
        }
        for (p, i) in self.prev_row_product.iter_mut().zip(&inc) {
            *p += i;
        }
        self.step_index += 1;
        Ok(inc)
    }

    /// S^k = gradient_prefix + b^k·xi for the current step k, without
    /// advancing. The row product is evaluated directly over the support of
    /// b^k (ascending node order) — an independent formulation of the same
    /// mechanism, used by the prefix-sum replay path.
    pub fn noisy_prefix(&mut self, gradient_prefix: &[f64]) -> Result<Vec<f64>> {
        if gradient_prefix.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: gradient_prefix.len(),
            });
        }
        if self.step_index >= self.factorization.steps() {
            return Err(Error::ChannelExhausted {
                learner_id: self.learner_id,
                steps: self.factorization.steps(),
            });
        }
        let mut out = gradient_prefix.to_vec();
        if self.std != 0.0 {
            let support = self.factorization.b_row_support(self.step_index);
            for (w, coeff) in support {
                let row = self.noise_row(w);
                for (o, x) in out.iter_mut().zip(row) {
                    *o += coeff * x;
                }
            }
        }
        Ok(out)
    }
}

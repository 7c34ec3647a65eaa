//! Minimal dense row-major matrix, sized for desk-scale factorization work.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::ShapeMismatch {
                    expected: format!("{c} columns"),
                    got: format!("{} columns in row {i}", row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: r, cols: c, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// All-ones lower-triangular matrix (the prefix-sum query matrix).
    pub fn lower_triangular_ones(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                m.data[i * n + j] = 1.0;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                expected: format!("{} inner rows", self.cols),
                got: format!("{}", other.rows),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// Largest absolute entry of `self - other`, with its position.
    pub fn max_abs_diff(&self, other: &Matrix) -> Result<(f64, usize, usize)> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.rows, self.cols),
                got: format!("{}x{}", other.rows, other.cols),
            });
        }
        let mut best = (0.0f64, 0usize, 0usize);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let d = (self.get(i, j) - other.get(i, j)).abs();
                if d > best.0 {
                    best = (d, i, j);
                }
            }
        }
        Ok(best)
    }
}

/// Euclidean norm of a vector.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Squared Euclidean norm.
pub fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Dot product; callers guarantee equal lengths.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pairwise (tree) sum of vectors in fixed input order. The reduction shape
/// depends only on the slice length, so results are identical no matter how
/// the inputs were produced (sequentially or in parallel).
pub fn pairwise_sum(vectors: &[Vec<f64>]) -> Vec<f64> {
    fn rec(vs: &[Vec<f64>]) -> Vec<f64> {
        match vs.len() {
            0 => Vec::new(),
            1 => vs[0].clone(),
            n => {
                let (a, b) = vs.split_at(n / 2);
                let mut left = rec(a);
                let right = rec(b);
                for (l, r) in left.iter_mut().zip(&right) {
                    *l += r;
                }
                left
            }
        }
    }
    rec(vectors)
}

/// Pairwise mean in fixed order.
pub fn pairwise_mean(vectors: &[Vec<f64>]) -> Vec<f64> {
    let n = vectors.len();
    let mut s = pairwise_sum(vectors);
    if n > 0 {
        let inv = 1.0 / n as f64;
        for x in &mut s {
            *x *= inv;
        }
    }
    s
}

//! Matrix factorizations A = B·C of the prefix-sum query matrix.
//!
//! A is the all-ones lower-triangular matrix over the R·τ local steps. The
//! factor C shapes how much noise each input needs (sensitivity), B shapes
//! how the per-node noise shows up in the released prefix sums. Three
//! constructions are built in: the binary tree, the Toeplitz construction
//! with first column h(0), h(1), ..., and the trivial identity split
//! (C = I, B = A) that realizes independent per-step noise. Externally
//! optimized factors can be loaded from file.
//!
//! Built-in kinds are stored structurally (node index lists, Toeplitz
//! coefficients); dense rows/columns are materialized on demand so that a
//! steps=4000 binary tree does not cost hundreds of MB. External factors are
//! dense.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Validation tolerance for factorizations built in-process.
pub const INTERNAL_TOLERANCE: f64 = 1e-9;
/// Validation tolerance for factorizations loaded from file.
pub const LOAD_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorKind {
    BinaryTree,
    Toeplitz,
    Identity,
    External,
}

impl fmt::Display for FactorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FactorKind::BinaryTree => "binary-tree",
            FactorKind::Toeplitz => "toeplitz",
            FactorKind::Identity => "identity",
            FactorKind::External => "external",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for FactorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary-tree" | "binary_tree" | "tree" => Ok(FactorKind::BinaryTree),
            "toeplitz" => Ok(FactorKind::Toeplitz),
            "identity" => Ok(FactorKind::Identity),
            "external" => Ok(FactorKind::External),
            other => Err(Error::invalid("mechanism", format!("unknown kind `{other}`"))),
        }
    }
}

/// Complete binary tree over `padded` leaves, nodes numbered in post-order
/// (leaf pair, then their parent), so the four-step tree enumerates its seven nodes as 1,2,(1-2),3,4,(3-4),root.
#[derive(Clone, Debug)]
struct TreeShape {
    padded: usize,
    /// node -> (first leaf, leaf count)
    node_range: Vec<(usize, usize)>,
    /// step t -> canonical dyadic cover of leaves [0, t], node ids ascending
    prefix_cover: Vec<Vec<usize>>,
    /// leaf j -> nodes on the path leaf..root, node ids ascending
    leaf_path: Vec<Vec<usize>>,
}

impl TreeShape {
    fn new(steps: usize) -> Self {
        let padded = steps.next_power_of_two();
        let width = 2 * padded - 1;
        let height = padded.trailing_zeros();

        let mut node_range = vec![(0usize, 0usize); width];
        // Post-order walk assigning leaf ranges.
        fn walk(level: u32, start: usize, next: &mut usize, out: &mut [(usize, usize)]) -> usize {
            if level > 0 {
                let half = 1usize << (level - 1);
                walk(level - 1, start, next, out);
                walk(level - 1, start + half, next, out);
            }
            let idx = *next;
            *next += 1;
            out[idx] = (start, 1usize << level);
            idx
        }
        let mut next = 0usize;
        walk(height, 0, &mut next, &mut node_range);
        debug_assert_eq!(next, width);

        // Node id for the dyadic interval [start, start + 2^level), found by
        // descending from the root. Subtree at level l occupies a contiguous
        // post-order block ending at its root, so left = parent - 2^parent_level
        // and right = parent - 1.
        let node_index = |level: u32, start: usize| -> usize {
            let mut idx = width - 1;
            let mut cur_level = height;
            let mut cur_start = 0usize;
            while cur_level > level {
                let half = 1usize << (cur_level - 1);
                if start < cur_start + half {
                    idx -= 1usize << cur_level;
                } else {
                    idx -= 1;
                    cur_start += half;
                }
                cur_level -= 1;
            }
            idx
        };

        let mut prefix_cover = Vec::with_capacity(steps);
        for t in 0..steps {
            let m = t + 1;
            let mut cover = Vec::new();
            let mut start = 0usize;
            for b in (0..=height).rev() {
                if m & (1usize << b) != 0 {
                    cover.push(node_index(b, start));
                    start += 1usize << b;
                }
            }
            cover.sort_unstable();
            prefix_cover.push(cover);
        }

        let mut leaf_path = Vec::with_capacity(steps);
        for j in 0..steps {
            let mut path: Vec<usize> = (0..=height)
                .map(|l| node_index(l, j & !((1usize << l) - 1)))
                .collect();
            path.sort_unstable();
            leaf_path.push(path);
        }

        Self {
            padded,
            node_range,
            prefix_cover,
            leaf_path,
        }
    }
}

#[derive(Clone, Debug)]
enum FactorData {
    BinaryTree(TreeShape),
    Toeplitz { coeffs: Vec<f64> },
    Identity,
    External { b: Matrix, c: Matrix },
}

/// One factorization A = B·C with B of shape steps × width and C of shape
/// width × steps. Immutable after construction; share freely across threads.
#[derive(Clone, Debug)]
pub struct Factorization {
    kind: FactorKind,
    steps: usize,
    width: usize,
    data: FactorData,
}

/// Toeplitz column coefficients h(0), ..., h(steps-1) with
/// h(0) = 1 and h(j) = (1 - 1/(2j)) h(j-1).
pub fn toeplitz_coefficients(steps: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(steps);
    h.push(1.0);
    for j in 1..steps {
        let prev = h[j - 1];
        h.push((1.0 - 1.0 / (2.0 * j as f64)) * prev);
    }
    h
}

fn require_steps(steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::invalid("steps", "must be at least 1"));
    }
    Ok(())
}

/// Binary-tree factorization over the complete tree on the next power of two
/// >= steps, restricted to the first `steps` inputs/prefixes.
pub fn build_binary_tree(steps: usize) -> Result<Factorization> {
    require_steps(steps)?;
    let shape = TreeShape::new(steps);
    let width = 2 * shape.padded - 1;
    Ok(Factorization {
        kind: FactorKind::BinaryTree,
        steps,
        width,
        data: FactorData::BinaryTree(shape),
    })
}

/// Toeplitz factorization: B = C lower-triangular Toeplitz with unit
/// diagonal and first column h(0), ..., h(steps-1).
pub fn build_toeplitz(steps: usize) -> Result<Factorization> {
    require_steps(steps)?;
    Ok(Factorization {
        kind: FactorKind::Toeplitz,
        steps,
        width: steps,
        data: FactorData::Toeplitz {
            coeffs: toeplitz_coefficients(steps),
        },
    })
}

/// Independent-noise mechanism: C = I, B = A.
pub fn build_identity(steps: usize) -> Result<Factorization> {
    require_steps(steps)?;
    Ok(Factorization {
        kind: FactorKind::Identity,
        steps,
        width: steps,
        data: FactorData::Identity,
    })
}

impl Factorization {
    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of noise rows W.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Nonzero entries of row k of B, ascending column index.
    pub fn b_row_support(&self, k: usize) -> Vec<(usize, f64)> {
        debug_assert!(k < self.steps);
        match &self.data {
            FactorData::BinaryTree(t) => {
                t.prefix_cover[k].iter().map(|&w| (w, 1.0)).collect()
            }
            FactorData::Toeplitz { coeffs } => {
                (0..=k).map(|m| (m, coeffs[k - m])).collect()
            }
            FactorData::Identity => (0..=k).map(|m| (m, 1.0)).collect(),
            FactorData::External { b, .. } => b
                .row(k)
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(m, v)| (m, *v))
                .collect(),
        }
    }

    /// Nonzero entries of row k of B minus row k-1 (row -1 is zero),
    /// ascending column index. This is the coefficient pattern of one noise
    /// increment.
    pub fn b_row_diff_support(&self, k: usize) -> Vec<(usize, f64)> {
        debug_assert!(k < self.steps);
        match &self.data {
            FactorData::Identity => vec![(k, 1.0)],
            FactorData::BinaryTree(t) => {
                let cur = &t.prefix_cover[k];
                let prev: &[usize] = if k == 0 { &[] } else { &t.prefix_cover[k - 1] };
                // Merge the two sorted node lists; shared nodes cancel.
                let mut out = Vec::with_capacity(cur.len() + prev.len());
                let (mut i, mut j) = (0usize, 0usize);
                while i < cur.len() || j < prev.len() {
                    match (cur.get(i), prev.get(j)) {
                        (Some(&a), Some(&b)) if a == b => {
                            i += 1;
                            j += 1;
                        }
                        (Some(&a), Some(&b)) if a < b => {
                            out.push((a, 1.0));
                            i += 1;
                        }
                        (Some(_), Some(&b)) => {
                            out.push((b, -1.0));
                            j += 1;
                        }
                        (Some(&a), None) => {
                            out.push((a, 1.0));
                            i += 1;
                        }
                        (None, Some(&b)) => {
                            out.push((b, -1.0));
                            j += 1;
                        }
                        (None, None) => unreachable!(),
                    }
                }
                out
            }
            FactorData::Toeplitz { coeffs } => (0..=k)
                .map(|m| {
                    let prev = if k > m { coeffs[k - 1 - m] } else { 0.0 };
                    (m, coeffs[k - m] - prev)
                })
                .collect(),
            FactorData::External { b, .. } => {
                let cur = b.row(k);
                let mut out = Vec::new();
                for (m, c) in cur.iter().enumerate() {
                    let prev = if k == 0 { 0.0 } else { b.get(k - 1, m) };
                    let d = c - prev;
                    if d != 0.0 {
                        out.push((m, d));
                    }
                }
                out
            }
        }
    }

    /// Dense row k of B (length = width).
    pub fn b_row(&self, k: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.width];
        for (m, v) in self.b_row_support(k) {
            row[m] = v;
        }
        row
    }

    /// Dense column j of C (length = width).
    pub fn c_col(&self, j: usize) -> Vec<f64> {
        debug_assert!(j < self.steps);
        let mut col = vec![0.0; self.width];
        match &self.data {
            FactorData::BinaryTree(t) => {
                for &w in &t.leaf_path[j] {
                    col[w] = 1.0;
                }
            }
            FactorData::Toeplitz { coeffs } => {
                col[j..self.steps].copy_from_slice(&coeffs[..self.steps - j]);
            }
            FactorData::Identity => col[j] = 1.0,
            FactorData::External { c, .. } => {
                for (i, slot) in col.iter_mut().enumerate() {
                    *slot = c.get(i, j);
                }
            }
        }
        col
    }

    /// Dense row w of C (length = steps).
    pub fn c_row(&self, w: usize) -> Vec<f64> {
        debug_assert!(w < self.width);
        let mut row = vec![0.0; self.steps];
        match &self.data {
            FactorData::BinaryTree(t) => {
                let (start, len) = t.node_range[w];
                let end = (start + len).min(self.steps);
                for slot in row.iter_mut().take(end).skip(start.min(self.steps)) {
                    *slot = 1.0;
                }
            }
            FactorData::Toeplitz { coeffs } => {
                for (j, slot) in row.iter_mut().enumerate().take(w + 1) {
                    *slot = coeffs[w - j];
                }
            }
            FactorData::Identity => row[w] = 1.0,
            FactorData::External { c, .. } => row.copy_from_slice(c.row(w)),
        }
        row
    }

    pub fn b_row_sq_norm(&self, k: usize) -> f64 {
        self.b_row_support(k).iter().map(|(_, v)| v * v).sum()
    }

    pub fn c_col_sq_norm(&self, j: usize) -> f64 {
        debug_assert!(j < self.steps);
        match &self.data {
            FactorData::BinaryTree(t) => t.leaf_path[j].len() as f64,
            FactorData::Toeplitz { coeffs } => {
                coeffs[..self.steps - j].iter().map(|h| h * h).sum()
            }
            FactorData::Identity => 1.0,
            FactorData::External { c, .. } => {
                (0..self.width).map(|i| c.get(i, j).powi(2)).sum()
            }
        }
    }

    /// Dense materialization of B (tests, file export).
    pub fn dense_b(&self) -> Matrix {
        let mut m = Matrix::zeros(self.steps, self.width);
        for k in 0..self.steps {
            for (j, v) in self.b_row_support(k) {
                m.set(k, j, v);
            }
        }
        m
    }

    /// Dense materialization of C (tests, file export).
    pub fn dense_c(&self) -> Matrix {
        let mut m = Matrix::zeros(self.width, self.steps);
        for w in 0..self.width {
            let row = self.c_row(w);
            for (j, v) in row.iter().enumerate() {
                m.set(w, j, *v);
            }
        }
        m
    }

    /// Max-abs entry of B·C - A together with its position, computed
    /// structure-aware so that steps=4000 stays fast. Binary-tree and
    /// identity factors are integer-valued and verified entrywise exactly;
    /// the Toeplitz product is itself Toeplitz, so its diagonals are checked
    /// through the coefficient convolution, which covers every entry.
    pub fn residual(&self) -> (f64, usize, usize) {
        match &self.data {
            FactorData::Identity => (0.0, 0, 0), // B·I = B = A by construction
            FactorData::BinaryTree(t) => {
                let mut worst = (0.0f64, 0usize, 0usize);
                let mut acc = vec![0.0f64; self.steps];
                for i in 0..self.steps {
                    acc.fill(0.0);
                    for &w in &t.prefix_cover[i] {
                        let (start, len) = t.node_range[w];
                        let end = (start + len).min(self.steps);
                        for x in &mut acc[start..end] {
                            *x += 1.0;
                        }
                    }
                    for (j, x) in acc.iter().enumerate() {
                        let want = if j <= i { 1.0 } else { 0.0 };
                        let d = (x - want).abs();
                        if d > worst.0 {
                            worst = (d, i, j);
                        }
                    }
                }
                worst
            }
            FactorData::Toeplitz { coeffs } => {
                // (B·C)[i][j] = g(i-j) below the diagonal, 0 above, with
                // g(m) = sum_j h(j) h(m-j); compare against A.
                let mut worst = (0.0f64, 0usize, 0usize);
                for m in 0..self.steps {
                    let g: f64 = (0..=m).map(|j| coeffs[j] * coeffs[m - j]).sum();
                    let d = (g - 1.0).abs();
                    if d > worst.0 {
                        worst = (d, m, 0);
                    }
                }
                worst
            }
            FactorData::External { b, c } => {
                let product = b.matmul(c).expect("shapes validated on load");
                let a = Matrix::lower_triangular_ones(self.steps);
                let (d, i, j) = product.max_abs_diff(&a).expect("same shape");
                (d, i, j)
            }
        }
    }

    /// Check B·C = A within `tolerance`.
    pub fn validate(&self, tolerance: f64) -> Result<()> {
        let (residual, row, col) = self.residual();
        if residual > tolerance {
            return Err(Error::ResidualTooLarge {
                row,
                col,
                residual,
                tolerance,
            });
        }
        Ok(())
    }

    /// Write the factorization file: three header lines, the W rows of C,
    /// a `---` separator, then the steps rows of B.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "kind={}", self.kind)?;
        writeln!(w, "steps={}", self.steps)?;
        writeln!(w, "width={}", self.width)?;
        for i in 0..self.width {
            write_csv_row(&mut w, &self.c_row(i))?;
        }
        writeln!(w, "---")?;
        for k in 0..self.steps {
            write_csv_row(&mut w, &self.b_row(k))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn write_csv_row<W: Write>(w: &mut W, row: &[f64]) -> std::io::Result<()> {
    let mut first = true;
    for v in row {
        if !first {
            write!(w, ",")?;
        }
        write!(w, "{v}")?;
        first = false;
    }
    writeln!(w)
}

/// Load an externally produced factorization and validate B·C = A within
/// the load tolerance. The result always has kind External, whatever the
/// file's `kind=` header says about its provenance.
pub fn load_factorization(path: &Path) -> Result<Factorization> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let mut header = |key: &'static str| -> Result<String> {
        match lines.next() {
            Some((n, line)) => {
                let line = line?;
                let line = line.trim();
                line.strip_prefix(&format!("{key}="))
                    .map(str::to_owned)
                    .ok_or(Error::Parse {
                        line: n + 1,
                        reason: format!("expected `{key}=...`, got `{line}`"),
                    })
            }
            None => Err(Error::Parse {
                line: 0,
                reason: format!("missing `{key}=` header"),
            }),
        }
    };

    let _kind: FactorKind = header("kind")?.parse()?;
    let steps: usize = {
        let s = header("steps")?;
        s.parse().map_err(|_| Error::Parse {
            line: 2,
            reason: format!("steps is not a positive integer: `{s}`"),
        })?
    };
    let width: usize = {
        let s = header("width")?;
        s.parse().map_err(|_| Error::Parse {
            line: 3,
            reason: format!("width is not a positive integer: `{s}`"),
        })?
    };
    if steps == 0 || width == 0 {
        return Err(Error::invalid("steps", "steps and width must be at least 1"));
    }

    let parse_row = |n: usize, line: &str, want: usize| -> Result<Vec<f64>> {
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: n + 1,
                    reason: format!("not a number: `{}`", cell.trim()),
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != want {
            return Err(Error::ShapeMismatch {
                expected: format!("{want} columns"),
                got: format!("{} columns at line {}", row.len(), n + 1),
            });
        }
        Ok(row)
    };

    let mut c_rows = Vec::with_capacity(width);
    for _ in 0..width {
        match lines.next() {
            Some((n, line)) => c_rows.push(parse_row(n, &line?, steps)?),
            None => {
                return Err(Error::ShapeMismatch {
                    expected: format!("{width} rows of C"),
                    got: format!("{}", c_rows.len()),
                })
            }
        }
    }
    match lines.next() {
        Some((n, line)) => {
            let line = line?;
            if line.trim() != "---" {
                return Err(Error::Parse {
                    line: n + 1,
                    reason: format!("expected `---` separator, got `{}`", line.trim()),
                });
            }
        }
        None => {
            return Err(Error::Parse {
                line: 0,
                reason: "missing `---` separator".into(),
            })
        }
    }
    let mut b_rows = Vec::with_capacity(steps);
    for _ in 0..steps {
        match lines.next() {
            Some((n, line)) => b_rows.push(parse_row(n, &line?, width)?),
            None => {
                return Err(Error::ShapeMismatch {
                    expected: format!("{steps} rows of B"),
                    got: format!("{}", b_rows.len()),
                })
            }
        }
    }

    let f = Factorization {
        kind: FactorKind::External,
        steps,
        width,
        data: FactorData::External {
            b: Matrix::from_rows(b_rows)?,
            c: Matrix::from_rows(c_rows)?,
        },
    };
    f.validate(LOAD_TOLERANCE)?;
    Ok(f)
}

/// Norm summary of one factorization.
#[derive(Clone, Debug, Serialize)]
pub struct FactorizationStats {
    pub max_col_sq_norm: f64,
    pub max_row_sq_norm: f64,
    /// ||b^{r,tau-1}||^2 per round r, i.e. the terms of ||B_R||_F^2.
    pub prefix_row_sq_norms: Vec<f64>,
}

/// Column/row norm statistics. `tau` partitions the steps into rounds for
/// the per-round prefix norms and must divide steps.
pub fn factorization_stats(f: &Factorization, tau: usize) -> Result<FactorizationStats> {
    if tau == 0 || !f.steps().is_multiple_of(tau) {
        return Err(Error::invalid(
            "tau",
            format!("tau must divide steps={}, got {tau}", f.steps()),
        ));
    }
    let max_col_sq_norm = (0..f.steps())
        .map(|j| f.c_col_sq_norm(j))
        .fold(0.0f64, f64::max);
    let max_row_sq_norm = (0..f.steps())
        .map(|k| f.b_row_sq_norm(k))
        .fold(0.0f64, f64::max);
    let prefix_row_sq_norms = (0..f.steps() / tau)
        .map(|r| f.b_row_sq_norm(r * tau + tau - 1))
        .collect();
    Ok(FactorizationStats {
        max_col_sq_norm,
        max_row_sq_norm,
        prefix_row_sq_norms,
    })
}

/// Safe logarithmic bound on the Toeplitz max column squared norm,
/// 1 + (1/pi)(1 + ln(steps-1)) for steps >= 2.
pub fn toeplitz_safe_bound(steps: usize) -> f64 {
    assert!(steps >= 2);
    1.0 + (1.0 + ((steps - 1) as f64).ln()) / std::f64::consts::PI
}

/// The literature reference bound 1 + (1/pi) ln(4*steps/5). Violated by the
/// exact norms at small steps; reported, never asserted.
pub fn toeplitz_reference_bound(steps: usize) -> f64 {
    1.0 + (4.0 * steps as f64 / 5.0).ln() / std::f64::consts::PI
}

/// Side-by-side comparison of the exact Toeplitz max column squared norm
/// against the reference bound, flagging sizes where the bound is exceeded.
#[derive(Clone, Debug, Serialize)]
pub struct ToeplitzNormReport {
    pub steps: usize,
    pub exact_max_col_sq_norm: f64,
    pub reference_bound: f64,
    pub exceeds_reference: bool,
}

pub fn toeplitz_norm_report(steps: usize) -> Result<ToeplitzNormReport> {
    require_steps(steps)?;
    let h = toeplitz_coefficients(steps);
    let exact: f64 = h.iter().map(|x| x * x).sum();
    let reference = toeplitz_reference_bound(steps);
    Ok(ToeplitzNormReport {
        steps,
        exact_max_col_sq_norm: exact,
        reference_bound: reference,
        exceeds_reference: exact > reference,
    })
}

/// Hand-enumerated four-step binary-tree factors, used as a fixture by tests.
pub fn four_step_tree_matrices() -> (Matrix, Matrix) {
    let b = Matrix::from_rows(vec![
        vec![1., 0., 0., 0., 0., 0., 0.],
        vec![0., 0., 1., 0., 0., 0., 0.],
        vec![0., 0., 1., 1., 0., 0., 0.],
        vec![0., 0., 0., 0., 0., 0., 1.],
    ])
    .unwrap();
    let c = Matrix::from_rows(vec![
        vec![1., 0., 0., 0.],
        vec![0., 1., 0., 0.],
        vec![1., 1., 0., 0.],
        vec![0., 0., 1., 0.],
        vec![0., 0., 0., 1.],
        vec![0., 0., 1., 1.],
        vec![1., 1., 1., 1.],
    ])
    .unwrap();
    (b, c)
}

//! Compressed sparse row matrices and a Jacobi-preconditioned BiCGSTAB solver.

use rayon::prelude::*;
use serde::Serialize;

/// Square matrix in compressed sparse row form. Column indices are sorted and
/// unique within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Collects `(row, col, value)` contributions; duplicates are summed on
/// compression in insertion order.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n: usize,
    rows: Vec<u32>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        assert!(n <= u32::MAX as usize);
        TripletBuilder {
            n,
            ..Default::default()
        }
    }

    pub fn with_capacity(n: usize, capacity: usize) -> Self {
        let mut b = Self::new(n);
        b.rows.reserve(capacity);
        b.cols.reserve(capacity);
        b.vals.reserve(capacity);
        b
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.rows.push(row as u32);
        self.cols.push(col as u32);
        self.vals.push(value);
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn build(self) -> CsrMatrix {
        let n = self.n;
        // Counting sort by row keeps insertion order within a row.
        let mut counts = vec![0usize; n + 1];
        for &r in &self.rows {
            counts[r as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut order = vec![0usize; self.vals.len()];
        for (t, &r) in self.rows.iter().enumerate() {
            order[next[r as usize]] = t;
            next[r as usize] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut scratch: Vec<(u32, usize)> = Vec::new();
        for r in 0..n {
            scratch.clear();
            scratch.extend(order[counts[r]..counts[r + 1]].iter().map(|&t| (self.cols[t], t)));
            // Stable: equal columns stay in insertion order.
            scratch.sort_by_key(|&(c, _)| c);
            let mut last: Option<u32> = None;
            for &(c, t) in &scratch {
                if last == Some(c) {
                    *values.last_mut().unwrap() += self.vals[t];
                } else {
                    col_idx.push(c as usize);
                    values.push(self.vals[t]);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }
}

impl CsrMatrix {
    pub fn identity(n: usize) -> CsrMatrix {
        CsrMatrix {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from a dense row-major array, dropping exact zeros.
    pub fn from_dense(rows: &[Vec<f64>]) -> CsrMatrix {
        let n = rows.len();
        let mut b = TripletBuilder::new(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    b.push(i, j, v);
                }
            }
        }
        b.build()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (i, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        out
    }

    /// `y = A x`. Rows are summed left to right, so the result does not
    /// depend on how rows are distributed across threads.
    pub fn spmv(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.spmv_into(x, &mut y);
        y
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        const PAR_THRESHOLD: usize = 20_000;
        let row_dot = |i: usize| -> f64 {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
        };
        if self.n >= PAR_THRESHOLD {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = row_dot(i));
        } else {
            y.iter_mut().enumerate().for_each(|(i, yi)| *yi = row_dot(i));
        }
    }

    /// Replaces each flagged row by the corresponding identity row.
    pub fn with_identity_rows(&self, rows: &[bool]) -> CsrMatrix {
        assert_eq!(rows.len(), self.n);
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut col_idx = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        row_ptr.push(0);
        for (i, &replace) in rows.iter().enumerate() {
            if replace {
                col_idx.push(i);
                values.push(1.0);
            } else {
                let (cols, vals) = self.row(i);
                col_idx.extend_from_slice(cols);
                values.extend_from_slice(vals);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n: self.n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// `alpha * self + beta * other`.
    pub fn linear_combination(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert_eq!(self.n, other.n);
        let mut b = TripletBuilder::with_capacity(self.n, self.nnz() + other.nnz());
        for (m, s) in [(self, alpha), (other, beta)] {
            for i in 0..m.n {
                let (cols, vals) = m.row(i);
                for (&c, &v) in cols.iter().zip(vals) {
                    b.push(i, c, s * v);
                }
            }
        }
        b.build()
    }

    /// A zero-valued matrix with the given sparsity pattern. Each row's
    /// columns must be sorted and unique.
    pub fn from_pattern(pattern: &[Vec<usize>]) -> CsrMatrix {
        let n = pattern.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for cols in pattern {
            assert!(
                cols.windows(2).all(|w| w[0] < w[1]),
                "row pattern must be sorted and unique"
            );
            assert!(cols.iter().all(|&c| c < n));
            col_idx.extend_from_slice(cols);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Adds `value` to the stored entry `(i, j)`.
    ///
    /// # Panics
    /// If `(i, j)` is not part of the sparsity pattern.
    pub fn add_to(&mut self, i: usize, j: usize, value: f64) {
        let (start, end) = (self.row_ptr[i], self.row_ptr[i + 1]);
        let k = self.col_idx[start..end]
            .binary_search(&j)
            .unwrap_or_else(|_| panic!("entry ({i}, {j}) is outside the sparsity pattern"));
        self.values[start + k] += value;
    }

    pub fn scale(&self, factor: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Target for `‖b − Ax‖ / ‖b‖`.
    pub tolerance: f64,
    /// Defaults to `10 n` when `None`.
    pub max_iterations: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: 1e-10,
            max_iterations: None,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.spmv(x);
    b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
}

/// Solves `A x = b` by right-preconditioned BiCGSTAB with the inverse
/// diagonal of `A` as preconditioner, starting from `initial` (zero when
/// `None`).
///
/// The returned report is computed from the true residual of the returned
/// iterate, so `converged` implies the residual bound holds.
pub fn solve(a: &CsrMatrix, b: &[f64], initial: Option<&[f64]>, options: &SolveOptions) -> (Vec<f64>, SolveReport) {
    let n = a.dim();
    assert_eq!(b.len(), n);
    let max_iter = options.max_iterations.unwrap_or(10 * n.max(1));
    let tol = options.tolerance;

    let mut x = initial.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        let report = SolveReport {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
        return (x, report);
    }

    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precondition = |v: &[f64]| -> Vec<f64> { v.iter().zip(&inv_diag).map(|(a, d)| a * d).collect() };

    let mut r = residual(a, &x, b);
    let mut rel = norm(&r) / b_norm;
    if rel <= tol {
        return (
            x,
            SolveReport {
                iterations: 0,
                relative_residual: rel,
                converged: true,
            },
        );
    }

    let r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let rho_next = dot(&r_hat, &r);
        if rho_next == 0.0 || !rho_next.is_finite() {
            break;
        }
        let beta = (rho_next / rho) * (alpha / omega);
        rho = rho_next;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = precondition(&p);
        a.spmv_into(&p_hat, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / b_norm <= tol {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            r.copy_from_slice(&s);
            rel = norm(&r) / b_norm;
            if rel <= tol {
                break;
            }
            continue;
        }
        let s_hat = precondition(&s);
        a.spmv_into(&s_hat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 || !tt.is_finite() {
            break;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        rel = norm(&r) / b_norm;
        if rel <= tol || omega == 0.0 {
            break;
        }
    }

    // Recursive residuals drift; report the true one.
    let true_rel = norm(&residual(a, &x, b)) / b_norm;
    let report = SolveReport {
        iterations,
        relative_residual: true_rel,
        converged: true_rel <= tol,
    };
    (x, report)
}

//! Symmetric sparse operators (normalized and scaled Laplacians) and sparse-dense products.

use ndarray::{Array1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, shape, Result};
use crate::graph::Graph;
use crate::Matrix;

/// Which Laplacian an operator represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    NormalizedLaplacian,
    ScaledLaplacian,
}

/// Symmetric CSR matrix. Every row stores its diagonal entry explicitly, even when zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    kind: OperatorKind,
}

impl SparseOperator {
    /// `L = I - D^{-1/2} A D^{-1/2}`. Isolated nodes get a zero row and column.
    pub fn normalized_laplacian(g: &Graph) -> Self {
        let n = g.node_count();
        let inv_sqrt: Vec<f64> = g
            .degrees()
            .into_iter()
            .map(|d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
            .collect();
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::with_capacity(g.col_indices().len() + n);
        let mut values = Vec::with_capacity(g.col_indices().len() + n);
        row_offsets.push(0);
        for i in 0..n {
            let diag = if g.degree(i) == 0 { 0.0 } else { 1.0 };
            let mut diag_done = false;
            for &j in g.neighbors(i) {
                if !diag_done && j > i {
                    col_indices.push(i);
                    values.push(diag);
                    diag_done = true;
                }
                col_indices.push(j);
                values.push(-inv_sqrt[i] * inv_sqrt[j]);
            }
            if !diag_done {
                col_indices.push(i);
                values.push(diag);
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            n,
            row_offsets,
            col_indices,
            values,
            kind: OperatorKind::NormalizedLaplacian,
        }
    }

    /// `2 L / lambda_max - I`.
    pub fn scaled_laplacian(l: &SparseOperator, lambda_max: f64) -> Result<Self> {
        if !(lambda_max > 0.0) || !lambda_max.is_finite() {
            return input(format!("lambda_max must be positive, got {lambda_max}"));
        }
        let scale = 2.0 / lambda_max;
        let mut out = l.clone();
        for i in 0..out.n {
            for p in out.row_offsets[i]..out.row_offsets[i + 1] {
                out.values[p] *= scale;
                if out.col_indices[p] == i {
                    out.values[p] -= 1.0;
                }
            }
        }
        out.kind = OperatorKind::ScaledLaplacian;
        Ok(out)
    }

    /// Zero operator of dimension `n` with explicit zero diagonal.
    pub fn zeros(n: usize) -> Self {
        Self::diagonal(&vec![0.0; n], OperatorKind::NormalizedLaplacian)
    }

    pub fn diagonal(diag: &[f64], kind: OperatorKind) -> Self {
        let n = diag.len();
        Self {
            n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: diag.to_vec(),
            kind,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    /// Returns `a * self + b * I` with the same sparsity pattern.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        let mut out = self.clone();
        for i in 0..out.n {
            for p in out.row_offsets[i]..out.row_offsets[i + 1] {
                out.values[p] *= a;
                if out.col_indices[p] == i {
                    out.values[p] += b;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[[i, j]] = v;
            }
        }
        m
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// Sparse times dense, single-threaded. Rows are accumulated in stored column order.
    pub fn spmm(&self, x: ArrayView2<'_, f64>) -> Result<Matrix> {
        self.spmm_with(x, false)
    }

    /// Sparse times dense; `parallel` splits rows across the rayon pool. Each output row is
    /// accumulated in the same order either way, so both paths give identical bits.
    pub fn spmm_with(&self, x: ArrayView2<'_, f64>, parallel: bool) -> Result<Matrix> {
        if x.nrows() != self.n {
            return shape(format!(
                "operator is {n}x{n} but dense input has {} rows",
                x.nrows(),
                n = self.n
            ));
        }
        let c = x.ncols();
        let mut out = Matrix::zeros((self.n, c));
        if c == 0 {
            return Ok(out);
        }
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let row_kernel = |i: usize, dst: &mut [f64]| {
            let r = self.row_offsets[i]..self.row_offsets[i + 1];
            for (&j, &v) in self.col_indices[r.clone()].iter().zip(&self.values[r]) {
                for (d, s) in dst.iter_mut().zip(&xs[j * c..(j + 1) * c]) {
                    *d += v * s;
                }
            }
        };
        let buf = out.as_slice_mut().expect("fresh array is contiguous");
        if parallel {
            buf.par_chunks_mut(c).enumerate().for_each(|(i, dst)| row_kernel(i, dst));
        } else {
            buf.chunks_mut(c).enumerate().for_each(|(i, dst)| row_kernel(i, dst));
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return shape(format!("operator dim {} vs vector len {}", self.n, x.len()));
        }
        Ok((0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect())
    }
}

/// Result of [`estimate_lambda_max`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaEstimate {
    pub value: f64,
    pub iterations: usize,
    /// False when `max_iters` was exhausted before the relative change dropped below `tol`.
    pub converged: bool,
}

/// Power iteration with Rayleigh-quotient estimates for the largest eigenvalue of a
/// symmetric positive semidefinite operator.
pub fn estimate_lambda_max(l: &SparseOperator, tol: f64, max_iters: usize) -> LambdaEstimate {
    let n = l.dim();
    if n == 0 {
        return LambdaEstimate { value: 0.0, iterations: 0, converged: true };
    }
    // Non-constant start so the constant null vector of regular graphs is not hit exactly.
    let mut v = Array1::from_iter((0..n).map(|i| 1.0 / (i as f64 + 1.0) + if i % 2 == 0 { 1.0 } else { -0.5 }));
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut estimate = 0.0;
    for it in 1..=max_iters {
        let w = Array1::from(l.matvec(v.as_slice().unwrap()).expect("square operator"));
        let rayleigh = v.dot(&w);
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            return LambdaEstimate { value: 0.0, iterations: it, converged: true };
        }
        let change = (rayleigh - estimate).abs() / rayleigh.abs().max(f64::MIN_POSITIVE);
        estimate = rayleigh;
        v = w / wn;
        if it > 1 && change < tol {
            return LambdaEstimate { value: estimate, iterations: it, converged: true };
        }
    }
    LambdaEstimate { value: estimate, iterations: max_iters, converged: false }
}

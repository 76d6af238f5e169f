//! Polynomial propagation bases and node-oriented coefficient combination.
//!
//! A [`PropagationStack`] holds `K + 1` dense layers `p_k(op) X`. Monomial and Chebyshev
//! stacks start with `X` itself. Bernstein layer `k` is the full Bernstein term
//! `C(K,k) (I - L/2)^{K-k} (L/2)^k X`, so layer 0 is *not* `X`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{input, shape, Error, Result};
use crate::graph::Graph;
use crate::sparse::{OperatorKind, SparseOperator};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Monomial,
    Chebyshev,
    Bernstein,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::Monomial, Basis::Chebyshev, Basis::Bernstein];

    /// Operator this basis propagates with: the scaled Laplacian for Chebyshev, the
    /// normalized Laplacian otherwise.
    pub fn operator(self, g: &Graph, lambda_max: f64) -> Result<SparseOperator> {
        let l = SparseOperator::normalized_laplacian(g);
        match self {
            Basis::Chebyshev => SparseOperator::scaled_laplacian(&l, lambda_max),
            _ => Ok(l),
        }
    }

    fn expected_kind(self) -> OperatorKind {
        match self {
            Basis::Chebyshev => OperatorKind::ScaledLaplacian,
            _ => OperatorKind::NormalizedLaplacian,
        }
    }

    /// Scalar basis values `p_0(lambda) .. p_K(lambda)` at a Laplacian eigenvalue.
    pub fn values(self, order: usize, lambda: f64, lambda_max: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(order + 1);
        match self {
            Basis::Monomial => {
                let mut p = 1.0;
                for _ in 0..=order {
                    out.push(p);
                    p *= lambda;
                }
            }
            Basis::Chebyshev => {
                let t = 2.0 * lambda / lambda_max - 1.0;
                out.push(1.0);
                if order >= 1 {
                    out.push(t);
                }
                for k in 2..=order {
                    out.push(2.0 * t * out[k - 1] - out[k - 2]);
                }
            }
            Basis::Bernstein => {
                let (a, b) = (1.0 - lambda / 2.0, lambda / 2.0);
                for k in 0..=order {
                    out.push(binomial(order, k) * a.powi((order - k) as i32) * b.powi(k as i32));
                }
            }
        }
        out
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Monomial => "monomial",
            Basis::Chebyshev => "chebyshev",
            Basis::Bernstein => "bernstein",
        })
    }
}

impl FromStr for Basis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "monomial" => Ok(Basis::Monomial),
            "chebyshev" | "cheb" => Ok(Basis::Chebyshev),
            "bernstein" | "bern" => Ok(Basis::Bernstein),
            other => input(format!("unknown basis {other:?}")),
        }
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `layers[k] = p_k(op) X` for `k = 0..=order`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationStack {
    pub basis: Basis,
    pub order: usize,
    pub layers: Vec<Matrix>,
}

impl PropagationStack {
    pub fn rows(&self) -> usize {
        self.layers[0].nrows()
    }

    pub fn cols(&self) -> usize {
        self.layers[0].ncols()
    }
}

/// Per-node filter coefficients: row `i` holds `eta_{i,0..=K}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    pub psi: Matrix,
}

impl CoefficientMatrix {
    /// Every row equal to `coeffs`.
    pub fn constant(n: usize, coeffs: &[f64]) -> Self {
        Self {
            psi: Matrix::from_shape_fn((n, coeffs.len()), |(_, k)| coeffs[k]),
        }
    }

    pub fn order(&self) -> usize {
        self.psi.ncols().saturating_sub(1)
    }
}

fn check_operator(basis: Basis, op: &SparseOperator, rows: usize) -> Result<()> {
    if op.kind() != basis.expected_kind() {
        return input(format!("{basis} propagation requires a {:?} operator, got {:?}", basis.expected_kind(), op.kind()));
    }
    if op.dim() != rows {
        return shape(format!("operator dim {} vs {} feature rows", op.dim(), rows));
    }
    Ok(())
}

pub fn propagate(basis: Basis, op: &SparseOperator, x: ArrayView2<'_, f64>, order: usize) -> Result<PropagationStack> {
    propagate_with(basis, op, x, order, crate::parallel_kernels())
}

pub fn propagate_with(
    basis: Basis,
    op: &SparseOperator,
    x: ArrayView2<'_, f64>,
    order: usize,
    parallel: bool,
) -> Result<PropagationStack> {
    check_operator(basis, op, x.nrows())?;
    let spmm = |m: &Matrix| op.spmm_with(m.view(), parallel);
    let mut layers: Vec<Matrix> = Vec::with_capacity(order + 1);
    match basis {
        Basis::Monomial => {
            layers.push(x.to_owned());
            for k in 1..=order {
                let next = spmm(&layers[k - 1])?;
                layers.push(next);
            }
        }
        Basis::Chebyshev => {
            layers.push(x.to_owned());
            if order >= 1 {
                layers.push(spmm(&layers[0])?);
            }
            for k in 2..=order {
                let mut next = spmm(&layers[k - 1])?;
                next *= 2.0;
                next -= &layers[k - 2];
                layers.push(next);
            }
        }
        Basis::Bernstein => {
            // Pass 1: (L/2)^k X. Pass 2: apply (I - L/2) K-k times and scale by C(K, k).
            let half = op.affine(0.5, 0.0);
            let comp = op.affine(-0.5, 1.0);
            let mut powers = vec![x.to_owned()];
            for k in 1..=order {
                let next = half.spmm_with(powers[k - 1].view(), parallel)?;
                powers.push(next);
            }
            for (k, mut layer) in powers.into_iter().enumerate() {
                for _ in 0..(order - k) {
                    layer = comp.spmm_with(layer.view(), parallel)?;
                }
                layer *= binomial(order, k);
                layers.push(layer);
            }
        }
    }
    Ok(PropagationStack { basis, order, layers })
}

/// Adjoint of [`propagate`]: returns `sum_k p_k(op)^T grads[k]`.
///
/// Every basis operator here is symmetric, so this is the same polynomial applied to the
/// gradients, evaluated with reverse recurrences instead of `K` separate propagations.
pub fn propagate_adjoint(basis: Basis, op: &SparseOperator, grads: &[Matrix], parallel: bool) -> Result<Matrix> {
    let order = grads.len().checked_sub(1).ok_or_else(|| Error::Shape("empty gradient stack".into()))?;
    check_operator(basis, op, grads[0].nrows())?;
    let spmm = |m: &Matrix| op.spmm_with(m.view(), parallel);
    match basis {
        Basis::Monomial => {
            // Horner: acc = G_K; acc = L acc + G_k.
            let mut acc = grads[order].clone();
            for k in (0..order).rev() {
                acc = spmm(&acc)?;
                acc += &grads[k];
            }
            Ok(acc)
        }
        Basis::Chebyshev => {
            // Reverse of X_k = 2 L X_{k-1} - X_{k-2}, X_1 = L X_0.
            let mut acc: Vec<Matrix> = grads.to_vec();
            for k in (2..=order).rev() {
                let back = spmm(&acc[k])?;
                acc[k - 1].scaled_add(2.0, &back);
                let gk = acc[k].clone();
                acc[k - 2] -= &gk;
            }
            if order >= 1 {
                let back = spmm(&acc[1])?;
                acc[0] += &back;
            }
            Ok(acc.swap_remove(0))
        }
        Basis::Bernstein => {
            let half = op.affine(0.5, 0.0);
            let comp = op.affine(-0.5, 1.0);
            // sum_k C(K,k) B^k A^{K-k} G_k, with A, B commuting: Horner in B.
            let mut acc: Option<Matrix> = None;
            for k in (0..=order).rev() {
                let mut term = grads[k].clone();
                for _ in 0..(order - k) {
                    term = comp.spmm_with(term.view(), parallel)?;
                }
                term *= binomial(order, k);
                acc = Some(match acc {
                    None => term,
                    Some(a) => half.spmm_with(a.view(), parallel)? + term,
                });
            }
            Ok(acc.expect("order + 1 >= 1 terms"))
        }
    }
}

/// Node-oriented combination: output row `i` is `sum_k psi[i, k] * layers[k][i, :]`.
pub fn combine(stack: &PropagationStack, psi: &CoefficientMatrix) -> Result<Matrix> {
    if psi.psi.ncols() != stack.layers.len() {
        return shape(format!("psi has {} columns, stack has {} layers", psi.psi.ncols(), stack.layers.len()));
    }
    if psi.psi.nrows() != stack.rows() {
        return shape(format!("psi has {} rows, stack has {}", psi.psi.nrows(), stack.rows()));
    }
    let mut out = Matrix::zeros((stack.rows(), stack.cols()));
    for (k, layer) in stack.layers.iter().enumerate() {
        let coeff = psi.psi.column(k);
        Zip::from(out.rows_mut())
            .and(layer.rows())
            .and(&coeff)
            .for_each(|mut o, l, &c| o.scaled_add(c, &l));
    }
    Ok(out)
}

/// Global filtering `sum_k gamma_k layers[k]`.
pub fn combine_global(stack: &PropagationStack, gamma: &[f64]) -> Result<Matrix> {
    if gamma.len() != stack.layers.len() {
        return shape(format!("{} coefficients for {} layers", gamma.len(), stack.layers.len()));
    }
    let mut out = Matrix::zeros((stack.rows(), stack.cols()));
    for (layer, &g) in stack.layers.iter().zip(gamma) {
        out.scaled_add(g, layer);
    }
    Ok(out)
}

/// `sum_k coeffs[k] p_k(lambda)` on each grid point, Chebyshev at `2 lambda / 2 - 1`.
pub fn frequency_response(basis: Basis, coeffs: &[f64], grid: &[f64]) -> Vec<f64> {
    frequency_response_with(basis, coeffs, grid, 2.0)
}

pub fn frequency_response_with(basis: Basis, coeffs: &[f64], grid: &[f64], lambda_max: f64) -> Vec<f64> {
    let order = coeffs.len().saturating_sub(1);
    grid.iter()
        .map(|&lambda| {
            basis
                .values(order, lambda, lambda_max)
                .iter()
                .zip(coeffs)
                .map(|(p, c)| p * c)
                .sum()
        })
        .collect()
}

/// Evenly spaced grid of `points` values over `[0, 2]`.
pub fn lambda_grid(points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..points).map(|i| 2.0 * i as f64 / (points - 1) as f64).collect(),
    }
}

/// Row-wise dot products of two equally shaped matrices.
pub(crate) fn row_dots(a: &Matrix, b: ArrayView2<'_, f64>) -> Array1<f64> {
    Zip::from(a.rows()).and(b.rows()).map_collect(|x, y| x.dot(&y))
}

/// Scales each row `i` of `m` by `s[i]`.
pub(crate) fn scale_rows(m: ArrayView2<'_, f64>, s: &Array1<f64>) -> Matrix {
    let mut out = m.to_owned();
    out.axis_iter_mut(Axis(0)).zip(s.iter()).for_each(|(mut r, &c)| r *= c);
    out
}

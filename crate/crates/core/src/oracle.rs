//! Dense spectral ground truth for small graphs.
//!
//! Everything here goes through an explicit eigendecomposition `L = U diag(lambda) U^T`
//! and is meant for verification, never for training.

use std::sync::Arc;

use ndarray::{Array1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{input, shape, Error, Result};
use crate::graph::{erdos_renyi, path, random_tree, Graph};
use crate::poly::{combine_global, propagate, Basis};
use crate::sparse::SparseOperator;
use crate::Matrix;

/// Default size cap for [`eigendecompose`].
pub const DEFAULT_EIGEN_CAP: usize = 512;

/// Orthonormal eigenbasis (columns of `basis`) with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub basis: Matrix,
    pub eigenvalues: Vec<f64>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Graph Fourier transform `U^T x`.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        self.basis.t().dot(&Array1::from(x.to_vec())).to_vec()
    }

    /// `max |U^T U - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        max_abs(&(self.basis.t().dot(&self.basis) - Matrix::eye(self.dim())))
    }

    /// `max |U diag(lambda) U^T - a|`.
    pub fn reconstruction_error(&self, a: &Matrix) -> f64 {
        max_abs(&(self.reconstruct(&self.eigenvalues) - a))
    }

    /// `U diag(values) U^T`.
    pub fn reconstruct(&self, values: &[f64]) -> Matrix {
        let mut scaled = self.basis.clone();
        scaled
            .axis_iter_mut(Axis(1))
            .zip(values)
            .for_each(|(mut col, &v)| col *= v);
        scaled.dot(&self.basis.t())
    }

    /// Orthogonal projector onto the eigenspace with eigenvalues in `[lo, hi]`.
    pub fn projector(&self, lo: f64, hi: f64) -> Matrix {
        let mask: Vec<f64> = self
            .eigenvalues
            .iter()
            .map(|&l| if l >= lo && l <= hi { 1.0 } else { 0.0 })
            .collect();
        self.reconstruct(&mask)
    }
}

pub(crate) fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Frequency response `g(lambda)`, either as a function or tabulated per eigenvalue.
#[derive(Clone)]
pub enum SpectralFilter {
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    Tabulated(Vec<f64>),
}

impl std::fmt::Debug for SpectralFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpectralFilter::Function(_) => f.write_str("SpectralFilter::Function(..)"),
            SpectralFilter::Tabulated(v) => f.debug_tuple("SpectralFilter::Tabulated").field(v).finish(),
        }
    }
}

impl SpectralFilter {
    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        SpectralFilter::Function(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::from_fn(move |_| c)
    }

    /// `sum_k coeffs[k] p_k(lambda)` for the given basis (Chebyshev with `lambda_max = 2`).
    pub fn polynomial(basis: Basis, coeffs: Vec<f64>) -> Self {
        Self::from_fn(move |l| crate::poly::frequency_response(basis, &coeffs, &[l])[0])
    }

    /// Response at every eigenvalue of `es`.
    pub fn tabulate(&self, es: &EigenSystem) -> Result<Vec<f64>> {
        let values = match self {
            SpectralFilter::Function(f) => es.eigenvalues.iter().map(|&l| f(l)).collect::<Vec<_>>(),
            SpectralFilter::Tabulated(v) => {
                if v.len() != es.dim() {
                    return shape(format!("{} tabulated values for {} eigenvalues", v.len(), es.dim()));
                }
                v.clone()
            }
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("filter response is not finite at some eigenvalue".into()));
        }
        Ok(values)
    }
}

pub fn eigendecompose(l: &SparseOperator) -> Result<EigenSystem> {
    eigendecompose_capped(l, DEFAULT_EIGEN_CAP)
}

pub fn eigendecompose_capped(l: &SparseOperator, cap: usize) -> Result<EigenSystem> {
    if l.dim() > cap {
        return input(format!("dense eigendecomposition capped at n={cap}, got n={}", l.dim()));
    }
    if l.max_asymmetry() > 1e-12 {
        return input("operator is not symmetric");
    }
    symmetric_eigen(&l.to_dense())
}

/// Householder tridiagonalization followed by implicit-shift QL iteration
/// (the EISPACK `tred2`/`tql2` pair). Eigenvalues are returned ascending with
/// eigenvectors as the matching columns.
pub fn symmetric_eigen(a: &Matrix) -> Result<EigenSystem> {
    let n = a.nrows();
    if a.ncols() != n {
        return shape("eigendecomposition needs a square matrix");
    }
    if n == 0 {
        return Ok(EigenSystem { basis: Matrix::zeros((0, 0)), eigenvalues: vec![] });
    }
    let mut v = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    ql_implicit(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let basis = Matrix::from_shape_fn((n, n), |(r, c)| v[[r, order[c]]]);
    let eigenvalues = order.iter().map(|&i| d[i]).collect();
    Ok(EigenSystem { basis, eigenvalues })
}

fn tridiagonalize(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[[n - 1, j]];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
                v[[j, i]] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                let f = d[j];
                v[[j, i]] = f;
                let mut g = e[j] + v[[j, j]] * f;
                for k in j + 1..i {
                    g += v[[k, j]] * d[k];
                    e[k] += v[[k, j]] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[[k, j]] -= f * e[k] + g * d[k];
                }
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
            }
        }
        d[i] = h;
    }
    // Accumulate the Householder reflections.
    for i in 0..n - 1 {
        v[[n - 1, i]] = v[[i, i]];
        v[[i, i]] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[[k, i + 1]] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[[k, i + 1]] * v[[k, j]];
                }
                for k in 0..=i {
                    v[[k, j]] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[[k, i + 1]] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[[n - 1, j]];
        v[[n - 1, j]] = 0.0;
    }
    v[[n - 1, n - 1]] = 1.0;
    e[0] = 0.0;
}

fn ql_implicit(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::Numerical(format!("QL iteration did not converge for eigenvalue {l}")));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let hk = v[[k, i + 1]];
                        v[[k, i + 1]] = s * v[[k, i]] + c * hk;
                        v[[k, i]] = c * v[[k, i]] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

fn check_len(es: &EigenSystem, len: usize) -> Result<()> {
    if len != es.dim() {
        return shape(format!("signal length {len} vs n={}", es.dim()));
    }
    Ok(())
}

/// `U diag(g(lambda)) U^T x`.
pub fn exact_filter(es: &EigenSystem, filt: &SpectralFilter, x: &[f64]) -> Result<Vec<f64>> {
    check_len(es, x.len())?;
    let response = filt.tabulate(es)?;
    let xhat = es.transform(x);
    let scaled: Array1<f64> = xhat.iter().zip(&response).map(|(a, g)| a * g).collect();
    Ok(es.basis.dot(&scaled).to_vec())
}

/// Column-wise [`exact_filter`] for a dense signal matrix.
pub fn exact_filter_matrix(es: &EigenSystem, filt: &SpectralFilter, x: &Matrix) -> Result<Matrix> {
    if x.nrows() != es.dim() {
        return shape(format!("signal rows {} vs n={}", x.nrows(), es.dim()));
    }
    let response = filt.tabulate(es)?;
    Ok(es.reconstruct(&response).dot(x))
}

/// Generalized translation `T_i(g) = sqrt(n) sum_l u_l u_l(i) g(lambda_l)`.
pub fn translate_filter(es: &EigenSystem, filt: &SpectralFilter, i: usize) -> Result<Vec<f64>> {
    if i >= es.dim() {
        return input(format!("node {i} out of range"));
    }
    let response = filt.tabulate(es)?;
    let sqrt_n = (es.dim() as f64).sqrt();
    let weights: Array1<f64> = (0..es.dim())
        .map(|l| sqrt_n * es.basis[[i, l]] * response[l])
        .collect();
    Ok(es.basis.dot(&weights).to_vec())
}

/// Node-centered convolution `x * T_i(g) = sqrt(n) sum_l u_l xhat_l u_l(i) g(lambda_l)`.
pub fn filter_at_node(es: &EigenSystem, filt: &SpectralFilter, x: &[f64], i: usize) -> Result<Vec<f64>> {
    check_len(es, x.len())?;
    if i >= es.dim() {
        return input(format!("node {i} out of range"));
    }
    let response = filt.tabulate(es)?;
    let xhat = es.transform(x);
    let sqrt_n = (es.dim() as f64).sqrt();
    let weights: Array1<f64> = (0..es.dim())
        .map(|l| sqrt_n * xhat[l] * es.basis[[i, l]] * response[l])
        .collect();
    Ok(es.basis.dot(&weights).to_vec())
}

/// Tabulated node filters from [`pseudoinverse_demo`].
#[derive(Debug, Clone)]
pub struct PseudoinverseReport {
    /// `sqrt(n) x_i q_l g(lambda_l)` with `q = pinv(xhat)`.
    pub approx: Vec<f64>,
    /// `sqrt(n) u_l(i) g(lambda_l)`.
    pub exact: Vec<f64>,
    pub max_abs_error: f64,
}

/// Compares the node filter `sqrt(n) u_l(i) g(lambda_l)` with its approximation from the
/// signal alone, where row `i` of `U` is replaced by `x_i pinv(xhat)`.
pub fn pseudoinverse_demo(x: &[f64], es: &EigenSystem, filt: &SpectralFilter, i: usize) -> Result<PseudoinverseReport> {
    check_len(es, x.len())?;
    if i >= es.dim() {
        return input(format!("node {i} out of range"));
    }
    let xhat = es.transform(x);
    let norm2: f64 = xhat.iter().map(|v| v * v).sum();
    if norm2 == 0.0 {
        return input("graph Fourier transform of x is identically zero");
    }
    let response = filt.tabulate(es)?;
    let sqrt_n = (es.dim() as f64).sqrt();
    let approx: Vec<f64> = (0..es.dim())
        .map(|l| sqrt_n * x[i] * (xhat[l] / norm2) * response[l])
        .collect();
    let exact: Vec<f64> = (0..es.dim())
        .map(|l| sqrt_n * es.basis[[i, l]] * response[l])
        .collect();
    let max_abs_error = approx
        .iter()
        .zip(&exact)
        .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
    Ok(PseudoinverseReport { approx, exact, max_abs_error })
}

/// Filters a delta at node `i` through the sparse polynomial pipeline and returns the
/// largest magnitude at nodes more than `K = coeffs.len() - 1` hops away (0 if none).
pub fn localization_check(g: &Graph, basis: Basis, coeffs: &[f64], i: usize) -> Result<f64> {
    if i >= g.node_count() {
        return input(format!("node {i} out of range"));
    }
    if coeffs.is_empty() {
        return input("need at least one coefficient");
    }
    let order = coeffs.len() - 1;
    let op = basis.operator(g, 2.0)?;
    let mut delta = Matrix::zeros((g.node_count(), 1));
    delta[[i, 0]] = 1.0;
    let stack = propagate(basis, &op, delta.view(), order)?;
    let z = combine_global(&stack, coeffs)?;
    let dist = g.distances_from(i);
    Ok(dist
        .iter()
        .enumerate()
        .filter(|(_, d)| d.map_or(true, |d| d > order))
        .map(|(j, _)| z[[j, 0]].abs())
        .fold(0.0, f64::max))
}

/// Aggregate of [`oracle_suite`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSuite {
    pub trials: usize,
    /// Polynomial pipeline vs eigenbasis filtering, all bases.
    pub max_filter_error: f64,
    /// `sqrt(n)`-scaled translation vs the pipeline on a delta.
    pub max_translation_error: f64,
    /// Delta leak beyond `K` hops on random trees and paths.
    pub max_leak: f64,
    pub filter_tolerance: f64,
    pub leak_tolerance: f64,
}

impl OracleSuite {
    pub fn passed(&self) -> bool {
        self.max_filter_error <= self.filter_tolerance
            && self.max_translation_error <= self.filter_tolerance
            && self.max_leak <= self.leak_tolerance
    }
}

/// Randomized equivalence and localization checks on graphs with up to `max_n` nodes.
pub fn oracle_suite(max_n: usize, trials: usize, seed: u64) -> Result<OracleSuite> {
    if max_n < 2 || max_n > DEFAULT_EIGEN_CAP {
        return input(format!("graph size must lie in 2..={DEFAULT_EIGEN_CAP}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleSuite {
        trials,
        max_filter_error: 0.0,
        max_translation_error: 0.0,
        max_leak: 0.0,
        filter_tolerance: 1e-10,
        leak_tolerance: 1e-12,
    };
    for t in 0..trials {
        let n = rng.random_range(2..=max_n);
        let g = erdos_renyi(n, 0.2, &mut rng);
        let order = rng.random_range(1..=10);
        let coeffs: Vec<f64> = (0..=order).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Matrix::from_shape_simple_fn((n, 2), || rng.random_range(-1.0..1.0));
        let es = eigendecompose(&SparseOperator::normalized_laplacian(&g))?;
        let i = rng.random_range(0..n);
        let mut delta = Matrix::zeros((n, 1));
        delta[[i, 0]] = 1.0;
        for basis in Basis::ALL {
            let filt = SpectralFilter::polynomial(basis, coeffs.clone());
            let op = basis.operator(&g, 2.0)?;
            let poly = combine_global(&propagate(basis, &op, x.view(), order)?, &coeffs)?;
            let exact = exact_filter_matrix(&es, &filt, &x)?;
            report.max_filter_error = report.max_filter_error.max(max_abs(&(&poly - &exact)));
            let at_i = combine_global(&propagate(basis, &op, delta.view(), order)?, &coeffs)?;
            let translated = translate_filter(&es, &filt, i)?;
            let scale = (n as f64).sqrt();
            let err = translated.iter().zip(at_i.column(0)).fold(0.0f64, |m, (a, b)| m.max((a - scale * b).abs()));
            report.max_translation_error = report.max_translation_error.max(err);

            let tree = if t % 2 == 0 { random_tree(n, &mut rng) } else { path(n) };
            let leak = localization_check(&tree, basis, &coeffs, rng.random_range(0..n))?;
            report.max_leak = report.max_leak.max(leak);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap(edges: &[(usize, usize)], n: usize) -> SparseOperator {
        SparseOperator::normalized_laplacian(&Graph::from_edges(edges, n).unwrap())
    }

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let a = Matrix::from_shape_fn((n, n), |_| rng.random::<f64>() - 0.5);
        &a + &a.t()
    }

    #[test]
    fn closed_form_spectra() {
        let p2 = eigendecompose(&lap(&[(0, 1)], 2)).unwrap();
        assert!((p2.eigenvalues[0]).abs() < 1e-12 && (p2.eigenvalues[1] - 2.0).abs() < 1e-12);
        let k3 = eigendecompose(&lap(&[(0, 1), (1, 2), (0, 2)], 3)).unwrap();
        for (got, want) in k3.eigenvalues.iter().zip([0.0, 1.5, 1.5]) {
            assert!((got - want).abs() < 1e-12);
        }
        // Degenerate eigenspace: compare the projector, not the vectors.
        let p = k3.projector(1.4, 1.6);
        let want = Matrix::eye(3) - Matrix::from_elem((3, 3), 1.0 / 3.0);
        assert!(max_abs(&(p - want)) < 1e-12);
    }

    #[test]
    fn zero_matrix_reconstructs() {
        let es = eigendecompose(&SparseOperator::zeros(4)).unwrap();
        assert!(es.eigenvalues.iter().all(|&l| l == 0.0));
        assert!(es.orthonormality_error() < 1e-12);
        assert!(es.reconstruction_error(&Matrix::zeros((4, 4))) < 1e-12);
    }

    #[test]
    fn random_symmetric_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 5, 17, 40] {
            let a = random_symmetric(n, &mut rng);
            let es = symmetric_eigen(&a).unwrap();
            assert!(es.orthonormality_error() < 1e-10);
            assert!(es.reconstruction_error(&a) < 1e-10);
            assert!(es.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn cap_enforced() {
        assert!(eigendecompose_capped(&SparseOperator::zeros(10), 5).is_err());
    }

    #[test]
    fn filters_on_identity_zero_and_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let edges: Vec<_> = (0..10).map(|i| (i, (i * 3 + 1) % 10)).collect();
        let l = lap(&edges, 10);
        let es = eigendecompose(&l).unwrap();
        let x: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
        let id = exact_filter(&es, &SpectralFilter::constant(1.0), &x).unwrap();
        assert!(id.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-10));
        assert!(exact_filter(&es, &SpectralFilter::constant(0.0), &x).unwrap().iter().all(|&v| v == 0.0));
        let lx = exact_filter(&es, &SpectralFilter::from_fn(|l| l), &x).unwrap();
        let sp = l.matvec(&x).unwrap();
        assert!(lx.iter().zip(&sp).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn translation_of_identity_is_scaled_delta() {
        let es = eigendecompose(&lap(&[(0, 1), (1, 2), (2, 3), (3, 4), (1, 4)], 5)).unwrap();
        let t = translate_filter(&es, &SpectralFilter::constant(1.0), 2).unwrap();
        for (j, v) in t.iter().enumerate() {
            let want = if j == 2 { 5f64.sqrt() } else { 0.0 };
            assert!((v - want).abs() < 1e-9);
        }
        assert!(translate_filter(&es, &SpectralFilter::constant(0.0), 2).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn translated_polynomial_is_localized() {
        let g = Graph::from_edges(&(0..11).map(|i| (i, i + 1)).collect::<Vec<_>>(), 12).unwrap();
        let es = eigendecompose(&SparseOperator::normalized_laplacian(&g)).unwrap();
        let filt = SpectralFilter::polynomial(Basis::Chebyshev, vec![0.3, -0.2, 0.5, 0.1]);
        let t = translate_filter(&es, &filt, 4).unwrap();
        let dist = g.distances_from(4);
        for (j, v) in t.iter().enumerate() {
            if dist[j].unwrap() > 3 {
                assert!(v.abs() <= 1e-9, "leak {v} at node {j}");
            }
        }
    }

    #[test]
    fn filter_at_node_matches_dense_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let es = eigendecompose(&lap(&[(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)], 4)).unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
        let z = filter_at_node(&es, &SpectralFilter::constant(1.0), &x, 1).unwrap();
        // sqrt(n) U diag(U^T x) U^T e_1, written with explicit loops.
        for j in 0..4 {
            let mut acc = 0.0;
            for l in 0..4 {
                let xhat: f64 = (0..4).map(|m| es.basis[[m, l]] * x[m]).sum();
                acc += es.basis[[j, l]] * xhat * es.basis[[1, l]];
            }
            assert!((z[j] - 2.0 * acc).abs() < 1e-12);
        }
        assert!(filter_at_node(&es, &SpectralFilter::constant(1.0), &[0.0; 4], 1).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn filter_at_node_polynomial_support() {
        let g = Graph::from_edges(&(0..9).map(|i| (i, i + 1)).collect::<Vec<_>>(), 10).unwrap();
        let es = eigendecompose(&SparseOperator::normalized_laplacian(&g)).unwrap();
        let coeffs = vec![0.4, -0.3, 0.9];
        let filt = SpectralFilter::polynomial(Basis::Chebyshev, coeffs.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x: Vec<f64> = (0..10).map(|_| rng.random::<f64>() - 0.5).collect();

        // x * T_i(g) = T_i(x * g): translation of the filter whose response is xhat * g.
        let xhat = es.transform(&x);
        let g_vals = filt.tabulate(&es).unwrap();
        let phi = SpectralFilter::Tabulated(xhat.iter().zip(&g_vals).map(|(a, b)| a * b).collect());
        let lhs = filter_at_node(&es, &filt, &x, 3).unwrap();
        let rhs = translate_filter(&es, &phi, 3).unwrap();
        assert!(lhs.iter().zip(&rhs).all(|(a, b)| (a - b).abs() < 1e-12));

        // With a flat spectrum xhat = 1 the product response stays a degree-2 polynomial,
        // so the result is supported within 2 hops of the center.
        let flat: Vec<f64> = (0..10).map(|r| es.basis.row(r).sum()).collect();
        let z = filter_at_node(&es, &filt, &flat, 3).unwrap();
        let dist = g.distances_from(3);
        for (j, v) in z.iter().enumerate() {
            if dist[j].unwrap() > 2 {
                assert!(v.abs() < 1e-9, "node {j}: {v}");
            }
        }
    }

    #[test]
    fn pseudoinverse_on_eigenvector_is_exact() {
        let es = eigendecompose(&lap(&[(0, 1), (1, 2), (2, 3), (3, 4)], 5)).unwrap();
        let x: Vec<f64> = es.basis.column(3).to_vec();
        let filt = SpectralFilter::from_fn(|l| 1.0 + l);
        let r = pseudoinverse_demo(&x, &es, &filt, 1).unwrap();
        assert!((r.approx[3] - r.exact[3]).abs() < 1e-12);
        assert_eq!(r.approx.iter().filter(|v| v.abs() > 1e-12).count(), 1);
        assert!(pseudoinverse_demo(&[0.0; 5], &es, &filt, 1).is_err());
        let k3 = eigendecompose(&lap(&[(0, 1), (1, 2), (0, 2)], 3)).unwrap();
        let r = pseudoinverse_demo(&[0.3, -1.0, 0.7], &k3, &filt, 0).unwrap();
        assert!(r.max_abs_error.is_finite());
    }

    #[test]
    fn localization_on_path_and_diameter() {
        let g = Graph::from_edges(&(0..4).map(|i| (i, i + 1)).collect::<Vec<_>>(), 5).unwrap();
        for basis in Basis::ALL {
            assert!(localization_check(&g, basis, &[0.2, -0.7, 1.3], 0).unwrap() <= 1e-12);
            assert_eq!(localization_check(&g, basis, &[0.2, 0.1, 0.1, 0.1, 0.4], 0).unwrap(), 0.0);
        }
    }

    #[test]
    fn suite_passes_and_rejects_oversized_graphs() {
        let r = oracle_suite(24, 6, 3).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.trials, 6);
        assert!(oracle_suite(DEFAULT_EIGEN_CAP + 1, 1, 0).is_err());
    }
}

//! Forward passes with cached intermediates and their exact reverse-mode gradients.

use std::borrow::Cow;

use ndarray::{Array1, Axis};
use rand::Rng;

use super::params::{Filter, Mlp, ModelParams, Weights};
use super::{HSource, Mode};
use crate::data::Dataset;
use crate::error::{input, shape, Error, Result};
use crate::poly::{propagate, propagate_adjoint, row_dots, scale_rows, PropagationStack};
use crate::sparse::SparseOperator;
use crate::Matrix;

pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Dropout rates for one forward pass. `Dropout::OFF` gives the deterministic evaluation pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    /// Applied to the MLP input and hidden layer.
    pub mlp: f64,
    /// Applied to the filtering layer: `X0` in APPNP-like mode, the combined `Z~` in SGC-like mode.
    pub filter: f64,
}

impl Dropout {
    pub const OFF: Dropout = Dropout { mlp: 0.0, filter: 0.0 };
}

/// Inverted dropout. Returns the masked matrix and the mask (entries `0` or `1/(1-p)`),
/// or no mask when `p == 0`.
pub fn dropout(x: Matrix, p: f64, rng: &mut impl Rng) -> (Matrix, Option<Matrix>) {
    if p <= 0.0 {
        return (x, None);
    }
    let keep = 1.0 / (1.0 - p);
    let mask = Matrix::from_shape_simple_fn(x.raw_dim(), || if rng.random::<f64>() < p { 0.0 } else { keep });
    (&x * &mask, Some(mask))
}

/// Inputs with at most this fraction of nonzeros take the sparse first-layer path.
const SPARSE_INPUT_DENSITY: f64 = 0.2;

/// Row-compressed copy of a mostly-zero input matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SparseRows {
    cols: usize,
    offsets: Vec<usize>,
    entries: Vec<(usize, f64)>,
}

impl SparseRows {
    fn from_dense(x: &Matrix) -> Self {
        let mut offsets = Vec::with_capacity(x.nrows() + 1);
        let mut entries = vec![];
        offsets.push(0);
        for row in x.rows() {
            entries.extend(row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(c, &v)| (c, v)));
            offsets.push(entries.len());
        }
        Self { cols: x.ncols(), offsets, entries }
    }

    /// Inverted dropout on the stored entries; zeros are unaffected by masking anyway.
    fn dropout(&self, p: f64, rng: &mut impl Rng) -> Self {
        let keep = 1.0 / (1.0 - p);
        let mut offsets = Vec::with_capacity(self.offsets.len());
        let mut entries = Vec::with_capacity(self.entries.len());
        offsets.push(0);
        for i in 0..self.offsets.len() - 1 {
            for &(c, v) in self.row(i) {
                if rng.random::<f64>() >= p {
                    entries.push((c, v * keep));
                }
            }
            offsets.push(entries.len());
        }
        Self { cols: self.cols, offsets, entries }
    }

    fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }

    /// `self * w`.
    fn dot(&self, w: &Matrix) -> Matrix {
        let n = self.offsets.len() - 1;
        let mut out = Matrix::zeros((n, w.ncols()));
        for (i, mut o) in out.rows_mut().into_iter().enumerate() {
            for &(c, v) in self.row(i) {
                o.scaled_add(v, &w.row(c));
            }
        }
        out
    }

    /// `self^T * d`.
    fn t_dot(&self, d: &Matrix) -> Matrix {
        let mut out = Matrix::zeros((self.cols, d.ncols()));
        for i in 0..self.offsets.len() - 1 {
            for &(c, v) in self.row(i) {
                out.row_mut(c).scaled_add(v, &d.row(i));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
enum MlpInput {
    Dense(Matrix),
    Sparse(SparseRows),
}

/// Compressed copy of `x` when at most a fifth of its entries are nonzero.
pub(crate) fn compress_features(x: &Matrix) -> Option<SparseRows> {
    let nnz = x.iter().filter(|v| **v != 0.0).count();
    (x.len() > 0 && (nnz as f64) <= SPARSE_INPUT_DENSITY * x.len() as f64).then(|| SparseRows::from_dense(x))
}

/// MLP input before dropout.
enum MlpSource<'a> {
    Dense(Matrix),
    /// Raw features in compressed form; no input gradient is available on this path.
    Sparse(&'a SparseRows),
}

#[derive(Debug, Clone)]
struct MlpTrace {
    input_mask: Option<Matrix>,
    input: MlpInput,
    hidden_pre: Matrix,
    hidden_mask: Option<Matrix>,
    hidden: Matrix,
}

fn add_bias(mut m: Matrix, b: &Matrix) -> Matrix {
    m += &b.row(0);
    m
}

fn mlp_forward(mlp: &Mlp, x: MlpSource<'_>, p: f64, rng: &mut impl Rng) -> (Matrix, MlpTrace) {
    let (input, input_mask) = match x {
        MlpSource::Dense(x) => {
            let (x, mask) = dropout(x, p, rng);
            (MlpInput::Dense(x), mask)
        }
        MlpSource::Sparse(x) if p > 0.0 => (MlpInput::Sparse(x.dropout(p, rng)), None),
        MlpSource::Sparse(x) => (MlpInput::Sparse(x.clone()), None),
    };
    let first = match &input {
        MlpInput::Dense(x) => x.dot(&mlp.w1),
        MlpInput::Sparse(x) => x.dot(&mlp.w1),
    };
    let hidden_pre = add_bias(first, &mlp.b1);
    let (hidden, hidden_mask) = dropout(hidden_pre.mapv(|v| v.max(0.0)), p, rng);
    let out = add_bias(hidden.dot(&mlp.w2), &mlp.b2);
    (out, MlpTrace { input_mask, input, hidden_pre, hidden_mask, hidden })
}

fn mlp_backward(mlp: &Mlp, tr: &MlpTrace, dout: &Matrix, grads: &mut Mlp, want_input: bool) -> Option<Matrix> {
    grads.w2 += &tr.hidden.t().dot(dout);
    grads.b2 += &dout.sum_axis(Axis(0));
    let mut dh = dout.dot(&mlp.w2.t());
    if let Some(m) = &tr.hidden_mask {
        dh *= m;
    }
    ndarray::Zip::from(&mut dh).and(&tr.hidden_pre).for_each(|d, &pre| {
        if pre <= 0.0 {
            *d = 0.0;
        }
    });
    match &tr.input {
        MlpInput::Dense(x) => grads.w1 += &x.t().dot(&dh),
        MlpInput::Sparse(x) => grads.w1 += &x.t_dot(&dh),
    }
    grads.b1 += &dh.sum_axis(Axis(0));
    want_input.then(|| {
        assert!(matches!(tr.input, MlpInput::Dense(_)), "input gradient requested on the compressed path");
        let mut dx = dh.dot(&mlp.w1.t());
        if let Some(m) = &tr.input_mask {
            dx *= m;
        }
        dx
    })
}

#[derive(Debug, Clone)]
struct FilterTrace {
    /// Per order (`PerOrder`) or a single entry (`Static`); empty for global filters.
    h: Vec<Matrix>,
    /// `eta[k][i]` is node `i`'s coefficient for order `k`.
    eta: Vec<Array1<f64>>,
}

fn filter_forward(
    filter: &Filter,
    h_source: HSource,
    layers: &[Matrix],
    static_input: Option<&Matrix>,
) -> Result<(Matrix, FilterTrace)> {
    let n = layers[0].nrows();
    let mut z = Matrix::zeros(layers[0].raw_dim());
    let mut h = vec![];
    let mut eta = vec![];
    match filter {
        Filter::Global { gamma } => {
            if gamma.nrows() != layers.len() {
                return shape(format!("{} coefficients for {} layers", gamma.nrows(), layers.len()));
            }
            for (k, layer) in layers.iter().enumerate() {
                z.scaled_add(gamma[[k, 0]], layer);
                eta.push(Array1::from_elem(n, gamma[[k, 0]]));
            }
        }
        Filter::Factorized { w, gamma } => {
            if gamma.nrows() != layers.len() {
                return shape(format!("Gamma has {} rows for {} layers", gamma.nrows(), layers.len()));
            }
            if h_source == HSource::Static {
                let x = static_input.expect("static H needs its input");
                h.push(x.dot(w).mapv(sigmoid));
            }
            for (k, layer) in layers.iter().enumerate() {
                if h_source == HSource::PerOrder {
                    if layer.ncols() != w.nrows() {
                        return shape(format!("W expects {} input columns, layer has {}", w.nrows(), layer.ncols()));
                    }
                    h.push(layer.dot(w).mapv(sigmoid));
                }
                let hk = h.last().unwrap();
                let e = hk.dot(&gamma.row(k));
                for ((mut zr, lr), &ei) in z.rows_mut().into_iter().zip(layer.rows()).zip(&e) {
                    zr.scaled_add(ei, &lr);
                }
                eta.push(e);
            }
        }
    }
    Ok((z, FilterTrace { h, eta }))
}

/// Returns `(d layers, d static input)`; layer gradients only when requested.
fn filter_backward(
    filter: &Filter,
    h_source: HSource,
    tr: &FilterTrace,
    layers: &[Matrix],
    static_input: Option<&Matrix>,
    dz: &Matrix,
    grads: &mut Filter,
    want_layers: bool,
) -> (Option<Vec<Matrix>>, Option<Matrix>) {
    let mut dlayers = want_layers.then(Vec::new);
    match (filter, grads) {
        (Filter::Global { gamma }, Filter::Global { gamma: dgamma }) => {
            for (k, layer) in layers.iter().enumerate() {
                dgamma[[k, 0]] += (layer * dz).sum();
                if let Some(d) = dlayers.as_mut() {
                    d.push(dz * gamma[[k, 0]]);
                }
            }
            (dlayers, None)
        }
        (Filter::Factorized { w, gamma }, Filter::Factorized { w: dw, gamma: dgamma }) => {
            let mut da_static: Option<Matrix> = None;
            for (k, layer) in layers.iter().enumerate() {
                let hk = match h_source {
                    HSource::PerOrder => &tr.h[k],
                    HSource::Static => &tr.h[0],
                };
                let deta = row_dots(dz, layer.view());
                dgamma.row_mut(k).scaled_add(1.0, &hk.t().dot(&deta));
                // dA = (deta gamma_k^T) * H * (1 - H)
                let gk = gamma.row(k);
                let mut da = Matrix::from_shape_fn(hk.raw_dim(), |(i, j)| deta[i] * gk[j]);
                ndarray::Zip::from(&mut da).and(hk).for_each(|d, &s| *d *= s * (1.0 - s));
                let mut dl = want_layers.then(|| scale_rows(dz.view(), &tr.eta[k]));
                match h_source {
                    HSource::PerOrder => {
                        *dw += &layer.t().dot(&da);
                        if let Some(dl) = dl.as_mut() {
                            *dl += &da.dot(&w.t());
                        }
                    }
                    HSource::Static => match da_static.as_mut() {
                        Some(acc) => *acc += &da,
                        None => da_static = Some(da),
                    },
                }
                if let (Some(d), Some(dl)) = (dlayers.as_mut(), dl) {
                    d.push(dl);
                }
            }
            let dstatic = da_static.map(|da| {
                let x = static_input.expect("static H needs its input");
                *dw += &x.t().dot(&da);
                da.dot(&w.t())
            });
            (dlayers, dstatic)
        }
        _ => unreachable!("gradient container shaped like the weights"),
    }
}

/// Intermediates of one forward pass, sufficient for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace<'a> {
    generation: u64,
    mode: Mode,
    h_source: HSource,
    mlp: MlpTrace,
    filter_mask: Option<Matrix>,
    layers: Cow<'a, [Matrix]>,
    static_input: Option<Matrix>,
    filter: FilterTrace,
    operator: Option<&'a SparseOperator>,
}

impl ForwardTrace<'_> {
    /// Per-node coefficients `eta_{i,k}` as an `n x (K+1)` matrix.
    pub fn coefficients(&self) -> Matrix {
        let n = self.filter.eta[0].len();
        Matrix::from_shape_fn((n, self.filter.eta.len()), |(i, k)| self.filter.eta[k][i])
    }

    /// Propagated layers used by the filtering step.
    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }
}

fn check_finite(m: &Matrix, stage: &str) -> Result<()> {
    if let Some((idx, v)) = m.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Numerical(format!("{stage}: non-finite value {v} at {idx:?}")));
    }
    Ok(())
}

/// Transform-then-propagate pass: `X0 = MLP(X)`, polynomial stack of `X0`, node-oriented
/// combination. Also serves global-only parameters.
pub fn forward_appnp_like<'a>(
    params: &ModelParams,
    dataset: &Dataset,
    op: &'a SparseOperator,
    dropout_rates: Dropout,
    rng: &mut impl Rng,
) -> Result<(Matrix, ForwardTrace<'a>)> {
    let compressed = compress_features(&dataset.features);
    forward_appnp_cached(params, dataset, compressed.as_ref(), op, dropout_rates, rng)
}

/// [`forward_appnp_like`] with the raw features optionally precompressed.
pub(crate) fn forward_appnp_cached<'a>(
    params: &ModelParams,
    dataset: &Dataset,
    compressed: Option<&SparseRows>,
    op: &'a SparseOperator,
    dropout_rates: Dropout,
    rng: &mut impl Rng,
) -> Result<(Matrix, ForwardTrace<'a>)> {
    if params.mode == Mode::SgcLike {
        return input("SGC-like parameters need forward_sgc_like");
    }
    if dataset.feature_dim() != params.feature_dim() {
        return shape(format!("model expects {} features, dataset has {}", params.feature_dim(), dataset.feature_dim()));
    }
    let w = &params.weights;
    let source = match compressed {
        Some(c) => MlpSource::Sparse(c),
        None => MlpSource::Dense(dataset.features.clone()),
    };
    let (x0, mlp_tr) = mlp_forward(&w.mlp, source, dropout_rates.mlp, rng);
    check_finite(&x0, "MLP output")?;
    let (x0, filter_mask) = dropout(x0, dropout_rates.filter, rng);
    let stack = propagate(params.basis, op, x0.view(), params.order)?;
    let static_input = (params.h_source == HSource::Static && matches!(w.filter, Filter::Factorized { .. })).then_some(x0);
    let (z, filter_tr) = filter_forward(&w.filter, params.h_source, &stack.layers, static_input.as_ref())?;
    check_finite(&z, "filter output")?;
    Ok((
        z,
        ForwardTrace {
            generation: params.generation,
            mode: params.mode,
            h_source: params.h_source,
            mlp: mlp_tr,
            filter_mask,
            layers: Cow::Owned(stack.layers),
            static_input,
            filter: filter_tr,
            operator: Some(op),
        },
    ))
}

/// Propagate-then-transform pass over a precomputed stack of raw features. `rows` selects a
/// subset of nodes (mini-batch); logits are returned for those rows in that order.
pub fn forward_sgc_like<'a>(
    params: &ModelParams,
    dataset: &Dataset,
    stack: &'a PropagationStack,
    rows: Option<&[usize]>,
    dropout_rates: Dropout,
    rng: &mut impl Rng,
) -> Result<(Matrix, ForwardTrace<'a>)> {
    if params.mode != Mode::SgcLike {
        return input("forward_sgc_like needs SGC-like parameters");
    }
    if stack.order != params.order || stack.basis != params.basis {
        return shape(format!(
            "stack is {} order {}, model is {} order {}",
            stack.basis, stack.order, params.basis, params.order
        ));
    }
    if stack.rows() != dataset.node_count() || stack.cols() != params.feature_dim() {
        return shape("precomputed stack does not match the dataset features");
    }
    let layers: Cow<'a, [Matrix]> = match rows {
        None => Cow::Borrowed(&stack.layers),
        Some(r) => Cow::Owned(stack.layers.iter().map(|l| l.select(Axis(0), r)).collect()),
    };
    let static_input = (params.h_source == HSource::Static).then(|| match rows {
        None => dataset.features.clone(),
        Some(r) => dataset.features.select(Axis(0), r),
    });
    let w = &params.weights;
    let (z, filter_tr) = filter_forward(&w.filter, params.h_source, &layers, static_input.as_ref())?;
    let (z, filter_mask) = dropout(z, dropout_rates.filter, rng);
    let (logits, mlp_tr) = mlp_forward(&w.mlp, MlpSource::Dense(z), dropout_rates.mlp, rng);
    check_finite(&logits, "MLP output")?;
    Ok((
        logits,
        ForwardTrace {
            generation: params.generation,
            mode: params.mode,
            h_source: params.h_source,
            mlp: mlp_tr,
            filter_mask,
            layers,
            static_input,
            filter: filter_tr,
            operator: None,
        },
    ))
}

/// Gradients of a scalar loss with respect to every trainable tensor, given `dlogits`
/// (the loss gradient with respect to the forward output).
pub fn backward(params: &ModelParams, trace: &ForwardTrace<'_>, dlogits: &Matrix) -> Result<Weights> {
    if trace.generation != params.generation || trace.mode != params.mode {
        return input("stale trace: parameters changed since the forward pass");
    }
    let w = &params.weights;
    let mut grads = w.zeros_like();
    match trace.mode {
        Mode::AppnpLike | Mode::GlobalOnly => {
            let op = trace.operator.expect("APPNP-like traces keep their operator");
            let (dlayers, dstatic) = filter_backward(
                &w.filter,
                trace.h_source,
                &trace.filter,
                &trace.layers,
                trace.static_input.as_ref(),
                dlogits,
                &mut grads.filter,
                true,
            );
            let mut dx0 = propagate_adjoint(params.basis, op, &dlayers.expect("requested"), crate::parallel_kernels())?;
            if let Some(ds) = dstatic {
                dx0 += &ds;
            }
            if let Some(m) = &trace.filter_mask {
                dx0 *= m;
            }
            mlp_backward(&w.mlp, &trace.mlp, &dx0, &mut grads.mlp, false);
        }
        Mode::SgcLike => {
            let mut dz = mlp_backward(&w.mlp, &trace.mlp, dlogits, &mut grads.mlp, true).expect("requested");
            if let Some(m) = &trace.filter_mask {
                dz *= m;
            }
            filter_backward(
                &w.filter,
                trace.h_source,
                &trace.filter,
                &trace.layers,
                trace.static_input.as_ref(),
                &dz,
                &mut grads.filter,
                false,
            );
        }
    }
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    /// Mean negative log-softmax over the index set.
    pub data: f64,
    pub penalty: f64,
}

impl LossValue {
    pub fn total(&self) -> f64 {
        self.data + self.penalty
    }
}

/// Softmax cross-entropy over `index` plus `l2 * sum w^2`. Returns the value and the
/// gradient of the data term with respect to `logits`.
pub fn loss(logits: &Matrix, labels: &[usize], index: &[usize], weights: &Weights, l2: f64) -> Result<(LossValue, Matrix)> {
    if index.is_empty() {
        return input("loss over an empty index set");
    }
    if labels.len() != logits.nrows() {
        return shape(format!("{} labels for {} logit rows", labels.len(), logits.nrows()));
    }
    let scale = 1.0 / index.len() as f64;
    let mut grad = Matrix::zeros(logits.raw_dim());
    let mut total = 0.0;
    for &i in index {
        let row = logits.row(i);
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let lse = m + sum.ln();
        total += lse - row[labels[i]];
        let mut g = grad.row_mut(i);
        for (c, (gc, &z)) in g.iter_mut().zip(row.iter()).enumerate() {
            let p = (z - lse).exp();
            *gc += scale * (p - if c == labels[i] { 1.0 } else { 0.0 });
        }
    }
    Ok((LossValue { data: total * scale, penalty: weights.l2_penalty(l2) }, grad))
}

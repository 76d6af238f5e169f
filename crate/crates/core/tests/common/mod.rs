//! Shared fixtures for integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use nodespec_core::data::Dataset;
use nodespec_core::Graph;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn erdos_renyi(n: usize, p: f64, rng: &mut impl Rng) -> Graph {
    let mut edges = vec![];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(&edges, n).unwrap()
}

/// Uniform random recursive tree.
pub fn random_tree(n: usize, rng: &mut impl Rng) -> Graph {
    let edges: Vec<_> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
    Graph::from_edges(&edges, n).unwrap()
}

pub fn path(n: usize) -> Graph {
    let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
    Graph::from_edges(&edges, n).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// Random graph, Gaussian-ish features and uniform labels.
pub fn toy_dataset(n: usize, f: usize, classes: usize, p: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let graph = erdos_renyi(n, p, &mut r);
    let features = random_matrix(n, f, &mut r);
    let labels = (0..n).map(|_| r.random_range(0..classes)).collect();
    Dataset::new("toy", graph, features, labels, classes).unwrap()
}

/// Classes are linearly separable from features; edges only join nodes of the same class.
pub fn separable_dataset(per_class: usize, classes: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let n = per_class * classes;
    let f = classes + 2;
    let mut labels: Vec<usize> = (0..n).map(|v| v % classes).collect();
    labels.shuffle(&mut r);
    let mut features = random_matrix(n, f, &mut r) * 0.2;
    for (v, &y) in labels.iter().enumerate() {
        features[[v, y]] += 1.0;
    }
    let mut edges = vec![];
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { 0.15 } else { 0.0 };
            if r.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let graph = Graph::from_edges(&edges, n).unwrap();
    Dataset::new("separable", graph, features, labels, classes).unwrap()
}

use nodespec_core::model::{backward, forward, loss, Dropout, ModelParams, Prepared};

fn objective(params: &ModelParams, data: &Dataset, prep: &Prepared, index: &[usize], l2: f64) -> f64 {
    let (logits, _) = forward(params, data, prep, None, Dropout::OFF, &mut rng(0)).unwrap();
    loss(&logits, &data.labels, index, &params.weights, l2).unwrap().0.total()
}

/// Central finite differences (step `1e-5`) against reverse-mode gradients. Returns the
/// relative error `|a - n|_2 / max(|a|_2, |n|_2)` per tensor.
pub fn gradient_check(params: &ModelParams, data: &Dataset, prep: &Prepared, index: &[usize], l2: f64) -> Vec<(String, f64)> {
    const STEP: f64 = 1e-5;
    let (logits, trace) = forward(params, data, prep, None, Dropout::OFF, &mut rng(0)).unwrap();
    let (_, dlogits) = loss(&logits, &data.labels, index, &params.weights, l2).unwrap();
    let mut grads = backward(params, &trace, &dlogits).unwrap();
    params.weights.add_l2_grad(&mut grads, l2);
    let names: Vec<_> = params.weights.tensors().iter().map(|(n, _)| *n).collect();
    let mut out = vec![];
    for (t, name) in names.iter().enumerate() {
        let analytic = grads.tensors()[t].1.clone();
        let mut numeric = analytic.clone();
        for idx in ndarray::indices(analytic.raw_dim()) {
            let mut shifted = params.clone();
            let orig = shifted.weights.tensors()[t].1[idx];
            shifted.weights.tensors_mut()[t].1[idx] = orig + STEP;
            let plus = objective(&shifted, data, prep, index, l2);
            shifted.weights.tensors_mut()[t].1[idx] = orig - STEP;
            let minus = objective(&shifted, data, prep, index, l2);
            numeric[idx] = (plus - minus) / (2.0 * STEP);
        }
        let diff = (&analytic - &numeric).mapv(|v| v * v).sum().sqrt();
        let scale = analytic.mapv(|v| v * v).sum().sqrt().max(numeric.mapv(|v| v * v).sum().sqrt());
        out.push((name.to_string(), if scale == 0.0 { diff } else { diff / scale }));
    }
    out
}

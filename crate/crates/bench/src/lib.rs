//! Synthetic fixtures for the kernel benchmarks.

use nodespec_core::data::Dataset;
use nodespec_core::rng::SplitMix64;
use nodespec_core::{Graph, Matrix};

/// `n` nodes, each linked to `degree` random others (most within its class), dense features
/// with a class-dependent offset.
pub fn synthetic(n: usize, features: usize, classes: usize, degree: usize, seed: u64) -> Dataset {
    let mut rng = SplitMix64::new(seed);
    let labels: Vec<usize> = (0..n).map(|_| rng.below(classes)).collect();
    let mut edges = Vec::with_capacity(n * degree);
    for v in 0..n {
        for _ in 0..degree {
            edges.push((v, rng.below(n)));
        }
    }
    let graph = Graph::from_edges(&edges, n).expect("indices below n");
    let unit = |r: &mut SplitMix64| (r.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let mut x = Matrix::zeros((n, features));
    for (v, mut row) in x.rows_mut().into_iter().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = unit(&mut rng) - 0.5 + if j % classes == labels[v] { 0.5 } else { 0.0 };
        }
    }
    Dataset::new("synthetic", graph, x, labels, classes).expect("consistent fixture")
}

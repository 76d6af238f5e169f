//! Metrics and experiment reports.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split, SplitMode};
use crate::error::{input, Result};
use crate::graph::Graph;
use crate::homophily::{jaccard_neighbor_distance, node_homophily, Scope};
use crate::model::{predict, train, Prepared, TrainConfig};
use crate::poly::CoefficientMatrix;

/// Node count up to which the coefficient-distance report uses every pair.
pub const ALL_PAIRS_LIMIT: usize = 2000;

/// Fraction of `index` where `predictions[i] == labels[i]`. Both slices are indexed by node.
pub fn accuracy(predictions: &[usize], labels: &[usize], index: &[usize]) -> Result<f64> {
    if index.is_empty() {
        return input("accuracy over an empty index set");
    }
    if let Some(&bad) = index.iter().find(|&&i| i >= predictions.len() || i >= labels.len()) {
        return input(format!("node {bad} out of range"));
    }
    Ok(index.iter().filter(|&&i| predictions[i] == labels[i]).count() as f64 / index.len() as f64)
}

/// Mean test accuracy over repeated runs with a normal-approximation 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub accuracies: Vec<f64>,
    pub seeds: Vec<u64>,
    pub mean: f64,
    /// `1.96 * sample std / sqrt(runs)`; zero for a single run.
    pub half_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<TrainConfig>,
}

impl RunSummary {
    pub fn new(accuracies: Vec<f64>, seeds: Vec<u64>, config: Option<TrainConfig>) -> Result<Self> {
        if accuracies.is_empty() || accuracies.len() != seeds.len() {
            return input("need one seed per run and at least one run");
        }
        if let Some(a) = accuracies.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return input(format!("accuracy {a} outside [0, 1]"));
        }
        let (mean, half_width) = mean_and_half_width(&accuracies);
        Ok(Self { accuracies, seeds, mean, half_width, config })
    }
}

fn mean_and_half_width(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

fn bin_of(v: f64, bins: usize) -> usize {
    ((v * bins as f64) as usize).min(bins - 1)
}

fn bin_edges(bins: usize) -> Vec<f64> {
    (0..=bins).map(|b| b as f64 / bins as f64).collect()
}

/// Accuracy per equal-width bin of the 1-hop homophily ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// `None` for empty bins.
    pub accuracy: Vec<Option<f64>>,
}

impl BinReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,count,accuracy\n");
        for b in 0..self.counts.len() {
            let acc = self.accuracy[b].map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{}", self.edges[b], self.edges[b + 1], self.counts[b], acc);
        }
        s
    }
}

/// Bins `test` nodes by `h_{N_1}(v)` over `[0, 1]`; nodes without neighbors are skipped.
pub fn homophily_binned_accuracy(
    predictions: &[usize],
    labels: &[usize],
    graph: &Graph,
    test: &[usize],
    bins: usize,
) -> Result<BinReport> {
    if bins == 0 {
        return input("need at least one bin");
    }
    let mut counts = vec![0usize; bins];
    let mut correct = vec![0usize; bins];
    for &v in test {
        if v >= predictions.len() || v >= labels.len() {
            return input(format!("node {v} out of range"));
        }
        let Some(h) = node_homophily(graph, labels, v, Scope::Hop1) else { continue };
        let b = bin_of(h, bins);
        counts[b] += 1;
        correct[b] += usize::from(predictions[v] == labels[v]);
    }
    let accuracy = counts.iter().zip(&correct).map(|(&c, &k)| (c > 0).then(|| k as f64 / c as f64)).collect();
    Ok(BinReport { edges: bin_edges(bins), counts, accuracy })
}

/// Mean Euclidean distance between coefficient rows of node pairs, per Jaccard-distance bin
/// of their 1-hop neighborhoods, split into same-label and different-label pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDistanceReport {
    pub edges: Vec<f64>,
    pub same_count: Vec<usize>,
    pub same_mean: Vec<Option<f64>>,
    pub different_count: Vec<usize>,
    pub different_mean: Vec<Option<f64>>,
    /// Whether every pair was used.
    pub exhaustive: bool,
}

impl CoefficientDistanceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("jaccard_lo,jaccard_hi,same_count,same_mean,different_count,different_mean\n");
        let opt = |v: Option<f64>| v.map(|a| a.to_string()).unwrap_or_default();
        for b in 0..self.same_count.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                self.edges[b],
                self.edges[b + 1],
                self.same_count[b],
                opt(self.same_mean[b]),
                self.different_count[b],
                opt(self.different_mean[b])
            );
        }
        s
    }
}

/// All pairs when `n <= ALL_PAIRS_LIMIT`, otherwise `pair_sample` uniform pairs of distinct nodes.
pub fn coefficient_distance_report(
    psi: &CoefficientMatrix,
    graph: &Graph,
    labels: &[usize],
    pair_sample: usize,
    jaccard_bins: usize,
    seed: u64,
) -> Result<CoefficientDistanceReport> {
    let n = graph.node_count();
    if pair_sample == 0 || jaccard_bins == 0 {
        return input("pair sample and bin count must be positive");
    }
    if psi.psi.nrows() != n || labels.len() != n {
        return input(format!("{} coefficient rows and {} labels for {n} nodes", psi.psi.nrows(), labels.len()));
    }
    let mut sums = [vec![0.0; jaccard_bins], vec![0.0; jaccard_bins]];
    let mut counts = [vec![0usize; jaccard_bins], vec![0usize; jaccard_bins]];
    let mut add = |i: usize, j: usize| {
        let b = bin_of(jaccard_neighbor_distance(graph, i, j), jaccard_bins);
        let d = (&psi.psi.row(i) - &psi.psi.row(j)).mapv(|v| v * v).sum().sqrt();
        let group = usize::from(labels[i] != labels[j]);
        sums[group][b] += d;
        counts[group][b] += 1;
    };
    let exhaustive = n <= ALL_PAIRS_LIMIT;
    if exhaustive {
        for i in 0..n {
            for j in i + 1..n {
                add(i, j);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..pair_sample {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            add(i, j);
        }
    }
    let means = |g: usize| -> Vec<Option<f64>> {
        sums[g].iter().zip(&counts[g]).map(|(&s, &c)| (c > 0).then(|| s / c as f64)).collect()
    };
    Ok(CoefficientDistanceReport {
        edges: bin_edges(jaccard_bins),
        same_mean: means(0),
        different_mean: means(1),
        same_count: counts[0].clone(),
        different_count: counts[1].clone(),
        exhaustive,
    })
}

/// `runs` independent trainings with seeds `base_seed + r`, each on its own split drawn with
/// the same seed. Test accuracy is measured on the full graph with the best-validation
/// parameters.
pub fn run_experiment(dataset: &Dataset, config: &TrainConfig, split_mode: SplitMode, runs: usize, base_seed: u64) -> Result<RunSummary> {
    if runs == 0 {
        return input("need at least one run");
    }
    let mut accuracies = Vec::with_capacity(runs);
    let mut seeds = Vec::with_capacity(runs);
    for r in 0..runs as u64 {
        let seed = base_seed + r;
        let split = Split::make(dataset.node_count(), split_mode, seed)?;
        accuracies.push(run_once(dataset, &split, &TrainConfig { seed, ..config.clone() })?);
        seeds.push(seed);
    }
    RunSummary::new(accuracies, seeds, Some(config.clone()))
}

/// Trains on `split` and returns test accuracy on the full graph.
pub fn run_once(dataset: &Dataset, split: &Split, config: &TrainConfig) -> Result<f64> {
    let outcome = train(dataset, split, config)?;
    let prepared = Prepared::for_params(dataset, &outcome.params, outcome.lambda_max)?;
    let pred = predict(&outcome.params, dataset, &prepared, &split.test)?;
    let correct = pred.labels.iter().zip(&split.test).filter(|(p, &i)| **p == dataset.labels[i]).count();
    Ok(correct as f64 / split.test.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn accuracy_cases() {
        let labels = [0, 1, 2, 1];
        assert_eq!(accuracy(&[0, 1, 2, 1], &labels, &[0, 1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0, 0, 0], &labels, &[0, 1, 2, 3]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 2, 0], &labels, &[0, 1, 2, 3]).unwrap(), 0.75);
        assert!(accuracy(&[0], &[0], &[]).is_err());
    }

    #[test]
    fn summary_round_trips_and_recomputes() {
        let accs = vec![0.8, 0.82, 0.79, 0.85, 0.81];
        let s = RunSummary::new(accs.clone(), (0..5).collect(), None).unwrap();
        let mean = accs.iter().sum::<f64>() / 5.0;
        let sd = (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((s.mean - mean).abs() < 1e-15);
        assert!((s.half_width - 1.96 * sd / 5f64.sqrt()).abs() < 1e-15);
        let back: RunSummary = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        let again = RunSummary::new(back.accuracies.clone(), back.seeds.clone(), None).unwrap();
        assert!((again.mean - s.mean).abs() <= 1e-12 && (again.half_width - s.half_width).abs() <= 1e-12);
        assert_eq!(RunSummary::new(vec![0.5], vec![1], None).unwrap().half_width, 0.0);
        assert!(RunSummary::new(vec![1.5], vec![1], None).is_err());
    }

    #[test]
    fn all_homophilous_correct_fills_last_bin() {
        let g = Graph::from_edges(&[(0, 1), (1, 2), (3, 4)], 6).unwrap();
        let labels = [0, 0, 0, 1, 1, 1];
        let r = homophily_binned_accuracy(&labels, &labels, &g, &[0, 1, 2, 3, 4, 5], 5).unwrap();
        assert_eq!(r.counts, vec![0, 0, 0, 0, 5]);
        assert_eq!(r.accuracy, vec![None, None, None, None, Some(1.0)]);
        assert_eq!(r.counts.iter().sum::<usize>(), 5);
    }

    #[test]
    fn random_predictions_are_near_chance_in_every_bin() {
        let n = 4000;
        let classes = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Each node links to 4 random nodes, so h spreads across [0, 1].
        let mut edges = vec![];
        for v in 0..n {
            for _ in 0..4 {
                let u = rng.random_range(0..n);
                if u != v {
                    edges.push((v, u));
                }
            }
        }
        let g = Graph::from_edges(&edges, n).unwrap();
        let labels: Vec<usize> = (0..n).map(|v| if v % 2 == 0 { 0 } else { rng.random_range(0..classes) }).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let test: Vec<usize> = (0..n).collect();
        let r = homophily_binned_accuracy(&pred, &labels, &g, &test, 5).unwrap();
        for (c, a) in r.counts.iter().zip(&r.accuracy) {
            if *c < 30 {
                continue;
            }
            let p = 1.0 / classes as f64;
            let sigma = (p * (1.0 - p) / *c as f64).sqrt();
            assert!((a.unwrap() - p).abs() <= 3.0 * sigma, "{a:?} over {c}");
        }
    }

    #[test]
    fn coefficient_report_cases() {
        let g = Graph::from_edges(&[(0, 2), (1, 2)], 3).unwrap();
        // Nodes 0 and 1 share the neighborhood {2}.
        let psi = CoefficientMatrix { psi: array![[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]] };
        let r = coefficient_distance_report(&psi, &g, &[0, 0, 1], 10, 5, 0).unwrap();
        assert_eq!(r.same_count[0], 1);
        assert_eq!(r.same_mean[0], Some(1.0));

        let flat = CoefficientMatrix::constant(3, &[0.3, 0.2]);
        let r = coefficient_distance_report(&flat, &g, &[0, 0, 1], 10, 5, 0).unwrap();
        assert!(r.same_mean.iter().chain(&r.different_mean).flatten().all(|&d| d == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 40;
        let labels: Vec<usize> = (0..n).map(|v| v % 2).collect();
        let edges: Vec<_> = (0..80).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).filter(|(a, b)| a != b).collect();
        let g = Graph::from_edges(&edges, n).unwrap();
        let psi = CoefficientMatrix {
            psi: ndarray::Array2::from_shape_fn((n, 3), |(i, k)| labels[i] as f64 * 2.0 + 0.1 * rng.random::<f64>() + k as f64),
        };
        let r = coefficient_distance_report(&psi, &g, &labels, 10, 4, 0).unwrap();
        for b in 0..4 {
            if let (Some(s), Some(d)) = (r.same_mean[b], r.different_mean[b]) {
                assert!(s < d);
            }
        }
        assert!(coefficient_distance_report(&psi, &g, &labels, 0, 4, 0).is_err());
    }
}

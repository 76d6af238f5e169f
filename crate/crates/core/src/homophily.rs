//! Node homophily, neighborhood label entropy, histograms, and the two-step label chain.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::graph::Graph;

/// Added to every class fraction inside the entropy logarithm.
pub const ENTROPY_EPS: f64 = 1e-10;

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Nodes at distance exactly 1.
    Hop1,
    /// Nodes at distance 1 or 2 (the center is excluded).
    Within2,
}

fn neighborhood(g: &Graph, v: usize, scope: Scope) -> BTreeSet<usize> {
    match scope {
        Scope::Hop1 => g.neighbors(v).iter().copied().collect(),
        Scope::Within2 => g.hop_sets(v, 2).within(2),
    }
}

/// Fraction of `v`'s scoped neighbors sharing its label; `None` for an empty neighborhood.
pub fn node_homophily(g: &Graph, labels: &[usize], v: usize, scope: Scope) -> Option<f64> {
    let nb = neighborhood(g, v, scope);
    if nb.is_empty() {
        return None;
    }
    let same = nb.iter().filter(|&&m| labels[m] == labels[v]).count();
    Some(same as f64 / nb.len() as f64)
}

/// Mean 1-hop homophily over nodes that have at least one neighbor.
pub fn graph_homophily(g: &Graph, labels: &[usize]) -> Result<f64> {
    let vals: Vec<f64> = (0..g.node_count())
        .filter_map(|v| node_homophily(g, labels, v, Scope::Hop1))
        .collect();
    if vals.is_empty() {
        return input("graph homophily is undefined when every node is isolated");
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// `-sum_y (p_y + eps) ln(p_y + eps)` over the class fractions of a count vector.
pub fn entropy_of_counts(counts: &[usize]) -> Option<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return None;
    }
    Some(
        -counts
            .iter()
            .map(|&c| {
                let p = c as f64 / total as f64 + ENTROPY_EPS;
                p * p.ln()
            })
            .sum::<f64>(),
    )
}

/// Label entropy of `v`'s scoped neighborhood; `None` for an empty neighborhood.
pub fn label_entropy(g: &Graph, labels: &[usize], v: usize, scope: Scope, class_count: usize) -> Option<f64> {
    let mut counts = vec![0usize; class_count];
    for m in neighborhood(g, v, scope) {
        counts[labels[m]] += 1;
    }
    entropy_of_counts(&counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width histogram over `[lo, hi]`; the last bin is closed on the right and values
/// outside the range are dropped.
pub fn histogram(values: &[f64], bins: usize, range: (f64, f64)) -> Result<Histogram> {
    if bins == 0 {
        return input("histogram needs at least one bin");
    }
    let (lo, hi) = range;
    if !(hi > lo) {
        return input(format!("empty histogram range [{lo}, {hi}]"));
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|b| lo + width * b as f64).collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        if !(lo..=hi).contains(&v) {
            continue;
        }
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomophilyReport {
    pub per_node_h1: Vec<Option<f64>>,
    pub per_node_h_within2: Vec<Option<f64>>,
    pub graph_ratio: f64,
    pub hist_h1: Histogram,
    pub hist_h_within2: Histogram,
}

pub fn homophily_report(g: &Graph, labels: &[usize], bins: usize) -> Result<HomophilyReport> {
    let n = g.node_count();
    let h1: Vec<_> = (0..n).map(|v| node_homophily(g, labels, v, Scope::Hop1)).collect();
    let h2: Vec<_> = (0..n).map(|v| node_homophily(g, labels, v, Scope::Within2)).collect();
    let flat = |v: &[Option<f64>]| v.iter().flatten().copied().collect::<Vec<_>>();
    Ok(HomophilyReport {
        graph_ratio: graph_homophily(g, labels)?,
        hist_h1: histogram(&flat(&h1), bins, (0.0, 1.0))?,
        hist_h_within2: histogram(&flat(&h2), bins, (0.0, 1.0))?,
        per_node_h1: h1,
        per_node_h_within2: h2,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyReport {
    pub per_node_s1: Vec<Option<f64>>,
    pub per_node_s_within2: Vec<Option<f64>>,
    pub hist_s1: Histogram,
    pub hist_s_within2: Histogram,
}

pub fn entropy_report(g: &Graph, labels: &[usize], class_count: usize, bins: usize) -> Result<EntropyReport> {
    let n = g.node_count();
    let s1: Vec<_> = (0..n).map(|v| label_entropy(g, labels, v, Scope::Hop1, class_count)).collect();
    let s2: Vec<_> = (0..n).map(|v| label_entropy(g, labels, v, Scope::Within2, class_count)).collect();
    let flat = |v: &[Option<f64>]| v.iter().flatten().copied().collect::<Vec<_>>();
    // Epsilon terms can push the entropy a hair outside [0, ln C].
    let range = (-1e-6, (class_count as f64).ln() + 1e-6);
    Ok(EntropyReport {
        hist_s1: histogram(&flat(&s1), bins, range)?,
        hist_s_within2: histogram(&flat(&s2), bins, range)?,
        per_node_s1: s1,
        per_node_s_within2: s2,
    })
}

/// `1 - |N(i) ∩ N(j)| / |N(i) ∪ N(j)|` over 1-hop neighborhoods; 0 when both are empty.
pub fn jaccard_neighbor_distance(g: &Graph, i: usize, j: usize) -> f64 {
    let (a, b) = (g.neighbors(i), g.neighbors(j));
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    // Both rows are sorted: merge-count the intersection.
    let (mut p, mut q, mut inter) = (0, 0, 0usize);
    while p < a.len() && q < b.len() {
        match a[p].cmp(&b[q]) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                p += 1;
                q += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    1.0 - inter as f64 / union as f64
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    fn from_samples(sum: f64, sum_sq: f64, count: usize) -> Self {
        let n = count as f64;
        let mean = sum / n;
        let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
        Self { mean, std_error: (var / n).sqrt() }
    }

    /// Whether `value` lies within `k` standard errors of the estimate.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error + 1e-12
    }
}

/// Two-step label chain `y_v -> y_m -> y_o` with `P(same) = alpha` and the remaining mass
/// spread uniformly over the other `|Y| - 1` classes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropositionCheck {
    pub alpha: f64,
    pub class_count: usize,
    /// `P(y_o = y_v) = alpha^2 + tau`, `tau = (1 - alpha)^2 / (|Y| - 1)`.
    pub p_two_step_same: f64,
    pub tau: f64,
    /// `P(y_o = y_v) - P(y_o != y_v) = (2 alpha (alpha |Y| - 2) + 3 - |Y|) / (|Y| - 1)`.
    pub epsilon_prop1: f64,
    /// Upper bound `2 alpha (alpha |Y| - 2) / (|Y| - 1)`, valid for `|Y| >= 3`.
    pub epsilon_prop1_bound: f64,
    /// `P(y_o = y_v) - P(y_m = y_v) = (alpha - 1)(alpha |Y| - 1) / (|Y| - 1)`.
    pub epsilon_prop2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc: Option<MonteCarlo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
    pub epsilon_prop1: Estimate,
    pub epsilon_prop2: Estimate,
}

fn check_domain(alpha: f64, class_count: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return input(format!("alpha must lie in [0, 1], got {alpha}"));
    }
    if class_count < 2 {
        return input(format!("need at least 2 classes, got {class_count}"));
    }
    Ok(())
}

pub fn proposition_closed_forms(alpha: f64, class_count: usize) -> Result<PropositionCheck> {
    check_domain(alpha, class_count)?;
    let y = class_count as f64;
    let tau = (1.0 - alpha).powi(2) / (y - 1.0);
    Ok(PropositionCheck {
        alpha,
        class_count,
        p_two_step_same: alpha * alpha + tau,
        tau,
        epsilon_prop1: (2.0 * alpha * (alpha * y - 2.0) + (3.0 - y)) / (y - 1.0),
        epsilon_prop1_bound: 2.0 * alpha * (alpha * y - 2.0) / (y - 1.0),
        epsilon_prop2: (alpha - 1.0) * (alpha * y - 1.0) / (y - 1.0),
        mc: None,
    })
}

fn step(current: usize, alpha: f64, class_count: usize, rng: &mut ChaCha8Rng) -> usize {
    if rng.random::<f64>() < alpha {
        current
    } else {
        // Uniform over the other classes.
        let r = rng.random_range(0..class_count - 1);
        if r >= current {
            r + 1
        } else {
            r
        }
    }
}

/// Closed forms plus a Monte-Carlo simulation of the chain.
pub fn proposition_monte_carlo(alpha: f64, class_count: usize, samples: usize, seed: u64) -> Result<PropositionCheck> {
    let mut check = proposition_closed_forms(alpha, class_count)?;
    if samples < 2 {
        return input("need at least 2 samples");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s1, mut q1, mut s2, mut q2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..samples {
        let yv = rng.random_range(0..class_count);
        let ym = step(yv, alpha, class_count, &mut rng);
        let yo = step(ym, alpha, class_count, &mut rng);
        let d1 = if yo == yv { 1.0 } else { -1.0 };
        let d2 = (yo == yv) as u8 as f64 - (ym == yv) as u8 as f64;
        s1 += d1;
        q1 += d1 * d1;
        s2 += d2;
        q2 += d2 * d2;
    }
    check.mc = Some(MonteCarlo {
        samples,
        seed,
        epsilon_prop1: Estimate::from_samples(s1, q1, samples),
        epsilon_prop2: Estimate::from_samples(s2, q2, samples),
    });
    Ok(check)
}

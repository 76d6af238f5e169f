use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{HSource, Mode, TrainConfig};
use crate::error::{input, Result};
use crate::poly::Basis;
use crate::Matrix;

/// Decay rate of the initial base-filter columns `alpha (1 - alpha)^k`.
pub const GAMMA_INIT_ALPHA: f64 = 0.1;

/// Two-layer perceptron `relu(X W1 + b1) W2 + b2`. Biases are `1 x width` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Filter {
    /// `Psi = sigmoid(X W) Gamma^T`; `w` is `c_in x d`, `gamma` is `(K+1) x d`.
    Factorized { w: Matrix, gamma: Matrix },
    /// One coefficient per order shared by all nodes, stored as `(K+1) x 1`.
    Global { gamma: Matrix },
}

/// All trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub mlp: Mlp,
    pub filter: Filter,
}

impl Weights {
    /// Tensors in checkpoint order with their names.
    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let mut out = vec![
            ("mlp.w1", &self.mlp.w1),
            ("mlp.b1", &self.mlp.b1),
            ("mlp.w2", &self.mlp.w2),
            ("mlp.b2", &self.mlp.b2),
        ];
        match &self.filter {
            Filter::Factorized { w, gamma } => {
                out.push(("filter.w", w));
                out.push(("filter.gamma", gamma));
            }
            Filter::Global { gamma } => out.push(("filter.gamma", gamma)),
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut out = vec![
            ("mlp.w1", &mut self.mlp.w1),
            ("mlp.b1", &mut self.mlp.b1),
            ("mlp.w2", &mut self.mlp.w2),
            ("mlp.b2", &mut self.mlp.b2),
        ];
        match &mut self.filter {
            Filter::Factorized { w, gamma } => {
                out.push(("filter.w", w));
                out.push(("filter.gamma", gamma));
            }
            Filter::Global { gamma } => out.push(("filter.gamma", gamma)),
        }
        out
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.raw_dim());
        Weights {
            mlp: Mlp { w1: z(&self.mlp.w1), b1: z(&self.mlp.b1), w2: z(&self.mlp.w2), b2: z(&self.mlp.b2) },
            filter: match &self.filter {
                Filter::Factorized { w, gamma } => Filter::Factorized { w: z(w), gamma: z(gamma) },
                Filter::Global { gamma } => Filter::Global { gamma: z(gamma) },
            },
        }
    }

    /// Whether a tensor belongs to the MLP learning-rate group.
    pub fn is_mlp(name: &str) -> bool {
        name.starts_with("mlp.")
    }

    /// Biases are excluded from weight decay.
    pub fn is_decayed(name: &str) -> bool {
        !matches!(name, "mlp.b1" | "mlp.b2")
    }

    /// `l2 * sum of squared entries` over every decayed tensor.
    pub fn l2_penalty(&self, l2: f64) -> f64 {
        if l2 == 0.0 {
            return 0.0;
        }
        l2 * self
            .tensors()
            .into_iter()
            .filter(|(n, _)| Self::is_decayed(n))
            .map(|(_, m)| m.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
    }

    /// Adds the gradient `2 * l2 * w` of [`Weights::l2_penalty`] into `grads`.
    pub fn add_l2_grad(&self, grads: &mut Weights, l2: f64) {
        if l2 == 0.0 {
            return;
        }
        for ((name, w), (_, g)) in self.tensors().into_iter().zip(grads.tensors_mut()) {
            if Self::is_decayed(name) {
                g.scaled_add(2.0 * l2, w);
            }
        }
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.iter().all(|v| v.is_finite()))
    }
}

/// Full trainable state plus the architecture it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub mode: Mode,
    pub basis: Basis,
    pub h_source: HSource,
    pub order: usize,
    pub weights: Weights,
    /// Bumped on every optimizer step; traces from older generations are rejected.
    pub(crate) generation: u64,
}

fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Matrix {
    Matrix::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

impl ModelParams {
    /// Fan-in scaled uniform init `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for every matrix and
    /// bias; base filters start as decayed PageRank-style columns.
    pub fn init(config: &TrainConfig, features: usize, classes: usize, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        if features == 0 || classes < 2 {
            return input("need at least one feature and two classes");
        }
        let b1 = 1.0 / (features as f64).sqrt();
        let b2 = 1.0 / (config.hidden as f64).sqrt();
        let mlp = Mlp {
            w1: uniform(features, config.hidden, b1, rng),
            b1: uniform(1, config.hidden, b1, rng),
            w2: uniform(config.hidden, classes, b2, rng),
            b2: uniform(1, classes, b2, rng),
        };
        let k1 = config.order + 1;
        let decay = Matrix::from_shape_fn((k1, 1), |(k, _)| GAMMA_INIT_ALPHA * (1.0 - GAMMA_INIT_ALPHA).powi(k as i32));
        let filter = match config.mode {
            Mode::GlobalOnly => Filter::Global { gamma: decay },
            Mode::AppnpLike | Mode::SgcLike => {
                let c_in = if config.mode == Mode::AppnpLike { classes } else { features };
                let w = uniform(c_in, config.rank, 1.0 / (c_in as f64).sqrt(), rng);
                let gamma = Matrix::from_shape_fn((k1, config.rank), |(k, _)| decay[[k, 0]]);
                Filter::Factorized { w, gamma }
            }
        };
        Ok(Self {
            mode: config.mode,
            basis: config.basis,
            h_source: config.h_source,
            order: config.order,
            weights: Weights { mlp, filter },
            generation: 0,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.mlp.w1.nrows()
    }

    pub fn class_count(&self) -> usize {
        self.weights.mlp.w2.ncols()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Marks the weights as modified so stale traces are detected.
    pub fn touch(&mut self) {
        self.generation += 1;
    }

    pub fn counts(&self) -> ParamCounts {
        let mlp = self
            .weights
            .tensors()
            .iter()
            .filter(|(n, _)| Weights::is_mlp(n))
            .map(|(_, m)| m.len())
            .sum();
        ParamCounts { filter: self.weights.scalar_count() - mlp, mlp }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub filter: usize,
    pub mlp: usize,
}

impl ParamCounts {
    pub fn total(&self) -> usize {
        self.filter + self.mlp
    }
}

/// Exact trainable-parameter counts. The filtering layer has `c_in d + (K+1) d` parameters
/// (`K+1` in global mode) and never depends on the node count.
pub fn parameter_count(config: &TrainConfig, features: usize, classes: usize) -> Result<ParamCounts> {
    if config.rank == 0 && config.mode != Mode::GlobalOnly {
        return input("rank d must be at least 1");
    }
    let k1 = config.order + 1;
    let filter = match config.mode {
        Mode::GlobalOnly => k1,
        Mode::AppnpLike => classes * config.rank + k1 * config.rank,
        Mode::SgcLike => features * config.rank + k1 * config.rank,
    };
    let h = config.hidden;
    Ok(ParamCounts { filter, mlp: features * h + h + h * classes + classes })
}

//! The node-oriented filtering model.
//!
//! Two pipelines share one filtering layer:
//!
//! - [`Mode::AppnpLike`]: `X0 = MLP(X)`, then `X_k = p_k(op) X0` and
//!   `Z_i = sum_k eta_{i,k} X_k[i]` with `eta_{i,k} = sigmoid(X_k[i] W) . Gamma[k]`.
//! - [`Mode::SgcLike`]: the stack `p_k(op) X` is precomputed once from raw features,
//!   combined the same way, and the MLP runs last.
//!
//! [`Mode::GlobalOnly`] is the APPNP-like pipeline with a single learned coefficient
//! vector shared by every node.

mod adam;
mod checkpoint;
mod forward;
mod params;
mod train;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use forward::{
    backward, dropout, forward_appnp_like, forward_sgc_like, loss, sigmoid, Dropout, ForwardTrace, LossValue,
};
pub use params::{parameter_count, Filter, Mlp, ModelParams, ParamCounts, Weights, GAMMA_INIT_ALPHA};
pub use train::{
    argmax_lowest, forward, node_coefficients, predict, train, EpochRecord, History, Prediction, Prepared,
    TrainOutcome,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::poly::Basis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    AppnpLike,
    SgcLike,
    GlobalOnly,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::AppnpLike => "appnp",
            Mode::SgcLike => "sgc",
            Mode::GlobalOnly => "global",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "appnp" | "appnp_like" => Ok(Mode::AppnpLike),
            "sgc" | "sgc_like" => Ok(Mode::SgcLike),
            "global" | "global_only" => Ok(Mode::GlobalOnly),
            other => input(format!("unknown mode {other:?}")),
        }
    }
}

/// Where the node-dependent mixing weights `H = sigmoid(X W)` come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HSource {
    /// A separate `H_k = sigmoid(X_k W)` for every propagation order.
    PerOrder,
    /// One `H` from the unpropagated input (`X0` in APPNP-like mode, raw `X` in SGC-like mode).
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub basis: Basis,
    pub h_source: HSource,
    /// Polynomial order `K`.
    pub order: usize,
    /// Rank `d` of the coefficient factorization.
    pub rank: usize,
    /// MLP hidden width `f_h`.
    pub hidden: usize,
    pub lr_l: f64,
    pub lr_p: f64,
    pub dp_l: f64,
    pub dp_p: f64,
    pub l2: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Use a power-iteration estimate of the largest Laplacian eigenvalue instead of 2.
    pub estimate_lambda_max: bool,
    /// Mini-batch size for SGC-like training; full batch when `None`.
    pub batch_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::AppnpLike,
            basis: Basis::Chebyshev,
            h_source: HSource::PerOrder,
            order: 10,
            rank: 1,
            hidden: 64,
            lr_l: 0.01,
            lr_p: 0.01,
            dp_l: 0.5,
            dp_p: 0.5,
            l2: 5e-4,
            epochs: 1000,
            patience: 200,
            seed: 0,
            estimate_lambda_max: false,
            batch_size: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lr_l", self.lr_l), ("lr_p", self.lr_p), ("dp_l", self.dp_l), ("dp_p", self.dp_p)] {
            if !(0.0..1.0).contains(&v) {
                return input(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if self.l2 < 0.0 || !self.l2.is_finite() {
            return input("l2 must be a non-negative number");
        }
        if self.order < 1 {
            return input("order K must be at least 1");
        }
        if self.rank < 1 {
            return input("rank d must be at least 1");
        }
        if self.hidden < 1 {
            return input("hidden width must be at least 1");
        }
        if self.batch_size == Some(0) {
            return input("batch size must be positive");
        }
        Ok(())
    }
}

//! Node-oriented spectral filtering for graph neural networks.
//!
//! The crate is organized bottom-up:
//!
//! - [`graph`] and [`sparse`]: CSR graphs, normalized and scaled Laplacians, sparse products.
//! - [`data`]: text dataset formats and reproducible train/validation/test splits.
//! - [`homophily`]: node homophily, label entropy, histograms, and the two-step
//!   label-chain propositions (closed form and Monte Carlo).
//! - [`oracle`]: dense eigendecomposition ground truth for small graphs.
//! - [`poly`]: monomial, Chebyshev and Bernstein propagation stacks and per-node
//!   coefficient combination.
//! - [`model`]: the node-oriented filtering model, its gradients, Adam, and training loops.
//! - [`eval`]: accuracy summaries and the analysis reports built on trained models.

pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod homophily;
pub mod model;
pub mod oracle;
pub mod poly;
pub mod rng;
pub mod sparse;

pub use data::{Dataset, Split, SplitMode};
pub use error::{Error, Result};
pub use graph::{Graph, HopSets};
pub use model::{Mode, ModelParams, TrainConfig};
pub use poly::{Basis, CoefficientMatrix, PropagationStack};
pub use sparse::{OperatorKind, SparseOperator};

/// Dense row-major matrix used across the crate.
pub type Matrix = ndarray::Array2<f64>;

/// Returns true when `NODESPEC_THREADS` asks for parallel kernels (any value other than 1).
pub fn parallel_kernels() -> bool {
    match std::env::var("NODESPEC_THREADS") {
        Ok(v) => v.trim().parse::<usize>().map(|n| n != 1).unwrap_or(false),
        Err(_) => false,
    }
}

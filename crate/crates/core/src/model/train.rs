//! Training loop, prediction and coefficient extraction.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamState};
use super::forward::{backward, compress_features, forward_appnp_cached, forward_sgc_like, loss, Dropout, ForwardTrace, SparseRows};
use super::params::ModelParams;
use super::{Mode, TrainConfig};
use crate::data::{observed_graph, Dataset, Split};
use crate::error::{input, Error, Result};
use crate::poly::{propagate, Basis, CoefficientMatrix, PropagationStack};
use crate::sparse::{estimate_lambda_max, SparseOperator};
use crate::Matrix;

const LAMBDA_TOL: f64 = 1e-9;
const LAMBDA_ITERS: usize = 10_000;

/// Dataset-dependent state shared by all epochs: the propagation operator and, in SGC-like
/// mode, the precomputed stack of raw features. Only valid for the dataset it was built from.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub operator: SparseOperator,
    pub lambda_max: f64,
    pub stack: Option<PropagationStack>,
    /// Raw features in compressed form when mostly zero (APPNP-like modes).
    compressed: Option<SparseRows>,
}

impl Prepared {
    /// `lambda_max` of `None` means 2, or the power-iteration estimate when `estimate` is set.
    pub fn new(dataset: &Dataset, mode: Mode, basis: Basis, order: usize, lambda_max: Option<f64>, estimate: bool) -> Result<Self> {
        let lambda_max = match lambda_max {
            Some(v) => v,
            None if estimate && basis == Basis::Chebyshev => {
                let l = SparseOperator::normalized_laplacian(&dataset.graph);
                let est = estimate_lambda_max(&l, LAMBDA_TOL, LAMBDA_ITERS).value;
                if est > 0.0 {
                    est
                } else {
                    2.0
                }
            }
            None => 2.0,
        };
        let operator = basis.operator(&dataset.graph, lambda_max)?;
        let (stack, compressed) = match mode {
            Mode::SgcLike => (Some(propagate(basis, &operator, dataset.features.view(), order)?), None),
            Mode::AppnpLike | Mode::GlobalOnly => (None, compress_features(&dataset.features)),
        };
        Ok(Self { operator, lambda_max, stack, compressed })
    }

    pub fn for_config(dataset: &Dataset, config: &TrainConfig) -> Result<Self> {
        Self::new(dataset, config.mode, config.basis, config.order, None, config.estimate_lambda_max)
    }

    /// Operator for already-trained parameters (e.g. the full graph at inductive test time).
    pub fn for_params(dataset: &Dataset, params: &ModelParams, lambda_max: f64) -> Result<Self> {
        Self::new(dataset, params.mode, params.basis, params.order, Some(lambda_max), false)
    }
}

/// Dispatches to the pipeline matching `params.mode`. `rows` restricts SGC-like passes to a
/// node subset; APPNP-like passes always cover every node.
pub fn forward<'a>(
    params: &ModelParams,
    dataset: &Dataset,
    prepared: &'a Prepared,
    rows: Option<&[usize]>,
    dropout_rates: Dropout,
    rng: &mut ChaCha8Rng,
) -> Result<(Matrix, ForwardTrace<'a>)> {
    match params.mode {
        Mode::SgcLike => {
            let stack = prepared.stack.as_ref().ok_or_else(|| Error::Input("SGC-like model needs a precomputed stack".into()))?;
            forward_sgc_like(params, dataset, stack, rows, dropout_rates, rng)
        }
        Mode::AppnpLike | Mode::GlobalOnly => {
            if rows.is_some() {
                return input("row subsets are only supported in SGC-like mode");
            }
            if prepared.operator.dim() != dataset.node_count() {
                return input("prepared operator does not match the dataset");
            }
            forward_appnp_cached(params, dataset, prepared.compressed.as_ref(), &prepared.operator, dropout_rates, rng)
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

fn argmax_rows(logits: &Matrix) -> Vec<usize> {
    logits.rows().into_iter().map(|r| argmax_lowest(&r.to_vec())).collect()
}

fn accuracy_on(pred: &[usize], labels: &[usize], index: &[usize]) -> f64 {
    if index.is_empty() {
        return f64::NAN;
    }
    index.iter().filter(|&&i| pred[i] == labels[i]).count() as f64 / index.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Nodes in the order they were requested.
    pub index: Vec<usize>,
    pub labels: Vec<usize>,
    /// One row per requested node.
    pub logits: Matrix,
}

/// Deterministic (dropout-off) prediction for `index`.
pub fn predict(params: &ModelParams, dataset: &Dataset, prepared: &Prepared, index: &[usize]) -> Result<Prediction> {
    if let Some(&bad) = index.iter().find(|&&i| i >= dataset.node_count()) {
        return input(format!("node {bad} out of range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (logits, _) = forward(params, dataset, prepared, None, Dropout::OFF, &mut rng)?;
    let logits = logits.select(ndarray::Axis(0), index);
    Ok(Prediction { index: index.to_vec(), labels: argmax_rows(&logits), logits })
}

/// Per-node coefficients `eta_{i,k}` of a dropout-off forward pass.
pub fn node_coefficients(params: &ModelParams, dataset: &Dataset, prepared: &Prepared) -> Result<CoefficientMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (_, trace) = forward(params, dataset, prepared, None, Dropout::OFF, &mut rng)?;
    Ok(CoefficientMatrix { psi: trace.coefficients() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_accuracy,val_loss,val_accuracy,test_accuracy";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.test_accuracy
            );
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub params: ModelParams,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    /// Operator scale used during training.
    pub lambda_max: f64,
    pub history: History,
}

/// Full-batch Adam training with early stopping on validation accuracy, ties broken by lower
/// validation loss. In inductive splits
/// the edges touching unobserved test nodes are removed for training.
pub fn train(dataset: &Dataset, split: &Split, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    split.validate(Some(dataset.node_count()))?;
    if split.train.is_empty() {
        return input("split has no training nodes");
    }
    let observed;
    let data = if split.unobserved_test.is_some() {
        observed = dataset.with_graph(observed_graph(&dataset.graph, split)?)?;
        &observed
    } else {
        dataset
    };
    let prepared = Prepared::for_config(data, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(config, data.feature_dim(), data.class_count, &mut rng)?;
    let mut adam = AdamState::new(&params.weights);
    let rates = Dropout { mlp: config.dp_l, filter: config.dp_p };
    let batch_size = match (config.mode, config.batch_size) {
        (Mode::SgcLike, Some(b)) if b < split.train.len() => Some(b),
        _ => None,
    };
    let val_index = if split.validation.is_empty() { &split.train } else { &split.validation };

    let mut history = History::default();
    let mut best: Option<(ModelParams, usize, f64, f64)> = None;
    let mut bad_epochs = 0;
    for epoch in 1..=config.epochs {
        let mut order = split.train.clone();
        let batches: Vec<&[usize]> = match batch_size {
            Some(b) => {
                order.shuffle(&mut rng);
                order.chunks(b).collect()
            }
            None => vec![&order[..]],
        };
        let mut train_loss = 0.0;
        let diverged = |e: Error| match e {
            Error::Numerical(message) => Error::Diverged { epoch, message },
            other => other,
        };
        for batch in batches {
            let (logits, trace, labels, index): (Matrix, ForwardTrace<'_>, Vec<usize>, Vec<usize>) = if batch_size.is_some() {
                let (logits, trace) = forward(&params, data, &prepared, Some(batch), rates, &mut rng).map_err(diverged)?;
                let labels = batch.iter().map(|&i| data.labels[i]).collect();
                (logits, trace, labels, (0..batch.len()).collect())
            } else {
                let (logits, trace) = forward(&params, data, &prepared, None, rates, &mut rng).map_err(diverged)?;
                (logits, trace, data.labels.clone(), batch.to_vec())
            };
            let (value, dlogits) = loss(&logits, &labels, &index, &params.weights, config.l2)?;
            if !value.total().is_finite() {
                return Err(Error::Diverged { epoch, message: format!("training loss is {}", value.total()) });
            }
            train_loss += value.total() * batch.len() as f64 / split.train.len() as f64;
            let mut grads = backward(&params, &trace, &dlogits)?;
            drop(trace);
            params.weights.add_l2_grad(&mut grads, config.l2);
            adam_step(&mut params, &grads, &mut adam, config.lr_l, config.lr_p)?;
        }
        if !params.weights.is_finite() {
            return Err(Error::Diverged { epoch, message: "parameters became non-finite".into() });
        }

        let (logits, _) = forward(&params, data, &prepared, None, Dropout::OFF, &mut rng).map_err(diverged)?;
        let pred = argmax_rows(&logits);
        let (val, _) = loss(&logits, &data.labels, val_index, &params.weights, config.l2)?;
        let record = EpochRecord {
            epoch,
            train_loss,
            train_accuracy: accuracy_on(&pred, &data.labels, &split.train),
            val_loss: val.total(),
            val_accuracy: accuracy_on(&pred, &data.labels, val_index),
            test_accuracy: accuracy_on(&pred, &data.labels, &split.test),
        };
        history.epochs.push(record);
        let improved = best.as_ref().is_none_or(|b| {
            record.val_accuracy > b.2 || (record.val_accuracy == b.2 && record.val_loss < b.3)
        });
        if improved {
            best = Some((params.clone(), epoch, record.val_accuracy, record.val_loss));
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs > config.patience {
                break;
            }
        }
    }
    let (params, best_epoch, best_val_accuracy, _) = best.ok_or_else(|| Error::Input("epochs must be positive".into()))?;
    Ok(TrainOutcome { params, best_epoch, best_val_accuracy, lambda_max: prepared.lambda_max, history })
}

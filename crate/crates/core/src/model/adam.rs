//! Adam with separate learning rates for the MLP and filter groups.

use super::params::{ModelParams, Weights};
use crate::error::{shape, Result};
use crate::Matrix;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(weights: &Weights) -> Self {
        let zeros: Vec<Matrix> = weights.tensors().iter().map(|(_, t)| Matrix::zeros(t.raw_dim())).collect();
        Self { step: 0, m: zeros.clone(), v: zeros }
    }
}

/// One bias-corrected Adam update. `lr_l` applies to `mlp.*` tensors, `lr_p` to `filter.*`.
pub fn adam_step(params: &mut ModelParams, grads: &Weights, state: &mut AdamState, lr_l: f64, lr_p: f64) -> Result<()> {
    let grads = grads.tensors();
    let tensors = params.weights.tensors_mut();
    if grads.len() != tensors.len() || state.m.len() != tensors.len() {
        return shape("gradient and optimizer state do not match the parameters");
    }
    for ((name, t), (_, g)) in tensors.iter().zip(&grads) {
        if t.raw_dim() != g.raw_dim() {
            return shape(format!("gradient for {name} has shape {:?}, expected {:?}", g.dim(), t.dim()));
        }
    }
    state.step += 1;
    let c1 = 1.0 - ADAM_BETA1.powf(state.step as f64);
    let c2 = 1.0 - ADAM_BETA2.powf(state.step as f64);
    for (((name, t), (_, g)), (m, v)) in tensors.into_iter().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let lr = if Weights::is_mlp(name) { lr_l } else { lr_p };
        ndarray::Zip::from(t).and(g).and(m).and(v).for_each(|t, &g, m, v| {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *t -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        });
    }
    params.touch();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Mode, TrainConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> ModelParams {
        let cfg = TrainConfig { order: 2, hidden: 3, ..TrainConfig::default() };
        ModelParams::init(&cfg, 4, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn first_step_moves_each_entry_by_lr_times_sign() {
        let mut p = small();
        let before = p.clone();
        let mut g = p.weights.zeros_like();
        for (name, t) in g.tensors_mut() {
            let s = if Weights::is_mlp(name) { 1.0 } else { -3.0 };
            t.fill(s);
        }
        let mut st = AdamState::new(&p.weights);
        adam_step(&mut p, &g, &mut st, 0.01, 0.05).unwrap();
        for ((name, a), (_, b)) in p.weights.tensors().into_iter().zip(before.weights.tensors()) {
            let expect = if Weights::is_mlp(name) { -0.01 } else { 0.05 };
            for (x, y) in a.iter().zip(b.iter()) {
                assert!(((x - y) - expect).abs() < 1e-9, "{name}: {} vs {expect}", x - y);
            }
        }
        assert_eq!(p.generation(), before.generation() + 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = small();
        let before = p.weights.clone();
        let g = p.weights.zeros_like();
        let mut st = AdamState::new(&p.weights);
        for _ in 0..3 {
            adam_step(&mut p, &g, &mut st, 0.1, 0.1).unwrap();
        }
        assert_eq!(p.weights, before);
        assert_eq!(st.step, 3);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = small();
        assert_eq!(p.mode, Mode::AppnpLike);
        let mut st = AdamState::new(&p.weights);
        for _ in 0..2000 {
            let mut g = p.weights.zeros_like();
            p.weights.add_l2_grad(&mut g, 0.5);
            for (name, t) in g.tensors_mut() {
                if !Weights::is_decayed(name) {
                    t.fill(0.0);
                }
            }
            adam_step(&mut p, &g, &mut st, 0.01, 0.01).unwrap();
        }
        assert!(p.weights.l2_penalty(1.0) < 1e-4);
    }

    #[test]
    fn rejects_mismatched_gradients() {
        let mut p = small();
        let cfg = TrainConfig { order: 3, hidden: 3, ..TrainConfig::default() };
        let other = ModelParams::init(&cfg, 4, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut st = AdamState::new(&p.weights);
        assert!(adam_step(&mut p, &other.weights.zeros_like(), &mut st, 0.01, 0.01).is_err());
    }
}

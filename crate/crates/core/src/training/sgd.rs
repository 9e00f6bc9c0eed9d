//! SGD with classical momentum and L2 weight decay folded into the gradient:
//! `v' = momentum * v + (g + wd * w)`, `w' = w - lr * v'`.
//!
//! Batch-norm running statistics are not optimizer state; they are skipped
//! here and updated by the trainer's EMA instead.

use crate::linalg::Real;
use crate::model::{GradientSet, Hyperparams, TensorRole, Weights};

/// One optimizer step over every trainable tensor, in place.
pub fn sgd_step<T: Real>(
    hp: &Hyperparams,
    weights: &mut Weights<T>,
    grads: &GradientSet<T>,
    velocity: &mut Weights<T>,
    lr: T,
    momentum: T,
    weight_decay: T,
) {
    for spec in hp.tensor_specs() {
        if spec.role != TensorRole::Trainable {
            continue;
        }
        let g = grads.tensor(spec.name).unwrap();
        let v = velocity.tensor_mut(spec.name).unwrap();
        let w = weights.tensor_mut(spec.name).unwrap();
        for i in 0..w.len() {
            let step = momentum * v[i] + (g[i] + weight_decay * w[i]);
            v[i] = step;
            w[i] = w[i] - lr * step;
        }
    }
}

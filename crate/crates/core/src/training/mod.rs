//! Supervised training: cross-entropy loss, exact hand-written gradients,
//! SGD with momentum, and the epoch loop with the step learning-rate
//! schedule (drops at epochs 9 and 13).

pub mod backward;
pub mod sgd;
mod trainer;

pub use backward::{backward_example, batch_forward_backward, BatchOutcome};
pub use sgd::sgd_step;
pub use trainer::{
    score_source, train, AudioDataSource, DataSource, EpochMetrics, FeatureDataSource,
    TrainOutcome,
};

use thiserror::Error;

use crate::linalg::{log_sum_exp, Real};

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("epoch {epoch} outside schedule range 1..={total}")]
    EpochOutOfRange { epoch: usize, total: usize },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite loss or gradient at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("audio clip {index} too short for the frontend ({len} samples)")]
    ClipTooShort { index: usize, len: usize },
}

/// Training recipe. Defaults: batch 48, momentum 0.9, weight decay 1e-4,
/// initial LR 1e-2 dropping tenfold at epochs 9 and 13, 16 epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f32,
    pub weight_decay: f32,
    /// Step schedule: epochs 1-8, 9-12, and 13 onward.
    pub lr_stages: [f32; 3],
    pub total_epochs: usize,
    /// EMA factor for the batch-norm running statistics.
    pub bn_momentum: f32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 48,
            momentum: 0.9,
            weight_decay: 1e-4,
            lr_stages: [1e-2, 1e-3, 1e-4],
            total_epochs: 16,
            bn_momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Learning rate for a 1-based epoch: the first stage through epoch 8,
    /// the second through epoch 12, the third afterwards.
    pub fn lr_at(&self, epoch: usize) -> Result<f32, TrainError> {
        if epoch < 1 || epoch > self.total_epochs {
            return Err(TrainError::EpochOutOfRange {
                epoch,
                total: self.total_epochs,
            });
        }
        Ok(if epoch < 9 {
            self.lr_stages[0]
        } else if epoch < 13 {
            self.lr_stages[1]
        } else {
            self.lr_stages[2]
        })
    }
}

/// `-log p(label)` computed from logits through log-sum-exp, so it never
/// underflows on confident predictions.
pub fn cross_entropy_from_logits<T: Real>(logits: &[T], label: usize) -> T {
    log_sum_exp(logits) - logits[label]
}

/// `-log(probs[label])` for an already-normalized distribution.
pub fn cross_entropy<T: Real>(probs: &[T], label: usize) -> T {
    -probs[label].ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::softmax_in_place;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_loss_is_log_class_count() {
        let probs = vec![1.0f64 / 201.0; 201];
        let loss = cross_entropy(&probs, 57);
        assert!((loss - (201f64).ln()).abs() < 1e-12);
        assert!((loss - 5.303).abs() < 1e-3);
        // Equivalent logits formulation.
        let logits = vec![0.0f64; 201];
        assert!((cross_entropy_from_logits(&logits, 57) - loss).abs() < 1e-12);
    }

    #[test]
    fn certain_prediction_has_zero_loss() {
        let mut probs = vec![0.0f64; 5];
        probs[3] = 1.0;
        assert_eq!(cross_entropy(&probs, 3), 0.0);
    }

    #[test]
    fn logits_path_matches_log_softmax_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..50 {
            let logits: Vec<f64> = (0..201).map(|_| rng.random_range(-30.0..30.0)).collect();
            let label = rng.random_range(0..201);
            let got = cross_entropy_from_logits(&logits, label);
            let mut probs = logits.clone();
            softmax_in_place(&mut probs);
            let expected = -probs[label].ln();
            assert!((got - expected).abs() < 1e-8, "{got} vs {expected}");
        }
    }

    #[test]
    fn lr_schedule_boundaries() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(1).unwrap(), 1e-2);
        assert_eq!(cfg.lr_at(8).unwrap(), 1e-2);
        assert_eq!(cfg.lr_at(9).unwrap(), 1e-3);
        assert_eq!(cfg.lr_at(12).unwrap(), 1e-3);
        assert_eq!(cfg.lr_at(13).unwrap(), 1e-4);
        assert_eq!(cfg.lr_at(16).unwrap(), 1e-4);
        assert!(cfg.lr_at(0).is_err());
        assert!(cfg.lr_at(17).is_err());
    }
}

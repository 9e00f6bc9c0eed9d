//! The epoch loop: shuffled minibatches, on-the-fly augmentation, SGD with
//! the step schedule, per-epoch validation FAR/QER, and checkpoints via a
//! callback. Deterministic given the seed: per-example augmentation RNGs are
//! derived from (seed, epoch, example) and parallel work is reduced in index
//! order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::augment::{augment, AugmentConfig};
use crate::audio::Waveform;
use crate::eval::{far, qer, EvalRecord};
use crate::frontend::Frontend;
use crate::model::forward::forward_full;
use crate::model::{Hyperparams, Weights};
use crate::training::{batch_forward_backward, sgd_step, TrainConfig, TrainError};

/// A labeled source of feature matrices. `rng` is present on training reads
/// and drives augmentation; validation reads pass `None`.
pub trait DataSource: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn example(&self, index: usize, rng: Option<&mut ChaCha8Rng>) -> (Vec<Vec<f32>>, usize);
}

/// In-memory waveforms, augmented (when an RNG is supplied) and run through
/// the PCEN frontend on every read.
pub struct AudioDataSource {
    clips: Vec<(Waveform, usize)>,
    frontend: Frontend,
    augment: Option<AugmentConfig>,
}

impl AudioDataSource {
    pub fn new(
        clips: Vec<(Waveform, usize)>,
        frontend: Frontend,
        augment: Option<AugmentConfig>,
    ) -> Result<Self, TrainError> {
        let window = frontend.frame.window_samples();
        for (i, (clip, _)) in clips.iter().enumerate() {
            if clip.len() < window {
                return Err(TrainError::ClipTooShort {
                    index: i,
                    len: clip.len(),
                });
            }
        }
        Ok(AudioDataSource {
            clips,
            frontend,
            augment,
        })
    }
}

impl DataSource for AudioDataSource {
    fn len(&self) -> usize {
        self.clips.len()
    }

    fn example(&self, index: usize, rng: Option<&mut ChaCha8Rng>) -> (Vec<Vec<f32>>, usize) {
        let (clip, label) = &self.clips[index];
        let frames = match (&self.augment, rng) {
            (Some(cfg), Some(rng)) => {
                let augmented = augment(clip, cfg, rng);
                self.frontend.pcen_full(&augmented).unwrap_or_else(|_| {
                    // Augmentation preserves length, so this cannot shrink
                    // below one window; fall back to the clean clip.
                    self.frontend.pcen_full(clip).expect("validated at construction")
                })
            }
            _ => self.frontend.pcen_full(clip).expect("validated at construction"),
        };
        (frames, *label)
    }
}

/// Precomputed feature matrices (synthetic experiments, tests).
pub struct FeatureDataSource {
    pub items: Vec<(Vec<Vec<f32>>, usize)>,
}

impl DataSource for FeatureDataSource {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn example(&self, index: usize, _rng: Option<&mut ChaCha8Rng>) -> (Vec<Vec<f32>>, usize) {
        self.items[index].clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f32,
    pub train_loss: f64,
    pub val_far: f64,
    pub val_qer: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub weights: Weights<f32>,
    pub metrics: Vec<EpochMetrics>,
}

/// splitmix64-style mixer for derived RNG streams.
fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Scores a data source with the current weights (no augmentation) and
/// returns one record per example.
pub fn score_source(
    hp: &Hyperparams,
    w: &Weights<f32>,
    source: &dyn DataSource,
) -> Vec<EvalRecord> {
    (0..source.len())
        .into_par_iter()
        .map(|i| {
            let (frames, label) = source.example(i, None);
            let probs = forward_full(hp, w, &frames);
            EvalRecord::from_probs(label, &probs)
        })
        .collect()
}

/// Runs the full recipe and returns the final weights plus per-epoch
/// metrics. `on_epoch` fires after every epoch with the current weights
/// (checkpointing hook).
pub fn train(
    hp: &Hyperparams,
    cfg: &TrainConfig,
    train_set: &dyn DataSource,
    val_set: &dyn DataSource,
    mut on_epoch: impl FnMut(&EpochMetrics, &Weights<f32>),
) -> Result<TrainOutcome, TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    hp.validate().expect("hyperparams");
    let unknown = hp.n_classes - 1;

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weights: Weights<f32> = Weights::init(hp, &mut init_rng);
    let mut velocity: Weights<f32> = Weights::zeros(hp);
    let mut metrics = Vec::with_capacity(cfg.total_epochs);

    for epoch in 1..=cfg.total_epochs {
        let lr = cfg.lr_at(epoch)?;
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, epoch as u64, 0));
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0f64;
        let mut seen = 0usize;
        for (batch_id, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let examples: Vec<(Vec<Vec<f32>>, usize)> = chunk
                .par_iter()
                .map(|&idx| {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(mix(cfg.seed, epoch as u64, idx as u64 + 1));
                    train_set.example(idx, Some(&mut rng))
                })
                .collect();
            let outcome = batch_forward_backward(hp, &weights, &examples);
            if !outcome.loss.is_finite() || !outcome.grads.all_finite(hp) {
                return Err(TrainError::Diverged { epoch, batch: batch_id });
            }
            sgd_step(
                hp,
                &mut weights,
                &outcome.grads,
                &mut velocity,
                lr,
                cfg.momentum,
                cfg.weight_decay,
            );
            if hp.variant.has_conv() {
                for ch in 0..hp.conv_channels {
                    weights.bn_mean[ch] = cfg.bn_momentum * weights.bn_mean[ch]
                        + (1.0 - cfg.bn_momentum) * outcome.bn_mean[ch];
                    weights.bn_var[ch] = cfg.bn_momentum * weights.bn_var[ch]
                        + (1.0 - cfg.bn_momentum) * outcome.bn_var[ch];
                }
            }
            loss_sum += outcome.loss as f64 * chunk.len() as f64;
            seen += chunk.len();
        }

        let records = score_source(hp, &weights, val_set);
        let epoch_metrics = EpochMetrics {
            epoch,
            lr,
            train_loss: loss_sum / seen as f64,
            val_far: far(&records, unknown).expect("non-empty validation"),
            val_qer: qer(&records, unknown).expect("non-empty validation"),
        };
        on_epoch(&epoch_metrics, &weights);
        metrics.push(epoch_metrics);
    }

    Ok(TrainOutcome { weights, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use rand::Rng;

    fn tiny_hp(n_classes: usize) -> Hyperparams {
        Hyperparams {
            variant: Variant::CrnnMax,
            conv_channels: 4,
            conv_time: 3,
            conv_freq: 20,
            stride_time: 1,
            stride_freq: 10,
            gru_hidden: 8,
            feature_channels: 4,
            classifier_hidden: 8,
            n_classes,
            n_mels: 40,
        }
    }

    /// Linearly separable synthetic features: class i puts energy in mel
    /// band i.
    fn separable_features(classes: usize, per_class: usize, seed: u64) -> FeatureDataSource {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut items = Vec::new();
        for class in 0..classes {
            for _ in 0..per_class {
                let t = rng.random_range(4..8);
                let frames: Vec<Vec<f32>> = (0..t)
                    .map(|_| {
                        (0..40)
                            .map(|mel| {
                                let hot = mel >= class * 12 && mel < class * 12 + 8;
                                let base: f32 = if hot { 0.8 } else { 0.05 };
                                base + rng.random_range(0.0..0.05)
                            })
                            .collect()
                    })
                    .collect();
                items.push((frames, class));
            }
        }
        FeatureDataSource { items }
    }

    #[test]
    fn training_is_deterministic_bit_for_bit() {
        let hp = tiny_hp(3);
        let cfg = TrainConfig {
            batch_size: 8,
            total_epochs: 2,
            seed: 77,
            ..TrainConfig::default()
        };
        let train_set = separable_features(3, 10, 5);
        let val_set = separable_features(3, 4, 6);
        let a = train(&hp, &cfg, &train_set, &val_set, |_, _| {}).unwrap();
        let b = train(&hp, &cfg, &train_set, &val_set, |_, _| {}).unwrap();
        for spec in hp.tensor_specs() {
            let x = a.weights.tensor(spec.name).unwrap();
            let y = b.weights.tensor(spec.name).unwrap();
            for (u, v) in x.iter().zip(y) {
                assert_eq!(u.to_bits(), v.to_bits(), "{}", spec.name);
            }
        }
        assert_eq!(a.metrics, b.metrics);
    }

    #[test]
    fn separable_problem_is_learned_quickly() {
        let hp = tiny_hp(3);
        let cfg = TrainConfig {
            batch_size: 16,
            total_epochs: 50,
            // Constant rate: this is a sanity problem, not the step-schedule
            // recipe (which decays too early to matter over 50 tiny epochs).
            lr_stages: [1e-2, 1e-2, 1e-2],
            seed: 11,
            ..TrainConfig::default()
        };
        let train_set = separable_features(3, 30, 7);
        let val_set = separable_features(3, 6, 8);
        let outcome = train(&hp, &cfg, &train_set, &val_set, |_, _| {}).unwrap();
        let best = outcome
            .metrics
            .iter()
            .map(|m| m.train_loss)
            .fold(f64::INFINITY, f64::min);
        assert!(best < 0.1, "best train loss {best}");
        assert_eq!(outcome.metrics.len(), 50);
    }

    #[test]
    fn empty_split_is_rejected() {
        let hp = tiny_hp(3);
        let cfg = TrainConfig::default();
        let empty = FeatureDataSource { items: vec![] };
        let ok = separable_features(3, 10, 5);
        assert_eq!(
            train(&hp, &cfg, &empty, &ok, |_, _| {}).unwrap_err(),
            TrainError::EmptySplit("train")
        );
        assert_eq!(
            train(&hp, &cfg, &ok, &empty, |_, _| {}).unwrap_err(),
            TrainError::EmptySplit("validation")
        );
    }

    #[test]
    fn batch_mean_loss_is_order_independent_within_tolerance() {
        let hp = tiny_hp(3);
        let src = separable_features(3, 4, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let w: Weights<f32> = Weights::init(&hp, &mut rng);
        let batch: Vec<(Vec<Vec<f32>>, usize)> = src.items.clone();
        let mut shuffled = batch.clone();
        shuffled.reverse();
        let a = batch_forward_backward(&hp, &w, &batch);
        let b = batch_forward_backward(&hp, &w, &shuffled);
        assert!(
            ((a.loss - b.loss) / a.loss).abs() < 1e-5,
            "{} vs {}",
            a.loss,
            b.loss
        );
    }
}

//! The convolutional-recurrent classifier.
//!
//! Three variants share one parameter container:
//!
//! * `crnn-m` — causal conv -> GRU -> feature conv + max-pool across time;
//!   final context is `[c_max, h_T]`.
//! * `crnn`   — same front, but no feature conv / max-pool; context is `h_T`.
//! * `rnn-m`  — no causal conv; the GRU consumes raw 40-dim frames; feature
//!   conv + max-pool retained.

pub mod footprint;
pub mod forward;

use std::str::FromStr;

use rand::Rng;

use crate::linalg::Real;

/// Number of mel channels produced by the frontend.
pub const N_MELS: usize = 40;

/// Epsilon inside the batch-norm denominator.
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Causal conv + GRU + max-pooled feature conv.
    CrnnMax,
    /// Causal conv + GRU, no pooling; context is the last hidden state.
    Crnn,
    /// GRU directly on frames + max-pooled feature conv.
    RnnMax,
}

impl Variant {
    pub fn has_conv(self) -> bool {
        matches!(self, Variant::CrnnMax | Variant::Crnn)
    }

    pub fn has_maxpool(self) -> bool {
        matches!(self, Variant::CrnnMax | Variant::RnnMax)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::CrnnMax => "crnn-750m",
            Variant::Crnn => "crnn-750",
            Variant::RnnMax => "rnn-750m",
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "crnn-750m" | "crnn-m" => Ok(Variant::CrnnMax),
            "crnn-750" | "crnn" => Ok(Variant::Crnn),
            "rnn-750m" | "rnn-m" => Ok(Variant::RnnMax),
            other => Err(format!(
                "unknown variant {other:?} (expected crnn-750m, crnn-750 or rnn-750m)"
            )),
        }
    }
}

/// Architecture dimensions for one model instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hyperparams {
    pub variant: Variant,
    /// Conv output channels (`c`).
    pub conv_channels: usize,
    /// Conv width in time (`m`).
    pub conv_time: usize,
    /// Conv length in frequency (`n`).
    pub conv_freq: usize,
    pub stride_time: usize,
    pub stride_freq: usize,
    /// GRU hidden units (`k`).
    pub gru_hidden: usize,
    /// Feature-conv output channels (`d`).
    pub feature_channels: usize,
    /// Classifier hidden units (`r`).
    pub classifier_hidden: usize,
    /// `N + 1` output classes; the last one is "unknown".
    pub n_classes: usize,
    pub n_mels: usize,
}

impl Hyperparams {
    /// The full-size flagship configuration.
    pub fn crnn_750m() -> Self {
        Hyperparams {
            variant: Variant::CrnnMax,
            conv_channels: 250,
            conv_time: 3,
            conv_freq: 20,
            stride_time: 1,
            stride_freq: 10,
            gru_hidden: 750,
            feature_channels: 350,
            classifier_hidden: 768,
            n_classes: 201,
            n_mels: N_MELS,
        }
    }

    /// Ablation without max-pooling (and hence without the feature conv).
    pub fn crnn_750() -> Self {
        Hyperparams {
            variant: Variant::Crnn,
            feature_channels: 0,
            ..Self::crnn_750m()
        }
    }

    /// Ablation without the causal convolution front.
    pub fn rnn_750m() -> Self {
        Hyperparams {
            variant: Variant::RnnMax,
            conv_channels: 0,
            conv_time: 0,
            conv_freq: 0,
            ..Self::crnn_750m()
        }
    }

    pub fn for_variant(variant: Variant) -> Self {
        match variant {
            Variant::CrnnMax => Self::crnn_750m(),
            Variant::Crnn => Self::crnn_750(),
            Variant::RnnMax => Self::rnn_750m(),
        }
    }

    /// Frequency positions covered by the conv filter (`f`).
    pub fn freq_positions(&self) -> usize {
        if self.variant.has_conv() {
            (self.n_mels - self.conv_freq) / self.stride_freq + 1
        } else {
            0
        }
    }

    /// Width of the GRU input vector.
    pub fn gru_input(&self) -> usize {
        if self.variant.has_conv() {
            self.conv_channels * self.freq_positions()
        } else {
            self.n_mels
        }
    }

    /// Width of the final context vector fed to the classifier.
    pub fn context_dim(&self) -> usize {
        if self.variant.has_maxpool() {
            self.feature_channels + self.gru_hidden
        } else {
            self.gru_hidden
        }
    }

    /// Frames of history the causal conv needs besides the current frame.
    pub fn conv_history(&self) -> usize {
        if self.variant.has_conv() {
            self.conv_time - 1
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.gru_hidden == 0 || self.classifier_hidden == 0 || self.n_classes < 2 {
            return Err("gru_hidden, classifier_hidden and n_classes must be positive".into());
        }
        if self.variant.has_conv() {
            if self.conv_channels == 0 || self.conv_time == 0 || self.conv_freq == 0 {
                return Err("conv dimensions must be positive".into());
            }
            if self.stride_time != 1 {
                return Err("only time stride 1 is supported".into());
            }
            if self.conv_freq > self.n_mels
                || (self.n_mels - self.conv_freq) % self.stride_freq != 0
            {
                return Err(format!(
                    "conv frequency geometry must tile {} mel channels exactly",
                    self.n_mels
                ));
            }
        }
        if self.variant.has_maxpool() && self.feature_channels == 0 {
            return Err("feature_channels must be positive for max-pool variants".into());
        }
        Ok(())
    }

    /// Tensor layout for this variant, in serialization order.
    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let mut specs = Vec::new();
        let mut push = |name: &'static str, shape: Vec<usize>, role: TensorRole| {
            specs.push(TensorSpec { name, shape, role });
        };
        let k = self.gru_hidden;
        let input = self.gru_input();
        if self.variant.has_conv() {
            let c = self.conv_channels;
            push("conv_w", vec![c, self.conv_time, self.conv_freq], TensorRole::Trainable);
            push("conv_b", vec![c], TensorRole::Trainable);
            push("bn_gamma", vec![c], TensorRole::Trainable);
            push("bn_beta", vec![c], TensorRole::Trainable);
            push("bn_mean", vec![c], TensorRole::Statistic);
            push("bn_var", vec![c], TensorRole::Statistic);
        }
        push("gru_wz", vec![k, input], TensorRole::Trainable);
        push("gru_wr", vec![k, input], TensorRole::Trainable);
        push("gru_wn", vec![k, input], TensorRole::Trainable);
        push("gru_uz", vec![k, k], TensorRole::Trainable);
        push("gru_ur", vec![k, k], TensorRole::Trainable);
        push("gru_un", vec![k, k], TensorRole::Trainable);
        push("gru_bz", vec![k], TensorRole::Trainable);
        push("gru_br", vec![k], TensorRole::Trainable);
        push("gru_bn", vec![k], TensorRole::Trainable);
        if self.variant.has_maxpool() {
            let d = self.feature_channels;
            push("fconv_w", vec![d, k], TensorRole::Trainable);
            push("fconv_b", vec![d], TensorRole::Trainable);
        }
        let ctx = self.context_dim();
        let r = self.classifier_hidden;
        push("dnn_w1", vec![r, ctx], TensorRole::Trainable);
        push("dnn_b1", vec![r], TensorRole::Trainable);
        push("dnn_w2", vec![self.n_classes, r], TensorRole::Trainable);
        push("dnn_b2", vec![self.n_classes], TensorRole::Trainable);
        specs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    /// Updated by the optimizer.
    Trainable,
    /// Batch-norm running statistics, updated by the EMA during training.
    Statistic,
}

#[derive(Debug, Clone)]
pub struct TensorSpec {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub role: TensorRole,
}

impl TensorSpec {
    pub fn elems(&self) -> usize {
        self.shape.iter().product()
    }
}

/// All named parameter tensors of one model. Tensors not used by the variant
/// are empty. Matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    pub conv_w: Vec<T>,
    pub conv_b: Vec<T>,
    pub bn_gamma: Vec<T>,
    pub bn_beta: Vec<T>,
    pub bn_mean: Vec<T>,
    pub bn_var: Vec<T>,
    pub gru_wz: Vec<T>,
    pub gru_wr: Vec<T>,
    pub gru_wn: Vec<T>,
    pub gru_uz: Vec<T>,
    pub gru_ur: Vec<T>,
    pub gru_un: Vec<T>,
    pub gru_bz: Vec<T>,
    pub gru_br: Vec<T>,
    pub gru_bn: Vec<T>,
    pub fconv_w: Vec<T>,
    pub fconv_b: Vec<T>,
    pub dnn_w1: Vec<T>,
    pub dnn_b1: Vec<T>,
    pub dnn_w2: Vec<T>,
    pub dnn_b2: Vec<T>,
}

/// Per-tensor gradients; shape-congruent with [`Weights`].
pub type GradientSet<T> = Weights<T>;

impl<T: Real> Weights<T> {
    pub fn zeros(hp: &Hyperparams) -> Self {
        let mut w = Weights::empty();
        for spec in hp.tensor_specs() {
            *w.tensor_mut(spec.name).unwrap() = vec![T::zero(); spec.elems()];
        }
        w
    }

    fn empty() -> Self {
        Weights {
            conv_w: Vec::new(),
            conv_b: Vec::new(),
            bn_gamma: Vec::new(),
            bn_beta: Vec::new(),
            bn_mean: Vec::new(),
            bn_var: Vec::new(),
            gru_wz: Vec::new(),
            gru_wr: Vec::new(),
            gru_wn: Vec::new(),
            gru_uz: Vec::new(),
            gru_ur: Vec::new(),
            gru_un: Vec::new(),
            gru_bz: Vec::new(),
            gru_br: Vec::new(),
            gru_bn: Vec::new(),
            fconv_w: Vec::new(),
            fconv_b: Vec::new(),
            dnn_w1: Vec::new(),
            dnn_b1: Vec::new(),
            dnn_w2: Vec::new(),
            dnn_b2: Vec::new(),
        }
    }

    /// Random init: every weight and bias tensor uniform in
    /// `+-sqrt(1 / fan_in)`; batch-norm starts as the identity transform.
    pub fn init<R: Rng>(hp: &Hyperparams, rng: &mut R) -> Self {
        let mut w = Self::zeros(hp);
        let input = hp.gru_input();
        let k = hp.gru_hidden;
        let ctx = hp.context_dim();
        let fan_in = |name: &str| -> usize {
            match name {
                "conv_w" | "conv_b" => hp.conv_time * hp.conv_freq,
                "gru_wz" | "gru_wr" | "gru_wn" => input,
                "gru_uz" | "gru_ur" | "gru_un" | "gru_bz" | "gru_br" | "gru_bn" => k,
                "fconv_w" | "fconv_b" => k,
                "dnn_w1" | "dnn_b1" => ctx,
                "dnn_w2" | "dnn_b2" => hp.classifier_hidden,
                _ => 0,
            }
        };
        for spec in hp.tensor_specs() {
            let data = w.tensor_mut(spec.name).unwrap();
            match spec.name {
                "bn_gamma" | "bn_var" => data.fill(T::one()),
                "bn_beta" | "bn_mean" => data.fill(T::zero()),
                name => {
                    let bound = (1.0 / fan_in(name) as f64).sqrt();
                    for v in data.iter_mut() {
                        *v = T::of_f64(rng.random_range(-bound..bound));
                    }
                }
            }
        }
        w
    }

    pub fn tensor(&self, name: &str) -> Option<&Vec<T>> {
        Some(match name {
            "conv_w" => &self.conv_w,
            "conv_b" => &self.conv_b,
            "bn_gamma" => &self.bn_gamma,
            "bn_beta" => &self.bn_beta,
            "bn_mean" => &self.bn_mean,
            "bn_var" => &self.bn_var,
            "gru_wz" => &self.gru_wz,
            "gru_wr" => &self.gru_wr,
            "gru_wn" => &self.gru_wn,
            "gru_uz" => &self.gru_uz,
            "gru_ur" => &self.gru_ur,
            "gru_un" => &self.gru_un,
            "gru_bz" => &self.gru_bz,
            "gru_br" => &self.gru_br,
            "gru_bn" => &self.gru_bn,
            "fconv_w" => &self.fconv_w,
            "fconv_b" => &self.fconv_b,
            "dnn_w1" => &self.dnn_w1,
            "dnn_b1" => &self.dnn_b1,
            "dnn_w2" => &self.dnn_w2,
            "dnn_b2" => &self.dnn_b2,
            _ => return None,
        })
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Vec<T>> {
        Some(match name {
            "conv_w" => &mut self.conv_w,
            "conv_b" => &mut self.conv_b,
            "bn_gamma" => &mut self.bn_gamma,
            "bn_beta" => &mut self.bn_beta,
            "bn_mean" => &mut self.bn_mean,
            "bn_var" => &mut self.bn_var,
            "gru_wz" => &mut self.gru_wz,
            "gru_wr" => &mut self.gru_wr,
            "gru_wn" => &mut self.gru_wn,
            "gru_uz" => &mut self.gru_uz,
            "gru_ur" => &mut self.gru_ur,
            "gru_un" => &mut self.gru_un,
            "gru_bz" => &mut self.gru_bz,
            "gru_br" => &mut self.gru_br,
            "gru_bn" => &mut self.gru_bn,
            "fconv_w" => &mut self.fconv_w,
            "fconv_b" => &mut self.fconv_b,
            "dnn_w1" => &mut self.dnn_w1,
            "dnn_b1" => &mut self.dnn_b1,
            "dnn_w2" => &mut self.dnn_w2,
            "dnn_b2" => &mut self.dnn_b2,
            _ => return None,
        })
    }

    /// Element-wise accumulate: `self += other` over every tensor.
    pub fn add_assign(&mut self, hp: &Hyperparams, other: &Weights<T>) {
        for spec in hp.tensor_specs() {
            let src = other.tensor(spec.name).unwrap().clone();
            let dst = self.tensor_mut(spec.name).unwrap();
            for (d, s) in dst.iter_mut().zip(src) {
                *d = *d + s;
            }
        }
    }

    pub fn all_finite(&self, hp: &Hyperparams) -> bool {
        hp.tensor_specs()
            .iter()
            .all(|spec| self.tensor(spec.name).unwrap().iter().all(|v| v.is_finite()))
    }

    /// Casts every tensor (used to move containers between f32 and f64).
    pub fn cast<U: Real>(&self, hp: &Hyperparams) -> Weights<U> {
        let mut out = Weights::empty();
        for spec in hp.tensor_specs() {
            let src = self.tensor(spec.name).unwrap();
            *out.tensor_mut(spec.name).unwrap() = src
                .iter()
                .map(|&v| U::of_f64(v.to_f64().unwrap()))
                .collect();
        }
        out
    }
}

//! Forward computation: per-frame ops plus the whole-clip pass.
//!
//! Every function here is pure in the weights, so one `Weights` value can
//! serve any number of concurrent streams.

use crate::linalg::{dot, matvec, relu, sigmoid, softmax_in_place, Real};
use crate::model::{Hyperparams, Weights, BN_EPS};

/// Raw causal-conv output (conv + bias), before ReLU and batch norm.
/// `window` holds exactly `conv_time` frames, oldest first; leading silence
/// is represented by zero frames. Output is `[channel][freq_position]`,
/// row-major, length `c * f`.
pub fn conv_preact<T: Real>(hp: &Hyperparams, w: &Weights<T>, window: &[&[T]]) -> Vec<T> {
    let c = hp.conv_channels;
    let m = hp.conv_time;
    let n = hp.conv_freq;
    let f = hp.freq_positions();
    debug_assert_eq!(window.len(), m);
    let mut out = vec![T::zero(); c * f];
    for ch in 0..c {
        let filt = &w.conv_w[ch * m * n..(ch + 1) * m * n];
        for p in 0..f {
            let start = p * hp.stride_freq;
            let mut acc = w.conv_b[ch];
            for (i, frame) in window.iter().enumerate() {
                acc = acc + dot(&filt[i * n..(i + 1) * n], &frame[start..start + n]);
            }
            out[ch * f + p] = acc;
        }
    }
    out
}

/// Applies `gamma * (x - mean) / sqrt(var + eps) + beta` per conv channel.
/// `x` is `[c * f]` with `f` positions per channel.
pub fn bn_apply<T: Real>(
    hp: &Hyperparams,
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
    x: &mut [T],
) {
    let f = hp.freq_positions();
    let eps = T::of_f64(BN_EPS);
    for ch in 0..hp.conv_channels {
        let inv_std = T::one() / (var[ch] + eps).sqrt();
        let g = gamma[ch] * inv_std;
        let b = beta[ch] - mean[ch] * g;
        for p in 0..f {
            let i = ch * f + p;
            x[i] = x[i] * g + b;
        }
    }
}

/// One step of the short-term context layer: causal 2D convolution over the
/// last `conv_time` frames, ReLU, then batch normalization with the stored
/// running statistics (the streaming-safe mode).
pub fn causal_conv<T: Real>(hp: &Hyperparams, w: &Weights<T>, window: &[&[T]]) -> Vec<T> {
    let mut out = conv_preact(hp, w, window);
    for v in out.iter_mut() {
        *v = relu(*v);
    }
    bn_apply(hp, &w.bn_gamma, &w.bn_beta, &w.bn_mean, &w.bn_var, &mut out);
    out
}

/// Gate activations of one GRU step, kept for backprop.
#[derive(Debug, Clone)]
pub struct GruStep<T> {
    pub update: Vec<T>,     // z
    pub reset: Vec<T>,      // r
    pub candidate: Vec<T>,  // n
    pub hidden_cand: Vec<T>, // Un * h_prev, before the reset gate
    pub hidden: Vec<T>,     // h'
}

/// One GRU step:
/// `z = sigma(Wz x + Uz h + bz)`, `r = sigma(Wr x + Ur h + br)`,
/// `n = tanh(Wn x + r . (Un h) + bn)`, `h' = (1 - z) . n + z . h`.
pub fn gru_step_full<T: Real>(hp: &Hyperparams, w: &Weights<T>, x: &[T], h: &[T]) -> GruStep<T> {
    let k = hp.gru_hidden;
    let input = hp.gru_input();
    debug_assert_eq!(x.len(), input);
    debug_assert_eq!(h.len(), k);

    let mut update = vec![T::zero(); k];
    let mut reset = vec![T::zero(); k];
    let mut candidate = vec![T::zero(); k];
    let mut tmp = vec![T::zero(); k];
    let mut hidden_cand = vec![T::zero(); k];

    matvec(&w.gru_wz, x, k, input, &mut update);
    matvec(&w.gru_uz, h, k, k, &mut tmp);
    for i in 0..k {
        update[i] = sigmoid(update[i] + tmp[i] + w.gru_bz[i]);
    }

    matvec(&w.gru_wr, x, k, input, &mut reset);
    matvec(&w.gru_ur, h, k, k, &mut tmp);
    for i in 0..k {
        reset[i] = sigmoid(reset[i] + tmp[i] + w.gru_br[i]);
    }

    matvec(&w.gru_wn, x, k, input, &mut candidate);
    matvec(&w.gru_un, h, k, k, &mut hidden_cand);
    for i in 0..k {
        candidate[i] = (candidate[i] + reset[i] * hidden_cand[i] + w.gru_bn[i]).tanh();
    }

    let mut hidden = vec![T::zero(); k];
    for i in 0..k {
        hidden[i] = (T::one() - update[i]) * candidate[i] + update[i] * h[i];
    }
    GruStep {
        update,
        reset,
        candidate,
        hidden_cand,
        hidden,
    }
}

pub fn gru_step<T: Real>(hp: &Hyperparams, w: &Weights<T>, x: &[T], h: &[T]) -> Vec<T> {
    gru_step_full(hp, w, x, h).hidden
}

/// Pre-activation of the per-step feature extractor: `Wf h + bf`.
pub fn feature_preact<T: Real>(hp: &Hyperparams, w: &Weights<T>, h: &[T]) -> Vec<T> {
    let d = hp.feature_channels;
    let mut out = vec![T::zero(); d];
    matvec(&w.fconv_w, h, d, hp.gru_hidden, &mut out);
    for i in 0..d {
        out[i] = relu(out[i] + w.fconv_b[i]);
    }
    out
}

/// Elementwise running maximum. Initialize `running` to `-inf`; the first
/// update then realizes the first feature vector.
pub fn maxpool_update<T: Real>(running: &mut [T], feat: &[T]) {
    debug_assert_eq!(running.len(), feat.len());
    for (r, &f) in running.iter_mut().zip(feat) {
        if f > *r {
            *r = f;
        }
    }
}

/// Classifier logits: `W2 relu(W1 ctx + b1) + b2`.
pub fn classifier_logits<T: Real>(hp: &Hyperparams, w: &Weights<T>, ctx: &[T]) -> Vec<T> {
    let r = hp.classifier_hidden;
    debug_assert_eq!(ctx.len(), hp.context_dim());
    let mut hidden = vec![T::zero(); r];
    matvec(&w.dnn_w1, ctx, r, ctx.len(), &mut hidden);
    for i in 0..r {
        hidden[i] = relu(hidden[i] + w.dnn_b1[i]);
    }
    let mut logits = vec![T::zero(); hp.n_classes];
    matvec(&w.dnn_w2, &hidden, hp.n_classes, r, &mut logits);
    for i in 0..hp.n_classes {
        logits[i] = logits[i] + w.dnn_b2[i];
    }
    logits
}

/// Softmax over the classifier logits.
pub fn classify<T: Real>(hp: &Hyperparams, w: &Weights<T>, ctx: &[T]) -> Vec<T> {
    let mut probs = classifier_logits(hp, w, ctx);
    softmax_in_place(&mut probs);
    probs
}

/// Builds the final context vector from the pooling state and last hidden
/// state: `[c_max, h_T]` for max-pool variants, `h_T` otherwise.
pub fn context_vector<T: Real>(hp: &Hyperparams, max_state: &[T], hidden: &[T]) -> Vec<T> {
    if hp.variant.has_maxpool() {
        let mut ctx = Vec::with_capacity(hp.context_dim());
        ctx.extend_from_slice(max_state);
        ctx.extend_from_slice(hidden);
        ctx
    } else {
        hidden.to_vec()
    }
}

/// Per-step states of a whole-clip pass; enough to check causality and to
/// seed backprop.
#[derive(Debug, Clone)]
pub struct ForwardStates<T> {
    /// GRU input per frame (conv output or raw frame).
    pub gru_inputs: Vec<Vec<T>>,
    /// Hidden state after each frame.
    pub hiddens: Vec<Vec<T>>,
    /// Feature vector per frame (empty when the variant has no pooling).
    pub features: Vec<Vec<T>>,
    /// Running max after all frames.
    pub max_state: Vec<T>,
    pub probs: Vec<T>,
}

/// Whole-clip forward pass: causal conv per frame (two leading zero-pad
/// frames), GRU across time from `h_0 = 0`, feature conv + running max per
/// step, one classification at the end.
pub fn forward_states<T: Real>(hp: &Hyperparams, w: &Weights<T>, frames: &[Vec<T>]) -> ForwardStates<T> {
    assert!(!frames.is_empty(), "forward pass needs at least one frame");
    let zero_frame = vec![T::zero(); hp.n_mels];
    let mut hidden = vec![T::zero(); hp.gru_hidden];
    let mut max_state = vec![T::neg_infinity(); hp.feature_channels];
    let mut gru_inputs = Vec::with_capacity(frames.len());
    let mut hiddens = Vec::with_capacity(frames.len());
    let mut features = Vec::new();

    for t in 0..frames.len() {
        let x = if hp.variant.has_conv() {
            let mut window: Vec<&[T]> = Vec::with_capacity(hp.conv_time);
            for i in 0..hp.conv_time {
                // Frame index t - (m - 1) + i; negative indices are silence.
                let idx = t as isize - (hp.conv_time as isize - 1) + i as isize;
                if idx < 0 {
                    window.push(&zero_frame);
                } else {
                    window.push(&frames[idx as usize]);
                }
            }
            causal_conv(hp, w, &window)
        } else {
            frames[t].clone()
        };
        hidden = gru_step(hp, w, &x, &hidden);
        if hp.variant.has_maxpool() {
            let feat = feature_preact(hp, w, &hidden);
            maxpool_update(&mut max_state, &feat);
            features.push(feat);
        }
        gru_inputs.push(x);
        hiddens.push(hidden.clone());
    }

    let ctx = context_vector(hp, &max_state, &hidden);
    let probs = classify(hp, w, &ctx);
    ForwardStates {
        gru_inputs,
        hiddens,
        features,
        max_state,
        probs,
    }
}

/// Whole-clip probabilities over the `N + 1` classes.
pub fn forward_full<T: Real>(hp: &Hyperparams, w: &Weights<T>, frames: &[Vec<T>]) -> Vec<T> {
    forward_states(hp, w, frames).probs
}

//! Exact gradients of the clip loss with respect to every tensor, by hand:
//! softmax/cross-entropy, the DNN, the max-pool subgradient (first argmax
//! step wins per channel), the feature conv, backprop through time over the
//! GRU, batch norm, and the causal convolution.
//!
//! Two batch-norm modes exist. The per-example path differentiates the
//! inference forward (running statistics as inputs, so `bn_mean`/`bn_var`
//! get true gradients too). The batch path recomputes statistics from the
//! batch and backpropagates through them.

use rayon::prelude::*;

use crate::linalg::{matvec_t_acc, outer_acc, relu, Real};
use crate::model::forward::{conv_preact, gru_step_full, GruStep};
use crate::model::{GradientSet, Hyperparams, Weights, BN_EPS};
use crate::training::{cross_entropy_from_logits, TrainError};

/// Cached activations of one example's forward pass.
pub struct ExampleTrace<T> {
    frames: Vec<Vec<T>>,
    label: usize,
    /// Conv pre-activation per frame (`c * f`), crnn variants only.
    conv_pre: Vec<Vec<T>>,
    /// Normalized BN input per frame (`(relu(a) - mu) / sigma`).
    xhat: Vec<Vec<T>>,
    /// GRU input per frame (BN output, or the raw frame for rnn variants).
    gru_in: Vec<Vec<T>>,
    gru: Vec<GruStep<T>>,
    /// Feature pre-activation per frame (max-pool variants).
    feat_pre: Vec<Vec<T>>,
    /// Winning step per feature channel (first occurrence on ties).
    win: Vec<usize>,
    ctx: Vec<T>,
    dnn_pre: Vec<T>,
    dnn_hidden: Vec<T>,
    pub probs: Vec<T>,
    pub loss: T,
}

/// Conv + ReLU activations, the part of the forward pass that precedes the
/// batch statistics.
pub struct ConvStage<T> {
    pre: Vec<Vec<T>>,
    relu: Vec<Vec<T>>,
}

pub fn conv_stage<T: Real>(hp: &Hyperparams, w: &Weights<T>, frames: &[Vec<T>]) -> ConvStage<T> {
    if !hp.variant.has_conv() {
        return ConvStage {
            pre: Vec::new(),
            relu: Vec::new(),
        };
    }
    let zero_frame = vec![T::zero(); hp.n_mels];
    let mut pre = Vec::with_capacity(frames.len());
    let mut post = Vec::with_capacity(frames.len());
    for t in 0..frames.len() {
        let mut window: Vec<&[T]> = Vec::with_capacity(hp.conv_time);
        for i in 0..hp.conv_time {
            let idx = t as isize - (hp.conv_time as isize - 1) + i as isize;
            if idx < 0 {
                window.push(&zero_frame);
            } else {
                window.push(&frames[idx as usize]);
            }
        }
        let a = conv_preact(hp, w, &window);
        let r: Vec<T> = a.iter().map(|&v| relu(v)).collect();
        pre.push(a);
        post.push(r);
    }
    ConvStage { pre, relu: post }
}

/// Per-channel mean and biased variance of conv activations across a batch
/// of examples (over every frame and frequency position).
pub fn batch_bn_stats<T: Real>(hp: &Hyperparams, stages: &[ConvStage<T>]) -> (Vec<T>, Vec<T>) {
    let c = hp.conv_channels;
    let f = hp.freq_positions();
    let mut mean = vec![T::zero(); c];
    let mut count = 0usize;
    for stage in stages {
        for frame in &stage.relu {
            for ch in 0..c {
                for p in 0..f {
                    mean[ch] = mean[ch] + frame[ch * f + p];
                }
            }
        }
        count += stage.relu.len() * f;
    }
    let n = T::of_usize(count);
    for m in mean.iter_mut() {
        *m = *m / n;
    }
    let mut var = vec![T::zero(); c];
    for stage in stages {
        for frame in &stage.relu {
            for ch in 0..c {
                for p in 0..f {
                    let d = frame[ch * f + p] - mean[ch];
                    var[ch] = var[ch] + d * d;
                }
            }
        }
    }
    for v in var.iter_mut() {
        *v = *v / n;
    }
    (mean, var)
}

/// Completes the forward pass given BN statistics (running or batch).
pub fn finish_trace<T: Real>(
    hp: &Hyperparams,
    w: &Weights<T>,
    frames: Vec<Vec<T>>,
    stage: ConvStage<T>,
    bn_mean: &[T],
    bn_var: &[T],
    label: usize,
) -> ExampleTrace<T> {
    let t_len = frames.len();
    let f = hp.freq_positions();
    let eps = T::of_f64(BN_EPS);

    let mut xhat = Vec::new();
    let mut gru_in: Vec<Vec<T>> = Vec::with_capacity(t_len);
    if hp.variant.has_conv() {
        xhat.reserve(t_len);
        for r in &stage.relu {
            let mut xh = vec![T::zero(); r.len()];
            let mut g = vec![T::zero(); r.len()];
            for ch in 0..hp.conv_channels {
                let inv_std = T::one() / (bn_var[ch] + eps).sqrt();
                for p in 0..f {
                    let i = ch * f + p;
                    xh[i] = (r[i] - bn_mean[ch]) * inv_std;
                    g[i] = w.bn_gamma[ch] * xh[i] + w.bn_beta[ch];
                }
            }
            xhat.push(xh);
            gru_in.push(g);
        }
    } else {
        gru_in = frames.clone();
    }

    let mut gru = Vec::with_capacity(t_len);
    let mut hidden = vec![T::zero(); hp.gru_hidden];
    for g in &gru_in {
        let step = gru_step_full(hp, w, g, &hidden);
        hidden = step.hidden.clone();
        gru.push(step);
    }

    let d = hp.feature_channels;
    let mut feat_pre = Vec::new();
    let mut win = vec![0usize; d];
    let mut max_state = vec![T::neg_infinity(); d];
    if hp.variant.has_maxpool() {
        feat_pre.reserve(t_len);
        for (t, step) in gru.iter().enumerate() {
            let mut q = vec![T::zero(); d];
            crate::linalg::matvec(&w.fconv_w, &step.hidden, d, hp.gru_hidden, &mut q);
            for (i, qv) in q.iter_mut().enumerate() {
                *qv = *qv + w.fconv_b[i];
                let feat = relu(*qv);
                if feat > max_state[i] {
                    max_state[i] = feat;
                    win[i] = t;
                }
            }
            feat_pre.push(q);
        }
    }

    let ctx = crate::model::forward::context_vector(hp, &max_state, &hidden);
    let r_hidden = hp.classifier_hidden;
    let mut dnn_pre = vec![T::zero(); r_hidden];
    crate::linalg::matvec(&w.dnn_w1, &ctx, r_hidden, ctx.len(), &mut dnn_pre);
    for (i, v) in dnn_pre.iter_mut().enumerate() {
        *v = *v + w.dnn_b1[i];
    }
    let dnn_hidden: Vec<T> = dnn_pre.iter().map(|&v| relu(v)).collect();
    let mut logits = vec![T::zero(); hp.n_classes];
    crate::linalg::matvec(&w.dnn_w2, &dnn_hidden, hp.n_classes, r_hidden, &mut logits);
    for (i, v) in logits.iter_mut().enumerate() {
        *v = *v + w.dnn_b2[i];
    }
    let loss = cross_entropy_from_logits(&logits, label);
    let mut probs = logits.clone();
    crate::linalg::softmax_in_place(&mut probs);

    ExampleTrace {
        frames,
        label,
        conv_pre: stage.pre,
        xhat,
        gru_in,
        gru,
        feat_pre,
        win,
        ctx,
        dnn_pre,
        dnn_hidden,
        probs,
        loss,
    }
}

/// Forward with the stored running statistics (the inference path).
pub fn trace_inference<T: Real>(
    hp: &Hyperparams,
    w: &Weights<T>,
    frames: Vec<Vec<T>>,
    label: usize,
) -> ExampleTrace<T> {
    let stage = conv_stage(hp, w, &frames);
    finish_trace(hp, w, frames, stage, &w.bn_mean, &w.bn_var, label)
}

/// Backward from the loss down to the batch-norm outputs. Accumulates
/// classifier, feature-conv and GRU gradients into `grads` (scaled by
/// `scale`) and returns the gradient of every GRU input vector.
fn backward_to_gru_inputs<T: Real>(
    hp: &Hyperparams,
    w: &Weights<T>,
    trace: &ExampleTrace<T>,
    scale: T,
    grads: &mut GradientSet<T>,
) -> Vec<Vec<T>> {
    let t_len = trace.gru.len();
    let k = hp.gru_hidden;
    let d = hp.feature_channels;
    let ctx_len = trace.ctx.len();

    // Softmax + cross entropy.
    let mut dlogits = trace.probs.clone();
    dlogits[trace.label] = dlogits[trace.label] - T::one();
    for v in dlogits.iter_mut() {
        *v = *v * scale;
    }

    // Classifier.
    outer_acc(&mut grads.dnn_w2, &dlogits, &trace.dnn_hidden);
    for (g, &dl) in grads.dnn_b2.iter_mut().zip(&dlogits) {
        *g = *g + dl;
    }
    let mut dhidden = vec![T::zero(); hp.classifier_hidden];
    matvec_t_acc(&w.dnn_w2, &dlogits, hp.n_classes, hp.classifier_hidden, &mut dhidden);
    for (dh, &pre) in dhidden.iter_mut().zip(&trace.dnn_pre) {
        if pre <= T::zero() {
            *dh = T::zero();
        }
    }
    outer_acc(&mut grads.dnn_w1, &dhidden, &trace.ctx);
    for (g, &dh) in grads.dnn_b1.iter_mut().zip(&dhidden) {
        *g = *g + dh;
    }
    let mut dctx = vec![T::zero(); ctx_len];
    matvec_t_acc(&w.dnn_w1, &dhidden, hp.classifier_hidden, ctx_len, &mut dctx);

    // Split the context gradient into the pooled part and the last hidden
    // state; route the pooled part to each channel's winning step.
    let mut dh_extra = vec![vec![T::zero(); k]; t_len];
    let dh_last_src = if hp.variant.has_maxpool() {
        let mut dfeat = vec![vec![T::zero(); d]; t_len];
        for ch in 0..d {
            dfeat[trace.win[ch]][ch] = dfeat[trace.win[ch]][ch] + dctx[ch];
        }
        for (t, df) in dfeat.iter().enumerate() {
            if df.iter().all(|&v| v == T::zero()) {
                continue;
            }
            let mut dq = df.clone();
            for (dqv, &pre) in dq.iter_mut().zip(&trace.feat_pre[t]) {
                if pre <= T::zero() {
                    *dqv = T::zero();
                }
            }
            outer_acc(&mut grads.fconv_w, &dq, &trace.gru[t].hidden);
            for (g, &v) in grads.fconv_b.iter_mut().zip(&dq) {
                *g = *g + v;
            }
            matvec_t_acc(&w.fconv_w, &dq, d, k, &mut dh_extra[t]);
        }
        &dctx[d..]
    } else {
        &dctx[..]
    };

    // Backprop through time.
    let input = hp.gru_input();
    let zero_hidden = vec![T::zero(); k];
    let mut dgru_in = vec![vec![T::zero(); input]; t_len];
    let mut dh: Vec<T> = dh_last_src.to_vec();
    for t in (0..t_len).rev() {
        let step = &trace.gru[t];
        let h_prev = if t == 0 {
            &zero_hidden
        } else {
            &trace.gru[t - 1].hidden
        };
        let x = &trace.gru_in[t];
        let mut dh_total = dh;
        for (v, &e) in dh_total.iter_mut().zip(&dh_extra[t]) {
            *v = *v + e;
        }

        let mut da_z = vec![T::zero(); k];
        let mut da_r = vec![T::zero(); k];
        let mut da_n = vec![T::zero(); k];
        let mut dh_prev = vec![T::zero(); k];
        for i in 0..k {
            let z = step.update[i];
            let r = step.reset[i];
            let n = step.candidate[i];
            let uh = step.hidden_cand[i];
            let g = dh_total[i];
            let dz = g * (h_prev[i] - n);
            let dn = g * (T::one() - z);
            dh_prev[i] = g * z;
            let dan = dn * (T::one() - n * n);
            da_n[i] = dan;
            let dr = dan * uh;
            da_r[i] = dr * r * (T::one() - r);
            da_z[i] = dz * z * (T::one() - z);
        }
        // Un h backprop: d(Un h) = da_n . r.
        let duh: Vec<T> = da_n.iter().zip(&step.reset).map(|(&a, &r)| a * r).collect();
        outer_acc(&mut grads.gru_un, &duh, h_prev);
        matvec_t_acc(&w.gru_un, &duh, k, k, &mut dh_prev);

        outer_acc(&mut grads.gru_wn, &da_n, x);
        outer_acc(&mut grads.gru_wz, &da_z, x);
        outer_acc(&mut grads.gru_wr, &da_r, x);
        outer_acc(&mut grads.gru_uz, &da_z, h_prev);
        outer_acc(&mut grads.gru_ur, &da_r, h_prev);
        for i in 0..k {
            grads.gru_bn[i] = grads.gru_bn[i] + da_n[i];
            grads.gru_bz[i] = grads.gru_bz[i] + da_z[i];
            grads.gru_br[i] = grads.gru_br[i] + da_r[i];
        }
        matvec_t_acc(&w.gru_uz, &da_z, k, k, &mut dh_prev);
        matvec_t_acc(&w.gru_ur, &da_r, k, k, &mut dh_prev);
        let dx = &mut dgru_in[t];
        matvec_t_acc(&w.gru_wn, &da_n, k, input, dx);
        matvec_t_acc(&w.gru_wz, &da_z, k, input, dx);
        matvec_t_acc(&w.gru_wr, &da_r, k, input, dx);

        dh = dh_prev;
    }
    dgru_in
}

/// Inference-mode BN backward: statistics are constants, so each element's
/// gradient is a plain scale, and the running stats get exact gradients of
/// their own.
fn bn_backward_inference<T: Real>(
    hp: &Hyperparams,
    w: &Weights<T>,
    trace: &ExampleTrace<T>,
    dg: &[Vec<T>],
    grads: &mut GradientSet<T>,
) -> Vec<Vec<T>> {
    let f = hp.freq_positions();
    let eps = T::of_f64(BN_EPS);
    let half = T::of_f64(0.5);
    let mut dr_all = Vec::with_capacity(dg.len());
    for (t, dgt) in dg.iter().enumerate() {
        let mut dr = vec![T::zero(); dgt.len()];
        for ch in 0..hp.conv_channels {
            let inv_std = T::one() / (w.bn_var[ch] + eps).sqrt();
            for p in 0..f {
                let i = ch * f + p;
                let g = dgt[i];
                let xh = trace.xhat[t][i];
                grads.bn_gamma[ch] = grads.bn_gamma[ch] + g * xh;
                grads.bn_beta[ch] = grads.bn_beta[ch] + g;
                dr[i] = g * w.bn_gamma[ch] * inv_std;
                grads.bn_mean[ch] = grads.bn_mean[ch] - g * w.bn_gamma[ch] * inv_std;
                grads.bn_var[ch] =
                    grads.bn_var[ch] - g * w.bn_gamma[ch] * xh * inv_std * inv_std * half;
            }
        }
        dr_all.push(dr);
    }
    dr_all
}

/// Accumulates conv weight and bias gradients from the gradient of the
/// post-ReLU conv activations.
fn conv_backward<T: Real>(
    hp: &Hyperparams,
    trace: &ExampleTrace<T>,
    dr: &[Vec<T>],
    grads: &mut GradientSet<T>,
) {
    let c = hp.conv_channels;
    let m = hp.conv_time;
    let n = hp.conv_freq;
    let f = hp.freq_positions();
    let sf = hp.stride_freq;
    for (t, drt) in dr.iter().enumerate() {
        for ch in 0..c {
            for p in 0..f {
                let i = ch * f + p;
                if trace.conv_pre[t][i] <= T::zero() {
                    continue;
                }
                let g = drt[i];
                if g == T::zero() {
                    continue;
                }
                grads.conv_b[ch] = grads.conv_b[ch] + g;
                for mi in 0..m {
                    let idx = t as isize - (m as isize - 1) + mi as isize;
                    if idx < 0 {
                        continue; // silence padding contributes nothing
                    }
                    let frame = &trace.frames[idx as usize];
                    let wrow = &mut grads.conv_w[(ch * m + mi) * n..(ch * m + mi + 1) * n];
                    for j in 0..n {
                        wrow[j] = wrow[j] + g * frame[p * sf + j];
                    }
                }
            }
        }
    }
}

/// Loss and exact gradients of one example against the inference-mode
/// forward pass. Fails on a non-finite result.
pub fn backward_example<T: Real>(
    hp: &Hyperparams,
    w: &Weights<T>,
    frames: &[Vec<T>],
    label: usize,
) -> Result<(T, GradientSet<T>), TrainError> {
    let trace = trace_inference(hp, w, frames.to_vec(), label);
    let mut grads = Weights::zeros(hp);
    let dg = backward_to_gru_inputs(hp, w, &trace, T::one(), &mut grads);
    if hp.variant.has_conv() {
        let dr = bn_backward_inference(hp, w, &trace, &dg, &mut grads);
        conv_backward(hp, &trace, &dr, &mut grads);
    }
    if !trace.loss.is_finite() || !grads.all_finite(hp) {
        return Err(TrainError::Diverged { epoch: 0, batch: 0 });
    }
    Ok((trace.loss, grads))
}

/// Result of one training batch.
pub struct BatchOutcome<T> {
    /// Mean loss over the batch.
    pub loss: T,
    pub grads: GradientSet<T>,
    /// Batch statistics (empty for variants without conv) for the running
    /// EMA update.
    pub bn_mean: Vec<T>,
    pub bn_var: Vec<T>,
}

/// Mean-loss forward/backward over a batch with batch-statistics batch norm.
/// Gradients flow through the statistics. Deterministic: parallel per-example
/// work is reduced in index order.
pub fn batch_forward_backward<T: Real>(
    hp: &Hyperparams,
    w: &Weights<T>,
    examples: &[(Vec<Vec<T>>, usize)],
) -> BatchOutcome<T> {
    let b = examples.len();
    assert!(b > 0);
    let scale = T::one() / T::of_usize(b);
    let has_conv = hp.variant.has_conv();

    let stages: Vec<ConvStage<T>> = examples
        .par_iter()
        .map(|(frames, _)| conv_stage(hp, w, frames))
        .collect();
    let (bn_mean, bn_var) = if has_conv {
        batch_bn_stats(hp, &stages)
    } else {
        (Vec::new(), Vec::new())
    };

    let traces: Vec<ExampleTrace<T>> = stages
        .into_par_iter()
        .zip(examples.par_iter())
        .map(|(stage, (frames, label))| {
            finish_trace(hp, w, frames.clone(), stage, &bn_mean, &bn_var, *label)
        })
        .collect();

    let partials: Vec<(GradientSet<T>, Vec<Vec<T>>)> = traces
        .par_iter()
        .map(|trace| {
            let mut grads = Weights::zeros(hp);
            let dg = backward_to_gru_inputs(hp, w, trace, scale, &mut grads);
            (grads, dg)
        })
        .collect();

    let mut grads = Weights::zeros(hp);
    for (partial, _) in &partials {
        grads.add_assign(hp, partial);
    }

    if has_conv {
        // BN backward through the batch statistics:
        // dr = gamma * inv_std / N * (N * dg - sum(dg) - xhat * sum(dg * xhat)).
        let c = hp.conv_channels;
        let f = hp.freq_positions();
        let eps = T::of_f64(BN_EPS);
        let count: usize = traces.iter().map(|tr| tr.xhat.len() * f).sum();
        let n = T::of_usize(count);
        let mut sum_dg = vec![T::zero(); c];
        let mut sum_dg_xhat = vec![T::zero(); c];
        for (trace, (_, dg)) in traces.iter().zip(&partials) {
            for (xh_t, dg_t) in trace.xhat.iter().zip(dg) {
                for ch in 0..c {
                    for p in 0..f {
                        let i = ch * f + p;
                        sum_dg[ch] = sum_dg[ch] + dg_t[i];
                        sum_dg_xhat[ch] = sum_dg_xhat[ch] + dg_t[i] * xh_t[i];
                    }
                }
            }
        }
        for ch in 0..c {
            grads.bn_gamma[ch] = grads.bn_gamma[ch] + sum_dg_xhat[ch];
            grads.bn_beta[ch] = grads.bn_beta[ch] + sum_dg[ch];
        }

        let conv_partials: Vec<GradientSet<T>> = traces
            .par_iter()
            .zip(partials.par_iter())
            .map(|(trace, (_, dg))| {
                let mut local = Weights::zeros(hp);
                let mut dr_all = Vec::with_capacity(dg.len());
                for (xh_t, dg_t) in trace.xhat.iter().zip(dg) {
                    let mut dr = vec![T::zero(); dg_t.len()];
                    for ch in 0..c {
                        let inv_std = T::one() / (bn_var[ch] + eps).sqrt();
                        let coef = w.bn_gamma[ch] * inv_std / n;
                        for p in 0..f {
                            let i = ch * f + p;
                            dr[i] = coef
                                * (n * dg_t[i] - sum_dg[ch] - xh_t[i] * sum_dg_xhat[ch]);
                        }
                    }
                    dr_all.push(dr);
                }
                conv_backward(hp, trace, &dr_all, &mut local);
                local
            })
            .collect();
        for partial in &conv_partials {
            grads.add_assign(hp, partial);
        }
    }

    let loss = traces.iter().map(|tr| tr.loss).sum::<T>() * scale;
    BatchOutcome {
        loss,
        grads,
        bn_mean,
        bn_var,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_hp(variant: Variant) -> Hyperparams {
        let mut hp = Hyperparams {
            variant,
            conv_channels: 8,
            conv_time: 3,
            conv_freq: 20,
            stride_time: 1,
            stride_freq: 10,
            gru_hidden: 16,
            feature_channels: 8,
            classifier_hidden: 12,
            n_classes: 5,
            n_mels: 40,
        };
        if !variant.has_conv() {
            hp.conv_channels = 0;
            hp.conv_time = 0;
            hp.conv_freq = 0;
        }
        if !variant.has_maxpool() {
            hp.feature_channels = 0;
        }
        hp
    }

    fn random_weights(hp: &Hyperparams, seed: u64) -> Weights<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w: Weights<f64> = Weights::init(hp, &mut rng);
        // Non-trivial running statistics so their gradients are exercised.
        if hp.variant.has_conv() {
            for v in w.bn_mean.iter_mut() {
                *v = rng.random_range(-0.2..0.2);
            }
            for v in w.bn_var.iter_mut() {
                *v = rng.random_range(0.5..1.5);
            }
            for v in w.bn_beta.iter_mut() {
                *v = rng.random_range(-0.2..0.2);
            }
            for v in w.bn_gamma.iter_mut() {
                *v = rng.random_range(0.7..1.3);
            }
        }
        w
    }

    fn random_frames(t: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..t)
            .map(|_| (0..40).map(|_| rng.random_range(0.0..0.6)).collect())
            .collect()
    }

    fn check_grad(name: &str, analytic: f64, numeric: f64) {
        let diff = (analytic - numeric).abs();
        let tol = 1e-6f64.max(1e-4 * analytic.abs().max(numeric.abs()));
        assert!(
            diff <= tol,
            "{name}: analytic {analytic:.3e} vs numeric {numeric:.3e} (diff {diff:.3e})"
        );
    }

    /// Central finite differences of the per-example loss, every tensor.
    fn finite_difference_check(variant: Variant, seed: u64) {
        let hp = fd_hp(variant);
        let w = random_weights(&hp, seed);
        let frames = random_frames(6, seed + 1);
        let label = 2;
        let (_, grads) = backward_example(&hp, &w, &frames, label).unwrap();
        let h = 1e-6;
        for spec in hp.tensor_specs() {
            let len = spec.elems();
            for idx in 0..len {
                let mut wp = w.clone();
                wp.tensor_mut(spec.name).unwrap()[idx] += h;
                let up = trace_inference(&hp, &wp, frames.clone(), label).loss;
                let mut wm = w.clone();
                wm.tensor_mut(spec.name).unwrap()[idx] -= h;
                let down = trace_inference(&hp, &wm, frames.clone(), label).loss;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.tensor(spec.name).unwrap()[idx];
                check_grad(&format!("{}[{}]", spec.name, idx), analytic, numeric);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_crnn_max() {
        finite_difference_check(Variant::CrnnMax, 81);
    }

    #[test]
    fn gradients_match_finite_differences_crnn() {
        finite_difference_check(Variant::Crnn, 82);
    }

    #[test]
    fn gradients_match_finite_differences_rnn_max() {
        finite_difference_check(Variant::RnnMax, 83);
    }

    #[test]
    fn batch_mode_gradients_flow_through_batch_statistics() {
        let hp = fd_hp(Variant::CrnnMax);
        let w = random_weights(&hp, 84);
        let examples = vec![
            (random_frames(5, 85), 1usize),
            (random_frames(7, 86), 3usize),
        ];
        let outcome = batch_forward_backward(&hp, &w, &examples);
        let h = 1e-6;
        let batch_loss = |w: &Weights<f64>| -> f64 {
            let stages: Vec<ConvStage<f64>> =
                examples.iter().map(|(f, _)| conv_stage(&hp, w, f)).collect();
            let (mu, var) = batch_bn_stats(&hp, &stages);
            let mut total = 0.0;
            for (stage, (frames, label)) in stages.into_iter().zip(&examples) {
                total += finish_trace(&hp, w, frames.clone(), stage, &mu, &var, *label).loss;
            }
            total / examples.len() as f64
        };
        for spec in hp.tensor_specs() {
            if spec.name == "bn_mean" || spec.name == "bn_var" {
                // Running stats are not inputs of the batch-mode loss.
                continue;
            }
            let len = spec.elems();
            // Spot-check a deterministic subset to keep the test quick.
            let stride = (len / 40).max(1);
            for idx in (0..len).step_by(stride) {
                let mut wp = w.clone();
                wp.tensor_mut(spec.name).unwrap()[idx] += h;
                let up = batch_loss(&wp);
                let mut wm = w.clone();
                wm.tensor_mut(spec.name).unwrap()[idx] -= h;
                let down = batch_loss(&wm);
                let numeric = (up - down) / (2.0 * h);
                let analytic = outcome.grads.tensor(spec.name).unwrap()[idx];
                check_grad(&format!("batch {}[{}]", spec.name, idx), analytic, numeric);
            }
        }
    }

    #[test]
    fn zero_weight_softmax_bias_gradient_is_probs_minus_onehot() {
        let hp = fd_hp(Variant::CrnnMax);
        let mut w: Weights<f64> = Weights::zeros(&hp);
        w.bn_gamma.fill(1.0);
        w.bn_var.fill(1.0);
        let frames = random_frames(4, 87);
        let label = 3;
        let (loss, grads) = backward_example(&hp, &w, &frames, label).unwrap();
        assert!((loss - (5.0f64).ln()).abs() < 1e-12);
        for (i, &g) in grads.dnn_b2.iter().enumerate() {
            let expected = 0.2 - if i == label { 1.0 } else { 0.0 };
            assert!((g - expected).abs() < 1e-12, "class {i}: {g}");
        }
    }

    #[test]
    fn perturbing_a_losing_feature_leaves_the_loss_unchanged() {
        let hp = fd_hp(Variant::CrnnMax);
        let w = random_weights(&hp, 88);
        let frames = random_frames(6, 89);
        let label = 1;
        let trace = trace_inference(&hp, &w, frames, label);
        let d = hp.feature_channels;
        let feats: Vec<Vec<f64>> = trace
            .feat_pre
            .iter()
            .map(|q| q.iter().map(|&v| v.max(0.0)).collect())
            .collect();

        // Loss as a function of the per-step features, through the real
        // pooling and classifier path.
        let h_last = &trace.gru.last().unwrap().hidden;
        let loss_of = |feats: &[Vec<f64>]| -> f64 {
            let mut cmax = vec![f64::NEG_INFINITY; d];
            for f in feats {
                crate::model::forward::maxpool_update(&mut cmax, f);
            }
            let ctx = crate::model::forward::context_vector(&hp, &cmax, h_last);
            let logits = crate::model::forward::classifier_logits(&hp, &w, &ctx);
            cross_entropy_from_logits(&logits, label)
        };
        let base = loss_of(&feats);

        // Channel 0: bump the runner-up by half the winning margin.
        let win = trace.win[0];
        let (runner_t, runner_val) = feats
            .iter()
            .enumerate()
            .filter(|(t, _)| *t != win)
            .map(|(t, f)| (t, f[0]))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        let gap = feats[win][0] - runner_val;
        assert!(gap > 0.0);

        let mut bumped = feats.clone();
        bumped[runner_t][0] += gap * 0.5;
        assert_eq!(loss_of(&bumped), base);

        // Bumping the winner itself does move the loss.
        let mut bumped = feats;
        bumped[win][0] += gap;
        assert_ne!(loss_of(&bumped), base);
    }

    #[test]
    fn weight_decay_equals_l2_penalty_gradient() {
        // Adding wd * w to the gradient must equal differentiating
        // loss + (wd / 2) * ||w||^2; checked by finite differences on a
        // single tensor entry.
        let hp = fd_hp(Variant::Crnn);
        let w = random_weights(&hp, 90);
        let frames = random_frames(5, 91);
        let wd = 1e-4;
        let (_, grads) = backward_example(&hp, &w, &frames, 2).unwrap();
        let h = 1e-6;
        let reg_loss = |w: &Weights<f64>| -> f64 {
            let base = trace_inference(&hp, w, frames.clone(), 2).loss;
            let mut norm = 0.0;
            for spec in hp.tensor_specs() {
                if spec.role == crate::model::TensorRole::Trainable {
                    norm += w
                        .tensor(spec.name)
                        .unwrap()
                        .iter()
                        .map(|v| v * v)
                        .sum::<f64>();
                }
            }
            base + wd / 2.0 * norm
        };
        for (name, idx) in [("gru_wz", 7usize), ("dnn_w1", 11), ("conv_w", 13)] {
            let mut wp = w.clone();
            wp.tensor_mut(name).unwrap()[idx] += h;
            let mut wm = w.clone();
            wm.tensor_mut(name).unwrap()[idx] -= h;
            let numeric = (reg_loss(&wp) - reg_loss(&wm)) / (2.0 * h);
            let analytic = grads.tensor(name).unwrap()[idx] + wd * w.tensor(name).unwrap()[idx];
            check_grad(&format!("wd {name}[{idx}]"), analytic, numeric);
        }
    }
}

//! Synthetic tone-pattern corpora for end-to-end experiments.
//!
//! Each query class is a fixed temporal pattern of three tone segments whose
//! frequencies come from a small grid; the unknown class is noise, chirps and
//! random tone mixtures. The task is learnable by construction while still
//! exercising the full audio pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::Waveform;

/// Corpus shape: `classes` query classes with `per_class` clips each, plus
/// `unknown` noise clips labeled `classes`.
#[derive(Debug, Clone, Copy)]
pub struct CorpusSpec {
    pub classes: usize,
    pub per_class: usize,
    pub unknown: usize,
    pub seed: u64,
}

/// Segment frequencies of one query class: a 4 x 3 grid of first/second tones
/// with the third segment returning to the first, so every class has a
/// distinct temporal pattern.
pub fn class_pattern(class: usize) -> [f32; 3] {
    let first = 500.0 + 400.0 * (class % 4) as f32;
    let second = 2200.0 + 450.0 * ((class / 4) % 3) as f32;
    [first, second, first * 1.5]
}

fn render_tone(samples: &mut [f32], freq: f32, amp: f32, phase0: f32) {
    for (i, s) in samples.iter_mut().enumerate() {
        let t = i as f32 / 16_000.0;
        *s += amp * (2.0 * std::f32::consts::PI * freq * t + phase0).sin();
    }
}

/// One clip of a query class: three tone segments with jittered timing,
/// amplitude and frequency, over a low noise floor.
pub fn query_clip(class: usize, rng: &mut ChaCha8Rng) -> Waveform {
    let total = rng.random_range(11_200..15_200); // 0.7 to 0.95 s
    let mut samples = vec![0.0f32; total];
    for s in samples.iter_mut() {
        *s = rng.random_range(-0.01..0.01);
    }
    let pattern = class_pattern(class);
    let lead = rng.random_range(0..800);
    let seg_len = (total - lead) / 3;
    for (seg, &freq) in pattern.iter().enumerate() {
        let start = lead + seg * seg_len;
        let len = if seg == 2 { total - start } else { seg_len };
        let jitter = rng.random_range(0.98..1.02);
        let amp = rng.random_range(0.25..0.5);
        let phase = rng.random_range(0.0..std::f32::consts::TAU);
        render_tone(&mut samples[start..start + len], freq * jitter, amp, phase);
    }
    for s in samples.iter_mut() {
        *s = s.clamp(-1.0, 1.0);
    }
    Waveform::new(samples).unwrap()
}

/// One unknown clip: white noise, a chirp, or a random tone mixture.
pub fn unknown_clip(rng: &mut ChaCha8Rng) -> Waveform {
    let total = rng.random_range(11_200..15_200);
    let mut samples = vec![0.0f32; total];
    match rng.random_range(0..3) {
        0 => {
            let amp = rng.random_range(0.1..0.4);
            for s in samples.iter_mut() {
                *s = rng.random_range(-amp..amp);
            }
        }
        1 => {
            // Linear chirp across the band.
            let f0 = rng.random_range(200.0..1000.0f32);
            let f1 = rng.random_range(2500.0..5000.0f32);
            let amp = rng.random_range(0.2..0.5);
            let dur = total as f32 / 16_000.0;
            for (i, s) in samples.iter_mut().enumerate() {
                let t = i as f32 / 16_000.0;
                let phase =
                    2.0 * std::f32::consts::PI * (f0 * t + (f1 - f0) * t * t / (2.0 * dur));
                *s = amp * phase.sin() + rng.random_range(-0.01..0.01);
            }
        }
        _ => {
            // A handful of random tones with random spans.
            for _ in 0..rng.random_range(3..6) {
                let freq = rng.random_range(150.0..6000.0f32);
                let amp = rng.random_range(0.05..0.2);
                let start = rng.random_range(0..total / 2);
                let end = rng.random_range(start + total / 4..total);
                let phase = rng.random_range(0.0..std::f32::consts::TAU);
                render_tone(&mut samples[start..end], freq, amp, phase);
            }
        }
    }
    for s in samples.iter_mut() {
        *s = s.clamp(-1.0, 1.0);
    }
    Waveform::new(samples).unwrap()
}

/// Generates the whole corpus, grouped by class (query classes first, then
/// the unknown block), deterministic in the seed.
pub fn generate_corpus(spec: &CorpusSpec) -> Vec<(Waveform, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.classes * spec.per_class + spec.unknown);
    for class in 0..spec.classes {
        for _ in 0..spec.per_class {
            out.push((query_clip(class, &mut rng), class));
        }
    }
    for _ in 0..spec.unknown {
        out.push((unknown_clip(&mut rng), spec.classes));
    }
    out
}

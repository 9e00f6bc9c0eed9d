//! Training-time waveform augmentation: additive noise, band suppression and
//! pitch shifting, each applied independently at random.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{num_complex::Complex, FftPlanner};

use crate::audio::Waveform;

/// Probability of applying each transform plus its parameter ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Std of the additive Gaussian noise, unit scale.
    pub gauss_sigma: f32,
    /// Per-sample probability of a full-scale salt-and-pepper click.
    pub sp_prob: f64,
    /// Lower band edge `a` is drawn uniformly from here (Hz).
    pub band_low_range: (f32, f32),
    /// Upper band edge `b` is drawn uniformly from here (Hz).
    pub band_high_range: (f32, f32),
    /// Attenuation applied to content outside `[a, b]`.
    pub suppress_factor: f32,
    /// Magnitude of the pitch shift (Hz); sign is a fair coin.
    pub pitch_shift_hz: f32,
    pub apply_noise: f64,
    pub apply_band: f64,
    pub apply_pitch: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            gauss_sigma: 0.01,
            sp_prob: 0.005,
            band_low_range: (0.0, 1700.0),
            band_high_range: (1800.0, 3300.0),
            suppress_factor: 0.5,
            pitch_shift_hz: 33.0,
            apply_noise: 0.5,
            apply_band: 0.5,
            apply_pitch: 0.5,
        }
    }
}

/// Additive Gaussian noise (clipped to `[-1, 1]`), then salt-and-pepper
/// clicks: a fraction `sp_prob` of samples replaced by full-scale extremes
/// with a fair coin for the sign.
pub fn add_noise<R: Rng>(w: &Waveform, sigma: f32, sp_prob: f64, rng: &mut R) -> Waveform {
    let mut samples = w.samples.clone();
    if sigma > 0.0 {
        let normal = Normal::new(0.0f32, sigma).expect("sigma >= 0");
        for s in samples.iter_mut() {
            *s = (*s + normal.sample(rng)).clamp(-1.0, 1.0);
        }
    }
    if sp_prob > 0.0 {
        for s in samples.iter_mut() {
            if rng.random_bool(sp_prob) {
                *s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            }
        }
    }
    Waveform {
        samples,
        sample_rate: w.sample_rate,
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AugmentError {
    #[error("invalid band [{0}, {1}] Hz")]
    InvalidBand(f32, f32),
}

fn fft_round_trip(samples: &[f32], edit: impl Fn(usize, f64, &mut Complex<f64>)) -> Vec<f32> {
    let n = samples.len();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&s| Complex::new(s as f64, 0.0)).collect();
    forward.process(&mut buf);
    let bin_hz = 16_000.0 / n as f64;
    for (i, v) in buf.iter_mut().enumerate() {
        // Frequency of bin i (mirror half maps to its positive alias).
        let freq = if i <= n / 2 { i as f64 } else { (n - i) as f64 } * bin_hz;
        edit(i, freq, v);
    }
    inverse.process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|v| (v.re * scale) as f32).collect()
}

/// Scales every frequency component outside `[a, b]` by `factor`
/// (frequency-domain mask; content inside the band is untouched).
pub fn band_suppress(w: &Waveform, a: f32, b: f32, factor: f32) -> Result<Waveform, AugmentError> {
    if !(0.0..8000.0).contains(&a) || b <= a || b > 8000.0 {
        return Err(AugmentError::InvalidBand(a, b));
    }
    let samples = fft_round_trip(&w.samples, |_i, freq, v| {
        if freq < a as f64 || freq > b as f64 {
            *v *= factor as f64;
        }
    });
    Ok(Waveform {
        samples,
        sample_rate: w.sample_rate,
    })
}

/// Translates the whole spectrum by `delta_hz` (rounded to the nearest FFT
/// bin), moving a tone at `f` to `f + delta_hz`. Duration is preserved
/// exactly.
pub fn pitch_shift(w: &Waveform, delta_hz: f32) -> Waveform {
    let n = w.samples.len();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = w.samples.iter().map(|&s| Complex::new(s as f64, 0.0)).collect();
    forward.process(&mut buf);

    let bin_hz = 16_000.0 / n as f64;
    let shift = (delta_hz as f64 / bin_hz).round() as isize;
    let half = n / 2;
    let mut shifted = vec![Complex::new(0.0, 0.0); n];
    for i in 0..=half {
        let j = i as isize + shift;
        if (0..=half as isize).contains(&j) {
            shifted[j as usize] = buf[i];
        }
    }
    // Restore conjugate symmetry so the inverse transform is real.
    for j in 1..n - half {
        shifted[n - j] = shifted[j].conj();
    }
    inverse.process(&mut shifted);
    let scale = 1.0 / n as f64;
    Waveform {
        samples: shifted.iter().map(|v| (v.re * scale) as f32).collect(),
        sample_rate: w.sample_rate,
    }
}

/// Applies the three transforms in order (noise, band suppression, pitch
/// shift), each with its own probability and fresh random parameters.
/// Deterministic given the RNG state.
pub fn augment<R: Rng>(w: &Waveform, cfg: &AugmentConfig, rng: &mut R) -> Waveform {
    let mut out = w.clone();
    if cfg.apply_noise > 0.0 && rng.random_bool(cfg.apply_noise) {
        out = add_noise(&out, cfg.gauss_sigma, cfg.sp_prob, rng);
    }
    if cfg.apply_band > 0.0 && rng.random_bool(cfg.apply_band) {
        let a = rng.random_range(cfg.band_low_range.0..=cfg.band_low_range.1);
        let b = rng.random_range(cfg.band_high_range.0..=cfg.band_high_range.1);
        out = band_suppress(&out, a, b, cfg.suppress_factor).expect("configured ranges are valid");
    }
    if cfg.apply_pitch > 0.0 && rng.random_bool(cfg.apply_pitch) {
        let delta = if rng.random_bool(0.5) {
            cfg.pitch_shift_hz
        } else {
            -cfg.pitch_shift_hz
        };
        out = pitch_shift(&out, delta);
    }
    out
}

//! Hann-windowed power spectrum and a 40-channel triangular mel filterbank
//! (HTK scale, 0 to Nyquist).

use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters stored sparsely as `(bin, weight)` per channel.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub n_channels: usize,
    filters: Vec<Vec<(usize, f64)>>,
    /// Center frequency per channel, for diagnostics.
    pub centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_channels: usize, fft_size: usize, sample_rate: u32) -> Self {
        let n_bins = fft_size / 2 + 1;
        let nyquist = sample_rate as f64 / 2.0;
        let mel_max = hz_to_mel(nyquist);
        // n_channels triangles need n_channels + 2 edge points.
        let points_hz: Vec<f64> = (0..n_channels + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (n_channels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / fft_size as f64;
        let mut filters = Vec::with_capacity(n_channels);
        for ch in 0..n_channels {
            let (lo, center, hi) = (points_hz[ch], points_hz[ch + 1], points_hz[ch + 2]);
            let mut taps = Vec::new();
            for bin in 0..n_bins {
                let f = bin as f64 * bin_hz;
                let w = ((f - lo) / (center - lo)).min((hi - f) / (hi - center));
                if w > 0.0 {
                    taps.push((bin, w));
                }
            }
            filters.push(taps);
        }
        MelFilterbank {
            n_channels,
            filters,
            centers_hz: points_hz[1..=n_channels].to_vec(),
        }
    }

    /// Triangle-weighted sums of a one-sided power spectrum.
    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_channels);
        for (ch, taps) in self.filters.iter().enumerate() {
            let mut acc = 0.0;
            for &(bin, w) in taps {
                acc += w * power[bin];
            }
            out[ch] = acc;
        }
    }
}

/// Windowed FFT front half: Hann window, zero-pad to `fft_size`, one-sided
/// power spectrum.
pub struct SpectrumAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    fft_size: usize,
}

impl SpectrumAnalyzer {
    pub fn new(window_len: usize, fft_size: usize) -> Self {
        assert!(fft_size >= window_len);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(fft_size);
        // Periodic Hann window.
        let window = (0..window_len)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / window_len as f64).cos())
            .collect();
        SpectrumAnalyzer {
            fft,
            window,
            fft_size,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Power spectrum of one frame of samples (length = window length).
    pub fn power_spectrum(&self, samples: &[f32], out: &mut [f64]) {
        debug_assert_eq!(samples.len(), self.window.len());
        debug_assert_eq!(out.len(), self.n_bins());
        let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); self.fft_size];
        for (i, (&s, &w)) in samples.iter().zip(&self.window).enumerate() {
            buf[i] = Complex::new(s as f64 * w, 0.0);
        }
        self.fft.process(&mut buf);
        for (i, o) in out.iter_mut().enumerate() {
            *o = buf[i].norm_sqr();
        }
    }
}

// SpectrumAnalyzer holds an Arc<dyn Fft> which is Send + Sync; the scratch
// buffer is allocated per call so &self use is thread-safe.

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_channel_has_taps() {
        let fb = MelFilterbank::new(40, 512, 16_000);
        for (ch, taps) in fb.filters.iter().enumerate() {
            assert!(!taps.is_empty(), "channel {ch} covers no bins");
        }
        assert!(fb.centers_hz[0] > 0.0);
        assert!(fb.centers_hz[39] < 8000.0);
    }

    #[test]
    fn centers_are_increasing() {
        let fb = MelFilterbank::new(40, 512, 16_000);
        for pair in fb.centers_hz.windows(2) {
            assert!(pair[0] < pair[1]);
        }
    }

    #[test]
    fn power_spectrum_of_dc_free_tone_peaks_at_tone_bin() {
        let an = SpectrumAnalyzer::new(480, 512);
        // 1 kHz at 16 kHz: bin 1000 / (16000 / 512) = 32.
        let samples: Vec<f32> = (0..480)
            .map(|i| (2.0 * std::f32::consts::PI * 1000.0 * i as f32 / 16_000.0).sin())
            .collect();
        let mut power = vec![0.0; an.n_bins()];
        an.power_spectrum(&samples, &mut power);
        let argmax = power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!((argmax as i64 - 32).unsigned_abs() <= 1, "argmax = {argmax}");
    }
}

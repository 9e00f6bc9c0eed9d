//! Audio frontend: 30 ms windows every 10 ms, mel energies, PCEN frames.
//!
//! The offline path ([`Frontend::pcen_full`]) is literally the fold of the
//! streaming path over the same windows, so batch and streaming features are
//! bit-identical.

mod mel;
mod pcen;

pub use mel::{MelFilterbank, SpectrumAnalyzer};
pub use pcen::{pcen_step, PcenConfig, PcenState};

use thiserror::Error;

use crate::audio::Waveform;

/// One 40-dim normalized feature frame.
pub type PcenFrame = Vec<f32>;

#[derive(Debug, Error, PartialEq)]
pub enum FrontendError {
    #[error("audio too short: {got} samples, need at least {need} for one window")]
    TooShort { got: usize, need: usize },
}

/// Frame geometry. With the defaults: 480-sample windows, 160-sample hop,
/// zero-padded to a 512-point FFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameConfig {
    pub window_ms: u32,
    pub hop_ms: u32,
    pub sample_rate: u32,
    pub n_mels: usize,
    pub fft_size: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            window_ms: 30,
            hop_ms: 10,
            sample_rate: 16_000,
            n_mels: 40,
            fft_size: 512,
        }
    }
}

impl FrameConfig {
    pub fn window_samples(&self) -> usize {
        (self.sample_rate / 1000 * self.window_ms) as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.sample_rate / 1000 * self.hop_ms) as usize
    }

    /// Frames available from `len` samples: `floor((len - window) / hop) + 1`.
    pub fn frame_count(&self, len: usize) -> Result<usize, FrontendError> {
        let window = self.window_samples();
        if len < window {
            return Err(FrontendError::TooShort { got: len, need: window });
        }
        Ok((len - window) / self.hop_samples() + 1)
    }
}

/// Shared, read-only feature extractor: FFT plan, mel filterbank and PCEN
/// constants. Per-stream mutable state lives in [`PcenState`].
pub struct Frontend {
    pub frame: FrameConfig,
    pub pcen: PcenConfig,
    analyzer: SpectrumAnalyzer,
    filterbank: MelFilterbank,
}

impl Frontend {
    pub fn new(frame: FrameConfig, pcen: PcenConfig) -> Self {
        assert!(frame.fft_size >= frame.window_samples());
        pcen.validate().expect("PCEN constants");
        Frontend {
            frame,
            pcen,
            analyzer: SpectrumAnalyzer::new(frame.window_samples(), frame.fft_size),
            filterbank: MelFilterbank::new(frame.n_mels, frame.fft_size, frame.sample_rate),
        }
    }

    pub fn with_defaults() -> Self {
        Self::new(FrameConfig::default(), PcenConfig::default())
    }

    /// Splits a waveform into overlapping analysis windows; window `t` covers
    /// samples `[hop * t, hop * t + window)`.
    pub fn frame_signal<'a>(&self, w: &'a Waveform) -> Result<Vec<&'a [f32]>, FrontendError> {
        let count = self.frame.frame_count(w.len())?;
        let window = self.frame.window_samples();
        let hop = self.frame.hop_samples();
        Ok((0..count).map(|t| &w.samples[t * hop..t * hop + window]).collect())
    }

    /// Mel energies of one analysis window (triangle-weighted power spectrum).
    pub fn mel_energies(&self, window: &[f32]) -> Vec<f64> {
        let mut power = vec![0.0; self.analyzer.n_bins()];
        self.analyzer.power_spectrum(window, &mut power);
        let mut out = vec![0.0; self.frame.n_mels];
        self.filterbank.apply(&power, &mut out);
        out
    }

    /// Advances one PCEN step; see [`pcen_step`].
    pub fn pcen_step(&self, state: &mut PcenState, energies: &[f64]) -> PcenFrame {
        pcen_step(&self.pcen, state, energies)
    }

    pub fn new_pcen_state(&self) -> PcenState {
        PcenState::new(self.frame.n_mels)
    }

    /// Whole-clip features: the streaming fold with a fresh smoother state.
    pub fn pcen_full(&self, w: &Waveform) -> Result<Vec<PcenFrame>, FrontendError> {
        let windows = self.frame_signal(w)?;
        let mut state = self.new_pcen_state();
        Ok(windows
            .into_iter()
            .map(|win| {
                let e = self.mel_energies(win);
                self.pcen_step(&mut state, &e)
            })
            .collect())
    }

    pub fn mel_centers_hz(&self) -> &[f64] {
        &self.filterbank.centers_hz
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tone(freq: f32, len: usize, amp: f32) -> Waveform {
        Waveform::new(
            (0..len)
                .map(|i| amp * (2.0 * std::f32::consts::PI * freq * i as f32 / 16_000.0).sin())
                .collect(),
        )
        .unwrap()
    }

    fn noise(len: usize, rng: &mut ChaCha8Rng) -> Waveform {
        Waveform::new((0..len).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap()
    }

    #[test]
    fn frame_counts() {
        let fe = Frontend::with_defaults();
        assert_eq!(fe.frame_signal(&tone(440.0, 480, 0.5)).unwrap().len(), 1);
        assert_eq!(fe.frame_signal(&tone(440.0, 16_000, 0.5)).unwrap().len(), 98);
        assert_eq!(
            fe.frame_signal(&tone(440.0, 479, 0.5)).unwrap_err(),
            FrontendError::TooShort { got: 479, need: 480 }
        );
    }

    #[test]
    fn window_offsets_cover_the_right_samples() {
        let fe = Frontend::with_defaults();
        let w = Waveform::new((0..2000).map(|i| i as f32 / 32768.0).collect()).unwrap();
        let frames = fe.frame_signal(&w).unwrap();
        assert_eq!(frames.len(), (2000 - 480) / 160 + 1);
        for (t, frame) in frames.iter().enumerate() {
            assert_eq!(frame[0], (t * 160) as f32 / 32768.0);
            assert_eq!(frame[479], (t * 160 + 479) as f32 / 32768.0);
        }
    }

    #[test]
    fn zero_window_gives_zero_energies() {
        let fe = Frontend::with_defaults();
        let e = fe.mel_energies(&[0.0; 480]);
        assert!(e.iter().all(|&v| v == 0.0));
    }

    /// Independent oracle: naive DFT plus an independently computed
    /// triangular filterbank.
    fn oracle_mel_argmax(window: &[f32]) -> usize {
        let n = 512;
        let hann: Vec<f64> = (0..480)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / 480.0).cos())
            .collect();
        let padded: Vec<f64> = (0..n)
            .map(|i| if i < 480 { window[i] as f64 * hann[i] } else { 0.0 })
            .collect();
        let mut power = vec![0.0; n / 2 + 1];
        for (k, p) in power.iter_mut().enumerate() {
            let mut re = 0.0;
            let mut im = 0.0;
            for (i, &x) in padded.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            *p = re * re + im * im;
        }
        let mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
        let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
        let top = mel(8000.0);
        let pts: Vec<f64> = (0..42).map(|i| inv(top * i as f64 / 41.0)).collect();
        let mut best = (0, f64::MIN);
        for ch in 0..40 {
            let mut acc = 0.0;
            for (k, &p) in power.iter().enumerate() {
                let f = k as f64 * 16_000.0 / n as f64;
                let w = ((f - pts[ch]) / (pts[ch + 1] - pts[ch]))
                    .min((pts[ch + 2] - f) / (pts[ch + 2] - pts[ch + 1]));
                if w > 0.0 {
                    acc += w * p;
                }
            }
            if acc > best.1 {
                best = (ch, acc);
            }
        }
        best.0
    }

    #[test]
    fn pure_tone_energy_lands_in_the_right_channel() {
        let fe = Frontend::with_defaults();
        let w = tone(1000.0, 480, 0.5);
        let e = fe.mel_energies(&w.samples);
        let argmax = e
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, oracle_mel_argmax(&w.samples));
        // And that channel's center frequency brackets 1 kHz loosely.
        let center = fe.mel_centers_hz()[argmax];
        assert!((800.0..1250.0).contains(&center), "center {center}");
    }

    #[test]
    fn white_noise_excites_every_channel() {
        let fe = Frontend::with_defaults();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let w = noise(480, &mut rng);
            let e = fe.mel_energies(&w.samples);
            assert!(e.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn offline_equals_streaming_fold_bitwise() {
        let fe = Frontend::with_defaults();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..50 {
            let len = rng.random_range(480..8000);
            let w = noise(len, &mut rng);
            let offline = fe.pcen_full(&w).unwrap();
            let mut state = fe.new_pcen_state();
            let folded: Vec<PcenFrame> = fe
                .frame_signal(&w)
                .unwrap()
                .into_iter()
                .map(|win| {
                    let e = fe.mel_energies(win);
                    fe.pcen_step(&mut state, &e)
                })
                .collect();
            assert_eq!(offline, folded);
        }
    }

    #[test]
    fn one_second_is_98_by_40_and_silence_is_zero() {
        let fe = Frontend::with_defaults();
        let frames = fe.pcen_full(&tone(440.0, 16_000, 0.3)).unwrap();
        assert_eq!(frames.len(), 98);
        assert!(frames.iter().all(|f| f.len() == 40));

        let silent = Waveform::new(vec![0.0; 16_000]).unwrap();
        let frames = fe.pcen_full(&silent).unwrap();
        assert!(frames.iter().all(|f| f.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn pcen_output_is_non_negative() {
        let fe = Frontend::with_defaults();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let w = noise(4800, &mut rng);
        for frame in fe.pcen_full(&w).unwrap() {
            assert!(frame.iter().all(|&v| v >= 0.0));
        }
    }
}

//! Per-channel energy normalization.
//!
//! Each mel channel is normalized by a first-order smoothed energy estimate:
//!
//! ```text
//! m'   = (1 - s) * m + s * e          (m' = e on the first frame)
//! out  = (e / (eps + m')^alpha + delta)^r - delta^r
//! ```
//!
//! The smoother runs in f64 so the recurrence tracks a high-precision
//! reference to well below 1e-6 relative; emitted frames are f32.

/// PCEN constants. The defaults are the standard published values; the
/// gain stage is not trained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcenConfig {
    /// Smoothing coefficient `s` in `(0, 1]`.
    pub smoothing: f64,
    /// Gain exponent `alpha` in `(0, 1]`.
    pub gain: f64,
    /// Bias `delta > 0`.
    pub bias: f64,
    /// Root exponent `r` in `(0, 1]`.
    pub root: f64,
    /// Stabilizer `eps > 0`.
    pub eps: f64,
}

impl Default for PcenConfig {
    fn default() -> Self {
        PcenConfig {
            smoothing: 0.025,
            gain: 0.98,
            bias: 2.0,
            root: 0.5,
            eps: 1e-6,
        }
    }
}

impl PcenConfig {
    pub fn validate(&self) -> Result<(), String> {
        let ok = self.smoothing > 0.0
            && self.smoothing <= 1.0
            && self.gain > 0.0
            && self.gain <= 1.0
            && self.bias > 0.0
            && self.root > 0.0
            && self.root <= 1.0
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(format!("invalid PCEN constants: {self:?}"))
        }
    }
}

/// Per-stream smoother state: one value per mel channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PcenState {
    m: Vec<f64>,
    initialized: bool,
}

impl PcenState {
    pub fn new(n_channels: usize) -> Self {
        PcenState {
            m: vec![0.0; n_channels],
            initialized: false,
        }
    }

    pub fn smoother(&self) -> &[f64] {
        &self.m
    }

    /// Serialized size of the smoother in bytes.
    pub fn size_bytes(&self) -> usize {
        self.m.len() * std::mem::size_of::<f64>()
    }
}

/// Advances the smoother by one energy frame and returns the normalized
/// 40-dim feature frame. Energies must be non-negative.
pub fn pcen_step(cfg: &PcenConfig, state: &mut PcenState, energies: &[f64]) -> Vec<f32> {
    debug_assert_eq!(energies.len(), state.m.len());
    let delta_r = cfg.bias.powf(cfg.root);
    let mut out = Vec::with_capacity(energies.len());
    if state.initialized {
        for (m, &e) in state.m.iter_mut().zip(energies) {
            *m = (1.0 - cfg.smoothing) * *m + cfg.smoothing * e;
        }
    } else {
        state.m.copy_from_slice(energies);
        state.initialized = true;
    }
    for (&m, &e) in state.m.iter().zip(energies) {
        let v = (e / (cfg.eps + m).powf(cfg.gain) + cfg.bias).powf(cfg.root) - delta_r;
        out.push(v as f32);
    }
    out
}

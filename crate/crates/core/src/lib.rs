//! Streaming voice-query recognition engine.
//!
//! An audio clip is classified as one of `N + 1` classes: `N` known queries
//! plus a trailing "unknown" class. The pipeline is:
//!
//! 1. [`audio`] / [`manifest`] — WAV ingestion and dataset manifests.
//! 2. [`frontend`] — 40-channel mel + per-channel energy normalization (PCEN),
//!    streamable one 10 ms hop at a time.
//! 3. [`model`] — causal convolution, uni-directional GRU, feature convolution
//!    with max-pooling across time, and a small DNN classifier.
//! 4. [`training`] — SGD with momentum, exact hand-written backpropagation.
//! 5. [`streaming`] — constant-time, constant-space incremental inference with
//!    periodic predictions over unbounded audio.
//! 6. [`eval`] — FAR/QER metrics, global-threshold rejection, ROC sweeps.
//!
//! [`augment`] provides training-time waveform augmentation and [`synth`]
//! generates synthetic tone-pattern corpora for end-to-end experiments.

pub mod audio;
pub mod augment;
pub mod eval;
pub mod frontend;
pub mod linalg;
pub mod manifest;
pub mod model;
pub mod streaming;
pub mod synth;
pub mod training;
pub mod weights_io;

pub use audio::Waveform;
pub use frontend::{FrameConfig, Frontend, PcenConfig, PcenState};
pub use manifest::DatasetManifest;
pub use model::{Hyperparams, Variant, Weights};
pub use streaming::{Prediction, StreamEngine, StreamState};

//! Constant-time, constant-space incremental inference.
//!
//! A stream consumes 16 kHz samples in arbitrary chunk sizes. Whenever a
//! 10 ms hop completes, one frame flows through mel -> PCEN -> causal conv
//! (against the retained history) -> GRU -> feature conv -> running max.
//! Each time the stream crosses a prediction boundary (every 100 ms by
//! default) the classifier runs once on `[max_state, hidden]`. The retained
//! state never grows with stream length.

use thiserror::Error;

use crate::frontend::{Frontend, PcenState};
use crate::model::forward::{
    causal_conv, classify, context_vector, feature_preact, gru_step, maxpool_update,
};
use crate::model::{Hyperparams, Weights};

#[derive(Debug, Error, PartialEq)]
pub enum StreamError {
    #[error("no frames processed yet; feed at least one 30 ms window before classifying")]
    NoFramesYet,
}

/// One periodic classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Stream time of the boundary that triggered this prediction.
    pub at_ms: u64,
    /// Raw argmax class (thresholding is the caller's policy).
    pub label: usize,
    pub probs: Vec<f32>,
}

impl Prediction {
    pub fn top_prob(&self) -> f32 {
        self.probs[self.label]
    }
}

/// Shared read-only machinery: hyperparams, frontend and prediction cadence.
/// One engine serves any number of concurrent streams.
pub struct StreamEngine {
    hp: Hyperparams,
    frontend: Frontend,
    interval_ms: u32,
}

/// Per-stream recurrent state. The paper-comparable core is the conv frame
/// history, the GRU hidden state and the running max; the PCEN smoother and
/// the pending-sample window are real state too and are reported separately.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    pcen: PcenState,
    /// Pending samples: at most one window minus one sample.
    window: Vec<f32>,
    /// The `m - 1` most recent frames, oldest first; zeros before the first
    /// frames arrive (leading silence padding).
    conv_history: Vec<Vec<f32>>,
    gru_hidden: Vec<f32>,
    /// Running max; `-inf` until the first frame realizes it.
    max_state: Vec<f32>,
    frames_seen: u64,
    samples_consumed: u64,
    next_boundary: u64,
}

/// Byte sizes of one stream's retained state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSize {
    pub conv_history: usize,
    pub gru_hidden: usize,
    pub max_state: usize,
    pub pcen_smoother: usize,
    pub sample_buffer: usize,
}

impl StateSize {
    /// Conv history + GRU hidden + running max (the persistent recurrent
    /// core; smoother and sample buffer excluded).
    pub fn core(&self) -> usize {
        self.conv_history + self.gru_hidden + self.max_state
    }
}

impl StreamEngine {
    pub fn new(hp: Hyperparams, frontend: Frontend, interval_ms: u32) -> Self {
        assert!(interval_ms > 0);
        StreamEngine {
            hp,
            frontend,
            interval_ms,
        }
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn interval_ms(&self) -> u32 {
        self.interval_ms
    }

    fn interval_samples(&self) -> u64 {
        self.interval_ms as u64 * self.frontend.frame.sample_rate as u64 / 1000
    }

    /// Fresh per-stream state: zeroed conv history and hidden state, running
    /// max at its identity, counters at zero.
    pub fn init_stream(&self) -> StreamState {
        let window_len = self.frontend.frame.window_samples();
        StreamState {
            pcen: self.frontend.new_pcen_state(),
            window: Vec::with_capacity(window_len),
            conv_history: vec![vec![0.0; self.hp.n_mels]; self.hp.conv_history()],
            gru_hidden: vec![0.0; self.hp.gru_hidden],
            max_state: vec![f32::NEG_INFINITY; self.hp.feature_channels],
            frames_seen: 0,
            samples_consumed: 0,
            next_boundary: self.interval_samples(),
        }
    }

    fn process_hop(&self, st: &mut StreamState, w: &Weights<f32>) {
        let window_len = self.frontend.frame.window_samples();
        let hop = self.frontend.frame.hop_samples();
        debug_assert_eq!(st.window.len(), window_len);
        let energies = self.frontend.mel_energies(&st.window);
        let frame = self.frontend.pcen_step(&mut st.pcen, &energies);
        st.window.drain(..hop);

        let x = if self.hp.variant.has_conv() {
            let mut view: Vec<&[f32]> = st.conv_history.iter().map(|f| f.as_slice()).collect();
            view.push(&frame);
            causal_conv(&self.hp, w, &view)
        } else {
            frame.clone()
        };
        st.gru_hidden = gru_step(&self.hp, w, &x, &st.gru_hidden);
        if self.hp.variant.has_maxpool() {
            let feat = feature_preact(&self.hp, w, &st.gru_hidden);
            maxpool_update(&mut st.max_state, &feat);
        }
        if self.hp.conv_history() > 0 {
            st.conv_history.remove(0);
            st.conv_history.push(frame);
        }
        st.frames_seen += 1;
    }

    /// Feeds samples and returns every prediction whose boundary was crossed.
    /// Any partition of the sample stream yields identical results.
    pub fn push_samples(
        &self,
        st: &mut StreamState,
        samples: &[f32],
        w: &Weights<f32>,
    ) -> Vec<Prediction> {
        let window_len = self.frontend.frame.window_samples();
        let interval = self.interval_samples();
        let mut predictions = Vec::new();
        for &sample in samples {
            st.window.push(sample);
            st.samples_consumed += 1;
            if st.window.len() == window_len {
                self.process_hop(st, w);
            }
            if st.samples_consumed == st.next_boundary {
                // A boundary with no processed frame yet produces nothing.
                if st.frames_seen > 0 {
                    let probs = self.classify_state(st, w);
                    let (label, _) = crate::eval::argmax(&probs);
                    predictions.push(Prediction {
                        at_ms: st.samples_consumed * 1000
                            / self.frontend.frame.sample_rate as u64,
                        label,
                        probs,
                    });
                }
                st.next_boundary += interval;
            }
        }
        predictions
    }

    fn classify_state(&self, st: &StreamState, w: &Weights<f32>) -> Vec<f32> {
        let ctx = context_vector(&self.hp, &st.max_state, &st.gru_hidden);
        classify(&self.hp, w, &ctx)
    }

    /// Classifies the current state (e.g. at end of stream). Rejected until
    /// at least one frame has been processed.
    pub fn classify_now(
        &self,
        st: &StreamState,
        w: &Weights<f32>,
    ) -> Result<Prediction, StreamError> {
        if st.frames_seen == 0 {
            return Err(StreamError::NoFramesYet);
        }
        let probs = self.classify_state(st, w);
        let (label, _) = crate::eval::argmax(&probs);
        Ok(Prediction {
            at_ms: st.samples_consumed * 1000 / self.frontend.frame.sample_rate as u64,
            label,
            probs,
        })
    }

    /// Exact serialized byte sizes of the retained state, measured from the
    /// live buffers.
    pub fn state_size_bytes(&self, st: &StreamState) -> StateSize {
        let f32s = std::mem::size_of::<f32>();
        StateSize {
            conv_history: st.conv_history.iter().map(|f| f.len() * f32s).sum(),
            gru_hidden: st.gru_hidden.len() * f32s,
            max_state: st.max_state.len() * f32s,
            pcen_smoother: st.pcen.size_bytes(),
            sample_buffer: st.window.len() * f32s,
        }
    }
}

impl StreamState {
    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    pub fn samples_consumed(&self) -> u64 {
        self.samples_consumed
    }
}

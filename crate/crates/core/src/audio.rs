//! Mono 16 kHz PCM audio and a minimal RIFF/WAVE codec.
//!
//! Samples are stored unit-scaled (`i16 / 32768`), which keeps every 16-bit
//! value exactly representable in `f32` and makes the WAV round trip lossless.

use thiserror::Error;

/// The only sample rate the engine accepts.
pub const SAMPLE_RATE: u32 = 16_000;

const I16_SCALE: f32 = 32_768.0;

#[derive(Debug, Error, PartialEq)]
pub enum AudioError {
    #[error("malformed WAV header: {0}")]
    MalformedHeader(&'static str),
    #[error("unsupported sample rate {0} Hz (need 16000)")]
    UnsupportedRate(u32),
    #[error("unsupported bit depth {0} (need 16)")]
    UnsupportedBitDepth(u16),
    #[error("unsupported channel count {0} (need mono)")]
    UnsupportedChannels(u16),
    #[error("unsupported WAV format code {0} (need PCM)")]
    UnsupportedFormat(u16),
    #[error("empty audio payload")]
    Empty,
}

/// A mono 16 kHz waveform with unit-scaled samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::Empty);
        }
        Ok(Waveform {
            samples,
            sample_rate: SAMPLE_RATE,
        })
    }

    pub fn from_i16(samples: &[i16]) -> Result<Self, AudioError> {
        Self::new(samples.iter().map(|&s| s as f32 / I16_SCALE).collect())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Back to PCM units, clamped to the representable range.
    pub fn to_i16(&self) -> Vec<i16> {
        self.samples
            .iter()
            .map(|&s| (s * I16_SCALE).round().clamp(-32_768.0, 32_767.0) as i16)
            .collect()
    }
}

/// Converts a raw little-endian 16-bit PCM byte stream (no container).
pub fn pcm_to_samples(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / I16_SCALE)
        .collect()
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

fn read_u16(bytes: &[u8], at: usize) -> Option<u16> {
    bytes.get(at..at + 2).map(|b| u16::from_le_bytes([b[0], b[1]]))
}

/// Parses a RIFF/WAVE container. Only 16 kHz, 16-bit, mono PCM is accepted;
/// anything else is a distinct error. Unknown chunks (LIST, fact, ...) are
/// skipped.
pub fn load_wav(bytes: &[u8]) -> Result<Waveform, AudioError> {
    if bytes.len() < 12 {
        return Err(AudioError::MalformedHeader("file shorter than RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(AudioError::MalformedHeader("missing RIFF tag"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(AudioError::MalformedHeader("missing WAVE tag"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut at = 12usize;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = read_u32(bytes, at + 4).unwrap() as usize;
        let body_start = at + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or(AudioError::MalformedHeader("chunk overruns file"))?;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(AudioError::MalformedHeader("fmt chunk too small"));
                }
                let format = read_u16(bytes, body_start).unwrap();
                let channels = read_u16(bytes, body_start + 2).unwrap();
                let rate = read_u32(bytes, body_start + 4).unwrap();
                let bits = read_u16(bytes, body_start + 14).unwrap();
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(&bytes[body_start..body_end]),
            _ => {}
        }
        // Chunks are word-aligned; odd sizes carry a pad byte.
        at = body_end + (size & 1);
    }

    let (format, channels, rate, bits) = fmt.ok_or(AudioError::MalformedHeader("missing fmt chunk"))?;
    if format != 1 {
        return Err(AudioError::UnsupportedFormat(format));
    }
    if channels != 1 {
        return Err(AudioError::UnsupportedChannels(channels));
    }
    if rate != SAMPLE_RATE {
        return Err(AudioError::UnsupportedRate(rate));
    }
    if bits != 16 {
        return Err(AudioError::UnsupportedBitDepth(bits));
    }
    let data = data.ok_or(AudioError::MalformedHeader("missing data chunk"))?;
    if data.len() < 2 {
        return Err(AudioError::Empty);
    }
    Ok(Waveform {
        samples: pcm_to_samples(data),
        sample_rate: SAMPLE_RATE,
    })
}

/// Serializes to a canonical 44-byte-header PCM WAV.
pub fn save_wav(w: &Waveform) -> Vec<u8> {
    let pcm = w.to_i16();
    let data_len = (pcm.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in pcm {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Hand-constructed container, independent of `save_wav`.
    fn golden_wav(rate: u32, bits: u16, channels: u16, format: u16, pcm: &[i16]) -> Vec<u8> {
        let data_len = (pcm.len() * 2) as u32;
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&(36 + data_len).to_le_bytes());
        b.extend_from_slice(b"WAVE");
        b.extend_from_slice(b"fmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&format.to_le_bytes());
        b.extend_from_slice(&channels.to_le_bytes());
        b.extend_from_slice(&rate.to_le_bytes());
        b.extend_from_slice(&(rate * u32::from(channels) * u32::from(bits) / 8).to_le_bytes());
        b.extend_from_slice(&(channels * bits / 8).to_le_bytes());
        b.extend_from_slice(&bits.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&data_len.to_le_bytes());
        for s in pcm {
            b.extend_from_slice(&s.to_le_bytes());
        }
        b
    }

    #[test]
    fn one_second_of_silence() {
        let bytes = golden_wav(16_000, 16, 1, 1, &vec![0i16; 16_000]);
        let w = load_wav(&bytes).unwrap();
        assert_eq!(w.len(), 16_000);
        assert!(w.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn rejects_44_1_khz() {
        let bytes = golden_wav(44_100, 16, 1, 1, &[0; 4]);
        assert_eq!(load_wav(&bytes), Err(AudioError::UnsupportedRate(44_100)));
    }

    #[test]
    fn rejects_stereo_and_depth_and_format() {
        assert_eq!(
            load_wav(&golden_wav(16_000, 16, 2, 1, &[0; 4])),
            Err(AudioError::UnsupportedChannels(2))
        );
        assert_eq!(
            load_wav(&golden_wav(16_000, 8, 1, 1, &[0; 4])),
            Err(AudioError::UnsupportedBitDepth(8))
        );
        assert_eq!(
            load_wav(&golden_wav(16_000, 16, 1, 3, &[0; 4])),
            Err(AudioError::UnsupportedFormat(3))
        );
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(load_wav(b"not a wav"), Err(AudioError::MalformedHeader(_))));
        assert!(matches!(
            load_wav(b"RIFF\x00\x00\x00\x00AIFF"),
            Err(AudioError::MalformedHeader(_))
        ));
    }

    #[test]
    fn golden_samples_survive_exactly() {
        let pcm = [0i16, 1000, -1000, 32_767];
        let w = load_wav(&golden_wav(16_000, 16, 1, 1, &pcm)).unwrap();
        let expected: Vec<f32> = pcm.iter().map(|&s| s as f32 / 32_768.0).collect();
        assert_eq!(w.samples, expected);
        assert_eq!(w.to_i16(), pcm);
    }

    #[test]
    fn skips_unknown_chunks() {
        let pcm = [7i16, -7];
        let mut bytes = golden_wav(16_000, 16, 1, 1, &pcm);
        // Splice a LIST chunk between fmt and data.
        let mut spliced = bytes[..36].to_vec();
        spliced.extend_from_slice(b"LIST");
        spliced.extend_from_slice(&4u32.to_le_bytes());
        spliced.extend_from_slice(b"INFO");
        spliced.extend_from_slice(&bytes[36..]);
        bytes = spliced;
        let riff_len = (bytes.len() - 8) as u32;
        bytes[4..8].copy_from_slice(&riff_len.to_le_bytes());
        let w = load_wav(&bytes).unwrap();
        assert_eq!(w.to_i16(), pcm);
    }

    proptest! {
        #[test]
        fn wav_round_trip_is_identity(pcm in proptest::collection::vec(any::<i16>(), 1..512)) {
            let w = Waveform::from_i16(&pcm).unwrap();
            let back = load_wav(&save_wav(&w)).unwrap();
            prop_assert_eq!(back.to_i16(), pcm);
            prop_assert_eq!(back.samples, w.samples);
        }
    }
}

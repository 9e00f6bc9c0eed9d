//! Binary weight container: magic + version + hyperparams, a named-tensor
//! directory, then raw little-endian f32 payloads. Round trips are bit-exact.

use std::path::Path;

use thiserror::Error;

use crate::model::{Hyperparams, Variant, Weights};

const MAGIC: &[u8; 4] = b"VQWT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum WeightsIoError {
    #[error("not a weight container (bad magic)")]
    BadMagic,
    #[error("container version {got} unsupported (expected {FORMAT_VERSION})")]
    VersionMismatch { got: u32 },
    #[error("container truncated while reading {0}")]
    Truncated(&'static str),
    #[error("tensor {0} missing or incomplete")]
    MissingTensor(String),
    #[error("unexpected tensor {0} for this variant")]
    UnexpectedTensor(String),
    #[error("tensor {name}: shape {got:?} does not match hyperparams ({expected:?})")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("invalid hyperparams in container: {0}")]
    BadHyperparams(String),
    #[error("io error: {0}")]
    Io(String),
}

/// A deserialized container: format version, hyperparams, and the tensors.
#[derive(Debug, Clone)]
pub struct WeightContainer {
    pub format_version: u32,
    pub hyperparams: Hyperparams,
    pub weights: Weights<f32>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WeightsIoError> {
        let end = self.at.checked_add(n).ok_or(WeightsIoError::Truncated(what))?;
        if end > self.bytes.len() {
            return Err(WeightsIoError::Truncated(what));
        }
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, WeightsIoError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, WeightsIoError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn variant_tag(v: Variant) -> u8 {
    match v {
        Variant::CrnnMax => 0,
        Variant::Crnn => 1,
        Variant::RnnMax => 2,
    }
}

fn tag_variant(tag: u8) -> Result<Variant, WeightsIoError> {
    match tag {
        0 => Ok(Variant::CrnnMax),
        1 => Ok(Variant::Crnn),
        2 => Ok(Variant::RnnMax),
        other => Err(WeightsIoError::BadHyperparams(format!("variant tag {other}"))),
    }
}

/// Serializes hyperparams and weights into one byte buffer.
pub fn save_weights(hp: &Hyperparams, w: &Weights<f32>) -> Vec<u8> {
    let specs = hp.tensor_specs();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(variant_tag(hp.variant));
    for dim in [
        hp.conv_channels,
        hp.conv_time,
        hp.conv_freq,
        hp.stride_time,
        hp.stride_freq,
        hp.gru_hidden,
        hp.feature_channels,
        hp.classifier_hidden,
        hp.n_classes,
        hp.n_mels,
    ] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    // Directory.
    out.extend_from_slice(&(specs.len() as u32).to_le_bytes());
    for spec in &specs {
        out.push(spec.name.len() as u8);
        out.extend_from_slice(spec.name.as_bytes());
        out.push(spec.shape.len() as u8);
        for &d in &spec.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    // Payloads, in directory order.
    for spec in &specs {
        for &v in w.tensor(spec.name).unwrap() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses a container, validating version, tensor set and shapes against the
/// embedded hyperparams.
pub fn load_weights(bytes: &[u8]) -> Result<WeightContainer, WeightsIoError> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4, "magic").map_err(|_| WeightsIoError::BadMagic)? != MAGIC {
        return Err(WeightsIoError::BadMagic);
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(WeightsIoError::VersionMismatch { got: version });
    }
    let variant = tag_variant(r.u8("variant")?)?;
    let mut dims = [0usize; 10];
    for d in dims.iter_mut() {
        *d = r.u32("hyperparams")? as usize;
    }
    let hp = Hyperparams {
        variant,
        conv_channels: dims[0],
        conv_time: dims[1],
        conv_freq: dims[2],
        stride_time: dims[3],
        stride_freq: dims[4],
        gru_hidden: dims[5],
        feature_channels: dims[6],
        classifier_hidden: dims[7],
        n_classes: dims[8],
        n_mels: dims[9],
    };
    hp.validate().map_err(WeightsIoError::BadHyperparams)?;

    let specs = hp.tensor_specs();
    let n_tensors = r.u32("tensor count")? as usize;
    let mut directory: Vec<(String, Vec<usize>)> = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name_len = r.u8("tensor name")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| WeightsIoError::Truncated("tensor name"))?
            .to_string();
        let ndim = r.u8("tensor shape")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32("tensor shape")? as usize);
        }
        directory.push((name, shape));
    }

    // The directory must carry exactly the variant's tensors, each once.
    for spec in &specs {
        let matches: Vec<_> = directory.iter().filter(|(n, _)| n == spec.name).collect();
        match matches.len() {
            0 => return Err(WeightsIoError::MissingTensor(spec.name.to_string())),
            1 => {
                if matches[0].1 != spec.shape {
                    return Err(WeightsIoError::ShapeMismatch {
                        name: spec.name.to_string(),
                        expected: spec.shape.clone(),
                        got: matches[0].1.clone(),
                    });
                }
            }
            _ => return Err(WeightsIoError::UnexpectedTensor(spec.name.to_string())),
        }
    }
    for (name, _) in &directory {
        if !specs.iter().any(|s| s.name == name) {
            return Err(WeightsIoError::UnexpectedTensor(name.clone()));
        }
    }

    let mut weights = Weights::zeros(&hp);
    for (name, shape) in &directory {
        let elems: usize = shape.iter().product();
        let mut data = Vec::with_capacity(elems);
        for _ in 0..elems {
            let b = r
                .take(4, "tensor payload")
                .map_err(|_| WeightsIoError::MissingTensor(name.clone()))?;
            data.push(f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        }
        *weights.tensor_mut(name).unwrap() = data;
    }

    Ok(WeightContainer {
        format_version: version,
        hyperparams: hp,
        weights,
    })
}

pub fn write_weights_file(path: &Path, hp: &Hyperparams, w: &Weights<f32>) -> Result<(), WeightsIoError> {
    std::fs::write(path, save_weights(hp, w)).map_err(|e| WeightsIoError::Io(e.to_string()))
}

pub fn read_weights_file(path: &Path) -> Result<WeightContainer, WeightsIoError> {
    let bytes = std::fs::read(path).map_err(|e| WeightsIoError::Io(e.to_string()))?;
    load_weights(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scaled_hp(variant: Variant) -> Hyperparams {
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

    #[test]
    fn round_trip_is_bit_exact_for_all_variants() {
        for variant in [Variant::CrnnMax, Variant::Crnn, Variant::RnnMax] {
            let hp = scaled_hp(variant);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let w: Weights<f32> = Weights::init(&hp, &mut rng);
            let bytes = save_weights(&hp, &w);
            let back = load_weights(&bytes).unwrap();
            assert_eq!(back.format_version, FORMAT_VERSION);
            assert_eq!(back.hyperparams, hp);
            for spec in hp.tensor_specs() {
                let a = w.tensor(spec.name).unwrap();
                let b = back.weights.tensor(spec.name).unwrap();
                assert_eq!(a.len(), b.len());
                for (x, y) in a.iter().zip(b) {
                    assert_eq!(x.to_bits(), y.to_bits(), "{}", spec.name);
                }
            }
        }
    }

    #[test]
    fn truncated_payload_reports_missing_tensor() {
        let hp = scaled_hp(Variant::CrnnMax);
        let w: Weights<f32> = Weights::zeros(&hp);
        let mut bytes = save_weights(&hp, &w);
        bytes.truncate(bytes.len() - 8);
        match load_weights(&bytes) {
            Err(WeightsIoError::MissingTensor(name)) => assert_eq!(name, "dnn_b2"),
            other => panic!("expected MissingTensor, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_detected() {
        let hp = scaled_hp(Variant::Crnn);
        let w: Weights<f32> = Weights::zeros(&hp);
        let mut bytes = save_weights(&hp, &w);
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(
            load_weights(&bytes),
            Err(WeightsIoError::VersionMismatch { got: 99 })
        ));
    }

    #[test]
    fn gru_shape_inconsistent_with_hidden_size_is_rejected() {
        let hp = scaled_hp(Variant::CrnnMax);
        let w: Weights<f32> = Weights::zeros(&hp);
        let mut bytes = save_weights(&hp, &w);
        // Patch the directory entry for gru_uz: its first dim lives right
        // after the name. Find the name bytes and bump the dimension.
        let pos = bytes
            .windows(6)
            .position(|w| w == b"gru_uz")
            .expect("directory entry");
        let dim_at = pos + 6 + 1; // name, ndim byte, first dim
        let old = u32::from_le_bytes(bytes[dim_at..dim_at + 4].try_into().unwrap());
        bytes[dim_at..dim_at + 4].copy_from_slice(&(old + 1).to_le_bytes());
        match load_weights(&bytes) {
            Err(WeightsIoError::ShapeMismatch { name, .. }) => assert_eq!(name, "gru_uz"),
            other => panic!("expected ShapeMismatch, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        assert_eq!(
            load_weights(b"nope").unwrap_err(),
            WeightsIoError::BadMagic
        );
    }
}

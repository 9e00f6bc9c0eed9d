pub mod augment_preview;
pub mod eval;
pub mod footprint;
pub mod stream;
pub mod train;

use std::path::Path;

use rayon::prelude::*;

use voxquery_core::audio::{load_wav, Waveform};
use voxquery_core::manifest::DatasetManifest;
use voxquery_core::model::{Hyperparams, Variant};
use voxquery_core::weights_io::{read_weights_file, WeightContainer};

use crate::{CliError, ModelArgs};

/// Builds hyperparams from the variant plus any dimension overrides.
pub fn resolve_hyperparams(args: &ModelArgs, n_classes: Option<usize>) -> Result<Hyperparams, CliError> {
    let variant: Variant = args.variant.parse().map_err(CliError::Config)?;
    let mut hp = Hyperparams::for_variant(variant);
    if let Some(c) = args.conv_channels {
        hp.conv_channels = c;
    }
    if let Some(k) = args.gru_hidden {
        hp.gru_hidden = k;
    }
    if let Some(d) = args.feature_channels {
        hp.feature_channels = d;
    }
    if let Some(r) = args.classifier_hidden {
        hp.classifier_hidden = r;
    }
    if let Some(n) = args.classes.or(n_classes) {
        hp.n_classes = n;
    }
    hp.validate().map_err(CliError::Config)?;
    Ok(hp)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, CliError> {
    DatasetManifest::load(path).map_err(|e| CliError::Data(e.to_string()))
}

/// Reads every referenced WAV into memory, in parallel.
pub fn load_clips(manifest: &DatasetManifest) -> Result<Vec<(Waveform, usize)>, CliError> {
    manifest
        .records
        .par_iter()
        .map(|rec| {
            let bytes = std::fs::read(&rec.path)
                .map_err(|e| CliError::Data(format!("{}: {e}", rec.path.display())))?;
            let wav = load_wav(&bytes)
                .map_err(|e| CliError::Data(format!("{}: {e}", rec.path.display())))?;
            Ok((wav, rec.label))
        })
        .collect()
}

pub fn load_container(path: &Path) -> Result<WeightContainer, CliError> {
    read_weights_file(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Picks one of the three stratified splits by name.
pub fn pick_split(manifest: &DatasetManifest, split: &str) -> Result<DatasetManifest, CliError> {
    let splits = manifest.split().map_err(|e| CliError::Data(e.to_string()))?;
    match split {
        "train" => Ok(splits.train),
        "validation" | "val" => Ok(splits.validation),
        "test" => Ok(splits.test),
        other => Err(CliError::Config(format!(
            "unknown split {other:?} (expected train, validation or test)"
        ))),
    }
}

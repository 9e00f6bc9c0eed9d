//! `voxquery augment-preview`: write before/after WAV pairs so augmentation
//! can be audited by ear.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use voxquery_core::audio::{load_wav, save_wav, Waveform};
use voxquery_core::augment::{add_noise, augment, band_suppress, pitch_shift, AugmentConfig};

use crate::{AugmentPreviewArgs, CliError};

fn write(dir: &std::path::Path, name: &str, w: &Waveform) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, save_wav(w))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn run(args: AugmentPreviewArgs) -> Result<(), CliError> {
    let bytes = std::fs::read(&args.wav)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.wav.display())))?;
    let original = load_wav(&bytes)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.wav.display())))?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.out.display())))?;

    let cfg = AugmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);

    write(&args.out, "original.wav", &original)?;
    // One isolated example of each transform, then composed variants.
    write(
        &args.out,
        "noise.wav",
        &add_noise(&original, cfg.gauss_sigma, cfg.sp_prob, &mut rng),
    )?;
    write(
        &args.out,
        "band_suppress.wav",
        &band_suppress(&original, 400.0, 2800.0, cfg.suppress_factor)
            .map_err(|e| CliError::Config(e.to_string()))?,
    )?;
    write(&args.out, "pitch_up.wav", &pitch_shift(&original, cfg.pitch_shift_hz))?;
    write(&args.out, "pitch_down.wav", &pitch_shift(&original, -cfg.pitch_shift_hz))?;
    let all = AugmentConfig {
        apply_noise: 1.0,
        apply_band: 1.0,
        apply_pitch: 1.0,
        ..cfg
    };
    for i in 0..args.count {
        write(&args.out, &format!("augmented_{i}.wav"), &augment(&original, &all, &mut rng))?;
    }
    Ok(())
}

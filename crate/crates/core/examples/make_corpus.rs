//! Writes a synthetic tone-pattern corpus as WAV files plus a manifest,
//! ready for `voxquery train`.
//!
//! Usage: cargo run --example make_corpus -- <dir> [classes] [per_class] [unknown] [seed]

use std::fmt::Write as _;
use std::path::PathBuf;

use voxquery_core::audio::save_wav;
use voxquery_core::synth::{generate_corpus, CorpusSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "corpus".into()));
    let mut num = |default: usize| -> usize {
        args.next().and_then(|s| s.parse().ok()).unwrap_or(default)
    };
    let spec = CorpusSpec {
        classes: num(12),
        per_class: num(200),
        unknown: num(2000),
        seed: num(0) as u64,
    };
    std::fs::create_dir_all(&dir)?;
    let clips = generate_corpus(&spec);
    let mut manifest = String::new();
    for (i, (wav, label)) in clips.iter().enumerate() {
        let name = format!("clip_{i:05}.wav");
        std::fs::write(dir.join(&name), save_wav(wav))?;
        writeln!(manifest, "{name}\t{label}")?;
    }
    std::fs::write(dir.join("manifest.tsv"), manifest)?;
    println!(
        "wrote {} clips ({} classes + unknown) and manifest.tsv to {}",
        clips.len(),
        spec.classes,
        dir.display()
    );
    Ok(())
}

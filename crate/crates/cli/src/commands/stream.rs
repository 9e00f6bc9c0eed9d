//! `voxquery stream`: incremental inference over a WAV file or raw PCM on
//! stdin, one `at_ms<TAB>label<TAB>top_prob` line per prediction.

use std::io::Read;
use std::time::Instant;

use voxquery_core::audio::{load_wav, pcm_to_samples};
use voxquery_core::frontend::Frontend;
use voxquery_core::streaming::StreamEngine;

use crate::commands::load_container;
use crate::{CliError, StreamArgs};

pub fn run(args: StreamArgs) -> Result<(), CliError> {
    if args.chunk_size == 0 {
        return Err(CliError::Config("chunk size must be positive".into()));
    }
    let container = load_container(&args.weights)?;
    let hp = container.hyperparams;
    let unknown = hp.n_classes - 1;
    let engine = StreamEngine::new(hp, Frontend::with_defaults(), args.interval_ms);

    let samples: Vec<f32> = match &args.wav {
        Some(path) => {
            let bytes = std::fs::read(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            load_wav(&bytes)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
                .samples
        }
        None => {
            let mut bytes = Vec::new();
            std::io::stdin()
                .read_to_end(&mut bytes)
                .map_err(|e| CliError::Data(format!("stdin: {e}")))?;
            pcm_to_samples(&bytes)
        }
    };
    if samples.is_empty() {
        return Err(CliError::Data("no audio samples".into()));
    }

    let mut state = engine.init_stream();
    let mut hop_times_us: Vec<f64> = Vec::new();
    let started = Instant::now();
    for chunk in samples.chunks(args.chunk_size) {
        let t0 = Instant::now();
        let predictions = engine.push_samples(&mut state, chunk, &container.weights);
        if args.profile {
            hop_times_us.push(t0.elapsed().as_secs_f64() * 1e6);
        }
        for p in predictions {
            let label = match args.alpha {
                Some(alpha) if p.top_prob() < alpha => unknown,
                _ => p.label,
            };
            println!("{}\t{}\t{:.6}", p.at_ms, label, p.top_prob());
        }
    }
    let elapsed = started.elapsed().as_secs_f64();

    // Final state classification (end of clip).
    if let Ok(p) = engine.classify_now(&state, &container.weights) {
        let label = match args.alpha {
            Some(alpha) if p.top_prob() < alpha => unknown,
            _ => p.label,
        };
        println!("{}\t{}\t{:.6}\t(final)", p.at_ms, label, p.top_prob());
    }

    if args.profile {
        let audio_secs = samples.len() as f64 / 16_000.0;
        let mut sorted = hop_times_us.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pct = |q: f64| sorted[(q * (sorted.len() - 1) as f64) as usize];
        let mean = hop_times_us.iter().sum::<f64>() / hop_times_us.len() as f64;
        eprintln!(
            "profile: {} pushes of {} samples, mean {:.1} us, p50 {:.1} us, p95 {:.1} us, max {:.1} us",
            hop_times_us.len(),
            args.chunk_size,
            mean,
            pct(0.50),
            pct(0.95),
            sorted.last().unwrap()
        );
        eprintln!(
            "profile: {:.3} s wall for {:.3} s audio, real-time factor {:.3}",
            elapsed,
            audio_secs,
            elapsed / audio_secs
        );
    }
    Ok(())
}

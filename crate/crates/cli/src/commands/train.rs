//! `voxquery train`: ingest -> split -> augment -> PCEN -> train, writing a
//! checkpoint and a metrics line per epoch.

use std::fmt::Write as _;

use voxquery_core::augment::AugmentConfig;
use voxquery_core::frontend::Frontend;
use voxquery_core::training::{train, AudioDataSource, TrainConfig, TrainError};
use voxquery_core::weights_io::write_weights_file;

use crate::commands::{load_clips, load_manifest, resolve_hyperparams};
use crate::config::{KvConfig, RunDir};
use crate::{CliError, TrainArgs};

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let file = KvConfig::load(args.config.as_deref())?;
    let seed = file.resolve(args.seed, "seed", 0u64)?;
    let epochs = file.resolve(args.epochs, "epochs", 16usize)?;
    let batch_size = file.resolve(args.batch_size, "batch_size", 48usize)?;

    let manifest = load_manifest(&args.manifest)?;
    let hp = resolve_hyperparams(&args.model, Some(manifest.n_classes()))?;
    let splits = manifest.split().map_err(|e| CliError::Data(e.to_string()))?;
    for rec in &manifest.records {
        if rec.label >= hp.n_classes {
            return Err(CliError::Data(format!(
                "label {} out of range for {} classes",
                rec.label, hp.n_classes
            )));
        }
    }

    let cfg = TrainConfig {
        batch_size,
        total_epochs: epochs,
        seed,
        ..TrainConfig::default()
    };
    let augment = if args.no_augment {
        None
    } else {
        Some(AugmentConfig::default())
    };

    let train_set = AudioDataSource::new(load_clips(&splits.train)?, Frontend::with_defaults(), augment)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let val_set = AudioDataSource::new(load_clips(&splits.validation)?, Frontend::with_defaults(), None)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let run_dir = RunDir::create(&args.out, "train", seed)?;
    run_dir.write_config(&[
        ("command", "train".into()),
        ("manifest", args.manifest.display().to_string()),
        ("variant", hp.variant.name().into()),
        ("classes", hp.n_classes.to_string()),
        ("conv_channels", hp.conv_channels.to_string()),
        ("gru_hidden", hp.gru_hidden.to_string()),
        ("feature_channels", hp.feature_channels.to_string()),
        ("classifier_hidden", hp.classifier_hidden.to_string()),
        ("epochs", epochs.to_string()),
        ("batch_size", batch_size.to_string()),
        ("augment", augment.is_some().to_string()),
        ("seed", seed.to_string()),
    ])?;

    let mut metrics_log = String::from("epoch\tlr\ttrain_loss\tval_far\tval_qer\n");
    let outcome = train(&hp, &cfg, &train_set, &val_set, |m, weights| {
        writeln!(
            metrics_log,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            m.epoch, m.lr, m.train_loss, m.val_far, m.val_qer
        )
        .unwrap();
        println!(
            "epoch {:>2}  lr {:<7}  loss {:.4}  val FAR {:.2}%  val QER {:.2}%",
            m.epoch,
            m.lr,
            m.train_loss,
            m.val_far * 100.0,
            m.val_qer * 100.0
        );
        let path = run_dir.path.join(format!("epoch_{:02}.vqw", m.epoch));
        if let Err(e) = write_weights_file(&path, &hp, weights) {
            eprintln!("warning: checkpoint {}: {e}", path.display());
        }
    })
    .map_err(|e| match e {
        TrainError::Diverged { .. } => CliError::Numeric(e.to_string()),
        other => CliError::Data(other.to_string()),
    })?;

    std::fs::write(run_dir.path.join("metrics.tsv"), metrics_log)
        .map_err(|e| CliError::Data(format!("cannot write metrics: {e}")))?;
    let final_path = run_dir.path.join("final.vqw");
    write_weights_file(&final_path, &hp, &outcome.weights)
        .map_err(|e| CliError::Data(e.to_string()))?;
    println!("wrote {}", final_path.display());
    Ok(())
}

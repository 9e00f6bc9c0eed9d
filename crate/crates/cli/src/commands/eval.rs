//! `voxquery eval` and `voxquery roc`: score a split, pick or apply a
//! threshold, emit the summary and the ROC sweep.

use std::fmt::Write as _;

use voxquery_core::eval::{
    default_alpha_grid, pick_alpha, roc_sweep, EvalError, EvalRecord, RocPoint,
};
use voxquery_core::frontend::Frontend;
use voxquery_core::manifest::DatasetManifest;
use voxquery_core::model::{Hyperparams, Weights};
use voxquery_core::training::{score_source, AudioDataSource};

use crate::commands::{load_clips, load_container, load_manifest, pick_split};
use crate::config::{KvConfig, RunDir};
use crate::{CliError, EvalArgs, RocArgs};

fn score_split(
    hp: &Hyperparams,
    weights: &Weights<f32>,
    manifest: &DatasetManifest,
) -> Result<Vec<EvalRecord>, CliError> {
    if manifest.is_empty() {
        return Err(CliError::Data("split is empty".into()));
    }
    let source = AudioDataSource::new(load_clips(manifest)?, Frontend::with_defaults(), None)
        .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(score_source(hp, weights, &source))
}

fn render_roc(points: &[RocPoint]) -> String {
    let mut out = String::from("alpha\tfar\tqer\n");
    for p in points {
        writeln!(out, "{}\t{:.6}\t{:.6}", p.alpha, p.far, p.qer).unwrap();
    }
    out
}

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    let file = KvConfig::load(args.config.as_deref())?;
    let seed = file.resolve(args.seed, "seed", 0u64)?;
    let container = load_container(&args.weights)?;
    let hp = container.hyperparams;
    let unknown = hp.n_classes - 1;
    let manifest = load_manifest(&args.manifest)?;

    // Threshold: explicit flag, or picked on the validation split.
    let (alpha, picked_on_validation) = match args.alpha {
        Some(alpha) => (alpha, None),
        None => {
            let val = pick_split(&manifest, "validation")?;
            let records = score_split(&hp, &container.weights, &val)?;
            let choice = pick_alpha(&records, args.target_far, &default_alpha_grid(), unknown)
                .map_err(|e| match e {
                    EvalError::TargetFarUnreachable { .. } => CliError::Numeric(e.to_string()),
                    other => CliError::Data(other.to_string()),
                })?;
            (choice.alpha, Some(choice))
        }
    };

    let split = pick_split(&manifest, &args.split)?;
    let records = score_split(&hp, &container.weights, &split)?;
    let sweep = roc_sweep(&records, &default_alpha_grid(), unknown);
    let at_alpha = roc_sweep(&records, &[alpha], unknown)[0];

    let run_dir = RunDir::create(&args.out, "eval", seed)?;
    run_dir.write_config(&[
        ("command", "eval".into()),
        ("manifest", args.manifest.display().to_string()),
        ("weights", args.weights.display().to_string()),
        ("variant", hp.variant.name().into()),
        ("split", args.split.clone()),
        ("alpha", alpha.to_string()),
        ("target_far", args.target_far.to_string()),
        ("seed", seed.to_string()),
    ])?;

    let mut summary = String::new();
    writeln!(summary, "split\t{}", args.split).unwrap();
    writeln!(summary, "examples\t{}", records.len()).unwrap();
    writeln!(summary, "alpha\t{alpha}").unwrap();
    if let Some(choice) = picked_on_validation {
        writeln!(
            summary,
            "validation_far\t{:.6}\nvalidation_qer\t{:.6}",
            choice.far, choice.qer
        )
        .unwrap();
    }
    writeln!(summary, "far\t{:.6}", at_alpha.far).unwrap();
    writeln!(summary, "qer\t{:.6}", at_alpha.qer).unwrap();
    writeln!(summary, "accuracy\t{:.6}", 1.0 - at_alpha.qer).unwrap();
    print!("{summary}");
    std::fs::write(run_dir.path.join("summary.tsv"), &summary)
        .map_err(|e| CliError::Data(format!("cannot write summary: {e}")))?;
    std::fs::write(run_dir.path.join("roc.tsv"), render_roc(&sweep))
        .map_err(|e| CliError::Data(format!("cannot write roc: {e}")))?;
    println!("artifacts in {}", run_dir.path.display());
    Ok(())
}

pub fn run_roc(args: RocArgs) -> Result<(), CliError> {
    let container = load_container(&args.weights)?;
    let hp = container.hyperparams;
    let manifest = load_manifest(&args.manifest)?;
    let split = pick_split(&manifest, &args.split)?;
    let records = score_split(&hp, &container.weights, &split)?;
    let sweep = roc_sweep(&records, &default_alpha_grid(), hp.n_classes - 1);
    let text = render_roc(&sweep);
    match args.out {
        Some(path) => std::fs::write(&path, text)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

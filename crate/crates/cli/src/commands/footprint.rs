//! `voxquery footprint`: the per-layer parameter and multiply table.

use voxquery_core::model::footprint::render_report;

use crate::commands::resolve_hyperparams;
use crate::{CliError, FootprintArgs};

pub fn run(args: FootprintArgs) -> Result<(), CliError> {
    let hp = resolve_hyperparams(&args.model, None)?;
    print!("{}", render_report(&hp, args.frames_per_s, args.classify_per_s));
    Ok(())
}

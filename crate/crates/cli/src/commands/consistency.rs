use std::path::PathBuf;

use clap::Args;

use rigdepth_core::evalmetrics::depth_consistency;

use crate::dataset;
use crate::error::CliError;

/// Measure cross-view metric agreement of one step's depth maps.
#[derive(Args, Debug)]
pub struct ConsistencyArgs {
    /// Rig description JSON (needs at least two cameras).
    #[arg(long)]
    pub rig: PathBuf,
    /// Directory holding `view{n}_step{t}.dpt` maps.
    #[arg(long)]
    pub depths: PathBuf,
    /// Time step to process.
    #[arg(long, default_value_t = 0)]
    pub step: usize,
}

pub fn run(args: &ConsistencyArgs) -> Result<(), CliError> {
    let rig = dataset::load_rig(&args.rig)?;
    let depths = dataset::load_step_depths(&args.depths, &rig, args.step)?;
    let report = depth_consistency(&rig, &depths)?;
    match report.mean {
        Some(mean) => eprintln!(
            "consistency over {} adjacent pair(s): mean abs-rel {mean:.6}",
            report.pairs.len()
        ),
        None => eprintln!(
            "consistency over {} adjacent pair(s): no overlapping pixels",
            report.pairs.len()
        ),
    }
    super::emit_json(&report)
}

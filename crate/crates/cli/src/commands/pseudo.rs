use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use rigdepth_core::io;
use rigdepth_core::photometric::DepthMap;
use rigdepth_core::sfm::{generate_pseudo_depths, MatchSource, SfmConfig, SparsePseudoDepth};

use crate::dataset;
use crate::error::CliError;
use crate::overrides;

/// Triangulate sparse metric depths from overlapping views of one step.
#[derive(Args, Debug)]
pub struct PseudoArgs {
    /// Rig description JSON.
    #[arg(long)]
    pub rig: PathBuf,
    /// Directory holding `view{n}_step{t}.img` rasters.
    #[arg(long)]
    pub images: PathBuf,
    /// Time step to process.
    #[arg(long, default_value_t = 0)]
    pub step: usize,
    /// Output directory for per-view sparse depth JSON (defaults to --images).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory holding reference `view{n}_step{t}.dpt` maps to score against.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Epipolar threshold in pixels at the reference width.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Correspondence file (the matches JSON format, one adjacency pair per
    /// file) to triangulate instead of running the built-in matcher;
    /// repeatable. Pairs without a file contribute no points.
    #[arg(long)]
    pub matches: Vec<PathBuf>,
    /// Pipeline overrides as `key=value` (applied after the flags above).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Serialize)]
struct ViewPoints {
    view: usize,
    points: usize,
    file: String,
}

#[derive(Serialize)]
struct ReferenceComparison {
    compared: usize,
    within_2_percent: f64,
    scale_factor: Option<f64>,
}

#[derive(Serialize)]
struct PseudoSummary {
    step: usize,
    total_points: usize,
    per_view: Vec<ViewPoints>,
    reference: Option<ReferenceComparison>,
}

/// Median with the even-count convention: mean of the two middle values.
fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

fn compare_against_reference(
    sparse: &[SparsePseudoDepth],
    reference: &[DepthMap],
) -> ReferenceComparison {
    let mut compared = 0usize;
    let mut within = 0usize;
    let mut ref_depths = Vec::new();
    let mut pseudo_depths = Vec::new();
    for per_view in sparse {
        let gt = &reference[per_view.view];
        for (pixel, depth) in &per_view.points {
            let Some(gt_depth) = gt.bilinear_sample(*pixel) else {
                continue;
            };
            compared += 1;
            if (depth - gt_depth).abs() / gt_depth <= 0.02 {
                within += 1;
            }
            ref_depths.push(gt_depth);
            pseudo_depths.push(*depth);
        }
    }
    let scale_factor = match (median(&mut ref_depths), median(&mut pseudo_depths)) {
        (Some(g), Some(p)) if p > 0.0 => Some(g / p),
        _ => None,
    };
    ReferenceComparison {
        compared,
        within_2_percent: if compared == 0 {
            0.0
        } else {
            within as f64 / compared as f64
        },
        scale_factor,
    }
}

pub fn run(args: &PseudoArgs) -> Result<(), CliError> {
    let mut cfg = SfmConfig::default();
    if let Some(gamma) = args.gamma {
        cfg.gamma = gamma;
    }
    for set in &args.sets {
        let (key, value) = overrides::split_pair(set)?;
        overrides::apply_sfm(&mut cfg, key, value)?;
    }

    let rig = dataset::load_rig(&args.rig)?;
    let images = dataset::load_step_images(&args.images, &rig, args.step)?;
    let external = if args.matches.is_empty() {
        None
    } else {
        let mut sets = Vec::with_capacity(args.matches.len());
        for path in &args.matches {
            sets.push(
                io::load_matches(path)
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
            );
        }
        Some(sets)
    };
    let source = match &external {
        Some(sets) => MatchSource::External(sets),
        None => MatchSource::BuiltIn,
    };
    let sparse = generate_pseudo_depths(&rig, &images, &cfg, source)?;

    let out_dir = args.out.as_ref().unwrap_or(&args.images);
    fs::create_dir_all(out_dir)?;
    let mut per_view = Vec::with_capacity(sparse.len());
    let mut total_points = 0usize;
    for per in &sparse {
        let path = dataset::sparse_path(out_dir, per.view, args.step);
        io::save_sparse_depth(&path, per)?;
        total_points += per.points.len();
        per_view.push(ViewPoints {
            view: per.view,
            points: per.points.len(),
            file: path.display().to_string(),
        });
    }

    let reference = match &args.gt {
        Some(gt_dir) => Some(compare_against_reference(
            &sparse,
            &dataset::load_step_depths(gt_dir, &rig, args.step)?,
        )),
        None => None,
    };

    match &reference {
        Some(cmp) => eprintln!(
            "pseudo-depth: {total_points} points across {} views, {:.1}% of {} compared within 2% of reference",
            rig.len(),
            100.0 * cmp.within_2_percent,
            cmp.compared
        ),
        None => eprintln!("pseudo-depth: {total_points} points across {} views", rig.len()),
    }

    super::emit_json(&PseudoSummary {
        step: args.step,
        total_points,
        per_view,
        reference,
    })
}

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use rigdepth_core::io;
use rigdepth_core::photometric::warp_image;

use crate::dataset;
use crate::error::CliError;

/// Reconstruct one view of a step from a neighboring view and report stats.
#[derive(Args, Debug)]
pub struct WarpArgs {
    /// Rig description JSON.
    #[arg(long)]
    pub rig: PathBuf,
    /// Directory holding `view{n}_step{t}.img` and `.dpt` rasters.
    #[arg(long)]
    pub images: PathBuf,
    /// View to reconstruct (its depth map drives the warp).
    #[arg(long)]
    pub target: usize,
    /// View sampled to produce the reconstruction.
    #[arg(long)]
    pub source: usize,
    /// Time step to process.
    #[arg(long, default_value_t = 0)]
    pub step: usize,
    /// Optional path to save the reconstructed image.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct WarpSummary {
    target: usize,
    source: usize,
    step: usize,
    valid_pixels: usize,
    valid_fraction: f64,
    mean_abs_error: f64,
}

pub fn run(args: &WarpArgs) -> Result<(), CliError> {
    let rig = dataset::load_rig(&args.rig)?;
    let n = rig.len();
    if args.target >= n || args.source >= n {
        return Err(CliError::Usage(format!(
            "view indices must be below {n}, got target {} and source {}",
            args.target, args.source
        )));
    }
    if args.target == args.source {
        return Err(CliError::Usage(
            "--target and --source must name different views".into(),
        ));
    }

    let images = dataset::load_step_images(&args.images, &rig, args.step)?;
    let depths = dataset::load_step_depths(&args.images, &rig, args.step)?;
    let cam_tgt = rig.camera(args.target)?.model;
    let cam_src = rig.camera(args.source)?.model;
    let rel = rig.relative_pose(args.target, args.source)?;

    let reconstruction = warp_image(
        &images[args.source],
        &depths[args.target],
        &cam_tgt,
        &cam_src,
        &rel,
    )?;

    let target_img = &images[args.target];
    if target_img.channels() != reconstruction.image.channels() {
        return Err(CliError::Data(format!(
            "target has {} channels but the reconstruction has {}",
            target_img.channels(),
            reconstruction.image.channels()
        )));
    }
    let channels = target_img.channels();
    let mut abs_err = 0.0;
    let mut valid_pixels = 0usize;
    for (idx, ok) in reconstruction.valid.iter().enumerate() {
        if !ok {
            continue;
        }
        valid_pixels += 1;
        for c in 0..channels {
            let i = idx * channels + c;
            abs_err += (reconstruction.image.data()[i] - target_img.data()[i]).abs();
        }
    }
    let mean_abs_error = if valid_pixels == 0 {
        0.0
    } else {
        abs_err / (valid_pixels * channels) as f64
    };

    if let Some(out) = &args.out {
        io::save_image(out, &reconstruction.image)?;
        eprintln!("wrote reconstruction to {}", out.display());
    }

    super::emit_json(&WarpSummary {
        target: args.target,
        source: args.source,
        step: args.step,
        valid_pixels,
        valid_fraction: reconstruction.valid_fraction(),
        mean_abs_error,
    })
}

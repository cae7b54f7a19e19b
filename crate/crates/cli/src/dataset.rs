//! On-disk dataset layout shared by the subcommands.
//!
//! A dataset directory holds `rig.json` plus one raster pair per camera and
//! time step, named `view{n}_step{t}.img` (intensity) and
//! `view{n}_step{t}.dpt` (depth).

use std::path::{Path, PathBuf};

use rigdepth_core::geometry::CameraRig;
use rigdepth_core::io;
use rigdepth_core::photometric::{DepthMap, Image};

use crate::error::CliError;

pub fn image_path(dir: &Path, view: usize, step: usize) -> PathBuf {
    dir.join(format!("view{view}_step{step}.img"))
}

pub fn depth_path(dir: &Path, view: usize, step: usize) -> PathBuf {
    dir.join(format!("view{view}_step{step}.dpt"))
}

pub fn sparse_path(dir: &Path, view: usize, step: usize) -> PathBuf {
    dir.join(format!("pseudo_view{view}_step{step}.json"))
}

fn with_path<T>(result: Result<T, io::IoError>, path: &Path) -> Result<T, CliError> {
    result.map_err(|e| match CliError::from(e) {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn load_rig(path: &Path) -> Result<CameraRig, CliError> {
    with_path(io::load_rig(path), path)
}

/// Loads one image per camera for the given step.
pub fn load_step_images(dir: &Path, rig: &CameraRig, step: usize) -> Result<Vec<Image>, CliError> {
    (0..rig.len())
        .map(|view| {
            let path = image_path(dir, view, step);
            with_path(io::load_image(&path), &path)
        })
        .collect()
}

/// Loads one depth map per camera for the given step.
pub fn load_step_depths(dir: &Path, rig: &CameraRig, step: usize) -> Result<Vec<DepthMap>, CliError> {
    (0..rig.len())
        .map(|view| {
            let path = depth_path(dir, view, step);
            with_path(io::load_depth(&path), &path)
        })
        .collect()
}

//! Dotted-key configuration overrides for `--set key=value` flags.
//!
//! Every subcommand that owns a tunable config accepts repeated `--set`
//! flags; keys name fields with dots (`matcher.min_ncc=0.8`). Unknown keys
//! and unparseable values are usage errors listing what would have been
//! accepted, so typos fail loudly instead of silently running defaults.

use rigdepth_core::evalmetrics::EvalConfig;
use rigdepth_core::sfm::SfmConfig;
use rigdepth_core::synth::SynthConfig;

use crate::error::CliError;

/// Splits a `key=value` argument; the value may itself contain `=`.
pub fn split_pair(arg: &str) -> Result<(&str, &str), CliError> {
    match arg.split_once('=') {
        Some((key, value)) if !key.is_empty() => Ok((key, value)),
        _ => Err(CliError::Usage(format!(
            "override `{arg}` is not of the form key=value"
        ))),
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, CliError> {
    let v: f64 = value
        .parse()
        .map_err(|_| CliError::Usage(format!("`{key}` expects a number, got `{value}`")))?;
    if !v.is_finite() {
        return Err(CliError::Usage(format!("`{key}` must be finite, got `{value}`")));
    }
    Ok(v)
}

fn parse_usize(key: &str, value: &str) -> Result<usize, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("`{key}` expects a non-negative integer, got `{value}`")))
}

fn parse_u32(key: &str, value: &str) -> Result<u32, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("`{key}` expects a non-negative integer, got `{value}`")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("`{key}` expects a non-negative integer, got `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(CliError::Usage(format!(
            "`{key}` expects true or false, got `{value}`"
        ))),
    }
}

fn unknown_key(key: &str, valid: &[&str]) -> CliError {
    CliError::Usage(format!(
        "unknown configuration key `{key}`; valid keys: {}",
        valid.join(", ")
    ))
}

const SYNTH_KEYS: &[&str] = &[
    "rig.n_cameras",
    "rig.ring_radius",
    "rig.width",
    "rig.height",
    "rig.focal_factor",
    "rig.min_overlap",
    "wall_distance",
    "ground_y",
    "sky_radius",
    "seed",
];

/// Applies one override to a synthetic-dataset config.
pub fn apply_synth(cfg: &mut SynthConfig, key: &str, value: &str) -> Result<(), CliError> {
    match key {
        "rig.n_cameras" => cfg.rig.n_cameras = parse_usize(key, value)?,
        "rig.ring_radius" => cfg.rig.ring_radius = parse_f64(key, value)?,
        "rig.width" => cfg.rig.width = parse_u32(key, value)?,
        "rig.height" => cfg.rig.height = parse_u32(key, value)?,
        "rig.focal_factor" => cfg.rig.focal_factor = parse_f64(key, value)?,
        "rig.min_overlap" => cfg.rig.min_overlap = parse_f64(key, value)?,
        "wall_distance" => cfg.wall_distance = parse_f64(key, value)?,
        "ground_y" => cfg.ground_y = parse_f64(key, value)?,
        "sky_radius" => cfg.sky_radius = parse_f64(key, value)?,
        "seed" => cfg.seed = parse_u64(key, value)?,
        _ => return Err(unknown_key(key, SYNTH_KEYS)),
    }
    Ok(())
}

const SFM_KEYS: &[&str] = &[
    "gamma",
    "gamma_ref_width",
    "min_depth",
    "max_depth",
    "region_fraction",
    "matcher.max_features",
    "matcher.patch_radius",
    "matcher.min_ncc",
    "matcher.harris_k",
    "matcher.quality_ratio",
    "matcher.nms_radius",
];

/// Applies one override to a pseudo-depth generation config.
pub fn apply_sfm(cfg: &mut SfmConfig, key: &str, value: &str) -> Result<(), CliError> {
    match key {
        "gamma" => cfg.gamma = parse_f64(key, value)?,
        "gamma_ref_width" => cfg.gamma_ref_width = parse_f64(key, value)?,
        "min_depth" => cfg.min_depth = parse_f64(key, value)?,
        "max_depth" => cfg.max_depth = parse_f64(key, value)?,
        "region_fraction" => cfg.region_fraction = parse_f64(key, value)?,
        "matcher.max_features" => cfg.matcher.max_features = parse_usize(key, value)?,
        "matcher.patch_radius" => cfg.matcher.patch_radius = parse_usize(key, value)?,
        "matcher.min_ncc" => cfg.matcher.min_ncc = parse_f64(key, value)?,
        "matcher.harris_k" => cfg.matcher.harris_k = parse_f64(key, value)?,
        "matcher.quality_ratio" => cfg.matcher.quality_ratio = parse_f64(key, value)?,
        "matcher.nms_radius" => cfg.matcher.nms_radius = parse_usize(key, value)?,
        _ => return Err(unknown_key(key, SFM_KEYS)),
    }
    Ok(())
}

const EVAL_KEYS: &[&str] = &["min_depth", "max_depth", "median_scaling"];

/// Applies one override to a depth-evaluation config.
pub fn apply_eval(cfg: &mut EvalConfig, key: &str, value: &str) -> Result<(), CliError> {
    match key {
        "min_depth" => cfg.min_depth = parse_f64(key, value)?,
        "max_depth" => cfg.max_depth = parse_f64(key, value)?,
        "median_scaling" => cfg.median_scaling = parse_bool(key, value)?,
        _ => return Err(unknown_key(key, EVAL_KEYS)),
    }
    Ok(())
}

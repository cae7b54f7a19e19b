use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use rigdepth_core::evalmetrics::{evaluate_depth, EvalConfig};
use rigdepth_core::io;
use rigdepth_core::photometric::DepthMap;

use crate::error::CliError;
use crate::overrides;

/// Score predicted depth maps against reference maps.
#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Predicted `.dpt` file, or a directory of them.
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference `.dpt` file, or a directory with matching file names.
    #[arg(long)]
    pub gt: PathBuf,
    /// Score raw predictions instead of median-rescaling them first.
    #[arg(long)]
    pub no_median_scaling: bool,
    /// Reference depths at or below this are ignored.
    #[arg(long)]
    pub min_depth: Option<f64>,
    /// Reference depths above this are ignored.
    #[arg(long)]
    pub max_depth: Option<f64>,
    /// Evaluation overrides as `key=value` (applied after the flags above).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

fn depth_files(dir: &Path) -> Result<BTreeSet<String>, CliError> {
    let mut names = BTreeSet::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".dpt") && entry.file_type()?.is_file() {
            names.insert(name);
        }
    }
    Ok(names)
}

/// Resolves `--pred`/`--gt` into matched file pairs: either two files or two
/// directories sharing identical `.dpt` file names.
fn resolve_pairs(pred: &Path, gt: &Path) -> Result<Vec<(PathBuf, PathBuf)>, CliError> {
    match (pred.is_dir(), gt.is_dir()) {
        (false, false) => Ok(vec![(pred.to_path_buf(), gt.to_path_buf())]),
        (true, true) => {
            let pred_names = depth_files(pred)?;
            let gt_names = depth_files(gt)?;
            if pred_names != gt_names {
                let only_pred: Vec<_> = pred_names.difference(&gt_names).cloned().collect();
                let only_gt: Vec<_> = gt_names.difference(&pred_names).cloned().collect();
                return Err(CliError::Data(format!(
                    "prediction and reference directories hold different .dpt files \
                     (only in --pred: [{}]; only in --gt: [{}])",
                    only_pred.join(", "),
                    only_gt.join(", ")
                )));
            }
            if pred_names.is_empty() {
                return Err(CliError::Data(format!(
                    "no .dpt files found in {}",
                    pred.display()
                )));
            }
            Ok(pred_names
                .into_iter()
                .map(|name| (pred.join(&name), gt.join(&name)))
                .collect())
        }
        _ => Err(CliError::Usage(
            "--pred and --gt must both be files or both be directories".into(),
        )),
    }
}

pub fn run(args: &EvaluateArgs) -> Result<(), CliError> {
    let mut cfg = EvalConfig::default();
    if let Some(v) = args.min_depth {
        cfg.min_depth = v;
    }
    if let Some(v) = args.max_depth {
        cfg.max_depth = v;
    }
    if args.no_median_scaling {
        cfg.median_scaling = false;
    }
    for set in &args.sets {
        let (key, value) = overrides::split_pair(set)?;
        overrides::apply_eval(&mut cfg, key, value)?;
    }

    let pairs = resolve_pairs(&args.pred, &args.gt)?;
    // Pool every pair into one long 1-row map so median scaling and the
    // metrics are computed jointly over the whole set.
    let mut pred_all = Vec::new();
    let mut gt_all = Vec::new();
    for (pred_path, gt_path) in &pairs {
        let pred = io::load_depth(pred_path)
            .map_err(|e| CliError::Data(format!("{}: {e}", pred_path.display())))?;
        let gt = io::load_depth(gt_path)
            .map_err(|e| CliError::Data(format!("{}: {e}", gt_path.display())))?;
        if pred.width() != gt.width() || pred.height() != gt.height() {
            return Err(CliError::Data(format!(
                "{} is {}x{} but {} is {}x{}",
                pred_path.display(),
                pred.width(),
                pred.height(),
                gt_path.display(),
                gt.width(),
                gt.height()
            )));
        }
        for i in 0..pred.data().len() {
            // Invalid slots re-enter as 0, which stays invalid in the pool.
            pred_all.push(if pred.valid()[i] { pred.data()[i] } else { 0.0 });
            gt_all.push(if gt.valid()[i] { gt.data()[i] } else { 0.0 });
        }
    }
    let n = pred_all.len();
    let pred_map = DepthMap::from_data(n, 1, pred_all)?;
    let gt_map = DepthMap::from_data(n, 1, gt_all)?;

    let result = evaluate_depth(&pred_map, &gt_map, &cfg)?;
    eprintln!(
        "evaluated {} map pair(s): {} pixels in range",
        pairs.len(),
        result.n_pixels
    );
    super::emit_json(&result)
}

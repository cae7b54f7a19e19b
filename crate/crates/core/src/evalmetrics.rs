//! Depth evaluation: the standard error/accuracy metrics, median scaling, and
//! a cross-view depth-consistency measure over a calibrated rig.

use crate::geometry::{CameraRig, GeometryError, Pixel};
use crate::photometric::DepthMap;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no valid pixels to evaluate")]
    NoValidPixels,
    #[error("invalid eval config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Evaluation window and scaling policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// Ground-truth depths must exceed this to count (exclusive).
    pub min_depth: f64,
    /// Ground-truth depths must not exceed this (inclusive).
    pub max_depth: f64,
    /// Rescale predictions by median(gt)/median(pred) before scoring.
    pub median_scaling: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            min_depth: 0.0,
            max_depth: 200.0,
            median_scaling: true,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.min_depth.is_finite() && self.max_depth.is_finite())
            || self.min_depth < 0.0
            || self.min_depth >= self.max_depth
        {
            return Err(EvalError::InvalidConfig(format!(
                "need 0 <= min_depth < max_depth, got [{}, {}]",
                self.min_depth, self.max_depth
            )));
        }
        Ok(())
    }
}

/// The metric suite over one prediction/ground-truth pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthEvalResult {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_pixels: usize,
    /// The factor predictions were multiplied by (1 when scaling is off).
    pub scale_factor: f64,
}

/// Median with the even-count convention: mean of the two middle values.
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// `median(gt) / median(pred)` over jointly valid pixels.
pub fn median_scale_factor(pred: &DepthMap, gt: &DepthMap) -> Result<f64, EvalError> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(EvalError::DimensionMismatch(format!(
            "pred is {}x{}, gt is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut p = Vec::new();
    let mut g = Vec::new();
    for i in 0..pred.data().len() {
        if pred.valid()[i] && gt.valid()[i] {
            p.push(pred.data()[i]);
            g.push(gt.data()[i]);
        }
    }
    if p.is_empty() {
        return Err(EvalError::NoValidPixels);
    }
    Ok(median(&mut g) / median(&mut p))
}

/// Scores `pred` against `gt` over pixels where both are valid and gt lies in
/// `(min_depth, max_depth]`, optionally median-scaling `pred` first.
pub fn evaluate_depth(
    pred: &DepthMap,
    gt: &DepthMap,
    cfg: &EvalConfig,
) -> Result<DepthEvalResult, EvalError> {
    cfg.validate()?;
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(EvalError::DimensionMismatch(format!(
            "pred is {}x{}, gt is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut p = Vec::new();
    let mut g = Vec::new();
    for i in 0..pred.data().len() {
        if pred.valid()[i] && gt.valid()[i] {
            let gv = gt.data()[i];
            if gv > cfg.min_depth && gv <= cfg.max_depth {
                p.push(pred.data()[i]);
                g.push(gv);
            }
        }
    }
    let n = p.len();
    if n == 0 {
        return Err(EvalError::NoValidPixels);
    }
    let scale_factor = if cfg.median_scaling {
        median(&mut g.clone()) / median(&mut p.clone())
    } else {
        1.0
    };
    let mut abs_rel = 0.0;
    let mut sq_rel = 0.0;
    let mut sq = 0.0;
    let mut sq_log = 0.0;
    let (mut d1, mut d2, mut d3) = (0usize, 0usize, 0usize);
    for (pv, gv) in p.iter().zip(&g) {
        let d = pv * scale_factor;
        let diff = d - gv;
        abs_rel += diff.abs() / gv;
        sq_rel += diff * diff / gv;
        sq += diff * diff;
        let log_diff = d.ln() - gv.ln();
        sq_log += log_diff * log_diff;
        let ratio = (d / gv).max(gv / d);
        if ratio < 1.25 {
            d1 += 1;
        }
        if ratio < 1.25 * 1.25 {
            d2 += 1;
        }
        if ratio < 1.25 * 1.25 * 1.25 {
            d3 += 1;
        }
    }
    let nf = n as f64;
    Ok(DepthEvalResult {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (sq / nf).sqrt(),
        rmse_log: (sq_log / nf).sqrt(),
        delta1: d1 as f64 / nf,
        delta2: d2 as f64 / nf,
        delta3: d3 as f64 / nf,
        n_pixels: n,
        scale_factor,
    })
}

/// One adjacency edge's consistency score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairConsistency {
    pub view_i: usize,
    pub view_j: usize,
    /// Mean Abs Rel between transferred and observed depth; `None` when the
    /// views share no usable pixels.
    pub abs_rel: Option<f64>,
    pub n_pixels: usize,
}

/// Consistency over all adjacency edges plus their mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub pairs: Vec<PairConsistency>,
    /// Mean over edges with at least one usable pixel; `None` if no edge has any.
    pub mean: Option<f64>,
}

/// For every adjacency edge (i, j): lift view i's valid depths to 3-D,
/// transfer them into view j, and compare the transferred z against view j's
/// bilinearly sampled depth map via Abs Rel (view j as reference). Scale
/// errors do not cancel because the rig extrinsics are metric.
pub fn depth_consistency(
    rig: &CameraRig,
    depths: &[DepthMap],
) -> Result<ConsistencyReport, EvalError> {
    if depths.len() != rig.len() {
        return Err(EvalError::DimensionMismatch(format!(
            "{} depth maps for a {}-camera rig",
            depths.len(),
            rig.len()
        )));
    }
    for (idx, d) in depths.iter().enumerate() {
        let model = &rig.camera(idx)?.model;
        if d.width() != model.width as usize || d.height() != model.height as usize {
            return Err(EvalError::DimensionMismatch(format!(
                "depth map {idx} is {}x{}, camera expects {}x{}",
                d.width(),
                d.height(),
                model.width,
                model.height
            )));
        }
    }
    let mut pairs = Vec::with_capacity(rig.adjacency().len());
    for &(i, j) in rig.adjacency() {
        let cam_i = &rig.camera(i)?.model;
        let cam_j = &rig.camera(j)?.model;
        let rel = rig.relative_pose(i, j)?;
        let (depth_i, depth_j) = (&depths[i], &depths[j]);
        let mut sum = 0.0;
        let mut count = 0usize;
        for y in 0..depth_i.height() {
            for x in 0..depth_i.width() {
                let Some(d) = depth_i.get(x, y) else { continue };
                let Ok(point_i) = cam_i.backproject(Pixel::new(x as f64, y as f64), d) else {
                    continue;
                };
                let point_j = rel.transform_point(&point_i);
                let Ok(q) = cam_j.project(&point_j) else { continue };
                let Some(observed) = depth_j.bilinear_sample(q) else {
                    continue;
                };
                sum += (point_j.z - observed).abs() / observed;
                count += 1;
            }
        }
        pairs.push(PairConsistency {
            view_i: i,
            view_j: j,
            abs_rel: (count > 0).then(|| sum / count as f64),
            n_pixels: count,
        });
    }
    let scored: Vec<f64> = pairs.iter().filter_map(|p| p.abs_rel).collect();
    let mean = (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64);
    Ok(ConsistencyReport { pairs, mean })
}

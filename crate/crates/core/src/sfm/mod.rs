//! Sparse structure-from-motion across a camera rig: two-view triangulation
//! of matched corners between overlapping neighbors, epipolar consistency
//! filtering, and per-view sparse pseudo-depth extraction. The pseudo-depths
//! inherit the rig's metric scale through the known extrinsics, so depth maps
//! supervised against them come out in meters rather than up-to-scale.

mod matcher;

pub use matcher::{extract_matches, MatcherParams};

use crate::geometry::{
    CameraModel, CameraRig, FundamentalMatrix, GeometryError, Pixel, PoseSE3,
};
use crate::photometric::{DepthMap, Image};
use nalgebra::{Matrix4, RowVector4, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SfmError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid correspondences: {0}")]
    InvalidMatches(String),
    #[error("rays are near-parallel ({angle_deg:.4} deg); triangulation is unstable")]
    NearParallel { angle_deg: f64 },
    #[error("triangulated point lies behind camera {view}")]
    BehindCamera { view: usize },
    #[error("triangulation system is degenerate")]
    TriangulationFailed,
    #[error("expected {expected} images, got {got}")]
    WrongImageCount { expected: usize, got: usize },
    #[error("image dimensions do not match camera {view}")]
    DimensionMismatch { view: usize },
}

/// One correspondence: a pixel in view i matched to a pixel in view j with a
/// matcher confidence score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub q_i: Pixel,
    pub q_j: Pixel,
    pub score: f64,
}

/// Which vertical strip of an image participates in matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandSide {
    Left,
    Right,
    Full,
}

/// A pair of vertical bands restricting matching to the overlapping strips of
/// two images. `fraction` is the band width as a fraction of image width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMask {
    pub fraction: f64,
    pub side_i: BandSide,
    pub side_j: BandSide,
}

impl RegionMask {
    pub fn new(fraction: f64, side_i: BandSide, side_j: BandSide) -> Result<Self, SfmError> {
        if !(fraction.is_finite() && fraction > 0.0 && fraction <= 1.0) {
            return Err(SfmError::InvalidConfig(format!(
                "region fraction must be in (0, 1], got {fraction}"
            )));
        }
        Ok(Self { fraction, side_i, side_j })
    }

    /// Whole image on both sides.
    pub fn full() -> Self {
        Self { fraction: 1.0, side_i: BandSide::Full, side_j: BandSide::Full }
    }

    fn band(&self, side: BandSide, width: usize) -> (f64, f64) {
        let w = width as f64;
        let span = self.fraction * w;
        match side {
            BandSide::Left => (0.0, span),
            BandSide::Right => (w - span, w),
            BandSide::Full => (0.0, w),
        }
    }

    /// Half-open x-range `[lo, hi)` of the band in view i.
    pub fn band_i(&self, width: usize) -> (f64, f64) {
        self.band(self.side_i, width)
    }

    /// Half-open x-range `[lo, hi)` of the band in view j.
    pub fn band_j(&self, width: usize) -> (f64, f64) {
        self.band(self.side_j, width)
    }

    /// Chooses the bands for an adjacent pair from the rig geometry: the
    /// overlap with a neighbor sits on the side its optical axis (or, for
    /// near-parallel axes, its position) points toward.
    pub fn auto_for_edge(
        rig: &CameraRig,
        i: usize,
        j: usize,
        fraction: f64,
    ) -> Result<Self, SfmError> {
        let rel = rig.relative_pose(i, j)?; // camera-i coords -> camera-j coords
        let inv = rel.inverse();
        // Direction of j's optical axis expressed in i, and vice versa.
        let axis_j_in_i = inv.rotation() * Vector3::z();
        let axis_i_in_j = rel.rotation() * Vector3::z();
        let pos_j_in_i = inv.translation();
        let pos_i_in_j = rel.translation();
        let pick = |axis_x: f64, pos_x: f64| {
            let x = if axis_x.abs() > 0.05 { axis_x } else { pos_x };
            if x > 0.05 {
                BandSide::Right
            } else if x < -0.05 {
                BandSide::Left
            } else {
                BandSide::Full
            }
        };
        Self::new(fraction, pick(axis_j_in_i.x, pos_j_in_i.x), pick(axis_i_in_j.x, pos_i_in_j.x))
    }
}

/// Validated set of correspondences between two named views.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub view_i: usize,
    pub view_j: usize,
    pub pairs: Vec<Match>,
}

impl CorrespondenceSet {
    /// Builds a set, checking every endpoint is finite and inside its image
    /// and that no pixel in view i is matched twice.
    pub fn new(
        view_i: usize,
        view_j: usize,
        pairs: Vec<Match>,
        dims_i: (usize, usize),
        dims_j: (usize, usize),
    ) -> Result<Self, SfmError> {
        let check = |p: &Pixel, (w, h): (usize, usize), label: &str| -> Result<(), SfmError> {
            if !(p.u.is_finite() && p.v.is_finite()) {
                return Err(SfmError::InvalidMatches(format!("non-finite pixel in {label}")));
            }
            if p.u < 0.0 || p.u > (w - 1) as f64 || p.v < 0.0 || p.v > (h - 1) as f64 {
                return Err(SfmError::InvalidMatches(format!(
                    "pixel ({}, {}) outside {label} bounds {w}x{h}",
                    p.u, p.v
                )));
            }
            Ok(())
        };
        let mut seen = std::collections::HashSet::new();
        for m in &pairs {
            check(&m.q_i, dims_i, "view i")?;
            check(&m.q_j, dims_j, "view j")?;
            if !(m.score.is_finite() && m.score >= 0.0) {
                return Err(SfmError::InvalidMatches(format!("bad score {}", m.score)));
            }
            if !seen.insert((m.q_i.u.to_bits(), m.q_i.v.to_bits())) {
                return Err(SfmError::InvalidMatches(format!(
                    "duplicate source pixel ({}, {})",
                    m.q_i.u, m.q_i.v
                )));
            }
        }
        Ok(Self { view_i, view_j, pairs })
    }
}

/// Pipeline configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SfmConfig {
    /// Epipolar distance threshold in pixels at `gamma_ref_width`.
    pub gamma: f64,
    /// Image width the threshold is calibrated for; the effective threshold
    /// scales linearly with actual width.
    pub gamma_ref_width: f64,
    /// Triangulated depths outside `[min_depth, max_depth]` are discarded.
    pub min_depth: f64,
    pub max_depth: f64,
    /// Width fraction of the matching bands for adjacent pairs.
    pub region_fraction: f64,
    pub matcher: MatcherParams,
}

impl Default for SfmConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            gamma_ref_width: 640.0,
            min_depth: 0.1,
            max_depth: 200.0,
            region_fraction: 1.0 / 3.0,
            matcher: MatcherParams::default(),
        }
    }
}

impl SfmConfig {
    pub fn validate(&self) -> Result<(), SfmError> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(SfmError::InvalidConfig(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.gamma_ref_width.is_finite() && self.gamma_ref_width > 0.0) {
            return Err(SfmError::InvalidConfig("gamma_ref_width must be positive".into()));
        }
        if !(self.min_depth.is_finite() && self.max_depth.is_finite() && 0.0 < self.min_depth && self.min_depth < self.max_depth) {
            return Err(SfmError::InvalidConfig(format!(
                "need 0 < min_depth < max_depth, got [{}, {}]",
                self.min_depth, self.max_depth
            )));
        }
        if !(self.region_fraction.is_finite() && self.region_fraction > 0.0 && self.region_fraction <= 1.0) {
            return Err(SfmError::InvalidConfig(format!(
                "region_fraction must be in (0, 1], got {}",
                self.region_fraction
            )));
        }
        Ok(())
    }

    /// Epipolar threshold for an image of the given width.
    pub fn effective_gamma(&self, width: usize) -> f64 {
        self.gamma * width as f64 / self.gamma_ref_width
    }
}

/// Where correspondences come from: the built-in matcher, or caller-provided
/// sets (pairs without a provided set contribute nothing).
#[derive(Debug, Clone, Copy)]
pub enum MatchSource<'a> {
    BuiltIn,
    External(&'a [CorrespondenceSet]),
}

/// Sparse metric depths for one view: pixel locations with depth in that
/// camera's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePseudoDepth {
    pub view: usize,
    pub points: Vec<(Pixel, f64)>,
}

/// Minimum triangulation ray angle: 0.1 degrees.
const MIN_RAY_ANGLE_RAD: f64 = 0.1 * std::f64::consts::PI / 180.0;

/// Triangulates one correspondence by the direct linear transform. `rel` maps
/// camera-i coordinates into camera-j. Returns the point in camera i's frame.
pub fn triangulate(
    q_i: &Pixel,
    q_j: &Pixel,
    cam_i: &CameraModel,
    cam_j: &CameraModel,
    rel: &PoseSE3,
) -> Result<Vector3<f64>, SfmError> {
    if rel.translation().norm() < 1e-12 {
        return Err(SfmError::InvalidConfig(
            "relative pose has no translation; triangulation needs a baseline".into(),
        ));
    }
    // Reject near-parallel ray pairs before solving: the system is well
    // conditioned only when the rays subtend a usable angle.
    let ray_i = (cam_i.intrinsic_inverse() * q_i.homogeneous()).normalize();
    let ray_j_in_i =
        (rel.rotation().transpose() * (cam_j.intrinsic_inverse() * q_j.homogeneous())).normalize();
    let angle = ray_i.dot(&ray_j_in_i).clamp(-1.0, 1.0).acos();
    if angle < MIN_RAY_ANGLE_RAD {
        return Err(SfmError::NearParallel { angle_deg: angle.to_degrees() });
    }

    // Projection matrices in camera i's frame: P_i = [K_i | 0], P_j = K_j [R | t].
    let k_i = cam_i.intrinsic_matrix();
    let k_j = cam_j.intrinsic_matrix();
    let mut p_i = [[0.0; 4]; 3];
    let mut p_j = [[0.0; 4]; 3];
    let rt = {
        let r = rel.rotation();
        let t = rel.translation();
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z],
        ]
    };
    for row in 0..3 {
        for col in 0..4 {
            let mut acc_j = 0.0;
            for m in 0..3 {
                acc_j += k_j[(row, m)] * rt[m][col];
            }
            p_j[row][col] = acc_j;
            p_i[row][col] = if col < 3 { k_i[(row, col)] } else { 0.0 };
        }
    }

    let row = |p: &[[f64; 4]; 3], coeff: f64, a: usize| -> RowVector4<f64> {
        RowVector4::new(
            coeff * p[2][0] - p[a][0],
            coeff * p[2][1] - p[a][1],
            coeff * p[2][2] - p[a][2],
            coeff * p[2][3] - p[a][3],
        )
    };
    let a = Matrix4::from_rows(&[
        row(&p_i, q_i.u, 0),
        row(&p_i, q_i.v, 1),
        row(&p_j, q_j.u, 0),
        row(&p_j, q_j.v, 1),
    ]);
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(SfmError::TriangulationFailed)?;
    // Singular value ordering is not guaranteed; find the smallest explicitly.
    let mut min_idx = 0;
    for k in 1..4 {
        if svd.singular_values[k] < svd.singular_values[min_idx] {
            min_idx = k;
        }
    }
    let x = v_t.row(min_idx);
    let w = x[3];
    let xyz_norm = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    if w.abs() <= 1e-12 * xyz_norm.max(1e-300) {
        return Err(SfmError::TriangulationFailed);
    }
    let point = Vector3::new(x[0] / w, x[1] / w, x[2] / w);
    if point.z <= 0.0 {
        return Err(SfmError::BehindCamera { view: 0 });
    }
    let in_j = rel.transform_point(&point);
    if in_j.z <= 0.0 {
        return Err(SfmError::BehindCamera { view: 1 });
    }
    Ok(point)
}

/// Keeps only the matches whose second endpoint lies within `gamma` pixels of
/// its epipolar line. Pairs on a degenerate line are dropped. Order is
/// preserved, so the filter is idempotent.
pub fn epipolar_filter(
    matches: &[Match],
    f: &FundamentalMatrix,
    gamma: f64,
) -> Vec<Match> {
    matches
        .iter()
        .filter(|m| match f.epipolar_distance(m.q_i, m.q_j) {
            Ok(d) => d <= gamma,
            Err(_) => false,
        })
        .copied()
        .collect()
}

/// Bilinear sample of a grayscale buffer; `None` outside the strict domain
/// where all four interpolation corners exist.
fn bilinear_gray(gray: &[f64], w: usize, h: usize, x: f64, y: f64) -> Option<f64> {
    if !(x >= 0.0 && y >= 0.0 && x < (w - 1) as f64 && y < (h - 1) as f64) {
        return None;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = gray[y0 * w + x0] * (1.0 - fx) + gray[y0 * w + x0 + 1] * fx;
    let bot = gray[(y0 + 1) * w + x0] * (1.0 - fx) + gray[(y0 + 1) * w + x0 + 1] * fx;
    Some(top + (bot - top) * fy)
}

/// Zero-(weighted-)mean, unit-norm patch under the given weights; `None` for
/// flat patches.
fn weighted_normalize(mut patch: Vec<f64>, weights: &[f64]) -> Option<Vec<f64>> {
    let wsum: f64 = weights.iter().sum();
    let mean = patch.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / wsum;
    let mut norm = 0.0;
    for (v, w) in patch.iter_mut().zip(weights) {
        *v = (*v - mean) * w.sqrt();
        norm += *v * *v;
    }
    let norm = norm.sqrt();
    if norm < 1e-9 {
        return None;
    }
    for v in &mut patch {
        *v /= norm;
    }
    Some(patch)
}

/// Coarse depth-sweep step and the fine step used around the coarse peak
/// (both multiplicative).
const COARSE_REL_STEP: f64 = 0.02;
const FINE_REL_STEP: f64 = 0.0025;
/// Fine sweep half-range in steps: ±16 × 0.25% ≈ ±4%, covering the coarse
/// spacing with margin.
const FINE_STEPS: i32 = 16;
/// A candidate further than this relative depth distance from the peak is "a
/// different depth"; if any such candidate scores within the margin of the
/// peak, the corner is ambiguous and dropped.
const AMBIGUITY_EXCLUSION: f64 = 0.10;
const AMBIGUITY_MARGIN: f64 = 0.05;

/// Plane-normal hypotheses for the oriented sweep, in camera-i coordinates
/// (x right, y down, z forward): the forward axis yawed by 0, ±30, ±60
/// degrees (vertical surfaces at a range of azimuths) and straight up (a
/// ground plane under level cameras). At the correct depth and normal the
/// induced local warp is exact for a locally planar scene, so the true peak
/// survives even severe inter-view foreshortening.
fn normal_hypotheses() -> Vec<Vector3<f64>> {
    let mut normals = Vec::with_capacity(6);
    for deg in [-60.0f64, -30.0, 0.0, 30.0, 60.0] {
        let a = deg.to_radians();
        normals.push(Vector3::new(a.sin(), 0.0, a.cos()));
    }
    normals.push(Vector3::new(0.0, -1.0, 0.0));
    normals
}

/// Patch scorer for the oriented depth sweep of one corner: holds the
/// normalized Gaussian-weighted reference patch around `q_i` and the tap ray
/// directions, and scores candidate (depth, plane-orientation) hypotheses by
/// NCC of the induced view-j resampling against the reference.
struct SweepScorer<'a> {
    weights: Vec<f64>,
    ref_patch: Vec<f64>,
    dir0: Vector3<f64>,
    tap_dirs: Vec<Vector3<f64>>,
    gray_j: &'a [f64],
    cam_j: &'a CameraModel,
    rel: &'a PoseSE3,
}

impl<'a> SweepScorer<'a> {
    /// `None` when the reference patch cannot be sampled or is flat.
    fn new(
        q_i: Pixel,
        gray_i: &[f64],
        gray_j: &'a [f64],
        cam_i: &CameraModel,
        cam_j: &'a CameraModel,
        rel: &'a PoseSE3,
        patch_radius: usize,
    ) -> Option<Self> {
        let r = patch_radius as i32;
        let (wi, hi) = (cam_i.width as usize, cam_i.height as usize);
        let side = (2 * r + 1) as usize;
        let sigma = (r as f64).max(1.0) * 0.6;
        let mut weights = Vec::with_capacity(side * side);
        for dy in -r..=r {
            for dx in -r..=r {
                let d2 = (dx * dx + dy * dy) as f64;
                weights.push((-d2 / (2.0 * sigma * sigma)).exp());
            }
        }

        let mut ref_patch = Vec::with_capacity(side * side);
        for dy in -r..=r {
            for dx in -r..=r {
                let v = bilinear_gray(gray_i, wi, hi, q_i.u + dx as f64, q_i.v + dy as f64)?;
                ref_patch.push(v);
            }
        }
        let ref_patch = weighted_normalize(ref_patch, &weights)?;

        // Ray directions (z = 1 parameterization) for every patch tap; a
        // tap's plane intersection has its z coordinate as the ray parameter.
        let dir0 = Vector3::new(
            (q_i.u - cam_i.cx) / cam_i.fx,
            (q_i.v - cam_i.cy) / cam_i.fy,
            1.0,
        );
        let mut tap_dirs = Vec::with_capacity(side * side);
        for dy in -r..=r {
            for dx in -r..=r {
                tap_dirs.push(Vector3::new(
                    (q_i.u + dx as f64 - cam_i.cx) / cam_i.fx,
                    (q_i.v + dy as f64 - cam_i.cy) / cam_i.fy,
                    1.0,
                ));
            }
        }
        Some(Self { weights, ref_patch, dir0, tap_dirs, gray_j, cam_j, rel })
    }

    /// NCC against the reference for a local plane with orientation `n`
    /// through the point at depth `d` on q_i's ray; `None` when any tap
    /// leaves view j or the warped patch is flat.
    fn score(&self, d: f64, n: &Vector3<f64>) -> Option<f64> {
        let (wj, hj) = (self.cam_j.width as usize, self.cam_j.height as usize);
        let rho = (self.dir0 * d).dot(n);
        let mut patch = Vec::with_capacity(self.tap_dirs.len());
        for dir in &self.tap_dirs {
            let denom = dir.dot(n);
            if denom.abs() < 1e-9 {
                return None;
            }
            let t = rho / denom;
            if t <= 0.0 {
                return None;
            }
            let p = self.rel.transform_point(&(dir * t));
            if p.z <= 1e-9 {
                return None;
            }
            let u = self.cam_j.fx * p.x / p.z + self.cam_j.cx;
            let v = self.cam_j.fy * p.y / p.z + self.cam_j.cy;
            patch.push(bilinear_gray(self.gray_j, wj, hj, u, v)?);
        }
        let patch = weighted_normalize(patch, &self.weights)?;
        Some(self.ref_patch.iter().zip(&patch).map(|(a, b)| a * b).sum())
    }

    /// Best score over all plane orientations at one depth.
    fn score_over_normals(&self, d: f64, normals: &[Vector3<f64>]) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (ni, n) in normals.iter().enumerate() {
            if let Some(s) = self.score(d, n) {
                if best.map_or(true, |(bs, _)| s > bs) {
                    best = Some((s, ni));
                }
            }
        }
        best
    }
}

/// Searches view j for the correspondence of `q_i` by sweeping candidate
/// depths along view i's ray — the 1-D family that traces q_i's epipolar
/// line in view j. At each depth the patch around `q_i` is mapped into view
/// j as if it lay on a local plane through the candidate point, trying each
/// orientation from [`normal_hypotheses`], and scored with Gaussian-weighted
/// NCC. A coarse full-range sweep picks the peak and rejects ambiguous
/// corners (a rival peak at a clearly different depth), a fine sweep plus a
/// parabolic fit in log-depth localizes it, and the endpoint is emitted by
/// exactly projecting `q_i` at the winning depth, so the pair is
/// epipolar-consistent by construction. `None` when the corner is flat,
/// never visible in view j, below the NCC floor, or ambiguous.
fn ray_sweep_match(
    q_i: Pixel,
    gray_i: &[f64],
    gray_j: &[f64],
    cam_i: &CameraModel,
    cam_j: &CameraModel,
    rel: &PoseSE3,
    config: &SfmConfig,
) -> Option<(Pixel, f64)> {
    let scorer = SweepScorer::new(
        q_i,
        gray_i,
        gray_j,
        cam_i,
        cam_j,
        rel,
        config.matcher.patch_radius,
    )?;
    let normals = normal_hypotheses();
    let (wj, hj) = (cam_j.width as usize, cam_j.height as usize);

    // Coarse sweep over the whole admissible depth window.
    let mut coarse: Vec<(f64, f64)> = Vec::new(); // (ln d, score)
    let mut best_ln_d = 0.0;
    let mut best_score = f64::NEG_INFINITY;
    let mut best_normal = 0;
    let mut d = config.min_depth;
    while d <= config.max_depth {
        if let Some((s, ni)) = scorer.score_over_normals(d, &normals) {
            let ln_d = d.ln();
            coarse.push((ln_d, s));
            if s > best_score {
                best_score = s;
                best_ln_d = ln_d;
                best_normal = ni;
            }
        }
        d *= 1.0 + COARSE_REL_STEP;
    }
    if !best_score.is_finite() || best_score < config.matcher.min_ncc {
        return None;
    }
    let exclusion = (1.0 + AMBIGUITY_EXCLUSION).ln();
    let rival = coarse
        .iter()
        .filter(|(ln_d, _)| (ln_d - best_ln_d).abs() > exclusion)
        .map(|&(_, s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if rival > best_score - AMBIGUITY_MARGIN {
        return None;
    }

    // Fine sweep around the coarse peak (winning orientation only), then a
    // parabolic fit in log-depth.
    let n_best = normals[best_normal];
    let d_coarse = best_ln_d.exp();
    let mut scores = vec![None; (2 * FINE_STEPS + 1) as usize];
    let mut best_k = 0i32;
    let mut fine_best = f64::NEG_INFINITY;
    for k in -FINE_STEPS..=FINE_STEPS {
        let s = scorer.score(d_coarse * (1.0 + FINE_REL_STEP).powi(k), &n_best);
        scores[(k + FINE_STEPS) as usize] = s;
        if let Some(s) = s {
            if s > fine_best {
                fine_best = s;
                best_k = k;
            }
        }
    }
    if !fine_best.is_finite() || fine_best < config.matcher.min_ncc {
        return None;
    }
    let mut k_refined = best_k as f64;
    if best_k > -FINE_STEPS && best_k < FINE_STEPS {
        if let (Some(sm), Some(s0), Some(sp)) = (
            scores[(best_k - 1 + FINE_STEPS) as usize],
            scores[(best_k + FINE_STEPS) as usize],
            scores[(best_k + 1 + FINE_STEPS) as usize],
        ) {
            let curvature = sm + sp - 2.0 * s0;
            if curvature < -1e-12 {
                k_refined += ((sm - sp) / (2.0 * curvature)).clamp(-0.5, 0.5);
            }
        }
    }
    let d_star = d_coarse * (1.0 + FINE_REL_STEP).powf(k_refined);

    let dir_x = (q_i.u - cam_i.cx) / cam_i.fx;
    let dir_y = (q_i.v - cam_i.cy) / cam_i.fy;
    let p = rel.transform_point(&Vector3::new(dir_x * d_star, dir_y * d_star, d_star));
    if p.z <= 1e-9 {
        return None;
    }
    let q_j = Pixel::new(cam_j.fx * p.x / p.z + cam_j.cx, cam_j.fy * p.y / p.z + cam_j.cy);
    // Keep a safety margin to view j's border: when the true correspondence
    // lies just outside, a shifted look-alike peak barely inside can win, so
    // endpoints that close to the edge are not trustworthy.
    let margin = (config.matcher.patch_radius + 4) as f64;
    if !(q_j.u >= margin
        && q_j.u <= (wj - 1) as f64 - margin
        && q_j.v >= margin
        && q_j.v <= (hj - 1) as f64 - margin)
    {
        return None;
    }
    Some((q_j, fine_best))
}

/// Built-in correspondence generation for one adjacency edge: Harris corners
/// are detected in the strip of view i that faces view j, and each corner is
/// matched by [`ray_sweep_match`] — a normalized-patch correlation search
/// constrained to the corner's epipolar line in view j, parameterized by
/// depth. Corners whose ray never enters view j simply find no candidates.
fn builtin_edge_matches(
    images: &[Image],
    rig: &CameraRig,
    i: usize,
    j: usize,
    config: &SfmConfig,
) -> Result<Vec<Match>, SfmError> {
    let cam_i = rig.camera(i)?.model;
    let cam_j = rig.camera(j)?.model;
    let rel = rig.relative_pose(i, j)?;
    let auto = RegionMask::auto_for_edge(rig, i, j, config.region_fraction)?;
    let region = RegionMask::new(config.region_fraction, auto.side_i, auto.side_i)?;
    let band = region.band_i(cam_i.width as usize);
    let corners = matcher::band_corners(&images[i], band, &config.matcher);

    let gray_i = matcher::grayscale(&images[i]);
    let gray_j = matcher::grayscale(&images[j]);
    let mut out = Vec::new();
    for (x, y) in corners {
        let q_i = Pixel::new(x as f64, y as f64);
        if let Some((q_j, score)) =
            ray_sweep_match(q_i, &gray_i, &gray_j, &cam_i, &cam_j, &rel, config)
        {
            out.push(Match { q_i, q_j, score });
        }
    }
    Ok(out)
}

/// Runs the sparse pipeline over every adjacent pair of the rig: match (or
/// look up) correspondences, filter them against the fundamental matrix of
/// the known relative pose, triangulate survivors, and bin the depths into
/// per-view collections. Both endpoints of each triangulated match contribute
/// a depth sample — the point expressed in each camera's own frame.
pub fn generate_pseudo_depths(
    rig: &CameraRig,
    images: &[Image],
    config: &SfmConfig,
    source: MatchSource<'_>,
) -> Result<Vec<SparsePseudoDepth>, SfmError> {
    config.validate()?;
    let n = rig.len();
    if images.len() != n {
        return Err(SfmError::WrongImageCount { expected: n, got: images.len() });
    }
    for (idx, img) in images.iter().enumerate() {
        let model = &rig.camera(idx)?.model;
        if img.width() != model.width as usize || img.height() != model.height as usize {
            return Err(SfmError::DimensionMismatch { view: idx });
        }
    }

    let mut out: Vec<SparsePseudoDepth> =
        (0..n).map(|view| SparsePseudoDepth { view, points: Vec::new() }).collect();

    for &(i, j) in rig.adjacency() {
        let cam_i = &rig.camera(i)?.model;
        let cam_j = &rig.camera(j)?.model;
        let matches: Vec<Match> = match source {
            MatchSource::BuiltIn => builtin_edge_matches(images, rig, i, j, config)?,
            MatchSource::External(sets) => {
                match sets.iter().find(|s| s.view_i == i && s.view_j == j) {
                    Some(set) => {
                        // Re-validate against this rig's image dimensions.
                        let checked = CorrespondenceSet::new(
                            i,
                            j,
                            set.pairs.clone(),
                            (cam_i.width as usize, cam_i.height as usize),
                            (cam_j.width as usize, cam_j.height as usize),
                        )?;
                        checked.pairs
                    }
                    None => Vec::new(),
                }
            }
        };
        if matches.is_empty() {
            continue;
        }
        let rel = rig.relative_pose(i, j)?;
        let f = FundamentalMatrix::from_motion(cam_i, cam_j, &rel)?;
        let gamma = config.effective_gamma(cam_i.width as usize);
        let kept = epipolar_filter(&matches, &f, gamma);
        for m in &kept {
            let Ok(point_i) = triangulate(&m.q_i, &m.q_j, cam_i, cam_j, &rel) else {
                continue;
            };
            let z_i = point_i.z;
            if z_i >= config.min_depth && z_i <= config.max_depth {
                out[i].points.push((m.q_i, z_i));
            }
            let point_j = rel.transform_point(&point_i);
            let z_j = point_j.z;
            if z_j >= config.min_depth && z_j <= config.max_depth {
                out[j].points.push((m.q_j, z_j));
            }
        }
    }
    Ok(out)
}

/// Mean absolute difference between a dense depth map (bilinearly sampled at
/// the sparse locations) and the sparse depths. Points where the map has no
/// valid sample are skipped; no valid points gives 0.
pub fn pseudo_depth_loss(pred: &DepthMap, sparse: &SparsePseudoDepth) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for (pixel, depth) in &sparse.points {
        if let Some(sampled) = pred.bilinear_sample(*pixel) {
            acc += (sampled - depth).abs();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        acc / count as f64
    }
}

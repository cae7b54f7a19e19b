//! View-synthesis supervision: dense image warping, SSIM + L1 photometric
//! error, minimum-reprojection aggregation with occlusion reweighting, and
//! edge-aware disparity smoothness.

use crate::geometry::{warp_pixel_with_depth, CameraModel, Pixel, PoseSE3};
use rayon::prelude::*;
use thiserror::Error;

/// Stabilizer for the SSIM variance/covariance ratio.
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Error)]
pub enum PhotometricError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid depth map: {0}")]
    InvalidDepth(String),
    #[error("invalid occlusion mask: {0}")]
    InvalidMask(String),
    #[error("invalid loss config: {0}")]
    InvalidConfig(String),
    #[error("at least one reconstruction is required")]
    NoReconstructions,
    #[error("no valid pixels")]
    NoValidPixels,
}

/// Row-major interleaved image with 1 or 3 channels, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

/// Per-channel result of a bilinear lookup (at most 3 channels).
#[derive(Debug, Clone, Copy)]
pub struct Sampled {
    values: [f64; 3],
    channels: usize,
}

impl Sampled {
    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.channels]
    }
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, PhotometricError> {
        if width == 0 || height == 0 {
            return Err(PhotometricError::InvalidImage(format!(
                "size must be at least 1x1, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(PhotometricError::InvalidImage(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(PhotometricError::InvalidImage(format!(
                "expected {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(PhotometricError::InvalidImage(format!(
                "values must be finite and within [0,1], found {bad}"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Result<Self, PhotometricError> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds a single-channel image from `f(x, y)`; values must land in `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, PhotometricError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Bilinear interpolation of the four surrounding texels. Returns `None`
    /// unless all four lie inside the image, so the valid domain is
    /// `[0, width-1) x [0, height-1)`.
    pub fn bilinear_sample(&self, p: Pixel) -> Option<Sampled> {
        let (x0, y0, wx, wy) = bilinear_cell(p, self.width, self.height)?;
        let mut values = [0.0; 3];
        for (c, value) in values.iter_mut().take(self.channels).enumerate() {
            let v00 = self.get(x0, y0, c);
            let v10 = self.get(x0 + 1, y0, c);
            let v01 = self.get(x0, y0 + 1, c);
            let v11 = self.get(x0 + 1, y0 + 1, c);
            let top = v00 + (v10 - v00) * wx;
            let bottom = v01 + (v11 - v01) * wx;
            *value = top + (bottom - top) * wy;
        }
        Some(Sampled {
            values,
            channels: self.channels,
        })
    }
}

/// Shared bilinear-cell lookup: floor corner plus fractional weights, or
/// `None` when any of the four corners falls outside the raster.
#[inline]
pub(crate) fn bilinear_cell(
    p: Pixel,
    width: usize,
    height: usize,
) -> Option<(usize, usize, f64, f64)> {
    if !(p.u.is_finite() && p.v.is_finite()) {
        return None;
    }
    let xf = p.u.floor();
    let yf = p.v.floor();
    if xf < 0.0 || yf < 0.0 {
        return None;
    }
    let x0 = xf as usize;
    let y0 = yf as usize;
    if x0 + 1 > width - 1 || y0 + 1 > height - 1 {
        return None;
    }
    Some((x0, y0, p.u - xf, p.v - yf))
}

/// Per-pixel metric depth; non-finite or non-positive entries are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Builds from raw values; entries that are not positive finite numbers
    /// are marked invalid (and survive only as placeholders in `data`).
    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self, PhotometricError> {
        if width == 0 || height == 0 {
            return Err(PhotometricError::InvalidDepth(format!(
                "size must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(PhotometricError::InvalidDepth(format!(
                "expected {} values, got {}",
                width * height,
                data.len()
            )));
        }
        let valid = data.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        Ok(Self {
            width,
            height,
            data,
            valid,
        })
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Result<Self, PhotometricError> {
        Self::from_data(width, height, vec![depth; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, PhotometricError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_data(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Depth at integer pixel, `None` when invalid.
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.data[i])
    }

    /// Bilinear depth lookup requiring all four surrounding pixels valid.
    pub fn bilinear_sample(&self, p: Pixel) -> Option<f64> {
        let (x0, y0, wx, wy) = bilinear_cell(p, self.width, self.height)?;
        let at = |x: usize, y: usize| -> Option<f64> {
            let i = y * self.width + x;
            self.valid[i].then(|| self.data[i])
        };
        let v00 = at(x0, y0)?;
        let v10 = at(x0 + 1, y0)?;
        let v01 = at(x0, y0 + 1)?;
        let v11 = at(x0 + 1, y0 + 1)?;
        let top = v00 + (v10 - v00) * wx;
        let bottom = v01 + (v11 - v01) * wx;
        Some(top + (bottom - top) * wy)
    }

    /// Copy with every valid depth multiplied by `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self, PhotometricError> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(PhotometricError::InvalidDepth(format!(
                "scale must be positive and finite, got {s}"
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&self.valid)
            .map(|(d, ok)| if *ok { d * s } else { *d })
            .collect();
        Ok(Self {
            width: self.width,
            height: self.height,
            data,
            valid: self.valid.clone(),
        })
    }
}

/// Per-pixel multiplicative weight in `[0, 1]` applied to photometric error.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMask {
    width: usize,
    height: usize,
    weight: Vec<f64>,
}

impl OcclusionMask {
    pub fn new(width: usize, height: usize, weight: Vec<f64>) -> Result<Self, PhotometricError> {
        if weight.len() != width * height {
            return Err(PhotometricError::InvalidMask(format!(
                "expected {} weights, got {}",
                width * height,
                weight.len()
            )));
        }
        if let Some(bad) = weight.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(PhotometricError::InvalidMask(format!(
                "weights must be within [0,1], found {bad}"
            )));
        }
        Ok(Self {
            width,
            height,
            weight,
        })
    }

    pub fn uniform(width: usize, height: usize, value: f64) -> Result<Self, PhotometricError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }
}

/// Loss hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// SSIM blend weight α of the photometric error.
    pub ssim_weight: f64,
    /// Multiplier on the smoothness term inside `total_loss`.
    pub smoothness_weight: f64,
    /// Odd SSIM box-window side length, at least 3.
    pub ssim_window: usize,
    /// Per-pixel minimum over reconstructions; `false` averages instead.
    pub min_reprojection: bool,
    /// Pool temporal and spatial reconstructions into a single per-pixel
    /// minimum; `false` scores the two sets separately and sums them.
    pub joint_spatial_min: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            ssim_weight: 0.85,
            smoothness_weight: 1e-3,
            ssim_window: 3,
            min_reprojection: true,
            joint_spatial_min: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), PhotometricError> {
        if !(0.0..=1.0).contains(&self.ssim_weight) {
            return Err(PhotometricError::InvalidConfig(format!(
                "ssim_weight must be within [0,1], got {}",
                self.ssim_weight
            )));
        }
        if !(self.smoothness_weight.is_finite() && self.smoothness_weight >= 0.0) {
            return Err(PhotometricError::InvalidConfig(format!(
                "smoothness_weight must be non-negative, got {}",
                self.smoothness_weight
            )));
        }
        if self.ssim_window < 3 || self.ssim_window % 2 == 0 {
            return Err(PhotometricError::InvalidConfig(format!(
                "ssim_window must be odd and at least 3, got {}",
                self.ssim_window
            )));
        }
        Ok(())
    }
}

/// A view-synthesis result: the resampled image plus its per-pixel validity.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub image: Image,
    pub valid: Vec<bool>,
}

impl Reconstruction {
    pub fn valid_fraction(&self) -> f64 {
        let n = self.valid.len();
        if n == 0 {
            return 0.0;
        }
        self.valid.iter().filter(|v| **v).count() as f64 / n as f64
    }
}

/// Synthesizes the target view from `src`: every target pixel with valid depth
/// is warped through `rel` (target-camera to source-camera coordinates) and
/// bilinearly sampled from `src`. Pixels that are invalid, land behind the
/// source camera, or fall outside `src` are masked out and left at 0.
pub fn warp_image(
    src: &Image,
    tgt_depth: &DepthMap,
    cam_tgt: &CameraModel,
    cam_src: &CameraModel,
    rel: &PoseSE3,
) -> Result<Reconstruction, PhotometricError> {
    if tgt_depth.width() != cam_tgt.width as usize || tgt_depth.height() != cam_tgt.height as usize {
        return Err(PhotometricError::DimensionMismatch(format!(
            "target depth is {}x{}, target camera expects {}x{}",
            tgt_depth.width(),
            tgt_depth.height(),
            cam_tgt.width,
            cam_tgt.height
        )));
    }
    if src.width() != cam_src.width as usize || src.height() != cam_src.height as usize {
        return Err(PhotometricError::DimensionMismatch(format!(
            "source image is {}x{}, source camera expects {}x{}",
            src.width(),
            src.height(),
            cam_src.width,
            cam_src.height
        )));
    }
    let (w, h, c) = (tgt_depth.width(), tgt_depth.height(), src.channels());
    let mut data = vec![0.0; w * h * c];
    let mut valid = vec![false; w * h];
    data.par_chunks_mut(w * c)
        .zip(valid.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (row, row_valid))| {
            for x in 0..w {
                let Some(depth) = tgt_depth.get(x, y) else {
                    continue;
                };
                let p = Pixel::new(x as f64, y as f64);
                let Ok((q, _)) = warp_pixel_with_depth(p, depth, cam_tgt, cam_src, rel) else {
                    continue;
                };
                let Some(sample) = src.bilinear_sample(q) else {
                    continue;
                };
                row[x * c..(x + 1) * c].copy_from_slice(sample.as_slice());
                row_valid[x] = true;
            }
        });
    Ok(Reconstruction {
        image: Image::new(w, h, c, data)?,
        valid,
    })
}

/// Per-pixel structural similarity in `[-1, 1]` over an odd box window,
/// averaged across channels. Windows are clipped at image borders.
///
/// The measure is the stabilized variance/covariance ratio
/// `(2·cov + C2) / (var_a + var_b + C2)`; the luminance factor is omitted so
/// that uniform patches always compare as identical (similarity 1) and a
/// constant exposure offset registers purely through the L1 term of
/// [`photometric_error`].
pub fn ssim(a: &Image, b: &Image, window: usize) -> Result<Vec<f64>, PhotometricError> {
    if !a.same_dims(b) {
        return Err(PhotometricError::DimensionMismatch(format!(
            "ssim inputs are {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    if window < 3 || window % 2 == 0 {
        return Err(PhotometricError::InvalidConfig(format!(
            "ssim window must be odd and at least 3, got {window}"
        )));
    }
    let (w, h, c) = (a.width(), a.height(), a.channels());
    let half = window / 2;
    let mut map = vec![0.0; w * h];
    map.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let y_lo = y.saturating_sub(half);
        let y_hi = (y + half).min(h - 1);
        for (x, out) in row.iter_mut().enumerate() {
            let x_lo = x.saturating_sub(half);
            let x_hi = (x + half).min(w - 1);
            let n = ((y_hi - y_lo + 1) * (x_hi - x_lo + 1)) as f64;
            let mut acc = 0.0;
            for ch in 0..c {
                let (mut sa, mut sb) = (0.0, 0.0);
                for wy in y_lo..=y_hi {
                    for wx in x_lo..=x_hi {
                        sa += a.get(wx, wy, ch);
                        sb += b.get(wx, wy, ch);
                    }
                }
                let mu_a = sa / n;
                let mu_b = sb / n;
                // Centered second pass: identical windows yield var_a ==
                // var_b == cov bitwise, so their similarity is exactly 1.
                let (mut var_a, mut var_b, mut cov) = (0.0, 0.0, 0.0);
                for wy in y_lo..=y_hi {
                    for wx in x_lo..=x_hi {
                        let da = a.get(wx, wy, ch) - mu_a;
                        let db = b.get(wx, wy, ch) - mu_b;
                        var_a += da * da;
                        var_b += db * db;
                        cov += da * db;
                    }
                }
                var_a /= n;
                var_b /= n;
                cov /= n;
                acc += (2.0 * cov + SSIM_C2) / (var_a + var_b + SSIM_C2);
            }
            *out = acc / c as f64;
        }
    });
    Ok(map)
}

/// Per-pixel photometric error `α·(1−SSIM)/2 + (1−α)·L1`, channels averaged.
pub fn photometric_error(
    tgt: &Image,
    recon: &Image,
    cfg: &LossConfig,
) -> Result<Vec<f64>, PhotometricError> {
    cfg.validate()?;
    let ssim_map = ssim(tgt, recon, cfg.ssim_window)?;
    let (w, h, c) = (tgt.width(), tgt.height(), tgt.channels());
    let alpha = cfg.ssim_weight;
    let mut map = vec![0.0; w * h];
    map.par_chunks_mut(w)
        .zip(ssim_map.par_chunks(w))
        .enumerate()
        .for_each(|(y, (row, ssim_row))| {
            for x in 0..w {
                let mut l1 = 0.0;
                for ch in 0..c {
                    l1 += (tgt.get(x, y, ch) - recon.get(x, y, ch)).abs();
                }
                l1 /= c as f64;
                row[x] = alpha * (1.0 - ssim_row[x]) / 2.0 + (1.0 - alpha) * l1;
            }
        });
    Ok(map)
}

fn check_recon_dims(tgt: &Image, recons: &[&Reconstruction]) -> Result<(), PhotometricError> {
    for r in recons {
        if !tgt.same_dims(&r.image) {
            return Err(PhotometricError::DimensionMismatch(format!(
                "reconstruction is {}x{}x{}, target is {}x{}x{}",
                r.image.width(),
                r.image.height(),
                r.image.channels(),
                tgt.width(),
                tgt.height(),
                tgt.channels()
            )));
        }
        if r.valid.len() != tgt.width() * tgt.height() {
            return Err(PhotometricError::DimensionMismatch(
                "reconstruction validity mask has wrong length".into(),
            ));
        }
    }
    Ok(())
}

fn min_reprojection_impl(
    tgt: &Image,
    recons: &[&Reconstruction],
    mask: &OcclusionMask,
    cfg: &LossConfig,
) -> Result<f64, PhotometricError> {
    cfg.validate()?;
    if recons.is_empty() {
        return Err(PhotometricError::NoReconstructions);
    }
    check_recon_dims(tgt, recons)?;
    if mask.width() != tgt.width() || mask.height() != tgt.height() {
        return Err(PhotometricError::DimensionMismatch(format!(
            "occlusion mask is {}x{}, target is {}x{}",
            mask.width(),
            mask.height(),
            tgt.width(),
            tgt.height()
        )));
    }
    let error_maps = recons
        .iter()
        .map(|r| photometric_error(tgt, &r.image, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let mut sum = 0.0;
    let mut covered = 0usize;
    for i in 0..tgt.width() * tgt.height() {
        let mut best: Option<f64> = None;
        let mut mean = 0.0;
        let mut n = 0usize;
        for (r, errs) in recons.iter().zip(&error_maps) {
            if r.valid[i] {
                let e = errs[i];
                best = Some(best.map_or(e, |b: f64| b.min(e)));
                mean += e;
                n += 1;
            }
        }
        if let Some(best) = best {
            let per_pixel = if cfg.min_reprojection {
                best
            } else {
                mean / n as f64
            };
            sum += per_pixel * mask.weight()[i];
            covered += 1;
        }
    }
    if covered == 0 {
        return Err(PhotometricError::NoValidPixels);
    }
    Ok(sum / covered as f64)
}

/// Scalar reprojection loss: per pixel, the minimum photometric error over the
/// reconstructions valid there (mean instead when `cfg.min_reprojection` is
/// off), reweighted by the occlusion mask and averaged over pixels covered by
/// at least one reconstruction.
pub fn min_reprojection_loss(
    tgt: &Image,
    recons: &[Reconstruction],
    mask: &OcclusionMask,
    cfg: &LossConfig,
) -> Result<f64, PhotometricError> {
    let refs: Vec<&Reconstruction> = recons.iter().collect();
    min_reprojection_impl(tgt, &refs, mask, cfg)
}

/// Edge-aware first-order smoothness of mean-normalized disparity:
/// `mean |∂x d'|·exp(−|∂x I|) + mean |∂y d'|·exp(−|∂y I|)`, where
/// `d' = (1/depth) / mean(1/depth)`. Differences are taken only between
/// adjacent valid pixels; the normalization makes the loss invariant to
/// rescaling depth by any positive constant.
pub fn smoothness_loss(depth: &DepthMap, img: &Image) -> Result<f64, PhotometricError> {
    if depth.width() != img.width() || depth.height() != img.height() {
        return Err(PhotometricError::DimensionMismatch(format!(
            "depth is {}x{}, image is {}x{}",
            depth.width(),
            depth.height(),
            img.width(),
            img.height()
        )));
    }
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut disp = vec![0.0; w * h];
    let mut disp_sum = 0.0;
    let mut disp_n = 0usize;
    for i in 0..w * h {
        if depth.valid()[i] {
            disp[i] = 1.0 / depth.data()[i];
            disp_sum += disp[i];
            disp_n += 1;
        }
    }
    if disp_n == 0 {
        return Err(PhotometricError::NoValidPixels);
    }
    let mean_disp = disp_sum / disp_n as f64;
    let image_grad = |x0: usize, y0: usize, x1: usize, y1: usize| -> f64 {
        let mut g = 0.0;
        for ch in 0..c {
            g += (img.get(x1, y1, ch) - img.get(x0, y0, ch)).abs();
        }
        g / c as f64
    };
    let mut sum_x = 0.0;
    let mut count_x = 0usize;
    let mut sum_y = 0.0;
    let mut count_y = 0usize;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !depth.valid()[i] {
                continue;
            }
            let d = disp[i] / mean_disp;
            if x + 1 < w && depth.valid()[i + 1] {
                let dx = (disp[i + 1] / mean_disp - d).abs();
                sum_x += dx * (-image_grad(x, y, x + 1, y)).exp();
                count_x += 1;
            }
            if y + 1 < h && depth.valid()[i + w] {
                let dy = (disp[i + w] / mean_disp - d).abs();
                sum_y += dy * (-image_grad(x, y, x, y + 1)).exp();
                count_y += 1;
            }
        }
    }
    let mean_or_zero = |sum: f64, count: usize| if count == 0 { 0.0 } else { sum / count as f64 };
    Ok(mean_or_zero(sum_x, count_x) + mean_or_zero(sum_y, count_y))
}

/// Loss value with its additive parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalLoss {
    pub total: f64,
    pub photometric: f64,
    pub smoothness: f64,
}

/// Full self-supervision objective for one target view: minimum-reprojection
/// photometric error over the temporal and spatial reconstructions (pooled
/// into one per-pixel minimum when `cfg.joint_spatial_min`, scored as two
/// separate terms otherwise) plus `smoothness_weight` times the smoothness
/// loss.
pub fn total_loss(
    temporal: &[Reconstruction],
    spatial: &[Reconstruction],
    depth: &DepthMap,
    img: &Image,
    mask: &OcclusionMask,
    cfg: &LossConfig,
) -> Result<TotalLoss, PhotometricError> {
    cfg.validate()?;
    let photometric = if cfg.joint_spatial_min {
        let all: Vec<&Reconstruction> = temporal.iter().chain(spatial.iter()).collect();
        min_reprojection_impl(img, &all, mask, cfg)?
    } else {
        let mut acc = 0.0;
        let mut any = false;
        for set in [temporal, spatial] {
            if !set.is_empty() {
                acc += min_reprojection_loss(img, set, mask, cfg)?;
                any = true;
            }
        }
        if !any {
            return Err(PhotometricError::NoReconstructions);
        }
        acc
    };
    let smoothness = smoothness_loss(depth, img)?;
    Ok(TotalLoss {
        total: photometric + cfg.smoothness_weight * smoothness,
        photometric,
        smoothness,
    })
}

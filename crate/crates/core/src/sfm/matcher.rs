//! Built-in deterministic correspondence extractor: Harris corners inside the
//! configured region bands, matched by normalized cross-correlation of image
//! patches with mutual-best selection and parabolic sub-pixel refinement.

use super::{Match, RegionMask};
use crate::geometry::Pixel;
use crate::photometric::Image;

/// Detector and matcher tuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatcherParams {
    /// Keep at most this many corners per image band.
    pub max_features: usize,
    /// Patch half-size for NCC; the window is (2r+1)².
    pub patch_radius: usize,
    /// Reject matches whose best NCC falls below this.
    pub min_ncc: f64,
    /// Harris detector free parameter.
    pub harris_k: f64,
    /// Response threshold as a fraction of the band's maximum response.
    pub quality_ratio: f64,
    /// Non-maximum suppression half-window.
    pub nms_radius: usize,
}

impl Default for MatcherParams {
    fn default() -> Self {
        Self {
            max_features: 500,
            patch_radius: 4,
            min_ncc: 0.85,
            harris_k: 0.04,
            quality_ratio: 0.01,
            nms_radius: 3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Corner {
    x: usize,
    y: usize,
    response: f64,
}

pub(super) fn grayscale(img: &Image) -> Vec<f64> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ch in 0..c {
                acc += img.get(x, y, ch);
            }
            out[y * w + x] = acc / c as f64;
        }
    }
    out
}

/// Harris corner response from central-difference gradients with a 3x3
/// binomial smoothing of the structure tensor. Border pixels score 0.
fn harris_response(gray: &[f64], w: usize, h: usize, k: f64) -> Vec<f64> {
    let mut ixx = vec![0.0; w * h];
    let mut iyy = vec![0.0; w * h];
    let mut ixy = vec![0.0; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            let gx = (gray[i + 1] - gray[i - 1]) / 2.0;
            let gy = (gray[i + w] - gray[i - w]) / 2.0;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    let weights = [1.0, 2.0, 1.0];
    let smooth = |buf: &[f64], x: usize, y: usize| -> f64 {
        let mut acc = 0.0;
        for (dy, wy) in weights.iter().enumerate() {
            for (dx, wx) in weights.iter().enumerate() {
                acc += wx * wy * buf[(y + dy - 1) * w + (x + dx - 1)];
            }
        }
        acc / 16.0
    };
    let mut response = vec![0.0; w * h];
    for y in 2..h.saturating_sub(2) {
        for x in 2..w.saturating_sub(2) {
            let sxx = smooth(&ixx, x, y);
            let syy = smooth(&iyy, x, y);
            let sxy = smooth(&ixy, x, y);
            let det = sxx * syy - sxy * sxy;
            let trace = sxx + syy;
            response[y * w + x] = det - k * trace * trace;
        }
    }
    response
}

/// Strongest non-maximum-suppressed corners within `band` (a half-open pixel
/// range on x), keeping a margin so NCC patches and their ±1 px refinement
/// shifts stay inside the image. Deterministic: sorted by response, then
/// position.
fn detect_corners(
    gray: &[f64],
    w: usize,
    h: usize,
    band: (f64, f64),
    params: &MatcherParams,
) -> Vec<Corner> {
    let margin = params.patch_radius + 1;
    if w <= 2 * margin || h <= 2 * margin {
        return Vec::new();
    }
    let x_lo = (band.0.ceil().max(margin as f64)) as usize;
    let x_hi = (band.1.floor().min((w - margin) as f64)) as usize;
    if x_lo >= x_hi {
        return Vec::new();
    }
    let response = harris_response(gray, w, h, params.harris_k);
    let mut max_response = 0.0f64;
    for y in margin..h - margin {
        for x in x_lo..x_hi {
            max_response = max_response.max(response[y * w + x]);
        }
    }
    if max_response <= 0.0 {
        return Vec::new();
    }
    let threshold = params.quality_ratio * max_response;
    let r = params.nms_radius as isize;
    let mut corners = Vec::new();
    for y in margin..h - margin {
        for x in x_lo..x_hi {
            let v = response[y * w + x];
            if v <= threshold {
                continue;
            }
            let mut is_peak = true;
            'nms: for dy in -r..=r {
                for dx in -r..=r {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = x as isize + dx;
                    let ny = y as isize + dy;
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    if response[ny as usize * w + nx as usize] > v {
                        is_peak = false;
                        break 'nms;
                    }
                }
            }
            if is_peak {
                corners.push(Corner { x, y, response: v });
            }
        }
    }
    corners.sort_by(|a, b| {
        b.response
            .partial_cmp(&a.response)
            .unwrap()
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    });
    corners.truncate(params.max_features);
    corners
}

fn normalize_patch(mut patch: Vec<f64>) -> Option<Vec<f64>> {
    let mean = patch.iter().sum::<f64>() / patch.len() as f64;
    for v in &mut patch {
        *v -= mean;
    }
    let norm = patch.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-9 {
        return None;
    }
    for v in &mut patch {
        *v /= norm;
    }
    Some(patch)
}

/// Zero-mean, unit-norm patch; `None` for (near-)flat patches.
fn normalized_patch(gray: &[f64], w: usize, x: usize, y: usize, radius: usize) -> Option<Vec<f64>> {
    let side = 2 * radius + 1;
    let mut patch = Vec::with_capacity(side * side);
    for dy in 0..side {
        for dx in 0..side {
            patch.push(gray[(y + dy - radius) * w + (x + dx - radius)]);
        }
    }
    normalize_patch(patch)
}

/// Patch resampled at a fractional center; `None` if any tap leaves the
/// image or the patch is flat. At an integer center this reproduces
/// [`normalized_patch`] exactly.
fn normalized_patch_at(
    gray: &[f64],
    w: usize,
    h: usize,
    cx: f64,
    cy: f64,
    radius: usize,
) -> Option<Vec<f64>> {
    let side = 2 * radius + 1;
    let r = radius as f64;
    if cx - r < 0.0 || cy - r < 0.0 || cx + r > (w - 1) as f64 || cy + r > (h - 1) as f64 {
        return None;
    }
    let mut patch = Vec::with_capacity(side * side);
    for dy in 0..side {
        let y = cy + dy as f64 - r;
        let y0 = (y.floor() as usize).min(h - 2);
        let wy = y - y0 as f64;
        for dx in 0..side {
            let x = cx + dx as f64 - r;
            let x0 = (x.floor() as usize).min(w - 2);
            let wx = x - x0 as f64;
            let top = gray[y0 * w + x0] * (1.0 - wx) + gray[y0 * w + x0 + 1] * wx;
            let bot = gray[(y0 + 1) * w + x0] * (1.0 - wx) + gray[(y0 + 1) * w + x0 + 1] * wx;
            patch.push(top + (bot - top) * wy);
        }
    }
    normalize_patch(patch)
}

fn ncc(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Peak offset of the parabola through (-1, s_m), (0, s_0), (1, s_p),
/// clamped to ±0.5; zero unless the fit is concave.
fn parabolic_offset(s_m: f64, s_0: f64, s_p: f64) -> f64 {
    let curvature = s_m + s_p - 2.0 * s_0;
    if curvature >= -1e-12 {
        return 0.0;
    }
    ((s_m - s_p) / (2.0 * curvature)).clamp(-0.5, 0.5)
}

/// Deterministic Harris corner positions inside `band` (a half-open pixel
/// range on x) of one image, for callers that run their own correspondence
/// search from each corner.
pub(super) fn band_corners(
    img: &Image,
    band: (f64, f64),
    params: &MatcherParams,
) -> Vec<(usize, usize)> {
    let gray = grayscale(img);
    detect_corners(&gray, img.width(), img.height(), band, params)
        .into_iter()
        .map(|c| (c.x, c.y))
        .collect()
}

/// Extracts correspondences between the region bands of two images: Harris
/// corners on both sides, NCC over normalized patches, mutual-best selection
/// with a score floor, then sub-pixel refinement of the second endpoint.
/// Fully deterministic; an exact self-match (NCC within 1e-12 of 1) skips
/// refinement so identical images match with exactly zero offset.
pub fn extract_matches(
    img_i: &Image,
    img_j: &Image,
    region: &RegionMask,
    params: &MatcherParams,
) -> Vec<Match> {
    let gray_i = grayscale(img_i);
    let gray_j = grayscale(img_j);
    let (wi, wj) = (img_i.width(), img_j.width());
    let band_i = region.band_i(wi);
    let band_j = region.band_j(wj);
    let corners_i = detect_corners(&gray_i, wi, img_i.height(), band_i, params);
    let corners_j = detect_corners(&gray_j, wj, img_j.height(), band_j, params);
    if corners_i.is_empty() || corners_j.is_empty() {
        return Vec::new();
    }
    let r = params.patch_radius;
    let patches_i: Vec<Option<Vec<f64>>> = corners_i
        .iter()
        .map(|c| normalized_patch(&gray_i, wi, c.x, c.y, r))
        .collect();
    let patches_j: Vec<Option<Vec<f64>>> = corners_j
        .iter()
        .map(|c| normalized_patch(&gray_j, wj, c.x, c.y, r))
        .collect();

    // Best partner of every corner on each side.
    let mut best_for_i: Vec<Option<(usize, f64)>> = vec![None; corners_i.len()];
    let mut best_for_j: Vec<Option<(usize, f64)>> = vec![None; corners_j.len()];
    for (a, pa) in patches_i.iter().enumerate() {
        let Some(pa) = pa else { continue };
        for (b, pb) in patches_j.iter().enumerate() {
            let Some(pb) = pb else { continue };
            let score = ncc(pa, pb);
            if best_for_i[a].map_or(true, |(_, s)| score > s) {
                best_for_i[a] = Some((b, score));
            }
            if best_for_j[b].map_or(true, |(_, s)| score > s) {
                best_for_j[b] = Some((a, score));
            }
        }
    }

    let mut matches = Vec::new();
    for (a, best) in best_for_i.iter().enumerate() {
        let Some((b, score)) = *best else { continue };
        if score < params.min_ncc {
            continue;
        }
        if best_for_j[b].map(|(back, _)| back) != Some(a) {
            continue;
        }
        let pa = patches_i[a].as_ref().unwrap();
        let cj = corners_j[b];
        let hj = img_j.height();
        let (mut u, mut v) = (cj.x as f64, cj.y as f64);
        // Iterative sub-pixel refinement: fit a parabola to the correlation
        // along each axis at the current (fractional) position, step to its
        // peak, and repeat on resampled patches. An exact self-match keeps
        // its integer position so identical images align with zero offset.
        if score < 1.0 - 1e-12 {
            let corr = |x: f64, y: f64| -> Option<f64> {
                normalized_patch_at(&gray_j, wj, hj, x, y, r).map(|p| ncc(pa, &p))
            };
            for _ in 0..3 {
                let Some(s0) = corr(u, v) else { break };
                let mut du = 0.0;
                let mut dv = 0.0;
                if let (Some(l), Some(rt)) = (corr(u - 1.0, v), corr(u + 1.0, v)) {
                    du = parabolic_offset(l, s0, rt);
                }
                if let (Some(up), Some(dn)) = (corr(u, v - 1.0), corr(u, v + 1.0)) {
                    dv = parabolic_offset(up, s0, dn);
                }
                u += du;
                v += dv;
                // Never drift more than a pixel from the discrete peak.
                u = u.clamp(cj.x as f64 - 1.0, cj.x as f64 + 1.0);
                v = v.clamp(cj.y as f64 - 1.0, cj.y as f64 + 1.0);
                if du.abs() < 0.01 && dv.abs() < 0.01 {
                    break;
                }
            }
        }
        let q_j = Pixel::new(u, v);
        // Refinement may nudge an endpoint over the band edge; drop those so
        // every reported endpoint honors the region constraint.
        if q_j.u < band_j.0 || q_j.u >= band_j.1 {
            continue;
        }
        matches.push(Match {
            q_i: Pixel::new(corners_i[a].x as f64, corners_i[a].y as f64),
            q_j,
            score,
        });
    }
    matches
}

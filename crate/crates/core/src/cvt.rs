//! Cross-view transformer block: learnable positional encodings, a
//! depthwise-separable downsampling convolution, a cascade of multi-head
//! attention layers over tokens flattened across all views, a
//! depthwise-separable transposed convolution back to the input resolution,
//! and a residual skip. Because tokens from every camera share one attention
//! matrix, information propagates between views in a single layer.
//!
//! The attention core ships with exact analytic gradients, checked against
//! central finite differences; everything is f64 so those checks are
//! meaningful.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CvtError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no stride lands on the target grid: {0}")]
    ShapeImpossible(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("cache does not match: {0}")]
    CacheMismatch(String),
}

/// Multi-view feature map in view-major NHWC layout, so flattening to tokens
/// is a pure reinterpretation of the same buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    views: usize,
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(
        views: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, CvtError> {
        if views == 0 || height == 0 || width == 0 || channels == 0 {
            return Err(CvtError::InvalidConfig("all dimensions must be >= 1".into()));
        }
        let expect = views * height * width * channels;
        if data.len() != expect {
            return Err(CvtError::DimensionMismatch(format!(
                "data length {} != {views}x{height}x{width}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CvtError::NonFinite("feature tensor".into()));
        }
        Ok(Self { views, height, width, channels, data })
    }

    pub fn zeros(views: usize, height: usize, width: usize, channels: usize) -> Result<Self, CvtError> {
        Self::new(views, height, width, channels, vec![0.0; views * height * width * channels])
    }

    pub fn from_fn(
        views: usize,
        height: usize,
        width: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize, usize) -> f64,
    ) -> Result<Self, CvtError> {
        let mut data = Vec::with_capacity(views * height * width * channels);
        for n in 0..views {
            for h in 0..height {
                for w in 0..width {
                    for c in 0..channels {
                        data.push(f(n, h, w, c));
                    }
                }
            }
        }
        Self::new(views, height, width, channels, data)
    }

    #[inline]
    fn idx(&self, n: usize, h: usize, w: usize, c: usize) -> usize {
        ((n * self.height + h) * self.width + w) * self.channels + c
    }

    pub fn get(&self, n: usize, h: usize, w: usize, c: usize) -> f64 {
        self.data[self.idx(n, h, w, c)]
    }

    pub fn views(&self) -> usize {
        self.views
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Learnable per-view, per-row, and per-column encodings, each a vector of
/// `channels` entries added to every token with the matching coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEncodings {
    pub views: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// `views x channels`, row-major.
    pub pe_n: Vec<f64>,
    /// `height x channels`, row-major.
    pub pe_h: Vec<f64>,
    /// `width x channels`, row-major.
    pub pe_w: Vec<f64>,
}

impl PositionalEncodings {
    pub fn zeroed(views: usize, height: usize, width: usize, channels: usize) -> Self {
        Self {
            views,
            height,
            width,
            channels,
            pe_n: vec![0.0; views * channels],
            pe_h: vec![0.0; height * channels],
            pe_w: vec![0.0; width * channels],
        }
    }

    fn validate(&self) -> Result<(), CvtError> {
        let ok = self.pe_n.len() == self.views * self.channels
            && self.pe_h.len() == self.height * self.channels
            && self.pe_w.len() == self.width * self.channels;
        if !ok {
            return Err(CvtError::DimensionMismatch("positional encoding arrays".into()));
        }
        if [&self.pe_n, &self.pe_h, &self.pe_w]
            .iter()
            .any(|a| a.iter().any(|v| !v.is_finite()))
        {
            return Err(CvtError::NonFinite("positional encodings".into()));
        }
        Ok(())
    }
}

/// Adds `pe_n[n] + pe_h[h] + pe_w[w]` to the channel vector of every token.
pub fn add_positional(x: &FeatureTensor, pe: &PositionalEncodings) -> Result<FeatureTensor, CvtError> {
    pe.validate()?;
    if pe.views != x.views || pe.height != x.height || pe.width != x.width || pe.channels != x.channels {
        return Err(CvtError::DimensionMismatch(format!(
            "encodings for {}x{}x{}x{} applied to {}x{}x{}x{}",
            pe.views, pe.height, pe.width, pe.channels, x.views, x.height, x.width, x.channels
        )));
    }
    let c = x.channels;
    let mut data = x.data.clone();
    for n in 0..x.views {
        for h in 0..x.height {
            for w in 0..x.width {
                let base = x.idx(n, h, w, 0);
                for ch in 0..c {
                    data[base + ch] += pe.pe_n[n * c + ch] + pe.pe_h[h * c + ch] + pe.pe_w[w * c + ch];
                }
            }
        }
    }
    FeatureTensor::new(x.views, x.height, x.width, c, data)
}

/// Query/key/value projections for one attention layer. All three are
/// `channels x channels` row-major matrices applied as `row_vector * W`; the
/// channel axis is split into `heads` contiguous slices.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub heads: usize,
    pub channels: usize,
    pub w_q: Vec<f64>,
    pub w_k: Vec<f64>,
    pub w_v: Vec<f64>,
}

impl AttentionParams {
    pub fn new(
        heads: usize,
        channels: usize,
        w_q: Vec<f64>,
        w_k: Vec<f64>,
        w_v: Vec<f64>,
    ) -> Result<Self, CvtError> {
        if heads == 0 || channels == 0 || channels % heads != 0 {
            return Err(CvtError::InvalidConfig(format!(
                "head count {heads} must divide channel count {channels}"
            )));
        }
        let n = channels * channels;
        if w_q.len() != n || w_k.len() != n || w_v.len() != n {
            return Err(CvtError::DimensionMismatch("projection matrices".into()));
        }
        if [&w_q, &w_k, &w_v].iter().any(|w| w.iter().any(|v| !v.is_finite())) {
            return Err(CvtError::NonFinite("projection matrices".into()));
        }
        Ok(Self { heads, channels, w_q, w_k, w_v })
    }

    pub fn zeroed(heads: usize, channels: usize) -> Result<Self, CvtError> {
        let n = channels * channels;
        Self::new(heads, channels, vec![0.0; n], vec![0.0; n], vec![0.0; n])
    }
}

/// Block configuration: number of cascaded attention layers, the token grid
/// the features are downsampled to, and the depthwise kernel size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvtConfig {
    pub z_layers: usize,
    pub target_h: usize,
    pub target_w: usize,
    pub kernel: usize,
}

impl Default for CvtConfig {
    fn default() -> Self {
        Self { z_layers: 8, target_h: 20, target_w: 12, kernel: 3 }
    }
}

impl CvtConfig {
    pub fn validate(&self) -> Result<(), CvtError> {
        if self.z_layers == 0 {
            return Err(CvtError::InvalidConfig("need at least one attention layer".into()));
        }
        if self.target_h == 0 || self.target_w == 0 {
            return Err(CvtError::InvalidConfig("target grid must be at least 1x1".into()));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(CvtError::InvalidConfig(format!(
                "kernel must be odd and positive, got {}",
                self.kernel
            )));
        }
        Ok(())
    }
}

/// Depthwise-separable convolution weights: a per-channel `k x k` spatial
/// kernel (`channels x k x k`) followed by a `channels x channels` pointwise
/// mix applied as `row_vector * W`. No biases.
#[derive(Debug, Clone, PartialEq)]
pub struct DsConvParams {
    pub channels: usize,
    pub kernel: usize,
    pub depthwise: Vec<f64>,
    pub pointwise: Vec<f64>,
}

impl DsConvParams {
    pub fn new(channels: usize, kernel: usize, depthwise: Vec<f64>, pointwise: Vec<f64>) -> Result<Self, CvtError> {
        if depthwise.len() != channels * kernel * kernel || pointwise.len() != channels * channels {
            return Err(CvtError::DimensionMismatch("depthwise-separable weights".into()));
        }
        if depthwise.iter().chain(&pointwise).any(|v| !v.is_finite()) {
            return Err(CvtError::NonFinite("depthwise-separable weights".into()));
        }
        Ok(Self { channels, kernel, depthwise, pointwise })
    }

    pub fn zeroed(channels: usize, kernel: usize) -> Result<Self, CvtError> {
        Self::new(channels, kernel, vec![0.0; channels * kernel * kernel], vec![0.0; channels * channels])
    }

    /// Center-tap depthwise and identity pointwise: a no-op at stride 1.
    pub fn identity(channels: usize, kernel: usize) -> Result<Self, CvtError> {
        let mut depthwise = vec![0.0; channels * kernel * kernel];
        let center = (kernel / 2) * kernel + kernel / 2;
        for c in 0..channels {
            depthwise[c * kernel * kernel + center] = 1.0;
        }
        let mut pointwise = vec![0.0; channels * channels];
        for c in 0..channels {
            pointwise[c * channels + c] = 1.0;
        }
        Self::new(channels, kernel, depthwise, pointwise)
    }
}

/// Every learnable quantity of one block. The flattened order (used by the
/// weight snapshot format and the seeded initializer) is: downsampler
/// depthwise, downsampler pointwise, pe_n, pe_h, pe_w, then per attention
/// layer w_q, w_k, w_v, then upsampler depthwise, upsampler pointwise.
#[derive(Debug, Clone, PartialEq)]
pub struct CvtParams {
    pub dsconv: DsConvParams,
    pub pe: PositionalEncodings,
    pub layers: Vec<AttentionParams>,
    pub dsdeconv: DsConvParams,
}

impl CvtParams {
    pub fn zeroed(cfg: &CvtConfig, views: usize, channels: usize, heads: usize) -> Result<Self, CvtError> {
        cfg.validate()?;
        let mut layers = Vec::with_capacity(cfg.z_layers);
        for _ in 0..cfg.z_layers {
            layers.push(AttentionParams::zeroed(heads, channels)?);
        }
        Ok(Self {
            dsconv: DsConvParams::zeroed(channels, cfg.kernel)?,
            pe: PositionalEncodings::zeroed(views, cfg.target_h, cfg.target_w, channels),
            layers,
            dsdeconv: DsConvParams::zeroed(channels, cfg.kernel)?,
        })
    }

    /// Deterministic uniform initialization in [-0.05, 0.05], drawn in
    /// flattened parameter order.
    pub fn seeded(
        cfg: &CvtConfig,
        views: usize,
        channels: usize,
        heads: usize,
        seed: u64,
    ) -> Result<Self, CvtError> {
        let mut params = Self::zeroed(cfg, views, channels, heads)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |buf: &mut [f64]| {
            for v in buf.iter_mut() {
                *v = rng.gen_range(-0.05..0.05);
            }
        };
        fill(&mut params.dsconv.depthwise);
        fill(&mut params.dsconv.pointwise);
        fill(&mut params.pe.pe_n);
        fill(&mut params.pe.pe_h);
        fill(&mut params.pe.pe_w);
        for layer in &mut params.layers {
            fill(&mut layer.w_q);
            fill(&mut layer.w_k);
            fill(&mut layer.w_v);
        }
        fill(&mut params.dsdeconv.depthwise);
        fill(&mut params.dsdeconv.pointwise);
        Ok(params)
    }

    pub fn parameter_count(cfg: &CvtConfig, views: usize, channels: usize) -> usize {
        let ds = channels * cfg.kernel * cfg.kernel + channels * channels;
        let pe = (views + cfg.target_h + cfg.target_w) * channels;
        let attn = cfg.z_layers * 3 * channels * channels;
        2 * ds + pe + attn
    }

    /// Concatenates every parameter in the documented order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.dsconv.depthwise);
        out.extend_from_slice(&self.dsconv.pointwise);
        out.extend_from_slice(&self.pe.pe_n);
        out.extend_from_slice(&self.pe.pe_h);
        out.extend_from_slice(&self.pe.pe_w);
        for layer in &self.layers {
            out.extend_from_slice(&layer.w_q);
            out.extend_from_slice(&layer.w_k);
            out.extend_from_slice(&layer.w_v);
        }
        out.extend_from_slice(&self.dsdeconv.depthwise);
        out.extend_from_slice(&self.dsdeconv.pointwise);
        out
    }

    /// Rebuilds parameters from a flat list in the documented order.
    pub fn from_flat(
        cfg: &CvtConfig,
        views: usize,
        channels: usize,
        heads: usize,
        flat: &[f64],
    ) -> Result<Self, CvtError> {
        let expect = Self::parameter_count(cfg, views, channels);
        if flat.len() != expect {
            return Err(CvtError::DimensionMismatch(format!(
                "flat parameter list has {} values, expected {expect}",
                flat.len()
            )));
        }
        let mut params = Self::zeroed(cfg, views, channels, heads)?;
        let mut cursor = 0usize;
        let mut take = |buf: &mut [f64]| {
            buf.copy_from_slice(&flat[cursor..cursor + buf.len()]);
            cursor += buf.len();
        };
        take(&mut params.dsconv.depthwise);
        take(&mut params.dsconv.pointwise);
        take(&mut params.pe.pe_n);
        take(&mut params.pe.pe_h);
        take(&mut params.pe.pe_w);
        for layer in &mut params.layers {
            take(&mut layer.w_q);
            take(&mut layer.w_k);
            take(&mut layer.w_v);
        }
        take(&mut params.dsdeconv.depthwise);
        take(&mut params.dsdeconv.pointwise);
        if params.flatten().iter().any(|v| !v.is_finite()) {
            return Err(CvtError::NonFinite("flat parameter list".into()));
        }
        Ok(params)
    }
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Downsampling strides and the shape-fit check: with kernel `k`, padding
/// `k/2`, and stride `ceil(in/target)`, the convolution output must land
/// exactly on the target extent.
fn down_stride(input: usize, target: usize, kernel: usize, axis: &str) -> Result<usize, CvtError> {
    if input < target {
        return Err(CvtError::ShapeImpossible(format!(
            "{axis} extent {input} is smaller than target {target}"
        )));
    }
    let stride = ceil_div(input, target);
    let pad = kernel / 2;
    let out = (input + 2 * pad - kernel) / stride + 1;
    if out != target {
        return Err(CvtError::ShapeImpossible(format!(
            "{axis} extent {input} with stride {stride} gives {out}, not {target}"
        )));
    }
    Ok(stride)
}

/// Strided depthwise `k x k` convolution (zero padding `k/2`) followed by a
/// pointwise channel mix; per view, channel count preserved.
pub fn ds_conv_down(
    x: &FeatureTensor,
    params: &DsConvParams,
    cfg: &CvtConfig,
) -> Result<FeatureTensor, CvtError> {
    cfg.validate()?;
    if params.channels != x.channels || params.kernel != cfg.kernel {
        return Err(CvtError::DimensionMismatch(format!(
            "conv weights for {} channels kernel {} on tensor with {} channels kernel {}",
            params.channels, params.kernel, x.channels, cfg.kernel
        )));
    }
    let (k, c) = (cfg.kernel, x.channels);
    let pad = k / 2;
    let s_h = down_stride(x.height, cfg.target_h, k, "height")?;
    let s_w = down_stride(x.width, cfg.target_w, k, "width")?;
    let (th, tw) = (cfg.target_h, cfg.target_w);
    let mut mid = vec![0.0; x.views * th * tw * c];
    for n in 0..x.views {
        for oy in 0..th {
            for ox in 0..tw {
                let base = ((n * th + oy) * tw + ox) * c;
                for ky in 0..k {
                    let iy = (oy * s_h + ky) as isize - pad as isize;
                    if iy < 0 || iy >= x.height as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * s_w + kx) as isize - pad as isize;
                        if ix < 0 || ix >= x.width as isize {
                            continue;
                        }
                        let src = x.idx(n, iy as usize, ix as usize, 0);
                        for ch in 0..c {
                            mid[base + ch] += x.data[src + ch] * params.depthwise[(ch * k + ky) * k + kx];
                        }
                    }
                }
            }
        }
    }
    let data = pointwise_mix(&mid, c, &params.pointwise);
    FeatureTensor::new(x.views, th, tw, c, data)
}

/// Applies a `channels x channels` mix to every token: out = token * W.
fn pointwise_mix(tokens: &[f64], channels: usize, w: &[f64]) -> Vec<f64> {
    let rows = tokens.len() / channels;
    let mut out = vec![0.0; tokens.len()];
    for r in 0..rows {
        let x_row = &tokens[r * channels..(r + 1) * channels];
        let out_row = &mut out[r * channels..(r + 1) * channels];
        for (i, &xv) in x_row.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let w_row = &w[i * channels..(i + 1) * channels];
            for (o, wv) in out_row.iter_mut().zip(w_row) {
                *o += xv * wv;
            }
        }
    }
    out
}

/// Transposed depthwise convolution back to the original extent followed by a
/// pointwise mix. The output padding implied by `(orig, in, stride)` must lie
/// in `[0, stride)`; every shape produced by `ds_conv_down` satisfies this.
pub fn ds_deconv_up(
    x: &FeatureTensor,
    params: &DsConvParams,
    cfg: &CvtConfig,
    orig_h: usize,
    orig_w: usize,
) -> Result<FeatureTensor, CvtError> {
    cfg.validate()?;
    if params.channels != x.channels || params.kernel != cfg.kernel {
        return Err(CvtError::DimensionMismatch("deconv weights".into()));
    }
    let (k, c) = (cfg.kernel, x.channels);
    let pad = k / 2;
    let up_stride = |orig: usize, inp: usize, axis: &str| -> Result<usize, CvtError> {
        if orig < inp {
            return Err(CvtError::ShapeImpossible(format!(
                "{axis}: cannot upsample {inp} to smaller extent {orig}"
            )));
        }
        let stride = ceil_div(orig, inp);
        let body = (inp - 1) * stride + k;
        let out_pad = (orig + 2 * pad).checked_sub(body).ok_or_else(|| {
            CvtError::ShapeImpossible(format!("{axis}: {inp} overshoots {orig} at stride {stride}"))
        })?;
        if out_pad >= stride {
            return Err(CvtError::ShapeImpossible(format!(
                "{axis}: {inp} cannot reach {orig} at stride {stride}"
            )));
        }
        Ok(stride)
    };
    let s_h = up_stride(orig_h, x.height, "height")?;
    let s_w = up_stride(orig_w, x.width, "width")?;
    let mut mid = vec![0.0; x.views * orig_h * orig_w * c];
    for n in 0..x.views {
        for oy in 0..orig_h {
            for ox in 0..orig_w {
                let base = ((n * orig_h + oy) * orig_w + ox) * c;
                for ky in 0..k {
                    let ny = oy + pad;
                    if ny < ky || (ny - ky) % s_h != 0 {
                        continue;
                    }
                    let iy = (ny - ky) / s_h;
                    if iy >= x.height {
                        continue;
                    }
                    for kx in 0..k {
                        let nx = ox + pad;
                        if nx < kx || (nx - kx) % s_w != 0 {
                            continue;
                        }
                        let ix = (nx - kx) / s_w;
                        if ix >= x.width {
                            continue;
                        }
                        let src = x.idx(n, iy, ix, 0);
                        for ch in 0..c {
                            mid[base + ch] += x.data[src + ch] * params.depthwise[(ch * k + ky) * k + kx];
                        }
                    }
                }
            }
        }
    }
    let data = pointwise_mix(&mid, c, &params.pointwise);
    FeatureTensor::new(x.views, orig_h, orig_w, c, data)
}

/// Tokens in view-major, row-major order; with the NHWC layout this is the
/// tensor's own buffer, so the token index of (n, h, w) is
/// `n*H*W + h*W + w`.
pub fn flatten_views(x: &FeatureTensor) -> Vec<f64> {
    x.data.clone()
}

pub fn unflatten_views(
    tokens: &[f64],
    views: usize,
    height: usize,
    width: usize,
    channels: usize,
) -> Result<FeatureTensor, CvtError> {
    FeatureTensor::new(views, height, width, channels, tokens.to_vec())
}

/// Row-convention matrix product: `x` is `rows x c_in` and `w` is
/// `c_in x c_out`, both row-major.
fn matmul_xw(x: &[f64], rows: usize, c_in: usize, w: &[f64], c_out: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * c_out];
    out.par_chunks_mut(c_out).enumerate().for_each(|(r, out_row)| {
        let x_row = &x[r * c_in..(r + 1) * c_in];
        for (i, &xv) in x_row.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let w_row = &w[i * c_out..(i + 1) * c_out];
            for (o, wv) in out_row.iter_mut().zip(w_row) {
                *o += xv * wv;
            }
        }
    });
    out
}

/// One query row of one head: scores against every key, max-subtracted
/// softmax, then the weighted sum of values. Both the streaming and the
/// cached forward call exactly this, so their outputs are bitwise identical.
fn attention_head_row(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    tokens: usize,
    channels: usize,
    t: usize,
    lo: usize,
    hi: usize,
    inv_scale: f64,
    out_row: &mut [f64],
    weights: &mut [f64],
) -> Result<(), CvtError> {
    debug_assert_eq!(weights.len(), tokens);
    let q_row = &q[t * channels + lo..t * channels + hi];
    for j in 0..tokens {
        let k_row = &k[j * channels + lo..j * channels + hi];
        let mut s = 0.0;
        for (qv, kv) in q_row.iter().zip(k_row) {
            s += qv * kv;
        }
        weights[j] = s * inv_scale;
    }
    let max = weights.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    let mut sum = 0.0;
    for wj in weights.iter_mut() {
        *wj = (*wj - max).exp();
        sum += *wj;
    }
    if !(sum.is_finite() && sum > 0.0) {
        return Err(CvtError::NonFinite("attention softmax".into()));
    }
    let inv_sum = 1.0 / sum;
    for wj in weights.iter_mut() {
        *wj *= inv_sum;
    }
    for d in lo..hi {
        let mut acc = 0.0;
        for j in 0..tokens {
            acc += weights[j] * v[j * channels + d];
        }
        out_row[d] = acc;
    }
    Ok(())
}

fn check_token_shape(data: &[f64], channels: usize) -> Result<usize, CvtError> {
    if channels == 0 || data.len() % channels != 0 || data.is_empty() {
        return Err(CvtError::DimensionMismatch(format!(
            "token buffer of {} values is not a multiple of {channels} channels",
            data.len()
        )));
    }
    Ok(data.len() / channels)
}

/// Streaming multi-head attention forward: never materializes the score
/// matrix, parallelizes over query rows, and produces output bitwise equal to
/// [`attention_forward`].
pub fn attention_apply(tokens: &[f64], params: &AttentionParams) -> Result<Vec<f64>, CvtError> {
    let c = params.channels;
    let t = check_token_shape(tokens, c)?;
    let q = matmul_xw(tokens, t, c, &params.w_q, c);
    let k = matmul_xw(tokens, t, c, &params.w_k, c);
    let v = matmul_xw(tokens, t, c, &params.w_v, c);
    let inv_scale = 1.0 / (c as f64).sqrt();
    let dh = c / params.heads;
    let mut out = vec![0.0; tokens.len()];
    let row_results: Result<Vec<()>, CvtError> = out
        .par_chunks_mut(c)
        .enumerate()
        .map(|(row, out_row)| {
            let mut weights = vec![0.0; t];
            for m in 0..params.heads {
                attention_head_row(&q, &k, &v, t, c, row, m * dh, (m + 1) * dh, inv_scale, out_row, &mut weights)?;
            }
            Ok(())
        })
        .collect();
    row_results?;
    Ok(out)
}

/// Everything the backward pass needs: inputs, projections, and the per-head
/// softmax matrices (`heads` buffers of `tokens x tokens`).
#[derive(Debug, Clone)]
pub struct AttentionCache {
    tokens: usize,
    params: AttentionParams,
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    attn: Vec<Vec<f64>>,
}

impl AttentionCache {
    /// Number of stored softmax weights; grows as the square of token count.
    pub fn score_elements(&self) -> usize {
        self.attn.iter().map(|a| a.len()).sum()
    }

    /// Softmax weight row for one head and query token.
    pub fn weight_row(&self, head: usize, t: usize) -> &[f64] {
        &self.attn[head][t * self.tokens..(t + 1) * self.tokens]
    }
}

/// Caching forward pass for [`attention_backward`]. Output is bitwise equal
/// to [`attention_apply`] on the same inputs.
pub fn attention_forward(
    tokens: &[f64],
    params: &AttentionParams,
) -> Result<(Vec<f64>, AttentionCache), CvtError> {
    let c = params.channels;
    let t = check_token_shape(tokens, c)?;
    let q = matmul_xw(tokens, t, c, &params.w_q, c);
    let k = matmul_xw(tokens, t, c, &params.w_k, c);
    let v = matmul_xw(tokens, t, c, &params.w_v, c);
    let inv_scale = 1.0 / (c as f64).sqrt();
    let dh = c / params.heads;
    let mut out = vec![0.0; tokens.len()];
    let mut attn = vec![vec![0.0; t * t]; params.heads];
    for row in 0..t {
        let out_row = &mut out[row * c..(row + 1) * c];
        for m in 0..params.heads {
            let weights = &mut attn[m][row * t..(row + 1) * t];
            attention_head_row(&q, &k, &v, t, c, row, m * dh, (m + 1) * dh, inv_scale, out_row, weights)?;
        }
    }
    let cache = AttentionCache {
        tokens: t,
        params: params.clone(),
        x: tokens.to_vec(),
        q,
        k,
        v,
        attn,
    };
    Ok((out, cache))
}

/// Gradients of the attention forward with respect to its inputs and the
/// three projection matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads {
    pub d_tokens: Vec<f64>,
    pub d_wq: Vec<f64>,
    pub d_wk: Vec<f64>,
    pub d_wv: Vec<f64>,
}

/// Exact analytic gradients given the cached forward and the upstream
/// gradient of a scalar loss with respect to the attention output.
pub fn attention_backward(cache: &AttentionCache, upstream: &[f64]) -> Result<AttentionGrads, CvtError> {
    let c = cache.params.channels;
    let t = cache.tokens;
    if upstream.len() != t * c {
        return Err(CvtError::CacheMismatch(format!(
            "upstream gradient has {} values, cache expects {}",
            upstream.len(),
            t * c
        )));
    }
    let heads = cache.params.heads;
    let dh = c / heads;
    let inv_scale = 1.0 / (c as f64).sqrt();
    let mut dq = vec![0.0; t * c];
    let mut dk = vec![0.0; t * c];
    let mut dv = vec![0.0; t * c];
    let mut da = vec![0.0; t * t];
    let mut ds = vec![0.0; t * t];
    for m in 0..heads {
        let (lo, hi) = (m * dh, (m + 1) * dh);
        let a = &cache.attn[m];
        // dV = A^T G (head slice).
        for q_row in 0..t {
            for j in 0..t {
                let w = a[q_row * t + j];
                if w == 0.0 {
                    continue;
                }
                for d in lo..hi {
                    dv[j * c + d] += w * upstream[q_row * c + d];
                }
            }
        }
        // dA = G V^T, then the softmax Jacobian per row:
        // dS = A ⊙ (dA − rowsum(dA ⊙ A)).
        for q_row in 0..t {
            for j in 0..t {
                let mut acc = 0.0;
                for d in lo..hi {
                    acc += upstream[q_row * c + d] * cache.v[j * c + d];
                }
                da[q_row * t + j] = acc;
            }
            let mut row_dot = 0.0;
            for j in 0..t {
                row_dot += da[q_row * t + j] * a[q_row * t + j];
            }
            for j in 0..t {
                ds[q_row * t + j] = a[q_row * t + j] * (da[q_row * t + j] - row_dot);
            }
        }
        // dQ = dS K / √c ; dK = dSᵀ Q / √c (head slices).
        for q_row in 0..t {
            for j in 0..t {
                let s = ds[q_row * t + j] * inv_scale;
                if s == 0.0 {
                    continue;
                }
                for d in lo..hi {
                    dq[q_row * c + d] += s * cache.k[j * c + d];
                    dk[j * c + d] += s * cache.q[q_row * c + d];
                }
            }
        }
    }
    // dW = Xᵀ dP ; dX = Σ dP Wᵀ.
    let mut d_wq = vec![0.0; c * c];
    let mut d_wk = vec![0.0; c * c];
    let mut d_wv = vec![0.0; c * c];
    for row in 0..t {
        for i in 0..c {
            let xv = cache.x[row * c + i];
            if xv == 0.0 {
                continue;
            }
            for j in 0..c {
                d_wq[i * c + j] += xv * dq[row * c + j];
                d_wk[i * c + j] += xv * dk[row * c + j];
                d_wv[i * c + j] += xv * dv[row * c + j];
            }
        }
    }
    let mut d_tokens = vec![0.0; t * c];
    for row in 0..t {
        for i in 0..c {
            let mut acc = 0.0;
            for j in 0..c {
                acc += dq[row * c + j] * cache.params.w_q[i * c + j]
                    + dk[row * c + j] * cache.params.w_k[i * c + j]
                    + dv[row * c + j] * cache.params.w_v[i * c + j];
            }
            d_tokens[row * c + i] = acc;
        }
    }
    Ok(AttentionGrads { d_tokens, d_wq, d_wk, d_wv })
}

/// The full block: downsample, add positional encodings once, run the
/// cascade of attention layers each with a token-wise residual, upsample, and
/// add the input back.
pub fn cvt_block(
    x: &FeatureTensor,
    params: &CvtParams,
    cfg: &CvtConfig,
) -> Result<FeatureTensor, CvtError> {
    cfg.validate()?;
    if params.layers.len() != cfg.z_layers {
        return Err(CvtError::InvalidConfig(format!(
            "{} attention layers provided, config wants {}",
            params.layers.len(),
            cfg.z_layers
        )));
    }
    let down = ds_conv_down(x, &params.dsconv, cfg)?;
    let encoded = add_positional(&down, &params.pe)?;
    let mut tokens = encoded.data;
    for layer in &params.layers {
        let delta = attention_apply(&tokens, layer)?;
        for (tv, dv) in tokens.iter_mut().zip(&delta) {
            *tv += dv;
        }
    }
    let grid = unflatten_views(&tokens, x.views, cfg.target_h, cfg.target_w, x.channels)?;
    let up = ds_deconv_up(&grid, &params.dsdeconv, cfg, x.height, x.width)?;
    let mut data = up.data;
    for (o, i) in data.iter_mut().zip(&x.data) {
        *o += i;
    }
    FeatureTensor::new(x.views, x.height, x.width, x.channels, data)
}

/// Compares the analytic attention gradients against central finite
/// differences on a random small instance and returns the maximum relative
/// error over every input and weight coordinate. `corrupt` deliberately
/// injects an error into one analytic gradient so harness failures are
/// detectable.
pub fn gradient_check(
    seed: u64,
    tokens: usize,
    channels: usize,
    heads: usize,
    corrupt: bool,
) -> Result<f64, CvtError> {
    if tokens == 0 {
        return Err(CvtError::InvalidConfig("need at least one token".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize, scale: f64| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
    };
    let x = draw(tokens * channels, 1.0);
    let w_q = draw(channels * channels, 0.5);
    let w_k = draw(channels * channels, 0.5);
    let w_v = draw(channels * channels, 0.5);
    let upstream = draw(tokens * channels, 1.0);
    let params = AttentionParams::new(heads, channels, w_q, w_k, w_v)?;

    let (_, cache) = attention_forward(&x, &params)?;
    let mut grads = attention_backward(&cache, &upstream)?;
    if corrupt {
        grads.d_wq[0] += 0.05;
    }

    let loss = |x: &[f64], p: &AttentionParams| -> Result<f64, CvtError> {
        let out = attention_apply(x, p)?;
        Ok(out.iter().zip(&upstream).map(|(o, g)| o * g).sum())
    };

    const STEP: f64 = 1e-5;
    let mut max_rel = 0.0f64;
    let mut check = |analytic: f64, numeric: f64| {
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
    };

    let mut x_mut = x.clone();
    for i in 0..x_mut.len() {
        let orig = x_mut[i];
        x_mut[i] = orig + STEP;
        let up = loss(&x_mut, &params)?;
        x_mut[i] = orig - STEP;
        let dn = loss(&x_mut, &params)?;
        x_mut[i] = orig;
        check(grads.d_tokens[i], (up - dn) / (2.0 * STEP));
    }
    for (which, analytic) in [(0usize, &grads.d_wq), (1, &grads.d_wk), (2, &grads.d_wv)] {
        for i in 0..channels * channels {
            let mut p = params.clone();
            let buf = match which {
                0 => &mut p.w_q,
                1 => &mut p.w_k,
                _ => &mut p.w_v,
            };
            let orig = buf[i];
            buf[i] = orig + STEP;
            let up = loss(&x, &p)?;
            let buf = match which {
                0 => &mut p.w_q,
                1 => &mut p.w_k,
                _ => &mut p.w_v,
            };
            buf[i] = orig - STEP;
            let dn = loss(&x, &p)?;
            check(analytic[i], (up - dn) / (2.0 * STEP));
        }
    }
    Ok(max_rel)
}

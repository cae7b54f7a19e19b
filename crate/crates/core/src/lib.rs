//! Scale-aware geometry, losses and evaluation machinery for self-supervised
//! depth estimation on surround-view multi-camera rigs.
//!
//! The crate provides the deterministic, non-learned parts of such a system:
//!
//! * [`geometry`] — camera models, SE(3) poses, cross-view warping, epipolar
//!   geometry on a calibrated rig;
//! * [`photometric`] — view-synthesis losses (SSIM + L1, per-pixel minimum
//!   reprojection, edge-aware smoothness);
//! * [`sfm`] — correspondence extraction, two-view triangulation and the
//!   sparse pseudo-depth supervision pipeline that fixes absolute scale;
//! * [`cvt`] — a cross-view feature interaction block (downsample, joint
//!   multi-head attention over all views, upsample) with analytic gradients;
//! * [`evalmetrics`] — standard depth-error metrics, median scaling and a
//!   cross-view depth consistency measure;
//! * [`synth`] — a synthetic surround rig and textured scene renderer used as
//!   ground truth in tests and demos;
//! * [`io`] — on-disk formats for rigs, rasters, matches and weights.
//!
//! Everything is pure CPU code over `f64` buffers; file formats store `f32`.

pub mod cvt;
pub mod evalmetrics;
pub mod geometry;
pub mod io;
pub mod photometric;
pub mod sfm;
pub mod synth;

pub use geometry::{
    universal_to_local, warp_pixel, warp_pixel_with_depth, CameraModel, CameraRig,
    FundamentalMatrix, GeometryError, Pixel, PoseSE3, RigCamera,
};
pub use photometric::{DepthMap, Image, LossConfig, PhotometricError};
pub use sfm::{SfmConfig, SfmError, SparsePseudoDepth};
pub use evalmetrics::{DepthEvalResult, EvalConfig, EvalError};
pub use cvt::{CvtConfig, CvtError};
pub use synth::{SynthConfig, SynthError};

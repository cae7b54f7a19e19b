//! Camera models, SE(3) pose algebra, cross-view pixel warping and epipolar
//! geometry for a multi-camera rig.
//!
//! Conventions used throughout the crate:
//! * homogeneous pixels are `(u, v, 1)`, `u` is the column coordinate;
//! * a rig extrinsic maps camera coordinates into the shared vehicle frame;
//! * camera frames are x-right, y-down, z-forward (optical axis).

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Orthonormality / determinant tolerance for rotation validation.
pub const ROTATION_TOL: f64 = 1e-9;
/// Relative singular-value tolerance for the rank-2 check of a fundamental matrix.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Error)]
pub enum GeometryError {
    #[error("rotation is not orthonormal (max deviation {0:.3e})")]
    NonOrthonormal(f64),
    #[error("rotation determinant is {0:.6}, expected +1")]
    NotProperRotation(f64),
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("depth must be positive and finite, got {0}")]
    NonPositiveDepth(f64),
    #[error("point is behind the camera (z = {0:.6})")]
    BehindCamera(f64),
    #[error("view index {index} out of range for rig with {count} cameras")]
    ViewOutOfRange { index: usize, count: usize },
    #[error("degenerate epipolar geometry: {0}")]
    DegenerateEpipolar(String),
    #[error("epipolar line has zero image-plane direction")]
    DegenerateLine,
    #[error("invalid rig: {0}")]
    InvalidRig(String),
    #[error("invalid 4x4 transform: {0}")]
    InvalidMatrix(String),
}

/// Sub-pixel image coordinates; `u` is the column, `v` the row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    /// Homogeneous form `(u, v, 1)`.
    pub fn homogeneous(&self) -> Vector3<f64> {
        Vector3::new(self.u, self.v, 1.0)
    }
}

/// Pinhole intrinsics with zero skew.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fx.is_finite() && fy > 0.0 && fy.is_finite()) {
            return Err(GeometryError::InvalidCamera(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(GeometryError::InvalidCamera(format!(
                "principal point must be finite, got cx={cx}, cy={cy}"
            )));
        }
        if width < 1 || height < 1 {
            return Err(GeometryError::InvalidCamera(format!(
                "image size must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Upper-triangular intrinsic matrix K.
    pub fn intrinsic_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Closed-form K^{-1}.
    pub fn intrinsic_inverse(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Camera-frame point at `depth` along the ray through `p`; its z equals `depth`.
    pub fn backproject(&self, p: Pixel, depth: f64) -> Result<Vector3<f64>, GeometryError> {
        if !(depth > 0.0 && depth.is_finite()) {
            return Err(GeometryError::NonPositiveDepth(depth));
        }
        Ok(Vector3::new(
            (p.u - self.cx) / self.fx * depth,
            (p.v - self.cy) / self.fy * depth,
            depth,
        ))
    }

    /// Perspective projection of a camera-frame point. No bounds clamping.
    pub fn project(&self, point: &Vector3<f64>) -> Result<Pixel, GeometryError> {
        if point.z <= 0.0 {
            return Err(GeometryError::BehindCamera(point.z));
        }
        Ok(Pixel::new(
            self.fx * point.x / point.z + self.cx,
            self.fy * point.y / point.z + self.cy,
        ))
    }

    /// True when `p` lies within `[0, width-1] x [0, height-1]`.
    pub fn contains(&self, p: Pixel) -> bool {
        p.u >= 0.0 && p.v >= 0.0 && p.u <= (self.width - 1) as f64 && p.v <= (self.height - 1) as f64
    }
}

/// Rigid transform stored as an explicit rotation matrix plus translation.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSE3 {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl PoseSE3 {
    /// Validates orthonormality and a +1 determinant before accepting the rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let deviation = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !deviation.is_finite() || deviation > ROTATION_TOL {
            return Err(GeometryError::NonOrthonormal(deviation));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(GeometryError::NotProperRotation(det));
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(GeometryError::InvalidMatrix(
                "translation must be finite".into(),
            ));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Group operations preserve validity; skip re-validation on internal results.
    fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::from_parts_unchecked(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::from_parts_unchecked(Matrix3::identity(), Vector3::new(x, y, z))
    }

    /// Rotation of `angle` radians about `axis` (normalized internally), plus translation.
    pub fn from_axis_angle(
        axis: Vector3<f64>,
        angle: f64,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let norm = axis.norm();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(GeometryError::InvalidMatrix("zero rotation axis".into()));
        }
        let rot = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(axis),
            angle,
        );
        Ok(Self::from_parts_unchecked(rot.into_inner(), translation))
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_parts_unchecked(
            nalgebra::Rotation3::from_axis_angle(&Vector3::x_axis(), angle).into_inner(),
            Vector3::zeros(),
        )
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_parts_unchecked(
            nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), angle).into_inner(),
            Vector3::zeros(),
        )
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_parts_unchecked(
            nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), angle).into_inner(),
            Vector3::zeros(),
        )
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// 4x4 homogeneous form with bottom row `(0, 0, 0, 1)`.
    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Parses a row-major 4x4; the bottom row must be `(0, 0, 0, 1)` within 1e-9.
    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self, GeometryError> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)] - 1.0];
        let worst = bottom.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        if worst > 1e-9 {
            return Err(GeometryError::InvalidMatrix(format!(
                "bottom row deviates from (0,0,0,1) by {worst:.3e}"
            )));
        }
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    /// `self * other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        PoseSE3::from_parts_unchecked(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    /// Inverse transform: rotation R^T, translation -R^T t.
    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation.transpose();
        PoseSE3::from_parts_unchecked(rt, -(rt * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Max absolute entry of `R^T R - I`; used by drift tests.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity())
            .abs()
            .max()
    }
}

/// Transfers a vehicle-frame motion into camera `i`'s frame by conjugation
/// with that camera's extrinsic: `(T^i)^-1 * P * T^i`.
pub fn universal_to_local(universal: &PoseSE3, extrinsic: &PoseSE3) -> PoseSE3 {
    extrinsic.inverse().compose(&universal.compose(extrinsic))
}

/// One camera of a rig: intrinsics plus the camera-to-vehicle extrinsic.
#[derive(Debug, Clone)]
pub struct RigCamera {
    pub model: CameraModel,
    pub extrinsic: PoseSE3,
}

/// An ordered set of cameras plus the view pairs whose frusta overlap.
#[derive(Debug, Clone)]
pub struct CameraRig {
    cameras: Vec<RigCamera>,
    adjacency: Vec<(usize, usize)>,
}

impl CameraRig {
    pub fn new(
        cameras: Vec<RigCamera>,
        adjacency: Vec<(usize, usize)>,
    ) -> Result<Self, GeometryError> {
        if cameras.len() < 2 {
            return Err(GeometryError::InvalidRig(format!(
                "need at least 2 cameras, got {}",
                cameras.len()
            )));
        }
        for &(i, j) in &adjacency {
            for index in [i, j] {
                if index >= cameras.len() {
                    return Err(GeometryError::ViewOutOfRange {
                        index,
                        count: cameras.len(),
                    });
                }
            }
            if i == j {
                return Err(GeometryError::InvalidRig(format!(
                    "adjacency pair ({i}, {j}) references a single view"
                )));
            }
        }
        Ok(Self { cameras, adjacency })
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn camera(&self, index: usize) -> Result<&RigCamera, GeometryError> {
        self.cameras.get(index).ok_or(GeometryError::ViewOutOfRange {
            index,
            count: self.cameras.len(),
        })
    }

    pub fn cameras(&self) -> &[RigCamera] {
        &self.cameras
    }

    pub fn adjacency(&self) -> &[(usize, usize)] {
        &self.adjacency
    }

    /// Transform mapping camera-`i` coordinates into camera-`j` coordinates:
    /// `(T^j)^-1 * T^i`.
    pub fn relative_pose(&self, i: usize, j: usize) -> Result<PoseSE3, GeometryError> {
        let t_i = &self.camera(i)?.extrinsic;
        let t_j = &self.camera(j)?.extrinsic;
        Ok(t_j.inverse().compose(t_i))
    }
}

/// Warps pixel `p` of camera `i` (at `depth`) into camera `j`, returning the
/// landing pixel together with the induced depth in camera `j`.
pub fn warp_pixel_with_depth(
    p: Pixel,
    depth: f64,
    cam_i: &CameraModel,
    cam_j: &CameraModel,
    rel: &PoseSE3,
) -> Result<(Pixel, f64), GeometryError> {
    let point_i = cam_i.backproject(p, depth)?;
    let point_j = rel.transform_point(&point_i);
    let pixel_j = cam_j.project(&point_j)?;
    Ok((pixel_j, point_j.z))
}

/// The pixel warp `K^j [R|t] D (K^i)^-1 p`: backproject at `depth`, transform
/// by `rel` (camera-i to camera-j coordinates), reproject.
pub fn warp_pixel(
    p: Pixel,
    depth: f64,
    cam_i: &CameraModel,
    cam_j: &CameraModel,
    rel: &PoseSE3,
) -> Result<Pixel, GeometryError> {
    warp_pixel_with_depth(p, depth, cam_i, cam_j, rel).map(|(pixel, _)| pixel)
}

/// Fundamental matrix between two views, defined up to scale, rank 2.
#[derive(Debug, Clone)]
pub struct FundamentalMatrix {
    matrix: Matrix3<f64>,
}

fn skew_symmetric(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

impl FundamentalMatrix {
    /// Builds `(K^j)^-T [t]_x R (K^i)^-1` from the relative motion `[R|t]`
    /// mapping camera-i coordinates to camera-j coordinates.
    pub fn from_motion(
        cam_i: &CameraModel,
        cam_j: &CameraModel,
        rel: &PoseSE3,
    ) -> Result<Self, GeometryError> {
        let t_norm = rel.translation().norm();
        if t_norm <= 1e-15 {
            return Err(GeometryError::DegenerateEpipolar(
                "relative translation is zero; epipolar geometry undefined".into(),
            ));
        }
        let f = cam_j.intrinsic_inverse().transpose()
            * skew_symmetric(rel.translation())
            * rel.rotation()
            * cam_i.intrinsic_inverse();
        Self::from_matrix(f)
    }

    /// Accepts any rank-2 matrix (smallest singular value <= 1e-9 * largest).
    pub fn from_matrix(matrix: Matrix3<f64>) -> Result<Self, GeometryError> {
        let svd = matrix.svd(false, false);
        let max_sv = svd.singular_values.max();
        let min_sv = svd.singular_values.min();
        if !(max_sv > 0.0 && max_sv.is_finite()) {
            return Err(GeometryError::DegenerateEpipolar(
                "fundamental matrix is zero or non-finite".into(),
            ));
        }
        if min_sv > RANK_TOL * max_sv {
            return Err(GeometryError::DegenerateEpipolar(format!(
                "matrix has full rank (sigma_min/sigma_max = {:.3e})",
                min_sv / max_sv
            )));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    /// Scale-normalized copy with unit Frobenius norm.
    pub fn normalized(&self) -> Matrix3<f64> {
        self.matrix / self.matrix.norm()
    }

    /// Epipolar line of `q_i` in view j, as line coefficients `(a, b, c)`.
    pub fn epipolar_line(&self, q_i: Pixel) -> Vector3<f64> {
        self.matrix * q_i.homogeneous()
    }

    /// Point-to-line distance of `q_j` from the epipolar line of `q_i`, in pixels.
    pub fn epipolar_distance(&self, q_i: Pixel, q_j: Pixel) -> Result<f64, GeometryError> {
        let line = self.epipolar_line(q_i);
        let dir_norm = line.x.hypot(line.y);
        if dir_norm <= 0.0 || !dir_norm.is_finite() {
            return Err(GeometryError::DegenerateLine);
        }
        Ok((line.dot(&q_j.homogeneous())).abs() / dir_norm)
    }
}

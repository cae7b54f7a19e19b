//! Synthetic surround rig and scene: a ring of cameras inside a textured
//! hexagonal room with a ground plane, rendered analytically so every pixel
//! has exact ground-truth depth. Deterministic given the seed.

use crate::geometry::{CameraModel, CameraRig, GeometryError, PoseSE3, RigCamera};
use crate::photometric::{DepthMap, Image, PhotometricError};
use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(
        "frustum overlap between views {i} and {j} is {fraction:.3}, below the required {required:.3}"
    )]
    OverlapUnsatisfied {
        i: usize,
        j: usize,
        fraction: f64,
        required: f64,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Photometric(#[from] PhotometricError),
}

/// Ring-rig layout parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigSpec {
    pub n_cameras: usize,
    /// Radial offset of each camera center from the vehicle origin (meters).
    pub ring_radius: f64,
    pub width: u32,
    pub height: u32,
    /// Focal length as a fraction of image width (controls field of view).
    pub focal_factor: f64,
    /// Minimum fraction of view i's test rays that must land inside view j
    /// for each adjacency pair.
    pub min_overlap: f64,
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            n_cameras: 6,
            ring_radius: 1.0,
            width: 256,
            height: 160,
            focal_factor: 0.42,
            min_overlap: 0.25,
        }
    }
}

/// Scene and sequence parameters around a [`RigSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub rig: RigSpec,
    /// Apothem of the hexagonal room (meters).
    pub wall_distance: f64,
    /// Ground plane height below the camera ring (meters, y points down).
    pub ground_y: f64,
    /// Backstop sphere radius; never the nearest hit inside a closed room.
    pub sky_radius: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            rig: RigSpec::default(),
            wall_distance: 5.0,
            ground_y: 1.2,
            sky_radius: 80.0,
            seed: 7,
        }
    }
}

/// Builds the camera ring: camera i yawed by `i·2π/N` and pushed out to the
/// ring radius, so extrinsics map camera coordinates to the vehicle frame.
/// Adjacency is the directed ring (i, i+1 mod N). Frustum overlap of each
/// adjacent pair is verified by ray sampling.
pub fn build_rig(spec: &RigSpec) -> Result<CameraRig, SynthError> {
    if spec.n_cameras < 2 {
        return Err(SynthError::InvalidSpec(format!(
            "need at least 2 cameras, got {}",
            spec.n_cameras
        )));
    }
    if !(spec.ring_radius.is_finite() && spec.ring_radius >= 0.0) {
        return Err(SynthError::InvalidSpec(format!(
            "ring radius must be non-negative, got {}",
            spec.ring_radius
        )));
    }
    if !(spec.focal_factor > 0.0 && spec.focal_factor.is_finite()) {
        return Err(SynthError::InvalidSpec(format!(
            "focal factor must be positive, got {}",
            spec.focal_factor
        )));
    }
    if !(0.0..=1.0).contains(&spec.min_overlap) {
        return Err(SynthError::InvalidSpec(format!(
            "min_overlap must be within [0,1], got {}",
            spec.min_overlap
        )));
    }
    let focal = spec.focal_factor * spec.width as f64;
    let model = CameraModel::new(
        focal,
        focal,
        spec.width as f64 / 2.0,
        spec.height as f64 / 2.0,
        spec.width,
        spec.height,
    )?;
    let n = spec.n_cameras;
    let mut cameras = Vec::with_capacity(n);
    for i in 0..n {
        let theta = i as f64 * std::f64::consts::TAU / n as f64;
        let translation = Vector3::new(
            spec.ring_radius * theta.sin(),
            0.0,
            spec.ring_radius * theta.cos(),
        );
        let extrinsic = PoseSE3::from_axis_angle(Vector3::y(), theta, translation)?;
        cameras.push(RigCamera { model, extrinsic });
    }
    let adjacency: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    let rig = CameraRig::new(cameras, adjacency)?;
    for &(i, j) in rig.adjacency() {
        let fraction = frustum_overlap(&rig, i, j)?;
        if fraction < spec.min_overlap {
            return Err(SynthError::OverlapUnsatisfied {
                i,
                j,
                fraction,
                required: spec.min_overlap,
            });
        }
    }
    Ok(rig)
}

/// Fraction of a pixel grid of view i, lifted to a reference distance, that
/// projects inside view j.
fn frustum_overlap(rig: &CameraRig, i: usize, j: usize) -> Result<f64, SynthError> {
    const GRID: usize = 12;
    const SAMPLE_DEPTH: f64 = 8.0;
    let cam_i = &rig.camera(i)?.model;
    let cam_j = &rig.camera(j)?.model;
    let rel = rig.relative_pose(i, j)?;
    let mut inside = 0usize;
    for gy in 0..GRID {
        for gx in 0..GRID {
            let p = crate::geometry::Pixel::new(
                (gx as f64 + 0.5) / GRID as f64 * (cam_i.width as f64 - 1.0),
                (gy as f64 + 0.5) / GRID as f64 * (cam_i.height as f64 - 1.0),
            );
            let point = rel.transform_point(&cam_i.backproject(p, SAMPLE_DEPTH)?);
            if point.z > 0.0 {
                if let Ok(q) = cam_j.project(&point) {
                    if cam_j.contains(q) {
                        inside += 1;
                    }
                }
            }
        }
    }
    Ok(inside as f64 / (GRID * GRID) as f64)
}

/// Analytic scene geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Infinite plane through `point` with unit-length `normal`.
    Plane {
        point: Vector3<f64>,
        normal: Vector3<f64>,
    },
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    /// Vertical wall strip through the horizontal points `a` and `b` (x/z
    /// coordinates), extending infinitely along y.
    Wall { a: Vector2<f64>, b: Vector2<f64> },
}

/// A shape with its own texture stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePrimitive {
    pub shape: Shape,
    pub tex_seed: u64,
}

/// A static world of textured primitives; rays are shaded at the nearest hit.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub primitives: Vec<ScenePrimitive>,
}

impl SyntheticScene {
    /// The standard test world: a hexagonal room of walls at the given
    /// apothem (wall normals on the bisectors between camera headings, so
    /// seams never align with optical axes), a ground plane, and a distant
    /// backstop sphere that guarantees every ray terminates.
    pub fn standard(cfg: &SynthConfig) -> Result<Self, SynthError> {
        if !(cfg.wall_distance > 0.0 && cfg.wall_distance.is_finite()) {
            return Err(SynthError::InvalidSpec(format!(
                "wall distance must be positive, got {}",
                cfg.wall_distance
            )));
        }
        if !(cfg.ground_y > 0.0 && cfg.ground_y.is_finite()) {
            return Err(SynthError::InvalidSpec(format!(
                "ground height must be positive (y points down), got {}",
                cfg.ground_y
            )));
        }
        if cfg.sky_radius <= cfg.wall_distance * 2.0 {
            return Err(SynthError::InvalidSpec(format!(
                "sky radius {} too small for wall distance {}",
                cfg.sky_radius, cfg.wall_distance
            )));
        }
        let mut primitives = Vec::new();
        for k in 0..6 {
            let phi = (k as f64 + 0.5) * std::f64::consts::TAU / 6.0;
            let dir = Vector3::new(phi.sin(), 0.0, phi.cos());
            primitives.push(ScenePrimitive {
                shape: Shape::Plane {
                    point: dir * cfg.wall_distance,
                    normal: -dir,
                },
                tex_seed: mix_seed(cfg.seed, k as u64),
            });
        }
        primitives.push(ScenePrimitive {
            shape: Shape::Plane {
                point: Vector3::new(0.0, cfg.ground_y, 0.0),
                normal: Vector3::new(0.0, -1.0, 0.0),
            },
            tex_seed: mix_seed(cfg.seed, 6),
        });
        primitives.push(ScenePrimitive {
            shape: Shape::Sphere {
                center: Vector3::zeros(),
                radius: cfg.sky_radius,
            },
            tex_seed: mix_seed(cfg.seed, 7),
        });
        Ok(Self { primitives })
    }

    /// A twelve-sided star prism: vertical walls on the chords of a
    /// dodecagon whose vertices alternate between `r_inner` and `r_outer`
    /// every 30°. Each wall's normal is rotated roughly 48° away from the
    /// radial direction, so a camera ring at the center sees every wall
    /// obliquely.
    ///
    /// This obliqueness is the point of the scene. When all depths are
    /// rescaled by a common factor, a point transferred from one ring camera
    /// to its neighbor slides along the viewing ray; the induced depth
    /// mismatch is proportional to the component of the camera baseline
    /// along the surface normal. In a room whose walls face the ring
    /// head-on (normals near-radial, hence near-perpendicular to the
    /// tangential baselines) that component vanishes and uniform rescaling
    /// is almost invisible to cross-view depth checks. The star prism's
    /// twisted walls keep it large for every adjacent camera pair.
    ///
    /// Every wall line stays at least `r_inner·r_outer·sin 30° / c` from the
    /// vertical axis, where `c` is the chord length, so the polygon's kernel
    /// contains a generous central disk. A camera ring inside that disk sees
    /// every wall point: depth maps are continuous and cross-view transfers
    /// are occlusion-free. Rays that clear the walls vertically escape and
    /// render as invalid depth, so keep the vertical field of view modest.
    pub fn star_prism(r_inner: f64, r_outer: f64, seed: u64) -> Result<Self, SynthError> {
        if !(r_inner > 0.0 && r_inner.is_finite() && r_outer.is_finite() && r_outer > r_inner) {
            return Err(SynthError::InvalidSpec(format!(
                "star prism needs 0 < r_inner < r_outer, got {r_inner} and {r_outer}"
            )));
        }
        let vertex = |m: usize| -> Vector2<f64> {
            let r = if m % 2 == 0 { r_inner } else { r_outer };
            let az = m as f64 * std::f64::consts::TAU / 12.0;
            Vector2::new(r * az.sin(), r * az.cos())
        };
        let primitives = (0..12)
            .map(|m| ScenePrimitive {
                shape: Shape::Wall {
                    a: vertex(m),
                    b: vertex(m + 1),
                },
                tex_seed: mix_seed(seed, m as u64),
            })
            .collect();
        Ok(Self { primitives })
    }

    /// Minimal world for stereo tests: a single textured fronto-parallel wall
    /// at depth `z` in front of the origin.
    pub fn wall_at_z(z: f64, seed: u64) -> Result<Self, SynthError> {
        if !(z > 0.0 && z.is_finite()) {
            return Err(SynthError::InvalidSpec(format!(
                "wall depth must be positive, got {z}"
            )));
        }
        Ok(Self {
            primitives: vec![ScenePrimitive {
                shape: Shape::Plane {
                    point: Vector3::new(0.0, 0.0, z),
                    normal: Vector3::new(0.0, 0.0, -1.0),
                },
                tex_seed: seed,
            }],
        })
    }
}

/// Ray/shape intersection; `dir` need not be normalized, and the returned
/// parameter is in units of `dir` (for camera rays with z-component 1 it is
/// exactly the camera-frame depth).
fn intersect(shape: &Shape, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    const T_MIN: f64 = 1e-9;
    match shape {
        Shape::Plane { point, normal } => {
            let denom = dir.dot(normal);
            if denom.abs() < 1e-12 {
                return None;
            }
            let t = (point - origin).dot(normal) / denom;
            (t > T_MIN).then_some(t)
        }
        Shape::Sphere { center, radius } => {
            let oc = origin - center;
            let a = dir.dot(dir);
            let b = 2.0 * dir.dot(&oc);
            let c = oc.dot(&oc) - radius * radius;
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let t0 = (-b - sq) / (2.0 * a);
            let t1 = (-b + sq) / (2.0 * a);
            if t0 > T_MIN {
                Some(t0)
            } else if t1 > T_MIN {
                Some(t1)
            } else {
                None
            }
        }
        Shape::Wall { a, b } => {
            // 2D ray/segment intersection in the horizontal plane; the ray
            // parameter is shared with the full 3D ray because the wall has
            // no vertical extent limit. A slight tolerance on the segment
            // parameter keeps shared endpoints of adjoining walls gap-free.
            const S_TOL: f64 = 1e-9;
            let o = Vector2::new(origin.x, origin.z);
            let d = Vector2::new(dir.x, dir.z);
            let e = b - a;
            let den = d.x * e.y - d.y * e.x;
            if den.abs() < 1e-14 {
                return None;
            }
            let q = a - o;
            let t = (q.x * e.y - q.y * e.x) / den;
            let s = (q.x * d.y - q.y * d.x) / den;
            (t > T_MIN && (-S_TOL..=1.0 + S_TOL).contains(&s)).then_some(t)
        }
    }
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    splitmix64(seed ^ salt.wrapping_mul(0x9e3779b97f4a7c15))
}

/// Lattice hash in [0, 1).
fn lattice_value(ix: i64, iy: i64, iz: i64, seed: u64) -> f64 {
    let h = splitmix64(
        seed ^ (ix as u64).wrapping_mul(0x8da6b343)
            ^ (iy as u64).wrapping_mul(0xd8163841)
            ^ (iz as u64).wrapping_mul(0xcb1ab31f),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Trilinearly interpolated value noise in [0, 1], C1-smooth.
fn value_noise(p: &Vector3<f64>, seed: u64) -> f64 {
    let fx = p.x.floor();
    let fy = p.y.floor();
    let fz = p.z.floor();
    let (ix, iy, iz) = (fx as i64, fy as i64, fz as i64);
    let tx = smoothstep(p.x - fx);
    let ty = smoothstep(p.y - fy);
    let tz = smoothstep(p.z - fz);
    let mut acc = 0.0;
    for dz in 0..2i64 {
        let wz = if dz == 0 { 1.0 - tz } else { tz };
        for dy in 0..2i64 {
            let wy = if dy == 0 { 1.0 - ty } else { ty };
            for dx in 0..2i64 {
                let wx = if dx == 0 { 1.0 - tx } else { tx };
                acc += wx * wy * wz * lattice_value(ix + dx, iy + dy, iz + dz, seed);
            }
        }
    }
    acc
}

/// Band-limited checker in [0, 1]: a product of sines rather than hard cells,
/// so bilinear resampling of rendered images stays accurate.
fn soft_checker(p: &Vector3<f64>) -> f64 {
    use std::f64::consts::PI;
    0.5 + 0.5 * (PI * p.x).sin() * (PI * p.y).sin() * (PI * p.z).sin()
}

/// World-anchored albedo in roughly [0.13, 0.87]: three octaves of value
/// noise plus a soft checker, amplitudes chosen so no clamping is ever
/// needed. The finest octave puts feature detail near the patch scale of the
/// corner matcher at typical rig viewing distances.
pub fn texture(p: &Vector3<f64>, seed: u64) -> f64 {
    let octave1 = value_noise(&(p * 1.3), seed);
    let octave2 = value_noise(&(p * 3.1), mix_seed(seed, 101));
    let octave3 = value_noise(&(p * 8.3), mix_seed(seed, 202));
    let check = soft_checker(&(p * 0.9));
    0.5 + 0.34 * (octave1 - 0.5)
        + 0.18 * (octave2 - 0.5)
        + 0.12 * (octave3 - 0.5)
        + 0.1 * (check - 0.5)
}

/// One camera's rendered output.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub image: Image,
    pub depth: DepthMap,
}

/// Renders every rig camera with the vehicle at `vehicle_pose`
/// (vehicle-to-world). Depth is the camera-frame z of the nearest hit; pixels
/// whose ray escapes the scene get an invalid depth and a mid-gray value.
pub fn render(
    scene: &SyntheticScene,
    rig: &CameraRig,
    vehicle_pose: &PoseSE3,
) -> Result<Vec<RenderedView>, SynthError> {
    let mut views = Vec::with_capacity(rig.len());
    for cam in rig.cameras() {
        let cam_world = vehicle_pose.compose(&cam.extrinsic);
        let (w, h) = (cam.model.width as usize, cam.model.height as usize);
        let origin = *cam_world.translation();
        let rotation = *cam_world.rotation();
        let mut pixels = vec![0.0f64; w * h];
        let mut depths = vec![0.0f64; w * h];
        pixels
            .par_chunks_mut(w)
            .zip(depths.par_chunks_mut(w))
            .enumerate()
            .for_each(|(y, (pix_row, depth_row))| {
                for x in 0..w {
                    let dir_cam = Vector3::new(
                        (x as f64 - cam.model.cx) / cam.model.fx,
                        (y as f64 - cam.model.cy) / cam.model.fy,
                        1.0,
                    );
                    let dir = rotation * dir_cam;
                    let mut nearest: Option<(f64, u64)> = None;
                    for prim in &scene.primitives {
                        if let Some(t) = intersect(&prim.shape, &origin, &dir) {
                            if nearest.map_or(true, |(best, _)| t < best) {
                                nearest = Some((t, prim.tex_seed));
                            }
                        }
                    }
                    match nearest {
                        Some((t, seed)) => {
                            let hit = origin + dir * t;
                            pix_row[x] = texture(&hit, seed);
                            depth_row[x] = t;
                        }
                        None => {
                            pix_row[x] = 0.5;
                            depth_row[x] = 0.0;
                        }
                    }
                }
            });
        views.push(RenderedView {
            image: Image::new(w, h, 1, pixels)?,
            depth: DepthMap::from_data(w, h, depths)?,
        });
    }
    Ok(views)
}

/// A rendered temporal sequence: `frames[t][view]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub frames: Vec<Vec<RenderedView>>,
    /// Vehicle-to-world pose at every step.
    pub vehicle_poses: Vec<PoseSE3>,
}

/// Renders `steps` frames of a static scene under constant universal
/// ego-motion: `motion` maps vehicle coordinates at step t to coordinates at
/// step t+1, so the world pose advances by its inverse each step. Per-camera
/// ego-motion is exactly `universal_to_local(motion, extrinsic)`.
pub fn make_sequence(
    scene: &SyntheticScene,
    rig: &CameraRig,
    motion: &PoseSE3,
    steps: usize,
) -> Result<Sequence, SynthError> {
    if steps < 2 {
        return Err(SynthError::InvalidSpec(format!(
            "a sequence needs at least 2 steps, got {steps}"
        )));
    }
    let mut frames = Vec::with_capacity(steps);
    let mut vehicle_poses = Vec::with_capacity(steps);
    let mut pose = PoseSE3::identity();
    let step_pose = motion.inverse();
    for _ in 0..steps {
        frames.push(render(scene, rig, &pose)?);
        vehicle_poses.push(pose.clone());
        pose = pose.compose(&step_pose);
    }
    Ok(Sequence {
        frames,
        vehicle_poses,
    })
}

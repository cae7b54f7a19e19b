//! On-disk formats: rig calibration as JSON, images and depth maps as simple
//! little-endian rasters (with 8-bit PNG accepted for image input), match and
//! sparse-depth files as JSON, and flat parameter snapshots.
//!
//! All binary formats open with a four-byte ASCII magic; loading sniffs the
//! magic, so a PNG handed to the image loader and a raw raster are told apart
//! by content, not extension.

use crate::geometry::{CameraModel, CameraRig, GeometryError, Pixel, PoseSE3, RigCamera};
use crate::photometric::{DepthMap, Image, PhotometricError};
use crate::sfm::{CorrespondenceSet, Match, SparsePseudoDepth};
use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const DEPTH_MAGIC: &[u8; 4] = b"SDPT";
const IMAGE_MAGIC: &[u8; 4] = b"SIMG";
const WEIGHTS_MAGIC: &[u8; 4] = b"SWGT";
const PNG_MAGIC: &[u8; 4] = &[0x89, b'P', b'N', b'G'];

/// Guard against allocating absurd buffers for corrupt headers.
const MAX_ELEMENTS: u64 = 1 << 28;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: Vec<u8> },
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Photometric(#[from] PhotometricError),
    #[error("image decode failed: {0}")]
    Decode(#[from] image::ImageError),
}

#[derive(Serialize, Deserialize)]
struct RigFileCamera {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    /// Camera-to-vehicle transform, 16 row-major entries of a 4x4 matrix.
    extrinsic: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RigFile {
    cameras: Vec<RigFileCamera>,
    adjacency: Vec<(usize, usize)>,
}

pub fn save_rig(path: &Path, rig: &CameraRig) -> Result<(), IoError> {
    let cameras = rig
        .cameras()
        .iter()
        .map(|cam| {
            let m = cam.extrinsic.to_matrix();
            let extrinsic = (0..4)
                .flat_map(|r| (0..4).map(move |c| m[(r, c)]))
                .collect();
            RigFileCamera {
                fx: cam.model.fx,
                fy: cam.model.fy,
                cx: cam.model.cx,
                cy: cam.model.cy,
                width: cam.model.width,
                height: cam.model.height,
                extrinsic,
            }
        })
        .collect();
    let file = RigFile { cameras, adjacency: rig.adjacency().to_vec() };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &file)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_rig(path: &Path) -> Result<CameraRig, IoError> {
    let file: RigFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    let mut cameras = Vec::with_capacity(file.cameras.len());
    for (idx, cam) in file.cameras.iter().enumerate() {
        if cam.extrinsic.len() != 16 {
            return Err(IoError::Corrupt(format!(
                "camera {idx}: extrinsic has {} entries, expected 16",
                cam.extrinsic.len()
            )));
        }
        let m = Matrix4::from_fn(|r, c| cam.extrinsic[r * 4 + c]);
        let extrinsic = PoseSE3::from_matrix(&m)?;
        let model = CameraModel::new(cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height)?;
        cameras.push(RigCamera { model, extrinsic });
    }
    Ok(CameraRig::new(cameras, file.adjacency)?)
}

fn write_magic(out: &mut impl Write, magic: &[u8; 4]) -> Result<(), IoError> {
    out.write_all(magic)?;
    Ok(())
}

fn read_exact(input: &mut impl Read, buf: &mut [u8], what: &str) -> Result<(), IoError> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            IoError::Corrupt(format!("truncated while reading {what}"))
        } else {
            IoError::Io(e)
        }
    })
}

fn read_u32(input: &mut impl Read, what: &str) -> Result<u32, IoError> {
    let mut buf = [0u8; 4];
    read_exact(input, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn expect_magic(input: &mut impl Read, magic: &[u8; 4]) -> Result<(), IoError> {
    let mut found = [0u8; 4];
    read_exact(input, &mut found, "magic")?;
    if &found != magic {
        return Err(IoError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: found.to_vec(),
        });
    }
    Ok(())
}

fn read_f32_block(input: &mut impl Read, count: u64, what: &str) -> Result<Vec<f64>, IoError> {
    if count > MAX_ELEMENTS {
        return Err(IoError::Corrupt(format!("{what}: implausible element count {count}")));
    }
    let mut bytes = vec![0u8; count as usize * 4];
    read_exact(input, &mut bytes, what)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Writes a depth raster: magic, u32 width, u32 height, then row-major f32
/// depths. Invalid pixels are stored as 0.
pub fn save_depth(path: &Path, depth: &DepthMap) -> Result<(), IoError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_magic(&mut out, DEPTH_MAGIC)?;
    out.write_all(&(depth.width() as u32).to_le_bytes())?;
    out.write_all(&(depth.height() as u32).to_le_bytes())?;
    for (value, &ok) in depth.data().iter().zip(depth.valid()) {
        let stored = if ok { *value as f32 } else { 0.0f32 };
        out.write_all(&stored.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Loads a depth raster; stored values ≤ 0 or non-finite become invalid
/// pixels.
pub fn load_depth(path: &Path) -> Result<DepthMap, IoError> {
    let mut input = BufReader::new(File::open(path)?);
    expect_magic(&mut input, DEPTH_MAGIC)?;
    let width = read_u32(&mut input, "width")? as usize;
    let height = read_u32(&mut input, "height")? as usize;
    let data = read_f32_block(&mut input, width as u64 * height as u64, "depth values")?;
    Ok(DepthMap::from_data(width, height, data)?)
}

/// Writes an image raster: magic, u32 width/height/channels, then f32 values
/// in row-major, channel-interleaved order.
pub fn save_image(path: &Path, img: &Image) -> Result<(), IoError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_magic(&mut out, IMAGE_MAGIC)?;
    out.write_all(&(img.width() as u32).to_le_bytes())?;
    out.write_all(&(img.height() as u32).to_le_bytes())?;
    out.write_all(&(img.channels() as u32).to_le_bytes())?;
    for value in img.data() {
        out.write_all(&(*value as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Loads an image from either the raw raster format or an 8-bit PNG
/// (grayscale or RGB, values scaled to `[0, 1]`), distinguished by magic.
pub fn load_image(path: &Path) -> Result<Image, IoError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 4 {
        return Err(IoError::Corrupt("file shorter than a magic header".into()));
    }
    if &bytes[..4] == PNG_MAGIC {
        return load_png(&bytes);
    }
    let mut input = bytes.as_slice();
    expect_magic(&mut input, IMAGE_MAGIC)?;
    let width = read_u32(&mut input, "width")? as usize;
    let height = read_u32(&mut input, "height")? as usize;
    let channels = read_u32(&mut input, "channels")? as usize;
    let data = read_f32_block(
        &mut input,
        width as u64 * height as u64 * channels as u64,
        "image values",
    )?;
    Ok(Image::new(width, height, channels, data)?)
}

fn load_png(bytes: &[u8]) -> Result<Image, IoError> {
    let decoded = image::load_from_memory(bytes)?;
    match decoded {
        image::DynamicImage::ImageLuma8(gray) => {
            let (w, h) = (gray.width() as usize, gray.height() as usize);
            let data = gray.into_raw().iter().map(|&v| v as f64 / 255.0).collect();
            Ok(Image::new(w, h, 1, data)?)
        }
        image::DynamicImage::ImageRgb8(rgb) => {
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let data = rgb.into_raw().iter().map(|&v| v as f64 / 255.0).collect();
            Ok(Image::new(w, h, 3, data)?)
        }
        other => Err(IoError::Unsupported(format!(
            "PNG color type {:?}; expected 8-bit grayscale or RGB",
            other.color()
        ))),
    }
}

#[derive(Serialize, Deserialize)]
struct MatchFile {
    view_i: usize,
    view_j: usize,
    pairs: Vec<(f64, f64, f64, f64, f64)>,
}

/// Saves correspondences as JSON rows `[u_i, v_i, u_j, v_j, score]`.
pub fn save_matches(path: &Path, set: &CorrespondenceSet) -> Result<(), IoError> {
    let file = MatchFile {
        view_i: set.view_i,
        view_j: set.view_j,
        pairs: set
            .pairs
            .iter()
            .map(|m| (m.q_i.u, m.q_i.v, m.q_j.u, m.q_j.v, m.score))
            .collect(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &file)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Loads correspondences. Image-bound validation happens when the set is fed
/// to the pipeline, which knows the rig dimensions.
pub fn load_matches(path: &Path) -> Result<CorrespondenceSet, IoError> {
    let file: MatchFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    let pairs = file
        .pairs
        .iter()
        .map(|&(u_i, v_i, u_j, v_j, score)| Match {
            q_i: Pixel::new(u_i, v_i),
            q_j: Pixel::new(u_j, v_j),
            score,
        })
        .collect();
    Ok(CorrespondenceSet { view_i: file.view_i, view_j: file.view_j, pairs })
}

#[derive(Serialize, Deserialize)]
struct SparseDepthFile {
    view: usize,
    points: Vec<(f64, f64, f64)>,
}

/// Saves sparse pseudo-depths as JSON rows `[u, v, depth]`.
pub fn save_sparse_depth(path: &Path, sparse: &SparsePseudoDepth) -> Result<(), IoError> {
    let file = SparseDepthFile {
        view: sparse.view,
        points: sparse.points.iter().map(|(p, d)| (p.u, p.v, *d)).collect(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &file)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_sparse_depth(path: &Path) -> Result<SparsePseudoDepth, IoError> {
    let file: SparseDepthFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    let mut points = Vec::with_capacity(file.points.len());
    for &(u, v, d) in &file.points {
        if !(u.is_finite() && v.is_finite() && d.is_finite() && d > 0.0) {
            return Err(IoError::Corrupt(format!("bad sparse depth row [{u}, {v}, {d}]")));
        }
        points.push((Pixel::new(u, v), d));
    }
    Ok(SparsePseudoDepth { view: file.view, points })
}

/// Writes a flat parameter snapshot: magic, u32 count, one precision byte
/// (0 = f32, 1 = f64), then the values. Saving always uses f64.
pub fn save_weights(path: &Path, weights: &[f64]) -> Result<(), IoError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_magic(&mut out, WEIGHTS_MAGIC)?;
    out.write_all(&(weights.len() as u32).to_le_bytes())?;
    out.write_all(&[1u8])?;
    for w in weights {
        out.write_all(&w.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<Vec<f64>, IoError> {
    let mut input = BufReader::new(File::open(path)?);
    expect_magic(&mut input, WEIGHTS_MAGIC)?;
    let count = read_u32(&mut input, "count")? as u64;
    if count > MAX_ELEMENTS {
        return Err(IoError::Corrupt(format!("implausible parameter count {count}")));
    }
    let mut flag = [0u8; 1];
    read_exact(&mut input, &mut flag, "precision flag")?;
    match flag[0] {
        0 => read_f32_block(&mut input, count, "f32 parameters"),
        1 => {
            let mut bytes = vec![0u8; count as usize * 8];
            read_exact(&mut input, &mut bytes, "f64 parameters")?;
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        }
        other => Err(IoError::Corrupt(format!("unknown precision flag {other}"))),
    }
}

//! Depth-map files in two formats, dispatched by magic bytes:
//!
//! * 16-bit grayscale PNG plus a `<path>.json` sidecar (or CLI override)
//!   holding the scale; metric depth = raw / scale, raw 0 marks invalid.
//! * Raw `DPT1`: the 4-byte magic, little-endian u32 width and height, then
//!   row-major little-endian f32 metric depth; nonpositive or nonfinite
//!   samples are invalid.

use std::fs;
use std::io::{self, Cursor};
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian};
use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::DepthMap;
use crate::io::metadata::atomic_write;

pub const DPT1_MAGIC: [u8; 4] = *b"DPT1";
const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];
pub const MAX_DIMENSION: u32 = 1 << 16;

#[derive(Debug, Error)]
pub enum DepthError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("png error: {0}")]
    Image(#[from] image::ImageError),
    #[error("unrecognized depth format (expected a PNG or DPT1 stream)")]
    UnknownFormat,
    #[error("png depth must be 16-bit grayscale")]
    NotGray16,
    #[error("bad dimensions {width}x{height}")]
    BadDimensions { width: u32, height: u32 },
    #[error("truncated payload: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("{0} trailing bytes after the sample payload")]
    TrailingData(usize),
    #[error("no depth scale: pass one or provide the sidecar {0}")]
    MissingScale(PathBuf),
    #[error("depth scale must be finite and positive, got {0}")]
    BadScale(f64),
    #[error("sidecar {path}: {reason}")]
    Sidecar { path: PathBuf, reason: String },
    #[error("depth {value} at ({row}, {col}) leaves the 16-bit range at scale {scale}")]
    ValueOutOfRange {
        row: usize,
        col: usize,
        value: f64,
        scale: f64,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DepthSidecar {
    scale: f64,
}

/// The sidecar path for a PNG depth file: the original path with `.json`
/// appended.
pub fn sidecar_path(path: impl AsRef<Path>) -> PathBuf {
    let mut s = path.as_ref().as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

/// Read either depth format, sniffing the magic. `scale_override` applies to
/// the PNG format only and takes precedence over the sidecar.
pub fn read_depth(
    path: impl AsRef<Path>,
    scale_override: Option<f64>,
) -> Result<DepthMap, DepthError> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.starts_with(&PNG_SIGNATURE) {
        let scale = match scale_override {
            Some(s) => s,
            None => read_sidecar_scale(path)?,
        };
        decode_depth_png(&bytes, scale)
    } else if bytes.starts_with(&DPT1_MAGIC) {
        read_dpt1_bytes(&bytes)
    } else {
        Err(DepthError::UnknownFormat)
    }
}

fn read_sidecar_scale(depth_path: &Path) -> Result<f64, DepthError> {
    let sidecar = sidecar_path(depth_path);
    if !sidecar.exists() {
        return Err(DepthError::MissingScale(sidecar));
    }
    let body = fs::read_to_string(&sidecar)?;
    let parsed: DepthSidecar =
        serde_json::from_str(&body).map_err(|e| DepthError::Sidecar {
            path: sidecar,
            reason: e.to_string(),
        })?;
    Ok(parsed.scale)
}

/// Decode a 16-bit grayscale PNG byte stream with the given scale.
pub fn decode_depth_png(bytes: &[u8], scale: f64) -> Result<DepthMap, DepthError> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(DepthError::BadScale(scale));
    }
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    let gray = match img {
        DynamicImage::ImageLuma16(g) => g,
        _ => return Err(DepthError::NotGray16),
    };
    let (w, h) = gray.dimensions();
    if w == 0 || h == 0 || w > MAX_DIMENSION || h > MAX_DIMENSION {
        return Err(DepthError::BadDimensions {
            width: w,
            height: h,
        });
    }
    let mut values = Array2::zeros((h as usize, w as usize));
    for (x, y, pixel) in gray.enumerate_pixels() {
        values[[y as usize, x as usize]] = pixel.0[0] as f64 / scale;
    }
    Ok(DepthMap::new(values))
}

/// Write a depth map as 16-bit grayscale PNG plus its scale sidecar.
/// Every valid sample must round into `[1, 65535]` at the given scale;
/// invalid samples are written as raw 0.
pub fn write_depth_png(
    depth: &DepthMap,
    path: impl AsRef<Path>,
    scale: f64,
) -> Result<(), DepthError> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(DepthError::BadScale(scale));
    }
    let (h, w) = (depth.height(), depth.width());
    let mut img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::new(w as u32, h as u32);
    for row in 0..h {
        for col in 0..w {
            let raw = if depth.is_valid(row, col) {
                let value = depth.get(row, col);
                let scaled = (value * scale).round();
                if !(1.0..=65535.0).contains(&scaled) {
                    return Err(DepthError::ValueOutOfRange {
                        row,
                        col,
                        value,
                        scale,
                    });
                }
                scaled as u16
            } else {
                0
            };
            img.put_pixel(col as u32, row as u32, Luma([raw]));
        }
    }
    let mut bytes = Cursor::new(Vec::new());
    img.write_to(&mut bytes, ImageFormat::Png)?;
    atomic_write(&path, &bytes.into_inner())?;
    let sidecar = serde_json::to_vec_pretty(&DepthSidecar { scale })
        .expect("sidecar serialization cannot fail");
    atomic_write(sidecar_path(&path), &sidecar)?;
    Ok(())
}

/// Decode a raw `DPT1` byte stream.
pub fn read_dpt1_bytes(bytes: &[u8]) -> Result<DepthMap, DepthError> {
    if bytes.len() < 12 {
        return Err(DepthError::Truncated {
            expected: 12,
            got: bytes.len(),
        });
    }
    if bytes[0..4] != DPT1_MAGIC {
        return Err(DepthError::UnknownFormat);
    }
    let width = LittleEndian::read_u32(&bytes[4..8]);
    let height = LittleEndian::read_u32(&bytes[8..12]);
    if width == 0 || height == 0 || width > MAX_DIMENSION || height > MAX_DIMENSION {
        return Err(DepthError::BadDimensions { width, height });
    }
    let (w, h) = (width as usize, height as usize);
    let expected = 12 + w * h * 4;
    if bytes.len() < expected {
        return Err(DepthError::Truncated {
            expected,
            got: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(DepthError::TrailingData(bytes.len() - expected));
    }
    let mut values = Array2::zeros((h, w));
    for row in 0..h {
        for col in 0..w {
            let off = 12 + (row * w + col) * 4;
            values[[row, col]] = LittleEndian::read_f32(&bytes[off..off + 4]) as f64;
        }
    }
    Ok(DepthMap::new(values))
}

/// Encode a depth map as `DPT1` bytes; invalid samples become NaN.
pub fn write_dpt1_bytes(depth: &DepthMap) -> Vec<u8> {
    let (h, w) = (depth.height(), depth.width());
    let mut bytes = Vec::with_capacity(12 + w * h * 4);
    bytes.extend_from_slice(&DPT1_MAGIC);
    bytes.extend_from_slice(&(w as u32).to_le_bytes());
    bytes.extend_from_slice(&(h as u32).to_le_bytes());
    for row in 0..h {
        for col in 0..w {
            let v = if depth.is_valid(row, col) {
                depth.get(row, col) as f32
            } else {
                f32::NAN
            };
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

pub fn write_dpt1(depth: &DepthMap, path: impl AsRef<Path>) -> Result<(), DepthError> {
    atomic_write(path, &write_dpt1_bytes(depth))?;
    Ok(())
}

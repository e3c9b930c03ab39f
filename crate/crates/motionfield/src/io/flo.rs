//! Middlebury `.flo` optical-flow container: a 4-byte float magic tag,
//! little-endian i32 width and height, then row-major interleaved (du, dv)
//! f32 samples. Samples with magnitude above [`UNKNOWN_FLOW_THRESHOLD`] mark
//! unknown flow.

use std::fs;
use std::io;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use thiserror::Error;

use crate::geometry::FlowField;
use crate::io::metadata::atomic_write;

pub const FLO_MAGIC: f32 = 202021.25;
/// Sentinel written for invalid pixels; reads treat anything above the
/// threshold (or non-finite) as unknown.
pub const UNKNOWN_FLOW: f32 = 1e10;
pub const UNKNOWN_FLOW_THRESHOLD: f32 = 1e9;

/// Upper bound on either dimension; rejects absurd headers before allocating.
pub const MAX_DIMENSION: i32 = 1 << 16;

#[derive(Debug, Error)]
pub enum FloError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {got:?}, expected {FLO_MAGIC:?}")]
    BadMagic { got: f32 },
    #[error("bad dimensions {width}x{height}")]
    BadDimensions { width: i32, height: i32 },
    #[error("truncated payload: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("{0} trailing bytes after the sample payload")]
    TrailingData(usize),
}

/// Decode a `.flo` byte buffer.
pub fn read_flo_bytes(bytes: &[u8]) -> Result<FlowField, FloError> {
    if bytes.len() < 12 {
        return Err(FloError::Truncated {
            expected: 12,
            got: bytes.len(),
        });
    }
    let magic = LittleEndian::read_f32(&bytes[0..4]);
    if magic.to_bits() != FLO_MAGIC.to_bits() {
        return Err(FloError::BadMagic { got: magic });
    }
    let width = LittleEndian::read_i32(&bytes[4..8]);
    let height = LittleEndian::read_i32(&bytes[8..12]);
    if width <= 0 || height <= 0 || width > MAX_DIMENSION || height > MAX_DIMENSION {
        return Err(FloError::BadDimensions { width, height });
    }
    let (w, h) = (width as usize, height as usize);
    let expected = 12 + w * h * 8;
    if bytes.len() < expected {
        return Err(FloError::Truncated {
            expected,
            got: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FloError::TrailingData(bytes.len() - expected));
    }
    let mut flow = FlowField::zeros(h, w);
    for row in 0..h {
        for col in 0..w {
            let off = 12 + (row * w + col) * 8;
            let du = LittleEndian::read_f32(&bytes[off..off + 4]);
            let dv = LittleEndian::read_f32(&bytes[off + 4..off + 8]);
            flow.du[[row, col]] = du as f64;
            flow.dv[[row, col]] = dv as f64;
            if !du.is_finite()
                || !dv.is_finite()
                || du.abs() > UNKNOWN_FLOW_THRESHOLD
                || dv.abs() > UNKNOWN_FLOW_THRESHOLD
            {
                flow.valid[[row, col]] = false;
            }
        }
    }
    Ok(flow)
}

/// Encode a flow field as `.flo` bytes; invalid pixels become the
/// [`UNKNOWN_FLOW`] sentinel unless they already carry an unknown-range value.
pub fn write_flo_bytes(flow: &FlowField) -> Vec<u8> {
    let (h, w) = flow.du.dim();
    let mut bytes = Vec::with_capacity(12 + w * h * 8);
    bytes.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    bytes.extend_from_slice(&(w as i32).to_le_bytes());
    bytes.extend_from_slice(&(h as i32).to_le_bytes());
    for row in 0..h {
        for col in 0..w {
            let (du, dv) = if flow.valid[[row, col]] {
                (flow.du[[row, col]] as f32, flow.dv[[row, col]] as f32)
            } else {
                let du = flow.du[[row, col]] as f32;
                let dv = flow.dv[[row, col]] as f32;
                let marked = !du.is_finite()
                    || !dv.is_finite()
                    || du.abs() > UNKNOWN_FLOW_THRESHOLD
                    || dv.abs() > UNKNOWN_FLOW_THRESHOLD;
                if marked {
                    (du, dv)
                } else {
                    (UNKNOWN_FLOW, UNKNOWN_FLOW)
                }
            };
            bytes.extend_from_slice(&du.to_le_bytes());
            bytes.extend_from_slice(&dv.to_le_bytes());
        }
    }
    bytes
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField, FloError> {
    read_flo_bytes(&fs::read(path)?)
}

pub fn write_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<(), FloError> {
    atomic_write(path, &write_flo_bytes(flow))?;
    Ok(())
}

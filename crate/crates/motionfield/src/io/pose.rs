//! Plain-text camera pose files: one line per frame, `frame_index` followed
//! by the world-to-camera rotation and translation interleaved row-wise as
//! `r00 r01 r02 t0 r10 r11 r12 t1 r20 r21 r22 t2`. Frame indices must run
//! sequentially from 0. Rotations are re-checked on read and rejected when
//! off orthonormal by more than the ingest tolerance.

use std::fs;
use std::io;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::geometry::{Extrinsics, GeometryError};
use crate::io::metadata::atomic_write;

pub const TOKENS_PER_LINE: usize = 13;

#[derive(Debug, Error)]
pub enum PoseError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: frame index {got}, expected {expected}")]
    FrameIndexMismatch {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: {source}")]
    Geometry {
        line: usize,
        source: GeometryError,
    },
}

/// Parse a pose file's text into a frame-indexed pose list.
pub fn parse_extrinsics_text(text: &str) -> Result<Vec<Extrinsics>, PoseError> {
    let mut poses = Vec::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = line_no + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.len() != TOKENS_PER_LINE {
            return Err(PoseError::Malformed {
                line,
                reason: format!("expected {TOKENS_PER_LINE} tokens, got {}", tokens.len()),
            });
        }
        let index: usize = tokens[0].parse().map_err(|_| PoseError::Malformed {
            line,
            reason: format!("frame index {:?} is not a nonnegative integer", tokens[0]),
        })?;
        if index != poses.len() {
            return Err(PoseError::FrameIndexMismatch {
                line,
                expected: poses.len(),
                got: index,
            });
        }
        let mut values = [0.0f64; 12];
        for (i, token) in tokens[1..].iter().enumerate() {
            let v: f64 = token.parse().map_err(|_| PoseError::Malformed {
                line,
                reason: format!("token {:?} is not a number", token),
            })?;
            if !v.is_finite() {
                return Err(PoseError::Malformed {
                    line,
                    reason: format!("token {:?} is not finite", token),
                });
            }
            values[i] = v;
        }
        let rotation = Matrix3::new(
            values[0], values[1], values[2],
            values[4], values[5], values[6],
            values[8], values[9], values[10],
        );
        let translation = Vector3::new(values[3], values[7], values[11]);
        let pose = Extrinsics::new(rotation, translation)
            .map_err(|source| PoseError::Geometry { line, source })?;
        poses.push(pose);
    }
    Ok(poses)
}

/// Render poses into the line format `parse_extrinsics_text` reads.
pub fn format_extrinsics(poses: &[Extrinsics]) -> String {
    let mut out = String::new();
    for (index, pose) in poses.iter().enumerate() {
        let r = pose.rotation();
        let t = pose.translation();
        out.push_str(&format!(
            "{index} {} {} {} {} {} {} {} {} {} {} {} {}\n",
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t[0],
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t[1],
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t[2],
        ));
    }
    out
}

pub fn read_extrinsics(path: impl AsRef<Path>) -> Result<Vec<Extrinsics>, PoseError> {
    parse_extrinsics_text(&fs::read_to_string(path)?)
}

pub fn write_extrinsics(poses: &[Extrinsics], path: impl AsRef<Path>) -> Result<(), PoseError> {
    atomic_write(path, format_extrinsics(poses).as_bytes())?;
    Ok(())
}

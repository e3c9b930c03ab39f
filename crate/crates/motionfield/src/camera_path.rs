//! Parametric camera paths: a single motion spec (translation fractions,
//! rotation degrees, pacing) expands into a per-frame extrinsics sequence,
//! and local segments chain into longer paths.
//!
//! Axis convention follows the camera frame: x right, y down, z forward.
//! Translations are fractions of the scene's maximum valid depth, so the
//! same spec produces comparable apparent motion across scenes.

use crate::geometry::{Extrinsics, GeometryError};
use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CameraPathError {
    #[error("{axis}_translation = {value} outside the open interval (-1, 1)")]
    TranslationOutOfRange { axis: char, value: f64 },
    #[error("{axis}_rotation = {value} outside [0, 360)")]
    RotationOutOfRange { axis: char, value: i64 },
    #[error("unknown motion type {0:?}; expected \"uniform\", \"decrement\", or \"increment\"")]
    UnknownMotionType(String),
    #[error("camera path needs at least 1 frame, got {0}")]
    TooFewFrames(usize),
    #[error("depth scale {0} must be finite and positive")]
    InvalidDepthScale(f64),
    #[error("no segments to concatenate")]
    NoSegments,
    #[error("segment {0} is empty")]
    EmptySegment(usize),
    #[error("segment {0} does not start at the identity pose")]
    SegmentNotAnchored(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// How motion magnitude is distributed over the frames of a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionType {
    /// Constant speed.
    Uniform,
    /// Fast start, slowing toward the end.
    Decrement,
    /// Slow start, accelerating toward the end.
    Increment,
}

impl MotionType {
    /// Remaps normalized path time `s in [0, 1]` to motion progress.
    /// All profiles fix the endpoints: `pace(0) = 0`, `pace(1) = 1`.
    pub fn pace(self, s: f64) -> f64 {
        match self {
            MotionType::Uniform => s,
            MotionType::Increment => s * s,
            MotionType::Decrement => 1.0 - (1.0 - s) * (1.0 - s),
        }
    }
}

impl FromStr for MotionType {
    type Err = CameraPathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "uniform" => Ok(MotionType::Uniform),
            "decrement" => Ok(MotionType::Decrement),
            "increment" => Ok(MotionType::Increment),
            other => Err(CameraPathError::UnknownMotionType(other.to_string())),
        }
    }
}

impl fmt::Display for MotionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MotionType::Uniform => "uniform",
            MotionType::Decrement => "decrement",
            MotionType::Increment => "increment",
        })
    }
}

/// One camera move: per-axis translation fractions in (-1, 1), per-axis
/// rotation in whole degrees `[0, 360)`, and a pacing profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraMotionSpec {
    pub x_translation: f64,
    pub y_translation: f64,
    pub z_translation: f64,
    pub x_rotation: i64,
    pub y_rotation: i64,
    pub z_rotation: i64,
    pub motion_type: MotionType,
}

impl CameraMotionSpec {
    pub fn stationary() -> Self {
        Self {
            x_translation: 0.0,
            y_translation: 0.0,
            z_translation: 0.0,
            x_rotation: 0,
            y_rotation: 0,
            z_rotation: 0,
            motion_type: MotionType::Uniform,
        }
    }

    pub fn validate(&self) -> Result<(), CameraPathError> {
        for (axis, value) in [
            ('x', self.x_translation),
            ('y', self.y_translation),
            ('z', self.z_translation),
        ] {
            if !(value > -1.0 && value < 1.0) {
                return Err(CameraPathError::TranslationOutOfRange { axis, value });
            }
        }
        for (axis, value) in [
            ('x', self.x_rotation),
            ('y', self.y_rotation),
            ('z', self.z_rotation),
        ] {
            if !(0..360).contains(&value) {
                return Err(CameraPathError::RotationOutOfRange { axis, value });
            }
        }
        Ok(())
    }
}

/// Normalized pacing samples for a path of `num_frames` frames: frame `k`
/// gets `pace(k / (num_frames - 1))`, so the sequence runs 0 to 1 inclusive.
pub fn pace_samples(motion: MotionType, num_frames: usize) -> Result<Vec<f64>, CameraPathError> {
    if num_frames < 2 {
        return Err(CameraPathError::TooFewFrames(num_frames));
    }
    let last = (num_frames - 1) as f64;
    Ok((0..num_frames)
        .map(|k| motion.pace(k as f64 / last))
        .collect())
}

/// Expands a motion spec into world-to-camera extrinsics, one per frame,
/// starting at the identity. `d_max` — the scene's maximum valid depth —
/// converts translation fractions to metric distance.
///
/// At pacing progress `p` the camera center sits at
/// `p * d_max * (tx, ty, tz)` and the camera is oriented by the scaled
/// Euler angles `p * (rx, ry, rz)` applied z-about-y-about-x. A single-frame
/// path is just the identity pose.
pub fn generate_extrinsics(
    spec: &CameraMotionSpec,
    d_max: f64,
    num_frames: usize,
) -> Result<Vec<Extrinsics>, CameraPathError> {
    spec.validate()?;
    if !(d_max.is_finite() && d_max > 0.0) {
        return Err(CameraPathError::InvalidDepthScale(d_max));
    }
    if num_frames == 0 {
        return Err(CameraPathError::TooFewFrames(0));
    }
    if num_frames == 1 {
        return Ok(vec![Extrinsics::identity()]);
    }
    let paces = pace_samples(spec.motion_type, num_frames)?;
    let full_center = Vector3::new(
        spec.x_translation * d_max,
        spec.y_translation * d_max,
        spec.z_translation * d_max,
    );
    let full_angles = Vector3::new(
        (spec.x_rotation as f64).to_radians(),
        (spec.y_rotation as f64).to_radians(),
        (spec.z_rotation as f64).to_radians(),
    );
    paces
        .into_iter()
        .map(|p| {
            let center = full_center * p;
            let angles = full_angles * p;
            // Camera orientation relative to the world; world-to-camera is its
            // transpose, with t chosen so the camera center lands on `center`.
            let cam = Rotation3::from_euler_angles(angles.x, angles.y, angles.z);
            let r = cam.matrix().transpose();
            let t = -(r * center);
            Ok(Extrinsics::new(r, t)?)
        })
        .collect()
}

/// Expands a sequence of motion specs into one continuous path: each
/// segment's motion happens relative to the previous segment's final pose,
/// and segments share their boundary frame, so the result has
/// `sum(K_i) - (n - 1)` frames.
pub fn concat_segments(
    segments: &[(CameraMotionSpec, usize)],
    d_max: f64,
) -> Result<Vec<Extrinsics>, CameraPathError> {
    if segments.is_empty() {
        return Err(CameraPathError::NoSegments);
    }
    let expanded = segments
        .iter()
        .map(|(spec, frames)| generate_extrinsics(spec, d_max, *frames))
        .collect::<Result<Vec<_>, _>>()?;
    concat_pose_segments(&expanded)
}

/// Chains locally-defined pose segments into one global path. Every segment
/// must start at the identity; each later segment is re-based onto the final
/// pose of the path so far, and its first frame (which coincides with that
/// pose) is dropped.
pub fn concat_pose_segments(
    segments: &[Vec<Extrinsics>],
) -> Result<Vec<Extrinsics>, CameraPathError> {
    if segments.is_empty() {
        return Err(CameraPathError::NoSegments);
    }
    let mut path: Vec<Extrinsics> = Vec::new();
    for (i, segment) in segments.iter().enumerate() {
        let Some(first) = segment.first() else {
            return Err(CameraPathError::EmptySegment(i));
        };
        if !first.is_identity(1e-9) {
            return Err(CameraPathError::SegmentNotAnchored(i));
        }
        if path.is_empty() {
            path.extend(segment.iter().cloned());
        } else {
            let base = path.last().expect("path is non-empty").clone();
            path.extend(segment.iter().skip(1).map(|local| local.compose(&base)));
        }
    }
    Ok(path)
}

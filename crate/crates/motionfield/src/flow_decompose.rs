//! Recovers object-only flow from estimated flow by undoing the camera's
//! contribution, plus the sparse sampling and flow-selection rules used when
//! preparing training pairs.
//!
//! The inverse runs per pixel: follow the estimated flow to its target,
//! lift the target through the target frame's depth, map it back into the
//! first frame's camera, reproject, and subtract the source pixel. What
//! remains is the motion the camera cannot explain.

use crate::densify::{Anchor, SparseMotion};
use crate::geometry::{
    project_point, unproject_pixel, DepthMap, Extrinsics, FlowField, GeometryError, Intrinsics,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("{what} is {got_width}x{got_height}, expected {width}x{height}")]
    DimensionMismatch {
        what: &'static str,
        width: usize,
        height: usize,
        got_width: usize,
        got_height: usize,
    },
    #[error("replacement threshold must be positive and finite, got {0}")]
    InvalidTau(f64),
    #[error("max_points must be at least 1")]
    ZeroMaxPoints,
    #[error("nms radius must be non-negative and finite, got {0}")]
    InvalidNmsRadius(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Inputs for one frame's camera-flow removal: estimated flow frame 0 → k,
/// both frames' depth maps, and the frame-k camera pose (world = frame-0
/// camera). `depth0` rides along for completeness; the inverse itself lifts
/// through `depth_k` at the flow target.
#[derive(Debug, Clone)]
pub struct DecomposeInput {
    pub real_flow: FlowField,
    pub depth0: DepthMap,
    pub depth_k: DepthMap,
    pub e_hat: Extrinsics,
    pub intrinsics: Intrinsics,
}

/// When to prefer estimated flow over composed flow for a training pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplacementPolicy {
    /// Mean end-point-error threshold in pixels; strictly above it the
    /// estimated flow wins.
    pub tau: f64,
}

impl Default for ReplacementPolicy {
    fn default() -> Self {
        Self { tau: 5.0 }
    }
}

impl ReplacementPolicy {
    pub fn validate(&self) -> Result<(), DecomposeError> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(DecomposeError::InvalidTau(self.tau));
        }
        Ok(())
    }
}

/// Which flow a replacement decision selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplacementChoice {
    Unified,
    Real,
}

/// Bilinear depth lookup at a fractional pixel. Returns `None` outside the
/// sample lattice or when any contributing sample is invalid.
pub fn sample_depth_bilinear(depth: &DepthMap, u: f64, v: f64) -> Option<f64> {
    let (w, h) = (depth.width(), depth.height());
    if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
        return None;
    }
    let u0 = u.floor() as usize;
    let v0 = v.floor() as usize;
    let fu = u - u0 as f64;
    let fv = v - v0 as f64;
    let u1 = if fu > 0.0 { u0 + 1 } else { u0 };
    let v1 = if fv > 0.0 { v0 + 1 } else { v0 };
    for (row, col) in [(v0, u0), (v0, u1), (v1, u0), (v1, u1)] {
        if !depth.is_valid(row, col) {
            return None;
        }
    }
    let top = depth.get(v0, u0) * (1.0 - fu) + depth.get(v0, u1) * fu;
    let bottom = depth.get(v1, u0) * (1.0 - fu) + depth.get(v1, u1) * fu;
    Some(top * (1.0 - fv) + bottom * fv)
}

/// Strips the camera's share out of estimated flow, leaving object-only flow.
/// Pixels whose flow target leaves the depth lattice, hits invalid depth, or
/// maps behind either camera come back invalid.
pub fn remove_camera_flow(input: &DecomposeInput) -> Result<FlowField, DecomposeError> {
    let (w, h) = (input.real_flow.width(), input.real_flow.height());
    check_dims("depth0", w, h, input.depth0.width(), input.depth0.height())?;
    check_dims("depth_k", w, h, input.depth_k.width(), input.depth_k.height())?;
    check_dims("intrinsics", w, h, input.intrinsics.width, input.intrinsics.height)?;

    let back = input.e_hat.inverse();
    let mut out = FlowField::zeros(h, w);
    for row in 0..h {
        for col in 0..w {
            if !input.real_flow.is_valid(row, col) {
                out.invalidate(row, col);
                continue;
            }
            let (du, dv) = input.real_flow.get(row, col);
            let target_u = col as f64 + du;
            let target_v = row as f64 + dv;
            let Some(d) = sample_depth_bilinear(&input.depth_k, target_u, target_v) else {
                out.invalidate(row, col);
                continue;
            };
            let in_frame_k = unproject_pixel(target_u, target_v, d, &input.intrinsics);
            let in_frame_0 = back.apply(&in_frame_k);
            match project_point(&in_frame_0, &input.intrinsics) {
                Some((u, v)) => out.set(row, col, u - col as f64, v - row as f64),
                None => out.invalidate(row, col),
            }
        }
    }
    Ok(out)
}

/// Picks the strongest flow anchors, keeping them at least `nms_radius`
/// apart. Candidates are valid, nonzero-magnitude pixels, visited from the
/// largest magnitude down with row-major order breaking ties, so the result
/// is fully deterministic.
pub fn sparse_sample(
    f_obj: &FlowField,
    max_points: usize,
    nms_radius: f64,
) -> Result<SparseMotion, DecomposeError> {
    if max_points < 1 {
        return Err(DecomposeError::ZeroMaxPoints);
    }
    if !(nms_radius.is_finite() && nms_radius >= 0.0) {
        return Err(DecomposeError::InvalidNmsRadius(nms_radius));
    }
    let (w, h) = (f_obj.width(), f_obj.height());
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for row in 0..h {
        for col in 0..w {
            if !f_obj.is_valid(row, col) {
                continue;
            }
            let (du, dv) = f_obj.get(row, col);
            let mag2 = du * du + dv * dv;
            if mag2 > 0.0 {
                candidates.push((mag2, row, col));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("magnitudes are finite")
            .then_with(|| (a.1, a.2).cmp(&(b.1, b.2)))
    });

    let r2 = nms_radius * nms_radius;
    let mut anchors: Vec<Anchor> = Vec::new();
    for (_, row, col) in candidates {
        if anchors.len() >= max_points {
            break;
        }
        let p = (col as f64, row as f64);
        let suppressed = anchors.iter().any(|a| {
            let d2 = (a.position.0 - p.0).powi(2) + (a.position.1 - p.1).powi(2);
            d2 <= r2
        });
        if !suppressed {
            let (du, dv) = f_obj.get(row, col);
            anchors.push(Anchor {
                position: p,
                displacement: (du, dv),
            });
        }
    }
    Ok(SparseMotion::new(anchors))
}

/// Applies the selection rule: keep the composed (`unified`) flow unless its
/// mean end-point error against the estimated (`real`) flow strictly exceeds
/// `tau`, in which case the estimated flow wins. With no jointly valid pixels
/// to compare, the estimated flow wins conservatively.
pub fn threshold_replace(
    unified: &FlowField,
    real: &FlowField,
    policy: &ReplacementPolicy,
) -> Result<FlowField, DecomposeError> {
    let (choice, _) = replacement_decision(unified, real, policy)?;
    Ok(match choice {
        ReplacementChoice::Unified => unified.clone(),
        ReplacementChoice::Real => real.clone(),
    })
}

/// The decision behind [`threshold_replace`], with the measured mean
/// end-point error (`None` when no pixel is valid in both fields).
pub fn replacement_decision(
    unified: &FlowField,
    real: &FlowField,
    policy: &ReplacementPolicy,
) -> Result<(ReplacementChoice, Option<f64>), DecomposeError> {
    policy.validate()?;
    check_dims(
        "real flow",
        unified.width(),
        unified.height(),
        real.width(),
        real.height(),
    )?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for row in 0..unified.height() {
        for col in 0..unified.width() {
            if unified.is_valid(row, col) && real.is_valid(row, col) {
                let a = unified.get(row, col);
                let b = real.get(row, col);
                sum += ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Ok((ReplacementChoice::Real, None));
    }
    let mean = sum / count as f64;
    let choice = if mean > policy.tau {
        ReplacementChoice::Real
    } else {
        ReplacementChoice::Unified
    };
    Ok((choice, Some(mean)))
}

fn check_dims(
    what: &'static str,
    width: usize,
    height: usize,
    got_width: usize,
    got_height: usize,
) -> Result<(), DecomposeError> {
    if (width, height) != (got_width, got_height) {
        return Err(DecomposeError::DimensionMismatch {
            what,
            width,
            height,
            got_width,
            got_height,
        });
    }
    Ok(())
}

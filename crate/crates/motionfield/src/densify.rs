//! Spreads sparse per-pixel displacements into a dense flow field with a
//! normalized Gaussian kernel.
//!
//! Each anchor contributes its displacement weighted by
//! `exp(-‖p - x‖² / 2σ²)`, truncated to zero beyond `5σ`; the field is the
//! weight-normalized sum, so it reproduces each anchor's displacement exactly
//! at the anchor pixel and decays to zero outside the anchors' reach.

use crate::geometry::FlowField;
use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DensifyError {
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("anchor {index} at ({u}, {v}) is outside the {width}x{height} image")]
    AnchorOutOfBounds {
        index: usize,
        u: f64,
        v: f64,
        width: usize,
        height: usize,
    },
    #[error("anchor {index} has a non-finite position or displacement")]
    NonFiniteAnchor { index: usize },
    #[error("mask is {got_width}x{got_height} but the image is {width}x{height}")]
    MaskDimensionMismatch {
        width: usize,
        height: usize,
        got_width: usize,
        got_height: usize,
    },
}

/// A pixel position with the displacement it should carry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub position: (f64, f64),
    pub displacement: (f64, f64),
}

/// Sparse displacements plus an optional region restriction. Pixels outside
/// the mask always receive zero flow.
#[derive(Debug, Clone, Default)]
pub struct SparseMotion {
    pub anchors: Vec<Anchor>,
    pub mask: Option<Array2<bool>>,
}

impl SparseMotion {
    pub fn new(anchors: Vec<Anchor>) -> Self {
        Self {
            anchors,
            mask: None,
        }
    }

    pub fn with_mask(anchors: Vec<Anchor>, mask: Array2<bool>) -> Self {
        Self {
            anchors,
            mask: Some(mask),
        }
    }
}

/// Support radius of the truncated kernel, in sigmas.
const SUPPORT_SIGMAS: f64 = 5.0;

/// Evaluates the dense field on a `width × height` pixel lattice.
///
/// Pixels beyond `5σ` of every anchor — and pixels outside the mask, when one
/// is present — get zero flow. A pixel that coincides with an anchor position
/// takes that anchor's displacement directly (the first such anchor wins);
/// the mask still overrides coinciding anchors that fall outside it.
pub fn densify(
    sparse: &SparseMotion,
    width: usize,
    height: usize,
    sigma: f64,
) -> Result<FlowField, DensifyError> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(DensifyError::InvalidSigma(sigma));
    }
    if let Some(mask) = &sparse.mask {
        let (mh, mw) = mask.dim();
        if (mw, mh) != (width, height) {
            return Err(DensifyError::MaskDimensionMismatch {
                width,
                height,
                got_width: mw,
                got_height: mh,
            });
        }
    }
    for (index, anchor) in sparse.anchors.iter().enumerate() {
        let (u, v) = anchor.position;
        let (du, dv) = anchor.displacement;
        if !(u.is_finite() && v.is_finite() && du.is_finite() && dv.is_finite()) {
            return Err(DensifyError::NonFiniteAnchor { index });
        }
        if !(0.0 <= u && u < width as f64 && 0.0 <= v && v < height as f64) {
            return Err(DensifyError::AnchorOutOfBounds {
                index,
                u,
                v,
                width,
                height,
            });
        }
    }

    let mut weight = Array2::<f64>::zeros((height, width));
    let mut acc_du = Array2::<f64>::zeros((height, width));
    let mut acc_dv = Array2::<f64>::zeros((height, width));
    let mut exact: Vec<Option<(f64, f64)>> = vec![None; height * width];

    let radius = SUPPORT_SIGMAS * sigma;
    let r2 = radius * radius;
    let inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);

    for anchor in &sparse.anchors {
        let (u0, v0) = anchor.position;
        let col_lo = ((u0 - radius).ceil().max(0.0)) as usize;
        let col_hi = ((u0 + radius).floor().min((width - 1) as f64)) as usize;
        let row_lo = ((v0 - radius).ceil().max(0.0)) as usize;
        let row_hi = ((v0 + radius).floor().min((height - 1) as f64)) as usize;
        for row in row_lo..=row_hi {
            let dy = row as f64 - v0;
            for col in col_lo..=col_hi {
                let dx = col as f64 - u0;
                let d2 = dx * dx + dy * dy;
                if d2 > r2 {
                    continue;
                }
                if d2 == 0.0 {
                    let slot = &mut exact[row * width + col];
                    if slot.is_none() {
                        *slot = Some(anchor.displacement);
                    }
                }
                let w = (-d2 * inv_two_sigma2).exp();
                weight[(row, col)] += w;
                acc_du[(row, col)] += w * anchor.displacement.0;
                acc_dv[(row, col)] += w * anchor.displacement.1;
            }
        }
    }

    let mut flow = FlowField::zeros(height, width);
    for row in 0..height {
        for col in 0..width {
            if let Some(mask) = &sparse.mask {
                if !mask[(row, col)] {
                    continue;
                }
            }
            if let Some((du, dv)) = exact[row * width + col] {
                flow.set(row, col, du, dv);
                continue;
            }
            let w = weight[(row, col)];
            if w > 0.0 {
                flow.set(row, col, acc_du[(row, col)] / w, acc_dv[(row, col)] / w);
            }
        }
    }
    Ok(flow)
}

/// Expand an interpolated pixel path into per-frame dense object flows: one
/// anchor at the path's start position carrying each frame's cumulative
/// displacement, optionally restricted to an object mask.
pub fn path_to_flows(
    path: &crate::trajectory::PixelPath,
    width: usize,
    height: usize,
    sigma: f64,
    mask: Option<&Array2<bool>>,
) -> Result<Vec<FlowField>, DensifyError> {
    let Some(&start) = path.positions.first() else {
        return Ok(Vec::new());
    };
    path.displacements()
        .into_iter()
        .map(|displacement| {
            let anchors = vec![Anchor {
                position: start,
                displacement,
            }];
            let sparse = match mask {
                Some(m) => SparseMotion::with_mask(anchors, m.clone()),
                None => SparseMotion::new(anchors),
            };
            densify(&sparse, width, height, sigma)
        })
        .collect()
}

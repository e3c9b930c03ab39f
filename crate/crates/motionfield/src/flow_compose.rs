//! Composes object motion and camera motion into per-frame flow maps.
//!
//! Every source pixel is lifted to 3D through the depth map, shifted by the
//! object's 3D offset, moved through that frame's camera transform, and
//! reprojected; the flow is the reprojected position minus the source pixel.
//! All flow maps describe frame 0 → frame k, not consecutive frames.

use crate::geometry::{
    project_point, unproject, unproject_pixel, DepthMap, Extrinsics, FlowField, GeometryError,
    Intrinsics, PointGrid,
};
use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("camera path has no frames")]
    NoFrames,
    #[error("{object_flows} object flow maps but {extrinsics} camera poses")]
    FrameCountMismatch {
        object_flows: usize,
        extrinsics: usize,
    },
    #[error("frame {frame}: object flow is {got_width}x{got_height}, scene is {width}x{height}")]
    FlowDimensionMismatch {
        frame: usize,
        width: usize,
        height: usize,
        got_width: usize,
        got_height: usize,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Everything needed to compose one clip: the first frame's depth and
/// intrinsics, plus per-frame object flow and camera pose (frame 0 → k).
#[derive(Debug, Clone)]
pub struct ComposeInput {
    pub depth: DepthMap,
    pub intrinsics: Intrinsics,
    pub object_flows: Vec<FlowField>,
    pub extrinsics: Vec<Extrinsics>,
}

/// Per-frame composed flow. `oob[k]` marks pixels whose target lands outside
/// the image bounds (their flow values are still real); `camera_depth[k]`
/// holds each source pixel's depth in frame k's camera (NaN where invalid),
/// which downstream warping uses for occlusion ordering.
#[derive(Debug, Clone)]
pub struct UnifiedFlow {
    pub flows: Vec<FlowField>,
    pub oob: Vec<Array2<bool>>,
    pub camera_depth: Vec<Array2<f64>>,
}

/// 3D offsets realizing a 2D object flow: each moved pixel keeps its source
/// depth, so the offset is the difference of two constant-depth lifts and its
/// Z component is identically zero. Pixels with invalid depth get invalid
/// offsets; invalid flow samples are treated as zero motion.
pub fn object_offsets(
    depth: &DepthMap,
    intrinsics: &Intrinsics,
    f_obj: &FlowField,
) -> Result<PointGrid, ComposeError> {
    check_flow_dims(depth, f_obj, 0)?;
    let mut offsets = PointGrid::invalid(depth.height(), depth.width());
    for row in 0..depth.height() {
        for col in 0..depth.width() {
            if !depth.is_valid(row, col) {
                continue;
            }
            let d = depth.get(row, col);
            let (du, dv) = if f_obj.is_valid(row, col) {
                f_obj.get(row, col)
            } else {
                (0.0, 0.0)
            };
            let (u, v) = (col as f64, row as f64);
            let source = unproject_pixel(u, v, d, intrinsics);
            let moved = unproject_pixel(u + du, v + dv, d, intrinsics);
            offsets.set(row, col, moved - source);
        }
    }
    Ok(offsets)
}

/// Runs the full composition for every frame. Pixels whose transformed depth
/// falls at or behind the camera plane become invalid rather than erroring.
pub fn compose_unified_flow(input: &ComposeInput) -> Result<UnifiedFlow, ComposeError> {
    if input.object_flows.len() != input.extrinsics.len() {
        return Err(ComposeError::FrameCountMismatch {
            object_flows: input.object_flows.len(),
            extrinsics: input.extrinsics.len(),
        });
    }
    if input.extrinsics.is_empty() {
        return Err(ComposeError::NoFrames);
    }
    let (width, height) = (input.depth.width(), input.depth.height());
    let source_points = unproject(&input.depth, &input.intrinsics)?;

    let mut flows = Vec::with_capacity(input.extrinsics.len());
    let mut oob_maps = Vec::with_capacity(input.extrinsics.len());
    let mut depth_maps = Vec::with_capacity(input.extrinsics.len());

    for (frame, (f_obj, pose)) in input
        .object_flows
        .iter()
        .zip(&input.extrinsics)
        .enumerate()
    {
        check_flow_dims(&input.depth, f_obj, frame)?;
        let offsets = object_offsets(&input.depth, &input.intrinsics, f_obj)?;

        let mut flow = FlowField::zeros(height, width);
        let mut oob = Array2::from_elem((height, width), false);
        let mut cam_depth = Array2::from_elem((height, width), f64::NAN);

        for row in 0..height {
            for col in 0..width {
                if !source_points.is_valid(row, col) {
                    flow.invalidate(row, col);
                    continue;
                }
                let moved = source_points.get(row, col) + offsets.get(row, col);
                let in_camera = pose.apply(&moved);
                match project_point(&in_camera, &input.intrinsics) {
                    Some((u, v)) => {
                        cam_depth[(row, col)] = in_camera.z;
                        flow.set(row, col, u - col as f64, v - row as f64);
                        let inside = u >= 0.0
                            && u < width as f64
                            && v >= 0.0
                            && v < height as f64;
                        oob[(row, col)] = !inside;
                    }
                    None => flow.invalidate(row, col),
                }
            }
        }
        flows.push(flow);
        oob_maps.push(oob);
        depth_maps.push(cam_depth);
    }
    Ok(UnifiedFlow {
        flows,
        oob: oob_maps,
        camera_depth: depth_maps,
    })
}

fn check_flow_dims(depth: &DepthMap, flow: &FlowField, frame: usize) -> Result<(), ComposeError> {
    if flow.width() != depth.width() || flow.height() != depth.height() {
        return Err(ComposeError::FlowDimensionMismatch {
            frame,
            width: depth.width(),
            height: depth.height(),
            got_width: flow.width(),
            got_height: flow.height(),
        });
    }
    Ok(())
}

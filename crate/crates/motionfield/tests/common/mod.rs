//! Shared fixtures for the acceptance suite: an analytically solvable
//! two-plane scene and an independently coded grid-center oracle.

use motionfield::geometry::{DepthMap, Extrinsics, FlowField, Intrinsics};
use nalgebra::Vector3;
use ndarray::Array2;

/// A background plane plus a floating foreground rectangle, both
/// fronto-parallel in the world frame, with every frame's depth map and
/// visible surface solvable in closed form. The foreground translates
/// rigidly at constant depth; the camera moves per supplied extrinsics.
pub struct PlanarScene {
    pub intrinsics: Intrinsics,
    pub d_bg: f64,
    pub d_fg: f64,
    /// Foreground bounds in world units on the `Z = d_fg` plane.
    pub rect: (f64, f64, f64, f64),
    /// Per-frame object flow slope in pixels: frame k displaces foreground
    /// pixels by `(du_slope * k, dv_slope * k)`.
    pub du_slope: f64,
    pub dv_slope: f64,
}

pub const BACKGROUND: u8 = 0;
pub const FOREGROUND: u8 = 1;

impl PlanarScene {
    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    /// Cumulative foreground pixel displacement at frame `k`.
    pub fn object_displacement(&self, k: usize) -> (f64, f64) {
        (self.du_slope * k as f64, self.dv_slope * k as f64)
    }

    /// World-space offset realizing that displacement at constant depth.
    pub fn world_offset(&self, k: usize) -> Vector3<f64> {
        let (du, dv) = self.object_displacement(k);
        Vector3::new(
            du * self.d_fg / self.intrinsics.fx,
            dv * self.d_fg / self.intrinsics.fy,
            0.0,
        )
    }

    /// Which surface pixel `(col, row)` of frame `k` sees, and at what
    /// camera-space depth. The ray from the camera center hits the
    /// foreground iff its intersection with the `Z = d_fg` plane, shifted
    /// back by the frame's object offset, lies inside the rectangle.
    pub fn surface_at(&self, pose: &Extrinsics, k: usize, col: f64, row: f64) -> (u8, f64) {
        let k_in = &self.intrinsics;
        let ray = Vector3::new((col - k_in.cx) / k_in.fx, (row - k_in.cy) / k_in.fy, 1.0);
        let dir = pose.rotation().transpose() * ray;
        let center = pose.camera_center();
        assert!(dir.z > 0.0, "ray must point into the scene");
        let s_fg = (self.d_fg - center.z) / dir.z;
        let s_bg = (self.d_bg - center.z) / dir.z;
        let offset = self.world_offset(k);
        let hit = center + s_fg * dir;
        let (x0, x1, y0, y1) = self.rect;
        let in_rect = {
            let x = hit.x - offset.x;
            let y = hit.y - offset.y;
            x0 <= x && x <= x1 && y0 <= y && y <= y1
        };
        if in_rect && s_fg > 0.0 {
            (FOREGROUND, s_fg)
        } else {
            (BACKGROUND, s_bg)
        }
    }

    /// Analytic depth map for frame `k` under `pose`.
    pub fn depth_map(&self, pose: &Extrinsics, k: usize) -> DepthMap {
        let mut values = Array2::zeros((self.height(), self.width()));
        for row in 0..self.height() {
            for col in 0..self.width() {
                let (_, depth) = self.surface_at(pose, k, col as f64, row as f64);
                values[[row, col]] = depth;
            }
        }
        DepthMap::new(values)
    }

    /// Surface label per pixel for frame `k` under `pose`.
    pub fn surface_map(&self, pose: &Extrinsics, k: usize) -> Array2<u8> {
        let mut ids = Array2::zeros((self.height(), self.width()));
        for row in 0..self.height() {
            for col in 0..self.width() {
                let (id, _) = self.surface_at(pose, k, col as f64, row as f64);
                ids[[row, col]] = id;
            }
        }
        ids
    }

    /// Ground-truth object flow for frame `k`: the constant displacement on
    /// frame-0 foreground pixels, zero elsewhere.
    pub fn object_flow(&self, k: usize) -> FlowField {
        let identity = Extrinsics::identity();
        let (du, dv) = self.object_displacement(k);
        let mut flow = FlowField::zeros(self.height(), self.width());
        for row in 0..self.height() {
            for col in 0..self.width() {
                let (id, _) = self.surface_at(&identity, 0, col as f64, row as f64);
                if id == FOREGROUND {
                    flow.set(row, col, du, dv);
                }
            }
        }
        flow
    }
}

/// Subcell-center oracle, coded independently of the production grid math:
/// the cell is located by scanning row bands, and the subcell offset comes
/// from an explicit per-label multiplier table over the cell's thirds.
pub fn brute_force_center(
    cols: usize,
    rows: usize,
    width: usize,
    height: usize,
    area: usize,
    label: &str,
) -> (f64, f64) {
    let mut row = 0;
    while (row + 1) * cols <= area {
        row += 1;
    }
    let col = area - row * cols;
    assert!(row < rows, "area {area} outside a {cols}x{rows} grid");
    let cell_w = width as f64 / cols as f64;
    let cell_h = height as f64 / rows as f64;
    let (mx, my) = match label {
        "top-left" => (1.0, 1.0),
        "top" => (3.0, 1.0),
        "top-right" => (5.0, 1.0),
        "left" => (1.0, 3.0),
        "center" => (3.0, 3.0),
        "right" => (5.0, 3.0),
        "bottom-left" => (1.0, 5.0),
        "bottom" => (3.0, 5.0),
        "bottom-right" => (5.0, 5.0),
        other => panic!("unknown subarea label {other:?}"),
    };
    (
        col as f64 * cell_w + cell_w * mx / 6.0,
        row as f64 * cell_h + cell_h * my / 6.0,
    )
}

//! Pinhole camera model, rigid transforms, and the per-pixel lift/project kernels.
//!
//! Conventions used throughout the crate: grids are row-major with the origin
//! at the top-left, pixel centers sit at integer coordinates, and extrinsics
//! are stored world-to-camera (`x_cam = R * x_world + t`) with the first
//! frame's camera frame acting as the world frame.

use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;
use thiserror::Error;

/// Depth cutoff below which a camera-space point counts as behind the camera.
pub const EPSILON_Z: f64 = 1e-6;

/// Maximum allowed deviation of `R^T R` from identity when ingesting a rotation.
pub const ROTATION_INGEST_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal (max |R^T R - I| entry = {max_err:.3e})")]
    NonOrthonormalRotation { max_err: f64 },
    #[error("rotation is improper (det = {det:.6})")]
    ImproperRotation { det: f64 },
    #[error("dimension mismatch: expected {expected_width}x{expected_height}, got {width}x{height}")]
    DimensionMismatch {
        expected_width: usize,
        expected_height: usize,
        width: usize,
        height: usize,
    },
}

/// Pinhole projection parameters in pixel units.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let focals_ok = fx > 0.0 && fy > 0.0;
        if !focals_ok {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(0.0 <= cx && cx < width as f64) || !(0.0 <= cy && cy < height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Neutral wide pinhole used when no intrinsics are supplied:
    /// `fx = fy = max(width, height)`, principal point at the image center.
    pub fn default_for(width: usize, height: usize) -> Self {
        let f = width.max(height) as f64;
        Self {
            fx: f,
            fy: f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        Self::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height).map(|_| ())
    }
}

/// World-to-camera rigid transform: `x_cam = R * x_world + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrinsics {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Extrinsics {
    /// Builds an extrinsic transform, rejecting rotations whose orthonormality
    /// error exceeds [`ROTATION_INGEST_TOL`] and reflections. The accepted
    /// rotation is snapped to the nearest orthonormal matrix so stored poses
    /// satisfy `|R^T R - I| < 1e-9` per entry.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let max_err = orthonormality_error(&rotation);
        let within_tol = max_err <= ROTATION_INGEST_TOL;
        if !within_tol {
            return Err(GeometryError::NonOrthonormalRotation { max_err });
        }
        let det = rotation.determinant();
        if det <= 0.0 {
            return Err(GeometryError::ImproperRotation { det });
        }
        let rotation = nearest_rotation(&rotation);
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Applies the transform to a single world point.
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Inverse transform, formed as `(R^T, -R^T t)`.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Composition `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Camera center in world coordinates: `c = -R^T t`.
    pub fn camera_center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        let mut max = 0.0f64;
        for r in 0..3 {
            for c in 0..3 {
                let id = if r == c { 1.0 } else { 0.0 };
                max = max.max((self.rotation[(r, c)] - id).abs());
            }
            max = max.max(self.translation[r].abs());
        }
        max <= tol
    }
}

fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    let gram = r.transpose() * r;
    let mut max = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let id = if i == j { 1.0 } else { 0.0 };
            max = max.max((gram[(i, j)] - id).abs());
        }
    }
    max
}

/// Projects a near-rotation onto the rotation manifold via the polar factor
/// of its SVD. Input determinant must be positive.
fn nearest_rotation(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let u = svd.u.expect("svd of 3x3 always yields u");
    let v_t = svd.v_t.expect("svd of 3x3 always yields v_t");
    let mut rot = u * v_t;
    if rot.determinant() < 0.0 {
        // Flip the smallest singular direction to stay in SO(3).
        let mut u = u;
        u.column_mut(2).neg_mut();
        rot = u * v_t;
    }
    rot
}

/// Per-pixel metric depth. A sample is valid iff it is finite and positive;
/// non-finite or non-positive entries mark missing measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    values: Array2<f64>,
}

impl DepthMap {
    pub fn new(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn constant(height: usize, width: usize, depth: f64) -> Self {
        Self {
            values: Array2::from_elem((height, width), depth),
        }
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[(row, col)]
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        let d = self.values[(row, col)];
        d.is_finite() && d > 0.0
    }

    /// Maximum depth over valid samples, `None` if no sample is valid.
    pub fn max_depth(&self) -> Option<f64> {
        let mut max: Option<f64> = None;
        for &d in self.values.iter() {
            if d.is_finite() && d > 0.0 {
                max = Some(match max {
                    Some(m) => m.max(d),
                    None => d,
                });
            }
        }
        max
    }
}

/// Dense 2-channel pixel displacement with a per-pixel validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub du: Array2<f64>,
    pub dv: Array2<f64>,
    pub valid: Array2<bool>,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            du: Array2::zeros((height, width)),
            dv: Array2::zeros((height, width)),
            valid: Array2::from_elem((height, width), true),
        }
    }

    pub fn from_parts(
        du: Array2<f64>,
        dv: Array2<f64>,
        valid: Array2<bool>,
    ) -> Result<Self, GeometryError> {
        if du.dim() != dv.dim() || du.dim() != valid.dim() {
            let (h, w) = du.dim();
            let (vh, vw) = valid.dim();
            return Err(GeometryError::DimensionMismatch {
                expected_width: w,
                expected_height: h,
                width: vw,
                height: vh,
            });
        }
        Ok(Self { du, dv, valid })
    }

    pub fn width(&self) -> usize {
        self.du.ncols()
    }

    pub fn height(&self) -> usize {
        self.du.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> (f64, f64) {
        (self.du[(row, col)], self.dv[(row, col)])
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, du: f64, dv: f64) {
        self.du[(row, col)] = du;
        self.dv[(row, col)] = dv;
        self.valid[(row, col)] = true;
    }

    pub fn invalidate(&mut self, row: usize, col: usize) {
        self.du[(row, col)] = 0.0;
        self.dv[(row, col)] = 0.0;
        self.valid[(row, col)] = false;
    }
}

/// Grid of 3D points with a validity mask, indexed like the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGrid {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub z: Array2<f64>,
    pub valid: Array2<bool>,
}

impl PointGrid {
    pub fn invalid(height: usize, width: usize) -> Self {
        Self {
            x: Array2::zeros((height, width)),
            y: Array2::zeros((height, width)),
            z: Array2::zeros((height, width)),
            valid: Array2::from_elem((height, width), false),
        }
    }

    pub fn width(&self) -> usize {
        self.x.ncols()
    }

    pub fn height(&self) -> usize {
        self.x.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> Vector3<f64> {
        Vector3::new(
            self.x[(row, col)],
            self.y[(row, col)],
            self.z[(row, col)],
        )
    }

    pub fn set(&mut self, row: usize, col: usize, p: Vector3<f64>) {
        self.x[(row, col)] = p.x;
        self.y[(row, col)] = p.y;
        self.z[(row, col)] = p.z;
        self.valid[(row, col)] = true;
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[(row, col)]
    }
}

/// Projected pixel coordinates with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrid {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub valid: Array2<bool>,
}

impl PixelGrid {
    pub fn width(&self) -> usize {
        self.u.ncols()
    }

    pub fn height(&self) -> usize {
        self.u.nrows()
    }
}

/// Lifts a single pixel at depth `d` into camera space.
pub fn unproject_pixel(u: f64, v: f64, depth: f64, k: &Intrinsics) -> Vector3<f64> {
    Vector3::new(
        (u - k.cx) * depth / k.fx,
        (v - k.cy) * depth / k.fy,
        depth,
    )
}

/// Projects a camera-space point to pixel coordinates.
/// Returns `None` for points at or behind the [`EPSILON_Z`] cutoff.
pub fn project_point(p: &Vector3<f64>, k: &Intrinsics) -> Option<(f64, f64)> {
    if p.z <= EPSILON_Z {
        return None;
    }
    Some((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

/// Lifts every pixel of the integer lattice through its depth sample.
/// Invalid depth propagates to invalid points.
pub fn unproject(depth: &DepthMap, k: &Intrinsics) -> Result<PointGrid, GeometryError> {
    if depth.width() != k.width || depth.height() != k.height {
        return Err(GeometryError::DimensionMismatch {
            expected_width: k.width,
            expected_height: k.height,
            width: depth.width(),
            height: depth.height(),
        });
    }
    let mut out = PointGrid::invalid(depth.height(), depth.width());
    for row in 0..depth.height() {
        for col in 0..depth.width() {
            if depth.is_valid(row, col) {
                let p = unproject_pixel(col as f64, row as f64, depth.get(row, col), k);
                out.set(row, col, p);
            }
        }
    }
    Ok(out)
}

/// Applies `p' = R p + t` to every valid point.
pub fn transform(points: &PointGrid, e: &Extrinsics) -> PointGrid {
    let mut out = PointGrid::invalid(points.height(), points.width());
    for row in 0..points.height() {
        for col in 0..points.width() {
            if points.is_valid(row, col) {
                out.set(row, col, e.apply(&points.get(row, col)));
            }
        }
    }
    out
}

/// Projects every valid point to pixel coordinates. Points behind the camera
/// become invalid, never a crash.
pub fn project(points: &PointGrid, k: &Intrinsics) -> PixelGrid {
    let (h, w) = (points.height(), points.width());
    let mut out = PixelGrid {
        u: Array2::zeros((h, w)),
        v: Array2::zeros((h, w)),
        valid: Array2::from_elem((h, w), false),
    };
    for row in 0..h {
        for col in 0..w {
            if points.is_valid(row, col) {
                if let Some((u, v)) = project_point(&points.get(row, col), k) {
                    out.u[(row, col)] = u;
                    out.v[(row, col)] = v;
                    out.valid[(row, col)] = true;
                }
            }
        }
    }
    out
}

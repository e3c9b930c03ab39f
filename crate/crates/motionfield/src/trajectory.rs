//! Coarse-grid trajectory DSL and per-frame interpolation.
//!
//! An image is divided into labeled square areas, each split 3×3 into named
//! subareas; a trajectory is 1–4 `(area, subarea)` control points written as
//! a `Set_*_Points` call. Control points resolve to subcell-center pixels and
//! interpolate into one position per output frame.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("area label {area} out of range for a grid with {area_count} areas")]
    AreaOutOfRange { area: usize, area_count: usize },
    #[error("unknown subarea {0:?}")]
    UnknownSubarea(String),
    #[error("trajectory needs 1-4 points, got {0}")]
    PointCount(usize),
    #[error("frame count must be at least 1")]
    ZeroFrames,
    #[error("control point {index} is not finite")]
    NonFiniteControlPoint { index: usize },
    #[error("unknown function {0:?}; expected Set_1_Points through Set_4_Points")]
    UnknownFunction(String),
    #[error("function name declares {declared} points but the call supplies {got}")]
    ArityMismatch { declared: usize, got: usize },
    #[error("malformed trajectory call: {0}")]
    Malformed(String),
    #[error("invalid area value {0:?}; expected a non-negative integer")]
    InvalidArea(String),
    #[error("point {position}: expected label {expected:?}, got {got:?}")]
    UnexpectedLabel {
        position: usize,
        expected: &'static str,
        got: String,
    },
}

/// Division of an image into `cols × rows` labeled areas.
/// Labels run row-major from 0 at the top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub cols: usize,
    pub rows: usize,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub const DEFAULT_COLS: usize = 20;
    pub const DEFAULT_ROWS: usize = 10;

    pub fn new(cols: usize, rows: usize, width: usize, height: usize) -> Result<Self, TrajectoryError> {
        if cols < 1 || rows < 1 {
            return Err(TrajectoryError::InvalidGrid(format!(
                "need at least one column and row, got {cols}x{rows}"
            )));
        }
        if width < cols || height < rows {
            return Err(TrajectoryError::InvalidGrid(format!(
                "{cols}x{rows} grid does not fit a {width}x{height} image"
            )));
        }
        Ok(Self {
            cols,
            rows,
            width,
            height,
        })
    }

    /// The standard 20×10 layout over the given image.
    pub fn default_for(width: usize, height: usize) -> Result<Self, TrajectoryError> {
        Self::new(Self::DEFAULT_COLS, Self::DEFAULT_ROWS, width, height)
    }

    pub fn area_count(&self) -> usize {
        self.cols * self.rows
    }

    pub fn cell_width(&self) -> f64 {
        self.width as f64 / self.cols as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.height as f64 / self.rows as f64
    }

    /// Top-left corner of an area's cell, in pixels.
    pub fn cell_origin(&self, area: usize) -> Result<(f64, f64), TrajectoryError> {
        if area >= self.area_count() {
            return Err(TrajectoryError::AreaOutOfRange {
                area,
                area_count: self.area_count(),
            });
        }
        let row = area / self.cols;
        let col = area % self.cols;
        Ok((col as f64 * self.cell_width(), row as f64 * self.cell_height()))
    }
}

/// One of the nine named positions inside a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subarea {
    Center,
    TopLeft,
    Top,
    TopRight,
    Left,
    Right,
    BottomLeft,
    Bottom,
    BottomRight,
}

impl Subarea {
    pub const ALL: [Subarea; 9] = [
        Subarea::Center,
        Subarea::TopLeft,
        Subarea::Top,
        Subarea::TopRight,
        Subarea::Left,
        Subarea::Right,
        Subarea::BottomLeft,
        Subarea::Bottom,
        Subarea::BottomRight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subarea::Center => "center",
            Subarea::TopLeft => "top-left",
            Subarea::Top => "top",
            Subarea::TopRight => "top-right",
            Subarea::Left => "left",
            Subarea::Right => "right",
            Subarea::BottomLeft => "bottom-left",
            Subarea::Bottom => "bottom",
            Subarea::BottomRight => "bottom-right",
        }
    }

    /// Column and row of the subcell in the 3×3 split of a cell.
    fn subcell(self) -> (usize, usize) {
        match self {
            Subarea::TopLeft => (0, 0),
            Subarea::Top => (1, 0),
            Subarea::TopRight => (2, 0),
            Subarea::Left => (0, 1),
            Subarea::Center => (1, 1),
            Subarea::Right => (2, 1),
            Subarea::BottomLeft => (0, 2),
            Subarea::Bottom => (1, 2),
            Subarea::BottomRight => (2, 2),
        }
    }
}

impl FromStr for Subarea {
    type Err = TrajectoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subarea::ALL
            .into_iter()
            .find(|sub| sub.as_str() == s)
            .ok_or_else(|| TrajectoryError::UnknownSubarea(s.to_string()))
    }
}

impl fmt::Display for Subarea {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A trajectory control point named in grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPoint {
    pub area: usize,
    pub subarea: Subarea,
}

/// An ordered list of 1–4 grid control points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub points: Vec<GridPoint>,
}

impl TrajectorySpec {
    pub fn new(points: Vec<GridPoint>) -> Result<Self, TrajectoryError> {
        if points.is_empty() || points.len() > 4 {
            return Err(TrajectoryError::PointCount(points.len()));
        }
        Ok(Self { points })
    }

    /// Checks every area label against the grid.
    pub fn validate_for(&self, grid: &GridSpec) -> Result<(), TrajectoryError> {
        for p in &self.points {
            grid.cell_origin(p.area)?;
        }
        Ok(())
    }

    /// Resolves every control point to its pixel position.
    pub fn resolve(&self, grid: &GridSpec) -> Result<Vec<(f64, f64)>, TrajectoryError> {
        self.points
            .iter()
            .map(|p| grid_point_to_pixel(*p, grid))
            .collect()
    }
}

/// Pixel position of a grid point: the center of the named subcell in the
/// area's 3×3 subdivision.
pub fn grid_point_to_pixel(gp: GridPoint, grid: &GridSpec) -> Result<(f64, f64), TrajectoryError> {
    let (ox, oy) = grid.cell_origin(gp.area)?;
    let (sc, sr) = gp.subarea.subcell();
    let u = ox + grid.cell_width() * (2 * sc + 1) as f64 / 6.0;
    let v = oy + grid.cell_height() * (2 * sr + 1) as f64 / 6.0;
    Ok((u, v))
}

/// Pixel positions over time, one per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelPath {
    pub positions: Vec<(f64, f64)>,
}

impl PixelPath {
    /// Displacement of each frame's position from the first frame's.
    pub fn displacements(&self) -> Vec<(f64, f64)> {
        let Some(&(u0, v0)) = self.positions.first() else {
            return Vec::new();
        };
        self.positions
            .iter()
            .map(|&(u, v)| (u - u0, v - v0))
            .collect()
    }
}

/// Parses a `Set_*_Points` call in either of its two written forms:
///
/// * positional: `Set_2_Points (start: 143, top-right; end: 33, bottom-right)`
/// * keyword: `Set_2_Points (start_area: 143, start_subarea: "top-right",
///   end_area: 33, end_subarea: "bottom-right")`
///
/// The numeral in the function name must match the number of points supplied.
/// Point labels follow the fixed sequence `start`, `mid` (or `mid_1`),
/// `mid_2`, `end` for the declared count.
pub fn parse_set_points(text: &str) -> Result<TrajectorySpec, TrajectoryError> {
    let text = text.trim();
    let open = text
        .find('(')
        .ok_or_else(|| TrajectoryError::Malformed("missing opening parenthesis".into()))?;
    let close = text
        .rfind(')')
        .filter(|&c| c > open)
        .ok_or_else(|| TrajectoryError::Malformed("missing closing parenthesis".into()))?;
    if !text[close + 1..].trim().is_empty() {
        return Err(TrajectoryError::Malformed(
            "unexpected text after closing parenthesis".into(),
        ));
    }
    let name = text[..open].trim();
    let declared = declared_point_count(name)?;
    let body = &text[open + 1..close];

    let points = if body.contains("_area") || body.contains("_subarea") {
        parse_keyword_body(body, declared)?
    } else {
        parse_positional_body(body, declared)?
    };
    if points.len() != declared {
        return Err(TrajectoryError::ArityMismatch {
            declared,
            got: points.len(),
        });
    }
    TrajectorySpec::new(points)
}

fn declared_point_count(name: &str) -> Result<usize, TrajectoryError> {
    let unknown = || TrajectoryError::UnknownFunction(name.to_string());
    let numeral = name
        .strip_prefix("Set_")
        .and_then(|rest| rest.strip_suffix("_Points"))
        .ok_or_else(unknown)?;
    match numeral {
        "1" => Ok(1),
        "2" => Ok(2),
        "3" => Ok(3),
        "4" => Ok(4),
        _ => Err(unknown()),
    }
}

/// Label sequence for a call with `count` points. `mid` also accepts `mid_1`
/// in three-point calls, where only one midpoint exists.
fn expected_labels(count: usize) -> &'static [&'static str] {
    match count {
        1 => &["start"],
        2 => &["start", "end"],
        3 => &["start", "mid", "end"],
        _ => &["start", "mid_1", "mid_2", "end"],
    }
}

fn label_matches(expected: &str, got: &str) -> bool {
    got == expected || (expected == "mid" && got == "mid_1")
}

fn parse_positional_body(body: &str, declared: usize) -> Result<Vec<GridPoint>, TrajectoryError> {
    let parts: Vec<&str> = body.split(';').collect();
    if parts.len() != declared {
        return Err(TrajectoryError::ArityMismatch {
            declared,
            got: parts.len(),
        });
    }
    let labels = expected_labels(declared);
    let mut points = Vec::with_capacity(declared);
    for (i, part) in parts.iter().enumerate() {
        let (label, rest) = part
            .split_once(':')
            .ok_or_else(|| TrajectoryError::Malformed(format!("point {i}: missing ':'")))?;
        let label = label.trim();
        if !label_matches(labels[i], label) {
            return Err(TrajectoryError::UnexpectedLabel {
                position: i,
                expected: labels[i],
                got: label.to_string(),
            });
        }
        let mut fields = rest.split(',');
        let area = fields
            .next()
            .ok_or_else(|| TrajectoryError::Malformed(format!("point {i}: missing area")))?;
        let subarea = fields
            .next()
            .ok_or_else(|| TrajectoryError::Malformed(format!("point {i}: missing subarea")))?;
        if fields.next().is_some() {
            return Err(TrajectoryError::Malformed(format!(
                "point {i}: too many fields"
            )));
        }
        points.push(GridPoint {
            area: parse_area(area)?,
            subarea: parse_subarea_literal(subarea)?,
        });
    }
    Ok(points)
}

fn parse_keyword_body(body: &str, declared: usize) -> Result<Vec<GridPoint>, TrajectoryError> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for field in body.split(',') {
        if field.trim().is_empty() {
            return Err(TrajectoryError::Malformed("empty argument".into()));
        }
        let (key, value) = field
            .split_once(':')
            .ok_or_else(|| TrajectoryError::Malformed(format!("argument {field:?} has no ':'")))?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    let labels = expected_labels(declared);
    if pairs.len() != labels.len() * 2 {
        return Err(TrajectoryError::ArityMismatch {
            declared,
            got: pairs.len() / 2,
        });
    }
    let mut points = Vec::with_capacity(declared);
    for (i, label) in labels.iter().enumerate() {
        let (area_key, area_value) = &pairs[2 * i];
        let (sub_key, sub_value) = &pairs[2 * i + 1];
        let area_label = area_key
            .strip_suffix("_area")
            .ok_or_else(|| TrajectoryError::Malformed(format!("expected an _area key, got {area_key:?}")))?;
        let sub_label = sub_key
            .strip_suffix("_subarea")
            .ok_or_else(|| TrajectoryError::Malformed(format!("expected a _subarea key, got {sub_key:?}")))?;
        if !label_matches(label, area_label) {
            return Err(TrajectoryError::UnexpectedLabel {
                position: i,
                expected: label,
                got: area_label.to_string(),
            });
        }
        if sub_label != area_label {
            return Err(TrajectoryError::Malformed(format!(
                "mismatched key pair {area_key:?} / {sub_key:?}"
            )));
        }
        points.push(GridPoint {
            area: parse_area(area_value)?,
            subarea: parse_subarea_literal(sub_value)?,
        });
    }
    Ok(points)
}

fn parse_area(text: &str) -> Result<usize, TrajectoryError> {
    let text = text.trim();
    text.parse::<usize>()
        .map_err(|_| TrajectoryError::InvalidArea(text.to_string()))
}

fn parse_subarea_literal(text: &str) -> Result<Subarea, TrajectoryError> {
    let text = text.trim();
    let unquoted = text
        .strip_prefix('"')
        .and_then(|rest| rest.strip_suffix('"'))
        .unwrap_or(text);
    unquoted.parse()
}

const CURVE_SUBDIV: usize = 512;

/// Interpolates 1–4 control pixels into `num_frames` per-frame positions:
/// one point holds still, two points move linearly, three or more follow a
/// Catmull-Rom curve through every control point (end tangents from
/// duplicated endpoints), sampled uniformly by arc length. The first and
/// last frames equal the first and last control points exactly.
pub fn interpolate(control: &[(f64, f64)], num_frames: usize) -> Result<PixelPath, TrajectoryError> {
    if num_frames < 1 {
        return Err(TrajectoryError::ZeroFrames);
    }
    if control.is_empty() || control.len() > 4 {
        return Err(TrajectoryError::PointCount(control.len()));
    }
    for (index, &(u, v)) in control.iter().enumerate() {
        if !(u.is_finite() && v.is_finite()) {
            return Err(TrajectoryError::NonFiniteControlPoint { index });
        }
    }

    let first = control[0];
    let last = *control.last().expect("control is non-empty");
    // A single control point holds still; a single output frame sits at the
    // path start.
    if control.len() == 1 || num_frames == 1 {
        return Ok(PixelPath {
            positions: vec![first; num_frames],
        });
    }

    let positions = if control.len() == 2 {
        let denom = (num_frames - 1) as f64;
        (0..num_frames)
            .map(|k| {
                let s = k as f64 / denom;
                (
                    first.0 + (last.0 - first.0) * s,
                    first.1 + (last.1 - first.1) * s,
                )
            })
            .collect()
    } else {
        sample_catmull_rom(control, num_frames)
    };
    let mut positions = positions;
    positions[0] = first;
    positions[num_frames - 1] = last;
    Ok(PixelPath { positions })
}

fn catmull_rom_point(
    p0: (f64, f64),
    p1: (f64, f64),
    p2: (f64, f64),
    p3: (f64, f64),
    t: f64,
) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let blend = |a: f64, b: f64, c: f64, d: f64| {
        0.5 * ((2.0 * b)
            + (-a + c) * t
            + (2.0 * a - 5.0 * b + 4.0 * c - d) * t2
            + (-a + 3.0 * b - 3.0 * c + d) * t3)
    };
    (
        blend(p0.0, p1.0, p2.0, p3.0),
        blend(p0.1, p1.1, p2.1, p3.1),
    )
}

/// Densely subdivides the spline, then resamples uniformly by arc length.
fn sample_catmull_rom(control: &[(f64, f64)], num_frames: usize) -> Vec<(f64, f64)> {
    let n = control.len();
    let point_at = |seg: usize, t: f64| {
        let p0 = control[seg.saturating_sub(1)];
        let p1 = control[seg];
        let p2 = control[seg + 1];
        let p3 = control[(seg + 2).min(n - 1)];
        catmull_rom_point(p0, p1, p2, p3, t)
    };

    let mut dense: Vec<(f64, f64)> = Vec::with_capacity((n - 1) * CURVE_SUBDIV + 1);
    dense.push(control[0]);
    for seg in 0..n - 1 {
        for j in 1..=CURVE_SUBDIV {
            dense.push(point_at(seg, j as f64 / CURVE_SUBDIV as f64));
        }
    }

    let mut cumulative = Vec::with_capacity(dense.len());
    let mut total = 0.0;
    cumulative.push(0.0);
    for w in dense.windows(2) {
        let (a, b) = (w[0], w[1]);
        total += ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        cumulative.push(total);
    }

    if total <= 0.0 {
        return vec![control[0]; num_frames];
    }

    let denom = (num_frames - 1) as f64;
    let mut out = Vec::with_capacity(num_frames);
    let mut cursor = 0usize;
    for k in 0..num_frames {
        let target = total * (k as f64 / denom);
        while cursor + 1 < cumulative.len() - 1 && cumulative[cursor + 1] < target {
            cursor += 1;
        }
        let seg_len = cumulative[cursor + 1] - cumulative[cursor];
        let frac = if seg_len > 0.0 {
            ((target - cumulative[cursor]) / seg_len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let a = dense[cursor];
        let b = dense[cursor + 1];
        out.push((a.0 + (b.0 - a.0) * frac, a.1 + (b.1 - a.1) * frac));
    }
    out
}

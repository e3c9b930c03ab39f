//! Trajectory files: JSON with the grid dimensions and one or more
//! control-point lists, e.g.
//!
//! ```json
//! {
//!   "grid": { "cols": 20, "rows": 10 },
//!   "trajectories": [
//!     { "points": [ { "area": 143, "subarea": "top-right" },
//!                   { "area": 33, "subarea": "bottom-right" } ] }
//!   ]
//! }
//! ```
//!
//! The grid carries no pixel size of its own; it binds to an image's
//! dimensions at read time.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::metadata::atomic_write;
use crate::trajectory::{GridPoint, GridSpec, TrajectoryError, TrajectorySpec};

#[derive(Debug, Error)]
pub enum TrajJsonError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub grid: GridDims,
    pub trajectories: Vec<TrajectoryEntry>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDims {
    pub cols: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryEntry {
    pub points: Vec<GridPoint>,
}

impl TrajectoryFile {
    pub fn new(grid: &GridSpec, specs: &[TrajectorySpec]) -> Self {
        Self {
            grid: GridDims {
                cols: grid.cols,
                rows: grid.rows,
            },
            trajectories: specs
                .iter()
                .map(|s| TrajectoryEntry {
                    points: s.points.clone(),
                })
                .collect(),
        }
    }

    /// Bind to an image's pixel dimensions and validate every trajectory.
    pub fn resolve(
        &self,
        width: usize,
        height: usize,
    ) -> Result<(GridSpec, Vec<TrajectorySpec>), TrajJsonError> {
        let grid = GridSpec::new(self.grid.cols, self.grid.rows, width, height)?;
        let mut specs = Vec::with_capacity(self.trajectories.len());
        for entry in &self.trajectories {
            let spec = TrajectorySpec::new(entry.points.clone())?;
            spec.validate_for(&grid)?;
            specs.push(spec);
        }
        Ok((grid, specs))
    }
}

pub fn parse_trajectory_json(text: &str) -> Result<TrajectoryFile, TrajJsonError> {
    Ok(serde_json::from_str(text)?)
}

pub fn read_trajectories(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
) -> Result<(GridSpec, Vec<TrajectorySpec>), TrajJsonError> {
    parse_trajectory_json(&fs::read_to_string(path)?)?.resolve(width, height)
}

pub fn write_trajectories(
    path: impl AsRef<Path>,
    grid: &GridSpec,
    specs: &[TrajectorySpec],
) -> Result<(), TrajJsonError> {
    let file = TrajectoryFile::new(grid, specs);
    let mut body = serde_json::to_vec_pretty(&file)?;
    body.push(b'\n');
    atomic_write(path, &body)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Subarea;

    fn spec(points: &[(usize, Subarea)]) -> TrajectorySpec {
        TrajectorySpec::new(
            points
                .iter()
                .map(|&(area, subarea)| GridPoint { area, subarea })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn file_round_trip_preserves_points() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.json");
        let grid = GridSpec::default_for(2560, 1600).unwrap();
        let specs = vec![
            spec(&[(143, Subarea::TopRight), (33, Subarea::BottomRight)]),
            spec(&[(0, Subarea::Center)]),
        ];
        write_trajectories(&path, &grid, &specs).unwrap();
        let (back_grid, back) = read_trajectories(&path, 2560, 1600).unwrap();
        assert_eq!(back_grid, grid);
        assert_eq!(back, specs);
    }

    #[test]
    fn example_document_parses() {
        let text = r#"{
            "grid": { "cols": 20, "rows": 10 },
            "trajectories": [
                { "points": [ { "area": 143, "subarea": "top-right" },
                              { "area": 33, "subarea": "bottom-right" } ] }
            ]
        }"#;
        let file = parse_trajectory_json(text).unwrap();
        let (grid, specs) = file.resolve(2560, 1600).unwrap();
        assert_eq!(grid.cols, 20);
        assert_eq!(specs.len(), 1);
        assert_eq!(specs[0].points[0].area, 143);
        assert_eq!(specs[0].points[1].subarea, Subarea::BottomRight);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{ "grid": { "cols": 20, "rows": 10, "extra": 1 }, "trajectories": [] }"#;
        assert!(matches!(
            parse_trajectory_json(text),
            Err(TrajJsonError::Json(_))
        ));
    }

    #[test]
    fn bad_subarea_is_rejected() {
        let text = r#"{
            "grid": { "cols": 20, "rows": 10 },
            "trajectories": [ { "points": [ { "area": 0, "subarea": "middle" } ] } ]
        }"#;
        assert!(parse_trajectory_json(text).is_err());
    }

    #[test]
    fn out_of_range_area_fails_at_resolve() {
        let text = r#"{
            "grid": { "cols": 4, "rows": 2 },
            "trajectories": [ { "points": [ { "area": 8, "subarea": "center" } ] } ]
        }"#;
        let file = parse_trajectory_json(text).unwrap();
        assert!(matches!(
            file.resolve(640, 480),
            Err(TrajJsonError::Trajectory(
                TrajectoryError::AreaOutOfRange { .. }
            ))
        ));
    }

    #[test]
    fn too_many_points_fail_at_resolve() {
        let text = r#"{
            "grid": { "cols": 20, "rows": 10 },
            "trajectories": [ { "points": [
                { "area": 0, "subarea": "center" },
                { "area": 1, "subarea": "center" },
                { "area": 2, "subarea": "center" },
                { "area": 3, "subarea": "center" },
                { "area": 4, "subarea": "center" }
            ] } ]
        }"#;
        let file = parse_trajectory_json(text).unwrap();
        assert!(file.resolve(640, 480).is_err());
    }
}

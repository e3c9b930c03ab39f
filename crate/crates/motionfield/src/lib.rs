//! Turns text-described motion into dense optical flow: object trajectories
//! drawn on a coarse grid and parametric camera paths are composed through a
//! pinhole scene model into per-frame flow maps, with the inverse
//! decomposition and a forward-warp preview for checking results.

pub mod agent;
pub mod camera_path;
pub mod cli;
pub mod densify;
pub mod flow_compose;
pub mod flow_decompose;
pub mod geometry;
pub mod io;
pub mod overlay;
pub mod trajectory;
pub mod warp;

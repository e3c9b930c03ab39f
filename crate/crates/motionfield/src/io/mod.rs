//! File formats and run provenance: flow maps, camera poses, depth maps,
//! trajectory JSON, and the metadata record written beside every output set.

pub mod depth;
pub mod flo;
pub mod metadata;
pub mod pose;
pub mod traj_json;

//! Run provenance: a metadata record written next to every output set, plus
//! the atomic-write and digest helpers the other writers share. The record
//! captures the tool version, every effective parameter, the numeric
//! constants baked into the pipeline, and digests of all inputs — enough to
//! re-run the command bit-identically. No timestamps, so reruns diff clean.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const METADATA_FILE: &str = "metadata.json";

#[derive(Debug, Error)]
pub enum MetadataError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub parameters: BTreeMap<String, Value>,
    pub constants: BTreeMap<String, Value>,
    pub input_digests: BTreeMap<String, String>,
}

impl RunMetadata {
    pub fn new(command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            parameters: BTreeMap::new(),
            constants: design_constants(),
            input_digests: BTreeMap::new(),
        }
    }

    pub fn set_parameter(&mut self, key: &str, value: impl Into<Value>) {
        self.parameters.insert(key.to_string(), value.into());
    }

    /// Digest an input file and record it under `label`.
    pub fn record_input(&mut self, label: &str, path: impl AsRef<Path>) -> Result<(), MetadataError> {
        let digest = sha256_file(&path)?;
        self.input_digests.insert(
            format!("{label}:{}", path.as_ref().display()),
            digest,
        );
        Ok(())
    }

    /// Write `metadata.json` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<(), MetadataError> {
        let mut body = serde_json::to_vec_pretty(self)?;
        body.push(b'\n');
        atomic_write(dir.as_ref().join(METADATA_FILE), &body)?;
        Ok(())
    }
}

/// The fixed numeric and structural choices every run inherits.
pub fn design_constants() -> BTreeMap<String, Value> {
    let mut c = BTreeMap::new();
    c.insert(
        "intrinsics_default".to_string(),
        json!("fx = fy = max(width, height); principal point at the image center"),
    );
    c.insert("pacing_uniform".to_string(), json!("s"));
    c.insert("pacing_increment".to_string(), json!("s^2"));
    c.insert("pacing_decrement".to_string(), json!("1 - (1 - s)^2"));
    c.insert(
        "object_offset_lift".to_string(),
        json!("constant-depth unprojection difference; zero z component"),
    );
    c.insert(
        "flow_reference".to_string(),
        json!("all flows are cumulative frame 0 -> frame k"),
    );
    c.insert("densify_support_sigmas".to_string(), json!(5.0));
    c.insert("flo_unknown_threshold".to_string(), json!(1e9));
    c.insert(
        "depth_invalid_rule".to_string(),
        json!("raw 0, nonpositive, or nonfinite samples are invalid"),
    );
    c.insert("replacement_tau_default".to_string(), json!(5.0));
    c.insert("frames_default".to_string(), json!(24));
    c.insert("grid_default".to_string(), json!("20x10"));
    c.insert(
        "warp_rule".to_string(),
        json!("round() splat, smaller transformed depth wins, row-major tie-break"),
    );
    c
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: impl AsRef<Path>) -> io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Hex SHA-256 of an in-memory buffer.
pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write a file atomically: stage in a temp file in the same directory, then
/// rename over the destination.
pub fn atomic_write(path: impl AsRef<Path>, bytes: &[u8]) -> io::Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

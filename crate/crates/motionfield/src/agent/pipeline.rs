//! The end-to-end run behind `agent run`: split the motion text, plot a
//! trajectory and densify it into object flow, generate a camera path,
//! compose unified flow, render the forward-warped preview, and optionally
//! rethink one action against preview frames. Every artifact lands in the
//! output directory with a provenance record.

use std::fs;
use std::io::{self, Cursor};
use std::path::{Path, PathBuf};
use std::slice;

use image::{ImageFormat, RgbImage};
use ndarray::Array2;
use serde::Serialize;
use thiserror::Error;

use crate::agent::action::{AgentAction, ParsedAction};
use crate::agent::backend::{ChatBackend, ImageAttachment};
use crate::agent::{AgentConfig, AgentError, AgentSession};
use crate::camera_path::{generate_extrinsics, CameraMotionSpec, CameraPathError};
use crate::densify::{path_to_flows, DensifyError};
use crate::flow_compose::{compose_unified_flow, ComposeError, ComposeInput, UnifiedFlow};
use crate::geometry::{DepthMap, Extrinsics, FlowField, GeometryError, Intrinsics};
use crate::io::depth::{read_depth, write_dpt1_bytes, DepthError};
use crate::io::flo::{write_flo_bytes, FloError};
use crate::io::metadata::{atomic_write, MetadataError, RunMetadata};
use crate::io::pose::{format_extrinsics, PoseError};
use crate::io::traj_json::{write_trajectories, TrajJsonError};
use crate::overlay::render_overlay;
use crate::trajectory::{interpolate, GridSpec, TrajectoryError, TrajectorySpec};
use crate::warp::{encode_gif, render_sequence, Frame, WarpError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error(transparent)]
    Flo(#[from] FloError),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    TrajJson(#[from] TrajJsonError),
    #[error(transparent)]
    Metadata(#[from] MetadataError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Densify(#[from] DensifyError),
    #[error(transparent)]
    CameraPath(#[from] CameraPathError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Warp(#[from] WarpError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{what} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        what: &'static str,
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("depth map has no valid samples")]
    NoValidDepth,
    #[error("frame count must be at least 1, got {0}")]
    InvalidFrameCount(usize),
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub image_path: PathBuf,
    pub depth_path: PathBuf,
    pub depth_scale: Option<f64>,
    pub prompt: String,
    pub mask_path: Option<PathBuf>,
    /// Trajectory start point; when absent it comes from the mask centroid,
    /// or failing that from the start-point dialogue.
    pub start: Option<(f64, f64)>,
    pub out_dir: PathBuf,
    pub frames: usize,
    pub grid_cols: usize,
    pub grid_rows: usize,
    pub sigma: f64,
    pub rethink: bool,
    pub fill_holes: bool,
    pub gif: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RethinkRecord {
    pub target: &'static str,
    pub action_before: AgentAction,
    pub action_after: AgentAction,
}

/// What the agent decided, before and (when rethinking) after feedback.
#[derive(Debug, Clone, Serialize)]
pub struct ActionsRecord {
    pub object_text: String,
    pub camera_text: String,
    pub start_point: Option<(f64, f64)>,
    pub trajectory: Option<AgentAction>,
    pub camera: Option<AgentAction>,
    pub rethink: Option<RethinkRecord>,
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub record: ActionsRecord,
    pub frames_written: usize,
}

pub fn run(
    config: &PipelineConfig,
    backend: Box<dyn ChatBackend>,
    agent_config: AgentConfig,
) -> Result<PipelineOutput, PipelineError> {
    if config.frames < 1 {
        return Err(PipelineError::InvalidFrameCount(config.frames));
    }
    let src = image::open(&config.image_path)?.to_rgb8();
    let (w, h) = (src.width() as usize, src.height() as usize);
    let depth = read_depth(&config.depth_path, config.depth_scale)?;
    check_dims("depth map", w, h, depth.width(), depth.height())?;
    let mask = config
        .mask_path
        .as_ref()
        .map(|p| load_mask(p, w, h))
        .transpose()?;

    let intrinsics = Intrinsics::default_for(w, h);
    let first_frame = ImageAttachment::png_from_bytes(&png_bytes(&src)?);

    fs::create_dir_all(&config.out_dir)?;
    let mut session = AgentSession::new(backend, agent_config);
    let backend_descriptor = session.backend_descriptor();
    let split = session.decompose_motion_text(&config.prompt)?;

    // Object side: trajectory over the labeled grid, then densified flow.
    // The grid only exists when there is object motion to plot.
    let mut grid = None;
    let mut trajectory_action = None;
    let mut start_point = None;
    let mut object_flows = vec![FlowField::zeros(h, w); config.frames];
    if !split.object_text.is_empty() {
        let g = GridSpec::new(config.grid_cols, config.grid_rows, w, h)?;
        let start = resolve_start_point(
            config,
            &mut session,
            &split.object_text,
            &src,
            &g,
            mask.as_ref(),
        )?;
        start_point = Some(start);
        let overlay = render_overlay(&src, &g, Some(start));
        let overlay_bytes = png_bytes(&overlay)?;
        atomic_write(config.out_dir.join("grid_overlay.png"), &overlay_bytes)?;
        let action = session.plot_trajectory(
            &split.object_text,
            &format!("({:.0}, {:.0})", start.0, start.1),
            &ImageAttachment::png_from_bytes(&overlay_bytes),
        )?;
        let spec = trajectory_spec(&action);
        object_flows = expand_trajectory(&spec, &g, config, mask.as_ref())?;
        write_trajectories(config.out_dir.join("traj.json"), &g, &[spec])?;
        trajectory_action = Some(action);
        grid = Some(g);
    }

    // Camera side: a motion spec expanded into scene-scaled extrinsics.
    let mut camera_action = None;
    let camera_spec = if split.camera_text.is_empty() {
        CameraMotionSpec::stationary()
    } else {
        let action = session.generate_camera(&split.camera_text, &first_frame)?;
        let spec = camera_motion_spec(&action);
        camera_action = Some(action);
        spec
    };
    let d_max = depth.max_depth().ok_or(PipelineError::NoValidDepth)?;
    let mut extrinsics = generate_extrinsics(&camera_spec, d_max, config.frames)?;

    let mut unified = compose(&depth, &intrinsics, &object_flows, &extrinsics)?;
    let mut frames = render_sequence(&src, &unified, config.fill_holes)?;
    write_artifacts(config, &unified, &extrinsics, &frames)?;

    // Feedback round: revisit the camera action when there is one, else the
    // trajectory, then rebuild everything the revised action touches.
    let mut rethink_record = None;
    if config.rethink {
        let target = camera_action
            .as_ref()
            .map(|a| ("camera", a.clone(), split.camera_text.clone()))
            .or_else(|| {
                trajectory_action
                    .as_ref()
                    .map(|a| ("trajectory", a.clone(), split.object_text.clone()))
            });
        if let Some((target, prior, task)) = target {
            let feedback = feedback_attachments(&frames, session.config.feedback_frames)?;
            let revised = session.rethink(&task, &prior, &feedback)?;
            match (&revised.action, target) {
                (ParsedAction::Camera(spec), _) => {
                    extrinsics = generate_extrinsics(spec, d_max, config.frames)?;
                    camera_action = Some(revised.clone());
                }
                (ParsedAction::Trajectory(spec), _) => {
                    let g = grid.as_ref().expect("trajectory actions imply a grid");
                    object_flows = expand_trajectory(spec, g, config, mask.as_ref())?;
                    write_trajectories(config.out_dir.join("traj.json"), g, slice::from_ref(spec))?;
                    trajectory_action = Some(revised.clone());
                }
            }
            unified = compose(&depth, &intrinsics, &object_flows, &extrinsics)?;
            frames = render_sequence(&src, &unified, config.fill_holes)?;
            write_artifacts(config, &unified, &extrinsics, &frames)?;
            rethink_record = Some(RethinkRecord {
                target,
                action_before: prior,
                action_after: revised,
            });
        }
    }

    let record = ActionsRecord {
        object_text: split.object_text,
        camera_text: split.camera_text,
        start_point,
        trajectory: trajectory_action,
        camera: camera_action,
        rethink: rethink_record,
    };
    write_json(config.out_dir.join("actions.json"), &record)?;
    write_json(config.out_dir.join("conversation.json"), &session.state)?;

    let mut meta = RunMetadata::new("agent run");
    meta.set_parameter("prompt", config.prompt.clone());
    meta.set_parameter("frames", config.frames as u64);
    meta.set_parameter("grid", format!("{}x{}", config.grid_cols, config.grid_rows));
    meta.set_parameter("sigma", config.sigma);
    meta.set_parameter("d_max", d_max);
    meta.set_parameter("rethink", config.rethink);
    meta.set_parameter("fill_holes", config.fill_holes);
    meta.set_parameter("gif", config.gif);
    meta.set_parameter("backend", backend_descriptor);
    if let Some(start) = config.start {
        meta.set_parameter("start", format!("{},{}", start.0, start.1));
    }
    if let Some(scale) = config.depth_scale {
        meta.set_parameter("depth_scale", scale);
    }
    meta.record_input("image", &config.image_path)?;
    meta.record_input("depth", &config.depth_path)?;
    if let Some(mask) = &config.mask_path {
        meta.record_input("mask", mask)?;
    }
    meta.write_to(&config.out_dir)?;

    Ok(PipelineOutput {
        record,
        frames_written: frames.len(),
    })
}

fn check_dims(
    what: &'static str,
    want_w: usize,
    want_h: usize,
    got_w: usize,
    got_h: usize,
) -> Result<(), PipelineError> {
    if (want_w, want_h) == (got_w, got_h) {
        Ok(())
    } else {
        Err(PipelineError::DimensionMismatch {
            what,
            want_w,
            want_h,
            got_w,
            got_h,
        })
    }
}

fn load_mask(path: &Path, w: usize, h: usize) -> Result<Array2<bool>, PipelineError> {
    let gray = image::open(path)?.to_luma8();
    check_dims(
        "mask",
        w,
        h,
        gray.width() as usize,
        gray.height() as usize,
    )?;
    let mut mask = Array2::from_elem((h, w), false);
    for (x, y, px) in gray.enumerate_pixels() {
        mask[[y as usize, x as usize]] = px.0[0] > 127;
    }
    Ok(mask)
}

fn mask_centroid(mask: &Array2<bool>) -> Result<(f64, f64), PipelineError> {
    let mut sum = (0.0, 0.0);
    let mut count = 0usize;
    for ((row, col), &set) in mask.indexed_iter() {
        if set {
            sum.0 += col as f64;
            sum.1 += row as f64;
            count += 1;
        }
    }
    if count == 0 {
        return Err(PipelineError::EmptyMask);
    }
    Ok((sum.0 / count as f64, sum.1 / count as f64))
}

fn resolve_start_point(
    config: &PipelineConfig,
    session: &mut AgentSession,
    object_text: &str,
    src: &RgbImage,
    grid: &GridSpec,
    mask: Option<&Array2<bool>>,
) -> Result<(f64, f64), PipelineError> {
    if let Some(start) = config.start {
        return Ok(start);
    }
    if let Some(mask) = mask {
        return mask_centroid(mask);
    }
    let center = (src.width() as f64 / 2.0, src.height() as f64 / 2.0);
    let identified = session.identify_object(object_text, center, |candidate| {
        let marked = render_overlay(src, grid, Some(candidate));
        let bytes = png_bytes(&marked).map_err(|e| {
            AgentError::Backend(crate::agent::backend::BackendError::Transport(e.to_string()))
        })?;
        Ok(ImageAttachment::png_from_bytes(&bytes))
    })?;
    Ok(identified.position)
}

fn trajectory_spec(action: &AgentAction) -> TrajectorySpec {
    match &action.action {
        ParsedAction::Trajectory(spec) => spec.clone(),
        ParsedAction::Camera(_) => unreachable!("plot step only accepts trajectory actions"),
    }
}

fn camera_motion_spec(action: &AgentAction) -> CameraMotionSpec {
    match &action.action {
        ParsedAction::Camera(spec) => spec.clone(),
        ParsedAction::Trajectory(_) => unreachable!("camera step only accepts camera actions"),
    }
}

fn expand_trajectory(
    spec: &TrajectorySpec,
    grid: &GridSpec,
    config: &PipelineConfig,
    mask: Option<&Array2<bool>>,
) -> Result<Vec<FlowField>, PipelineError> {
    spec.validate_for(grid)?;
    let control = spec.resolve(grid)?;
    let path = interpolate(&control, config.frames)?;
    Ok(path_to_flows(
        &path,
        grid.width,
        grid.height,
        config.sigma,
        mask,
    )?)
}

fn compose(
    depth: &DepthMap,
    intrinsics: &Intrinsics,
    object_flows: &[FlowField],
    extrinsics: &[Extrinsics],
) -> Result<UnifiedFlow, PipelineError> {
    Ok(compose_unified_flow(&ComposeInput {
        depth: depth.clone(),
        intrinsics: intrinsics.clone(),
        object_flows: object_flows.to_vec(),
        extrinsics: extrinsics.to_vec(),
    })?)
}

fn write_artifacts(
    config: &PipelineConfig,
    unified: &UnifiedFlow,
    extrinsics: &[Extrinsics],
    frames: &[Frame],
) -> Result<(), PipelineError> {
    write_flow_outputs(&config.out_dir.join("flow"), unified)?;
    write_frame_outputs(&config.out_dir.join("frames"), frames)?;
    atomic_write(
        config.out_dir.join("camera.txt"),
        format_extrinsics(extrinsics).as_bytes(),
    )?;
    if config.gif {
        let mut bytes = Vec::new();
        encode_gif(frames, 100, &mut bytes)?;
        atomic_write(config.out_dir.join("preview.gif"), &bytes)?;
    }
    Ok(())
}

/// Write one `.flo` per frame, plus the transformed per-frame depth as
/// `depth_%04d.dpt` so a later warp can resolve occlusions physically.
pub fn write_flow_outputs(dir: &Path, unified: &UnifiedFlow) -> Result<(), PipelineError> {
    fs::create_dir_all(dir)?;
    for (k, flow) in unified.flows.iter().enumerate() {
        atomic_write(dir.join(format!("flow_{k:04}.flo")), &write_flo_bytes(flow))?;
        let depth = DepthMap::new(unified.camera_depth[k].clone());
        atomic_write(
            dir.join(format!("depth_{k:04}.dpt")),
            &write_dpt1_bytes(&depth),
        )?;
    }
    Ok(())
}

/// Write one `frame_%04d.png` per rendered frame.
pub fn write_frame_outputs(dir: &Path, frames: &[Frame]) -> Result<(), PipelineError> {
    fs::create_dir_all(dir)?;
    for (k, frame) in frames.iter().enumerate() {
        atomic_write(
            dir.join(format!("frame_{k:04}.png")),
            &png_bytes(&frame.rgb)?,
        )?;
    }
    Ok(())
}

/// Evenly spaced frame indices: first and last always included.
pub fn evenly_spaced(total: usize, want: usize) -> Vec<usize> {
    if total == 0 || want == 0 {
        return Vec::new();
    }
    if total <= want {
        return (0..total).collect();
    }
    let mut indices: Vec<usize> = (0..want)
        .map(|i| ((i * (total - 1)) as f64 / (want - 1) as f64).round() as usize)
        .collect();
    indices.dedup();
    indices
}

fn feedback_attachments(
    frames: &[Frame],
    want: usize,
) -> Result<Vec<ImageAttachment>, PipelineError> {
    evenly_spaced(frames.len(), want)
        .into_iter()
        .map(|k| Ok(ImageAttachment::png_from_bytes(&png_bytes(&frames[k].rgb)?)))
        .collect()
}

pub fn png_bytes(img: &RgbImage) -> Result<Vec<u8>, image::ImageError> {
    let mut cursor = Cursor::new(Vec::new());
    img.write_to(&mut cursor, ImageFormat::Png)?;
    Ok(cursor.into_inner())
}

fn write_json(path: PathBuf, value: &impl Serialize) -> Result<(), PipelineError> {
    let mut body = serde_json::to_vec_pretty(value).expect("serializable record");
    body.push(b'\n');
    atomic_write(path, &body)?;
    Ok(())
}

//! Command-line surface: `compose`, `decompose`, `preview`, `traj parse`,
//! and `agent run`. Each subcommand writes its artifacts with a metadata
//! record sufficient to re-run it bit-identically.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::Serialize;

use crate::agent::backend::backend_from_descriptor;
use crate::agent::pipeline::{self, PipelineConfig};
use crate::agent::AgentConfig;
use crate::densify::{path_to_flows, Anchor};
use crate::flow_compose::{compose_unified_flow, ComposeInput, UnifiedFlow};
use crate::flow_decompose::{
    remove_camera_flow, replacement_decision, sparse_sample, DecomposeInput, ReplacementChoice,
    ReplacementPolicy,
};
use crate::geometry::{Extrinsics, FlowField, Intrinsics};
use crate::io::depth::read_depth;
use crate::io::flo::{read_flo, write_flo};
use crate::io::metadata::{atomic_write, RunMetadata};
use crate::io::pose::read_extrinsics;
use crate::io::traj_json::{read_trajectories, TrajectoryFile};
use crate::trajectory::{interpolate, parse_set_points, GridSpec};
use crate::warp::{encode_gif, render_sequence};

#[derive(Debug, Parser)]
#[command(name = "motionfield", version, about = "Text-described motion to dense optical flow")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compose object trajectories and a camera path into unified flow maps.
    Compose(ComposeArgs),
    /// Strip camera-induced flow from real flow, leaving object flow.
    Decompose(DecomposeArgs),
    /// Forward-warp an image through flow maps into preview frames.
    Preview(PreviewArgs),
    /// Trajectory DSL helpers.
    Traj {
        #[command(subcommand)]
        command: TrajCommand,
    },
    /// Conversational motion planning over a chat backend.
    Agent {
        #[command(subcommand)]
        command: AgentCommand,
    },
}

#[derive(Debug, Subcommand)]
enum TrajCommand {
    /// Parse a Set_N_Points call and print it as trajectory JSON.
    Parse(TrajParseArgs),
}

#[derive(Debug, Subcommand)]
enum AgentCommand {
    /// Run the full plan → compose → preview loop for one prompt.
    Run(AgentRunArgs),
}

/// Grid dimensions given as `COLSxROWS`, e.g. `20x10`.
#[derive(Debug, Clone, Copy)]
struct GridArg {
    cols: usize,
    rows: usize,
}

impl FromStr for GridArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (cols, rows) = s
            .split_once('x')
            .ok_or_else(|| format!("expected COLSxROWS, got {s:?}"))?;
        let parse = |part: &str| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| format!("expected COLSxROWS, got {s:?}"))
        };
        Ok(Self {
            cols: parse(cols)?,
            rows: parse(rows)?,
        })
    }
}

impl fmt::Display for GridArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.cols, self.rows)
    }
}

/// A pixel point given as `X,Y`.
#[derive(Debug, Clone, Copy)]
struct PointArg {
    x: f64,
    y: f64,
}

impl FromStr for PointArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (x, y) = s
            .split_once(',')
            .ok_or_else(|| format!("expected X,Y, got {s:?}"))?;
        let parse = |part: &str| {
            part.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("expected X,Y, got {s:?}"))
        };
        Ok(Self {
            x: parse(x)?,
            y: parse(y)?,
        })
    }
}

#[derive(Debug, Args)]
struct ComposeArgs {
    /// First frame; its dimensions anchor the whole run.
    #[arg(long)]
    image: PathBuf,
    /// Frame-0 depth map (16-bit PNG with scale sidecar, or DPT1).
    #[arg(long)]
    depth: PathBuf,
    /// Depth scale override for PNG depth (metric = raw / scale).
    #[arg(long)]
    depth_scale: Option<f64>,
    /// Trajectory JSON describing object motion.
    #[arg(long, conflicts_with = "flow_dir")]
    traj: Option<PathBuf>,
    /// Directory of precomputed object flow maps (flow_%04d.flo).
    #[arg(long)]
    flow_dir: Option<PathBuf>,
    /// Extrinsics text file; identity poses when omitted.
    #[arg(long)]
    camera: Option<PathBuf>,
    #[arg(long, default_value_t = 24)]
    frames: usize,
    #[arg(long, default_value_t = GridArg { cols: 20, rows: 10 })]
    grid: GridArg,
    /// Densification kernel width in pixels.
    #[arg(long, default_value_t = 20.0)]
    sigma: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    /// Directory of real flow maps (flow_%04d.flo), frame 0 to each frame k.
    #[arg(long)]
    flow_dir: PathBuf,
    /// Frame-0 depth map.
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    depth_scale: Option<f64>,
    /// Directory of per-frame depth maps (depth_%04d.dpt), aligned with the
    /// flow files.
    #[arg(long)]
    depth_dir: PathBuf,
    /// Estimated camera extrinsics, one line per frame.
    #[arg(long)]
    camera: PathBuf,
    /// Cap on sparse anchors sampled from each object flow map.
    #[arg(long, default_value_t = 128)]
    max_points: usize,
    /// Minimum pixel distance between sampled anchors.
    #[arg(long, default_value_t = 8.0)]
    nms_radius: f64,
    /// Mean end-point-error threshold for preferring real over composed flow.
    #[arg(long, default_value_t = 5.0)]
    tau: f64,
    /// Composed unified flow to compare against for the replacement decision.
    #[arg(long)]
    unified_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PreviewArgs {
    #[arg(long)]
    image: PathBuf,
    /// Directory of flow maps (flow_%04d.flo); depth_%04d.dpt beside them, if
    /// present, drives occlusion ordering.
    #[arg(long)]
    flow_dir: PathBuf,
    /// Fill warp holes from the nearest rendered pixel.
    #[arg(long)]
    fill_holes: bool,
    /// Also encode the frames as preview.gif.
    #[arg(long)]
    gif: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrajParseArgs {
    /// The call text, e.g. "Set_2_Points (start: 143, top-right; end: 33, bottom-right)".
    call: String,
    #[arg(long, default_value_t = GridArg { cols: 20, rows: 10 })]
    grid: GridArg,
    /// Pixel dimensions the grid overlays, as WIDTHxHEIGHT.
    #[arg(long, default_value_t = GridArg { cols: 2560, rows: 1600 })]
    size: GridArg,
}

#[derive(Debug, Args)]
struct AgentRunArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    depth_scale: Option<f64>,
    /// The motion description to plan for.
    #[arg(long)]
    prompt: String,
    /// Object mask; its centroid seeds the trajectory start point.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Trajectory start point as X,Y; beats the mask centroid.
    #[arg(long)]
    start: Option<PointArg>,
    /// Chat backend: `mock:SCRIPT` or an http(s) endpoint. Defaults to the
    /// AGENT_ENDPOINT environment variable.
    #[arg(long)]
    backend: Option<String>,
    /// Revisit the planned action once against rendered preview frames.
    #[arg(long)]
    rethink: bool,
    #[arg(long, default_value_t = 24)]
    frames: usize,
    #[arg(long, default_value_t = GridArg { cols: 20, rows: 10 })]
    grid: GridArg,
    #[arg(long, default_value_t = 20.0)]
    sigma: f64,
    #[arg(long)]
    fill_holes: bool,
    #[arg(long)]
    gif: bool,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compose(args) => run_compose(args),
        Command::Decompose(args) => run_decompose(args),
        Command::Preview(args) => run_preview(args),
        Command::Traj {
            command: TrajCommand::Parse(args),
        } => run_traj_parse(args),
        Command::Agent {
            command: AgentCommand::Run(args),
        } => run_agent(args),
    }
}

/// Reads `{stem}_0000` .. `{stem}_NNNN` with the given extension, requiring a
/// contiguous run from index 0.
fn read_indexed<T>(
    dir: &Path,
    stem: &str,
    ext: &str,
    mut read: impl FnMut(&Path) -> Result<T>,
) -> Result<Vec<T>> {
    let mut items = Vec::new();
    loop {
        let path = dir.join(format!("{stem}_{:04}.{ext}", items.len()));
        if !path.exists() {
            break;
        }
        items.push(read(&path).with_context(|| format!("reading {}", path.display()))?);
    }
    if items.is_empty() {
        bail!(
            "no {stem}_0000.{ext} in {} (files must be numbered from 0)",
            dir.display()
        );
    }
    let total = std::fs::read_dir(dir)?
        .filter_map(|entry| entry.ok())
        .filter(|entry| {
            let name = entry.file_name();
            let name = name.to_string_lossy();
            name.strip_prefix(&format!("{stem}_"))
                .and_then(|rest| rest.strip_suffix(&format!(".{ext}")))
                .is_some_and(|digits| digits.len() == 4 && digits.bytes().all(|b| b.is_ascii_digit()))
        })
        .count();
    if total != items.len() {
        bail!(
            "{stem} files in {} are not contiguous from {stem}_0000.{ext}",
            dir.display()
        );
    }
    Ok(items)
}

fn read_flow_dir(dir: &Path) -> Result<Vec<FlowField>> {
    read_indexed(dir, "flow", "flo", |p| Ok(read_flo(p)?))
}

fn check_flow_dims(flows: &[FlowField], width: usize, height: usize) -> Result<()> {
    for (k, flow) in flows.iter().enumerate() {
        if (flow.width(), flow.height()) != (width, height) {
            bail!(
                "flow {k} is {}x{}, expected {width}x{height}",
                flow.width(),
                flow.height()
            );
        }
    }
    Ok(())
}

fn add_flows(sum: &mut FlowField, add: &FlowField) {
    for row in 0..sum.height() {
        for col in 0..sum.width() {
            let (du, dv) = add.get(row, col);
            let (su, sv) = sum.get(row, col);
            sum.set(row, col, su + du, sv + dv);
            if !add.is_valid(row, col) {
                sum.invalidate(row, col);
            }
        }
    }
}

fn run_compose(args: ComposeArgs) -> Result<()> {
    let src = image::open(&args.image)
        .with_context(|| format!("reading {}", args.image.display()))?
        .to_rgb8();
    let (w, h) = (src.width() as usize, src.height() as usize);
    let depth = read_depth(&args.depth, args.depth_scale)?;
    if (depth.width(), depth.height()) != (w, h) {
        bail!(
            "depth map is {}x{}, image is {w}x{h}",
            depth.width(),
            depth.height()
        );
    }

    let object_flows = if let Some(dir) = &args.flow_dir {
        let flows = read_flow_dir(dir)?;
        check_flow_dims(&flows, w, h)?;
        flows
    } else if let Some(traj_path) = &args.traj {
        if args.frames < 1 {
            bail!("--frames must be at least 1, got {}", args.frames);
        }
        let (grid, specs) = read_trajectories(traj_path, w, h)?;
        if (grid.cols, grid.rows) != (args.grid.cols, args.grid.rows) {
            bail!(
                "trajectory file uses a {}x{} grid, --grid says {}",
                grid.cols,
                grid.rows,
                args.grid
            );
        }
        let mut sum = vec![FlowField::zeros(h, w); args.frames];
        for spec in &specs {
            let control = spec.resolve(&grid)?;
            let path = interpolate(&control, args.frames)?;
            let flows = path_to_flows(&path, w, h, args.sigma, None)?;
            for (acc, flow) in sum.iter_mut().zip(&flows) {
                add_flows(acc, flow);
            }
        }
        sum
    } else {
        if args.frames < 1 {
            bail!("--frames must be at least 1, got {}", args.frames);
        }
        vec![FlowField::zeros(h, w); args.frames]
    };
    let frames = object_flows.len();

    let extrinsics = match &args.camera {
        Some(path) => {
            let poses = read_extrinsics(path)?;
            if poses.len() != frames {
                bail!(
                    "camera file has {} poses but the run has {frames} frames",
                    poses.len()
                );
            }
            poses
        }
        None => vec![Extrinsics::identity(); frames],
    };

    let unified = compose_unified_flow(&ComposeInput {
        depth,
        intrinsics: Intrinsics::default_for(w, h),
        object_flows,
        extrinsics,
    })?;
    pipeline::write_flow_outputs(&args.out, &unified)?;

    let mut meta = RunMetadata::new("compose");
    meta.set_parameter("frames", frames as u64);
    meta.set_parameter("grid", args.grid.to_string());
    meta.set_parameter("sigma", args.sigma);
    if let Some(scale) = args.depth_scale {
        meta.set_parameter("depth_scale", scale);
    }
    meta.record_input("image", &args.image)?;
    meta.record_input("depth", &args.depth)?;
    if let Some(traj) = &args.traj {
        meta.record_input("traj", traj)?;
    }
    if let Some(camera) = &args.camera {
        meta.record_input("camera", camera)?;
    }
    if let Some(dir) = &args.flow_dir {
        record_indexed_inputs(&mut meta, dir, "flow", "flo", frames)?;
    }
    meta.write_to(&args.out)?;
    Ok(())
}

#[derive(Serialize)]
struct AnchorRecord {
    position: (f64, f64),
    displacement: (f64, f64),
}

#[derive(Serialize)]
struct ReplacementRecord {
    frame: usize,
    choice: ReplacementChoice,
    mean_epe: Option<f64>,
}

fn run_decompose(args: DecomposeArgs) -> Result<()> {
    let real_flows = read_flow_dir(&args.flow_dir)?;
    let frames = real_flows.len();
    let (w, h) = (real_flows[0].width(), real_flows[0].height());
    check_flow_dims(&real_flows, w, h)?;

    let depth0 = read_depth(&args.depth, args.depth_scale)?;
    if (depth0.width(), depth0.height()) != (w, h) {
        bail!(
            "depth map is {}x{}, flow is {w}x{h}",
            depth0.width(),
            depth0.height()
        );
    }
    let depth_k = read_indexed(&args.depth_dir, "depth", "dpt", |p| Ok(read_depth(p, None)?))?;
    if depth_k.len() != frames {
        bail!(
            "depth dir has {} frames but the flow dir has {frames}",
            depth_k.len()
        );
    }
    let e_hat = read_extrinsics(&args.camera)?;
    if e_hat.len() != frames {
        bail!(
            "camera file has {} poses but the flow dir has {frames} frames",
            e_hat.len()
        );
    }
    let unified = args
        .unified_dir
        .as_ref()
        .map(|dir| {
            let flows = read_flow_dir(dir)?;
            if flows.len() != frames {
                bail!(
                    "unified dir has {} flows but the flow dir has {frames}",
                    flows.len()
                );
            }
            check_flow_dims(&flows, w, h)?;
            Ok(flows)
        })
        .transpose()?;

    let intrinsics = Intrinsics::default_for(w, h);
    let policy = ReplacementPolicy { tau: args.tau };
    std::fs::create_dir_all(&args.out)?;
    let mut replacements = Vec::new();
    for (k, real_flow) in real_flows.iter().enumerate() {
        let object = remove_camera_flow(&DecomposeInput {
            real_flow: real_flow.clone(),
            depth0: depth0.clone(),
            depth_k: depth_k[k].clone(),
            e_hat: e_hat[k].clone(),
            intrinsics: intrinsics.clone(),
        })?;
        write_flo(&object, args.out.join(format!("object_{k:04}.flo")))?;
        let sparse = sparse_sample(&object, args.max_points, args.nms_radius)?;
        let records: Vec<AnchorRecord> = sparse
            .anchors
            .iter()
            .map(|&Anchor { position, displacement }| AnchorRecord {
                position,
                displacement,
            })
            .collect();
        write_pretty_json(&args.out.join(format!("anchors_{k:04}.json")), &records)?;
        if let Some(unified) = &unified {
            let (choice, mean_epe) = replacement_decision(&unified[k], real_flow, &policy)?;
            replacements.push(ReplacementRecord {
                frame: k,
                choice,
                mean_epe,
            });
        }
    }
    if !replacements.is_empty() {
        write_pretty_json(&args.out.join("replacement.json"), &replacements)?;
    }

    let mut meta = RunMetadata::new("decompose");
    meta.set_parameter("frames", frames as u64);
    meta.set_parameter("max_points", args.max_points as u64);
    meta.set_parameter("nms_radius", args.nms_radius);
    meta.set_parameter("tau", args.tau);
    if let Some(scale) = args.depth_scale {
        meta.set_parameter("depth_scale", scale);
    }
    meta.record_input("depth", &args.depth)?;
    meta.record_input("camera", &args.camera)?;
    record_indexed_inputs(&mut meta, &args.flow_dir, "flow", "flo", frames)?;
    record_indexed_inputs(&mut meta, &args.depth_dir, "depth", "dpt", frames)?;
    if let Some(dir) = &args.unified_dir {
        record_indexed_inputs(&mut meta, dir, "unified/flow", "flo", frames)?;
    }
    meta.write_to(&args.out)?;
    Ok(())
}

fn run_preview(args: PreviewArgs) -> Result<()> {
    let src = image::open(&args.image)
        .with_context(|| format!("reading {}", args.image.display()))?
        .to_rgb8();
    let (w, h) = (src.width() as usize, src.height() as usize);
    let flows = read_flow_dir(&args.flow_dir)?;
    check_flow_dims(&flows, w, h)?;
    let frames = flows.len();

    let camera_depth = if args.flow_dir.join("depth_0000.dpt").exists() {
        let depths = read_indexed(&args.flow_dir, "depth", "dpt", |p| Ok(read_depth(p, None)?))?;
        if depths.len() != frames {
            bail!(
                "flow dir has {frames} flows but {} depth proxies",
                depths.len()
            );
        }
        depths
            .into_iter()
            .map(|d| {
                if (d.width(), d.height()) != (w, h) {
                    bail!("depth proxy is {}x{}, image is {w}x{h}", d.width(), d.height());
                }
                Ok(d.values().clone())
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        eprintln!(
            "warning: no depth_0000.dpt beside the flow maps; overlaps resolve in scan order \
             instead of by depth"
        );
        vec![Array2::zeros((h, w)); frames]
    };

    let unified = UnifiedFlow {
        oob: flows
            .iter()
            .map(|f| Array2::from_elem((f.height(), f.width()), false))
            .collect(),
        camera_depth,
        flows,
    };
    let rendered = render_sequence(&src, &unified, args.fill_holes)?;
    pipeline::write_frame_outputs(&args.out, &rendered)?;
    if args.gif {
        let mut bytes = Vec::new();
        encode_gif(&rendered, 100, &mut bytes)?;
        atomic_write(args.out.join("preview.gif"), &bytes)?;
    }

    let mut meta = RunMetadata::new("preview");
    meta.set_parameter("frames", frames as u64);
    meta.set_parameter("fill_holes", args.fill_holes);
    meta.set_parameter("gif", args.gif);
    meta.record_input("image", &args.image)?;
    record_indexed_inputs(&mut meta, &args.flow_dir, "flow", "flo", frames)?;
    meta.write_to(&args.out)?;
    Ok(())
}

fn run_traj_parse(args: TrajParseArgs) -> Result<()> {
    let grid = GridSpec::new(args.grid.cols, args.grid.rows, args.size.cols, args.size.rows)?;
    let spec = parse_set_points(&args.call)?;
    spec.validate_for(&grid)?;
    spec.resolve(&grid)?;
    let file = TrajectoryFile::new(&grid, std::slice::from_ref(&spec));
    print_stdout(&serde_json::to_string_pretty(&file)?)
}

/// Print a line to stdout, treating a closed pipe as normal termination.
fn print_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout(), "{text}") {
        Err(err) if err.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn run_agent(args: AgentRunArgs) -> Result<()> {
    let backend = match &args.backend {
        Some(descriptor) => backend_from_descriptor(descriptor)?,
        None => backend_from_descriptor(
            &std::env::var(crate::agent::backend::ENV_ENDPOINT).map_err(|_| {
                anyhow::anyhow!(
                    "no --backend given and {} is unset",
                    crate::agent::backend::ENV_ENDPOINT
                )
            })?,
        )?,
    };
    let config = PipelineConfig {
        image_path: args.image,
        depth_path: args.depth,
        depth_scale: args.depth_scale,
        prompt: args.prompt,
        mask_path: args.mask,
        start: args.start.map(|p| (p.x, p.y)),
        out_dir: args.out,
        frames: args.frames,
        grid_cols: args.grid.cols,
        grid_rows: args.grid.rows,
        sigma: args.sigma,
        rethink: args.rethink,
        fill_holes: args.fill_holes,
        gif: args.gif,
    };
    pipeline::run(&config, backend, AgentConfig::default())?;
    Ok(())
}

fn record_indexed_inputs(
    meta: &mut RunMetadata,
    dir: &Path,
    stem: &str,
    ext: &str,
    frames: usize,
) -> Result<()> {
    for k in 0..frames {
        let name = format!("{}_{k:04}.{ext}", stem.rsplit('/').next().unwrap_or(stem));
        meta.record_input(&format!("{stem}_{k:04}"), dir.join(name))?;
    }
    Ok(())
}

fn write_pretty_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut body = serde_json::to_vec_pretty(value)?;
    body.push(b'\n');
    atomic_write(path, &body)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_arg_parses_and_round_trips() {
        let grid: GridArg = "20x10".parse().unwrap();
        assert_eq!((grid.cols, grid.rows), (20, 10));
        assert_eq!(grid.to_string(), "20x10");
        assert!("20".parse::<GridArg>().is_err());
        assert!("ax10".parse::<GridArg>().is_err());
    }

    #[test]
    fn point_arg_parses_floats() {
        let p: PointArg = "12.5,34".parse().unwrap();
        assert_eq!((p.x, p.y), (12.5, 34.0));
        assert!("12.5".parse::<PointArg>().is_err());
        assert!("nan,2".parse::<PointArg>().is_err());
    }

    #[test]
    fn cli_parses_the_compose_surface() {
        let cli = Cli::try_parse_from([
            "motionfield",
            "compose",
            "--image",
            "i.png",
            "--depth",
            "d.dpt",
            "--traj",
            "t.json",
            "--out",
            "out",
        ])
        .unwrap();
        let Command::Compose(args) = cli.command else {
            panic!("expected compose");
        };
        assert_eq!(args.frames, 24);
        assert_eq!((args.grid.cols, args.grid.rows), (20, 10));
        assert_eq!(args.sigma, 20.0);
    }

    #[test]
    fn traj_and_flow_dir_conflict() {
        let err = Cli::try_parse_from([
            "motionfield",
            "compose",
            "--image",
            "i.png",
            "--depth",
            "d.dpt",
            "--traj",
            "t.json",
            "--flow-dir",
            "flows",
            "--out",
            "out",
        ])
        .unwrap_err();
        assert_eq!(err.kind(), clap::error::ErrorKind::ArgumentConflict);
    }

    #[test]
    fn missing_depth_is_a_usage_error() {
        let err = Cli::try_parse_from([
            "motionfield",
            "compose",
            "--image",
            "i.png",
            "--out",
            "out",
        ])
        .unwrap_err();
        assert_eq!(
            err.kind(),
            clap::error::ErrorKind::MissingRequiredArgument
        );
    }
}

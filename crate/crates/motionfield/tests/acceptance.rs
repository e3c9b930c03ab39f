//! The acceptance gate: nine checks, one test each, every tolerance pinned
//! in code. Each test prints a single `ACCEPTANCE PASS [k/9]` line with its
//! measured numbers when it holds.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{brute_force_center, PlanarScene};
use motionfield::agent::action::{parse_reply, ParsedAction};
use motionfield::camera_path::{concat_segments, generate_extrinsics, CameraMotionSpec, MotionType};
use motionfield::flow_compose::{compose_unified_flow, ComposeInput};
use motionfield::flow_decompose::{remove_camera_flow, DecomposeInput};
use motionfield::geometry::{
    project_point, unproject_pixel, DepthMap, Extrinsics, FlowField, Intrinsics,
};
use motionfield::io::depth::write_dpt1;
use motionfield::io::flo::{read_flo_bytes, write_flo_bytes, FloError};
use motionfield::io::pose::{format_extrinsics, parse_extrinsics_text, PoseError};
use motionfield::trajectory::{grid_point_to_pixel, parse_set_points, GridPoint, GridSpec, Subarea};
use motionfield::warp::forward_warp;
use nalgebra::{Matrix3, Rotation3, Vector3};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assert_runtime(name: &str, elapsed: Duration, limit: Duration) {
    assert!(
        elapsed < limit,
        "{name} took {elapsed:?}, limit {limit:?}"
    );
}

#[test]
fn criterion_1_geometry_round_trip() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let k = Intrinsics::default_for(640, 480);

    let mut max_pixel_err: f64 = 0.0;
    for _ in 0..10_000 {
        let u = rng.gen_range(0.0..640.0);
        let v = rng.gen_range(0.0..480.0);
        let d = rng.gen_range(0.1..100.0);
        let point = unproject_pixel(u, v, d, &k);
        let (u2, v2) = project_point(&point, &k).expect("positive depth projects");
        max_pixel_err = max_pixel_err.max((u2 - u).abs()).max((v2 - v).abs());
    }
    assert!(max_pixel_err < 1e-9, "projection round trip err {max_pixel_err}");

    let mut max_point_err: f64 = 0.0;
    for _ in 0..10_000 {
        let rot = Rotation3::from_euler_angles(
            rng.gen_range(-3.1..3.1),
            rng.gen_range(-3.1..3.1),
            rng.gen_range(-3.1..3.1),
        );
        let t = Vector3::new(
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        );
        let pose = Extrinsics::new(*rot.matrix(), t).unwrap();
        let x = Vector3::new(
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
        );
        let back = pose.inverse().apply(&pose.apply(&x));
        max_point_err = max_point_err.max((back - x).norm());
    }
    assert!(max_point_err < 1e-9, "transform round trip err {max_point_err}");

    let elapsed = started.elapsed();
    assert_runtime("geometry round trip", elapsed, Duration::from_secs(1));
    println!(
        "ACCEPTANCE PASS [1/9] geometry round trip: pixel err {max_pixel_err:.2e}, \
         point err {max_point_err:.2e}, {} ms",
        elapsed.as_millis()
    );
}

#[test]
fn criterion_2_analytic_rigid_flow() {
    let started = Instant::now();

    // Zoom: the camera advances 1 unit toward a plane 10 units away with
    // fx = 100; flow at pixel offset r from the principal point is
    // r * tz / (d - tz), so offset 10 gives 10/9.
    let k = Intrinsics::new(100.0, 100.0, 32.0, 32.0, 64, 64).unwrap();
    let zoom = Extrinsics::new(Matrix3::identity(), Vector3::new(0.0, 0.0, -1.0)).unwrap();
    let unified = compose_unified_flow(&ComposeInput {
        depth: DepthMap::constant(64, 64, 10.0),
        intrinsics: k,
        object_flows: vec![FlowField::zeros(64, 64)],
        extrinsics: vec![zoom],
    })
    .unwrap();
    let mut zoom_err: f64 = 0.0;
    for (col, expected_du) in [(42usize, 10.0 / 9.0), (22usize, -(10.0 / 9.0))] {
        let (du, dv) = unified.flows[0].get(32, col);
        zoom_err = zoom_err.max((du - expected_du).abs()).max(dv.abs());
    }
    assert!(zoom_err < 1e-6, "zoom oracle err {zoom_err}");

    // Pan: a lateral shift s against a constant-depth plane moves every
    // pixel by -fx * s / d.
    let k = Intrinsics::default_for(256, 256);
    let s = 0.5;
    let d = 10.0;
    let pan = Extrinsics::new(Matrix3::identity(), Vector3::new(-s, 0.0, 0.0)).unwrap();
    let unified = compose_unified_flow(&ComposeInput {
        depth: DepthMap::constant(256, 256, d),
        intrinsics: k.clone(),
        object_flows: vec![FlowField::zeros(256, 256)],
        extrinsics: vec![pan],
    })
    .unwrap();
    let expected_du = -k.fx * s / d;
    let mut pan_err: f64 = 0.0;
    for row in 0..256 {
        for col in 0..256 {
            let (du, dv) = unified.flows[0].get(row, col);
            pan_err = pan_err.max((du - expected_du).abs()).max(dv.abs());
        }
    }
    assert!(pan_err < 1e-6, "pan oracle err {pan_err}");

    let elapsed = started.elapsed();
    assert_runtime("analytic rigid flow", elapsed, Duration::from_secs(5));
    println!(
        "ACCEPTANCE PASS [2/9] analytic rigid flow: zoom err {zoom_err:.2e}, \
         pan err {pan_err:.2e}, {} ms",
        elapsed.as_millis()
    );
}

#[test]
fn criterion_3_object_only_superposition() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (w, h) = (32usize, 32usize);
    let k = Intrinsics::default_for(w, h);

    let mut max_err: f64 = 0.0;
    for _ in 0..20 {
        let mut depth_values = Array2::zeros((h, w));
        for value in depth_values.iter_mut() {
            *value = rng.gen_range(2.0..10.0);
        }
        let depth = DepthMap::new(depth_values);
        let object_flows: Vec<FlowField> = (0..2)
            .map(|_| {
                let mut flow = FlowField::zeros(h, w);
                for row in 0..h {
                    for col in 0..w {
                        flow.set(
                            row,
                            col,
                            rng.gen_range(-3.0..3.0),
                            rng.gen_range(-3.0..3.0),
                        );
                    }
                }
                flow
            })
            .collect();
        let unified = compose_unified_flow(&ComposeInput {
            depth,
            intrinsics: k.clone(),
            object_flows: object_flows.clone(),
            extrinsics: vec![Extrinsics::identity(); 2],
        })
        .unwrap();
        for (frame, f_obj) in object_flows.iter().enumerate() {
            for row in 0..h {
                for col in 0..w {
                    assert!(unified.flows[frame].is_valid(row, col));
                    let (du, dv) = unified.flows[frame].get(row, col);
                    let (eu, ev) = f_obj.get(row, col);
                    max_err = max_err.max((du - eu).abs()).max((dv - ev).abs());
                }
            }
        }
    }
    assert!(max_err < 1e-6, "superposition err {max_err}");

    let elapsed = started.elapsed();
    println!(
        "ACCEPTANCE PASS [3/9] object-only superposition: max err {max_err:.2e} \
         over 20 trials, {} ms",
        elapsed.as_millis()
    );
}

fn scene_poses(scene: &PlanarScene, centers: Vector3<f64>, angles_deg: Vector3<f64>) -> Vec<Extrinsics> {
    let _ = scene;
    (0..4)
        .map(|k| {
            let p = k as f64 / 3.0;
            let center = centers * p;
            let angles = angles_deg * (std::f64::consts::PI / 180.0) * p;
            let cam = Rotation3::from_euler_angles(angles.x, angles.y, angles.z);
            let r = cam.matrix().transpose();
            Extrinsics::new(r, -(r * center)).unwrap()
        })
        .collect()
}

#[test]
fn criterion_4_compose_decompose_round_trip() {
    let started = Instant::now();
    let scene = PlanarScene {
        intrinsics: Intrinsics::default_for(192, 192),
        d_bg: 8.0,
        d_fg: 5.0,
        rect: (-0.26, 0.26, -0.21, 0.31),
        du_slope: 1.2,
        dv_slope: -0.9,
    };
    let (w, h) = (scene.width(), scene.height());
    let identity = Extrinsics::identity();
    let depth0 = scene.depth_map(&identity, 0);
    let surface0 = scene.surface_map(&identity, 0);
    let variants = [
        ("translation", Vector3::new(0.05, -0.03, 0.06), Vector3::zeros()),
        ("rotation", Vector3::zeros(), Vector3::new(0.3, 0.6, 0.2)),
        ("mixed", Vector3::new(0.04, 0.03, 0.05), Vector3::new(0.15, 0.3, 0.1)),
    ];

    let mut max_epe: f64 = 0.0;
    let mut min_fraction: f64 = 1.0;
    for (name, centers, angles) in variants {
        let poses = scene_poses(&scene, centers, angles);
        let object_flows: Vec<FlowField> = (0..4).map(|k| scene.object_flow(k)).collect();
        let unified = compose_unified_flow(&ComposeInput {
            depth: depth0.clone(),
            intrinsics: scene.intrinsics.clone(),
            object_flows: object_flows.clone(),
            extrinsics: poses.clone(),
        })
        .unwrap();

        let mut qualifying = 0usize;
        let mut total = 0usize;
        for k in 0..4 {
            let depth_k = scene.depth_map(&poses[k], k);
            let surface_k = scene.surface_map(&poses[k], k);
            let recovered = remove_camera_flow(&DecomposeInput {
                real_flow: unified.flows[k].clone(),
                depth0: depth0.clone(),
                depth_k,
                e_hat: poses[k].clone(),
                intrinsics: scene.intrinsics.clone(),
            })
            .unwrap();
            for row in 0..h {
                for col in 0..w {
                    total += 1;
                    if !unified.flows[k].is_valid(row, col) || unified.oob[k][[row, col]] {
                        continue;
                    }
                    let (du, dv) = unified.flows[k].get(row, col);
                    let (qu, qv) = (col as f64 + du, row as f64 + dv);
                    if !(qu >= 0.0 && qv >= 0.0 && qu <= (w - 1) as f64 && qv <= (h - 1) as f64) {
                        continue;
                    }
                    // The decomposition samples frame-k depth bilinearly at
                    // the flow target; the recovery is only meaningful when
                    // every sample under that footprint belongs to the same
                    // surface this pixel shows in frame 0.
                    let (u0, v0) = (qu.floor() as usize, qv.floor() as usize);
                    let u1 = if qu - u0 as f64 > 0.0 { u0 + 1 } else { u0 };
                    let v1 = if qv - v0 as f64 > 0.0 { v0 + 1 } else { v0 };
                    let same_surface = [(v0, u0), (v0, u1), (v1, u0), (v1, u1)]
                        .into_iter()
                        .all(|(r, c)| surface_k[[r, c]] == surface0[[row, col]]);
                    if !same_surface {
                        continue;
                    }
                    qualifying += 1;
                    assert!(recovered.is_valid(row, col), "{name} frame {k} ({row},{col})");
                    let (gu, gv) = object_flows[k].get(row, col);
                    let (ru, rv) = recovered.get(row, col);
                    let epe = ((ru - gu).powi(2) + (rv - gv).powi(2)).sqrt();
                    max_epe = max_epe.max(epe);
                }
            }
        }
        let fraction = qualifying as f64 / total as f64;
        min_fraction = min_fraction.min(fraction);
        assert!(
            fraction >= 0.95,
            "{name}: only {:.1}% of pixels qualify",
            fraction * 100.0
        );
    }
    assert!(max_epe < 1e-3, "max EPE {max_epe}");

    let elapsed = started.elapsed();
    assert_runtime("compose/decompose round trip", elapsed, Duration::from_secs(30));
    println!(
        "ACCEPTANCE PASS [4/9] compose/decompose round trip: max EPE {max_epe:.2e}, \
         worst qualifying fraction {:.1}%, {} ms",
        min_fraction * 100.0,
        elapsed.as_millis()
    );
}

#[test]
fn criterion_5_grid_dsl() {
    let started = Instant::now();
    let (cols, rows, width, height) = (20usize, 10usize, 2560usize, 1600usize);
    let grid = GridSpec::new(cols, rows, width, height).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(505);

    let mut compared = 0usize;
    for _ in 0..200 {
        let area = rng.gen_range(0..cols * rows);
        for subarea in Subarea::ALL {
            let produced = grid_point_to_pixel(GridPoint { area, subarea }, &grid).unwrap();
            let expected = brute_force_center(cols, rows, width, height, area, subarea.as_str());
            assert_eq!(
                produced, expected,
                "area {area}, subarea {}",
                subarea.as_str()
            );
            compared += 1;
        }
    }

    let literal = "Set_2_Points (start: 143, top-right; end: 33, bottom-right)";
    let spec = parse_set_points(literal).unwrap();
    spec.validate_for(&grid).unwrap();
    let pixels = spec.resolve(&grid).unwrap();
    assert_eq!(pixels.len(), 2);

    let malformed: [&str; 50] = [
        "Set_2_Points (start: 143, top-right)",
        "Set_1_Points (start: 9, center; end: 3, center)",
        "Set_3_Points (start: 1, center; end: 2, center)",
        "Set_3_Points (start: 1, center; mid_1: 2, center; mid_2: 3, center; end: 4, center)",
        "Set_4_Points (start: 1, center; mid_1: 2, center; end: 3, center)",
        "Set_2_Points (start: 1, center; mid_1: 2, center; end: 3, center)",
        "Set_1_Points ()",
        "Set_4_Points ()",
        "Set_5_Points (start: 1, center)",
        "Set_0_Points ()",
        "Move_2_Points (start: 1, center; end: 2, center)",
        "set_2_points (start: 1, center; end: 2, center)",
        "Set_Two_Points (start: 1, center; end: 2, center)",
        "Set__Points (start: 1, center)",
        "Set_Points (start: 1, center)",
        "Set_2_Points start: 1, center; end: 2, center",
        "Set_2_Points (start: 1, center; end: 2, center",
        "Set_2_Points start: 1, center; end: 2, center)",
        "Set_2_Points (start: 1, center; end: 2, center) trailing",
        "Set_2_Points ()",
        "Set_2_Points (;)",
        "Set_2_Points (start 1, center; end: 2, center)",
        "Set_2_Points (start: 1 center; end: 2, center)",
        "Set_2_Points (start: 1, center end: 2, center)",
        "Set_2_Points (start: 1, middle; end: 2, center)",
        "Set_2_Points (start: 1, centre; end: 2, center)",
        "Set_2_Points (start: 1, top-middle; end: 2, center)",
        "Set_2_Points (start: 1, Center; end: 2, center)",
        "Set_2_Points (start: 1, ; end: 2, center)",
        "Set_2_Points (start: 1; end: 2, center)",
        "Set_1_Points (start: 1, center-left)",
        "Set_1_Points (start: 1, bottomright)",
        "Set_2_Points (start: one, center; end: 2, center)",
        "Set_2_Points (start: -3, center; end: 2, center)",
        "Set_2_Points (start: 1.5, center; end: 2, center)",
        "Set_2_Points (start: , center; end: 2, center)",
        "Set_2_Points (start: 0x1F, center; end: 2, center)",
        "Set_1_Points (start: 200, center)",
        "Set_1_Points (start: 99999999999999999999, center)",
        "Set_2_Points (begin: 1, center; end: 2, center)",
        "Set_2_Points (end: 1, center; start: 2, center)",
        "Set_2_Points (start: 1, center; stop: 2, center)",
        "Set_3_Points (start: 1, center; mid_2: 2, center; end: 3, center)",
        "Set_4_Points (start: 1, center; mid_1: 2, center; mid_1: 3, center; end: 4, center)",
        "Set_4_Points (start: 1, center; mid_2: 2, center; mid_1: 3, center; end: 4, center)",
        "Set_2_Points (start: 1, center; end: 2, center; extra: 3, center)",
        "Set_2_Points (Start: 1, center; end: 2, center)",
        "Set_2_Points (start: 1, center, extra; end: 2, center)",
        "Set_2_Points",
        "",
    ];
    for text in malformed {
        let accepted = parse_set_points(text)
            .and_then(|spec| {
                spec.validate_for(&grid)?;
                spec.resolve(&grid)
            })
            .is_ok();
        assert!(!accepted, "malformed call accepted: {text:?}");
    }

    let elapsed = started.elapsed();
    println!(
        "ACCEPTANCE PASS [5/9] grid DSL: {compared} centers exact, literal call ok, \
         {} malformed rejected, {} ms",
        malformed.len(),
        elapsed.as_millis()
    );
}

#[test]
fn criterion_6_pacing_and_paths() {
    let started = Instant::now();
    let d_max = 12.5;
    let translation = (0.4, -0.2, 0.3);
    let frames = 6usize;

    let mut max_pace_err: f64 = 0.0;
    for motion_type in [MotionType::Uniform, MotionType::Increment, MotionType::Decrement] {
        let spec = CameraMotionSpec {
            x_translation: translation.0,
            y_translation: translation.1,
            z_translation: translation.2,
            x_rotation: 0,
            y_rotation: 0,
            z_rotation: 0,
            motion_type,
        };
        let poses = generate_extrinsics(&spec, d_max, frames).unwrap();
        for (k, pose) in poses.iter().enumerate() {
            let s = k as f64 / (frames - 1) as f64;
            let p = match motion_type {
                MotionType::Uniform => s,
                MotionType::Increment => s * s,
                MotionType::Decrement => 1.0 - (1.0 - s) * (1.0 - s),
            };
            let center = pose.camera_center();
            let expected = Vector3::new(
                d_max * translation.0 * p,
                d_max * translation.1 * p,
                d_max * translation.2 * p,
            );
            max_pace_err = max_pace_err.max((center - expected).amax());
        }
    }
    assert!(max_pace_err < 1e-12, "pacing closed-form err {max_pace_err}");

    let zoom_in = CameraMotionSpec {
        x_translation: 0.0,
        y_translation: 0.0,
        z_translation: 0.5,
        x_rotation: 0,
        y_rotation: 0,
        z_rotation: 0,
        motion_type: MotionType::Uniform,
    };
    let mut zoom_out = zoom_in.clone();
    zoom_out.z_translation = -0.5;
    let path = concat_segments(&[(zoom_in, 5), (zoom_out, 5)], 10.0).unwrap();
    assert_eq!(path.len(), 9);
    assert!(
        path.last().unwrap().is_identity(1e-9),
        "symmetric zoom concat does not return to identity"
    );

    let full = CameraMotionSpec {
        x_translation: 0.3,
        y_translation: -0.4,
        z_translation: 0.2,
        x_rotation: 15,
        y_rotation: 25,
        z_rotation: 35,
        motion_type: MotionType::Increment,
    };
    let poses = generate_extrinsics(&full, 7.0, 9).unwrap();
    let endpoint = poses.last().unwrap();
    let expected_center = Vector3::new(7.0 * 0.3, 7.0 * -0.4, 7.0 * 0.2);
    let center_err = (endpoint.camera_center() - expected_center).amax();
    let expected_rotation = Rotation3::from_euler_angles(
        15f64.to_radians(),
        25f64.to_radians(),
        35f64.to_radians(),
    )
    .matrix()
    .transpose();
    let rotation_err = (endpoint.rotation() - expected_rotation).amax();
    assert!(center_err < 1e-9, "endpoint center err {center_err}");
    assert!(rotation_err < 1e-9, "endpoint rotation err {rotation_err}");

    let elapsed = started.elapsed();
    println!(
        "ACCEPTANCE PASS [6/9] pacing and paths: pace err {max_pace_err:.2e}, \
         concat identity ok, endpoint err {:.2e}, {} ms",
        center_err.max(rotation_err),
        elapsed.as_millis()
    );
}

#[test]
fn criterion_7_warp_identity_and_shift() {
    let started = Instant::now();
    let (w, h) = (48u32, 48u32);
    let src = image::RgbImage::from_fn(w, h, |x, y| {
        image::Rgb([(x * 5) as u8, (y * 5) as u8, ((x + y) * 3) as u8])
    });
    let flat = Array2::zeros((h as usize, w as usize));

    let identity = forward_warp(&src, &FlowField::zeros(h as usize, w as usize), &flat).unwrap();
    assert_eq!(identity.rgb, src, "zero flow must reproduce the source");
    assert!(identity.hole_mask.iter().all(|&hole| !hole));

    let mut shift = FlowField::zeros(h as usize, w as usize);
    for row in 0..h as usize {
        for col in 0..w as usize {
            shift.set(row, col, 5.0, 0.0);
        }
    }
    let shifted = forward_warp(&src, &shift, &flat).unwrap();
    for y in 0..h {
        for x in 0..w {
            let hole = shifted.hole_mask[[y as usize, x as usize]];
            if x < 5 {
                assert!(hole, "column {x} should be a hole");
            } else {
                assert!(!hole, "column {x} should be filled");
                assert_eq!(
                    shifted.rgb.get_pixel(x, y),
                    src.get_pixel(x - 5, y),
                    "shift oracle at ({x},{y})"
                );
            }
        }
    }

    let elapsed = started.elapsed();
    println!(
        "ACCEPTANCE PASS [7/9] warp identity and shift: bit-exact identity, \
         (5,0) oracle ok, {} ms",
        elapsed.as_millis()
    );
}

#[test]
fn criterion_8_file_round_trips_and_corpus() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(808);

    let mut flow = FlowField::zeros(7, 5);
    for row in 0..7 {
        for col in 0..5 {
            flow.set(
                row,
                col,
                rng.gen_range(-40.0f32..40.0) as f64,
                rng.gen_range(-40.0f32..40.0) as f64,
            );
        }
    }
    flow.invalidate(2, 3);
    flow.invalidate(6, 0);
    let bytes = write_flo_bytes(&flow);
    let reread = read_flo_bytes(&bytes).unwrap();
    assert_eq!(
        write_flo_bytes(&reread),
        bytes,
        "write∘read must be byte-identical"
    );
    for row in 0..7 {
        for col in 0..5 {
            assert_eq!(reread.is_valid(row, col), flow.is_valid(row, col));
            if flow.is_valid(row, col) {
                assert_eq!(reread.get(row, col), flow.get(row, col));
            }
        }
    }

    let spec = CameraMotionSpec {
        x_translation: 0.37,
        y_translation: -0.21,
        z_translation: 0.55,
        x_rotation: 12,
        y_rotation: 340,
        z_rotation: 7,
        motion_type: MotionType::Decrement,
    };
    let poses = generate_extrinsics(&spec, 9.0, 8).unwrap();
    let reparsed = parse_extrinsics_text(&format_extrinsics(&poses)).unwrap();
    assert_eq!(reparsed.len(), poses.len());
    let mut pose_err: f64 = 0.0;
    for (a, b) in poses.iter().zip(&reparsed) {
        pose_err = pose_err.max((a.rotation() - b.rotation()).amax());
        pose_err = pose_err.max((a.translation() - b.translation()).amax());
    }
    assert!(pose_err < 1e-9, "extrinsics round trip err {pose_err}");

    // Ten malformed files, each with its own typed rejection.
    let flo_bytes = |magic: f32, w: i32, h: i32, samples: usize| -> Vec<u8> {
        let mut bytes = magic.to_le_bytes().to_vec();
        bytes.extend_from_slice(&w.to_le_bytes());
        bytes.extend_from_slice(&h.to_le_bytes());
        bytes.extend(std::iter::repeat_n(0u8, samples * 4));
        bytes
    };
    let mut corpus = 0usize;

    let err = read_flo_bytes(&flo_bytes(0.0, 2, 2, 8)).unwrap_err();
    assert!(matches!(err, FloError::BadMagic { .. }), "{err:?}");
    corpus += 1;

    let err = read_flo_bytes(&[0x50, 0x49, 0x45, 0x48, 0x00, 0x00]).unwrap_err();
    assert!(
        matches!(err, FloError::Truncated { expected: 12, got: 6 }),
        "{err:?}"
    );
    corpus += 1;

    let err = read_flo_bytes(&flo_bytes(202021.25, 4, 4, 10)).unwrap_err();
    assert!(matches!(err, FloError::Truncated { .. }), "{err:?}");
    corpus += 1;

    let err = read_flo_bytes(&flo_bytes(202021.25, 2, 2, 9)).unwrap_err();
    assert!(matches!(err, FloError::TrailingData(4)), "{err:?}");
    corpus += 1;

    let err = read_flo_bytes(&flo_bytes(202021.25, -1, 2, 8)).unwrap_err();
    assert!(matches!(err, FloError::BadDimensions { .. }), "{err:?}");
    corpus += 1;

    let err = parse_extrinsics_text("0 1 0 0 0 0 1 0 0 0 0 1").unwrap_err();
    assert!(matches!(err, PoseError::Malformed { .. }), "{err:?}");
    corpus += 1;

    let err =
        parse_extrinsics_text("0 1 0 0 0 0 1 0 0 0 0 badger 0").unwrap_err();
    assert!(matches!(err, PoseError::Malformed { .. }), "{err:?}");
    corpus += 1;

    let err =
        parse_extrinsics_text("0 1.1 0 0 0 0 1 0 0 0 0 1 0").unwrap_err();
    assert!(matches!(err, PoseError::Geometry { .. }), "{err:?}");
    corpus += 1;

    let err =
        parse_extrinsics_text("0 -1 0 0 0 0 1 0 0 0 0 1 0").unwrap_err();
    assert!(matches!(err, PoseError::Geometry { .. }), "{err:?}");
    corpus += 1;

    let err =
        parse_extrinsics_text("1 1 0 0 0 0 1 0 0 0 0 1 0").unwrap_err();
    assert!(matches!(err, PoseError::FrameIndexMismatch { .. }), "{err:?}");
    corpus += 1;

    assert_eq!(corpus, 10);

    let elapsed = started.elapsed();
    println!(
        "ACCEPTANCE PASS [8/9] file round trips: flo bytes identical, \
         extrinsics pose err {pose_err:.2e}, {corpus} malformed files rejected, {} ms",
        elapsed.as_millis()
    );
}

fn collect_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn camera_reply(z_translation: f64) -> String {
    format!(
        "Observation: the scene sits still while the viewer drifts.\n\
         Thought: a forward push matches the request.\n\
         Action: Set_Camera_Motion (x_translation: 0.0, y_translation: 0.0, \
         z_translation: {z_translation}, x_rotation: 0, y_rotation: 0, \
         z_rotation: 0, motion_type: uniform)\n\
         Summary: push straight in."
    )
}

fn random_words(rng: &mut ChaCha8Rng, count: usize) -> String {
    const VOCAB: [&str; 12] = [
        "camera", "slide", "zoom", "orbit", "start", "end", "points",
        "motion", "left", "upward", "scene", "frame",
    ];
    (0..count)
        .map(|_| VOCAB[rng.gen_range(0..VOCAB.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_reply(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..4u32) {
        0 => {
            let len = rng.gen_range(0..200);
            let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            String::from_utf8_lossy(&bytes).into_owned()
        }
        1 => {
            let count = rng.gen_range(1..40);
            random_words(rng, count)
        }
        2 => {
            let value = |rng: &mut ChaCha8Rng| match rng.gen_range(0..8u32) {
                0..=3 => format!("{:.2}", rng.gen_range(-1.2..1.2)),
                4 => ["1.0", "-1.0", "0.99", "-0.99"][rng.gen_range(0..4)].to_string(),
                5 | 6 => format!("{}", rng.gen_range(-2i32..3)),
                _ => random_words(rng, 1),
            };
            let rotation = |rng: &mut ChaCha8Rng| match rng.gen_range(0..4u32) {
                0..=2 => rng.gen_range(-40i64..420).to_string(),
                _ => ["0", "359", "360", "-1"][rng.gen_range(0..4)].to_string(),
            };
            let motion = ["uniform", "increment", "decrement", "bouncy", "fast", ""]
                [rng.gen_range(0..6)];
            format!(
                "Observation: o\nThought: t\nAction: Set_Camera_Motion (\
                 x_translation: {}, y_translation: {}, z_translation: {}, \
                 x_rotation: {}, y_rotation: {}, z_rotation: {}, \
                 motion_type: {})\nSummary: s",
                value(rng),
                value(rng),
                value(rng),
                rotation(rng),
                rotation(rng),
                rotation(rng),
                motion
            )
        }
        _ => {
            let count = rng.gen_range(0..6usize);
            let labels: &[&str] = match count {
                1 => &["start"],
                2 => &["start", "end"],
                3 => &["start", "mid", "end"],
                4 => &["start", "mid_1", "mid_2", "end"],
                _ => &["start", "mid_1", "mid_2", "mid_3", "end"],
            };
            let parts: Vec<String> = labels
                .iter()
                .take(count.max(1))
                .map(|label| {
                    let subarea = ["center", "top-left", "bottom", "middle", "Left"]
                        [rng.gen_range(0..5)];
                    format!("{label}: {}, {subarea}", rng.gen_range(0..260))
                })
                .collect();
            format!(
                "Observation: o\nThought: t\nAction: Set_{count}_Points ({})\nSummary: s",
                parts.join("; ")
            )
        }
    }
}

#[test]
fn criterion_9_agent_loop() {
    let started = Instant::now();
    let bin = env!("CARGO_BIN_EXE_motionfield");
    let dir = tempfile::tempdir().unwrap();

    let (w, h) = (64u32, 64u32);
    let image_path = dir.path().join("scene.png");
    image::RgbImage::from_fn(w, h, |x, y| {
        image::Rgb([(x * 4) as u8, (y * 4) as u8, 96])
    })
    .save(&image_path)
    .unwrap();
    let depth_path = dir.path().join("scene.dpt");
    write_dpt1(
        &DepthMap::constant(h as usize, w as usize, 5.0),
        &depth_path,
    )
    .unwrap();

    let script_path = dir.path().join("script.txt");
    let decompose_reply = "Object motion:\nCamera motion: push straight in.";
    fs::write(
        &script_path,
        format!(
            "{decompose_reply}\n---\n{}\n---\n{}",
            camera_reply(0.3),
            camera_reply(0.8)
        ),
    )
    .unwrap();

    let run_once = |out: &Path| {
        let status = Command::new(bin)
            .args([
                "agent",
                "run",
                "--image",
                image_path.to_str().unwrap(),
                "--depth",
                depth_path.to_str().unwrap(),
                "--prompt",
                "the camera pushes into the scene",
                "--backend",
                &format!("mock:{}", script_path.display()),
                "--rethink",
                "--frames",
                "24",
                "--gif",
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success(), "agent run failed");
    };
    let out_a = dir.path().join("run_a");
    let out_b = dir.path().join("run_b");
    run_once(&out_a);
    run_once(&out_b);

    let files_a = collect_files(&out_a);
    let files_b = collect_files(&out_b);
    assert_eq!(
        files_a.keys().collect::<Vec<_>>(),
        files_b.keys().collect::<Vec<_>>(),
        "the two runs wrote different file sets"
    );
    let mut compared_bytes = 0usize;
    for (rel, bytes) in &files_a {
        assert_eq!(
            Some(bytes),
            files_b.get(rel),
            "{} differs between runs",
            rel.display()
        );
        compared_bytes += bytes.len();
    }

    let actions: serde_json::Value =
        serde_json::from_slice(&files_a[&PathBuf::from("actions.json")]).unwrap();
    let rethink = &actions["rethink"];
    let before = &rethink["action_before"]["action"];
    let after = &rethink["action_after"]["action"];
    assert_eq!(before["z_translation"], serde_json::json!(0.3));
    assert_eq!(after["z_translation"], serde_json::json!(0.8));
    for field in [
        "x_translation",
        "y_translation",
        "x_rotation",
        "y_rotation",
        "z_rotation",
        "motion_type",
    ] {
        assert_eq!(
            before[field], after[field],
            "rethink changed unrelated field {field}"
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
    let mut accepted_cameras = 0usize;
    let mut accepted_trajectories = 0usize;
    for _ in 0..10_000 {
        let reply = random_reply(&mut rng);
        if let Ok(parsed) = parse_reply(&reply) {
            match parsed.action.action {
                ParsedAction::Camera(spec) => {
                    accepted_cameras += 1;
                    spec.validate().unwrap();
                    for value in [spec.x_translation, spec.y_translation, spec.z_translation] {
                        assert!(
                            value > -1.0 && value < 1.0,
                            "out-of-range translation accepted: {value} in {reply:?}"
                        );
                    }
                    for value in [spec.x_rotation, spec.y_rotation, spec.z_rotation] {
                        assert!(
                            (0..360).contains(&value),
                            "out-of-range rotation accepted: {value} in {reply:?}"
                        );
                    }
                }
                ParsedAction::Trajectory(spec) => {
                    accepted_trajectories += 1;
                    assert!(
                        (1..=4).contains(&spec.points.len()),
                        "bad point count in {reply:?}"
                    );
                }
            }
        }
    }
    assert!(accepted_cameras > 0, "camera fuzz never hit a valid call");
    assert!(accepted_trajectories > 0, "trajectory fuzz never hit a valid call");

    let elapsed = started.elapsed();
    assert_runtime("agent loop", elapsed, Duration::from_secs(10));
    println!(
        "ACCEPTANCE PASS [9/9] agent loop: {} files / {compared_bytes} bytes identical \
         across reruns, rethink touched one field, fuzz accepted {accepted_cameras} \
         cameras + {accepted_trajectories} trajectories of 10000 with zero violations, {} ms",
        files_a.len(),
        elapsed.as_millis()
    );
}

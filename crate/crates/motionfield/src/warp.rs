//! Forward-warps the source image along composed flow to preview the motion
//! before any generative model sees it.
//!
//! Splatting is nearest-neighbor with a depth z-buffer: every valid source
//! pixel lands on the rounded target, nearer (smaller transformed depth)
//! pixels win collisions, and equal depths keep the first writer in row-major
//! scan order, so output is deterministic byte for byte.

use crate::flow_compose::UnifiedFlow;
use crate::geometry::FlowField;
use image::codecs::gif::{GifEncoder, Repeat};
use image::{Delay, Rgba, RgbaImage, RgbImage};
use ndarray::Array2;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WarpError {
    #[error("{what} is {got_width}x{got_height}, expected {width}x{height}")]
    DimensionMismatch {
        what: &'static str,
        width: usize,
        height: usize,
        got_width: usize,
        got_height: usize,
    },
    #[error("unified flow carries no frames")]
    NoFrames,
    #[error("unified flow has {flows} flow maps but {depths} depth maps")]
    InconsistentUnifiedFlow { flows: usize, depths: usize },
    #[error("gif encoding failed: {0}")]
    GifEncode(#[from] image::ImageError),
}

/// One warped output image. `hole_mask` stays true for pixels no source
/// pixel splatted onto — the hole-fill pass paints them but does not clear
/// the mark, so synthesized pixels remain identifiable.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub rgb: RgbImage,
    pub hole_mask: Array2<bool>,
}

/// Splats `src` forward along `flow`. `depth_proxy` orders collisions
/// (smaller wins; NaN competes as infinitely far). Targets rounded off-image
/// are dropped; targets nothing reaches are holes.
pub fn forward_warp(
    src: &RgbImage,
    flow: &FlowField,
    depth_proxy: &Array2<f64>,
) -> Result<Frame, WarpError> {
    let (w, h) = (src.width() as usize, src.height() as usize);
    check_dims("flow", w, h, flow.width(), flow.height())?;
    let (dh, dw) = depth_proxy.dim();
    check_dims("depth proxy", w, h, dw, dh)?;

    let mut rgb = RgbImage::new(src.width(), src.height());
    let mut hole = Array2::from_elem((h, w), true);
    let mut zbuf = Array2::from_elem((h, w), f64::INFINITY);

    for row in 0..h {
        for col in 0..w {
            if !flow.is_valid(row, col) {
                continue;
            }
            let (du, dv) = flow.get(row, col);
            let tu = (col as f64 + du).round();
            let tv = (row as f64 + dv).round();
            if tu < 0.0 || tu >= w as f64 || tv < 0.0 || tv >= h as f64 {
                continue;
            }
            let (tc, tr) = (tu as usize, tv as usize);
            let mut d = depth_proxy[(row, col)];
            if d.is_nan() {
                d = f64::INFINITY;
            }
            if hole[(tr, tc)] || d < zbuf[(tr, tc)] {
                zbuf[(tr, tc)] = d;
                hole[(tr, tc)] = false;
                rgb.put_pixel(tc as u32, tr as u32, *src.get_pixel(col as u32, row as u32));
            }
        }
    }
    Ok(Frame {
        rgb,
        hole_mask: hole,
    })
}

/// Paints every hole with the color of the nearest splatted pixel (true
/// Euclidean nearest; ties broken by row then column). Only original splats
/// donate colors, so fills never cascade. The hole mask is left as-is.
pub fn fill_holes(frame: &mut Frame) {
    let (h, w) = frame.hole_mask.dim();
    let source_rgb = frame.rgb.clone();
    let splatted = frame.hole_mask.mapv(|hole| !hole);
    if splatted.iter().all(|&s| !s) {
        return;
    }
    for row in 0..h {
        for col in 0..w {
            if !frame.hole_mask[(row, col)] {
                continue;
            }
            let mut best: Option<(usize, usize, usize)> = None;
            let max_ring = w.max(h);
            for r in 1..=max_ring {
                if let Some((d2, _, _)) = best {
                    // Farther rings cannot beat a settled candidate once the
                    // ring's floor distance passes it.
                    if r * r > d2 {
                        break;
                    }
                }
                for (dr, dc) in ring_offsets(r) {
                    let rr = row as isize + dr;
                    let cc = col as isize + dc;
                    if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                        continue;
                    }
                    let (rr, cc) = (rr as usize, cc as usize);
                    if !splatted[(rr, cc)] {
                        continue;
                    }
                    let d2 = (dr * dr + dc * dc) as usize;
                    let candidate = (d2, rr, cc);
                    if best.is_none_or(|b| candidate < b) {
                        best = Some(candidate);
                    }
                }
            }
            if let Some((_, rr, cc)) = best {
                let color = *source_rgb.get_pixel(cc as u32, rr as u32);
                frame.rgb.put_pixel(col as u32, row as u32, color);
            }
        }
    }
}

/// Perimeter offsets of the Chebyshev ring at radius `r`, in row-major order.
fn ring_offsets(r: usize) -> impl Iterator<Item = (isize, isize)> {
    let r = r as isize;
    (-r..=r).flat_map(move |dr| {
        let cols: Vec<isize> = if dr.abs() == r {
            (-r..=r).collect()
        } else {
            vec![-r, r]
        };
        cols.into_iter().map(move |dc| (dr, dc))
    })
}

/// Warps one frame per flow map. `fill` runs the hole-fill pass on each
/// output frame.
pub fn render_sequence(
    src: &RgbImage,
    unified: &UnifiedFlow,
    fill: bool,
) -> Result<Vec<Frame>, WarpError> {
    if unified.flows.is_empty() {
        return Err(WarpError::NoFrames);
    }
    if unified.flows.len() != unified.camera_depth.len() {
        return Err(WarpError::InconsistentUnifiedFlow {
            flows: unified.flows.len(),
            depths: unified.camera_depth.len(),
        });
    }
    unified
        .flows
        .iter()
        .zip(&unified.camera_depth)
        .map(|(flow, depth)| {
            let mut frame = forward_warp(src, flow, depth)?;
            if fill {
                fill_holes(&mut frame);
            }
            Ok(frame)
        })
        .collect()
}

/// Encodes frames as a looping GIF with a fixed per-frame delay.
pub fn encode_gif<W: Write>(
    frames: &[Frame],
    delay_ms: u32,
    writer: W,
) -> Result<(), WarpError> {
    let mut encoder = GifEncoder::new(writer);
    encoder.set_repeat(Repeat::Infinite)?;
    for frame in frames {
        let (w, h) = frame.rgb.dimensions();
        let mut rgba = RgbaImage::new(w, h);
        for (x, y, px) in frame.rgb.enumerate_pixels() {
            rgba.put_pixel(x, y, Rgba([px[0], px[1], px[2], 255]));
        }
        encoder.encode_frame(image::Frame::from_parts(
            rgba,
            0,
            0,
            Delay::from_numer_denom_ms(delay_ms, 1),
        ))?;
    }
    Ok(())
}

fn check_dims(
    what: &'static str,
    width: usize,
    height: usize,
    got_width: usize,
    got_height: usize,
) -> Result<(), WarpError> {
    if (width, height) != (got_width, got_height) {
        return Err(WarpError::DimensionMismatch {
            what,
            width,
            height,
            got_width,
            got_height,
        });
    }
    Ok(())
}

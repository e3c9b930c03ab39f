//! Debug rendering of the trajectory grid onto an image: cell borders, an
//! integer label in each cell's top-left corner, and an optional start-point
//! marker. This is the image the agent sees when plotting a trajectory.

use image::{Rgb, RgbImage};

use crate::trajectory::GridSpec;

/// Color of the grid lines and label glyphs.
pub const GRID_COLOR: Rgb<u8> = Rgb([255, 255, 0]);
/// Backing color painted behind each label so it stays legible on any image.
pub const LABEL_BACKING: Rgb<u8> = Rgb([0, 0, 0]);
/// Fill color of the start-point marker.
pub const MARKER_COLOR: Rgb<u8> = Rgb([255, 0, 0]);

/// 3×5 digit glyphs, one row per byte, low three bits used.
const DIGIT_ROWS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b001, 0b001, 0b001],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

fn put_pixel_checked(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn draw_digit(img: &mut RgbImage, digit: u8, x: i64, y: i64, scale: i64) {
    let rows = DIGIT_ROWS[digit as usize];
    for (ry, bits) in rows.iter().enumerate() {
        for rx in 0..3i64 {
            if bits >> (2 - rx) & 1 == 1 {
                for sy in 0..scale {
                    for sx in 0..scale {
                        put_pixel_checked(
                            img,
                            x + rx * scale + sx,
                            y + ry as i64 * scale + sy,
                            GRID_COLOR,
                        );
                    }
                }
            }
        }
    }
}

fn draw_label(img: &mut RgbImage, value: usize, x: i64, y: i64, scale: i64) {
    let text = value.to_string();
    let glyph_w = 3 * scale + scale; // glyph plus one-glyph-column gap
    let total_w = glyph_w * text.len() as i64 - scale;
    let total_h = 5 * scale;
    for by in -1..=total_h {
        for bx in -1..=total_w {
            put_pixel_checked(img, x + bx, y + by, LABEL_BACKING);
        }
    }
    for (i, ch) in text.bytes().enumerate() {
        draw_digit(img, ch - b'0', x + glyph_w * i as i64, y, scale);
    }
}

/// Draw the grid's cell borders and per-cell integer labels in place.
pub fn draw_grid(img: &mut RgbImage, grid: &GridSpec) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    for c in 0..=grid.cols {
        let x = ((c as f64 * grid.cell_width()).round() as i64).min(w - 1);
        for y in 0..h {
            put_pixel_checked(img, x, y, GRID_COLOR);
        }
    }
    for r in 0..=grid.rows {
        let y = ((r as f64 * grid.cell_height()).round() as i64).min(h - 1);
        for x in 0..w {
            put_pixel_checked(img, x, y, GRID_COLOR);
        }
    }
    let scale = label_scale(grid);
    for area in 0..grid.area_count() {
        let (x0, y0) = grid.cell_origin(area).expect("area in range");
        draw_label(img, area, x0 as i64 + 2, y0 as i64 + 2, scale);
    }
}

fn label_scale(grid: &GridSpec) -> i64 {
    let cell = grid.cell_width().min(grid.cell_height());
    if cell >= 64.0 {
        3
    } else if cell >= 24.0 {
        2
    } else {
        1
    }
}

/// Draw a filled circular marker at `center` (pixel coordinates) in place.
pub fn draw_marker(img: &mut RgbImage, center: (f64, f64), radius: f64) {
    let r = radius.max(1.0);
    let (cx, cy) = center;
    let x_min = (cx - r).floor() as i64;
    let x_max = (cx + r).ceil() as i64;
    let y_min = (cy - r).floor() as i64;
    let y_max = (cy + r).ceil() as i64;
    for y in y_min..=y_max {
        for x in x_min..=x_max {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            if dx * dx + dy * dy <= r * r {
                put_pixel_checked(img, x, y, MARKER_COLOR);
            }
        }
    }
}

/// Marker radius used by [`render_overlay`], derived from the cell size.
pub fn default_marker_radius(grid: &GridSpec) -> f64 {
    (grid.cell_width().min(grid.cell_height()) / 6.0).max(3.0)
}

/// Render the full agent-facing overlay: grid, labels, and (when given) the
/// trajectory start point.
pub fn render_overlay(src: &RgbImage, grid: &GridSpec, start: Option<(f64, f64)>) -> RgbImage {
    let mut out = src.clone();
    draw_grid(&mut out, grid);
    if let Some(center) = start {
        draw_marker(&mut out, center, default_marker_radius(grid));
    }
    out
}

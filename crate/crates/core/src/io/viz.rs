//! Colour images of rendered Stixels.

use std::path::Path;

use crate::error::Result;
use crate::image::{Grid, StixelGrid};
use crate::io::netpbm;
use crate::metrics::Rendered;
use crate::types::StixelColumn;

pub const INVALID_COLOR: [u8; 3] = [128, 128, 128];
pub const BORDER_COLOR: [u8; 3] = [0, 0, 0];

/// Red for near (`d_max`) through green for far (0); NaN is gray.
pub fn disparity_color(d: f32, d_max: u32) -> [u8; 3] {
    if d.is_nan() {
        return INVALID_COLOR;
    }
    let t = (d as f64 / d_max as f64).clamp(0.0, 1.0);
    [(255.0 * t).round() as u8, (255.0 * (1.0 - t)).round() as u8, 0]
}

const PALETTE: [[u8; 3]; 12] = [
    [128, 64, 128],
    [220, 20, 60],
    [70, 70, 70],
    [70, 130, 180],
    [107, 142, 35],
    [244, 35, 232],
    [0, 0, 142],
    [250, 170, 30],
    [190, 153, 153],
    [152, 251, 152],
    [255, 255, 0],
    [0, 255, 255],
];

pub fn class_color(label: u8) -> [u8; 3] {
    if label == crate::image::VOID_LABEL {
        return INVALID_COLOR;
    }
    PALETTE[label as usize % PALETTE.len()]
}

/// Blackens the bottom fine row of every Stixel above the first.
fn draw_borders(img: &mut Grid<[u8; 3]>, columns: &[StixelColumn], grid: &StixelGrid) {
    for (c, col) in columns.iter().enumerate() {
        for s in &col.stixels()[1..] {
            let r = *grid.fine_rows(s.v_bottom).start();
            if r > grid.image_height {
                continue;
            }
            let y = grid.image_y(r);
            for x in grid.x_range(c) {
                img.set(x, y, BORDER_COLOR);
            }
        }
    }
}

/// Writes `disparity.ppm` and `classes.ppm` into `dir`.
pub fn write_visualization(
    dir: &Path,
    rendered: &Rendered,
    columns: &[StixelColumn],
    grid: &StixelGrid,
    d_max: u32,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    let (w, h) = rendered.disparity.dims();
    let mut disp = Grid::new(w, h, rendered.disparity.data().iter().map(|&d| disparity_color(d, d_max)).collect())?;
    let mut classes = Grid::new(w, h, rendered.labels.data().iter().map(|&l| class_color(l)).collect())?;
    draw_borders(&mut disp, columns, grid);
    draw_borders(&mut classes, columns, grid);
    netpbm::write_rgb(&dir.join("disparity.ppm"), &disp)?;
    netpbm::write_rgb(&dir.join("classes.ppm"), &classes)
}

//! Static heat maps of 2D grid fields.

use std::path::Path;

use image::{Rgb, RgbImage};
use stochflow::GridField;

use crate::error::CliError;

/// Blue-white-red map symmetric about zero, so signs read at a glance.
fn colour(v: f64, vmax: f64) -> Rgb<u8> {
    let s = if vmax > 0.0 { (v / vmax).clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |a: f64| (255.0 * (1.0 - a)).round() as u8;
    if s >= 0.0 {
        Rgb([255, fade(s), fade(s)])
    } else {
        Rgb([fade(-s), fade(-s), 255])
    }
}

/// Write component `c` of a 2D grid as a PNG, at least 256 pixels wide,
/// with `y` pointing up.
pub fn write_heatmap(path: &Path, grid: &GridField<2>, c: usize) -> Result<(), CliError> {
    let [nx, ny] = grid.layout().shape;
    let vmax = (0..nx * ny).map(|k| grid.at(k, c).abs()).fold(0.0, f64::max);
    let zoom = (256 / nx.max(ny)).max(1) as u32;
    let img = RgbImage::from_fn(nx as u32 * zoom, ny as u32 * zoom, |px, py| {
        let i = (px / zoom) as usize;
        let j = ny - 1 - (py / zoom) as usize;
        colour(grid.at(grid.layout().flat_index(&[i, j]), c), vmax)
    });
    img.save(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

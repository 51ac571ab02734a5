//! Colormapped depth images.

use std::path::Path;

use anyhow::{Context, Result};
use image::{Rgb, RgbImage};
use priordepth_core::Grid;

/// Viridis sampled at ten evenly spaced points.
const VIRIDIS: [[u8; 3]; 10] = [
    [0x44, 0x01, 0x54],
    [0x48, 0x28, 0x78],
    [0x3e, 0x4a, 0x89],
    [0x31, 0x68, 0x8e],
    [0x26, 0x82, 0x8e],
    [0x1f, 0x9e, 0x89],
    [0x35, 0xb7, 0x79],
    [0x6d, 0xcd, 0x59],
    [0xb4, 0xde, 0x2c],
    [0xfd, 0xe7, 0x25],
];

/// Viridis color of `t ∈ [0, 1]` by linear interpolation between the samples.
pub fn viridis(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (VIRIDIS.len() - 1) as f64;
    let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    std::array::from_fn(|c| (a[c] as f64 + f * (b[c] as f64 - a[c] as f64)).round() as u8)
}

/// Min and max of the finite, positive values.
pub fn value_range(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    values
        .into_iter()
        .filter(|v| v.is_finite() && *v > 0.0)
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
}

/// Maps `depth` linearly over `range` (near = dark); non-positive pixels are black.
pub fn colorize(depth: &Grid<f32>, range: (f64, f64)) -> RgbImage {
    let (lo, hi) = range;
    let span = (hi - lo).max(1e-12);
    RgbImage::from_fn(depth.width() as u32, depth.height() as u32, |x, y| {
        let d = *depth.get(x as usize, y as usize) as f64;
        if d.is_finite() && d > 0.0 {
            Rgb(viridis((d - lo) / span))
        } else {
            Rgb([0, 0, 0])
        }
    })
}

pub fn save_colorized(path: &Path, depth: &Grid<f32>, range: (f64, f64)) -> Result<()> {
    colorize(depth, range)
        .save(path)
        .with_context(|| format!("writing {}", path.display()))
}

//! Sparse depth priors: keypoints carrying metric depth, their sampling from
//! ground truth, random subsampling and the `x,y,depth` text format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::densify::snap_to_pixel;
use crate::error::{CoreError, Result};
use crate::grid::{ensure_same_shape, Grid};
use crate::scalar::Scalar;

pub const PRIOR_CSV_HEADER: &str = "x,y,depth";

/// Keypoints selected per image during training and evaluation.
pub const DEFAULT_PRIOR_COUNT: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorPoint<T> {
    /// Pixel column.
    pub x: T,
    /// Pixel row.
    pub y: T,
    /// Metric depth in meters.
    pub depth: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparsePrior<T> {
    pub points: Vec<PriorPoint<T>>,
    pub source_image_id: String,
}

impl<T: Scalar> SparsePrior<T> {
    pub fn new(source_image_id: impl Into<String>, points: Vec<PriorPoint<T>>) -> Self {
        Self {
            points,
            source_image_id: source_image_id.into(),
        }
    }

    pub fn empty(source_image_id: impl Into<String>) -> Self {
        Self::new(source_image_id, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks positivity/finiteness of depths and that points lie inside `width × height`.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let (w, h) = (T::from_usize_lossy(width), T::from_usize_lossy(height));
        for (i, p) in self.points.iter().enumerate() {
            if !(p.depth.is_finite() && p.depth > T::zero()) {
                return Err(CoreError::InvalidArgument(format!(
                    "prior point {i} has invalid depth {}",
                    p.depth
                )));
            }
            if !(p.x >= T::zero() && p.x < w && p.y >= T::zero() && p.y < h) {
                return Err(CoreError::InvalidArgument(format!(
                    "prior point {i} at ({}, {}) outside {width}x{height}",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }

    /// Mirrors keypoints horizontally in an image of the given width (`x → W − 1 − x`).
    pub fn flip_x(&self, width: usize) -> Self {
        let last = T::from_usize_lossy(width - 1);
        Self {
            points: self.points.iter().map(|p| PriorPoint { x: last - p.x, ..*p }).collect(),
            source_image_id: self.source_image_id.clone(),
        }
    }

    pub fn scale_depths(&self, s: T) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| PriorPoint {
                    depth: p.depth * s,
                    ..*p
                })
                .collect(),
            source_image_id: self.source_image_id.clone(),
        }
    }

    /// Rescales pixel coordinates from one resolution to another (pixel-center convention).
    pub fn rescale_coords(&self, from: (usize, usize), to: (usize, usize)) -> Self {
        let sx = T::from_usize_lossy(to.0) / T::from_usize_lossy(from.0);
        let sy = T::from_usize_lossy(to.1) / T::from_usize_lossy(from.1);
        let half = T::lit(0.5);
        let max_x = T::from_usize_lossy(to.0) - T::lit(1e-3);
        let max_y = T::from_usize_lossy(to.1) - T::lit(1e-3);
        Self {
            points: self
                .points
                .iter()
                .map(|p| PriorPoint {
                    x: ((p.x + half) * sx - half).max(T::zero()).min(max_x),
                    y: ((p.y + half) * sy - half).max(T::zero()).min(max_y),
                    depth: p.depth,
                })
                .collect(),
            source_image_id: self.source_image_id.clone(),
        }
    }

    /// Fraction of image pixels carrying a keypoint.
    pub fn pixel_coverage(&self, width: usize, height: usize) -> f64 {
        self.len() as f64 / (width * height) as f64
    }
}

/// Reads depths at the nearest integer pixel of each keypoint; keypoints over
/// invalid depth (non-finite, non-positive or masked out) are dropped.
pub fn sample_prior_depths<T: Scalar>(
    source_image_id: &str,
    keypoints: &[(T, T)],
    depth: &Grid<T>,
    validity: &Grid<bool>,
) -> Result<SparsePrior<T>> {
    ensure_same_shape(depth, validity, "depth vs validity")?;
    let (w, h) = (depth.width(), depth.height());
    let (wf, hf) = (T::from_usize_lossy(w), T::from_usize_lossy(h));
    let points = keypoints
        .iter()
        .filter(|&&(x, y)| x >= T::zero() && y >= T::zero() && x < wf && y < hf)
        .filter_map(|&(x, y)| {
            let (px, py) = (snap_to_pixel(x, w), snap_to_pixel(y, h));
            let d = *depth.get(px, py);
            (*validity.get(px, py) && d.is_finite() && d > T::zero()).then_some(PriorPoint { x, y, depth: d })
        })
        .collect();
    Ok(SparsePrior::new(source_image_id, points))
}

/// Uniform random subset of `min(n, |prior|)` points without replacement,
/// kept in their original order.
pub fn subsample_prior<T: Scalar>(prior: &SparsePrior<T>, n: usize, seed: u64) -> SparsePrior<T> {
    if n >= prior.len() {
        return prior.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = sample(&mut rng, prior.len(), n).into_vec();
    chosen.sort_unstable();
    SparsePrior::new(
        prior.source_image_id.clone(),
        chosen.into_iter().map(|i| prior.points[i]).collect(),
    )
}

pub fn prior_to_csv<T: Scalar>(prior: &SparsePrior<T>) -> String {
    let mut s = String::with_capacity(16 * (prior.len() + 1));
    s.push_str(PRIOR_CSV_HEADER);
    s.push('\n');
    for p in &prior.points {
        let _ = writeln!(s, "{},{},{}", p.x, p.y, p.depth);
    }
    s
}

pub fn write_prior_csv<T: Scalar>(path: &Path, prior: &SparsePrior<T>) -> Result<()> {
    fs::write(path, prior_to_csv(prior)).map_err(|e| CoreError::io(path, e))
}

/// Parses the `x,y,depth` format; `path` is only used in error messages.
pub fn parse_prior_csv<T: Scalar>(path: &Path, id: &str, text: &str) -> Result<SparsePrior<T>> {
    let perr = |line: usize, msg: String| CoreError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == PRIOR_CSV_HEADER => {}
        Some((_, header)) => return Err(perr(1, format!("expected header `{PRIOR_CSV_HEADER}`, got `{header}`"))),
        None => return Err(perr(1, "missing header".into())),
    }
    let mut points = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(perr(line_no, format!("expected 3 fields, got {}", fields.len())));
        }
        let mut vals = [T::zero(); 3];
        for (v, f) in vals.iter_mut().zip(&fields) {
            let parsed: f64 = f.parse().map_err(|_| perr(line_no, format!("not a number: `{f}`")))?;
            *v = T::lit(parsed);
        }
        let [x, y, depth] = vals;
        if !(depth.is_finite() && depth > T::zero()) || !x.is_finite() || !y.is_finite() {
            return Err(perr(line_no, format!("invalid record `{line}`")));
        }
        points.push(PriorPoint { x, y, depth });
    }
    Ok(SparsePrior::new(id, points))
}

pub fn read_prior_csv<T: Scalar>(path: &Path, id: &str) -> Result<SparsePrior<T>> {
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    parse_prior_csv(path, id, &text)
}

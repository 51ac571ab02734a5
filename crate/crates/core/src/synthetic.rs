//! Procedural scenes for tests and desk-scale training.
//!
//! Single frames: a base plane with smooth radial bumps, rendered as shaded
//! normalized inverse depth with a green attenuation tint, 5% holes and exact
//! priors. Sequences: a fixed textured surface seen by a camera translating
//! sideways, so consecutive frames carry depth-dependent parallax.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{CoreError, Result};
use crate::grid::Grid;
use crate::rng::rng_for;
use crate::sample::DepthSample;
use crate::scalar::Scalar;
use crate::sparse::{PriorPoint, SparsePrior};

/// Depths are clamped above this value.
pub const MIN_DEPTH: f64 = 0.3;
pub const HOLE_FRACTION: f64 = 0.05;

const WATER: [f64; 3] = [0.04, 0.32, 0.30];
const TINT: [f64; 3] = [0.55, 0.95, 0.78];

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub width: usize,
    pub height: usize,
    pub n_prior: usize,
    /// Global factor applied to ground truth and priors, drawn per sample.
    pub depth_scale_range: (f64, f64),
}

impl SyntheticConfig {
    pub fn new(width: usize, height: usize, n_prior: usize) -> Self {
        Self {
            width,
            height,
            n_prior,
            depth_scale_range: (1.0, 1.0),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Bump {
    cx: f64,
    cy: f64,
    sigma: f64,
    amp: f64,
}

/// Depth as a function of normalized image coordinates (`u, v` in `[0, 1]`
/// inside the frame, defined everywhere).
#[derive(Clone, Debug)]
struct Surface {
    base: f64,
    tilt: (f64, f64),
    aspect: f64,
    bumps: Vec<Bump>,
}

impl Surface {
    fn random<R: Rng>(rng: &mut R, aspect: f64) -> Self {
        let base = rng.gen_range(2.0..8.0);
        let tilt = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        let n = rng.gen_range(3..=8);
        let bumps = (0..n)
            .map(|_| {
                let mag = rng.gen_range(0.3..2.0);
                Bump {
                    cx: rng.gen_range(0.0..1.0),
                    cy: rng.gen_range(0.0..1.0),
                    sigma: rng.gen_range(0.08..0.3),
                    amp: if rng.gen_bool(0.5) { mag } else { -mag },
                }
            })
            .collect();
        Self {
            base,
            tilt,
            aspect,
            bumps,
        }
    }

    fn depth(&self, u: f64, v: f64) -> f64 {
        let mut d = self.base + self.tilt.0 * (u - 0.5) + self.tilt.1 * (v - 0.5);
        for b in &self.bumps {
            let dx = u - b.cx;
            let dy = (v - b.cy) / self.aspect;
            d += b.amp * (-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma)).exp();
        }
        d.max(MIN_DEPTH)
    }
}

/// Sum of a few random plane waves, in `[0, 1]`.
#[derive(Clone, Debug)]
struct SmoothNoise {
    waves: Vec<(f64, f64, f64)>,
}

impl SmoothNoise {
    fn random<R: Rng>(rng: &mut R) -> Self {
        let waves = (0..4)
            .map(|_| {
                (
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        Self { waves }
    }

    fn at(&self, u: f64, v: f64) -> f64 {
        let s: f64 = self
            .waves
            .iter()
            .map(|&(fu, fv, ph)| (std::f64::consts::TAU * (fu * u + fv * v) + ph).sin())
            .sum();
        0.5 + 0.5 * s / self.waves.len() as f64
    }
}

fn tinted(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0);
    [0, 1, 2].map(|c| (WATER[c] * (1.0 - v) + TINT[c] * v).clamp(0.0, 1.0))
}

fn push_rgb<T: Scalar>(image: &mut [T], n: usize, i: usize, rgb: [f64; 3]) {
    for (c, v) in rgb.into_iter().enumerate() {
        image[c * n + i] = T::lit(v);
    }
}

/// Sample `index` of the stream identified by `seed`; independent of how many
/// samples are requested alongside it.
pub fn synthetic_sample<T: Scalar>(seed: u64, index: usize, cfg: &SyntheticConfig) -> DepthSample<T> {
    let (w, h) = (cfg.width, cfg.height);
    let n = w * h;
    let mut rng = rng_for(seed, &[0x5CE7E, index as u64]);
    let surface = Surface::random(&mut rng, h as f64 / w as f64);
    let noise = SmoothNoise::random(&mut rng);
    let scale = {
        let (lo, hi) = cfg.depth_scale_range;
        let u: f64 = rng.gen();
        if hi > lo {
            lo + (hi - lo) * u
        } else {
            lo
        }
    };

    let depth: Vec<f64> = (0..n)
        .map(|i| surface.depth((i % w) as f64 / w as f64, (i / w) as f64 / h as f64))
        .collect();
    let inv_lo = depth.iter().fold(f64::INFINITY, |a, d| a.min(1.0 / d));
    let inv_hi = depth.iter().fold(0.0f64, |a, d| a.max(1.0 / d));
    let inv_span = (inv_hi - inv_lo).max(1e-12);

    let mut image = vec![T::zero(); 3 * n];
    for (i, d) in depth.iter().enumerate() {
        let (u, v) = ((i % w) as f64 / w as f64, (i / w) as f64 / h as f64);
        let shade = 0.75 + 0.25 * noise.at(u, v);
        push_rgb(&mut image, n, i, tinted((1.0 / d - inv_lo) / inv_span * shade));
    }

    let n_holes = (HOLE_FRACTION * n as f64).round() as usize;
    let mut valid = vec![true; n];
    for i in sample(&mut rng, n, n_holes.min(n)) {
        valid[i] = false;
    }
    let valid_idx: Vec<usize> = (0..n).filter(|&i| valid[i]).collect();
    let k = cfg.n_prior.min(valid_idx.len());
    let mut chosen: Vec<usize> = sample(&mut rng, valid_idx.len(), k)
        .into_iter()
        .map(|j| valid_idx[j])
        .collect();
    chosen.sort_unstable();

    let gt: Vec<T> = depth
        .iter()
        .zip(&valid)
        .map(|(&d, &m)| if m { T::lit(d * scale) } else { T::zero() })
        .collect();
    let id = format!("synth_{index:05}");
    let points = chosen
        .into_iter()
        .map(|i| PriorPoint {
            x: T::from_usize_lossy(i % w),
            y: T::from_usize_lossy(i / w),
            depth: gt[i],
        })
        .collect();
    DepthSample {
        id: id.clone(),
        image,
        gt_depth: Grid::from_vec(w, h, gt).expect("sized"),
        validity: Grid::from_vec(w, h, valid).expect("sized"),
        prior: SparsePrior::new(id, points),
    }
}

pub fn generate_synthetic_with<T: Scalar>(
    seed: u64,
    count: usize,
    cfg: &SyntheticConfig,
) -> Result<Vec<DepthSample<T>>> {
    if count == 0 {
        return Err(CoreError::InvalidArgument("count must be at least 1".into()));
    }
    if cfg.width == 0 || cfg.height == 0 {
        return Err(CoreError::InvalidArgument("image size must be positive".into()));
    }
    Ok((0..count).map(|i| synthetic_sample(seed, i, cfg)).collect())
}

pub fn generate_synthetic<T: Scalar>(
    seed: u64,
    count: usize,
    width: usize,
    height: usize,
    n_prior: usize,
) -> Result<Vec<DepthSample<T>>> {
    generate_synthetic_with(seed, count, &SyntheticConfig::new(width, height, n_prior))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Sideways camera motion between consecutive frames, meters.
    pub baseline: f64,
    /// Focal length in pixels.
    pub focal: f64,
}

impl SequenceConfig {
    pub fn new(width: usize, height: usize, frames: usize) -> Self {
        Self {
            width,
            height,
            frames,
            baseline: 0.08,
            focal: width as f64,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Blob {
    x: f64,
    y: f64,
    inv_two_s2: f64,
    amp: f64,
}

/// Random blob texture over a margin around the frame, in reference-pixel units.
struct Texture {
    blobs: Vec<Blob>,
    cell: f64,
    cols: usize,
    rows: usize,
    origin: (f64, f64),
    buckets: Vec<Vec<usize>>,
}

impl Texture {
    fn random<R: Rng>(rng: &mut R, w: usize, h: usize, margin: f64) -> Self {
        let origin = (-margin, -margin);
        let (span_x, span_y) = (w as f64 + 2.0 * margin, h as f64 + 2.0 * margin);
        let count = (span_x * span_y / 40.0) as usize;
        let blobs: Vec<Blob> = (0..count)
            .map(|_| {
                let s: f64 = rng.gen_range(1.2..3.0);
                Blob {
                    x: origin.0 + rng.gen_range(0.0..span_x),
                    y: origin.1 + rng.gen_range(0.0..span_y),
                    inv_two_s2: 1.0 / (2.0 * s * s),
                    amp: rng.gen_range(-0.6..0.6),
                }
            })
            .collect();
        let cell = 10.0;
        let cols = (span_x / cell).ceil() as usize + 1;
        let rows = (span_y / cell).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); cols * rows];
        for (i, b) in blobs.iter().enumerate() {
            let cx = ((b.x - origin.0) / cell) as usize;
            let cy = ((b.y - origin.1) / cell) as usize;
            buckets[cy.min(rows - 1) * cols + cx.min(cols - 1)].push(i);
        }
        Self {
            blobs,
            cell,
            cols,
            rows,
            origin,
            buckets,
        }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let cx = ((x - self.origin.0) / self.cell).floor() as isize;
        let cy = ((y - self.origin.1) / self.cell).floor() as isize;
        let mut s = 0.0;
        for by in cy - 1..=cy + 1 {
            for bx in cx - 1..=cx + 1 {
                if bx < 0 || by < 0 || bx as usize >= self.cols || by as usize >= self.rows {
                    continue;
                }
                for &i in &self.buckets[by as usize * self.cols + bx as usize] {
                    let b = &self.blobs[i];
                    let d2 = (x - b.x).powi(2) + (y - b.y).powi(2);
                    s += b.amp * (-d2 * b.inv_two_s2).exp();
                }
            }
        }
        (0.5 + s).clamp(0.0, 1.0)
    }
}

/// Depth seen at pixel `(x, y)` by a camera shifted sideways by `offset`:
/// the first `z` along the ray with `z = D(x + f·offset/z, y)`.
fn ray_depth(surface: &Surface, w: usize, h: usize, f: f64, offset: f64, x: f64, y: f64) -> (f64, f64) {
    let v = y / h as f64;
    let g = |z: f64| {
        let x_ref = x + f * offset / z;
        (z - surface.depth(x_ref / w as f64, v), x_ref)
    };
    if offset == 0.0 {
        return (surface.depth(x / w as f64, v), x);
    }
    let (mut lo, step) = (MIN_DEPTH, 0.02);
    let mut hi = lo;
    while hi < 40.0 {
        let next = hi + step;
        if g(next).0 >= 0.0 {
            lo = hi;
            hi = next;
            break;
        }
        hi = next;
    }
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if g(mid).0 >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (hi, g(hi).1)
}

/// Frames of a sideways-moving camera over one textured surface. Frame `k`
/// sits `k · baseline` to the right of frame 0, so scene points move left.
pub fn generate_sequence<T: Scalar>(seed: u64, cfg: &SequenceConfig) -> Result<Vec<DepthSample<T>>> {
    if cfg.frames == 0 || cfg.width == 0 || cfg.height == 0 {
        return Err(CoreError::InvalidArgument(
            "frames and image size must be positive".into(),
        ));
    }
    let (w, h) = (cfg.width, cfg.height);
    let n = w * h;
    let mut rng = rng_for(seed, &[0x5E0, 0]);
    let surface = Surface::random(&mut rng, h as f64 / w as f64);
    let max_shift = cfg.focal * cfg.baseline * cfg.frames as f64 / MIN_DEPTH;
    let texture = Texture::random(&mut rng, w, h, max_shift.min(4.0 * w as f64) + 8.0);
    let mut out = Vec::with_capacity(cfg.frames);
    for k in 0..cfg.frames {
        let offset = k as f64 * cfg.baseline;
        let mut image = vec![T::zero(); 3 * n];
        let mut gt = Vec::with_capacity(n);
        for i in 0..n {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let (z, x_ref) = ray_depth(&surface, w, h, cfg.focal, offset, x, y);
            let fog = (-0.12 * z).exp();
            push_rgb(&mut image, n, i, tinted(texture.at(x_ref, y) * (0.4 + 0.6 * fog)));
            gt.push(T::lit(z));
        }
        let id = format!("frame_{k:04}");
        out.push(DepthSample {
            id: id.clone(),
            image,
            gt_depth: Grid::from_vec(w, h, gt).expect("sized"),
            validity: Grid::filled(w, h, true),
            prior: SparsePrior::empty(id),
        });
    }
    Ok(out)
}

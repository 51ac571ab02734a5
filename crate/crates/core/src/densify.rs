//! Dense two-channel parameterization of a sparse depth prior.
//!
//! Channel one holds the depth of the nearest prior keypoint, channel two a
//! Gaussian proximity score of the distance to it. Both are derived from one
//! exact Euclidean distance transform that carries the index of the nearest
//! seed, so the cost is linear in the number of pixels.
//!
//! Keypoints are snapped to their nearest pixel before the transform. When
//! several keypoints are equally close to a pixel, the one with the lowest
//! index wins.

use std::cmp::Ordering;

use crate::error::{CoreError, Result};
use crate::grid::Grid;
use crate::scalar::Scalar;
use crate::sparse::SparsePrior;

/// Default Gaussian width of the proximity channel, in working-resolution pixels.
pub const DEFAULT_SIGMA: f64 = 10.0;

/// Factors accepted by [`downsample_prior`].
pub const DOWNSAMPLE_FACTORS: [usize; 4] = [2, 4, 8, 16];

/// Per-pixel nearest keypoint, with the exact squared pixel distance to it.
#[derive(Clone, Debug, PartialEq)]
pub struct NearestIndexMap {
    pub idx: Grid<usize>,
    pub sq_dist: Grid<u64>,
}

/// S1 (nearest-keypoint depth) and S2 (proximity probability) channels.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorMaps<T> {
    pub s1: Grid<T>,
    pub s2: Grid<T>,
    pub sigma: T,
}

impl<T: Scalar> PriorMaps<T> {
    pub fn width(&self) -> usize {
        self.s1.width()
    }

    pub fn height(&self) -> usize {
        self.s1.height()
    }

    /// Peak value of the proximity channel, reached on top of a keypoint.
    pub fn s2_peak(sigma: T) -> T {
        T::one() / (sigma * (T::lit(2.0) * T::PI()).sqrt())
    }

    /// Channel-major `2 × H × W` buffer: S1 followed by S2.
    pub fn to_channels(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(2 * self.s1.len());
        out.extend_from_slice(self.s1.as_slice());
        out.extend_from_slice(self.s2.as_slice());
        out
    }

    pub fn flip_x(&self) -> Self {
        Self {
            s1: self.s1.flip_x(),
            s2: self.s2.flip_x(),
            sigma: self.sigma,
        }
    }
}

/// Snaps a continuous pixel coordinate to its pixel, clamped into `0..len`.
pub fn snap_to_pixel<T: Scalar>(v: T, len: usize) -> usize {
    let r = v.round();
    if r <= T::zero() {
        0
    } else {
        r.to_usize().unwrap_or(usize::MAX).min(len - 1)
    }
}

/// Exact nearest-keypoint index for every pixel.
///
/// Runs a 1-D nearest-seed scan along every row followed by a lower-envelope
/// pass along every column. All arithmetic is on integers, so the result is
/// identical to a brute-force search under the lowest-index tie rule.
pub fn nearest_index_map<T: Scalar>(points: &[(T, T)], width: usize, height: usize) -> Result<NearestIndexMap> {
    if points.is_empty() {
        return Err(CoreError::EmptyPrior);
    }
    if width == 0 || height == 0 {
        return Err(CoreError::InvalidArgument(format!(
            "raster must be non-empty, got {width}x{height}"
        )));
    }
    for (i, &(x, y)) in points.iter().enumerate() {
        let inside = x.is_finite()
            && y.is_finite()
            && x >= T::zero()
            && y >= T::zero()
            && x < T::from_usize_lossy(width)
            && y < T::from_usize_lossy(height);
        if !inside {
            return Err(CoreError::InvalidArgument(format!(
                "keypoint {i} at ({x}, {y}) outside {width}x{height}"
            )));
        }
    }

    // Seeding: the lowest index claims a pixel shared by several keypoints.
    let mut seeds: Grid<Option<usize>> = Grid::filled(width, height, None);
    for (i, &(x, y)) in points.iter().enumerate() {
        let (px, py) = (snap_to_pixel(x, width), snap_to_pixel(y, height));
        let slot = seeds.get_mut(px, py);
        if slot.is_none() {
            *slot = Some(i);
        }
    }

    // Pass 1: along each row, nearest seed column (ties to the lower index).
    let mut row_dist: Grid<Option<u64>> = Grid::filled(width, height, None);
    let mut row_idx: Grid<usize> = Grid::filled(width, height, 0);
    for y in 0..height {
        row_pass(&seeds, y, &mut row_dist, &mut row_idx);
    }

    // Pass 2: along each column, lower envelope of parabolas (y - q)^2 + g(q).
    let mut idx = Grid::filled(width, height, 0usize);
    let mut sq_dist = Grid::filled(width, height, 0u64);
    let mut env = Envelope::with_capacity(height);
    for x in 0..width {
        env.column_pass(x, &row_dist, &row_idx, &mut idx, &mut sq_dist);
    }

    Ok(NearestIndexMap { idx, sq_dist })
}

fn row_pass(seeds: &Grid<Option<usize>>, y: usize, row_dist: &mut Grid<Option<u64>>, row_idx: &mut Grid<usize>) {
    let width = seeds.width();
    let row = seeds.row(y);
    // forward: nearest seed at or left of x
    let mut left: Vec<Option<(usize, usize)>> = vec![None; width];
    let mut last = None;
    for x in 0..width {
        if let Some(i) = row[x] {
            last = Some((x, i));
        }
        left[x] = last;
    }
    let mut next: Option<(usize, usize)> = None;
    for x in (0..width).rev() {
        if let Some(i) = row[x] {
            next = Some((x, i));
        }
        let from_left = left[x].map(|(sx, i)| ((x - sx) as u64, i));
        let from_right = next.map(|(sx, i)| ((sx - x) as u64, i));
        let best = match (from_left, from_right) {
            (Some(a), Some(b)) => Some(pick(a, b)),
            (a, b) => a.or(b),
        };
        if let Some((d, i)) = best {
            row_dist.set(x, y, Some(d * d));
            row_idx.set(x, y, i);
        }
    }
}

#[inline]
fn pick(a: (u64, usize), b: (u64, usize)) -> (u64, usize) {
    match a.0.cmp(&b.0) {
        Ordering::Less => a,
        Ordering::Greater => b,
        Ordering::Equal => {
            if a.1 <= b.1 {
                a
            } else {
                b
            }
        }
    }
}

/// Boundary between envelope parabolas as the exact rational `num / den`, `den > 0`.
#[derive(Clone, Copy, Debug)]
enum Bound {
    NegInf,
    At { num: i128, den: i128 },
    PosInf,
}

impl Bound {
    fn cmp_rational(self, num: i128, den: i128) -> Ordering {
        match self {
            Bound::NegInf => Ordering::Less,
            Bound::PosInf => Ordering::Greater,
            Bound::At { num: n, den: d } => (n * den).cmp(&(num * d)),
        }
    }

    fn cmp_int(self, v: i128) -> Ordering {
        self.cmp_rational(v, 1)
    }
}

struct Envelope {
    /// Rows of parabola vertices in the envelope.
    v: Vec<usize>,
    /// `z[k]` is where parabola `v[k]` starts being minimal; `z[len]` closes the last.
    z: Vec<Bound>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            v: Vec::with_capacity(n),
            z: Vec::with_capacity(n + 1),
        }
    }

    fn column_pass(
        &mut self,
        x: usize,
        g: &Grid<Option<u64>>,
        gi: &Grid<usize>,
        idx: &mut Grid<usize>,
        sq_dist: &mut Grid<u64>,
    ) {
        let height = g.height();
        self.v.clear();
        self.z.clear();
        let f = |q: usize| -> Option<i128> { g.get(x, q).map(|d| d as i128) };

        for q in 0..height {
            let Some(fq) = f(q) else { continue };
            loop {
                let Some(&p) = self.v.last() else {
                    self.v.push(q);
                    self.z.push(Bound::NegInf);
                    break;
                };
                let fp = f(p).expect("envelope holds finite rows");
                let (qi, pi) = (q as i128, p as i128);
                // intersection of parabolas at p and q
                let num = (fq + qi * qi) - (fp + pi * pi);
                let den = 2 * (qi - pi);
                let zk = *self.z.last().expect("z tracks v");
                // Strict comparison keeps parabolas that touch the envelope at a
                // single point, so every minimizer stays available for tie-breaking.
                if zk.cmp_rational(num, den) == Ordering::Greater {
                    self.v.pop();
                    self.z.pop();
                } else {
                    self.v.push(q);
                    self.z.push(Bound::At { num, den });
                    break;
                }
            }
        }
        if self.v.is_empty() {
            // A column can only be empty when every row was seedless, which the
            // caller rules out by requiring at least one keypoint.
            unreachable!("row pass leaves no empty column when a seed exists");
        }
        self.z.push(Bound::PosInf);

        let mut k = 0;
        for y in 0..height {
            let yi = y as i128;
            while self.z[k + 1].cmp_int(yi) == Ordering::Less {
                k += 1;
            }
            let eval = |row: usize| -> (u64, usize) {
                let dy = y.abs_diff(row) as u64;
                let gv = g.get(x, row).expect("finite");
                (dy * dy + gv, *gi.get(x, row))
            };
            let mut best = eval(self.v[k]);
            let mut j = k + 1;
            while j < self.v.len() && self.z[j].cmp_int(yi) == Ordering::Equal {
                best = pick(best, eval(self.v[j]));
                j += 1;
            }
            idx.set(x, y, best.1);
            sq_dist.set(x, y, best.0);
        }
    }
}

/// S1/S2 maps of a non-empty prior at `width × height`.
pub fn densify<T: Scalar>(prior: &SparsePrior<T>, width: usize, height: usize, sigma: T) -> Result<PriorMaps<T>> {
    if !(sigma > T::zero()) {
        return Err(CoreError::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let coords: Vec<(T, T)> = prior.points.iter().map(|p| (p.x, p.y)).collect();
    let nearest = nearest_index_map(&coords, width, height)?;
    Ok(maps_from_nearest(prior, &nearest, sigma))
}

/// Builds S1/S2 from a precomputed nearest-keypoint map.
pub fn maps_from_nearest<T: Scalar>(prior: &SparsePrior<T>, nearest: &NearestIndexMap, sigma: T) -> PriorMaps<T> {
    let peak = PriorMaps::s2_peak(sigma);
    let two_sigma_sq = T::lit(2.0) * sigma * sigma;
    let s1 = nearest.idx.map(|&i| prior.points[i].depth);
    let s2 = nearest
        .sq_dist
        .map(|&d2| peak * (-T::from_u64(d2).expect("u64 representable") / two_sigma_sq).exp());
    PriorMaps { s1, s2, sigma }
}

/// All-zero maps: the encoding of "no prior information".
pub fn zero_prior_maps<T: Scalar>(width: usize, height: usize, sigma: T) -> PriorMaps<T> {
    PriorMaps {
        s1: Grid::filled(width, height, T::zero()),
        s2: Grid::filled(width, height, T::zero()),
        sigma,
    }
}

/// [`densify`] for non-empty priors, [`zero_prior_maps`] otherwise.
pub fn densify_or_zero<T: Scalar>(
    prior: &SparsePrior<T>,
    width: usize,
    height: usize,
    sigma: T,
) -> Result<PriorMaps<T>> {
    if prior.is_empty() {
        Ok(zero_prior_maps(width, height, sigma))
    } else {
        densify(prior, width, height, sigma)
    }
}

/// Reduces resolution by `factor`: S1 keeps the top-left sample of each block,
/// S2 keeps the block maximum.
pub fn downsample_prior<T: Scalar>(maps: &PriorMaps<T>, factor: usize) -> Result<PriorMaps<T>> {
    let (w, h) = (maps.width(), maps.height());
    if !DOWNSAMPLE_FACTORS.contains(&factor) {
        return Err(CoreError::InvalidArgument(format!(
            "downsample factor must be one of {DOWNSAMPLE_FACTORS:?}, got {factor}"
        )));
    }
    if w % factor != 0 || h % factor != 0 {
        return Err(CoreError::InvalidArgument(format!(
            "factor {factor} does not divide {w}x{h}"
        )));
    }
    let (ow, oh) = (w / factor, h / factor);
    let s1 = Grid::from_fn(ow, oh, |x, y| *maps.s1.get(x * factor, y * factor));
    let s2 = Grid::from_fn(ow, oh, |x, y| {
        let mut m = T::neg_infinity();
        for yy in y * factor..(y + 1) * factor {
            for &v in &maps.s2.row(yy)[x * factor..(x + 1) * factor] {
                m = m.max(v);
            }
        }
        m
    });
    Ok(PriorMaps {
        s1,
        s2,
        sigma: maps.sigma,
    })
}

//! Difference-of-Gaussians keypoints with gradient-orientation-histogram
//! descriptors, and per-grid-cell selection of the strongest detections.

use std::cmp::Ordering;

use crate::grid::Grid;
use crate::scalar::Scalar;

pub const DESCRIPTOR_LEN: usize = 128;

#[derive(Clone, Debug, PartialEq)]
pub struct Keypoint<T> {
    pub x: T,
    pub y: T,
    pub response: T,
    /// Blur scale the keypoint was found at, in input pixels.
    pub scale: T,
    pub orientation: T,
    pub descriptor: Vec<T>,
}

/// Anything that finds described keypoints in a grayscale image.
pub trait KeypointDetector<T> {
    fn detect(&self, image: &Grid<T>) -> Vec<Keypoint<T>>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub per_cell: usize,
}

impl Default for GridSpec {
    /// 8×8 cells with 8 detections each: 512 candidates before matching.
    fn default() -> Self {
        Self {
            rows: 8,
            cols: 8,
            per_cell: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DogDetector {
    pub octaves: usize,
    pub scales_per_octave: usize,
    pub base_sigma: f64,
    /// Assumed blur already present in the input.
    pub input_sigma: f64,
    /// Minimum |DoG| for an extremum, for intensities in `[0, 1]`.
    pub contrast_threshold: f64,
    /// Principal-curvature ratio above which edge-like extrema are rejected.
    pub edge_ratio: f64,
    /// Start from a 2× bilinear upsampling so that blobs finer than the
    /// base scale still produce scale-space extrema.
    pub upsample_input: bool,
}

impl Default for DogDetector {
    fn default() -> Self {
        Self {
            octaves: 4,
            scales_per_octave: 3,
            base_sigma: 1.6,
            input_sigma: 0.5,
            contrast_threshold: 0.004,
            edge_ratio: 10.0,
            upsample_input: true,
        }
    }
}

/// Detects with `detector` and keeps the `per_cell` strongest keypoints of each grid cell.
pub fn detect_keypoints_with<T: Scalar, D: KeypointDetector<T> + ?Sized>(
    detector: &D,
    image: &Grid<T>,
    grid: GridSpec,
) -> Vec<Keypoint<T>> {
    let all = detector.detect(image);
    select_per_cell(all, image.width(), image.height(), grid)
}

/// [`detect_keypoints_with`] using the default [`DogDetector`].
pub fn detect_keypoints<T: Scalar>(image: &Grid<T>, grid: GridSpec) -> Vec<Keypoint<T>> {
    detect_keypoints_with(&DogDetector::default(), image, grid)
}

pub fn select_per_cell<T: Scalar>(
    keypoints: Vec<Keypoint<T>>,
    width: usize,
    height: usize,
    grid: GridSpec,
) -> Vec<Keypoint<T>> {
    if grid.rows == 0 || grid.cols == 0 || grid.per_cell == 0 || width == 0 || height == 0 {
        return Vec::new();
    }
    let cell_of = |kp: &Keypoint<T>| -> usize {
        let cx = (kp.x.to_f64_lossy() * grid.cols as f64 / width as f64).floor() as usize;
        let cy = (kp.y.to_f64_lossy() * grid.rows as f64 / height as f64).floor() as usize;
        cy.min(grid.rows - 1) * grid.cols + cx.min(grid.cols - 1)
    };
    let mut cells: Vec<Vec<Keypoint<T>>> = vec![Vec::new(); grid.rows * grid.cols];
    for kp in keypoints {
        let c = cell_of(&kp);
        cells[c].push(kp);
    }
    let mut out = Vec::new();
    for mut cell in cells {
        cell.sort_by(|a, b| {
            b.response
                .partial_cmp(&a.response)
                .unwrap_or(Ordering::Equal)
                .then(a.y.partial_cmp(&b.y).unwrap_or(Ordering::Equal))
                .then(a.x.partial_cmp(&b.x).unwrap_or(Ordering::Equal))
        });
        cell.truncate(grid.per_cell);
        out.extend(cell);
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(img: &Grid<f64>, sigma: f64) -> Grid<f64> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let tmp = Grid::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = 0.0;
        for (i, kv) in k.iter().enumerate() {
            let xx = (x as isize + i as isize - r).clamp(0, w - 1) as usize;
            acc += kv * img.get(xx, y);
        }
        acc
    });
    Grid::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = 0.0;
        for (i, kv) in k.iter().enumerate() {
            let yy = (y as isize + i as isize - r).clamp(0, h - 1) as usize;
            acc += kv * tmp.get(x, yy);
        }
        acc
    })
}

fn double_size(img: &Grid<f64>) -> Grid<f64> {
    let (w, h) = (img.width(), img.height());
    Grid::from_fn(2 * w, 2 * h, |x, y| {
        let sx = ((x as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (w - 1) as f64);
        let sy = ((y as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (h - 1) as f64);
        let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
        let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
        let bot = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    })
}

fn half_size(img: &Grid<f64>) -> Grid<f64> {
    Grid::from_fn(img.width() / 2, img.height() / 2, |x, y| *img.get(2 * x, 2 * y))
}

struct Octave {
    gauss: Vec<Grid<f64>>,
    dog: Vec<Grid<f64>>,
}

impl DogDetector {
    fn pyramid(&self, image: &Grid<f64>) -> Vec<Octave> {
        let s = self.scales_per_octave;
        let k = 2f64.powf(1.0 / s as f64);
        let (start, input_sigma) = if self.upsample_input {
            (double_size(image), 2.0 * self.input_sigma)
        } else {
            (image.clone(), self.input_sigma)
        };
        let init = (self.base_sigma.powi(2) - input_sigma.powi(2)).max(0.01).sqrt();
        let mut base = gaussian_blur(&start, init);
        let mut octaves = Vec::new();
        for _ in 0..self.octaves {
            if base.width() < 8 || base.height() < 8 {
                break;
            }
            let mut gauss = vec![base.clone()];
            for i in 1..s + 3 {
                let prev = self.base_sigma * k.powi(i as i32 - 1);
                let inc = (prev * k).powi(2) - prev.powi(2);
                gauss.push(gaussian_blur(&gauss[i - 1], inc.sqrt()));
            }
            let dog = gauss
                .windows(2)
                .map(|p| Grid::from_fn(p[0].width(), p[0].height(), |x, y| p[1].get(x, y) - p[0].get(x, y)))
                .collect();
            base = half_size(&gauss[s]);
            octaves.push(Octave { gauss, dog });
        }
        octaves
    }

    fn is_extremum(dog: &[Grid<f64>], l: usize, x: usize, y: usize) -> bool {
        let v = *dog[l].get(x, y);
        let mut is_max = true;
        let mut is_min = true;
        for layer in &dog[l - 1..=l + 1] {
            for yy in y - 1..=y + 1 {
                for xx in x - 1..=x + 1 {
                    if std::ptr::eq(layer, &dog[l]) && xx == x && yy == y {
                        continue;
                    }
                    let n = *layer.get(xx, yy);
                    is_max &= v > n;
                    is_min &= v < n;
                    if !is_max && !is_min {
                        return false;
                    }
                }
            }
        }
        is_max || is_min
    }

    fn passes_edge_test(&self, d: &Grid<f64>, x: usize, y: usize) -> bool {
        let v = *d.get(x, y);
        let dxx = d.get(x + 1, y) + d.get(x - 1, y) - 2.0 * v;
        let dyy = d.get(x, y + 1) + d.get(x, y - 1) - 2.0 * v;
        let dxy = (d.get(x + 1, y + 1) - d.get(x + 1, y - 1) - d.get(x - 1, y + 1) + d.get(x - 1, y - 1)) / 4.0;
        let tr = dxx + dyy;
        let det = dxx * dyy - dxy * dxy;
        let r = self.edge_ratio;
        det > 0.0 && tr * tr * r < (r + 1.0).powi(2) * det
    }
}

/// Sub-pixel offset of a 1-D quadratic through three samples, clamped to ±0.5.
fn quad_offset(a: f64, b: f64, c: f64) -> f64 {
    let den = a - 2.0 * b + c;
    if den.abs() < 1e-12 {
        0.0
    } else {
        (0.5 * (a - c) / den).clamp(-0.5, 0.5)
    }
}

fn dominant_orientation(img: &Grid<f64>, x: f64, y: f64, sigma: f64) -> f64 {
    const BINS: usize = 36;
    let mut hist = [0.0f64; BINS];
    let radius = (3.0 * 1.5 * sigma).round() as isize;
    let (cx, cy) = (x.round() as isize, y.round() as isize);
    let weight_sigma = 1.5 * sigma;
    let (w, h) = (img.width() as isize, img.height() as isize);
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (px, py) = (cx + dx, cy + dy);
            if px <= 0 || py <= 0 || px >= w - 1 || py >= h - 1 {
                continue;
            }
            let (pu, pv) = (px as usize, py as usize);
            let gx = img.get(pu + 1, pv) - img.get(pu - 1, pv);
            let gy = img.get(pu, pv + 1) - img.get(pu, pv - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            let wgt = (-((dx * dx + dy * dy) as f64) / (2.0 * weight_sigma * weight_sigma)).exp();
            let ang = gy.atan2(gx).rem_euclid(std::f64::consts::TAU);
            let bin = ((ang / std::f64::consts::TAU * BINS as f64) as usize).min(BINS - 1);
            hist[bin] += wgt * mag;
        }
    }
    let (best, _) = hist
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let prev = hist[(best + BINS - 1) % BINS];
    let next = hist[(best + 1) % BINS];
    let off = quad_offset(prev, hist[best], next);
    ((best as f64 + 0.5 + off) / BINS as f64) * std::f64::consts::TAU
}

fn descriptor(img: &Grid<f64>, x: f64, y: f64, sigma: f64, orientation: f64) -> Vec<f64> {
    const CELLS: usize = 4;
    const ORI: usize = 8;
    let cell = 3.0 * sigma;
    let half = cell * CELLS as f64 / 2.0;
    let radius = (half * std::f64::consts::SQRT_2 + cell).ceil() as isize;
    let (cos, sin) = (orientation.cos(), orientation.sin());
    let mut desc = vec![0.0f64; CELLS * CELLS * ORI];
    let (w, h) = (img.width() as isize, img.height() as isize);
    let (cx, cy) = (x.round() as isize, y.round() as isize);
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (px, py) = (cx + dx, cy + dy);
            if px <= 0 || py <= 0 || px >= w - 1 || py >= h - 1 {
                continue;
            }
            let (rx, ry) = (px as f64 - x, py as f64 - y);
            // rotate into the keypoint frame, in cell units centred on the grid
            let u = (cos * rx + sin * ry) / cell + CELLS as f64 / 2.0 - 0.5;
            let v = (-sin * rx + cos * ry) / cell + CELLS as f64 / 2.0 - 0.5;
            if u <= -1.0 || v <= -1.0 || u >= CELLS as f64 || v >= CELLS as f64 {
                continue;
            }
            let (pu, pv) = (px as usize, py as usize);
            let gx = img.get(pu + 1, pv) - img.get(pu - 1, pv);
            let gy = img.get(pu, pv + 1) - img.get(pu, pv - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            let ang = (gy.atan2(gx) - orientation).rem_euclid(std::f64::consts::TAU);
            let o = ang / std::f64::consts::TAU * ORI as f64;
            let wgt = (-(rx * rx + ry * ry) / (2.0 * half * half)).exp() * mag;

            let (u0, v0, o0) = (u.floor(), v.floor(), o.floor());
            let (fu, fv, fo) = (u - u0, v - v0, o - o0);
            for (iu, wu) in [(u0 as isize, 1.0 - fu), (u0 as isize + 1, fu)] {
                if iu < 0 || iu >= CELLS as isize {
                    continue;
                }
                for (iv, wv) in [(v0 as isize, 1.0 - fv), (v0 as isize + 1, fv)] {
                    if iv < 0 || iv >= CELLS as isize {
                        continue;
                    }
                    for (io, wo) in [(o0 as usize % ORI, 1.0 - fo), ((o0 as usize + 1) % ORI, fo)] {
                        let bin = (iv as usize * CELLS + iu as usize) * ORI + io;
                        desc[bin] += wgt * wu * wv * wo;
                    }
                }
            }
        }
    }
    normalize_clip(&mut desc);
    desc
}

fn normalize_clip(desc: &mut [f64]) {
    let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 0.0 {
        return;
    }
    desc.iter_mut().for_each(|v| *v = (*v / norm).min(0.2));
    let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    desc.iter_mut().for_each(|v| *v /= norm);
}

impl<T: Scalar> KeypointDetector<T> for DogDetector {
    fn detect(&self, image: &Grid<T>) -> Vec<Keypoint<T>> {
        let img = image.map(|v| v.to_f64_lossy());
        let (w, h) = (image.width() as f64, image.height() as f64);
        let s = self.scales_per_octave;
        let mut out = Vec::new();
        for (o, oct) in self.pyramid(&img).iter().enumerate() {
            let step = (1usize << o) as f64 / if self.upsample_input { 2.0 } else { 1.0 };
            let (ow, oh) = (oct.dog[0].width(), oct.dog[0].height());
            for l in 1..=s {
                let d = &oct.dog[l];
                for y in 1..oh - 1 {
                    for x in 1..ow - 1 {
                        let v = *d.get(x, y);
                        if v.abs() <= self.contrast_threshold
                            || !Self::is_extremum(&oct.dog, l, x, y)
                            || !self.passes_edge_test(d, x, y)
                        {
                            continue;
                        }
                        let ox = quad_offset(*d.get(x - 1, y), v, *d.get(x + 1, y));
                        let oy = quad_offset(*d.get(x, y - 1), v, *d.get(x, y + 1));
                        let (fx, fy) = (x as f64 + ox, y as f64 + oy);
                        // decimation keeps even pixels; the 2× upsampling is centre-aligned
                        let off = if self.upsample_input { -0.25 } else { 0.0 };
                        let (ix, iy) = (fx * step + off, fy * step + off);
                        let sigma_oct = self.base_sigma * 2f64.powf(l as f64 / s as f64);
                        let g = &oct.gauss[l];
                        let orientation = dominant_orientation(g, fx, fy, sigma_oct);
                        let desc = descriptor(g, fx, fy, sigma_oct, orientation);
                        let kx = ix.clamp(0.0, w - 1e-3);
                        let ky = iy.clamp(0.0, h - 1e-3);
                        out.push(Keypoint {
                            x: T::lit(kx),
                            y: T::lit(ky),
                            response: T::lit(v.abs()),
                            scale: T::lit(sigma_oct * step),
                            orientation: T::lit(orientation),
                            descriptor: desc.into_iter().map(T::lit).collect(),
                        });
                    }
                }
            }
        }
        out
    }
}

/// Luma conversion of a channel-major RGB buffer.
pub fn rgb_to_gray<T: Scalar>(rgb: &[T], width: usize, height: usize) -> Grid<T> {
    let n = width * height;
    let (r, g, b) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
    Grid::from_fn(width, height, |x, y| {
        let i = y * width + x;
        r * rgb[i] + g * rgb[n + i] + b * rgb[2 * n + i]
    })
}

//! Fundamental matrix estimation (normalized eight-point inside RANSAC) and
//! symmetric epipolar filtering of correspondences.
//!
//! Geometry is solved in `f64` whatever the point scalar type is.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// A correspondence: pixel `(x, y)` in frame one and in frame two.
pub type PointPair<T> = ([T; 2], [T; 2]);

pub const MIN_CORRESPONDENCES: usize = 8;

/// Rank-2, unit Frobenius norm matrix with `p2ᵀ F p1 = 0` for true correspondences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FundamentalMatrix {
    pub m: Matrix3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacConfig {
    pub iterations: usize,
    pub inlier_tol_px: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            inlier_tol_px: 2.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FundamentalEstimate {
    pub f: FundamentalMatrix,
    /// Indices of the consensus set under the returned matrix.
    pub inliers: Vec<usize>,
}

fn homog<T: Scalar>(p: [T; 2]) -> Vector3<f64> {
    Vector3::new(p[0].to_f64_lossy(), p[1].to_f64_lossy(), 1.0)
}

impl FundamentalMatrix {
    /// Wraps an arbitrary matrix, normalizing it to unit Frobenius norm.
    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        let n = m.norm();
        let mut m = if n > 0.0 { m / n } else { m };
        // fix the sign so equal geometries compare equal
        let (mut best, mut big) = (0.0f64, 0.0f64);
        for v in m.iter() {
            if v.abs() > big {
                big = v.abs();
                best = *v;
            }
        }
        if best < 0.0 {
            m = -m;
        }
        Self { m }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { m: self.m * s }
    }

    /// Mean of the point-to-epipolar-line distances in both images, in pixels.
    pub fn symmetric_distance<T: Scalar>(&self, pair: &PointPair<T>) -> f64 {
        let (p1, p2) = (homog(pair.0), homog(pair.1));
        let l2 = self.m * p1;
        let l1 = self.m.transpose() * p2;
        let r = p2.dot(&l2).abs();
        let n2 = (l2.x * l2.x + l2.y * l2.y).sqrt();
        let n1 = (l1.x * l1.x + l1.y * l1.y).sqrt();
        if n1 == 0.0 || n2 == 0.0 {
            return if r == 0.0 { 0.0 } else { f64::INFINITY };
        }
        0.5 * (r / n1 + r / n2)
    }
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn normalizing_transform(points: &[Vector3<f64>]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x / n, b + p.y / n));
    let mean_dist = points
        .iter()
        .map(|p| ((p.x - mx).powi(2) + (p.y - my).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let s = if mean_dist > 0.0 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

/// Normalized eight-point fit over all given correspondences, rank-2 enforced.
pub fn eight_point<T: Scalar>(pairs: &[PointPair<T>]) -> Result<FundamentalMatrix> {
    if pairs.len() < MIN_CORRESPONDENCES {
        return Err(CoreError::InsufficientCorrespondences(pairs.len()));
    }
    let p1: Vec<Vector3<f64>> = pairs.iter().map(|p| homog(p.0)).collect();
    let p2: Vec<Vector3<f64>> = pairs.iter().map(|p| homog(p.1)).collect();
    let t1 = normalizing_transform(&p1);
    let t2 = normalizing_transform(&p2);

    // pad to at least nine rows so the SVD exposes the full right null space
    let rows = pairs.len().max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (a1, a2)) in p1.iter().zip(&p2).enumerate() {
        let (x, y) = {
            let q = t1 * a1;
            (q.x, q.y)
        };
        let (u, v) = {
            let q = t2 * a2;
            (q.x, q.y)
        };
        let row = [u * x, u * y, u, v * x, v * y, v, x, y, 1.0];
        for (j, val) in row.iter().enumerate() {
            a[(i, j)] = *val;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| CoreError::DegenerateGeometry(pairs.len()))?;
    let (min_idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::MAX), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let f = v_t.row(min_idx);
    let fm = Matrix3::new(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8]);

    let f_svd = fm.svd(true, true);
    let (u, v_t3) = match (f_svd.u, f_svd.v_t) {
        (Some(u), Some(v)) => (u, v),
        _ => return Err(CoreError::DegenerateGeometry(pairs.len())),
    };
    let mut s = f_svd.singular_values;
    let (smallest, _) = s
        .iter()
        .enumerate()
        .fold((0, f64::MAX), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    s[smallest] = 0.0;
    let rank2 = u * Matrix3::from_diagonal(&s) * v_t3;
    let denorm = t2.transpose() * rank2 * t1;
    if !denorm.iter().all(|v| v.is_finite()) || denorm.norm() == 0.0 {
        return Err(CoreError::DegenerateGeometry(pairs.len()));
    }
    Ok(FundamentalMatrix::from_matrix(denorm))
}

fn consensus<T: Scalar>(f: &FundamentalMatrix, pairs: &[PointPair<T>], tol: f64) -> Vec<usize> {
    pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| f.symmetric_distance(p) <= tol)
        .map(|(i, _)| i)
        .collect()
}

/// RANSAC over minimal eight-point samples, refit on the largest consensus set.
pub fn estimate_fundamental<T: Scalar>(pairs: &[PointPair<T>], config: &RansacConfig) -> Result<FundamentalEstimate> {
    if pairs.len() < MIN_CORRESPONDENCES {
        return Err(CoreError::InsufficientCorrespondences(pairs.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Vec<usize> = Vec::new();
    let mut subset: Vec<PointPair<T>> = Vec::with_capacity(MIN_CORRESPONDENCES);
    for _ in 0..config.iterations.max(1) {
        subset.clear();
        subset.extend(
            sample(&mut rng, pairs.len(), MIN_CORRESPONDENCES)
                .into_iter()
                .map(|i| pairs[i]),
        );
        let Ok(f) = eight_point(&subset) else { continue };
        let inl = consensus(&f, pairs, config.inlier_tol_px);
        if inl.len() > best.len() {
            best = inl;
            if best.len() == pairs.len() {
                break;
            }
        }
    }
    if best.len() < MIN_CORRESPONDENCES {
        return Err(CoreError::DegenerateGeometry(best.len()));
    }
    // refit on the consensus until it stops growing
    let mut f = eight_point(&best.iter().map(|&i| pairs[i]).collect::<Vec<_>>())?;
    for _ in 0..3 {
        let inl = consensus(&f, pairs, config.inlier_tol_px);
        if inl.len() < MIN_CORRESPONDENCES {
            return Err(CoreError::DegenerateGeometry(inl.len()));
        }
        if inl == best {
            break;
        }
        best = inl;
        f = eight_point(&best.iter().map(|&i| pairs[i]).collect::<Vec<_>>())?;
    }
    let inliers = consensus(&f, pairs, config.inlier_tol_px);
    if inliers.len() < MIN_CORRESPONDENCES {
        return Err(CoreError::DegenerateGeometry(inliers.len()));
    }
    Ok(FundamentalEstimate { f, inliers })
}

/// Keeps pairs whose symmetric epipolar distance is at most `tol_px`.
pub fn epipolar_filter<T: Scalar>(pairs: &[PointPair<T>], f: &FundamentalMatrix, tol_px: f64) -> Vec<PointPair<T>> {
    pairs
        .iter()
        .filter(|p| f.symmetric_distance(p) <= tol_px)
        .copied()
        .collect()
}

#[cfg(test)]
pub(crate) mod test_geometry {
    use nalgebra::{Matrix3, Rotation3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::PointPair;

    /// Two calibrated views of random points in front of both cameras.
    pub struct TwoView {
        pub pairs: Vec<PointPair<f64>>,
        pub k: Matrix3<f64>,
        pub r: Rotation3<f64>,
        pub t: Vector3<f64>,
    }

    impl TwoView {
        pub fn true_f(&self) -> Matrix3<f64> {
            let t = self.t;
            let tx = Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0);
            let kinv = self.k.try_inverse().unwrap();
            kinv.transpose() * tx * self.r.matrix() * kinv
        }
    }

    pub fn synthesize(seed: u64, n: usize) -> TwoView {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = Matrix3::new(300.0, 0.0, 160.0, 0.0, 300.0, 120.0, 0.0, 0.0, 1.0);
        let r = Rotation3::from_euler_angles(
            rng.gen_range(-0.1..0.1),
            rng.gen_range(-0.1..0.1),
            rng.gen_range(-0.1..0.1),
        );
        let t = Vector3::new(
            rng.gen_range(0.3..0.6),
            rng.gen_range(-0.2..0.2),
            rng.gen_range(-0.2..0.2),
        );
        let mut pairs = Vec::new();
        while pairs.len() < n {
            let x = Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(3.0..9.0),
            );
            let x2 = r * x + t;
            if x2.z <= 0.5 {
                continue;
            }
            let a = k * x;
            let b = k * x2;
            let p1 = [a.x / a.z, a.y / a.z];
            let p2 = [b.x / b.z, b.y / b.z];
            let inside = |p: [f64; 2]| p[0] >= 0.0 && p[0] < 320.0 && p[1] >= 0.0 && p[1] < 240.0;
            if inside(p1) && inside(p2) {
                pairs.push((p1, p2));
            }
        }
        TwoView { pairs, k, r, t }
    }
}

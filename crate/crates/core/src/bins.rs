//! Adaptive depth bins on plain slices: widths from non-negative logits scaled
//! by a predicted range, cumulative-midpoint centers, and per-pixel regression
//! as the probability-weighted sum of centers.
//!
//! The network evaluates the same quantities on tensors; these functions are
//! the reference route used by tests and by the CLI tools.

use crate::scalar::Scalar;

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::lit(20.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Predicted depth range: `r_min + softplus(raw)`.
pub fn range_from_raw<T: Scalar>(range_raw: T, r_min: T) -> T {
    r_min + softplus(range_raw)
}

/// `b_i = r · (max(l_i, 0) + ε) / Σ_j (max(l_j, 0) + ε)`.
pub fn bin_widths<T: Scalar>(logits: &[T], range: T, eps: T) -> Vec<T> {
    let shifted: Vec<T> = logits.iter().map(|&l| l.max(T::zero()) + eps).collect();
    let total: T = shifted.iter().copied().sum();
    shifted.into_iter().map(|v| range * v / total).collect()
}

/// `c_i = d_min + Σ_{j<i} b_j + b_i / 2`.
pub fn bin_centers<T: Scalar>(widths: &[T], d_min: T) -> Vec<T> {
    let half = T::lit(0.5);
    let mut edge = d_min;
    widths
        .iter()
        .map(|&w| {
            let c = edge + half * w;
            edge = edge + w;
            c
        })
        .collect()
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|&v| (v - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `d = Σ_i c_i p_i` for one pixel.
pub fn regress_pixel<T: Scalar>(probs: &[T], centers: &[T]) -> T {
    probs.iter().zip(centers).map(|(&p, &c)| p * c).sum()
}

/// Regression over a channel-major `n × P` probability buffer.
pub fn regress_depth<T: Scalar>(probs: &[T], centers: &[T]) -> Vec<T> {
    let n = centers.len();
    let pixels = probs.len() / n;
    (0..pixels)
        .map(|p| (0..n).map(|i| probs[i * pixels + p] * centers[i]).sum())
        .collect()
}

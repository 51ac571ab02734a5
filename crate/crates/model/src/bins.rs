//! Adaptive bins on tensors: widths from logits and range, cumulative-midpoint
//! centers, and depth as the probability-weighted sum of centers.

use candle_core::Tensor;

use crate::error::Result;
use crate::ops::{cumsum_matrix, softplus, ShapeCache};

/// Rectified logits, range and widths of a batch.
#[derive(Clone, Debug)]
pub struct BinWidths {
    /// `[B, n]`, non-negative.
    pub logits: Tensor,
    /// `[B, 1]`, meters.
    pub range: Tensor,
    /// `[B, n]`, meters, summing to `range`.
    pub widths: Tensor,
}

/// `b_i = r · (relu(l_i) + ε) / Σ_j (relu(l_j) + ε)` with `r = r_min + softplus(raw)`.
///
/// `logits_raw` is `[B, n]` and `range_raw` is `[B, 1]`.
pub fn compute_bin_widths(logits_raw: &Tensor, range_raw: &Tensor, eps: f64, r_min: f64) -> Result<BinWidths> {
    let logits = logits_raw.relu()?;
    let range = softplus(range_raw)?.affine(1.0, r_min)?;
    let shifted = logits.affine(1.0, eps)?;
    let norm = shifted.broadcast_div(&shifted.sum_keepdim(1)?)?;
    let widths = norm.broadcast_mul(&range)?;
    Ok(BinWidths { logits, range, widths })
}

/// `c_i = d_min + Σ_{j<i} b_j + b_i / 2` for `[B, n]` widths.
pub fn compute_bin_centers(cache: &ShapeCache, widths: &Tensor, d_min: f64) -> Result<Tensor> {
    let n = widths.dim(1)?;
    let cum = widths.matmul(&cumsum_matrix(cache, n)?)?;
    Ok((cum - widths.affine(0.5, 0.0)?)?.affine(1.0, d_min)?)
}

/// `d̂ = Σ_i c_i · p_i` for probabilities `[n, B, h, w]` and centers `[B, n]`, giving `[B, h, w]`.
pub fn regress_depth(probs: &Tensor, centers: &Tensor) -> Result<Tensor> {
    let (n, b) = centers.t()?.dims2()?;
    let c = centers.t()?.contiguous()?.reshape((n, b, 1, 1))?;
    Ok(probs.broadcast_mul(&c)?.sum(0)?)
}

//! The training objective as a differentiable tensor operation.
//!
//! The forward pass evaluates the weighted RMSE + SILog + Chamfer objective of
//! every batch element with the analytic routines of the core crate; the
//! backward pass feeds their gradients back into the graph.

use candle_core::{CpuStorage, CustomOp2, Layout, Shape, Tensor};
use priordepth_core::objectives::{combine, loss_chamfer_grad, loss_rmse_grad, loss_silog_grad};
use priordepth_core::rng::derive_seed;
use priordepth_core::{LossBreakdown, LossConfig};

use crate::error::{ModelError, Result};
use crate::Real;

/// Ground truth of one batch element, flattened row-major.
#[derive(Clone, Debug)]
pub struct Target<T> {
    pub gt: Vec<T>,
    pub mask: Vec<bool>,
}

struct ObjectiveOp<T> {
    targets: Vec<Target<T>>,
    /// Per-element configs; they differ only in the Chamfer sampling seed.
    configs: Vec<LossConfig>,
}

struct Terms<T> {
    values: [T; 3],
    grads: [Vec<T>; 3],
}

impl<T: Real> ObjectiveOp<T> {
    fn terms(&self, b: usize, pred: &[T], centers: &[T]) -> Result<Terms<T>> {
        let t = &self.targets[b];
        let cfg = &self.configs[b];
        let (rmse, g_rmse) = loss_rmse_grad(pred, &t.gt, &t.mask)?;
        let (silog, g_silog) = loss_silog_grad(pred, &t.gt, &t.mask, cfg)?;
        let (chamfer, g_ch) = loss_chamfer_grad(centers, &t.gt, &t.mask, cfg)?;
        Ok(Terms {
            values: [rmse, silog, chamfer],
            grads: [g_rmse, g_silog, g_ch],
        })
    }
}

fn slice<'a, T: Real>(s: &'a CpuStorage, l: &Layout) -> candle_core::Result<&'a [T]> {
    let (a, b) = l
        .contiguous_offsets()
        .ok_or_else(|| candle_core::Error::Msg("objective needs contiguous inputs".into()))?;
    Ok(&s.as_slice::<T>()?[a..b])
}

fn to_candle(e: ModelError) -> candle_core::Error {
    match e {
        ModelError::Tensor(e) => e,
        e => candle_core::Error::Msg(e.to_string()),
    }
}

impl<T: Real> CustomOp2 for ObjectiveOp<T> {
    fn name(&self) -> &'static str {
        "depth-objective"
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let (b, hw) = l1.shape().dims2()?;
        let (_, n) = l2.shape().dims2()?;
        let pred = slice::<T>(s1, l1)?;
        let centers = slice::<T>(s2, l2)?;
        let mut acc = [T::zero(); 4];
        let inv_b = T::one() / T::from_usize_lossy(b);
        for i in 0..b {
            let t = self
                .terms(i, &pred[i * hw..(i + 1) * hw], &centers[i * n..(i + 1) * n])
                .map_err(to_candle)?;
            let [r, s, c] = t.values;
            let parts = [combine(r, s, c, &self.configs[i]), r, s, c];
            for (a, p) in acc.iter_mut().zip(parts) {
                *a = *a + p * inv_b;
            }
        }
        Ok((T::to_cpu_storage_owned(acc.to_vec()), Shape::from(4)))
    }

    fn bwd(
        &self,
        arg1: &Tensor,
        arg2: &Tensor,
        _res: &Tensor,
        grad_res: &Tensor,
    ) -> candle_core::Result<(Option<Tensor>, Option<Tensor>)> {
        let (b, hw) = arg1.dims2()?;
        let (_, n) = arg2.dims2()?;
        let pred = arg1.flatten_all()?.to_vec1::<T>()?;
        let centers = arg2.flatten_all()?.to_vec1::<T>()?;
        let g = grad_res.to_dtype(T::DTYPE)?.to_vec1::<T>()?;
        let inv_b = T::one() / T::from_usize_lossy(b);
        let mut d_pred = vec![T::zero(); b * hw];
        let mut d_centers = vec![T::zero(); b * n];
        for i in 0..b {
            let t = self
                .terms(i, &pred[i * hw..(i + 1) * hw], &centers[i * n..(i + 1) * n])
                .map_err(to_candle)?;
            let cfg = &self.configs[i];
            let k = |w: f64, j: usize| (g[0] * T::lit(w) + g[j + 1]) * inv_b;
            let (k_r, k_s, k_c) = (k(cfg.w_rmse, 0), k(cfg.w_silog, 1), k(cfg.w_chamfer, 2));
            for (j, d) in d_pred[i * hw..(i + 1) * hw].iter_mut().enumerate() {
                *d = k_r * t.grads[0][j] + k_s * t.grads[1][j];
            }
            for (j, d) in d_centers[i * n..(i + 1) * n].iter_mut().enumerate() {
                *d = k_c * t.grads[2][j];
            }
        }
        Ok((
            Some(Tensor::from_vec(d_pred, (b, hw), arg1.device())?),
            Some(Tensor::from_vec(d_centers, (b, n), arg2.device())?),
        ))
    }
}

/// Batch-mean `[total, rmse, silog, chamfer]` of depth `[B, H, W]` and centers `[B, n]`.
///
/// The Chamfer ground-truth sample of element `i` is seeded by `(cfg.seed, step, i)`.
pub fn objective<T: Real>(
    depth: &Tensor,
    centers: &Tensor,
    targets: &[Target<T>],
    cfg: &LossConfig,
    step: u64,
) -> Result<Tensor> {
    let (b, h, w) = depth.dims3()?;
    if targets.len() != b {
        return Err(ModelError::Shape(format!("{} targets for batch of {b}", targets.len())));
    }
    if let Some(t) = targets.iter().find(|t| t.gt.len() != h * w || t.mask.len() != h * w) {
        return Err(ModelError::Shape(format!(
            "target of {} pixels for {w}x{h} depth",
            t.gt.len()
        )));
    }
    let configs = (0..b)
        .map(|i| LossConfig {
            seed: derive_seed(cfg.seed, &[step, i as u64]),
            ..*cfg
        })
        .collect();
    let op = ObjectiveOp {
        targets: targets.to_vec(),
        configs,
    };
    let pred = depth.reshape((b, h * w))?.contiguous()?;
    Ok(pred.apply_op2(&centers.contiguous()?, op)?)
}

/// Reads the four entries of an [`objective`] result.
pub fn breakdown(loss: &Tensor) -> Result<LossBreakdown<f64>> {
    let v = loss.to_dtype(candle_core::DType::F64)?.to_vec1::<f64>()?;
    Ok(LossBreakdown {
        total: v[0],
        rmse: v[1],
        silog: v[2],
        chamfer: v[3],
    })
}

//! Training losses over valid ground-truth pixels, with analytic gradients.
//!
//! Every loss takes flat prediction, ground-truth and validity buffers of equal
//! length. The `*_grad` variants return the loss together with its gradient with
//! respect to the prediction (and the bin centers for the Chamfer term); masked
//! pixels always receive a zero gradient.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// Floor applied to predictions before taking logarithms, in meters.
pub const LOG_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub lambda_silog: f64,
    pub beta: f64,
    pub w_rmse: f64,
    pub w_silog: f64,
    pub w_chamfer: f64,
    /// Upper bound on ground-truth depths drawn for the Chamfer term.
    pub chamfer_samples: usize,
    pub seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_silog: 0.85,
            beta: 10.0,
            w_rmse: 0.3,
            w_silog: 0.6,
            w_chamfer: 0.1,
            chamfer_samples: 8192,
            seed: 0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_silog) {
            return Err(CoreError::InvalidArgument(format!(
                "lambda_silog must lie in [0, 1], got {}",
                self.lambda_silog
            )));
        }
        if self.w_rmse < 0.0 || self.w_silog < 0.0 || self.w_chamfer < 0.0 {
            return Err(CoreError::InvalidArgument("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Weighted objective and its terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown<T> {
    pub total: T,
    pub rmse: T,
    pub silog: T,
    pub chamfer: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveGrad<T> {
    pub breakdown: LossBreakdown<T>,
    pub d_pred: Vec<T>,
    pub d_centers: Vec<T>,
}

fn check_lengths<T>(pred: &[T], gt: &[T], mask: &[bool]) -> Result<()> {
    if pred.len() != gt.len() || gt.len() != mask.len() {
        return Err(CoreError::Shape(format!(
            "pred/gt/mask lengths {}/{}/{}",
            pred.len(),
            gt.len(),
            mask.len()
        )));
    }
    Ok(())
}

fn valid_count(mask: &[bool]) -> Result<usize> {
    match mask.iter().filter(|&&m| m).count() {
        0 => Err(CoreError::EmptyMask),
        n => Ok(n),
    }
}

pub fn loss_rmse<T: Scalar>(pred: &[T], gt: &[T], mask: &[bool]) -> Result<T> {
    loss_rmse_grad(pred, gt, mask).map(|(l, _)| l)
}

pub fn loss_rmse_grad<T: Scalar>(pred: &[T], gt: &[T], mask: &[bool]) -> Result<(T, Vec<T>)> {
    check_lengths(pred, gt, mask)?;
    let n = T::from_usize_lossy(valid_count(mask)?);
    let sse: T = pred
        .iter()
        .zip(gt)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((&p, &g), _)| (p - g) * (p - g))
        .sum();
    let loss = (sse / n).sqrt();
    let grad = pred
        .iter()
        .zip(gt)
        .zip(mask)
        .map(|((&p, &g), &m)| {
            if m && loss > T::zero() {
                (p - g) / (n * loss)
            } else {
                T::zero()
            }
        })
        .collect();
    Ok((loss, grad))
}

fn log_residuals<T: Scalar>(pred: &[T], gt: &[T], mask: &[bool]) -> Vec<T> {
    let floor = T::lit(LOG_FLOOR);
    pred.iter()
        .zip(gt)
        .zip(mask)
        .map(|((&p, &g), &m)| if m { p.max(floor).ln() - g.ln() } else { T::zero() })
        .collect()
}

pub fn loss_silog<T: Scalar>(pred: &[T], gt: &[T], mask: &[bool], cfg: &LossConfig) -> Result<T> {
    loss_silog_grad(pred, gt, mask, cfg).map(|(l, _)| l)
}

/// `β·sqrt(mean(g²) − λ·mean(g)²)` with `g = log(pred) − log(gt)`.
pub fn loss_silog_grad<T: Scalar>(pred: &[T], gt: &[T], mask: &[bool], cfg: &LossConfig) -> Result<(T, Vec<T>)> {
    check_lengths(pred, gt, mask)?;
    let n = T::from_usize_lossy(valid_count(mask)?);
    let (lambda, beta) = (T::lit(cfg.lambda_silog), T::lit(cfg.beta));
    let g = log_residuals(pred, gt, mask);
    let mean_sq = g.iter().map(|&v| v * v).sum::<T>() / n;
    let mean = g.iter().copied().sum::<T>() / n;
    let var = (mean_sq - lambda * mean * mean).max(T::zero());
    let root = var.sqrt();
    let loss = beta * root;
    let floor = T::lit(LOG_FLOOR);
    let two = T::lit(2.0);
    let grad = pred
        .iter()
        .zip(&g)
        .zip(mask)
        .map(|((&p, &gi), &m)| {
            if !m || root <= T::zero() || p < floor {
                return T::zero();
            }
            let dvar = (two * gi - two * lambda * mean) / n;
            beta * dvar / (two * root) / p
        })
        .collect();
    Ok((loss, grad))
}

/// Seeded uniform sample (without replacement) of at most `max_samples` valid depths.
pub fn sample_valid_depths<T: Scalar>(gt: &[T], mask: &[bool], max_samples: usize, seed: u64) -> Vec<T> {
    let valid: Vec<T> = gt.iter().zip(mask).filter(|(_, &m)| m).map(|(&g, _)| g).collect();
    if valid.len() <= max_samples {
        return valid;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, valid.len(), max_samples).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| valid[i]).collect()
}

/// For each query, index into `sorted` of its nearest value (lower index on ties).
fn nearest_sorted<T: Scalar>(sorted: &[(T, usize)], q: T) -> usize {
    let pos = sorted.partition_point(|&(v, _)| v < q);
    let mut best: Option<(T, usize, usize)> = None;
    for k in [pos.wrapping_sub(1), pos] {
        if let Some(&(v, orig)) = sorted.get(k) {
            let d = (v - q).abs();
            best = match best {
                Some((bd, bo, bk)) if d > bd || (d == bd && orig > bo) => Some((bd, bo, bk)),
                _ => Some((d, orig, k)),
            };
        }
    }
    best.expect("non-empty").2
}

fn sorted_with_index<T: Scalar>(v: &[T]) -> Vec<(T, usize)> {
    let mut s: Vec<(T, usize)> = v.iter().copied().zip(0..).collect();
    s.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
    s
}

/// Symmetric Chamfer distance between two 1-D point sets.
pub fn chamfer_sets<T: Scalar>(centers: &[T], targets: &[T]) -> Result<T> {
    chamfer_sets_grad(centers, targets).map(|(l, _)| l)
}

/// Chamfer distance and its gradient with respect to `centers`.
pub fn chamfer_sets_grad<T: Scalar>(centers: &[T], targets: &[T]) -> Result<(T, Vec<T>)> {
    if targets.is_empty() {
        return Err(CoreError::EmptyMask);
    }
    if centers.is_empty() {
        return Err(CoreError::InvalidArgument("no bin centers".into()));
    }
    let sc = sorted_with_index(centers);
    let st = sorted_with_index(targets);
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); centers.len()];
    for (i, &c) in centers.iter().enumerate() {
        let d = st[nearest_sorted(&st, c)].0;
        loss = loss + (c - d) * (c - d);
        grad[i] = grad[i] + two * (c - d);
    }
    for &d in targets {
        let (c, i) = sc[nearest_sorted(&sc, d)];
        loss = loss + (c - d) * (c - d);
        grad[i] = grad[i] + two * (c - d);
    }
    Ok((loss, grad))
}

pub fn loss_chamfer<T: Scalar>(centers: &[T], gt: &[T], mask: &[bool], cfg: &LossConfig) -> Result<T> {
    loss_chamfer_grad(centers, gt, mask, cfg).map(|(l, _)| l)
}

pub fn loss_chamfer_grad<T: Scalar>(centers: &[T], gt: &[T], mask: &[bool], cfg: &LossConfig) -> Result<(T, Vec<T>)> {
    if gt.len() != mask.len() {
        return Err(CoreError::Shape(format!("gt/mask lengths {}/{}", gt.len(), mask.len())));
    }
    valid_count(mask)?;
    let targets = sample_valid_depths(gt, mask, cfg.chamfer_samples, cfg.seed);
    chamfer_sets_grad(centers, &targets)
}

pub fn loss_objective<T: Scalar>(
    pred: &[T],
    gt: &[T],
    mask: &[bool],
    centers: &[T],
    cfg: &LossConfig,
) -> Result<LossBreakdown<T>> {
    objective_grad(pred, gt, mask, centers, cfg).map(|g| g.breakdown)
}

/// Weighted sum `w_rmse·RMSE + w_silog·SILog + w_chamfer·Chamfer` with gradients.
pub fn objective_grad<T: Scalar>(
    pred: &[T],
    gt: &[T],
    mask: &[bool],
    centers: &[T],
    cfg: &LossConfig,
) -> Result<ObjectiveGrad<T>> {
    let (rmse, g_rmse) = loss_rmse_grad(pred, gt, mask)?;
    let (silog, g_silog) = loss_silog_grad(pred, gt, mask, cfg)?;
    let (chamfer, g_chamfer) = loss_chamfer_grad(centers, gt, mask, cfg)?;
    let (w1, w2, w3) = (T::lit(cfg.w_rmse), T::lit(cfg.w_silog), T::lit(cfg.w_chamfer));
    let d_pred = g_rmse.iter().zip(&g_silog).map(|(&a, &b)| w1 * a + w2 * b).collect();
    let d_centers = g_chamfer.iter().map(|&g| w3 * g).collect();
    Ok(ObjectiveGrad {
        breakdown: LossBreakdown {
            total: combine(rmse, silog, chamfer, cfg),
            rmse,
            silog,
            chamfer,
        },
        d_pred,
        d_centers,
    })
}

/// `w_rmse·rmse + w_silog·silog + w_chamfer·chamfer`.
pub fn combine<T: Scalar>(rmse: T, silog: T, chamfer: T, cfg: &LossConfig) -> T {
    T::lit(cfg.w_rmse) * rmse + T::lit(cfg.w_silog) * silog + T::lit(cfg.w_chamfer) * chamfer
}

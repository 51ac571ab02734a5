//! Depth error metrics restricted to valid pixels below a ground-truth range cap.

use std::fmt::Write as _;

use crate::densify::PriorMaps;
use crate::error::{CoreError, Result};
use crate::grid::{ensure_same_shape, Grid};
use crate::objectives::LOG_FLOOR;
use crate::scalar::Scalar;

/// Range caps reported by default: full range, below 5 m, below 1 m.
pub const DEFAULT_CAPS: [f64; 3] = [f64::INFINITY, 5.0, 1.0];

pub const REPORT_CSV_HEADER: &str = "image_id,cap,rmse_lin,rmse_log,rmse_silog,mare,n_pixels";

/// Marks how per-image reports are aggregated in the summary row.
pub const AGGREGATION_NOTE: &str = "# aggregation=per_image_mean";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub rmse_lin: f64,
    pub rmse_log: f64,
    pub rmse_silog: f64,
    pub mare: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub range_cap: f64,
    pub n_pixels: usize,
    /// `None` when no valid pixel lies below the cap.
    pub metrics: Option<Metrics>,
}

impl MetricReport {
    pub fn is_empty(&self) -> bool {
        self.metrics.is_none()
    }
}

/// Metrics over pixels with valid ground truth and `gt < range_cap`.
pub fn evaluate<T: Scalar>(pred: &Grid<T>, gt: &Grid<T>, mask: &Grid<bool>, range_cap: f64) -> Result<MetricReport> {
    ensure_same_shape(pred, gt, "pred vs gt")?;
    ensure_same_shape(gt, mask, "gt vs mask")?;
    evaluate_slices(pred.as_slice(), gt.as_slice(), mask.as_slice(), range_cap)
}

pub fn evaluate_slices<T: Scalar>(pred: &[T], gt: &[T], mask: &[bool], range_cap: f64) -> Result<MetricReport> {
    if pred.len() != gt.len() || gt.len() != mask.len() {
        return Err(CoreError::Shape("pred/gt/mask lengths differ".into()));
    }
    let selected: Vec<(f64, f64)> = pred
        .iter()
        .zip(gt)
        .zip(mask)
        .filter_map(|((&p, &g), &m)| {
            let g = g.to_f64_lossy();
            (m && g.is_finite() && g > 0.0 && g < range_cap).then(|| (p.to_f64_lossy(), g))
        })
        .collect();
    let n_pixels = selected.len();
    if n_pixels == 0 {
        return Ok(MetricReport {
            range_cap,
            n_pixels,
            metrics: None,
        });
    }
    let n = n_pixels as f64;
    let mut se = 0.0;
    let mut are = 0.0;
    let logs: Vec<f64> = selected
        .iter()
        .map(|&(p, g)| {
            se += (p - g) * (p - g);
            are += (p - g).abs() / g.abs();
            p.max(LOG_FLOOR).ln() - g.ln()
        })
        .collect();
    let mean_log = logs.iter().sum::<f64>() / n;
    let rmse_log = (logs.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    // α = mean(log d − log d̂) = −mean_log
    let rmse_silog = (logs.iter().map(|v| (v - mean_log).powi(2)).sum::<f64>() / n).sqrt();
    Ok(MetricReport {
        range_cap,
        n_pixels,
        metrics: Some(Metrics {
            rmse_lin: (se / n).sqrt(),
            rmse_log,
            rmse_silog,
            mare: are / n,
        }),
    })
}

pub fn evaluate_ranges<T: Scalar>(
    pred: &Grid<T>,
    gt: &Grid<T>,
    mask: &Grid<bool>,
    caps: &[f64],
) -> Result<Vec<MetricReport>> {
    if caps.is_empty() {
        return Err(CoreError::InvalidArgument("no range caps given".into()));
    }
    caps.iter().map(|&c| evaluate(pred, gt, mask, c)).collect()
}

/// Scores the nearest-keypoint channel as if it were the prediction.
pub fn evaluate_prior_standalone<T: Scalar>(
    maps: &PriorMaps<T>,
    gt: &Grid<T>,
    mask: &Grid<bool>,
    range_cap: f64,
) -> Result<MetricReport> {
    evaluate(&maps.s1, gt, mask, range_cap)
}

/// Mean of the non-empty reports for one cap; pixel counts are summed.
pub fn mean_report(reports: &[MetricReport], range_cap: f64) -> MetricReport {
    let filled: Vec<&Metrics> = reports.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let n_pixels = reports.iter().map(|r| r.n_pixels).sum();
    if filled.is_empty() {
        return MetricReport {
            range_cap,
            n_pixels,
            metrics: None,
        };
    }
    let k = filled.len() as f64;
    let avg = |f: fn(&Metrics) -> f64| filled.iter().map(|m| f(m)).sum::<f64>() / k;
    MetricReport {
        range_cap,
        n_pixels,
        metrics: Some(Metrics {
            rmse_lin: avg(|m| m.rmse_lin),
            rmse_log: avg(|m| m.rmse_log),
            rmse_silog: avg(|m| m.rmse_silog),
            mare: avg(|m| m.mare),
        }),
    }
}

pub fn format_cap(cap: f64) -> String {
    if cap.is_infinite() {
        "inf".to_string()
    } else {
        format!("{cap}")
    }
}

fn push_row(out: &mut String, id: &str, r: &MetricReport) {
    let _ = write!(out, "{id},{}", format_cap(r.range_cap));
    match &r.metrics {
        Some(m) => {
            let _ = write!(
                out,
                ",{:.6},{:.6},{:.6},{:.6}",
                m.rmse_lin, m.rmse_log, m.rmse_silog, m.mare
            );
        }
        None => out.push_str(",NaN,NaN,NaN,NaN"),
    }
    let _ = writeln!(out, ",{}", r.n_pixels);
}

/// CSV with one row per (image, cap) followed by one `mean` row per cap.
pub fn reports_to_csv(rows: &[(String, Vec<MetricReport>)], caps: &[f64]) -> String {
    let mut out = String::new();
    out.push_str(AGGREGATION_NOTE);
    out.push('\n');
    out.push_str(REPORT_CSV_HEADER);
    out.push('\n');
    for (id, reports) in rows {
        for r in reports {
            push_row(&mut out, id, r);
        }
    }
    for (ci, &cap) in caps.iter().enumerate() {
        let col: Vec<MetricReport> = rows.iter().filter_map(|(_, r)| r.get(ci).copied()).collect();
        push_row(&mut out, "mean", &mean_report(&col, cap));
    }
    out
}

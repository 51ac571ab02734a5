//! Prior extraction from a consecutive frame pair: detect per grid cell, match
//! mutually, reject matches off the estimated epipolar geometry, and read the
//! surviving frame-one keypoints' depths from ground truth.

use crate::detect::{detect_keypoints_with, DogDetector, GridSpec, KeypointDetector};
use crate::error::{CoreError, Result};
use crate::fundamental::{epipolar_filter, estimate_fundamental, PointPair, RansacConfig};
use crate::grid::Grid;
use crate::matching::match_bidirectional;
use crate::scalar::Scalar;
use crate::sparse::{sample_prior_depths, SparsePrior};

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractConfig {
    pub grid: GridSpec,
    pub detector: DogDetector,
    pub ransac: RansacConfig,
    /// Symmetric epipolar distance threshold of the final filter, pixels.
    pub epipolar_tol_px: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            detector: DogDetector::default(),
            ransac: RansacConfig::default(),
            epipolar_tol_px: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Extraction<T> {
    pub prior: SparsePrior<T>,
    pub keypoints: (usize, usize),
    pub matches: usize,
    pub inliers: usize,
    /// Why the prior is empty, if it is.
    pub warning: Option<String>,
}

/// Extracts the prior of frame one from the pair `(gray_a, gray_b)`.
///
/// Too few matches or a degenerate geometry is not an error: the prior comes
/// back empty with a warning.
pub fn extract_pair_prior<T: Scalar>(
    id: &str,
    gray_a: &Grid<T>,
    gray_b: &Grid<T>,
    depth_a: &Grid<T>,
    validity_a: &Grid<bool>,
    cfg: &ExtractConfig,
) -> Result<Extraction<T>> {
    extract_pair_prior_with(&cfg.detector, id, gray_a, gray_b, depth_a, validity_a, cfg)
}

pub fn extract_pair_prior_with<T: Scalar, D: KeypointDetector<T> + ?Sized>(
    detector: &D,
    id: &str,
    gray_a: &Grid<T>,
    gray_b: &Grid<T>,
    depth_a: &Grid<T>,
    validity_a: &Grid<bool>,
    cfg: &ExtractConfig,
) -> Result<Extraction<T>> {
    if !cfg.epipolar_tol_px.is_nan() && cfg.epipolar_tol_px <= 0.0 {
        return Err(CoreError::InvalidArgument("epipolar tolerance must be positive".into()));
    }
    let ka = detect_keypoints_with(detector, gray_a, cfg.grid);
    let kb = detect_keypoints_with(detector, gray_b, cfg.grid);
    let da: Vec<&[T]> = ka.iter().map(|k| k.descriptor.as_slice()).collect();
    let db: Vec<&[T]> = kb.iter().map(|k| k.descriptor.as_slice()).collect();
    let matches = match_bidirectional(&da, &db);
    let pairs: Vec<PointPair<T>> = matches
        .iter()
        .map(|m| {
            let (a, b) = (&ka[m.index_a], &kb[m.index_b]);
            ([a.x, a.y], [b.x, b.y])
        })
        .collect();
    let mut out = Extraction {
        prior: SparsePrior::empty(id),
        keypoints: (ka.len(), kb.len()),
        matches: pairs.len(),
        inliers: 0,
        warning: None,
    };
    let est = match estimate_fundamental(&pairs, &cfg.ransac) {
        Ok(est) => est,
        Err(e @ (CoreError::InsufficientCorrespondences(_) | CoreError::DegenerateGeometry(_))) => {
            out.warning = Some(e.to_string());
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let kept = epipolar_filter(&pairs, &est.f, cfg.epipolar_tol_px);
    out.inliers = kept.len();
    let points: Vec<(T, T)> = kept.iter().map(|(a, _)| (a[0], a[1])).collect();
    out.prior = sample_prior_depths(id, &points, depth_a, validity_a)?;
    if out.prior.is_empty() {
        out.warning = Some("no inlier keypoint has valid depth".into());
    }
    Ok(out)
}

//! Training samples and the random photometric/geometric augmentations.

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::grid::{ensure_same_shape, Grid};
use crate::scalar::Scalar;
use crate::sparse::SparsePrior;

/// One RGB image with metric ground truth and its sparse prior.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthSample<T> {
    pub id: String,
    /// Channel-major `3 × H × W`, values in `[0, 1]`.
    pub image: Vec<T>,
    pub gt_depth: Grid<T>,
    pub validity: Grid<bool>,
    pub prior: SparsePrior<T>,
}

impl<T: Scalar> DepthSample<T> {
    pub fn new(
        id: impl Into<String>,
        image: Vec<T>,
        gt_depth: Grid<T>,
        validity: Grid<bool>,
        prior: SparsePrior<T>,
    ) -> Result<Self> {
        let s = Self {
            id: id.into(),
            image,
            gt_depth,
            validity,
            prior,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn width(&self) -> usize {
        self.gt_depth.width()
    }

    pub fn height(&self) -> usize {
        self.gt_depth.height()
    }

    pub fn validate(&self) -> Result<()> {
        ensure_same_shape(&self.gt_depth, &self.validity, "depth vs validity")?;
        let n = self.gt_depth.len();
        if self.image.len() != 3 * n {
            return Err(CoreError::Shape(format!(
                "image holds {} values, expected 3x{n}",
                self.image.len()
            )));
        }
        self.prior.validate(self.width(), self.height())
    }

    /// One image channel as a raster.
    pub fn channel(&self, c: usize) -> Grid<T> {
        let n = self.gt_depth.len();
        Grid::from_vec(self.width(), self.height(), self.image[c * n..(c + 1) * n].to_vec()).expect("validated shape")
    }

    /// `(min, max)` of valid ground truth, `None` if nothing is valid.
    pub fn depth_extent(&self) -> Option<(T, T)> {
        self.gt_depth
            .as_slice()
            .iter()
            .zip(self.validity.as_slice())
            .filter(|(_, &m)| m)
            .fold(None, |acc, (&d, _)| match acc {
                None => Some((d, d)),
                Some((lo, hi)) => Some((lo.min(d), hi.max(d))),
            })
    }

    pub fn flip_x(&self) -> Self {
        let (w, h) = (self.width(), self.height());
        let n = w * h;
        let mut image = Vec::with_capacity(self.image.len());
        for c in 0..3 {
            for y in 0..h {
                let row = &self.image[c * n + y * w..c * n + (y + 1) * w];
                image.extend(row.iter().rev());
            }
        }
        Self {
            id: self.id.clone(),
            image,
            gt_depth: self.gt_depth.flip_x(),
            validity: self.validity.flip_x(),
            prior: self.prior.flip_x(w),
        }
    }

    /// Multiplies ground truth and prior depths by the same factor.
    pub fn scale_depth(&self, s: T) -> Self {
        Self {
            id: self.id.clone(),
            image: self.image.clone(),
            gt_depth: self.gt_depth.map(|&d| d * s),
            validity: self.validity.clone(),
            prior: self.prior.scale_depths(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub p_hflip: f64,
    pub brightness_range: (f64, f64),
    pub channel_gain_range: (f64, f64),
    pub depth_scale_range: (f64, f64),
    pub p_prior_dropout: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_hflip: 0.5,
            brightness_range: (0.7, 1.3),
            channel_gain_range: (0.9, 1.1),
            depth_scale_range: (0.8, 1.2),
            p_prior_dropout: 0.1,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// All transforms disabled.
    pub fn identity() -> Self {
        Self {
            p_hflip: 0.0,
            brightness_range: (1.0, 1.0),
            channel_gain_range: (1.0, 1.0),
            depth_scale_range: (1.0, 1.0),
            p_prior_dropout: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_hflip", self.p_hflip), ("p_prior_dropout", self.p_prior_dropout)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CoreError::InvalidArgument(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        for (name, (lo, hi)) in [
            ("brightness_range", self.brightness_range),
            ("channel_gain_range", self.channel_gain_range),
            ("depth_scale_range", self.depth_scale_range),
        ] {
            if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0) {
                return Err(CoreError::InvalidArgument(format!(
                    "{name} must be positive and contain 1, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Concrete outcome of one augmentation draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDraw {
    pub hflip: bool,
    pub brightness: f64,
    pub channel_gain: [f64; 3],
    pub depth_scale: f64,
    pub drop_prior: bool,
}

impl AugmentDraw {
    pub fn identity() -> Self {
        Self {
            hflip: false,
            brightness: 1.0,
            channel_gain: [1.0; 3],
            depth_scale: 1.0,
            drop_prior: false,
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    let u: f64 = rng.gen();
    if hi > lo {
        lo + (hi - lo) * u
    } else {
        lo
    }
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.gen::<f64>() < p
}

/// Draws every random quantity up front, always consuming the same number of values.
pub fn draw_augment<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> AugmentDraw {
    let hflip = bernoulli(rng, cfg.p_hflip);
    let brightness = uniform(rng, cfg.brightness_range);
    let channel_gain = [
        uniform(rng, cfg.channel_gain_range),
        uniform(rng, cfg.channel_gain_range),
        uniform(rng, cfg.channel_gain_range),
    ];
    let depth_scale = uniform(rng, cfg.depth_scale_range);
    let drop_prior = bernoulli(rng, cfg.p_prior_dropout);
    AugmentDraw {
        hflip,
        brightness,
        channel_gain,
        depth_scale,
        drop_prior,
    }
}

pub fn apply_augment<T: Scalar>(sample: &DepthSample<T>, draw: &AugmentDraw) -> DepthSample<T> {
    let mut out = if draw.hflip { sample.flip_x() } else { sample.clone() };
    let n = out.gt_depth.len();
    if draw.brightness != 1.0 || draw.channel_gain != [1.0; 3] {
        for (c, gain) in draw.channel_gain.iter().enumerate() {
            let k = T::lit(draw.brightness * gain);
            for v in &mut out.image[c * n..(c + 1) * n] {
                *v = (*v * k).max(T::zero()).min(T::one());
            }
        }
    }
    if draw.depth_scale != 1.0 {
        out = out.scale_depth(T::lit(draw.depth_scale));
    }
    if draw.drop_prior {
        out.prior = SparsePrior::empty(out.prior.source_image_id.clone());
    }
    out
}

pub fn augment<T: Scalar, R: Rng + ?Sized>(
    sample: &DepthSample<T>,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> DepthSample<T> {
    apply_augment(sample, &draw_augment(cfg, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{sample_prior_depths, PriorPoint};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> DepthSample<f64> {
        let (w, h) = (7, 5);
        let gt = Grid::from_fn(w, h, |x, y| 1.0 + 0.5 * x as f64 + 0.25 * y as f64);
        let validity = Grid::from_fn(w, h, |x, y| (x * 3 + y) % 5 != 0);
        let image = (0..3 * w * h).map(|i| (i % 17) as f64 / 16.0).collect();
        let prior = SparsePrior::new(
            "s",
            vec![
                PriorPoint {
                    x: 1.0,
                    y: 1.0,
                    depth: *gt.get(1, 1),
                },
                PriorPoint {
                    x: 6.0,
                    y: 4.0,
                    depth: *gt.get(6, 4),
                },
            ],
        );
        DepthSample::new("s", image, gt, validity, prior).unwrap()
    }

    #[test]
    fn flip_is_involution() {
        let s = sample();
        assert_eq!(s.flip_x().flip_x(), s);
        assert_ne!(s.flip_x(), s);
        let f = s.flip_x();
        assert_eq!(f.prior.points[0].x, 5.0);
        assert_eq!(*f.gt_depth.get(0, 2), *s.gt_depth.get(6, 2));
        assert_eq!(f.image[3], s.image[3]);
    }

    #[test]
    fn identity_config_is_identity() {
        let s = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            assert_eq!(augment(&s, &AugmentConfig::identity(), &mut rng), s);
        }
    }

    #[test]
    fn depth_scale_is_shared() {
        let s = sample();
        let draw = AugmentDraw {
            depth_scale: 1.2,
            ..AugmentDraw::identity()
        };
        let a = apply_augment(&s, &draw);
        for (g0, g1) in s.gt_depth.as_slice().iter().zip(a.gt_depth.as_slice()) {
            assert_eq!(*g1, g0 * 1.2);
        }
        let keypoints: Vec<(f64, f64)> = a.prior.points.iter().map(|p| (p.x, p.y)).collect();
        let resampled = sample_prior_depths("s", &keypoints, &a.gt_depth, &a.validity).unwrap();
        assert_eq!(resampled.points, a.prior.points);
    }

    #[test]
    fn photometric_stays_in_unit_range() {
        let s = sample();
        let draw = AugmentDraw {
            brightness: 1.3,
            channel_gain: [1.1, 0.9, 1.0],
            ..AugmentDraw::identity()
        };
        let a = apply_augment(&s, &draw);
        assert!(a.image.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a.gt_depth, s.gt_depth);
    }

    #[test]
    fn dropout_and_validation() {
        let s = sample();
        let draw = AugmentDraw {
            drop_prior: true,
            ..AugmentDraw::identity()
        };
        assert!(apply_augment(&s, &draw).prior.is_empty());
        assert!(AugmentConfig::default().validate().is_ok());
        let bad = AugmentConfig {
            depth_scale_range: (1.1, 1.2),
            ..AugmentConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}

//! Supervised training: batch preparation (augmentation, prior subsampling,
//! densification), the optimizer step, epochs with evaluation and checkpoints,
//! and the prediction helpers shared with evaluation.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use candle_core::Device;
use priordepth_core::evaluation::{evaluate_ranges, mean_report, MetricReport, DEFAULT_CAPS};
use priordepth_core::rng::{derive_seed, permutation, rng_for};
use priordepth_core::sparse::subsample_prior;
use priordepth_core::{
    augment, densify_or_zero, zero_prior_maps, AugmentConfig, DepthSample, Grid, LossBreakdown, LossConfig, PriorMaps,
};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_network, load_train_state, save_network, save_train_state, TrainMeta};
use crate::error::{ModelError, Result};
use crate::network::{DepthNetwork, NetInput};
use crate::objective::{breakdown, objective, Target};
use crate::optim::{clip_grad_norm, collect_grads, lr_schedule, AdamW, AdamWConfig};
use crate::Real;

const TAG_AUGMENT: u64 = 1;
const TAG_PRIOR: u64 = 2;
const TAG_SHUFFLE: u64 = 3;

pub const STEP_LOG_HEADER: &str = "step,epoch,lr,total,rmse,silog,chamfer";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub decay_rate: f64,
    pub batch_size: usize,
    pub epochs: u64,
    pub weight_decay: f64,
    /// Global gradient-norm bound; zero disables clipping.
    pub grad_clip_norm: f64,
    pub n_priors: usize,
    pub seed: u64,
    pub checkpoint_dir: Option<PathBuf>,
    /// Evaluate every this many epochs; zero disables evaluation.
    pub eval_every: u64,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-4,
            decay_rate: 0.9,
            batch_size: 6,
            epochs: 25,
            weight_decay: 1e-2,
            grad_clip_norm: 1.0,
            n_priors: 200,
            seed: 0,
            checkpoint_dir: None,
            eval_every: 1,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn toy() -> Self {
        Self {
            batch_size: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) {
            return Err(ModelError::Config(format!(
                "base_lr must be positive, got {}",
                self.base_lr
            )));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return Err(ModelError::Config(format!(
                "decay_rate must lie in (0, 1], got {}",
                self.decay_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be at least 1".into()));
        }
        if self.weight_decay < 0.0 || self.grad_clip_norm < 0.0 {
            return Err(ModelError::Config(
                "weight_decay and grad_clip_norm must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn lr(&self, epoch: u64) -> f64 {
        lr_schedule(epoch, self.base_lr, self.decay_rate)
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// Which prior the network sees at prediction time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorMode {
    /// All-zero maps.
    Zero,
    /// At most this many points of the sample's prior, seeded subsample.
    Count(usize),
}

/// Dense maps of `sample` under `mode`.
pub fn prior_maps_for<T: Real>(
    sample: &DepthSample<T>,
    mode: PriorMode,
    sigma: f64,
    seed: u64,
) -> Result<PriorMaps<T>> {
    let (w, h) = (sample.width(), sample.height());
    Ok(match mode {
        PriorMode::Zero => zero_prior_maps(w, h, T::lit(sigma)),
        PriorMode::Count(n) => {
            let p = subsample_prior(&sample.prior, n, seed);
            densify_or_zero(&p, w, h, T::lit(sigma))?
        }
    })
}

fn check_size<T: Real>(net: &DepthNetwork<T>, s: &DepthSample<T>) -> Result<()> {
    let c = net.config();
    if (s.width(), s.height()) != (c.input_width, c.input_height) {
        return Err(ModelError::Shape(format!(
            "sample {} is {}x{}, network expects {}x{}",
            s.id,
            s.width(),
            s.height(),
            c.input_width,
            c.input_height
        )));
    }
    Ok(())
}

/// Predictions for `samples` in batches of `batch`.
pub fn predict_samples<T: Real>(
    net: &DepthNetwork<T>,
    samples: &[DepthSample<T>],
    mode: PriorMode,
    seed: u64,
    batch: usize,
) -> Result<Vec<Grid<T>>> {
    let sigma = net.config().prior_sigma;
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch.max(1)) {
        let mut images = Vec::with_capacity(chunk.len());
        let mut maps = Vec::with_capacity(chunk.len());
        for s in chunk {
            check_size(net, s)?;
            images.push(s.image.as_slice());
            maps.push(prior_maps_for(s, mode, sigma, seed)?);
        }
        let input = NetInput::new(net.config(), &images, &maps, net.device())?;
        out.extend(net.forward(&input)?.depth_grids()?);
    }
    Ok(out)
}

/// Per-sample reports at each cap.
pub fn evaluate_samples<T: Real>(
    net: &DepthNetwork<T>,
    samples: &[DepthSample<T>],
    mode: PriorMode,
    caps: &[f64],
    seed: u64,
) -> Result<Vec<(String, Vec<MetricReport>)>> {
    let preds = predict_samples(net, samples, mode, seed, 8)?;
    samples
        .iter()
        .zip(&preds)
        .map(|(s, p)| Ok((s.id.clone(), evaluate_ranges(p, &s.gt_depth, &s.validity, caps)?)))
        .collect()
}

/// Mean report per cap over the rows of [`evaluate_samples`].
pub fn summarize(rows: &[(String, Vec<MetricReport>)], caps: &[f64]) -> Vec<MetricReport> {
    caps.iter()
        .enumerate()
        .map(|(i, &c)| {
            let per: Vec<MetricReport> = rows.iter().map(|(_, r)| r[i].clone()).collect();
            mean_report(&per, c)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub epoch: u64,
    /// Means at the default caps.
    pub reports: Vec<MetricReport>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitReport {
    pub losses: Vec<LossBreakdown<f64>>,
    pub evals: Vec<EvalRecord>,
}

/// Owns the network and optimizer state for one training run.
pub struct Trainer<T> {
    pub net: DepthNetwork<T>,
    pub config: TrainConfig,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    pub meta: TrainMeta,
    opt: AdamW,
    log: Option<BufWriter<File>>,
}

impl<T: Real> Trainer<T> {
    pub fn new(net: DepthNetwork<T>, config: TrainConfig, loss: LossConfig, augment: AugmentConfig) -> Result<Self> {
        config.validate()?;
        loss.validate()?;
        augment.validate()?;
        let opt = AdamW::new(config.adamw());
        Ok(Self {
            net,
            config,
            loss,
            augment,
            meta: TrainMeta::default(),
            opt,
            log: None,
        })
    }

    /// Continues from a network checkpoint and its optimizer state file.
    pub fn resume(
        params: &Path,
        state: &Path,
        config: TrainConfig,
        loss: LossConfig,
        augment: AugmentConfig,
        device: &Device,
    ) -> Result<Self> {
        let net = load_network::<T>(params, device)?;
        let (opt, meta) = load_train_state(state, config.adamw(), T::DTYPE, device)?;
        let mut t = Self::new(net, config, loss, augment)?;
        t.opt = opt;
        t.meta = meta;
        Ok(t)
    }

    /// Appends one CSV row per step to `path` (header written if the file is new).
    pub fn log_to(&mut self, path: &Path) -> Result<()> {
        let io = |source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        };
        let fresh = !path.exists();
        let f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        let mut w = BufWriter::new(f);
        if fresh {
            writeln!(w, "{STEP_LOG_HEADER}").map_err(io)?;
        }
        self.log = Some(w);
        Ok(())
    }

    /// Network input and targets for one batch, seeded by the current step.
    pub fn prepare(&self, batch: &[&DepthSample<T>]) -> Result<(NetInput, Vec<Target<T>>)> {
        let step = self.meta.step;
        let sigma = self.net.config().prior_sigma;
        let mut images = Vec::with_capacity(batch.len());
        let mut maps = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for (i, s) in batch.iter().enumerate() {
            check_size(&self.net, s)?;
            let mut rng = rng_for(self.config.seed, &[TAG_AUGMENT, self.augment.seed, step, i as u64]);
            let a = augment(s, &self.augment, &mut rng);
            let prior = subsample_prior(
                &a.prior,
                self.config.n_priors,
                derive_seed(self.config.seed, &[TAG_PRIOR, step, i as u64]),
            );
            maps.push(densify_or_zero(&prior, a.width(), a.height(), T::lit(sigma))?);
            let gt = a.gt_depth.as_slice().to_vec();
            let mask = gt
                .iter()
                .zip(a.validity.as_slice())
                .map(|(&g, &v)| v && g.is_finite() && g > T::zero())
                .collect();
            targets.push(Target { gt, mask });
            images.push(a.image);
        }
        let refs: Vec<&[T]> = images.iter().map(|v| v.as_slice()).collect();
        let input = NetInput::new(self.net.config(), &refs, &maps, self.net.device())?;
        Ok((input, targets))
    }

    /// One optimizer step on `batch`.
    pub fn train_step(&mut self, batch: &[&DepthSample<T>]) -> Result<LossBreakdown<f64>> {
        if batch.is_empty() {
            return Err(ModelError::Shape("empty batch".into()));
        }
        let (input, targets) = self.prepare(batch)?;
        let pred = self.net.forward(&input)?;
        let loss = objective(&pred.depth, &pred.centers, &targets, &self.loss, self.meta.step)?;
        let parts = breakdown(&loss)?;
        if !parts.total.is_finite() {
            let ids: Vec<String> = batch.iter().map(|s| s.id.clone()).collect();
            log::error!("non-finite loss {parts:?} at step {} on {ids:?}", self.meta.step);
            return Err(ModelError::NonFiniteLoss { ids });
        }
        let grads = loss.get(0)?.backward()?;
        let mut grads = collect_grads(self.net.params(), &grads)?;
        if self.config.grad_clip_norm > 0.0 {
            clip_grad_norm(&mut grads, self.config.grad_clip_norm)?;
        }
        let lr = self.config.lr(self.meta.epoch);
        self.opt.step(self.net.params(), &grads, lr)?;
        if let Some(w) = self.log.as_mut() {
            let line = format!(
                "{},{},{lr:e},{},{},{},{}",
                self.meta.step, self.meta.epoch, parts.total, parts.rmse, parts.silog, parts.chamfer
            );
            writeln!(w, "{line}").map_err(|source| ModelError::Io {
                path: PathBuf::from("step log"),
                source,
            })?;
        }
        self.meta.step += 1;
        Ok(parts)
    }

    fn done(&self) -> bool {
        self.config.max_steps.is_some_and(|m| self.meta.step >= m)
    }

    /// Shuffled pass over `train`; returns the per-step losses.
    pub fn run_epoch(&mut self, train: &[DepthSample<T>]) -> Result<Vec<LossBreakdown<f64>>> {
        let order = permutation(self.config.seed, &[TAG_SHUFFLE, self.meta.epoch], train.len());
        let mut losses = Vec::new();
        for chunk in order.chunks(self.config.batch_size) {
            if self.done() {
                break;
            }
            let batch: Vec<&DepthSample<T>> = chunk.iter().map(|&i| &train[i]).collect();
            losses.push(self.train_step(&batch)?);
        }
        Ok(losses)
    }

    /// Writes `<dir>/<tag>.safetensors` and `<dir>/<tag>.state.safetensors`.
    pub fn save(&self, dir: &Path, tag: &str) -> Result<PathBuf> {
        let params = dir.join(format!("{tag}.safetensors"));
        save_network(&self.net, &params)?;
        save_train_state(&dir.join(format!("{tag}.state.safetensors")), &self.opt, &self.meta)?;
        Ok(params)
    }

    /// Epochs from the current one to `config.epochs`, with evaluation and checkpoints.
    pub fn fit(&mut self, train: &[DepthSample<T>], eval: &[DepthSample<T>]) -> Result<FitReport> {
        if train.is_empty() {
            return Err(ModelError::Config("training set is empty".into()));
        }
        let mut report = FitReport::default();
        while self.meta.epoch < self.config.epochs && !self.done() {
            let losses = self.run_epoch(train)?;
            if let Some(last) = losses.last() {
                log::info!(
                    "epoch {} step {} loss {:.5} (rmse {:.4}, silog {:.4}, chamfer {:.4})",
                    self.meta.epoch,
                    self.meta.step,
                    last.total,
                    last.rmse,
                    last.silog,
                    last.chamfer
                );
            }
            report.losses.extend(losses);
            self.meta.epoch += 1;
            let epoch = self.meta.epoch;
            let mut improved = false;
            if self.config.eval_every > 0 && epoch % self.config.eval_every == 0 && !eval.is_empty() {
                let rows = evaluate_samples(
                    &self.net,
                    eval,
                    PriorMode::Count(self.config.n_priors),
                    &DEFAULT_CAPS,
                    self.config.seed,
                )?;
                let reports = summarize(&rows, &DEFAULT_CAPS);
                if let Some(m) = &reports[0].metrics {
                    log::info!("epoch {epoch} eval rmse_lin {:.4} mare {:.4}", m.rmse_lin, m.mare);
                    if self.meta.best.is_none_or(|(_, b)| m.rmse_lin < b) {
                        self.meta.best = Some((epoch, m.rmse_lin));
                        improved = true;
                    }
                }
                report.evals.push(EvalRecord { epoch, reports });
            }
            if let Some(dir) = self.config.checkpoint_dir.clone() {
                self.save(&dir, &format!("epoch_{epoch:04}"))?;
                self.save(&dir, "last")?;
                if improved {
                    save_network(&self.net, &dir.join("best.safetensors"))?;
                }
            }
        }
        if let Some(w) = self.log.as_mut() {
            w.flush().map_err(|source| ModelError::Io {
                path: PathBuf::from("step log"),
                source,
            })?;
        }
        Ok(report)
    }
}

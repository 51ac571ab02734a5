//! The flat run configuration shared by `train` and `eval`.
//!
//! Values are resolved in three layers: built-in defaults (picked by
//! `preset`), then the config file, then command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use priordepth_core::dataset::{DepthFormat, LoadOptions};
use priordepth_core::{AugmentConfig, LossConfig};
use priordepth_model::{NetworkConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::exit::{UsageContext, UsageError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 320×240 network with the full-size encoder and 256 bins.
    #[default]
    Full,
    /// 64×48 desk-scale network for quick experiments.
    Toy,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DepthFileFormat {
    /// 32-bit float TIFF in meters.
    #[default]
    Tiff,
    /// 16-bit PNG in millimeters.
    Png,
}

impl From<DepthFileFormat> for DepthFormat {
    fn from(f: DepthFileFormat) -> Self {
        match f {
            DepthFileFormat::Tiff => DepthFormat::TiffMeters,
            DepthFileFormat::Png => DepthFormat::PngMillimeters,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub preset: Preset,

    // network
    pub input_width: usize,
    pub input_height: usize,
    pub n_bins: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub tf_layers: usize,
    pub tf_heads: usize,
    pub ffn_dim: usize,
    pub n_kernels: usize,
    pub mlp_hidden: usize,
    pub width_mult: f64,
    pub decoder_features: usize,
    pub eps: f64,
    pub d_min: f64,
    pub r_min: f64,
    pub prior_sigma: f64,
    pub use_prior: bool,
    pub init_range: f64,

    // loss
    pub lambda_silog: f64,
    pub beta: f64,
    pub w_rmse: f64,
    pub w_silog: f64,
    pub w_chamfer: f64,
    pub chamfer_samples: usize,

    // training
    pub base_lr: f64,
    pub decay_rate: f64,
    pub batch_size: usize,
    pub epochs: u64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    pub n_priors: usize,
    pub eval_every: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
    pub seed: u64,

    // augmentation
    pub p_hflip: f64,
    pub brightness_range: (f64, f64),
    pub channel_gain_range: (f64, f64),
    pub depth_scale_range: (f64, f64),
    pub p_prior_dropout: f64,

    // data
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_data: Option<PathBuf>,
    pub depth_format: DepthFileFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset(Preset::Full)
    }
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (net, train, loss) = match preset {
            Preset::Full => (NetworkConfig::default(), TrainConfig::default(), LossConfig::default()),
            Preset::Toy => (
                NetworkConfig::toy(),
                TrainConfig::toy(),
                LossConfig {
                    chamfer_samples: 64,
                    ..LossConfig::default()
                },
            ),
        };
        let aug = AugmentConfig::default();
        Self {
            preset,
            input_width: net.input_width,
            input_height: net.input_height,
            n_bins: net.n_bins,
            patch_size: net.patch_size,
            embed_dim: net.embed_dim,
            tf_layers: net.tf_layers,
            tf_heads: net.tf_heads,
            ffn_dim: net.ffn_dim,
            n_kernels: net.n_kernels,
            mlp_hidden: net.mlp_hidden,
            width_mult: net.width_mult,
            decoder_features: net.decoder_features,
            eps: net.eps,
            d_min: net.d_min,
            r_min: net.r_min,
            prior_sigma: net.prior_sigma,
            use_prior: net.use_prior,
            init_range: net.init_range,
            lambda_silog: loss.lambda_silog,
            beta: loss.beta,
            w_rmse: loss.w_rmse,
            w_silog: loss.w_silog,
            w_chamfer: loss.w_chamfer,
            chamfer_samples: loss.chamfer_samples,
            base_lr: train.base_lr,
            decay_rate: train.decay_rate,
            batch_size: train.batch_size,
            epochs: train.epochs,
            weight_decay: train.weight_decay,
            grad_clip_norm: train.grad_clip_norm,
            n_priors: train.n_priors,
            eval_every: train.eval_every,
            max_steps: train.max_steps,
            seed: train.seed,
            p_hflip: aug.p_hflip,
            brightness_range: aug.brightness_range,
            channel_gain_range: aug.channel_gain_range,
            depth_scale_range: aug.depth_scale_range,
            p_prior_dropout: aug.p_prior_dropout,
            data: None,
            eval_data: None,
            depth_format: DepthFileFormat::Tiff,
        }
    }

    /// Layers `overrides` over the optional file over the preset defaults.
    pub fn resolve(file: Option<&Path>, overrides: toml::Table) -> Result<Self> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))
                    .usage()?;
                toml::from_str::<toml::Table>(&text).map_err(|e| UsageError::msg(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        table.extend(overrides);
        let preset = match table.get("preset") {
            Some(v) => v
                .clone()
                .try_into::<Preset>()
                .map_err(|e| UsageError::msg(format!("preset: {e}")))?,
            None => Preset::Full,
        };
        let mut base = toml::Table::try_from(Self::preset(preset))?;
        base.extend(table);
        let cfg: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e| UsageError::msg(format!("invalid configuration: {e}")))?;
        cfg.network().validate().usage()?;
        cfg.train().validate().usage()?;
        cfg.loss().validate().usage()?;
        cfg.augment().validate().usage()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            input_width: self.input_width,
            input_height: self.input_height,
            n_bins: self.n_bins,
            patch_size: self.patch_size,
            embed_dim: self.embed_dim,
            tf_layers: self.tf_layers,
            tf_heads: self.tf_heads,
            ffn_dim: self.ffn_dim,
            n_kernels: self.n_kernels,
            mlp_hidden: self.mlp_hidden,
            width_mult: self.width_mult,
            decoder_features: self.decoder_features,
            eps: self.eps,
            d_min: self.d_min,
            r_min: self.r_min,
            prior_sigma: self.prior_sigma,
            use_prior: self.use_prior,
            init_range: self.init_range,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            lambda_silog: self.lambda_silog,
            beta: self.beta,
            w_rmse: self.w_rmse,
            w_silog: self.w_silog,
            w_chamfer: self.w_chamfer,
            chamfer_samples: self.chamfer_samples,
            seed: self.seed,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            base_lr: self.base_lr,
            decay_rate: self.decay_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            weight_decay: self.weight_decay,
            grad_clip_norm: self.grad_clip_norm,
            n_priors: self.n_priors,
            seed: self.seed,
            checkpoint_dir: None,
            eval_every: self.eval_every,
            max_steps: self.max_steps,
        }
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            p_hflip: self.p_hflip,
            brightness_range: self.brightness_range,
            channel_gain_range: self.channel_gain_range,
            depth_scale_range: self.depth_scale_range,
            p_prior_dropout: self.p_prior_dropout,
            seed: self.seed,
        }
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            size: Some((self.input_width, self.input_height)),
            depth_format: self.depth_format.into(),
        }
    }
}

/// Parses `key=value`; the value is read as TOML, falling back to a bare string.
pub fn parse_override(s: &str) -> Result<(String, toml::Value)> {
    let Some((k, v)) = s.split_once('=') else {
        bail!(UsageError::msg(format!("expected key=value, got {s:?}")));
    };
    let k = k.trim().to_string();
    let v = v.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()));
    Ok((k, value))
}

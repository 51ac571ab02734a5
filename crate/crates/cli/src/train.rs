use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use candle_core::Device;
use clap::Args;
use priordepth_core::dataset::{load_all, load_dataset};
use priordepth_core::DepthSample;
use priordepth_model::checkpoint::load_backbone;
use priordepth_model::{DepthNetworkF32, Trainer, TrainerF32};

use crate::config::{parse_override, Preset, RunConfig};
use crate::exit::{UsageContext, UsageError};

/// Flags shared by the commands that resolve a [`RunConfig`].
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base values for every key not set elsewhere.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Any configuration key, as KEY=VALUE; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigArgs {
    pub fn resolve(&self, flags: toml::Table) -> Result<RunConfig> {
        let mut over = toml::Table::new();
        if let Some(p) = self.preset {
            over.insert("preset".into(), toml::Value::try_from(p)?);
        }
        for s in &self.set {
            let (k, v) = parse_override(s)?;
            over.insert(k, v);
        }
        // Dedicated flags win over generic --set entries.
        over.extend(flags);
        RunConfig::resolve(self.config.as_deref(), over)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Training dataset root.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Held-out dataset root evaluated every `eval_every` epochs.
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    /// Run directory: resolved config, step log and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from `<out>/last.safetensors` and its optimizer state.
    #[arg(long)]
    pub resume: bool,
    /// Initialize the encoder from a compatible checkpoint.
    #[arg(long)]
    pub backbone: Option<PathBuf>,
}

fn load_set(root: &Path, cfg: &RunConfig) -> Result<Vec<DepthSample<f32>>> {
    let descriptors = load_dataset(root, cfg.load_options())?;
    load_all(&descriptors).with_context(|| format!("loading {}", root.display()))
}

pub fn run(args: TrainArgs) -> Result<()> {
    let mut flags = toml::Table::new();
    if let Some(d) = &args.data {
        flags.insert("data".into(), toml::Value::String(d.display().to_string()));
    }
    if let Some(d) = &args.eval_data {
        flags.insert("eval_data".into(), toml::Value::String(d.display().to_string()));
    }
    if let Some(e) = args.epochs {
        flags.insert("epochs".into(), toml::Value::Integer(e as i64));
    }
    if let Some(m) = args.max_steps {
        flags.insert("max_steps".into(), toml::Value::Integer(m as i64));
    }
    if let Some(s) = args.seed {
        flags.insert("seed".into(), toml::Value::Integer(s as i64));
    }
    let cfg = args.cfg.resolve(flags)?;
    let data = cfg
        .data
        .clone()
        .ok_or_else(|| UsageError::msg("no training data: pass --data or set `data`"))?;
    let train = load_set(&data, &cfg)?;
    let eval = match &cfg.eval_data {
        Some(root) => load_set(root, &cfg)?,
        None => Vec::new(),
    };

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .usage()?;
    std::fs::write(args.out.join("config.toml"), cfg.to_toml()?)
        .with_context(|| format!("writing to {}", args.out.display()))
        .usage()?;

    let train_cfg = priordepth_model::TrainConfig {
        checkpoint_dir: Some(args.out.clone()),
        ..cfg.train()
    };
    let device = Device::Cpu;
    let mut trainer: TrainerF32 = if args.resume {
        let t = Trainer::resume(
            &args.out.join("last.safetensors"),
            &args.out.join("last.state.safetensors"),
            train_cfg,
            cfg.loss(),
            cfg.augment(),
            &device,
        )?;
        let keys = t.net.config().diff_keys(&cfg.network());
        if !keys.is_empty() {
            return Err(priordepth_model::ModelError::Incompatible { keys }.into());
        }
        log::info!("resuming at epoch {} step {}", t.meta.epoch, t.meta.step);
        t
    } else {
        let net = DepthNetworkF32::new(cfg.network(), cfg.seed, &device)?;
        if let Some(b) = &args.backbone {
            let n = load_backbone(&net, b)?;
            log::info!("initialized {n} encoder tensors from {}", b.display());
        }
        Trainer::new(net, train_cfg, cfg.loss(), cfg.augment())?
    };
    log::info!("{}", trainer.net.summary());
    let log_path = args.out.join("train_log.csv");
    if !args.resume && log_path.exists() {
        std::fs::remove_file(&log_path).with_context(|| format!("replacing {}", log_path.display()))?;
    }
    trainer.log_to(&log_path)?;
    let report = trainer.fit(&train, &eval)?;
    match (report.losses.first(), report.losses.last()) {
        (Some(a), Some(b)) => println!(
            "trained {} steps over {} samples: loss {:.5} -> {:.5}",
            report.losses.len(),
            train.len(),
            a.total,
            b.total
        ),
        _ => println!("nothing to do: already at epoch {}", trainer.meta.epoch),
    }
    if let Some((epoch, rmse)) = trainer.meta.best {
        println!("best eval rmse_lin {rmse:.4} at epoch {epoch}");
    }
    println!("checkpoints in {}", args.out.display());
    Ok(())
}

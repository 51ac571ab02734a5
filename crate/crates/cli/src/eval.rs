use std::path::PathBuf;

use anyhow::{Context, Result};
use candle_core::Device;
use clap::Args;
use priordepth_core::dataset::{load_all, load_dataset, LoadOptions};
use priordepth_core::evaluation::{format_cap, reports_to_csv};
use priordepth_model::checkpoint::{load_compatible, load_network};
use priordepth_model::train::{evaluate_samples, summarize};
use priordepth_model::{DepthNetworkF32, PriorMode};

use crate::config::DepthFileFormat;
use crate::exit::UsageContext;
use crate::parse_cap;
use crate::train::ConfigArgs;

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Prior points per image; 0 feeds all-zero prior maps.
    #[arg(long, default_value_t = 200)]
    pub priors: usize,
    /// Comma-separated depth caps in meters; `inf` for the full range.
    #[arg(long, default_value = "inf,5,1", value_delimiter = ',', value_parser = parse_cap)]
    pub caps: Vec<f64>,
    /// CSV destination; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tiff")]
    pub depth_format: DepthFileFormat,
    /// Seed of the prior subsample.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// When a config is given, the checkpoint must match its network keys.
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let device = Device::Cpu;
    let expects = args.cfg.config.is_some() || args.cfg.preset.is_some() || !args.cfg.set.is_empty();
    let net: DepthNetworkF32 = if expects {
        let cfg = args.cfg.resolve(toml::Table::new())?;
        load_compatible(&args.checkpoint, &cfg.network(), &device)?
    } else {
        load_network(&args.checkpoint, &device)?
    };
    let c = net.config();
    let options = LoadOptions {
        size: Some((c.input_width, c.input_height)),
        depth_format: args.depth_format.into(),
    };
    let samples = load_all::<f32>(&load_dataset(&args.data, options)?)?;
    let mode = match args.priors {
        0 => PriorMode::Zero,
        n => PriorMode::Count(n),
    };
    let rows = evaluate_samples(&net, &samples, mode, &args.caps, args.seed)?;
    let csv = format!("# priors={}\n{}", args.priors, reports_to_csv(&rows, &args.caps));
    for r in summarize(&rows, &args.caps) {
        match &r.metrics {
            Some(m) => log::info!(
                "cap {}: rmse_lin {:.4} rmse_log {:.4} rmse_silog {:.4} mare {:.4}",
                format_cap(r.range_cap),
                m.rmse_lin,
                m.rmse_log,
                m.rmse_silog,
                m.mare
            ),
            None => log::info!("cap {}: no valid pixels", format_cap(r.range_cap)),
        }
    }
    match &args.out {
        Some(path) => {
            std::fs::write(path, csv)
                .with_context(|| format!("writing {}", path.display()))
                .usage()?;
            println!(
                "evaluated {} images with {} priors into {}",
                samples.len(),
                args.priors,
                path.display()
            );
        }
        None => print!("{csv}"),
    }
    Ok(())
}

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use priordepth_core::dataset::{write_dataset, DepthFormat};
use priordepth_core::synthetic::{generate_sequence, generate_synthetic_with, SequenceConfig, SyntheticConfig};
use priordepth_core::DepthSample;

use crate::config::DepthFileFormat;
use crate::exit::{UsageContext, UsageError};
use crate::{parse_range, parse_size};

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Dataset root to create (`rgb/`, `depth/`, `priors/`).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: usize,
    /// Image size as WIDTHxHEIGHT.
    #[arg(long, default_value = "64x48", value_parser = parse_size)]
    pub size: (usize, usize),
    /// Prior points per image, drawn from ground truth.
    #[arg(long, default_value_t = 200)]
    pub priors: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-sample global depth factor range as MIN,MAX.
    #[arg(long, default_value = "1,1", value_parser = parse_range)]
    pub scale_range: (f64, f64),
    /// Render consecutive frames of a sideways-moving camera instead of
    /// independent scenes. Priors are left empty for `extract-priors`.
    #[arg(long)]
    pub sequence: bool,
    #[arg(long, value_enum, default_value = "tiff")]
    pub depth_format: DepthFileFormat,
}

pub fn run(args: SynthArgs) -> Result<()> {
    if args.count == 0 {
        return Err(UsageError::msg("--count must be at least 1"));
    }
    let (w, h) = args.size;
    let samples: Vec<DepthSample<f32>> = if args.sequence {
        generate_sequence(args.seed, &SequenceConfig::new(w, h, args.count)).usage()?
    } else {
        let cfg = SyntheticConfig {
            depth_scale_range: args.scale_range,
            ..SyntheticConfig::new(w, h, args.priors)
        };
        generate_synthetic_with(args.seed, args.count, &cfg).usage()?
    };
    let format: DepthFormat = args.depth_format.into();
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .usage()?;
    write_dataset(&args.out, &samples, format).usage()?;
    println!("wrote {} samples of {w}x{h} to {}", samples.len(), args.out.display());
    Ok(())
}

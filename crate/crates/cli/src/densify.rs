use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use priordepth_core::dataset::write_depth_tiff;
use priordepth_core::densify::DEFAULT_SIGMA;
use priordepth_core::sparse::read_prior_csv;
use priordepth_core::{densify_or_zero, Grid};

use crate::exit::{UsageContext, UsageError};
use crate::parse_size;
use crate::viz::{save_colorized, value_range};

/// Writes the dense prior maps of one prior file for inspection.
#[derive(Debug, Args)]
pub struct DensifyArgs {
    #[arg(long)]
    pub prior: PathBuf,
    /// Raster size as WIDTHxHEIGHT, in the prior's pixel coordinates.
    #[arg(long, value_parser = parse_size)]
    pub size: (usize, usize),
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    /// Output prefix: writes `_s1.tiff`, `_s2.tiff`, `_s1.png`, `_s2.png`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: DensifyArgs) -> Result<()> {
    if !(args.sigma > 0.0) {
        return Err(UsageError::msg("--sigma must be positive"));
    }
    let (w, h) = args.size;
    let id = args
        .prior
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("prior")
        .to_string();
    let prior = read_prior_csv::<f32>(&args.prior, &id)?;
    prior.validate(w, h)?;
    let maps = densify_or_zero(&prior, w, h, args.sigma as f32)?;
    let path = |suffix: &str| {
        let mut name = args.out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(suffix);
        args.out.with_file_name(name)
    };
    if let Some(dir) = path("").parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).usage()?;
    }
    write_depth_tiff(&path("_s1.tiff"), &maps.s1).usage()?;
    write_depth_tiff(&path("_s2.tiff"), &maps.s2).usage()?;
    let s1_range = value_range(maps.s1.as_slice().iter().map(|&v| v as f64)).unwrap_or((0.0, 1.0));
    save_colorized(&path("_s1.png"), &maps.s1, s1_range)?;
    let peak = maps
        .s2
        .as_slice()
        .iter()
        .cloned()
        .fold(0.0f32, f32::max)
        .max(f32::MIN_POSITIVE);
    let s2: Grid<f32> = maps.s2.map(|v| v / peak + f32::MIN_POSITIVE);
    save_colorized(&path("_s2.png"), &s2, (0.0, 1.0))?;
    println!(
        "densified {} points at {w}x{h} into {}_*",
        prior.len(),
        args.out.display()
    );
    Ok(())
}

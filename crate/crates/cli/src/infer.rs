use std::path::PathBuf;

use anyhow::{Context, Result};
use candle_core::Device;
use clap::Args;
use priordepth_core::dataset::{read_depth, read_rgb, write_depth_tiff};
use priordepth_core::sparse::{read_prior_csv, subsample_prior};
use priordepth_core::{densify_or_zero, Grid};
use priordepth_model::checkpoint::load_network;
use priordepth_model::DepthNetworkF32;

use crate::config::DepthFileFormat;
use crate::exit::UsageContext;
use crate::viz::{save_colorized, value_range};

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub rgb: PathBuf,
    /// Prior CSV in the image's own pixel coordinates; zero maps when absent.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Use at most this many prior points.
    #[arg(long)]
    pub priors: Option<usize>,
    /// Ground truth fixing the color range of the visualization.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tiff")]
    pub depth_format: DepthFileFormat,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output prefix: writes `.tiff` (meters) and `.png` (viridis).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: InferArgs) -> Result<()> {
    let net: DepthNetworkF32 = load_network(&args.checkpoint, &Device::Cpu)?;
    let c = net.config().clone();
    let (w, h) = (c.input_width, c.input_height);
    let (w0, h0) = image::image_dimensions(&args.rgb).with_context(|| format!("reading {}", args.rgb.display()))?;
    let (_, _, rgb) = read_rgb::<f32>(&args.rgb, Some((w, h)))?;
    let maps = match &args.prior {
        Some(path) => {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("prior");
            let mut prior = read_prior_csv::<f32>(path, id)?;
            prior.validate(w0 as usize, h0 as usize)?;
            if let Some(n) = args.priors {
                prior = subsample_prior(&prior, n, args.seed);
            }
            let scaled = prior.rescale_coords((w0 as usize, h0 as usize), (w, h));
            log::info!("using {} prior points", scaled.len());
            Some(densify_or_zero(&scaled, w, h, c.prior_sigma as f32)?)
        }
        None => None,
    };
    let depth = net.predict(&rgb, maps.as_ref())?;

    let tiff = args.out.with_extension("tiff");
    let png = args.out.with_extension("png");
    if let Some(dir) = tiff.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).usage()?;
    }
    write_depth_tiff(&tiff, &depth).usage()?;
    let gt_range = match &args.gt {
        Some(path) => {
            let gt: Grid<f32> = read_depth(path, args.depth_format.into())?;
            value_range(gt.as_slice().iter().map(|&v| v as f64))
        }
        None => None,
    };
    let range = gt_range
        .or_else(|| value_range(depth.as_slice().iter().map(|&v| v as f64)))
        .unwrap_or((0.0, 1.0));
    save_colorized(&png, &depth, range)?;
    println!(
        "wrote {w}x{h} depth to {} and {} (color range {:.3}..{:.3} m)",
        tiff.display(),
        png.display(),
        range.0,
        range.1
    );
    Ok(())
}

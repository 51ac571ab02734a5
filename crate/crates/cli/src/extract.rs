use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use priordepth_core::dataset::{list_images, read_depth, read_rgb, validity_of, DepthFormat};
use priordepth_core::detect::{rgb_to_gray, GridSpec};
use priordepth_core::extract::{extract_pair_prior, ExtractConfig};
use priordepth_core::fundamental::RansacConfig;
use priordepth_core::sparse::write_prior_csv;
use priordepth_core::{Grid, SparsePrior};

use crate::config::DepthFileFormat;
use crate::exit::{UsageContext, UsageError};

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Frames in temporal order by sorted file stem.
    #[arg(long)]
    pub rgb_dir: PathBuf,
    /// Ground-truth depth of each frame, same stems.
    #[arg(long)]
    pub depth_dir: PathBuf,
    /// Directory receiving one `<stem>.csv` per frame.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "tiff")]
    pub depth_format: DepthFileFormat,
    #[arg(long, default_value_t = 8)]
    pub grid_rows: usize,
    #[arg(long, default_value_t = 8)]
    pub grid_cols: usize,
    /// Keypoints kept per grid cell.
    #[arg(long, default_value_t = 8)]
    pub per_cell: usize,
    /// Symmetric epipolar distance threshold, pixels.
    #[arg(long, default_value_t = 2.0)]
    pub epipolar_tol: f64,
    #[arg(long, default_value_t = 2000)]
    pub ransac_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn gray(path: &Path) -> Result<Grid<f32>> {
    let (w, h, rgb) = read_rgb::<f32>(path, None)?;
    Ok(rgb_to_gray(&rgb, w, h))
}

pub fn run(args: ExtractArgs) -> Result<()> {
    if args.grid_rows == 0 || args.grid_cols == 0 || args.per_cell == 0 {
        return Err(UsageError::msg(
            "grid rows, columns and per-cell count must be positive",
        ));
    }
    let cfg = ExtractConfig {
        grid: GridSpec {
            rows: args.grid_rows,
            cols: args.grid_cols,
            per_cell: args.per_cell,
        },
        ransac: RansacConfig {
            iterations: args.ransac_iters,
            seed: args.seed,
            ..RansacConfig::default()
        },
        epipolar_tol_px: args.epipolar_tol,
        ..ExtractConfig::default()
    };
    let format: DepthFormat = args.depth_format.into();
    let frames = list_images(&args.rgb_dir)?;
    if frames.is_empty() {
        anyhow::bail!("no images in {}", args.rgb_dir.display());
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .usage()?;
    let mut total = 0;
    for (t, (stem, path)) in frames.iter().enumerate() {
        let out = args.out.join(format!("{stem}.csv"));
        let depth_path = args.depth_dir.join(format!("{stem}.{}", format.extension()));
        let prior = match frames.get(t + 1) {
            None => {
                log::warn!("{stem}: no following frame, writing an empty prior");
                SparsePrior::empty(stem.clone())
            }
            Some(_) if !depth_path.is_file() => {
                log::warn!("{stem}: no depth at {}, writing an empty prior", depth_path.display());
                SparsePrior::empty(stem.clone())
            }
            Some((_, next)) => {
                let depth: Grid<f32> = read_depth(&depth_path, format)?;
                let validity = validity_of(&depth);
                let ex = extract_pair_prior(stem, &gray(path)?, &gray(next)?, &depth, &validity, &cfg)?;
                if let Some(w) = &ex.warning {
                    log::warn!("{stem}: {w}, writing an empty prior");
                }
                log::info!(
                    "{stem}: {} priors from {} matches ({} epipolar inliers)",
                    ex.prior.len(),
                    ex.matches,
                    ex.inliers
                );
                ex.prior
            }
        };
        total += prior.len();
        write_prior_csv(&out, &prior)?;
    }
    println!(
        "wrote {} prior files ({total} points) to {}",
        frames.len(),
        args.out.display()
    );
    Ok(())
}

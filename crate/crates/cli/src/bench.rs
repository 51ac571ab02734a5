use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use candle_core::Device;
use clap::Args;
use priordepth_core::synthetic::generate_synthetic;
use priordepth_core::{densify_or_zero, DepthSample};
use priordepth_model::checkpoint::load_network;
use priordepth_model::{DepthNetworkF32, NetInput};

use crate::exit::UsageError;
use crate::train::ConfigArgs;

/// Single-image forward latency. Reports, does not assert.
#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Network to time; a freshly initialized one from the config otherwise.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    /// Prior points fed with the input.
    #[arg(long, default_value_t = 200)]
    pub priors: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Latency {
    pub mean_ms: f64,
    pub p95_ms: f64,
}

/// Mean and nearest-rank 95th percentile.
pub fn latency_stats(samples_ms: &[f64]) -> Latency {
    let mut s = samples_ms.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((0.95 * s.len() as f64).ceil() as usize).clamp(1, s.len());
    Latency {
        mean_ms: s.iter().sum::<f64>() / s.len() as f64,
        p95_ms: s[rank - 1],
    }
}

pub fn run(args: BenchArgs) -> Result<()> {
    if args.iters == 0 {
        return Err(UsageError::msg("--iters must be at least 1"));
    }
    let device = Device::Cpu;
    let net: DepthNetworkF32 = match &args.checkpoint {
        Some(p) => load_network(p, &device)?,
        None => {
            let cfg = args.cfg.resolve(toml::Table::new())?;
            DepthNetworkF32::new(cfg.network(), args.seed, &device)?
        }
    };
    let c = net.config().clone();
    let (w, h) = (c.input_width, c.input_height);
    let sample: DepthSample<f32> = generate_synthetic(args.seed, 1, w, h, args.priors)?.remove(0);
    let maps = densify_or_zero(&sample.prior, w, h, c.prior_sigma as f32)?;
    let input = NetInput::new(&c, &[sample.image.as_slice()], &[maps], &device)?;
    for _ in 0..args.warmup {
        net.forward(&input)?;
    }
    let mut times = Vec::with_capacity(args.iters);
    for _ in 0..args.iters {
        let t = Instant::now();
        let pred = net.forward(&input)?;
        // Force the result to be materialized.
        pred.depth.sum_all()?.to_scalar::<f32>()?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let l = latency_stats(&times);
    println!(
        "{w}x{h}, {} parameters, {} iterations, single thread: mean {:.2} ms, p95 {:.2} ms ({:.1} fps)",
        net.num_params(),
        args.iters,
        l.mean_ms,
        l.p95_ms,
        1e3 / l.mean_ms
    );
    Ok(())
}

//! Acceptance suite. Runs every criterion in sequence, prints one PASS/FAIL
//! line each, and exits non-zero if any fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p priordepth-cli --test acceptance -- 1 5`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use candle_core::{DType, Device, Tensor, Var};
use priordepth_core::dataset::{read_depth, DepthFormat};
use priordepth_core::densify::snap_to_pixel;
use priordepth_core::evaluation::evaluate;
use priordepth_core::objectives::{
    chamfer_sets, loss_chamfer, loss_chamfer_grad, loss_rmse, loss_rmse_grad, loss_silog, loss_silog_grad,
};
use priordepth_core::rng::rng_for;
use priordepth_core::sparse::read_prior_csv;
use priordepth_core::synthetic::{generate_synthetic, generate_synthetic_with, SyntheticConfig};
use priordepth_core::{densify, AugmentConfig, DepthSample, Grid, LossConfig, PriorPoint, SparsePrior};
use priordepth_model::bins::{compute_bin_centers, compute_bin_widths, regress_depth};
use priordepth_model::network::inverse_softplus;
use priordepth_model::ops::ShapeCache;
use priordepth_model::train::evaluate_samples;
use priordepth_model::{DepthNetworkF32, DepthNetworkF64, NetInput, NetworkConfig, PriorMode, TrainConfig, Trainer};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(
        elapsed.as_secs_f64() < limit_s,
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()),
    )
}

// 1 --------------------------------------------------------------------------

fn random_prior(rng: &mut impl Rng, k: usize, w: usize, h: usize) -> SparsePrior<f64> {
    let points = (0..k)
        .map(|_| PriorPoint {
            x: rng.gen_range(0.0..w as f64 - 0.5),
            y: rng.gen_range(0.0..h as f64 - 0.5),
            depth: rng.gen_range(0.3..15.0),
        })
        .collect();
    SparsePrior::new("random", points)
}

/// O(H·W·K) search over snapped keypoints, lowest index on ties.
fn brute_force_maps(prior: &SparsePrior<f64>, w: usize, h: usize, sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let snapped: Vec<(f64, f64)> = prior
        .points
        .iter()
        .map(|p| {
            (
                (p.x.round().clamp(0.0, (w - 1) as f64)),
                p.y.round().clamp(0.0, (h - 1) as f64),
            )
        })
        .collect();
    let peak = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let mut s1 = Vec::with_capacity(w * h);
    let mut s2 = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut best = (f64::INFINITY, 0);
            for (i, &(px, py)) in snapped.iter().enumerate() {
                let d2 = (px - x as f64).powi(2) + (py - y as f64).powi(2);
                if d2 < best.0 {
                    best = (d2, i);
                }
            }
            s1.push(prior.points[best.1].depth);
            s2.push(peak * (-best.0 / (2.0 * sigma * sigma)).exp());
        }
    }
    (s1, s2)
}

fn densification_oracle() -> Outcome {
    let t = Instant::now();
    let (w, h, sigma) = (64, 48, 10.0);
    let mut worst = 0.0f64;
    let mut instances = 0;
    for k in [1usize, 5, 200] {
        for seed in 0..50u64 {
            let mut rng = rng_for(seed, &[k as u64]);
            let prior = random_prior(&mut rng, k, w, h);
            let maps = densify(&prior, w, h, sigma).map_err(|e| e.to_string())?;
            let (s1, s2) = brute_force_maps(&prior, w, h, sigma);
            for i in 0..w * h {
                worst = worst
                    .max((maps.s1.as_slice()[i] - s1[i]).abs())
                    .max((maps.s2.as_slice()[i] - s2[i]).abs());
            }
            instances += 1;
        }
    }
    ensure(worst <= 1e-9, format!("max deviation {worst:e}"))?;
    within(t.elapsed(), 10.0)?;
    Ok(format!("{instances} instances, max |diff| {worst:.1e}"))
}

// 2 --------------------------------------------------------------------------

fn loss_fixtures() -> Outcome {
    let cfg = LossConfig::default();
    ensure(
        cfg.lambda_silog == 0.85 && cfg.beta == 10.0,
        "unexpected SILog defaults",
    )?;
    let gt: Vec<f64> = (0..50).map(|i| 0.5 + 0.2 * i as f64).collect();
    let pred: Vec<f64> = gt.iter().map(|g| g * std::f64::consts::E).collect();
    let mask = vec![true; gt.len()];
    let silog = loss_silog(&pred, &gt, &mask, &cfg).map_err(|e| e.to_string())?;
    // Every log-ratio is 1: β·sqrt(1 − λ).
    let oracle = 10.0 * (1.0f64 - 0.85).sqrt();
    ensure((silog - 3.872983).abs() <= 1e-6, format!("silog {silog}"))?;
    ensure((oracle - 3.872983).abs() <= 1e-6, format!("oracle {oracle}"))?;

    let ch = chamfer_sets(&[1.0f64], &[2.0, 4.0]).map_err(|e| e.to_string())?;
    ensure(ch == 11.0, format!("chamfer {ch}"))?;
    let ch2 = loss_chamfer(&[1.0f64], &[2.0, 4.0], &[true, true], &cfg).map_err(|e| e.to_string())?;
    ensure(ch2 == 11.0, format!("masked chamfer {ch2}"))?;

    let logits = Tensor::new(&[[0.2f64, 0.7]], &Device::Cpu).map_err(|e| e.to_string())?;
    let range = Tensor::new(&[[inverse_softplus(10.0 - 0.01)]], &Device::Cpu).map_err(|e| e.to_string())?;
    let b = compute_bin_widths(&logits, &range, 1e-3, 0.01).map_err(|e| e.to_string())?;
    let w = b
        .widths
        .flatten_all()
        .and_then(|t| t.to_vec1::<f64>())
        .map_err(|e| e.to_string())?;
    let want = [10.0 * 0.201 / 0.902, 10.0 * 0.701 / 0.902];
    ensure(
        (w[0] - 2.22838).abs() <= 1e-5 && (w[1] - 7.77162).abs() <= 1e-5,
        format!("widths {w:?}"),
    )?;
    ensure(
        (w[0] - want[0]).abs() <= 1e-9 && (w[1] - want[1]).abs() <= 1e-9,
        "widths differ from oracle",
    )?;
    Ok(format!(
        "silog {silog:.6}, chamfer {ch}, widths ({:.5}, {:.5})",
        w[0], w[1]
    ))
}

// 3 --------------------------------------------------------------------------

/// Relative error with a 1e-6 floor on the scale, so exact zeros compare absolutely.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(analytic.abs()).max(1e-6)
}

/// Worst relative error of `grad` against central differences of `f` at `x`.
fn check_grad(x: &[f64], grad: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let (mut a, mut b) = (x.to_vec(), x.to_vec());
        a[i] += h;
        b[i] -= h;
        let fd = (f(&a) - f(&b)) / (2.0 * h);
        worst = worst.max(rel_err(grad[i], fd));
    }
    worst
}

fn bins_path(
    cache: &ShapeCache,
    logits: &Tensor,
    range: &Tensor,
    probs: &Tensor,
    weights: &Tensor,
) -> candle_core::Result<Tensor> {
    let b = compute_bin_widths(logits, range, 1e-3, 0.01).map_err(|e| candle_core::Error::Msg(e.to_string()))?;
    let c = compute_bin_centers(cache, &b.widths, 0.0).map_err(|e| candle_core::Error::Msg(e.to_string()))?;
    regress_depth(probs, &c)
        .map_err(|e| candle_core::Error::Msg(e.to_string()))?
        .mul(weights)?
        .sum_all()
}

fn gradient_verification() -> Outcome {
    let t = Instant::now();
    let mut rng = rng_for(2024, &[]);
    let cfg = LossConfig {
        chamfer_samples: 16,
        ..LossConfig::default()
    };
    let n = 40;
    let gt: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..10.0)).collect();
    let pred: Vec<f64> = gt.iter().map(|g| g * rng.gen_range(0.7..1.4)).collect();
    let mask: Vec<bool> = (0..n).map(|i| i % 7 != 3).collect();
    let mut worst = [0.0f64; 4];

    let (_, g) = loss_rmse_grad(&pred, &gt, &mask).map_err(|e| e.to_string())?;
    worst[0] = check_grad(&pred, &g, |p| loss_rmse(p, &gt, &mask).unwrap());
    let (_, g) = loss_silog_grad(&pred, &gt, &mask, &cfg).map_err(|e| e.to_string())?;
    worst[1] = check_grad(&pred, &g, |p| loss_silog(p, &gt, &mask, &cfg).unwrap());
    let centers: Vec<f64> = (0..8)
        .map(|i| 0.7 + 1.13 * i as f64 + rng.gen_range(0.0..0.3))
        .collect();
    let (_, g) = loss_chamfer_grad(&centers, &gt, &mask, &cfg).map_err(|e| e.to_string())?;
    worst[2] = check_grad(&centers, &g, |c| loss_chamfer(c, &gt, &mask, &cfg).unwrap());

    // compute_bin_widths → compute_bin_centers → regress_depth, n = 4.
    let dev = Device::Cpu;
    let cache = ShapeCache::new(dev.clone(), DType::F64);
    let (nb, hh, ww) = (4, 3, 3);
    let mut x: Vec<f64> = (0..nb).map(|_| rng.gen_range(0.1..2.0)).collect();
    x.push(rng.gen_range(-1.0..2.0));
    let mut probs: Vec<f64> = (0..nb * hh * ww).map(|_| rng.gen_range(0.05..1.0)).collect();
    for p in 0..hh * ww {
        let s: f64 = (0..nb).map(|i| probs[i * hh * ww + p]).sum();
        for i in 0..nb {
            probs[i * hh * ww + p] /= s;
        }
    }
    x.extend(probs);
    let weights = Tensor::from_vec(
        (0..hh * ww).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>(),
        (1, hh, ww),
        &dev,
    )
    .map_err(|e| e.to_string())?;
    let split = |x: &[f64]| -> candle_core::Result<(Tensor, Tensor, Tensor)> {
        Ok((
            Tensor::from_vec(x[..nb].to_vec(), (1, nb), &dev)?,
            Tensor::from_vec(vec![x[nb]], (1, 1), &dev)?,
            Tensor::from_vec(x[nb + 1..].to_vec(), (nb, 1, hh, ww), &dev)?,
        ))
    };
    let grad = (|| -> candle_core::Result<Vec<f64>> {
        let (l, r, p) = split(&x)?;
        let (lv, rv, pv) = (Var::from_tensor(&l)?, Var::from_tensor(&r)?, Var::from_tensor(&p)?);
        let f = bins_path(&cache, lv.as_tensor(), rv.as_tensor(), pv.as_tensor(), &weights)?;
        let g = f.backward()?;
        let mut out = Vec::new();
        for v in [&lv, &rv, &pv] {
            out.extend(
                g.get(v.as_tensor())
                    .expect("gradient")
                    .flatten_all()?
                    .to_vec1::<f64>()?,
            );
        }
        Ok(out)
    })()
    .map_err(|e| e.to_string())?;
    worst[3] = check_grad(&x, &grad, |x| {
        let (l, r, p) = split(x).unwrap();
        bins_path(&cache, &l, &r, &p, &weights)
            .unwrap()
            .to_scalar::<f64>()
            .unwrap()
    });

    let names = ["rmse", "silog", "chamfer", "bins"];
    for (name, w) in names.iter().zip(worst) {
        ensure(w < 1e-3, format!("{name}: relative error {w:e}"))?;
    }
    within(t.elapsed(), 60.0)?;
    Ok(format!(
        "max rel err rmse {:.1e}, silog {:.1e}, chamfer {:.1e}, bins {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

// 4 --------------------------------------------------------------------------

fn normalization_suite() -> Outcome {
    let cfg = NetworkConfig::toy();
    let (w, h) = (cfg.input_width, cfg.input_height);
    let dev = Device::Cpu;
    let mut rng = rng_for(4, &[]);
    let base: Vec<DepthSample<f64>> = generate_synthetic(44, 10, w, h, 200).map_err(|e| e.to_string())?;
    let mut worst = [0.0f64; 2];
    let mut net = None;
    for pass in 0..1000usize {
        if pass % 100 == 0 {
            net = Some(DepthNetworkF64::new(cfg.clone(), pass as u64, &dev).map_err(|e| e.to_string())?);
        }
        let net = net.as_ref().expect("network");
        let s = &base[rng.gen_range(0..base.len())];
        let noise = rng.gen_range(0.0..0.5);
        let image: Vec<f64> = s
            .image
            .iter()
            .map(|v| ((1.0 - noise) * v + noise * rng.gen_range(0.0..1.0)).clamp(0.0, 1.0))
            .collect();
        let k = rng.gen_range(0..=200usize);
        let scale = rng.gen_range(0.2..5.0);
        let prior = SparsePrior::new(
            "p",
            s.prior.points[..k]
                .iter()
                .map(|p| PriorPoint {
                    depth: p.depth * scale,
                    ..*p
                })
                .collect(),
        );
        let maps = priordepth_core::densify_or_zero(&prior, w, h, cfg.prior_sigma).map_err(|e| e.to_string())?;
        let input = NetInput::new(&cfg, &[image.as_slice()], &[maps], &dev).map_err(|e| e.to_string())?;
        let p = net.forward(&input).map_err(|e| e.to_string())?;
        let read = || -> candle_core::Result<_> {
            Ok((
                p.range.flatten_all()?.to_vec1::<f64>()?[0],
                p.widths.flatten_all()?.to_vec1::<f64>()?,
                p.centers.flatten_all()?.to_vec1::<f64>()?,
                p.probs.sum(0)?.flatten_all()?.to_vec1::<f64>()?,
                p.depth.flatten_all()?.to_vec1::<f64>()?,
                p.depth_half.flatten_all()?.to_vec1::<f64>()?,
            ))
        };
        let (r, widths, centers, psum, depth, half) = read().map_err(|e| e.to_string())?;
        let wsum: f64 = widths.iter().sum();
        worst[0] = worst[0].max((wsum - r).abs() / r);
        ensure(
            (wsum - r).abs() <= 1e-5 * r,
            format!("pass {pass}: widths sum {wsum} vs range {r}"),
        )?;
        for s in &psum {
            worst[1] = worst[1].max((s - 1.0).abs());
        }
        ensure(
            worst[1] <= 1e-5,
            format!("pass {pass}: probabilities off by {}", worst[1]),
        )?;
        ensure(
            centers.windows(2).all(|c| c[0] < c[1]),
            format!("pass {pass}: centers not increasing"),
        )?;
        let (lo, hi) = (centers[0], centers[centers.len() - 1]);
        ensure(
            depth.iter().chain(&half).all(|d| *d >= lo && *d <= hi),
            format!("pass {pass}: depth outside [{lo}, {hi}]"),
        )?;
    }
    Ok(format!(
        "1000 passes, max |Σb−r|/r {:.1e}, max |Σp−1| {:.1e}",
        worst[0], worst[1]
    ))
}

// 5 --------------------------------------------------------------------------

#[allow(clippy::approx_constant)]
fn metric_properties() -> Outcome {
    let (w, h) = (32, 24);
    let gt = Grid::from_fn(w, h, |x, y| 0.5 + 0.1 * x as f64 + 0.07 * y as f64);
    let mask = Grid::filled(w, h, true);
    let eval = |pred: &Grid<f64>, gt: &Grid<f64>| evaluate(pred, gt, &mask, f64::INFINITY).unwrap().metrics.unwrap();
    let m = eval(&gt.map(|g| 2.0 * g), &gt);
    ensure(m.rmse_silog < 1e-8, format!("silog {}", m.rmse_silog))?;
    ensure(
        (m.rmse_log - 2f64.ln()).abs() <= 1e-6 && (m.rmse_log - 0.693147).abs() <= 1e-6,
        format!("rmse_log {}", m.rmse_log),
    )?;
    let mare = eval(&gt.map(|g| 1.1 * g), &gt).mare;
    ensure((mare - 0.1).abs() <= 1e-9, format!("mare {mare}"))?;
    let mut rng = rng_for(5, &[]);
    for i in 0..100 {
        let g = Grid::from_fn(w, h, |_, _| rng.gen_range(0.3..20.0));
        let p = g.map(|v| v * rng.gen_range(0.5f64..2.0));
        let m = eval(&p, &g);
        ensure(
            m.rmse_silog <= m.rmse_log,
            format!("pair {i}: {} > {}", m.rmse_silog, m.rmse_log),
        )?;
    }
    Ok(format!(
        "silog(2gt) {:.1e}, rmse_log {:.6}, mare {mare:.9}",
        m.rmse_silog, m.rmse_log
    ))
}

// 6 --------------------------------------------------------------------------

fn toy_loss() -> LossConfig {
    LossConfig {
        chamfer_samples: 64,
        ..LossConfig::default()
    }
}

fn overfit_sanity() -> Outcome {
    let t = Instant::now();
    let cfg = NetworkConfig::toy();
    ensure(
        cfg.n_bins == 16 && cfg.embed_dim == 32 && cfg.tf_layers == 2 && cfg.width_mult == 0.25,
        "toy config differs",
    )?;
    let data: Vec<DepthSample<f32>> = generate_synthetic(7, 8, 64, 48, 100).map_err(|e| e.to_string())?;
    let net = DepthNetworkF32::new(cfg, 1, &Device::Cpu).map_err(|e| e.to_string())?;
    let train = TrainConfig {
        base_lr: 5e-4,
        decay_rate: 0.995,
        batch_size: 2,
        epochs: 10_000,
        max_steps: Some(2000),
        eval_every: 0,
        n_priors: 100,
        ..TrainConfig::toy()
    };
    let mut tr = Trainer::new(net, train, toy_loss(), AugmentConfig::identity()).map_err(|e| e.to_string())?;
    tr.fit(&data, &[]).map_err(|e| e.to_string())?;
    let rows =
        evaluate_samples(&tr.net, &data, PriorMode::Count(100), &[f64::INFINITY], 0).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for ((id, r), s) in rows.iter().zip(&data) {
        let (lo, hi) = s.depth_extent().expect("valid depth");
        let rel = r[0].metrics.expect("metrics").rmse_lin / (hi - lo) as f64;
        ensure(
            rel < 0.05,
            format!("{id}: rmse_lin is {:.1}% of the depth span", 100.0 * rel),
        )?;
        worst = worst.max(rel);
    }
    within(t.elapsed(), 600.0)?;
    Ok(format!(
        "{} steps, worst rmse_lin {:.2}% of span, {:.0} s",
        tr.meta.step,
        100.0 * worst,
        t.elapsed().as_secs_f64()
    ))
}

// 7 --------------------------------------------------------------------------

fn prior_benefit() -> Outcome {
    let t = Instant::now();
    let cfg = SyntheticConfig {
        depth_scale_range: (0.5, 1.5),
        ..SyntheticConfig::new(64, 48, 100)
    };
    let train: Vec<DepthSample<f32>> = generate_synthetic_with(21, 64, &cfg).map_err(|e| e.to_string())?;
    let held_out: Vec<DepthSample<f32>> = generate_synthetic_with(22, 32, &cfg).map_err(|e| e.to_string())?;
    let net = DepthNetworkF32::new(NetworkConfig::toy(), 1, &Device::Cpu).map_err(|e| e.to_string())?;
    let tc = TrainConfig {
        base_lr: 5e-4,
        decay_rate: 0.98,
        epochs: 10_000,
        max_steps: Some(2048),
        eval_every: 0,
        n_priors: 100,
        ..TrainConfig::toy()
    };
    let augment = AugmentConfig {
        depth_scale_range: (1.0, 1.0),
        ..AugmentConfig::default()
    };
    ensure(augment.p_prior_dropout > 0.0, "prior dropout disabled")?;
    let mut tr = Trainer::new(net, tc, toy_loss(), augment).map_err(|e| e.to_string())?;
    tr.fit(&train, &[]).map_err(|e| e.to_string())?;
    let caps = [f64::INFINITY];
    let with = evaluate_samples(&tr.net, &held_out, PriorMode::Count(100), &caps, 0).map_err(|e| e.to_string())?;
    let without = evaluate_samples(&tr.net, &held_out, PriorMode::Zero, &caps, 0).map_err(|e| e.to_string())?;
    let m = |r: &(String, Vec<priordepth_core::MetricReport>)| r.1[0].metrics.expect("metrics");
    let wins = with
        .iter()
        .zip(&without)
        .filter(|(a, b)| m(a).rmse_lin < m(b).rmse_lin)
        .count();
    let mean = |rows: &[(String, Vec<priordepth_core::MetricReport>)]| {
        rows.iter().map(|r| m(r).rmse_silog).sum::<f64>() / rows.len() as f64
    };
    let (silog_with, silog_without) = (mean(&with), mean(&without));
    let fraction = wins as f64 / held_out.len() as f64;
    let detail = format!(
        "priors win on {wins}/{} samples, mean silog {silog_with:.4} vs {silog_without:.4}, {:.0} s",
        held_out.len(),
        t.elapsed().as_secs_f64()
    );
    ensure(fraction >= 0.9, detail.clone())?;
    ensure(silog_with <= silog_without, detail.clone())?;
    within(t.elapsed(), 1800.0)?;
    Ok(detail)
}

// 8 --------------------------------------------------------------------------

fn prior_sparsity() -> Outcome {
    let s: Vec<DepthSample<f64>> = generate_synthetic(8, 1, 320, 240, 200).map_err(|e| e.to_string())?;
    let prior = &s[0].prior;
    ensure(prior.len() == 200, format!("{} priors", prior.len()))?;
    let pct = 100.0 * prior.pixel_coverage(320, 240);
    let oracle = 100.0 * 200.0 / (320.0 * 240.0);
    ensure((pct - oracle).abs() < 1e-12, format!("coverage {pct} vs {oracle}"))?;
    let shown = format!("{pct:.2}%");
    ensure(shown == "0.26%", format!("reported {shown}"))?;
    Ok(format!("200 priors at 320x240 cover {shown}"))
}

// 9 --------------------------------------------------------------------------

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_priordepth"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`{}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn pipeline_round_trip() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |s: &str| tmp.path().join(s).display().to_string();
    let (data, run) = (p("seq"), p("run"));
    cli(&[
        "synth",
        "--out",
        &data,
        "--count",
        "4",
        "--size",
        "128x96",
        "--sequence",
        "--seed",
        "3",
    ])?;
    cli(&[
        "extract-priors",
        "--rgb-dir",
        &p("seq/rgb"),
        "--depth-dir",
        &p("seq/depth"),
        "--out",
        &p("seq/priors"),
    ])?;
    let gt: Grid<f64> =
        read_depth(Path::new(&p("seq/depth/frame_0000.tif")), DepthFormat::TiffMeters).map_err(|e| e.to_string())?;
    let prior =
        read_prior_csv::<f64>(Path::new(&p("seq/priors/frame_0000.csv")), "frame_0000").map_err(|e| e.to_string())?;
    ensure(!prior.is_empty(), "no priors extracted from the shifted pair")?;
    for q in &prior.points {
        let g = *gt.get(snap_to_pixel(q.x, gt.width()), snap_to_pixel(q.y, gt.height()));
        ensure(
            (q.depth - g).abs() <= 1e-5 * g,
            format!("prior depth {} vs gt {g}", q.depth),
        )?;
    }

    cli(&[
        "train",
        "--preset",
        "toy",
        "--data",
        &data,
        "--out",
        &run,
        "--max-steps",
        "50",
        "--epochs",
        "1000",
        "--set",
        "eval_every=0",
    ])?;
    let log = std::fs::read_to_string(tmp.path().join("run/train_log.csv")).map_err(|e| e.to_string())?;
    let totals: Vec<f64> = log
        .lines()
        .skip(1)
        .map(|l| {
            l.split(',')
                .nth(3)
                .and_then(|v| v.parse().ok())
                .ok_or(format!("bad log line {l:?}"))
        })
        .collect::<Result<_, _>>()?;
    ensure(totals.len() == 50, format!("{} logged steps", totals.len()))?;
    let (first, last) = (totals[0], totals[49]);
    ensure(last < first, format!("loss {first} -> {last}"))?;

    let ckpt = p("run/last.safetensors");
    for n in ["0", "200"] {
        let csv = cli(&["eval", "--checkpoint", &ckpt, "--data", &data, "--priors", n])?;
        ensure(
            csv.starts_with(&format!("# priors={n}\n")),
            "eval CSV lacks the prior count",
        )?;
        ensure(
            csv.lines().any(|l| l.starts_with("mean,inf,")),
            "eval CSV has no mean row",
        )?;
    }
    cli(&[
        "infer",
        "--checkpoint",
        &ckpt,
        "--rgb",
        &p("seq/rgb/frame_0000.png"),
        "--prior",
        &p("seq/priors/frame_0000.csv"),
        "--out",
        &p("pred/frame_0000"),
    ])?;
    let pred: Grid<f32> =
        read_depth(Path::new(&p("pred/frame_0000.tiff")), DepthFormat::TiffMeters).map_err(|e| e.to_string())?;
    ensure(
        (pred.width(), pred.height()) == (64, 48),
        "inferred raster has the wrong size",
    )?;
    ensure(
        tmp.path().join("pred/frame_0000.png").is_file(),
        "no visualization written",
    )?;
    Ok(format!(
        "{} priors on frame 0, loss {first:.3} -> {last:.3} over 50 steps",
        prior.len()
    ))
}

// ---------------------------------------------------------------------------

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 9] = [
    (1, "densification oracle", densification_oracle),
    (2, "analytic loss fixtures", loss_fixtures),
    (3, "gradient verification", gradient_verification),
    (4, "normalization and bounds", normalization_suite),
    (5, "metric properties", metric_properties),
    (6, "overfit sanity", overfit_sanity),
    (7, "prior-benefit direction", prior_benefit),
    (8, "prior sparsity bookkeeping", prior_sparsity),
    (9, "pipeline round trip", pipeline_round_trip),
];

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, run) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(run)) {
            Ok(o) => o,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS - {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL - {detail} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

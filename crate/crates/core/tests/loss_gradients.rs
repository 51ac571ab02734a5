//! Analytic loss gradients against central finite differences in f64.

use priordepth_core::objectives::{
    chamfer_sets, chamfer_sets_grad, loss_rmse, loss_rmse_grad, loss_silog, loss_silog_grad, objective_grad, LossConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn central_diff(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let v = x[i];
            x[i] = v + H;
            let up = f(&x);
            x[i] = v - H;
            let down = f(&x);
            x[i] = v;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn case(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..9.0)).collect();
    let pred = gt
        .iter()
        .map(|g| g * rng.gen_range(0.6..1.5) + rng.gen_range(-0.2..0.2))
        .collect();
    let mask = (0..n).map(|_| rng.gen_bool(0.8)).collect();
    (pred, gt, mask)
}

fn check(analytic: &[f64], numeric: &[f64], mask: Option<&[bool]>) {
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        if let Some(m) = mask {
            if !m[i] {
                assert_eq!(*a, 0.0);
                continue;
            }
        }
        assert!(rel_err(*a, *n) < 1e-3 || (a - n).abs() < 1e-9, "index {i}: {a} vs {n}");
    }
}

#[test]
fn rmse_gradient() {
    for seed in 0..5 {
        let (pred, gt, mask) = case(seed, 40);
        let (_, g) = loss_rmse_grad(&pred, &gt, &mask).unwrap();
        let fd = central_diff(&pred, |p| loss_rmse(p, &gt, &mask).unwrap());
        check(&g, &fd, Some(&mask));
    }
}

#[test]
fn silog_gradient() {
    let cfg = LossConfig::default();
    for seed in 0..5 {
        let (pred, gt, mask) = case(100 + seed, 40);
        let (_, g) = loss_silog_grad(&pred, &gt, &mask, &cfg).unwrap();
        let fd = central_diff(&pred, |p| loss_silog(p, &gt, &mask, &cfg).unwrap());
        check(&g, &fd, Some(&mask));
    }
}

#[test]
fn chamfer_gradient() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let centers: Vec<f64> = (0..16).map(|_| rng.gen_range(0.5..10.0)).collect();
        let targets: Vec<f64> = (0..60).map(|_| rng.gen_range(0.5..10.0)).collect();
        let (_, g) = chamfer_sets_grad(&centers, &targets).unwrap();
        let fd = central_diff(&centers, |c| chamfer_sets(c, &targets).unwrap());
        check(&g, &fd, None);
    }
}

#[test]
fn full_objective_gradient() {
    let cfg = LossConfig::default();
    let (pred, gt, mask) = case(300, 30);
    let centers: Vec<f64> = (0..8).map(|i| 0.7 + 1.1 * i as f64).collect();
    let g = objective_grad(&pred, &gt, &mask, &centers, &cfg).unwrap();
    let fd = central_diff(&pred, |p| {
        objective_grad(p, &gt, &mask, &centers, &cfg).unwrap().breakdown.total
    });
    check(&g.d_pred, &fd, Some(&mask));
    let fd = central_diff(&centers, |c| {
        objective_grad(&pred, &gt, &mask, c, &cfg).unwrap().breakdown.total
    });
    check(&g.d_centers, &fd, None);
}

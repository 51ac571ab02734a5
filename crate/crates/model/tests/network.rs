use candle_core::{DType, Device, Tensor, Var};
use priordepth_core::rng::rng_for;
use priordepth_core::synthetic::generate_synthetic;
use priordepth_core::{densify, zero_prior_maps, PriorMaps};
use priordepth_model::bins::{compute_bin_centers, compute_bin_widths, regress_depth};
use priordepth_model::network::inverse_softplus;
use priordepth_model::ops::ShapeCache;
use priordepth_model::{DepthNetworkF32, DepthNetworkF64, NetInput, NetworkConfig};
use rand::Rng;

fn cpu() -> Device {
    Device::Cpu
}

#[test]
fn default_pyramid_and_parameter_budget() {
    let c = NetworkConfig::default();
    let sizes: Vec<_> = (0..5).map(|l| c.level_size(l)).collect();
    assert_eq!(sizes, vec![(160, 120), (80, 60), (40, 30), (20, 15), (10, 8)]);
    let net = DepthNetworkF32::new(c, 0, &cpu()).unwrap();
    let n = net.num_params() as f64;
    assert!((n - 15.6e6).abs() <= 0.2 * 15.6e6, "{n} parameters");
}

#[test]
fn toy_shapes() {
    let cfg = NetworkConfig::toy();
    assert_eq!(cfg.level_size(4), (2, 2));
    assert_eq!(
        NetworkConfig {
            patch_size: 8,
            ..NetworkConfig::toy()
        }
        .n_patches(),
        12
    );
    let net = DepthNetworkF32::new(cfg.clone(), 3, &cpu()).unwrap();
    let data = generate_synthetic::<f32>(1, 2, 64, 48, 50).unwrap();
    let maps: Vec<PriorMaps<f32>> = data.iter().map(|s| densify(&s.prior, 64, 48, 10.0).unwrap()).collect();
    let images: Vec<&[f32]> = data.iter().map(|s| s.image.as_slice()).collect();
    let input = NetInput::new(&cfg, &images, &maps, &cpu()).unwrap();
    let pyramid = net.encode(&input.image).unwrap();
    let dims: Vec<_> = pyramid.iter().map(|t| t.dims().to_vec()).collect();
    assert_eq!(dims[4][2..], [2, 2]);
    let decoded = net.decode(&pyramid, input.priors.as_ref()).unwrap();
    assert_eq!(decoded.dims()[1..], [2, 24, 32]);
    let mv = net.mvit(&decoded, input.priors.as_ref()).unwrap();
    // The head emits n bin logits plus one range value.
    assert_eq!(mv.logits_raw.dims(), &[2, 16]);
    assert_eq!(mv.range_raw.dims(), &[2, 1]);
    assert_eq!(mv.attention.dims(), &[16, 2, 24, 32]);
    let pred = net.forward(&input).unwrap();
    assert_eq!(pred.depth.dims(), &[2, 48, 64]);
    assert_eq!(pred.depth_half.dims(), &[2, 24, 32]);
    assert_eq!(pred.probs.dims(), &[16, 2, 24, 32]);
    assert_eq!(pred.centers.dims(), &[2, 16]);
}

#[test]
fn forward_is_deterministic_and_prior_sensitive() {
    let cfg = NetworkConfig::toy();
    let s = generate_synthetic::<f32>(4, 1, 64, 48, 100).unwrap().remove(0);
    let maps = densify(&s.prior, 64, 48, 10.0).unwrap();
    let a = DepthNetworkF32::new(cfg.clone(), 11, &cpu()).unwrap();
    let b = DepthNetworkF32::new(cfg.clone(), 11, &cpu()).unwrap();
    let pa = a.predict(&s.image, Some(&maps)).unwrap();
    let pb = b.predict(&s.image, Some(&maps)).unwrap();
    assert_eq!(pa, pb);
    let p0 = a.predict(&s.image, Some(&zero_prior_maps(64, 48, 10.0))).unwrap();
    let diff = pa
        .as_slice()
        .iter()
        .zip(p0.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f32, f32::max);
    assert!(diff > 1e-4, "prior had no effect ({diff})");
    let c = DepthNetworkF32::new(cfg, 12, &cpu()).unwrap();
    assert_ne!(pa, c.predict(&s.image, Some(&maps)).unwrap());
}

#[test]
fn network_without_prior_channels_runs() {
    let cfg = NetworkConfig {
        use_prior: false,
        ..NetworkConfig::toy()
    };
    let with = DepthNetworkF32::new(NetworkConfig::toy(), 0, &cpu()).unwrap();
    let net = DepthNetworkF32::new(cfg, 0, &cpu()).unwrap();
    assert!(net.num_params() < with.num_params());
    let s = generate_synthetic::<f32>(4, 1, 64, 48, 0).unwrap().remove(0);
    let d = net.predict(&s.image, None).unwrap();
    assert!(d.as_slice().iter().all(|v| v.is_finite() && *v > 0.0));
}

#[test]
fn width_and_center_fixtures() {
    let cache = ShapeCache::new(cpu(), DType::F64);
    let logits = Tensor::new(&[[0.2f64, 0.7]], &cpu()).unwrap();
    let range = Tensor::new(&[[inverse_softplus(10.0 - 0.01)]], &cpu()).unwrap();
    let b = compute_bin_widths(&logits, &range, 1e-3, 0.01).unwrap();
    let w = b.widths.flatten_all().unwrap().to_vec1::<f64>().unwrap();
    assert!((w[0] - 2.22838).abs() < 1e-5 && (w[1] - 7.77162).abs() < 1e-5, "{w:?}");

    let widths = Tensor::new(&[[1.0f64, 2.0, 3.0]], &cpu()).unwrap();
    let c = compute_bin_centers(&cache, &widths, 0.5).unwrap();
    let c = c.flatten_all().unwrap().to_vec1::<f64>().unwrap();
    for (got, want) in c.iter().zip([1.0, 2.5, 5.0]) {
        assert!((got - want).abs() < 1e-12);
    }
}

/// Scalar functional of bins → centers → depth for gradient checks.
fn bins_functional(cache: &ShapeCache, logits: &Tensor, range: &Tensor, probs: &Tensor, weights: &Tensor) -> Tensor {
    let b = compute_bin_widths(logits, range, 1e-3, 0.01).unwrap();
    let c = compute_bin_centers(cache, &b.widths, 0.0).unwrap();
    regress_depth(probs, &c)
        .unwrap()
        .mul(weights)
        .unwrap()
        .sum_all()
        .unwrap()
}

#[test]
fn bin_path_gradients_match_finite_differences() {
    let dev = cpu();
    let cache = ShapeCache::new(dev.clone(), DType::F64);
    let mut rng = rng_for(5, &[]);
    let n = 4;
    let (h, w) = (3, 2);
    let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
    let range = vec![rng.gen_range(-1.0..2.0)];
    let mut raw: Vec<f64> = (0..n * h * w).map(|_| rng.gen_range(0.1..1.0)).collect();
    for p in 0..h * w {
        let s: f64 = (0..n).map(|i| raw[i * h * w + p]).sum();
        for i in 0..n {
            raw[i * h * w + p] /= s;
        }
    }
    let weights: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let weights = Tensor::from_vec(weights, (1, h, w), &dev).unwrap();

    let lv = Var::from_vec(logits.clone(), (1, n), &dev).unwrap();
    let rv = Var::from_vec(range.clone(), (1, 1), &dev).unwrap();
    let pv = Var::from_vec(raw.clone(), (n, 1, h, w), &dev).unwrap();
    let f = bins_functional(&cache, lv.as_tensor(), rv.as_tensor(), pv.as_tensor(), &weights);
    let grads = f.backward().unwrap();

    let eval = |l: &[f64], r: &[f64], p: &[f64]| {
        let l = Tensor::from_vec(l.to_vec(), (1, n), &dev).unwrap();
        let r = Tensor::from_vec(r.to_vec(), (1, 1), &dev).unwrap();
        let p = Tensor::from_vec(p.to_vec(), (n, 1, h, w), &dev).unwrap();
        bins_functional(&cache, &l, &r, &p, &weights)
            .to_scalar::<f64>()
            .unwrap()
    };
    let fd = |which: usize, i: usize| {
        let h = 1e-6;
        let (mut l1, mut r1, mut p1) = (logits.clone(), range.clone(), raw.clone());
        let (mut l0, mut r0, mut p0) = (logits.clone(), range.clone(), raw.clone());
        match which {
            0 => {
                l1[i] += h;
                l0[i] -= h;
            }
            1 => {
                r1[i] += h;
                r0[i] -= h;
            }
            _ => {
                p1[i] += h;
                p0[i] -= h;
            }
        }
        (eval(&l1, &r1, &p1) - eval(&l0, &r0, &p0)) / (2.0 * h)
    };
    let check = |which: usize, var: &Var, len: usize| {
        let g = grads
            .get(var.as_tensor())
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1::<f64>()
            .unwrap();
        for (i, gi) in g.iter().enumerate().take(len) {
            let want = fd(which, i);
            let rel = (gi - want).abs() / want.abs().max(1e-8);
            assert!(
                rel < 1e-3 || (gi - want).abs() < 1e-9,
                "input {which}[{i}]: {gi} vs {want}"
            );
        }
    };
    check(0, &lv, n);
    check(1, &rv, 1);
    check(2, &pv, n * h * w);
}

#[test]
fn outputs_are_normalized_and_bounded() {
    let cfg = NetworkConfig::toy();
    let mut rng = rng_for(17, &[]);
    for seed in 0..4u64 {
        let net = DepthNetworkF64::new(cfg.clone(), seed, &cpu()).unwrap();
        let data = generate_synthetic::<f64>(100 + seed, 4, 64, 48, 100).unwrap();
        let images: Vec<Vec<f64>> = data
            .iter()
            .map(|s| {
                s.image
                    .iter()
                    .map(|v| (v + rng.gen_range(-0.2..0.2)).clamp(0.0, 1.0))
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = images.iter().map(|v| v.as_slice()).collect();
        let maps: Vec<_> = data.iter().map(|s| densify(&s.prior, 64, 48, 10.0).unwrap()).collect();
        let input = NetInput::new(&cfg, &refs, &maps, &cpu()).unwrap();
        let pred = net.forward(&input).unwrap();
        let range = pred.range.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let widths = pred.widths.to_vec2::<f64>().unwrap();
        let centers = pred.centers.to_vec2::<f64>().unwrap();
        let psum = pred
            .probs
            .sum(0)
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1::<f64>()
            .unwrap();
        assert!(psum.iter().all(|s| (s - 1.0).abs() <= 1e-5));
        let depth = pred.depth.to_vec3::<f64>().unwrap();
        for b in 0..4 {
            let total: f64 = widths[b].iter().sum();
            assert!((total - range[b]).abs() <= 1e-5 * range[b]);
            assert!(centers[b].windows(2).all(|c| c[0] < c[1]));
            let (lo, hi) = (centers[b][0], centers[b][cfg.n_bins - 1]);
            assert!(depth[b].iter().flatten().all(|d| *d >= lo && *d <= hi));
        }
    }
}

//! The depth network: inverted-residual encoder, U-Net decoder that takes the
//! prior at every stage, a small transformer producing bins and attention
//! maps, and the bin-probability head.

use std::marker::PhantomData;

use candle_core::{Device, Tensor};
use priordepth_core::{downsample_prior, Grid, PriorMaps};

use crate::bins::{compute_bin_centers, compute_bin_widths, regress_depth};
use crate::config::NetworkConfig;
use crate::error::{ModelError, Result};
use crate::ops::{
    conv2d, group_norm, layer_norm, leaky_relu, linear, norm_groups, relu6, resize_bilinear, softmax, ShapeCache,
};
use crate::params::{Init, ParamStore};
use crate::Real;

const NORM_EPS: f64 = 1e-5;
const LEAKY_SLOPE: f64 = 0.01;
/// Logit bias at initialization, keeping every bin inside the active side of the clamp.
const INIT_LOGIT: f64 = 1.0;
/// Downsampling factors of the prior fed to the decoder stages and transformer.
const PRIOR_FACTORS: [usize; 4] = [16, 8, 4, 2];

/// Prior maps at strides 16, 8, 4 and 2, each `[2, B, h, w]` (S1 in meters, S2 scaled to peak 1).
#[derive(Clone, Debug)]
pub struct PriorPyramid {
    levels: Vec<Tensor>,
}

impl PriorPyramid {
    pub fn from_maps<T: Real>(maps: &[PriorMaps<T>], device: &Device) -> Result<Self> {
        let b = maps.len();
        let mut levels = Vec::with_capacity(PRIOR_FACTORS.len());
        for &f in &PRIOR_FACTORS {
            let mut s1 = Vec::new();
            let mut s2 = Vec::new();
            let (mut w, mut h) = (0, 0);
            for m in maps {
                let d = downsample_prior(m, f)?;
                let inv_peak = T::one() / PriorMaps::s2_peak(m.sigma);
                s1.extend_from_slice(d.s1.as_slice());
                s2.extend(d.s2.as_slice().iter().map(|&v| v * inv_peak));
                (w, h) = (d.width(), d.height());
            }
            s1.extend(s2);
            levels.push(Tensor::from_vec(s1, (2, b, h, w), device)?);
        }
        Ok(Self { levels })
    }

    /// Level at stride `factor`.
    pub fn at(&self, factor: usize) -> Result<&Tensor> {
        PRIOR_FACTORS
            .iter()
            .position(|&f| f == factor)
            .and_then(|i| self.levels.get(i))
            .ok_or_else(|| ModelError::Shape(format!("no prior level at stride {factor}")))
    }
}

/// A batch ready for the network.
#[derive(Clone, Debug)]
pub struct NetInput {
    /// `[3, B, H, W]`.
    pub image: Tensor,
    /// `None` for networks built without prior channels.
    pub priors: Option<PriorPyramid>,
}

impl NetInput {
    /// Stacks channel-major `3 × H × W` images with one prior per image.
    pub fn new<T: Real>(
        config: &NetworkConfig,
        images: &[&[T]],
        priors: &[PriorMaps<T>],
        device: &Device,
    ) -> Result<Self> {
        let (w, h) = (config.input_width, config.input_height);
        if images.is_empty() {
            return Err(ModelError::Shape("empty batch".into()));
        }
        let b = images.len();
        let plane = w * h;
        let mut data = vec![T::zero(); 3 * b * plane];
        for (i, img) in images.iter().enumerate() {
            if img.len() != 3 * plane {
                return Err(ModelError::Shape(format!(
                    "image {i} has {} values, expected 3x{h}x{w}",
                    img.len()
                )));
            }
            for c in 0..3 {
                data[(c * b + i) * plane..(c * b + i + 1) * plane].copy_from_slice(&img[c * plane..(c + 1) * plane]);
            }
        }
        let image = Tensor::from_vec(data, (3, b, h, w), device)?;
        let priors = if config.use_prior {
            if priors.len() != b {
                return Err(ModelError::Shape(format!("{} priors for {b} images", priors.len())));
            }
            if let Some(m) = priors.iter().find(|m| (m.width(), m.height()) != (w, h)) {
                return Err(ModelError::Shape(format!(
                    "prior maps are {}x{}, expected {w}x{h}",
                    m.width(),
                    m.height()
                )));
            }
            Some(PriorPyramid::from_maps(priors, device)?)
        } else {
            None
        };
        Ok(Self { image, priors })
    }
}

/// Transformer outputs.
#[derive(Clone, Debug)]
pub struct MvitOutput {
    /// `[B, n]` before the clamp.
    pub logits_raw: Tensor,
    /// `[B, 1]`.
    pub range_raw: Tensor,
    /// `[n_kernels, B, h, w]`.
    pub attention: Tensor,
}

#[derive(Clone, Debug)]
pub struct Prediction {
    /// `[B, H, W]` at the input resolution.
    pub depth: Tensor,
    /// `[B, H/2, W/2]` before upsampling.
    pub depth_half: Tensor,
    /// `[n, B, H/2, W/2]`, summing to one over the first axis.
    pub probs: Tensor,
    /// `[B, n]`, non-negative.
    pub logits: Tensor,
    /// `[B, 1]`.
    pub range: Tensor,
    /// `[B, n]`.
    pub widths: Tensor,
    /// `[B, n]`, strictly increasing.
    pub centers: Tensor,
}

impl Prediction {
    /// Depth maps of the batch as rasters.
    pub fn depth_grids<T: Real>(&self) -> Result<Vec<Grid<T>>> {
        let (b, h, w) = self.depth.dims3()?;
        let flat = self.depth.flatten_all()?.to_vec1::<T>()?;
        (0..b)
            .map(|i| Ok(Grid::from_vec(w, h, flat[i * h * w..(i + 1) * h * w].to_vec())?))
            .collect()
    }
}

#[derive(Debug)]
pub struct DepthNetwork<T> {
    config: NetworkConfig,
    params: ParamStore,
    cache: ShapeCache,
    _scalar: PhantomData<T>,
}

fn conv_shape(c_out: usize, c_in: usize, k: usize) -> [usize; 4] {
    [c_out, c_in, k, k]
}

impl<T: Real> DepthNetwork<T> {
    /// Randomly initialized network.
    pub fn new(config: NetworkConfig, seed: u64, device: &Device) -> Result<Self> {
        config.validate()?;
        let mut p = ParamStore::new(T::DTYPE, device.clone());
        Self::init_params(&config, &mut p, seed)?;
        Ok(Self::assemble(config, p))
    }

    fn assemble(config: NetworkConfig, params: ParamStore) -> Self {
        let cache = ShapeCache::new(params.device().clone(), params.dtype());
        Self {
            config,
            params,
            cache,
            _scalar: PhantomData,
        }
    }

    fn init_params(cfg: &NetworkConfig, p: &mut ParamStore, seed: u64) -> Result<()> {
        let norm = |p: &mut ParamStore, name: &str, c: usize| -> Result<()> {
            p.init(&format!("{name}.weight"), &[c], Init::Const(1.0), seed)?;
            p.init(&format!("{name}.bias"), &[c], Init::Const(0.0), seed)
        };
        let pc = cfg.prior_channels();

        let c0 = cfg.stem_channels();
        p.init("encoder.stem.conv.weight", &conv_shape(c0, 3, 3), Init::he(27), seed)?;
        norm(p, "encoder.stem.norm", c0)?;
        for (i, b) in cfg.encoder_blocks().iter().enumerate() {
            let pre = format!("encoder.blocks.{i}");
            let hidden = b.c_in * b.expand;
            if b.expand != 1 {
                p.init(
                    &format!("{pre}.expand.conv.weight"),
                    &conv_shape(hidden, b.c_in, 1),
                    Init::he(b.c_in),
                    seed,
                )?;
                norm(p, &format!("{pre}.expand.norm"), hidden)?;
            }
            p.init(
                &format!("{pre}.dw.conv.weight"),
                &conv_shape(hidden, 1, 3),
                Init::he(9),
                seed,
            )?;
            norm(p, &format!("{pre}.dw.norm"), hidden)?;
            p.init(
                &format!("{pre}.project.conv.weight"),
                &conv_shape(b.c_out, hidden, 1),
                Init::he(hidden),
                seed,
            )?;
            norm(p, &format!("{pre}.project.norm"), b.c_out)?;
        }

        let pyr = cfg.pyramid_channels();
        let f = cfg.decoder_features;
        p.init(
            "decoder.bottleneck.weight",
            &conv_shape(f, pyr[4], 1),
            Init::he(pyr[4]),
            seed,
        )?;
        p.init("decoder.bottleneck.bias", &[f], Init::Const(0.0), seed)?;
        let mut c_prev = f;
        for (s, &c_out) in cfg.decoder_channels().iter().enumerate() {
            let skip = pyr[3 - s];
            let c_in = c_prev + skip + pc;
            let pre = format!("decoder.stages.{s}");
            p.init(
                &format!("{pre}.conv1.weight"),
                &conv_shape(c_out, c_in, 3),
                Init::he(9 * c_in),
                seed,
            )?;
            norm(p, &format!("{pre}.norm1"), c_out)?;
            p.init(
                &format!("{pre}.conv2.weight"),
                &conv_shape(c_out, c_out, 3),
                Init::he(9 * c_out),
                seed,
            )?;
            norm(p, &format!("{pre}.norm2"), c_out)?;
            c_prev = c_out;
        }

        let (e, ps) = (cfg.embed_dim, cfg.patch_size);
        let c_vit = c_prev + pc;
        let fan = c_vit * ps * ps;
        p.init(
            "mvit.patch.weight",
            &conv_shape(e, c_vit, ps),
            Init::Normal {
                std: (1.0 / fan as f64).sqrt(),
            },
            seed,
        )?;
        p.init("mvit.patch.bias", &[e], Init::Const(0.0), seed)?;
        p.init("mvit.pos", &[cfg.n_patches(), e], Init::Normal { std: 0.02 }, seed)?;
        for l in 0..cfg.tf_layers {
            let pre = format!("mvit.layers.{l}");
            norm(p, &format!("{pre}.norm1"), e)?;
            p.init(&format!("{pre}.attn.qkv.weight"), &[3 * e, e], Init::xavier(e, e), seed)?;
            p.init(&format!("{pre}.attn.qkv.bias"), &[3 * e], Init::Const(0.0), seed)?;
            p.init(&format!("{pre}.attn.out.weight"), &[e, e], Init::xavier(e, e), seed)?;
            p.init(&format!("{pre}.attn.out.bias"), &[e], Init::Const(0.0), seed)?;
            norm(p, &format!("{pre}.norm2"), e)?;
            p.init(
                &format!("{pre}.ffn.fc1.weight"),
                &[cfg.ffn_dim, e],
                Init::xavier(e, cfg.ffn_dim),
                seed,
            )?;
            p.init(&format!("{pre}.ffn.fc1.bias"), &[cfg.ffn_dim], Init::Const(0.0), seed)?;
            p.init(
                &format!("{pre}.ffn.fc2.weight"),
                &[e, cfg.ffn_dim],
                Init::xavier(cfg.ffn_dim, e),
                seed,
            )?;
            p.init(&format!("{pre}.ffn.fc2.bias"), &[e], Init::Const(0.0), seed)?;
        }
        let (hid, n) = (cfg.mlp_hidden, cfg.n_bins);
        p.init("mvit.head.fc1.weight", &[hid, e], Init::he(e), seed)?;
        p.init("mvit.head.fc1.bias", &[hid], Init::Const(0.0), seed)?;
        p.init("mvit.head.fc2.weight", &[hid, hid], Init::he(hid), seed)?;
        p.init("mvit.head.fc2.bias", &[hid], Init::Const(0.0), seed)?;
        p.init(
            "mvit.head.fc3.weight",
            &[n + 1, hid],
            Init::Normal {
                std: 0.1 / (hid as f64).sqrt(),
            },
            seed,
        )?;
        // Equal widths and range `init_range` at start.
        let range_bias = inverse_softplus(cfg.init_range - cfg.r_min);
        let mut b3 = vec![INIT_LOGIT; n];
        b3.push(range_bias);
        p.init("mvit.head.fc3.bias", &[n + 1], Init::Const(0.0), seed)?;
        p.assign("mvit.head.fc3.bias", &Tensor::from_vec(b3, n + 1, p.device())?)?;
        p.init(
            "mvit.query.weight",
            &conv_shape(e, c_vit, 3),
            Init::Normal {
                std: (1.0 / (9 * c_vit) as f64).sqrt(),
            },
            seed,
        )?;
        p.init("mvit.query.bias", &[e], Init::Const(0.0), seed)?;

        let nk = cfg.n_kernels;
        p.init(
            "head.conv.weight",
            &conv_shape(n, nk, 1),
            Init::Normal {
                std: (1.0 / nk as f64).sqrt(),
            },
            seed,
        )?;
        p.init("head.conv.bias", &[n], Init::Const(0.0), seed)?;
        Ok(())
    }

    /// Network around existing parameters; every expected name must be present with its shape.
    pub fn from_params(config: NetworkConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let mut reference = ParamStore::new(params.dtype(), Device::Cpu);
        Self::init_params(&config, &mut reference, 0)?;
        for (name, v) in reference.iter() {
            let got = params
                .var(name)
                .ok_or_else(|| ModelError::Shape(format!("missing parameter {name}")))?;
            if got.dims() != v.dims() {
                return Err(ModelError::Shape(format!(
                    "{name}: expected {:?}, got {:?}",
                    v.dims(),
                    got.dims()
                )));
            }
        }
        if params.len() != reference.len() {
            let extra: Vec<_> = params
                .iter()
                .map(|(k, _)| k.clone())
                .filter(|k| reference.var(k).is_none())
                .collect();
            return Err(ModelError::Shape(format!("unexpected parameters {extra:?}")));
        }
        Ok(Self::assemble(config, params))
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn device(&self) -> &Device {
        self.params.device()
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    /// Human-readable parameter breakdown.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (k, n) in self.params.group_counts(2) {
            s.push_str(&format!("{k:<24} {n:>12}\n"));
        }
        s.push_str(&format!("{:<24} {:>12}\n", "total", self.num_params()));
        s
    }

    fn p(&self, name: &str) -> Result<&Tensor> {
        self.params.get(name)
    }

    fn conv(&self, x: &Tensor, name: &str, stride: usize, pad: usize, depthwise: bool, bias: bool) -> Result<Tensor> {
        let b = if bias {
            Some(self.p(&format!("{name}.bias"))?)
        } else {
            None
        };
        conv2d(
            &self.cache,
            x,
            self.p(&format!("{name}.weight"))?,
            b,
            stride,
            pad,
            depthwise,
        )
    }

    fn gn(&self, x: &Tensor, name: &str) -> Result<Tensor> {
        let c = x.dim(0)?;
        group_norm(
            x,
            norm_groups(c),
            self.p(&format!("{name}.weight"))?,
            self.p(&format!("{name}.bias"))?,
            NORM_EPS,
        )
    }

    fn ln(&self, x: &Tensor, name: &str) -> Result<Tensor> {
        layer_norm(
            x,
            self.p(&format!("{name}.weight"))?,
            self.p(&format!("{name}.bias"))?,
            NORM_EPS,
        )
    }

    fn lin(&self, x: &Tensor, name: &str) -> Result<Tensor> {
        linear(
            x,
            self.p(&format!("{name}.weight"))?,
            Some(self.p(&format!("{name}.bias"))?),
        )
    }

    /// Feature pyramid at strides 2, 4, 8, 16 and 32 from a `[3, B, H, W]` image.
    pub fn encode(&self, image: &Tensor) -> Result<Vec<Tensor>> {
        let (c, _, h, w) = image.dims4()?;
        if c != 3 || (w, h) != (self.config.input_width, self.config.input_height) {
            return Err(ModelError::Shape(format!(
                "image is {c}x{h}x{w}, expected 3x{}x{}",
                self.config.input_height, self.config.input_width
            )));
        }
        let mut x = self.conv(image, "encoder.stem.conv", 2, 1, false, false)?;
        x = relu6(&self.gn(&x, "encoder.stem.norm")?)?;
        let taps = self.config.pyramid_taps();
        let mut pyramid = Vec::with_capacity(taps.len());
        for (i, b) in self.config.encoder_blocks().iter().enumerate() {
            let pre = format!("encoder.blocks.{i}");
            let mut y = x.clone();
            if b.expand != 1 {
                y = self.conv(&y, &format!("{pre}.expand.conv"), 1, 0, false, false)?;
                y = relu6(&self.gn(&y, &format!("{pre}.expand.norm"))?)?;
            }
            y = self.conv(&y, &format!("{pre}.dw.conv"), b.stride, 1, true, false)?;
            y = relu6(&self.gn(&y, &format!("{pre}.dw.norm"))?)?;
            y = self.conv(&y, &format!("{pre}.project.conv"), 1, 0, false, false)?;
            y = self.gn(&y, &format!("{pre}.project.norm"))?;
            x = if b.stride == 1 && b.c_in == b.c_out {
                (x + y)?
            } else {
                y
            };
            if taps.contains(&i) {
                pyramid.push(x.clone());
            }
        }
        Ok(pyramid)
    }

    fn zero_priors(&self, like: &Tensor) -> Result<Option<PriorPyramid>> {
        if !self.config.use_prior {
            return Ok(None);
        }
        let b = like.dim(1)?;
        let (w, h) = (self.config.input_width, self.config.input_height);
        let levels = PRIOR_FACTORS
            .iter()
            .map(|&f| Ok(Tensor::zeros((2, b, h / f, w / f), like.dtype(), like.device())?))
            .collect::<Result<_>>()?;
        Ok(Some(PriorPyramid { levels }))
    }

    fn with_prior(&self, x: &Tensor, priors: Option<&PriorPyramid>, factor: usize) -> Result<Tensor> {
        match priors {
            Some(p) if self.config.use_prior => {
                let lvl = p.at(factor)?;
                if lvl.dims()[1..] != x.dims()[1..] {
                    return Err(ModelError::Shape(format!(
                        "prior at stride {factor} is {:?}, features are {:?}",
                        lvl.dims(),
                        x.dims()
                    )));
                }
                Ok(Tensor::cat(&[x, lvl], 0)?)
            }
            _ => Ok(x.clone()),
        }
    }

    /// Stride-2 decoder features from the pyramid, with the prior joined at every stage.
    pub fn decode(&self, pyramid: &[Tensor], priors: Option<&PriorPyramid>) -> Result<Tensor> {
        if pyramid.len() != 5 {
            return Err(ModelError::Shape(format!(
                "pyramid has {} levels, expected 5",
                pyramid.len()
            )));
        }
        let mut x = self.conv(&pyramid[4], "decoder.bottleneck", 1, 0, false, true)?;
        for s in 0..4 {
            let skip = &pyramid[3 - s];
            let (_, _, h, w) = skip.dims4()?;
            let up = resize_bilinear(&self.cache, &x, h, w)?;
            let joined = self.with_prior(&Tensor::cat(&[&up, skip], 0)?, priors, PRIOR_FACTORS[s])?;
            let pre = format!("decoder.stages.{s}");
            let y = self.conv(&joined, &format!("{pre}.conv1"), 1, 1, false, false)?;
            let y = leaky_relu(&self.gn(&y, &format!("{pre}.norm1"))?, LEAKY_SLOPE)?;
            let y = self.conv(&y, &format!("{pre}.conv2"), 1, 1, false, false)?;
            x = leaky_relu(&self.gn(&y, &format!("{pre}.norm2"))?, LEAKY_SLOPE)?;
        }
        Ok(x)
    }

    /// Bin logits, raw range and range-attention maps from stride-2 features.
    pub fn mvit(&self, features: &Tensor, priors: Option<&PriorPyramid>) -> Result<MvitOutput> {
        let cfg = &self.config;
        let x = self.with_prior(features, priors, 2)?;
        let (_, b, h, w) = x.dims4()?;
        let ps = cfg.patch_size;
        if h % ps != 0 || w % ps != 0 {
            return Err(ModelError::Shape(format!("patch size {ps} does not divide {w}x{h}")));
        }
        let e = cfg.embed_dim;
        let n_tok = (h / ps) * (w / ps);
        let tokens = self.conv(&x, "mvit.patch", ps, 0, false, true)?; // [E, B, gh, gw]
        let tokens = tokens.reshape((e, b, n_tok))?.permute((1, 2, 0))?.contiguous()?;
        let mut t = tokens.broadcast_add(self.p("mvit.pos")?)?; // [B, N, E]

        let heads = cfg.tf_heads;
        let dh = e / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        for l in 0..cfg.tf_layers {
            let pre = format!("mvit.layers.{l}");
            let hn = self.ln(&t, &format!("{pre}.norm1"))?;
            let qkv = self.lin(&hn, &format!("{pre}.attn.qkv"))?; // [B, N, 3E]
            let qkv = qkv.reshape((b, n_tok, 3, heads, dh))?.permute((2, 0, 3, 1, 4))?;
            let q = qkv.get(0)?.contiguous()?;
            let k = qkv.get(1)?.contiguous()?;
            let v = qkv.get(2)?.contiguous()?;
            let att = (q.matmul(&k.t()?.contiguous()?)? * scale)?;
            let att = softmax(&att, 3)?;
            let o = att.matmul(&v)?.transpose(1, 2)?.contiguous()?.reshape((b, n_tok, e))?;
            t = (t + self.lin(&o, &format!("{pre}.attn.out"))?)?;
            let hn = self.ln(&t, &format!("{pre}.norm2"))?;
            let f = self.lin(&hn, &format!("{pre}.ffn.fc1"))?.gelu_erf()?;
            t = (t + self.lin(&f, &format!("{pre}.ffn.fc2"))?)?;
        }

        let head = t.narrow(1, 0, 1)?.reshape((b, e))?;
        let head = leaky_relu(&self.lin(&head, "mvit.head.fc1")?, LEAKY_SLOPE)?;
        let head = leaky_relu(&self.lin(&head, "mvit.head.fc2")?, LEAKY_SLOPE)?;
        let out = self.lin(&head, "mvit.head.fc3")?; // [B, n + 1]
        let n = cfg.n_bins;
        let logits_raw = out.narrow(1, 0, n)?;
        let range_raw = out.narrow(1, n, 1)?;

        let nk = cfg.n_kernels;
        let kernels = t.narrow(1, 1, nk)?.contiguous()?; // [B, nk, E]
        let query = self.conv(&x, "mvit.query", 1, 1, false, true)?; // [E, B, h, w]
        let query = query.reshape((e, b, h * w))?.transpose(0, 1)?.contiguous()?; // [B, E, hw]
        let maps = (kernels.matmul(&query)? / (e as f64).sqrt())?; // [B, nk, hw]
        let attention = maps.transpose(0, 1)?.contiguous()?.reshape((nk, b, h, w))?;
        Ok(MvitOutput {
            logits_raw,
            range_raw,
            attention,
        })
    }

    /// Full forward pass. Without a prior pyramid a prior-aware network sees all-zero maps.
    pub fn forward(&self, input: &NetInput) -> Result<Prediction> {
        let cfg = &self.config;
        let zeros;
        let priors = match &input.priors {
            Some(p) => Some(p),
            None => {
                zeros = self.zero_priors(&input.image)?;
                zeros.as_ref()
            }
        };
        let pyramid = self.encode(&input.image)?;
        let features = self.decode(&pyramid, priors)?;
        let mv = self.mvit(&features, priors)?;
        let bins = compute_bin_widths(&mv.logits_raw, &mv.range_raw, cfg.eps, cfg.r_min)?;
        let centers = compute_bin_centers(&self.cache, &bins.widths, cfg.d_min)?;
        let scores = self.conv(&mv.attention, "head.conv", 1, 0, false, true)?;
        let probs = softmax(&scores, 0)?;
        let depth_half = regress_depth(&probs, &centers)?;
        let (b, h2, w2) = depth_half.dims3()?;
        let depth = resize_bilinear(
            &self.cache,
            &depth_half.reshape((1, b, h2, w2))?,
            cfg.input_height,
            cfg.input_width,
        )?
        .reshape((b, cfg.input_height, cfg.input_width))?;
        Ok(Prediction {
            depth,
            depth_half,
            probs,
            logits: bins.logits,
            range: bins.range,
            widths: bins.widths,
            centers,
        })
    }

    /// Depth of one channel-major image, optionally with its prior maps.
    pub fn predict(&self, image: &[T], prior: Option<&PriorMaps<T>>) -> Result<Grid<T>> {
        let priors: Vec<PriorMaps<T>> = match prior {
            Some(p) => vec![p.clone()],
            None => vec![priordepth_core::zero_prior_maps(
                self.config.input_width,
                self.config.input_height,
                T::lit(self.config.prior_sigma),
            )],
        };
        let input = NetInput::new(&self.config, &[image], &priors, self.device())?;
        let pred = self.forward(&input)?;
        Ok(pred.depth_grids()?.remove(0))
    }
}

/// `ln(eʸ − 1)`, the raw value whose softplus is `y`.
pub fn inverse_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

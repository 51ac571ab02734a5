//! Network hyperparameters and the shapes they imply.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub input_width: usize,
    pub input_height: usize,
    pub n_bins: usize,
    /// Side of the square transformer patches, in stride-2 feature pixels.
    pub patch_size: usize,
    pub embed_dim: usize,
    pub tf_layers: usize,
    pub tf_heads: usize,
    /// Hidden width of the transformer feed-forward blocks.
    pub ffn_dim: usize,
    /// Output embeddings used as attention-map kernels.
    pub n_kernels: usize,
    /// Hidden width of the bin/range MLP head.
    pub mlp_hidden: usize,
    pub width_mult: f64,
    /// Channels after the bottleneck; halved at every decoder stage.
    pub decoder_features: usize,
    pub eps: f64,
    pub d_min: f64,
    pub r_min: f64,
    /// Proximity-channel width used when densifying priors for this network.
    pub prior_sigma: f64,
    /// When false the network has no prior input channels at all.
    pub use_prior: bool,
    /// Depth range predicted by a freshly initialized network, meters.
    pub init_range: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input_width: 320,
            input_height: 240,
            n_bins: 256,
            patch_size: 8,
            embed_dim: 128,
            tf_layers: 4,
            tf_heads: 4,
            ffn_dim: 1024,
            n_kernels: 128,
            mlp_hidden: 256,
            width_mult: 1.0,
            decoder_features: 1024,
            eps: 1e-3,
            d_min: 0.0,
            r_min: 0.01,
            prior_sigma: 10.0,
            use_prior: true,
            init_range: 10.0,
        }
    }
}

/// One inverted-residual block of the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
    pub expand: usize,
}

/// `(expansion, channels, repeats, stride)` of the inverted-residual stages.
const STAGES: [(usize, usize, usize, usize); 7] = [
    (1, 16, 1, 1),
    (6, 24, 2, 2),
    (6, 32, 3, 2),
    (6, 64, 4, 2),
    (6, 96, 3, 1),
    (6, 160, 3, 2),
    (6, 320, 1, 1),
];

/// Channel rounding used by inverted-residual backbones.
pub fn make_divisible(v: f64, divisor: usize) -> usize {
    let d = divisor as f64;
    let rounded = ((v + d / 2.0) / d).floor() * d;
    let r = rounded.max(d);
    if r < 0.9 * v {
        (r + d) as usize
    } else {
        r as usize
    }
}

impl NetworkConfig {
    /// Desk-scale configuration for 64×48 inputs.
    pub fn toy() -> Self {
        Self {
            input_width: 64,
            input_height: 48,
            n_bins: 16,
            patch_size: 4,
            embed_dim: 32,
            tf_layers: 2,
            tf_heads: 4,
            ffn_dim: 64,
            n_kernels: 16,
            mlp_hidden: 64,
            width_mult: 0.25,
            decoder_features: 128,
            ..Self::default()
        }
    }

    pub fn prior_channels(&self) -> usize {
        if self.use_prior {
            2
        } else {
            0
        }
    }

    pub fn stem_channels(&self) -> usize {
        make_divisible(32.0 * self.width_mult, 8)
    }

    pub fn encoder_blocks(&self) -> Vec<BlockSpec> {
        let mut c_in = self.stem_channels();
        let mut out = Vec::new();
        for &(t, c, n, s) in &STAGES {
            let c_out = make_divisible(c as f64 * self.width_mult, 8);
            for i in 0..n {
                out.push(BlockSpec {
                    c_in,
                    c_out,
                    stride: if i == 0 { s } else { 1 },
                    expand: t,
                });
                c_in = c_out;
            }
        }
        out
    }

    /// Index of the last encoder block of each pyramid level (strides 2..32).
    pub fn pyramid_taps(&self) -> [usize; 5] {
        // stage ends: 16ch@2, 24ch@4, 32ch@8, 96ch@16, 320ch@32
        [0, 2, 5, 12, 16]
    }

    pub fn pyramid_channels(&self) -> [usize; 5] {
        let blocks = self.encoder_blocks();
        self.pyramid_taps().map(|i| blocks[i].c_out)
    }

    /// `(width, height)` of the pyramid level at stride `2^(level + 1)`.
    pub fn level_size(&self, level: usize) -> (usize, usize) {
        let (mut w, mut h) = (self.input_width, self.input_height);
        for _ in 0..=level {
            w = w.div_ceil(2);
            h = h.div_ceil(2);
        }
        (w, h)
    }

    /// Output channels of decoder stages ending at strides 16, 8, 4, 2.
    pub fn decoder_channels(&self) -> [usize; 4] {
        let f = self.decoder_features;
        [f / 2, f / 4, f / 8, f / 16]
    }

    /// `(columns, rows)` of transformer patches.
    pub fn patch_grid(&self) -> (usize, usize) {
        let (w, h) = self.level_size(0);
        (w / self.patch_size, h / self.patch_size)
    }

    pub fn n_patches(&self) -> usize {
        let (c, r) = self.patch_grid();
        c * r
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.input_width == 0 || self.input_height == 0 {
            return bad("input size must be positive".into());
        }
        if self.n_bins < 2 {
            return bad(format!("n_bins must be at least 2, got {}", self.n_bins));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.r_min >= 0.0) || !(self.init_range > self.r_min) {
            return bad("need 0 <= r_min < init_range".into());
        }
        if !(self.width_mult > 0.0) {
            return bad("width_mult must be positive".into());
        }
        if self.embed_dim == 0 || self.tf_heads == 0 || self.embed_dim % self.tf_heads != 0 {
            return bad(format!(
                "embed_dim {} must be a positive multiple of tf_heads {}",
                self.embed_dim, self.tf_heads
            ));
        }
        if self.decoder_features < 16 || self.decoder_features % 16 != 0 {
            return bad(format!(
                "decoder_features must be a positive multiple of 16, got {}",
                self.decoder_features
            ));
        }
        if self.ffn_dim == 0 || self.mlp_hidden == 0 || self.n_kernels == 0 {
            return bad("ffn_dim, mlp_hidden and n_kernels must be positive".into());
        }
        if self.input_width % 16 != 0 || self.input_height % 16 != 0 {
            return bad(format!(
                "input size {}x{} must be divisible by 16",
                self.input_width, self.input_height
            ));
        }
        let (w, h) = self.level_size(0);
        if self.patch_size == 0 || w % self.patch_size != 0 || h % self.patch_size != 0 {
            return bad(format!(
                "patch_size {} does not divide the {w}x{h} transformer input",
                self.patch_size
            ));
        }
        if self.n_patches() < self.n_kernels + 1 {
            return bad(format!(
                "{} patches cannot provide one head token plus {} kernels",
                self.n_patches(),
                self.n_kernels
            ));
        }
        if !(self.prior_sigma > 0.0) {
            return bad("prior_sigma must be positive".into());
        }
        Ok(())
    }

    /// Names of fields whose values differ, for compatibility reports.
    pub fn diff_keys(&self, other: &Self) -> Vec<String> {
        let a = serde_json::to_value(self).expect("serializable");
        let b = serde_json::to_value(other).expect("serializable");
        let (a, b) = (a.as_object().expect("object"), b.as_object().expect("object"));
        a.keys().filter(|k| a[*k] != b[*k]).cloned().collect()
    }
}

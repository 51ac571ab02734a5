//! Named trainable parameters with seeded, order-independent initialization.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use priordepth_core::rng::derive_seed;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{ModelError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Const(f64),
    Normal { std: f64 },
    Uniform { bound: f64 },
}

impl Init {
    /// He initialization for a layer followed by a rectifier.
    pub fn he(fan_in: usize) -> Self {
        Init::Normal {
            std: (2.0 / fan_in as f64).sqrt(),
        }
    }

    pub fn xavier(fan_in: usize, fan_out: usize) -> Self {
        Init::Uniform {
            bound: (6.0 / (fan_in + fan_out) as f64).sqrt(),
        }
    }
}

/// 64-bit FNV-1a, used to give each parameter its own seed stream.
fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

#[derive(Debug)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(dtype: DType, device: Device) -> Self {
        Self {
            vars: BTreeMap::new(),
            dtype,
            device,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Creates `name` with values drawn from a stream seeded by `(seed, name)`.
    pub fn init(&mut self, name: &str, shape: &[usize], init: Init, seed: u64) -> Result<()> {
        if self.vars.contains_key(name) {
            return Err(ModelError::Config(format!("duplicate parameter {name}")));
        }
        let n: usize = shape.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[name_hash(name)]));
        let data: Vec<f64> = match init {
            Init::Const(c) => vec![c; n],
            Init::Normal { std } => {
                let d = Normal::new(0.0, std).map_err(|e| ModelError::Config(e.to_string()))?;
                (0..n).map(|_| d.sample(&mut rng)).collect()
            }
            Init::Uniform { bound } => {
                let d = Uniform::new_inclusive(-bound, bound).map_err(|e| ModelError::Config(e.to_string()))?;
                (0..n).map(|_| d.sample(&mut rng)).collect()
            }
        };
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        self.vars.insert(name.to_string(), Var::from_tensor(&t)?);
        Ok(())
    }

    /// Adds an existing tensor as parameter `name`, converting to the store dtype.
    pub fn insert(&mut self, name: &str, value: &Tensor) -> Result<()> {
        if self.vars.contains_key(name) {
            return Err(ModelError::Config(format!("duplicate parameter {name}")));
        }
        let t = value.to_dtype(self.dtype)?.to_device(&self.device)?;
        self.vars.insert(name.to_string(), Var::from_tensor(&t)?);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.vars
            .get(name)
            .map(|v| v.as_tensor())
            .ok_or_else(|| ModelError::Config(format!("unknown parameter {name}")))
    }

    pub fn var(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn num_params(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Parameter counts grouped by the first `depth` name components.
    pub fn group_counts(&self, depth: usize) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for (name, v) in &self.vars {
            let key = name.split('.').take(depth).collect::<Vec<_>>().join(".");
            *out.entry(key).or_insert(0) += v.elem_count();
        }
        out
    }

    /// Overwrites the parameter `name`, converting to the store dtype.
    pub fn assign(&self, name: &str, value: &Tensor) -> Result<()> {
        let var = self
            .vars
            .get(name)
            .ok_or_else(|| ModelError::Config(format!("unknown parameter {name}")))?;
        if var.dims() != value.dims() {
            return Err(ModelError::Shape(format!(
                "{name}: expected {:?}, got {:?}",
                var.dims(),
                value.dims()
            )));
        }
        var.set(&value.to_dtype(self.dtype)?.to_device(&self.device)?)?;
        Ok(())
    }

    /// Detached copies of every parameter.
    pub fn snapshot(&self) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().detach()))
            .collect()
    }
}

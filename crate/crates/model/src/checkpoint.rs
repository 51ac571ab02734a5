//! Checkpoints: safetensors files whose header carries the network config and
//! a format version, plus a companion file with the optimizer state.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use safetensors::{Dtype, SafeTensors, View};
use serde::{Deserialize, Serialize};

use crate::config::NetworkConfig;
use crate::error::{ModelError, Result};
use crate::network::DepthNetwork;
use crate::optim::{AdamW, AdamWConfig};
use crate::params::ParamStore;
use crate::Real;

pub const FORMAT_VERSION: u32 = 1;
const KEY_VERSION: &str = "format_version";
const KEY_CONFIG: &str = "network_config";
const KEY_STATE: &str = "train_state";

struct Raw {
    dtype: Dtype,
    shape: Vec<usize>,
    data: Vec<u8>,
}

impl View for &Raw {
    fn dtype(&self) -> Dtype {
        self.dtype
    }

    fn shape(&self) -> &[usize] {
        &self.shape
    }

    fn data(&self) -> Cow<'_, [u8]> {
        Cow::Borrowed(&self.data)
    }

    fn data_len(&self) -> usize {
        self.data.len()
    }
}

fn to_raw(t: &Tensor) -> Result<Raw> {
    let flat = t.flatten_all()?;
    let (dtype, data) = match t.dtype() {
        DType::F32 => (
            Dtype::F32,
            flat.to_vec1::<f32>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
        ),
        DType::F64 => (
            Dtype::F64,
            flat.to_vec1::<f64>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
        ),
        other => return Err(ModelError::Shape(format!("cannot store {other:?} tensors"))),
    };
    Ok(Raw {
        dtype,
        shape: t.dims().to_vec(),
        data,
    })
}

fn from_view(path: &Path, name: &str, v: &safetensors::tensor::TensorView<'_>, device: &Device) -> Result<Tensor> {
    let bytes = v.data();
    let shape = v.shape().to_vec();
    let t = match v.dtype() {
        Dtype::F32 => {
            let vals: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            Tensor::from_vec(vals, shape, device)?
        }
        Dtype::F64 => {
            let vals: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            Tensor::from_vec(vals, shape, device)?
        }
        other => {
            return Err(ModelError::checkpoint(
                path,
                format!("{name} has unsupported dtype {other:?}"),
            ))
        }
    };
    Ok(t)
}

fn write(path: &Path, tensors: &BTreeMap<String, Tensor>, meta: HashMap<String, String>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| ModelError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    let raws = tensors
        .iter()
        .map(|(k, t)| Ok((k.clone(), to_raw(t)?)))
        .collect::<Result<Vec<_>>>()?;
    safetensors::serialize_to_file(raws.iter().map(|(k, r)| (k.as_str(), r)), Some(meta), path)
        .map_err(|e| ModelError::checkpoint(path, e))
}

struct Loaded {
    tensors: BTreeMap<String, Tensor>,
    meta: HashMap<String, String>,
}

fn read(path: &Path, device: &Device) -> Result<Loaded> {
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| ModelError::checkpoint(path, e))?;
    let (_, header) = SafeTensors::read_metadata(&bytes).map_err(|e| ModelError::checkpoint(path, e))?;
    let meta = header.metadata().clone().unwrap_or_default();
    match meta.get(KEY_VERSION).map(|v| v.parse::<u32>()) {
        Some(Ok(FORMAT_VERSION)) => {}
        Some(Ok(v)) => return Err(ModelError::checkpoint(path, format!("unsupported format version {v}"))),
        _ => return Err(ModelError::checkpoint(path, "missing format version")),
    }
    let mut tensors = BTreeMap::new();
    for (name, view) in st.tensors() {
        let t = from_view(path, &name, &view, device)?;
        tensors.insert(name, t);
    }
    Ok(Loaded { tensors, meta })
}

fn base_meta() -> HashMap<String, String> {
    HashMap::from([(KEY_VERSION.to_string(), FORMAT_VERSION.to_string())])
}

pub fn save_network<T: Real>(net: &DepthNetwork<T>, path: &Path) -> Result<()> {
    let mut meta = base_meta();
    meta.insert(
        KEY_CONFIG.into(),
        serde_json::to_string(net.config()).expect("config serializes"),
    );
    write(path, &net.params().snapshot(), meta)
}

/// Network config stored in a checkpoint header.
pub fn read_config(path: &Path) -> Result<NetworkConfig> {
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let (_, header) = SafeTensors::read_metadata(&bytes).map_err(|e| ModelError::checkpoint(path, e))?;
    let cfg = header
        .metadata()
        .as_ref()
        .and_then(|m| m.get(KEY_CONFIG))
        .ok_or_else(|| ModelError::checkpoint(path, "missing network config"))?;
    serde_json::from_str(cfg).map_err(|e| ModelError::checkpoint(path, e))
}

pub fn load_network<T: Real>(path: &Path, device: &Device) -> Result<DepthNetwork<T>> {
    let loaded = read(path, device)?;
    let cfg: NetworkConfig = loaded
        .meta
        .get(KEY_CONFIG)
        .ok_or_else(|| ModelError::checkpoint(path, "missing network config"))
        .and_then(|c| serde_json::from_str(c).map_err(|e| ModelError::checkpoint(path, e)))?;
    let mut params = ParamStore::new(T::DTYPE, device.clone());
    for (name, t) in &loaded.tensors {
        params.insert(name, t)?;
    }
    DepthNetwork::from_params(cfg, params).map_err(|e| ModelError::checkpoint(path, e))
}

/// Loads a checkpoint and requires its config to equal `expected`.
pub fn load_compatible<T: Real>(path: &Path, expected: &NetworkConfig, device: &Device) -> Result<DepthNetwork<T>> {
    let keys = read_config(path)?.diff_keys(expected);
    if !keys.is_empty() {
        return Err(ModelError::Incompatible { keys });
    }
    load_network(path, device)
}

/// Copies every `encoder.*` tensor of `path` whose name and shape match; returns how many.
pub fn load_backbone<T: Real>(net: &DepthNetwork<T>, path: &Path) -> Result<usize> {
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| ModelError::checkpoint(path, e))?;
    let mut n = 0;
    for (name, view) in st.tensors() {
        if !name.starts_with("encoder.") {
            continue;
        }
        match net.params().var(&name) {
            Some(var) if var.dims() == view.shape() => {
                net.params()
                    .assign(&name, &from_view(path, &name, &view, net.device())?)?;
                n += 1;
            }
            _ => log::warn!("{}: skipping backbone tensor {name}", path.display()),
        }
    }
    Ok(n)
}

/// Progress counters stored next to the optimizer moments.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    /// Epochs completed.
    pub epoch: u64,
    /// Optimizer steps taken.
    pub step: u64,
    /// Best evaluation so far as `(epoch, rmse_lin)`.
    pub best: Option<(u64, f64)>,
}

pub fn save_train_state(path: &Path, opt: &AdamW, meta: &TrainMeta) -> Result<()> {
    let mut tensors = BTreeMap::new();
    for (k, m) in &opt.m {
        tensors.insert(format!("m.{k}"), m.clone());
    }
    for (k, v) in &opt.v {
        tensors.insert(format!("v.{k}"), v.clone());
    }
    let mut header = base_meta();
    header.insert(KEY_STATE.into(), serde_json::to_string(meta).expect("meta serializes"));
    header.insert("adam_t".into(), opt.t.to_string());
    header.insert("adam".into(), format!("{:?}", opt.config));
    write(path, &tensors, header)
}

/// Restores optimizer moments and counters; the hyperparameters come from `config`.
pub fn load_train_state(path: &Path, config: AdamWConfig, dtype: DType, device: &Device) -> Result<(AdamW, TrainMeta)> {
    let loaded = read(path, device)?;
    let meta: TrainMeta = loaded
        .meta
        .get(KEY_STATE)
        .ok_or_else(|| ModelError::checkpoint(path, "missing train state"))
        .and_then(|s| serde_json::from_str(s).map_err(|e| ModelError::checkpoint(path, e)))?;
    let mut opt = AdamW::new(config);
    opt.t = loaded
        .meta
        .get("adam_t")
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| ModelError::checkpoint(path, "missing optimizer step count"))?;
    for (k, t) in loaded.tensors {
        let t = t.to_dtype(dtype)?;
        if let Some(name) = k.strip_prefix("m.") {
            opt.m.insert(name.to_string(), t);
        } else if let Some(name) = k.strip_prefix("v.") {
            opt.v.insert(name.to_string(), t);
        } else {
            return Err(ModelError::checkpoint(path, format!("unexpected tensor {k}")));
        }
    }
    Ok((opt, meta))
}

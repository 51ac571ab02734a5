//! Prior-guided adaptive-bin depth network on candle tensors, with its
//! training objective, optimizer, checkpoints and training loop.
//!
//! The network is generic over the element type; [`DepthNetworkF32`] and
//! [`DepthNetworkF64`] fix the two supported precisions.

pub mod bins;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod network;
pub mod objective;
pub mod ops;
pub mod optim;
pub mod params;
pub mod train;

pub use config::NetworkConfig;
pub use error::{ModelError, Result};
pub use network::{DepthNetwork, MvitOutput, NetInput, Prediction, PriorPyramid};
pub use params::{Init, ParamStore};
pub use train::{PriorMode, TrainConfig, Trainer};

use priordepth_core::Scalar;

/// Element types the network can run in.
pub trait Real: Scalar + candle_core::WithDType {}

impl Real for f32 {}
impl Real for f64 {}

pub type DepthNetworkF32 = DepthNetwork<f32>;
pub type DepthNetworkF64 = DepthNetwork<f64>;
pub type TrainerF32 = Trainer<f32>;
pub type TrainerF64 = Trainer<f64>;

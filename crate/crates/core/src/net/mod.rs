//! Two-branch fusion network producing global place descriptors.
//!
//! Each view runs through its own convolutional backbone. After every
//! level the branches exchange information with cross-attention confined
//! to one azimuth column, so a cyclic azimuth shift of the inputs shifts
//! every intermediate feature map by the same amount. Column pooling,
//! NetVLAD and the context gate are permutation-invariant over columns,
//! which makes the descriptor invariant to the shift.

mod checkpoint;
mod config;
mod forward;
mod gradcheck;
mod weights;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use config::NetConfig;
pub use forward::{forward, forward_nodes, ForwardNodes};
pub use gradcheck::{check_network_gradients, ParamGradCheck, NETWORK_TOLERANCE};
pub use weights::{NetworkWeights, ParamVars};

use crate::bev::BevMap;
use crate::engine::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::grid::FeatureGrid;
use crate::riv::RivImage;

/// Unit-norm global descriptor of one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor(Vec<f64>);

impl Descriptor {
    /// Wraps raw values; they must be finite and have unit L2 norm.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("descriptor must be non-empty and finite".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Format(format!("descriptor norm {norm} is not 1")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Euclidean distance between descriptors of equal length.
pub fn descriptor_distance(a: &Descriptor, b: &Descriptor) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("descriptor lengths {} and {}", a.dim(), b.dim())));
    }
    Ok(a.0
        .iter()
        .zip(&b.0)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Converts a grid to a `[C, H, W]` tensor.
pub fn grid_tensor(grid: &FeatureGrid) -> Tensor {
    Tensor::new(&grid.shape(), grid.values().to_vec()).expect("grid shape matches its data")
}

/// Network configuration plus weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionNet {
    config: NetConfig,
    weights: NetworkWeights,
}

impl FusionNet {
    /// Randomly initialized network seeded by `config.seed`.
    pub fn new(config: NetConfig) -> Result<Self> {
        let weights = NetworkWeights::init(&config)?;
        Ok(Self { config, weights })
    }

    pub fn from_weights(config: NetConfig, weights: NetworkWeights) -> Result<Self> {
        let params = weights.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let weights = NetworkWeights::from_params(&config, params)?;
        Ok(Self { config, weights })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn weights(&self) -> &NetworkWeights {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut NetworkWeights {
        &mut self.weights
    }

    pub fn describe(&self, riv: &RivImage, bev: &BevMap) -> Result<Descriptor> {
        self.describe_tensors(&grid_tensor(riv.grid()), &grid_tensor(bev.grid()))
    }

    pub fn describe_tensors(&self, riv: &Tensor, bev: &Tensor) -> Result<Descriptor> {
        let mut tape = Tape::new();
        let params = self.weights.register(&mut tape, false);
        let out = forward(&mut tape, &params, &self.config, riv, bev)?;
        let values = tape.value(out).data().to_vec();
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::Shape("descriptor collapsed to zero before normalization".into()));
        }
        Descriptor::new(values)
    }
}

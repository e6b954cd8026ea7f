use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::config_hash;

/// Shape of the fusion network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    /// Pyramid levels shared by both backbones.
    pub levels: usize,
    /// Feature channels per level.
    pub channels: Vec<usize>,
    /// Downsampling along elevation/range rows, per level.
    pub vertical_strides: Vec<usize>,
    /// Downsampling along azimuth, per level.
    pub azimuth_strides: Vec<usize>,
    pub heads: usize,
    /// NetVLAD clusters.
    pub clusters: usize,
    /// Final descriptor length; a multiple of `clusters`.
    pub descriptor_dim: usize,
    /// Hidden width of the fusion feed-forward blocks, as a multiple of the level's channels.
    pub ffn_expansion: usize,
    pub kernel_size: usize,
    pub riv_channels: usize,
    pub bev_channels: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            channels: vec![16, 32, 64, 128],
            vertical_strides: vec![2; 4],
            azimuth_strides: vec![1; 4],
            heads: 1,
            clusters: 8,
            descriptor_dim: 256,
            ffn_expansion: 2,
            kernel_size: 3,
            riv_channels: 2,
            bev_channels: 4,
            seed: 0,
        }
    }
}

impl NetConfig {
    /// Default network with azimuth stride 2 at levels 2-4: eight times
    /// fewer columns at the deepest level, invariance in steps of 8 bins.
    pub fn speed_profile() -> Self {
        Self {
            azimuth_strides: vec![1, 2, 2, 2],
            ..Self::default()
        }
    }

    /// Two-level network small enough for finite-difference checks and
    /// desk-scale training.
    pub fn tiny() -> Self {
        Self {
            levels: 2,
            channels: vec![4, 8],
            vertical_strides: vec![2, 2],
            azimuth_strides: vec![1, 1],
            clusters: 4,
            descriptor_dim: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.levels;
        if l == 0 {
            return Err(Error::Config("network needs at least one level".into()));
        }
        if self.channels.len() != l || self.vertical_strides.len() != l || self.azimuth_strides.len() != l {
            return Err(Error::Config(format!(
                "channels, vertical_strides and azimuth_strides need {l} entries each"
            )));
        }
        if self.channels.iter().any(|&c| c == 0) {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.vertical_strides.iter().chain(&self.azimuth_strides).any(|&s| s == 0) {
            return Err(Error::Config("strides must be positive".into()));
        }
        if self.heads == 0 || self.channels.iter().any(|c| c % self.heads != 0) {
            return Err(Error::Config(format!("every level's channels must split into {} heads", self.heads)));
        }
        if self.clusters == 0 || self.descriptor_dim == 0 || self.descriptor_dim % self.clusters != 0 {
            return Err(Error::Config(format!(
                "descriptor_dim {} must be a positive multiple of clusters {}",
                self.descriptor_dim, self.clusters
            )));
        }
        if self.kernel_size % 2 == 0 || self.ffn_expansion == 0 {
            return Err(Error::Config("kernel_size must be odd and ffn_expansion positive".into()));
        }
        if self.riv_channels == 0 || self.bev_channels == 0 {
            return Err(Error::Config("input channel counts must be positive".into()));
        }
        Ok(())
    }

    /// Channels of each pooled column fed to NetVLAD.
    pub fn shared_dim(&self) -> usize {
        self.descriptor_dim / self.clusters
    }

    /// Product of all azimuth strides; descriptors are invariant to input
    /// shifts by multiples of this.
    pub fn total_azimuth_stride(&self) -> usize {
        self.azimuth_strides.iter().product()
    }

    pub fn check_width(&self, width: usize) -> Result<()> {
        let s = self.total_azimuth_stride();
        if width == 0 || width % s != 0 {
            return Err(Error::Config(format!(
                "input width {width} is not divisible by the total azimuth stride {s}"
            )));
        }
        Ok(())
    }

    /// Fingerprint of everything that determines parameter shapes and the
    /// forward computation (the seed is excluded).
    pub fn architecture_hash(&self) -> u64 {
        config_hash(&NetConfig { seed: 0, ..self.clone() })
    }
}

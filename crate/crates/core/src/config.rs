//! Run configuration: every knob of a synth/encode/train/eval run in one
//! TOML document. Command-line flags override individual fields.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bev::{BevConfig, BevEncoding};
use crate::error::{Error, Result};
use crate::net::NetConfig;
use crate::riv::RivConfig;
use crate::seed::config_hash;
use crate::train::{MiningConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    /// Query-to-database distance (meters) that counts as a true match.
    pub pos_radius: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: vec![1, 5, 10],
            pos_radius: 9.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Root seed; the network seed is always overwritten with it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub riv: RivConfig,
    pub bev: BevConfig,
    pub net: NetConfig,
    pub mining: MiningConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            riv: RivConfig::default(),
            bev: BevConfig::default(),
            net: NetConfig::default(),
            mining: MiningConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reduced-resolution setup with the tiny network, sized for CPU
    /// training in minutes.
    pub fn toy() -> Self {
        let (h, w) = (16, 64);
        Self {
            output_dir: PathBuf::from("runs/toy"),
            riv: RivConfig { height: h, width: w, ..RivConfig::default() },
            bev: BevConfig { height: h, width: w, ..BevConfig::default() },
            net: NetConfig::tiny(),
            train: TrainConfig { epochs: 30, lr: 1e-3, batch_size: 8 },
            ..Self::default()
        }
    }

    /// Switches the BEV branch to the max-height/occupancy baseline.
    pub fn with_bev_encoding(mut self, encoding: BevEncoding) -> Self {
        self.bev.encoding = encoding;
        self.net.bev_channels = self.bev.channels();
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.net.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Propagates the root seed and checks cross-field consistency.
    pub fn finalize(mut self) -> Result<Self> {
        self.net.seed = self.seed;
        self.riv.validate()?;
        self.bev.validate()?;
        self.net.validate()?;
        self.mining.validate()?;
        self.train.validate()?;
        if self.riv.width != self.bev.width {
            return Err(Error::Config(format!(
                "RIV width {} and BEV width {} must match",
                self.riv.width, self.bev.width
            )));
        }
        if self.net.riv_channels != 2 || self.net.bev_channels != self.bev.channels() {
            return Err(Error::Config(format!(
                "network input channels ({}, {}) do not match the encoders (2, {})",
                self.net.riv_channels,
                self.net.bev_channels,
                self.bev.channels()
            )));
        }
        self.net.check_width(self.riv.width)?;
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) || !(self.eval.pos_radius > 0.0) {
            return Err(Error::Config("eval.ks must be non-empty positive and pos_radius > 0".into()));
        }
        Ok(self)
    }

    /// Hash of everything but the output directory.
    pub fn hash(&self) -> u64 {
        config_hash(&RunConfig {
            output_dir: PathBuf::new(),
            ..self.clone()
        })
    }

    /// Hash of the encoder settings only; stamped into grid files.
    pub fn encoding_hash(&self) -> u64 {
        config_hash(&(&self.riv, &self.bev))
    }
}

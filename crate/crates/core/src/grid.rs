//! Dense channel-major feature grids shared by the range-image and BEV
//! encodings, and the azimuth column convention both use.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column of a planar direction `(x, y)` in a `width`-bin azimuth grid.
///
/// Sensor forward (azimuth 0) lands at column `width / 2`; azimuth grows
/// counter-clockwise towards smaller column indices. A counter-clockwise
/// yaw of `2πk/width` therefore moves content from column `u` to `u - k`.
pub fn azimuth_column(x: f64, y: f64, width: usize) -> usize {
    let phi = y.atan2(x);
    let u = (width as f64 * (0.5 - phi / TAU)).floor() as i64;
    u.rem_euclid(width as i64) as usize
}

/// Fractional distance (in bins) from `(x, y)` to the nearest column
/// boundary. Used to build clouds whose encodings commute exactly with
/// yaw rotations.
pub fn azimuth_boundary_distance(x: f64, y: f64, width: usize) -> f64 {
    let phi = y.atan2(x);
    let pos = width as f64 * (0.5 - phi / TAU);
    let frac = pos - pos.floor();
    frac.min(1.0 - frac)
}

/// What a grid's channels hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Riv,
    NdtBev,
    StdBev,
}

impl GridKind {
    pub fn channel_names(self) -> &'static [&'static str] {
        match self {
            GridKind::Riv => &["range", "intensity"],
            GridKind::NdtBev => &["pds_p", "en_p", "pds_it", "en_it"],
            GridKind::StdBev => &["max_height", "occupancy"],
        }
    }

    pub fn from_channel_names(names: &[String]) -> Option<Self> {
        [GridKind::Riv, GridKind::NdtBev, GridKind::StdBev]
            .into_iter()
            .find(|k| k.channel_names().iter().copied().eq(names.iter().map(String::as_str)))
    }
}

/// `C x H x W` values (channel-major, row-major within a channel) plus a
/// per-pixel validity mask. Invalid pixels hold zero in every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    kind: GridKind,
    height: usize,
    width: usize,
    data: Vec<f64>,
    mask: Vec<bool>,
}

impl FeatureGrid {
    pub fn zeros(kind: GridKind, height: usize, width: usize) -> Self {
        let channels = kind.channel_names().len();
        Self {
            kind,
            height,
            width,
            data: vec![0.0; channels * height * width],
            mask: vec![false; height * width],
        }
    }

    /// Rebuilds a grid from raw values; validity is any nonzero channel.
    pub fn from_values(kind: GridKind, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        let channels = kind.channel_names().len();
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{} values for a {channels}x{height}x{width} grid",
                data.len()
            )));
        }
        let plane = height * width;
        let mask = (0..plane).map(|i| (0..channels).any(|c| data[c * plane + i] != 0.0)).collect();
        Ok(Self {
            kind,
            height,
            width,
            data,
            mask,
        })
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn channels(&self) -> usize {
        self.kind.channel_names().len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels(), self.height, self.width]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[(c * self.height + row) * self.width + col]
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub(crate) fn set_pixel(&mut self, row: usize, col: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), self.channels());
        let plane = self.height * self.width;
        let idx = row * self.width + col;
        for (c, &v) in values.iter().enumerate() {
            self.data[c * plane + idx] = v;
        }
        self.mask[idx] = true;
    }

    /// Cyclic column shift: output column `u` is input column `(u - k) mod W`.
    pub fn shift_azimuth(&self, k: i64) -> Self {
        let w = self.width;
        let k = k.rem_euclid(w.max(1) as i64) as usize;
        let mut out = self.clone();
        if k == 0 {
            return out;
        }
        for (src, dst) in self.data.chunks(w).zip(out.data.chunks_mut(w)) {
            dst[k..].copy_from_slice(&src[..w - k]);
            dst[..k].copy_from_slice(&src[w - k..]);
        }
        for (src, dst) in self.mask.chunks(w).zip(out.mask.chunks_mut(w)) {
            dst[k..].copy_from_slice(&src[..w - k]);
            dst[..k].copy_from_slice(&src[w - k..]);
        }
        out
    }
}

//! Polar bird's-eye-view encodings.
//!
//! The default encoding fits a Gaussian to the points in every
//! `(radial bin, azimuth bin)` cell and stores four channels:
//! geometric PDS, geometric entropy, intensity PDS, intensity entropy.
//! A plain max-height/occupancy encoding on the same grid is kept as a
//! baseline.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::grid::{azimuth_column, FeatureGrid, GridKind};
use crate::ndt::{fit_sorted, CellStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BevEncoding {
    #[default]
    Ndt,
    /// Two channels: normalized max height and occupancy.
    HeightOccupancy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BevConfig {
    /// Radial bins.
    pub height: usize,
    /// Azimuth bins; must match the range image width.
    pub width: usize,
    pub r_max: f64,
    /// Covariance regularizer, m².
    pub eps: f64,
    pub min_points: usize,
    pub encoding: BevEncoding,
    /// Height window for the max-height baseline channel.
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for BevConfig {
    fn default() -> Self {
        Self {
            height: 32,
            width: 1056,
            r_max: 80.0,
            eps: 1e-6,
            min_points: 2,
            encoding: BevEncoding::Ndt,
            z_min: -3.0,
            z_max: 5.0,
        }
    }
}

impl BevConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("BEV needs height >= 1 and width >= 1".into()));
        }
        if !(self.r_max > 0.0) || !(self.eps > 0.0) {
            return Err(Error::Config("BEV needs r_max > 0 and eps > 0".into()));
        }
        if self.min_points < 2 {
            return Err(Error::Config("BEV needs min_points >= 2".into()));
        }
        if !(self.z_max > self.z_min) {
            return Err(Error::Config("BEV needs z_max > z_min".into()));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.grid_kind().channel_names().len()
    }

    pub fn grid_kind(&self) -> GridKind {
        match self.encoding {
            BevEncoding::Ndt => GridKind::NdtBev,
            BevEncoding::HeightOccupancy => GridKind::StdBev,
        }
    }

    /// `(row, col)` of a point, or `None` at the origin or beyond `r_max`.
    /// Radial bins are half-open with the outer edge clamped into the last bin.
    pub fn cell_of(&self, p: &Point) -> Option<(usize, usize)> {
        let rho = p.planar_range();
        if !(rho > 0.0) || rho > self.r_max {
            return None;
        }
        let row = ((self.height as f64 * rho / self.r_max).floor() as usize).min(self.height - 1);
        Some((row, azimuth_column(p.x, p.y, self.width)))
    }
}

/// `C x H_b x W` polar BEV map.
#[derive(Debug, Clone, PartialEq)]
pub struct BevMap(FeatureGrid);

impl BevMap {
    pub fn from_grid(grid: FeatureGrid) -> Result<Self> {
        match grid.kind() {
            GridKind::NdtBev | GridKind::StdBev => Ok(Self(grid)),
            other => Err(Error::Shape(format!("expected a BEV map, got {other:?}"))),
        }
    }

    pub fn grid(&self) -> &FeatureGrid {
        &self.0
    }

    pub fn into_grid(self) -> FeatureGrid {
        self.0
    }

    pub fn shift_azimuth(&self, k: i64) -> Self {
        Self(self.0.shift_azimuth(k))
    }
}

/// Points of one occupied polar cell, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarCell {
    pub row: usize,
    pub col: usize,
    pub points: Vec<Point>,
}

/// Groups points by polar cell. Cells come back in `(row, col)` order.
pub fn assign_polar_cells(cloud: &PointCloud, cfg: &BevConfig) -> Result<Vec<PolarCell>> {
    cfg.validate()?;
    let mut keyed: Vec<(usize, Point)> = cloud
        .points
        .iter()
        .filter_map(|p| cfg.cell_of(p).map(|(r, c)| (r * cfg.width + c, *p)))
        .collect();
    keyed.sort_unstable_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.canonical_cmp(&b.1)));
    let mut cells: Vec<PolarCell> = Vec::new();
    for (key, p) in keyed {
        match cells.last_mut() {
            Some(cell) if cell.row * cfg.width + cell.col == key => cell.points.push(p),
            _ => cells.push(PolarCell {
                row: key / cfg.width,
                col: key % cfg.width,
                points: vec![p],
            }),
        }
    }
    Ok(cells)
}

/// Raw (pre-normalization) statistics for every valid cell.
pub fn bev_cell_stats(cloud: &PointCloud, cfg: &BevConfig) -> Result<Vec<(usize, usize, CellStats)>> {
    Ok(assign_polar_cells(cloud, cfg)?
        .into_iter()
        .filter(|c| c.points.len() >= cfg.min_points)
        .map(|c| (c.row, c.col, fit_sorted(&c.points, cfg.eps)))
        .collect())
}

/// Fixed entropy bounds mapping raw entropies into `[0, 1]`.
///
/// The lower bound is the entropy of the regularizer alone, the upper bound
/// that of an isotropic Gaussian with standard deviation `r_max / 2`
/// (`1/2` for intensity, whose values live in `[0, 1]`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyBounds {
    pub geometric: (f64, f64),
    pub intensity: (f64, f64),
}

impl EntropyBounds {
    pub fn new(cfg: &BevConfig) -> Self {
        let h = |d: f64, var: f64| 0.5 * (d * (2.0 * PI * E).ln() + d * var.ln());
        Self {
            geometric: (h(3.0, cfg.eps), h(3.0, cfg.r_max * cfg.r_max / 4.0)),
            intensity: (h(1.0, cfg.eps), h(1.0, 0.25)),
        }
    }

    fn scale((lo, hi): (f64, f64), v: f64) -> f64 {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    /// Normalized `[PDS_p, EN_p, PDS_it, EN_it]` for one cell.
    pub fn channels(&self, s: &CellStats) -> [f64; 4] {
        let n = s.count as f64;
        [
            s.pds_p / n,
            Self::scale(self.geometric, s.entropy_p),
            s.pds_it / n,
            Self::scale(self.intensity, s.entropy_it),
        ]
    }
}

/// Builds the BEV map selected by `cfg.encoding`.
pub fn build_bev(cloud: &PointCloud, cfg: &BevConfig) -> Result<BevMap> {
    match cfg.encoding {
        BevEncoding::Ndt => build_ndt_bev(cloud, cfg),
        BevEncoding::HeightOccupancy => build_height_occupancy_bev(cloud, cfg),
    }
}

fn build_ndt_bev(cloud: &PointCloud, cfg: &BevConfig) -> Result<BevMap> {
    let bounds = EntropyBounds::new(cfg);
    let mut grid = FeatureGrid::zeros(GridKind::NdtBev, cfg.height, cfg.width);
    for (row, col, stats) in bev_cell_stats(cloud, cfg)? {
        grid.set_pixel(row, col, &bounds.channels(&stats));
    }
    Ok(BevMap(grid))
}

fn build_height_occupancy_bev(cloud: &PointCloud, cfg: &BevConfig) -> Result<BevMap> {
    let mut grid = FeatureGrid::zeros(GridKind::StdBev, cfg.height, cfg.width);
    for cell in assign_polar_cells(cloud, cfg)? {
        let top = cell.points.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
        // occupancy keeps even fully-below-window cells valid
        let h = ((top - cfg.z_min) / (cfg.z_max - cfg.z_min)).clamp(0.0, 1.0);
        grid.set_pixel(cell.row, cell.col, &[h, 1.0]);
    }
    Ok(BevMap(grid))
}

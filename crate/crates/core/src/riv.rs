//! Dual-channel spherical range image: normalized range and intensity per
//! `(elevation row, azimuth column)` pixel, nearest return wins.

use serde::{Deserialize, Serialize};

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::grid::{azimuth_column, FeatureGrid, GridKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RivConfig {
    pub height: usize,
    pub width: usize,
    pub fov_up_deg: f64,
    pub fov_down_deg: f64,
    pub max_range: f64,
}

impl Default for RivConfig {
    fn default() -> Self {
        Self {
            height: 32,
            width: 1056,
            fov_up_deg: 10.0,
            fov_down_deg: -30.0,
            max_range: 80.0,
        }
    }
}

impl RivConfig {
    /// 64-row layout used for KITTI-style sensors.
    pub fn kitti() -> Self {
        Self {
            height: 64,
            fov_up_deg: 3.0,
            fov_down_deg: -25.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("range image needs height >= 1 and width >= 1".into()));
        }
        if !(self.fov_up_deg > self.fov_down_deg) {
            return Err(Error::Config("range image needs fov_up > fov_down".into()));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::Config("range image needs max_range > 0".into()));
        }
        Ok(())
    }

    /// Pixel of a point, or `None` when it is at the origin, beyond
    /// `max_range`, or outside the vertical field of view.
    pub fn pixel_of(&self, p: &Point) -> Option<(usize, usize, f64)> {
        let r = p.range();
        if !(r > 0.0) || r > self.max_range {
            return None;
        }
        let elev_deg = (p.z / r).clamp(-1.0, 1.0).asin().to_degrees();
        let v = (self.height as f64 * (self.fov_up_deg - elev_deg) / (self.fov_up_deg - self.fov_down_deg)).floor();
        if v < 0.0 || v >= self.height as f64 {
            return None;
        }
        Some((v as usize, azimuth_column(p.x, p.y, self.width), r))
    }
}

/// `2 x H x W` range image.
#[derive(Debug, Clone, PartialEq)]
pub struct RivImage(FeatureGrid);

impl RivImage {
    pub fn from_grid(grid: FeatureGrid) -> Result<Self> {
        if grid.kind() != GridKind::Riv {
            return Err(Error::Shape(format!("expected a range image, got {:?}", grid.kind())));
        }
        Ok(Self(grid))
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

/// Projects a cloud with depth priority: among points landing in the same
/// pixel the one with the lexicographically smallest `(range, x, y, z)`
/// is kept, which makes the result independent of input order.
pub fn project_riv(cloud: &PointCloud, cfg: &RivConfig) -> Result<RivImage> {
    cfg.validate()?;
    let mut best: Vec<Option<(f64, Point)>> = vec![None; cfg.height * cfg.width];
    for p in &cloud.points {
        let Some((v, u, r)) = cfg.pixel_of(p) else { continue };
        let slot = &mut best[v * cfg.width + u];
        let wins = match slot {
            None => true,
            Some((br, bp)) => r
                .total_cmp(br)
                .then(p.x.total_cmp(&bp.x))
                .then(p.y.total_cmp(&bp.y))
                .then(p.z.total_cmp(&bp.z))
                .is_lt(),
        };
        if wins {
            *slot = Some((r, *p));
        }
    }
    let mut grid = FeatureGrid::zeros(GridKind::Riv, cfg.height, cfg.width);
    for (idx, slot) in best.iter().enumerate() {
        if let Some((r, p)) = slot {
            grid.set_pixel(idx / cfg.width, idx % cfg.width, &[r / cfg.max_range, p.intensity]);
        }
    }
    Ok(RivImage(grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_point_lands_in_row_eight_center_column() {
        let cloud = PointCloud::new("", vec![Point::new(10.0, 0.0, 0.0, 0.7)]);
        let img = project_riv(&cloud, &RivConfig::default()).unwrap();
        let g = img.grid();
        assert_eq!(g.valid_count(), 1);
        assert!(g.is_valid(8, 528));
        assert_eq!(g.get(0, 8, 528), 0.125);
        assert_eq!(g.get(1, 8, 528), 0.7);
    }

    #[test]
    fn nearer_point_wins() {
        let cloud = PointCloud::new(
            "",
            vec![Point::new(20.0, 0.0, 0.0, 0.2), Point::new(5.0, 0.0, 0.0, 0.9)],
        );
        let img = project_riv(&cloud, &RivConfig::default()).unwrap();
        assert_eq!(img.grid().get(0, 8, 528), 0.0625);
        assert_eq!(img.grid().get(1, 8, 528), 0.9);
    }

    #[test]
    fn empty_cloud_gives_empty_image() {
        let img = project_riv(&PointCloud::default(), &RivConfig::default()).unwrap();
        assert_eq!(img.grid().valid_count(), 0);
        assert!(img.grid().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_range_and_fov_are_dropped() {
        let cfg = RivConfig::default();
        let cloud = PointCloud::new(
            "",
            vec![
                Point::new(0.0, 0.0, 0.0, 1.0),
                Point::new(81.0, 0.0, 0.0, 1.0),
                Point::new(1.0, 0.0, 1.0, 1.0), // +45 deg, above fov
                Point::new(1.0, 0.0, -1.0, 1.0), // -45 deg, below fov
            ],
        );
        assert_eq!(project_riv(&cloud, &cfg).unwrap().grid().valid_count(), 0);
        // exactly max_range is kept
        let edge = PointCloud::new("", vec![Point::new(80.0, 0.0, 0.0, 1.0)]);
        assert_eq!(project_riv(&edge, &cfg).unwrap().grid().get(0, 8, 528), 1.0);
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = RivConfig { fov_up_deg: -30.0, fov_down_deg: 10.0, ..RivConfig::default() };
        assert!(project_riv(&PointCloud::default(), &bad).is_err());
    }
}

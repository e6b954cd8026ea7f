//! Synthetic revisit datasets.
//!
//! First visits sit on the east-west roads of a [`synth_world`] every
//! `frame_spacing` meters, row by row in snake order, so no two first
//! visits are within 9 m. Frame `i` is a revisit when
//! `floor((i + 1) r) > floor(i r)` for revisit fraction `r`; a revisit
//! re-observes a random earlier first visit from a point up to
//! `revisit_along` meters along the road and `revisit_lateral` meters
//! across it, with a uniformly random heading.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::{render_scan, synth_world, write_kitti_bin, FrameMeta, Point, PointCloud, ScanPattern, ROAD_SPACING};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, ManifestEntry, Split};
use crate::seed::{config_hash, rng, Stream};

/// How frames are tagged in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Every frame is `train`.
    #[default]
    Train,
    /// First visits are `database`, revisits are `query`.
    Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Seeds the trajectory, revisit choices and sensor noise.
    pub seed: u64,
    /// Seeds the world; defaults to `seed`. Datasets sharing a world seed
    /// and extent observe the same scene.
    pub world_seed: Option<u64>,
    /// Side of the square world, meters; defaults to the trajectory span
    /// plus twice `margin`.
    pub world_extent: Option<f64>,
    /// Shift of every pose, `[east, north]` meters. Keep `north` a multiple
    /// of the road spacing so frames stay on roads.
    pub offset: [f64; 2],
    pub n_frames: usize,
    pub revisit_fraction: f64,
    pub split_mode: SplitMode,
    /// Primitives per 100 m² of world.
    pub density: f64,
    pub frame_spacing: f64,
    pub revisit_along: f64,
    pub revisit_lateral: f64,
    /// Standard deviation of the per-point range perturbation, meters.
    pub range_noise: f64,
    pub intensity_noise: f64,
    /// Empty margin around the trajectory, meters.
    pub margin: f64,
    pub scan: ScanPattern,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            world_seed: None,
            world_extent: None,
            offset: [0.0, 0.0],
            n_frames: 200,
            revisit_fraction: 0.3,
            split_mode: SplitMode::Train,
            density: 1.5,
            frame_spacing: 10.0,
            revisit_along: 4.0,
            revisit_lateral: 1.0,
            range_noise: 0.02,
            intensity_noise: 0.02,
            margin: 60.0,
            scan: ScanPattern::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.revisit_fraction) {
            return Err(Error::Config(format!(
                "revisit_fraction {} must be in [0, 1)",
                self.revisit_fraction
            )));
        }
        if !(self.frame_spacing > 0.0) || self.revisit_along < 0.0 || self.revisit_lateral < 0.0 {
            return Err(Error::Config("frame_spacing must be positive and offsets non-negative".into()));
        }
        if self.world_extent.is_some_and(|e| !(e > 0.0)) || self.offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("world_extent must be positive and offset finite".into()));
        }
        if self.range_noise < 0.0 || self.intensity_noise < 0.0 || self.density < 0.0 || self.margin < 0.0 {
            return Err(Error::Config("noise, density and margin must be non-negative".into()));
        }
        self.scan.validate()
    }
}

/// A planned frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedFrame {
    pub meta: FrameMeta,
    /// Index of the first visit this frame re-observes.
    pub revisit_of: Option<usize>,
}

pub fn is_revisit_slot(i: usize, fraction: f64) -> bool {
    ((i + 1) as f64 * fraction).floor() > (i as f64 * fraction).floor()
}

/// Poses of the trajectory and the side length of the square it spans.
pub fn plan_trajectory(cfg: &SynthConfig) -> Result<(Vec<PlannedFrame>, f64)> {
    cfg.validate()?;
    let n_first = (0..cfg.n_frames).filter(|&i| !is_revisit_slot(i, cfg.revisit_fraction)).count();
    // Columns every frame_spacing along a row, rows every road spacing.
    let rows = ((n_first as f64 * cfg.frame_spacing / ROAD_SPACING).sqrt().ceil() as usize).max(1);
    let cols = n_first.div_ceil(rows).max(1);
    let span = ((cols - 1) as f64 * cfg.frame_spacing).max((rows - 1) as f64 * ROAD_SPACING);
    let x0 = cfg.offset[0] - 0.5 * (cols - 1) as f64 * cfg.frame_spacing;
    let y0 = cfg.offset[1] - ROAD_SPACING * ((rows - 1) / 2) as f64;

    let mut r = rng(cfg.seed, Stream::Trajectory, 0);
    let mut frames: Vec<PlannedFrame> = Vec::with_capacity(cfg.n_frames);
    let mut firsts: Vec<usize> = Vec::new();
    for i in 0..cfg.n_frames {
        let id = format!("{i:06}");
        if is_revisit_slot(i, cfg.revisit_fraction) && !firsts.is_empty() {
            let orig = firsts[r.random_range(0..firsts.len())];
            let o = &frames[orig].meta;
            let along = r.random_range(-cfg.revisit_along..=cfg.revisit_along);
            let lateral = r.random_range(-cfg.revisit_lateral..=cfg.revisit_lateral);
            let yaw = r.random_range(0.0..TAU);
            frames.push(PlannedFrame {
                meta: FrameMeta::new(id, o.east + along, o.north + lateral, Some(yaw)),
                revisit_of: Some(orig),
            });
        } else {
            let k = firsts.len();
            let (row, c) = (k / cols, k % cols);
            let col = if row % 2 == 0 { c } else { cols - 1 - c };
            let yaw = if row % 2 == 0 { 0.0 } else { PI };
            frames.push(PlannedFrame {
                meta: FrameMeta::new(
                    id,
                    x0 + col as f64 * cfg.frame_spacing,
                    y0 + row as f64 * ROAD_SPACING,
                    Some(yaw),
                ),
                revisit_of: None,
            });
            firsts.push(i);
        }
    }
    Ok((frames, span))
}

/// Adds Gaussian range jitter along each point's ray and intensity noise
/// clipped to `[0, 1]`.
pub fn perturb<R: Rng>(cloud: &PointCloud, range_sigma: f64, intensity_sigma: f64, r: &mut R) -> PointCloud {
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let points = cloud
        .points
        .iter()
        .map(|p| {
            let range = p.range();
            let scale = if range > 0.0 { (range + range_sigma * unit.sample(r)).max(0.0) / range } else { 1.0 };
            let intensity = (p.intensity + intensity_sigma * unit.sample(r)).clamp(0.0, 1.0);
            Point::new(p.x * scale, p.y * scale, p.z * scale, intensity)
        })
        .collect();
    PointCloud::new(cloud.frame_id.clone(), points)
}

/// Renders every planned frame in memory.
pub fn render_dataset(cfg: &SynthConfig) -> Result<Vec<(PlannedFrame, PointCloud)>> {
    let (frames, span) = plan_trajectory(cfg)?;
    let world = synth_world(
        cfg.world_seed.unwrap_or(cfg.seed),
        cfg.world_extent.unwrap_or(span + 2.0 * cfg.margin),
        cfg.density,
    )?;
    frames
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let clean = render_scan(&world, &f.meta, &cfg.scan)?;
            let mut r = rng(cfg.seed, Stream::Noise, i as u64);
            let mut cloud = perturb(&clean, cfg.range_noise, cfg.intensity_noise, &mut r);
            cloud.frame_id = f.meta.frame_id.clone();
            Ok((f, cloud))
        })
        .collect()
}

/// Writes `scans/<frame_id>.bin` files and `manifest.tsv` under `out_dir`.
pub fn write_dataset(cfg: &SynthConfig, out_dir: &Path) -> Result<Manifest> {
    let scans = out_dir.join("scans");
    fs::create_dir_all(&scans).map_err(|e| Error::io(&scans, e))?;
    let mut entries = Vec::new();
    for (f, cloud) in render_dataset(cfg)? {
        let rel = Path::new("scans").join(format!("{}.bin", f.meta.frame_id));
        write_kitti_bin(out_dir.join(&rel), &cloud)?;
        let split = match (cfg.split_mode, f.revisit_of) {
            (SplitMode::Train, _) => Split::Train,
            (SplitMode::Evaluation, None) => Split::Database,
            (SplitMode::Evaluation, Some(_)) => Split::Query,
        };
        entries.push(ManifestEntry { meta: f.meta, path: rel, split });
    }
    let manifest = Manifest::new(entries, out_dir)?;
    manifest.write(out_dir.join("manifest.tsv"), config_hash(cfg))?;
    Ok(manifest)
}

/// Number of frames with an earlier frame within `radius` meters.
pub fn count_revisits(frames: &[FrameMeta], radius: f64) -> usize {
    (0..frames.len())
        .filter(|&i| frames[..i].iter().any(|f| f.distance_to(&frames[i]) <= radius))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metas(cfg: &SynthConfig) -> Vec<FrameMeta> {
        plan_trajectory(cfg).unwrap().0.into_iter().map(|f| f.meta).collect()
    }

    #[test]
    fn revisit_counts() {
        let cfg = SynthConfig::default();
        assert!(count_revisits(&metas(&cfg), 9.0) >= 55);
        let none = SynthConfig { revisit_fraction: 0.0, ..cfg };
        assert_eq!(count_revisits(&metas(&none), 9.0), 0);
    }

    #[test]
    fn evaluation_split_sizes() {
        let cfg = SynthConfig { n_frames: 150, revisit_fraction: 1.0 / 3.0, ..Default::default() };
        let (frames, _) = plan_trajectory(&cfg).unwrap();
        let revisits = frames.iter().filter(|f| f.revisit_of.is_some()).count();
        assert_eq!(revisits, 50);
        for f in frames.iter().filter(|f| f.revisit_of.is_some()) {
            let o = &frames[f.revisit_of.unwrap()].meta;
            assert!(o.distance_to(&f.meta) <= 9.0);
        }
    }

    #[test]
    fn perturb_keeps_direction() {
        let c = PointCloud::new("a", vec![Point::new(3.0, 4.0, 0.0, 0.5)]);
        let mut r = rng(0, Stream::Noise, 0);
        let p = &perturb(&c, 0.02, 0.02, &mut r).points[0];
        assert!((p.y / p.x - 4.0 / 3.0).abs() < 1e-12);
        assert!((p.range() - 5.0).abs() < 0.2);
    }

    #[test]
    fn deterministic_small_render() {
        let cfg = SynthConfig {
            n_frames: 3,
            revisit_fraction: 0.4,
            scan: ScanPattern { beams: 4, azimuth_steps: 64, ..Default::default() },
            ..Default::default()
        };
        let a = render_dataset(&cfg).unwrap();
        let b = render_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|(_, c)| !c.is_empty()));
    }
}

//! Point clouds: the KITTI binary scan layout, yaw rotation, and a
//! deterministic synthetic world with a spinning-LiDAR ray caster.
//!
//! All synthetic geometry lives in a shared map frame (east, north, up).
//! Rendered scans are expressed in the sensor frame: x forward along the
//! sensor heading, z up, origin at the sensor.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One LiDAR return.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Normalized reflectance in `[0, 1]`.
    pub intensity: f64,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity }
    }

    /// Euclidean distance to the sensor origin.
    pub fn range(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Distance to the sensor origin in the horizontal plane.
    pub fn planar_range(&self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    /// Lexicographic `(x, y, z, intensity)` ordering used wherever a
    /// canonical, input-order-independent point order is needed.
    pub fn canonical_cmp(&self, other: &Point) -> std::cmp::Ordering {
        self.x
            .total_cmp(&other.x)
            .then(self.y.total_cmp(&other.y))
            .then(self.z.total_cmp(&other.z))
            .then(self.intensity.total_cmp(&other.intensity))
    }
}

/// A single sensor frame. Point order carries no meaning.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub frame_id: String,
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(frame_id: impl Into<String>, points: Vec<Point>) -> Self {
        Self {
            frame_id: frame_id.into(),
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Capture location of a frame in the shared map frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub frame_id: String,
    pub east: f64,
    pub north: f64,
    pub yaw: Option<f64>,
}

impl FrameMeta {
    pub fn new(frame_id: impl Into<String>, east: f64, north: f64, yaw: Option<f64>) -> Self {
        Self {
            frame_id: frame_id.into(),
            east,
            north,
            yaw,
        }
    }

    /// Planar distance between two capture locations, in meters.
    pub fn distance_to(&self, other: &FrameMeta) -> f64 {
        (self.east - other.east).hypot(self.north - other.north)
    }
}

/// How raw intensities in a scan file map onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityScale {
    /// Already normalized (KITTI).
    #[default]
    Unit,
    /// 0-255 integer reflectance stored as float.
    Byte,
}

impl IntensityScale {
    fn divisor(self) -> f64 {
        match self {
            IntensityScale::Unit => 1.0,
            IntensityScale::Byte => 255.0,
        }
    }
}

/// Loads a KITTI `.bin` scan: consecutive little-endian `f32` records of
/// `(x, y, z, intensity)`. Intensities are clamped into `[0, 1]`.
pub fn load_kitti_bin(path: impl AsRef<Path>) -> Result<PointCloud> {
    load_kitti_bin_scaled(path, IntensityScale::Unit)
}

pub fn load_kitti_bin_scaled(path: impl AsRef<Path>, scale: IntensityScale) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let frame_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut cloud = decode_kitti(&bytes, scale).map_err(|len| Error::MalformedScan {
        path: path.to_path_buf(),
        len,
    })?;
    cloud.frame_id = frame_id;
    if let Some(bad) = cloud
        .points
        .iter()
        .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
    {
        return Err(Error::Format(format!(
            "{}: record {bad} has non-finite coordinates",
            path.display()
        )));
    }
    Ok(cloud)
}

/// Decodes the in-memory KITTI layout. The error carries the byte count.
pub fn decode_kitti(bytes: &[u8], scale: IntensityScale) -> std::result::Result<PointCloud, u64> {
    if bytes.len() % 16 != 0 {
        return Err(bytes.len() as u64);
    }
    let div = scale.divisor();
    let points = bytes
        .chunks_exact(16)
        .map(|rec| {
            let f = |i: usize| f32::from_le_bytes(rec[i * 4..i * 4 + 4].try_into().unwrap()) as f64;
            let intensity = (f(3) / div).clamp(0.0, 1.0);
            Point::new(f(0), f(1), f(2), if intensity.is_nan() { 0.0 } else { intensity })
        })
        .collect();
    Ok(PointCloud::new("", points))
}

pub fn encode_kitti(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * 16);
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_kitti_bin(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_kitti(cloud)).map_err(|e| Error::io(path, e))
}

/// `sin`/`cos` with values that are zero to within rounding snapped to
/// exactly zero, so quarter turns map coordinates onto each other exactly.
fn exact_sin_cos(theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    let snap = |v: f64| {
        if v.abs() < 1e-15 {
            0.0
        } else if (v.abs() - 1.0).abs() < 1e-15 {
            v.signum()
        } else {
            v
        }
    };
    (snap(s), snap(c))
}

/// Rotates every point about the sensor z axis by `theta` radians
/// (counter-clockwise seen from above). Intensity is unchanged.
pub fn apply_yaw(cloud: &PointCloud, theta: f64) -> PointCloud {
    let (s, c) = exact_sin_cos(theta);
    let points = cloud
        .points
        .iter()
        .map(|p| Point::new(p.x * c - p.y * s, p.x * s + p.y * c, p.z, p.intensity))
        .collect();
    PointCloud::new(cloud.frame_id.clone(), points)
}

/// Geometry the synthetic world is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// The infinite plane `z = 0`.
    Ground { reflectance: f64 },
    /// Axis-aligned box.
    Block {
        min: [f64; 3],
        max: [f64; 3],
        reflectance: f64,
    },
    /// Vertical cylinder standing on the ground.
    Pole {
        center: [f64; 2],
        radius: f64,
        height: f64,
        reflectance: f64,
    },
    /// Vertical rectangle above the segment `a -> b`.
    Wall {
        a: [f64; 2],
        b: [f64; 2],
        height: f64,
        reflectance: f64,
    },
}

impl Primitive {
    pub fn reflectance(&self) -> f64 {
        match *self {
            Primitive::Ground { reflectance }
            | Primitive::Block { reflectance, .. }
            | Primitive::Pole { reflectance, .. }
            | Primitive::Wall { reflectance, .. } => reflectance,
        }
    }

    /// Planar bounding circle `(cx, cy, radius)`; `None` for unbounded.
    fn bounding_circle(&self) -> Option<(f64, f64, f64)> {
        match *self {
            Primitive::Ground { .. } => None,
            Primitive::Block { min, max, .. } => {
                let (cx, cy) = ((min[0] + max[0]) * 0.5, (min[1] + max[1]) * 0.5);
                Some((cx, cy, (max[0] - cx).hypot(max[1] - cy)))
            }
            Primitive::Pole { center, radius, .. } => Some((center[0], center[1], radius)),
            Primitive::Wall { a, b, .. } => {
                let (cx, cy) = ((a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5);
                Some((cx, cy, (a[0] - cx).hypot(a[1] - cy)))
            }
        }
    }

    /// Smallest ray parameter `t > T_MIN` at which `origin + t * dir` hits.
    fn intersect(&self, origin: [f64; 3], dir: [f64; 3]) -> Option<f64> {
        const T_MIN: f64 = 1e-9;
        match *self {
            Primitive::Ground { .. } => {
                if dir[2] >= 0.0 {
                    return None;
                }
                let t = -origin[2] / dir[2];
                (t > T_MIN).then_some(t)
            }
            Primitive::Block { min, max, .. } => {
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                for i in 0..3 {
                    if dir[i].abs() < 1e-300 {
                        if origin[i] < min[i] || origin[i] > max[i] {
                            return None;
                        }
                    } else {
                        let inv = 1.0 / dir[i];
                        let (mut a, mut b) = ((min[i] - origin[i]) * inv, (max[i] - origin[i]) * inv);
                        if a > b {
                            std::mem::swap(&mut a, &mut b);
                        }
                        t0 = t0.max(a);
                        t1 = t1.min(b);
                    }
                }
                if t0 > t1 {
                    None
                } else if t0 > T_MIN {
                    Some(t0)
                } else if t1 > T_MIN {
                    Some(t1)
                } else {
                    None
                }
            }
            Primitive::Pole {
                center,
                radius,
                height,
                ..
            } => {
                let (ox, oy) = (origin[0] - center[0], origin[1] - center[1]);
                let a = dir[0] * dir[0] + dir[1] * dir[1];
                if a < 1e-300 {
                    return None;
                }
                let b = 2.0 * (ox * dir[0] + oy * dir[1]);
                let c = ox * ox + oy * oy - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)]
                    .into_iter()
                    .filter(|&t| t > T_MIN)
                    .find(|&t| {
                        let z = origin[2] + t * dir[2];
                        (0.0..=height).contains(&z)
                    })
            }
            Primitive::Wall { a, b, height, .. } => {
                // Solve origin + t*dir = a + s*(b-a) in the plane.
                let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
                let det = dir[0] * (-ey) - dir[1] * (-ex);
                if det.abs() < 1e-300 {
                    return None;
                }
                let (rx, ry) = (a[0] - origin[0], a[1] - origin[1]);
                let t = (rx * (-ey) - ry * (-ex)) / det;
                let s = (dir[0] * ry - dir[1] * rx) / det;
                if t <= T_MIN || !(0.0..=1.0).contains(&s) {
                    return None;
                }
                let z = origin[2] + t * dir[2];
                (0.0..=height).contains(&z).then_some(t)
            }
        }
    }
}

/// A deterministic static scene. Roads run along the lines `x = k * road_spacing`
/// and `y = k * road_spacing`; every primitive other than the ground keeps
/// clear of them so sensors placed on a road are never inside geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub seed: u64,
    pub extent: f64,
    pub road_spacing: f64,
    pub road_clearance: f64,
    pub primitives: Vec<Primitive>,
}

impl SyntheticWorld {
    /// Distance from a planar point to the nearest road centerline.
    pub fn road_distance(&self, x: f64, y: f64) -> f64 {
        let d = |v: f64| {
            let r = v.rem_euclid(self.road_spacing);
            r.min(self.road_spacing - r)
        };
        d(x).min(d(y))
    }
}

pub const ROAD_SPACING: f64 = 20.0;
const ROAD_CLEARANCE: f64 = 3.0;

/// Generates a world covering `[-extent/2, extent/2]^2` with about
/// `density` primitives per 100 m² off the roads, plus the ground plane.
pub fn synth_world(seed: u64, extent: f64, density: f64) -> Result<SyntheticWorld> {
    if !(extent > 0.0) {
        return Err(Error::Config(format!("world extent must be positive, got {extent}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = SyntheticWorld {
        seed,
        extent,
        road_spacing: ROAD_SPACING,
        road_clearance: ROAD_CLEARANCE,
        primitives: vec![Primitive::Ground { reflectance: 0.15 }],
    };
    let target = (density.max(0.0) * extent * extent / 100.0).round() as usize;
    let half = extent * 0.5;
    let mut placed = 0;
    let mut attempts = 0;
    while placed < target && attempts < target * 50 {
        attempts += 1;
        let cx = rng.random_range(-half..half);
        let cy = rng.random_range(-half..half);
        let reflectance = rng.random_range(0.05..1.0);
        let kind: f64 = rng.random();
        let prim = if kind < 0.4 {
            let sx = rng.random_range(0.5..3.0);
            let sy = rng.random_range(0.5..3.0);
            let h = rng.random_range(0.8..8.0);
            Primitive::Block {
                min: [cx - sx, cy - sy, 0.0],
                max: [cx + sx, cy + sy, h],
                reflectance,
            }
        } else if kind < 0.65 {
            Primitive::Pole {
                center: [cx, cy],
                radius: rng.random_range(0.1..0.4),
                height: rng.random_range(3.0..8.0),
                reflectance,
            }
        } else {
            let len = rng.random_range(2.0..10.0);
            let ang = rng.random_range(0.0..TAU);
            let (dx, dy) = (0.5 * len * ang.cos(), 0.5 * len * ang.sin());
            Primitive::Wall {
                a: [cx - dx, cy - dy],
                b: [cx + dx, cy + dy],
                height: rng.random_range(1.5..5.0),
                reflectance,
            }
        };
        let (bx, by, br) = prim.bounding_circle().expect("bounded primitive");
        if clears_roads(&world, bx, by, br) {
            world.primitives.push(prim);
            placed += 1;
        }
    }
    Ok(world)
}

fn clears_roads(world: &SyntheticWorld, cx: f64, cy: f64, radius: f64) -> bool {
    world.road_distance(cx, cy) > radius + world.road_clearance
}

/// Spinning-LiDAR sampling pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPattern {
    pub beams: usize,
    pub azimuth_steps: usize,
    pub max_range: f64,
    pub fov_up_deg: f64,
    pub fov_down_deg: f64,
    /// Sensor height above the ground plane, meters.
    pub sensor_height: f64,
}

impl Default for ScanPattern {
    fn default() -> Self {
        Self {
            beams: 32,
            azimuth_steps: 1056,
            max_range: 80.0,
            fov_up_deg: 10.0,
            fov_down_deg: -30.0,
            sensor_height: 1.8,
        }
    }
}

impl ScanPattern {
    pub fn validate(&self) -> Result<()> {
        if self.beams == 0 || self.azimuth_steps == 0 || !(self.max_range > 0.0) {
            return Err(Error::Config(
                "scan pattern needs beams >= 1, azimuth_steps >= 1 and max_range > 0".into(),
            ));
        }
        if !(self.fov_up_deg >= self.fov_down_deg) {
            return Err(Error::Config("scan pattern fov_up must be >= fov_down".into()));
        }
        Ok(())
    }

    /// Elevation of beam `b` in radians; beams sit at the centers of equal
    /// slices of the vertical field of view, top first.
    pub fn beam_elevation(&self, b: usize) -> f64 {
        let span = self.fov_up_deg - self.fov_down_deg;
        (self.fov_up_deg - (b as f64 + 0.5) * span / self.beams as f64).to_radians()
    }

    /// Sensor-frame azimuth of step `a`, in radians.
    pub fn step_azimuth(&self, a: usize) -> f64 {
        TAU * a as f64 / self.azimuth_steps as f64
    }
}

/// Ray-casts one scan from `pose`. Each `(beam, azimuth step)` ray emits the
/// nearest hit within `max_range`; ties go to the earlier primitive.
pub fn render_scan(world: &SyntheticWorld, pose: &FrameMeta, pattern: &ScanPattern) -> Result<PointCloud> {
    pattern.validate()?;
    let yaw = pose.yaw.unwrap_or(0.0);
    let origin = [pose.east, pose.north, pattern.sensor_height];
    let steps = pattern.azimuth_steps;

    // Bucket bounded primitives by the azimuth steps their bounding circle spans.
    let mut unbounded = Vec::new();
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); steps];
    for (idx, prim) in world.primitives.iter().enumerate() {
        let Some((cx, cy, r)) = prim.bounding_circle() else {
            unbounded.push(idx);
            continue;
        };
        let (dx, dy) = (cx - origin[0], cy - origin[1]);
        let dist = dx.hypot(dy);
        if dist - r > pattern.max_range {
            continue;
        }
        if dist <= r * 1.0001 + 1e-9 {
            for b in buckets.iter_mut() {
                b.push(idx);
            }
            continue;
        }
        // Sensor-frame azimuth interval covered by the circle.
        let center = dy.atan2(dx) - yaw;
        let half = (r / dist).asin();
        let step = TAU / steps as f64;
        let lo = ((center - half) / step).floor() as i64 - 1;
        let hi = ((center + half) / step).ceil() as i64 + 1;
        let count = ((hi - lo + 1) as usize).min(steps);
        for off in 0..count as i64 {
            buckets[(lo + off).rem_euclid(steps as i64) as usize].push(idx);
        }
    }
    for b in buckets.iter_mut() {
        b.sort_unstable();
        b.dedup();
    }

    let (sy, cy) = yaw.sin_cos();
    let mut points = Vec::new();
    for beam in 0..pattern.beams {
        let elev = pattern.beam_elevation(beam);
        let (se, ce) = elev.sin_cos();
        for (step, bucket) in buckets.iter().enumerate() {
            let (sa, ca) = pattern.step_azimuth(step).sin_cos();
            // Sensor-frame direction, then rotated into the map frame.
            let local = [ce * ca, ce * sa, se];
            let dir = [local[0] * cy - local[1] * sy, local[0] * sy + local[1] * cy, local[2]];
            let mut best: Option<(f64, usize)> = None;
            for &idx in unbounded.iter().chain(bucket.iter()) {
                if let Some(t) = world.primitives[idx].intersect(origin, dir) {
                    let better = match best {
                        None => true,
                        Some((bt, bi)) => t < bt || (t == bt && idx < bi),
                    };
                    if better {
                        best = Some((t, idx));
                    }
                }
            }
            if let Some((t, idx)) = best {
                if t <= pattern.max_range {
                    points.push(Point::new(
                        t * local[0],
                        t * local[1],
                        t * local[2],
                        world.primitives[idx].reflectance(),
                    ));
                }
            }
        }
    }
    Ok(PointCloud::new(pose.frame_id.clone(), points))
}

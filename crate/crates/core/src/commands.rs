//! The command-line verbs as library functions.
//!
//! Every command is deterministic given its configuration, seed and inputs,
//! and stamps a configuration hash into each file it writes.
//!
//! Output layout under a run's `output_dir`:
//!
//! ```text
//! checkpoint.bin     train: network weights
//! loss.csv           train: per-epoch loss log
//! config.toml        train, eval: the resolved run configuration
//! eval.json          eval: EvalReport
//! pr.csv             eval: precision/recall sweep
//! descriptors.txt    eval: database and query descriptors
//! invariance.csv     invariance: drift per rotation and bin shift
//! gradcheck.csv      gradcheck: relative error per primitive and parameter
//! bench.json         bench: latency statistics per stage
//! ```
//!
//! Encoded grids live in their own directory as `<frame_id>.riv.grid` and
//! `<frame_id>.bev.grid`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::cloud::{apply_yaw, load_kitti_bin, Point, PointCloud};
use crate::config::RunConfig;
use crate::dataset::{render_dataset, write_dataset, SynthConfig};
use crate::engine::gradcheck::check_primitives;
use crate::error::{Error, Result};
use crate::grid::FeatureGrid;
use crate::index::{descriptors_text, evaluate, pr_csv, DescriptorIndex, EvalReport, IndexEntry};
use crate::manifest::{Manifest, ManifestEntry, Split};
use crate::net::{
    check_network_gradients, descriptor_distance, grid_tensor, load_checkpoint, save_checkpoint, Descriptor,
    FusionNet, NetConfig,
};
use crate::pipeline::{encode_views, index_entry, par_map};
use crate::seed::{config_hash, rng, Stream};
use crate::tensor_file::{read_grid, write_grid};
use crate::train::{loss_log_csv, train, EpochLog, TrainSample};

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Renders a synthetic dataset into `out_dir` (`scans/` plus `manifest.tsv`).
pub fn cmd_synth(synth: &SynthConfig, out_dir: &Path) -> Result<Manifest> {
    synth.validate()?;
    write_dataset(synth, out_dir)
}

pub fn grid_paths(grid_dir: &Path, frame_id: &str) -> (PathBuf, PathBuf) {
    (
        grid_dir.join(format!("{frame_id}.riv.grid")),
        grid_dir.join(format!("{frame_id}.bev.grid")),
    )
}

fn load_scan(manifest: &Manifest, e: &ManifestEntry) -> Result<PointCloud> {
    load_kitti_bin(manifest.scan_path(e))
        .map_err(|err| Error::Dataset(format!("frame {}: {err}", e.meta.frame_id)))
}

/// Encodes every manifest frame into `grid_dir`. Returns the frame count.
///
/// Fails before writing anything if an existing grid was produced with a
/// different encoder configuration.
pub fn cmd_encode(manifest: &Manifest, cfg: &RunConfig, grid_dir: &Path) -> Result<usize> {
    if manifest.entries.is_empty() {
        return Err(Error::Empty("manifest"));
    }
    let hash = cfg.encoding_hash();
    for e in &manifest.entries {
        let (riv, bev) = grid_paths(grid_dir, &e.meta.frame_id);
        for path in [riv, bev].iter().filter(|p| p.exists()) {
            let (_, stamped) = read_grid(path)?;
            if stamped != hash {
                return Err(Error::Config(format!(
                    "{} was encoded with configuration {stamped:016x}, current is {hash:016x}",
                    path.display()
                )));
            }
        }
    }
    fs::create_dir_all(grid_dir).map_err(|e| Error::io(grid_dir, e))?;
    par_map(&manifest.entries, |e| {
        let cloud = load_scan(manifest, e)?;
        let (riv, bev) = encode_views(&cloud, cfg)?;
        let (riv_path, bev_path) = grid_paths(grid_dir, &e.meta.frame_id);
        write_grid(&riv_path, riv.grid(), hash)?;
        write_grid(&bev_path, bev.grid(), hash)
    })?;
    Ok(manifest.entries.len())
}

fn read_checked(path: &Path, frame_id: &str, cfg: &RunConfig, channels: usize, height: usize) -> Result<FeatureGrid> {
    if !path.exists() {
        return Err(Error::Dataset(format!(
            "frame {frame_id}: no encoded grid at {}; run encode first",
            path.display()
        )));
    }
    let (grid, stamped) = read_grid(path)?;
    let hash = cfg.encoding_hash();
    if stamped != hash {
        return Err(Error::Config(format!(
            "frame {frame_id}: grid encoded with configuration {stamped:016x}, current is {hash:016x}"
        )));
    }
    let expected = [channels, height, cfg.riv.width];
    if grid.shape() != expected {
        return Err(Error::Shape(format!("frame {frame_id}: grid {:?}, expected {expected:?}", grid.shape())));
    }
    Ok(grid)
}

/// Reads the encoded grids of every frame in `split`.
pub fn load_samples(manifest: &Manifest, split: Split, grid_dir: &Path, cfg: &RunConfig) -> Result<Vec<TrainSample>> {
    manifest
        .split(split)
        .map(|e| {
            let id = &e.meta.frame_id;
            let (riv_path, bev_path) = grid_paths(grid_dir, id);
            let riv = read_checked(&riv_path, id, cfg, 2, cfg.riv.height)?;
            let bev = read_checked(&bev_path, id, cfg, cfg.bev.channels(), cfg.bev.height)?;
            Ok(TrainSample {
                meta: e.meta.clone(),
                riv: grid_tensor(&riv),
                bev: grid_tensor(&bev),
            })
        })
        .collect()
}

/// Trains on the manifest's `train` frames and writes `checkpoint.bin`,
/// `loss.csv` and `config.toml` into `cfg.output_dir`.
pub fn cmd_train(
    manifest: &Manifest,
    grid_dir: &Path,
    cfg: &RunConfig,
    on_epoch: impl FnMut(&EpochLog, &FusionNet),
) -> Result<(FusionNet, Vec<EpochLog>)> {
    let samples = load_samples(manifest, Split::Train, grid_dir, cfg)?;
    if samples.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let mut net = FusionNet::new(cfg.net.clone())?;
    let logs = train(&mut net, &samples, &cfg.mining, &cfg.train, cfg.seed, on_epoch)?;
    let out = &cfg.output_dir;
    save_checkpoint_to(&out.join("checkpoint.bin"), &net)?;
    write_file(&out.join("loss.csv"), loss_log_csv(&logs, cfg.hash()))?;
    write_file(&out.join("config.toml"), config_text(cfg))?;
    Ok((net, logs))
}

fn save_checkpoint_to(path: &Path, net: &FusionNet) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_checkpoint(path, net.config(), net.weights())
}

fn config_text(cfg: &RunConfig) -> String {
    format!("# config_hash={:016x}\n{}", cfg.hash(), cfg.to_toml())
}

/// Network from a checkpoint, or freshly initialized when `checkpoint` is `None`.
pub fn load_net(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<FusionNet> {
    match checkpoint {
        Some(path) => FusionNet::from_weights(cfg.net.clone(), load_checkpoint(path, &cfg.net)?),
        None => FusionNet::new(cfg.net.clone()),
    }
}

/// Scores the manifest's `query` frames against its `database` frames and
/// writes `eval.json`, `pr.csv` and `descriptors.txt`.
pub fn cmd_eval(manifest: &Manifest, grid_dir: &Path, checkpoint: &Path, cfg: &RunConfig) -> Result<EvalReport> {
    let net = load_net(cfg, Some(checkpoint))?;
    let database = load_samples(manifest, Split::Database, grid_dir, cfg)?;
    let queries = load_samples(manifest, Split::Query, grid_dir, cfg)?;
    if database.is_empty() {
        return Err(Error::Empty("database split"));
    }
    if queries.is_empty() {
        return Err(Error::Empty("query split"));
    }
    let db: Vec<IndexEntry> = par_map(&database, |s| index_entry(&net, s))?;
    let qs: Vec<IndexEntry> = par_map(&queries, |s| index_entry(&net, s))?;
    let hash = cfg.hash();
    let mut all = db.clone();
    all.extend(qs.iter().cloned());
    let index = DescriptorIndex::new(db)?;
    let report = evaluate(&index, &qs, &cfg.eval.ks, cfg.eval.pos_radius, hash)?;
    let out = &cfg.output_dir;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&out.join("eval.json"), json + "\n")?;
    write_file(&out.join("pr.csv"), pr_csv(&report.pr_points, hash))?;
    write_file(&out.join("descriptors.txt"), descriptors_text(&all, hash))?;
    write_file(&out.join("config.toml"), config_text(cfg))?;
    Ok(report)
}

/// Rotation angles probed by `invariance`, degrees.
pub const INVARIANCE_ANGLES: [f64; 6] = [55.0, 110.0, 180.0, 250.0, 305.0, 360.0];
/// Azimuth bin shifts probed by `invariance`.
pub const INVARIANCE_SHIFTS: [i64; 5] = [1, 7, 264, 528, 1055];
pub const INVARIANCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceRow {
    /// `rotation` (the point cloud is rotated) or `bin_shift` (both grids
    /// are cyclically shifted).
    pub kind: &'static str,
    pub amount: f64,
    pub degrees: f64,
    pub drift: f64,
    /// Whether the architecture guarantees zero drift for this row.
    pub exact: bool,
}

impl InvarianceRow {
    pub fn passed(&self) -> bool {
        !self.exact || self.drift <= INVARIANCE_TOLERANCE
    }
}

/// Descriptor drift of `cloud` under the probe rotations and bin shifts.
pub fn cmd_invariance(cloud: &PointCloud, net: &FusionNet, cfg: &RunConfig) -> Result<Vec<InvarianceRow>> {
    let (riv, bev) = encode_views(cloud, cfg)?;
    let base = net.describe(&riv, &bev)?;
    let width = cfg.riv.width;
    let stride = net.config().total_azimuth_stride() as i64;
    let mut rows = Vec::new();
    for deg in INVARIANCE_ANGLES {
        let (r, b) = encode_views(&apply_yaw(cloud, deg.to_radians()), cfg)?;
        rows.push(InvarianceRow {
            kind: "rotation",
            amount: deg,
            degrees: deg,
            drift: descriptor_distance(&base, &net.describe(&r, &b)?)?,
            exact: deg % 360.0 == 0.0,
        });
    }
    for k in INVARIANCE_SHIFTS {
        let d = net.describe(&riv.shift_azimuth(-k), &bev.shift_azimuth(-k))?;
        rows.push(InvarianceRow {
            kind: "bin_shift",
            amount: k as f64,
            degrees: 360.0 * k.rem_euclid(width as i64) as f64 / width as f64,
            drift: descriptor_distance(&base, &d)?,
            exact: k % stride == 0,
        });
    }
    Ok(rows)
}

pub fn invariance_csv(rows: &[InvarianceRow], config_hash: u64) -> String {
    let mut s = format!("# config_hash={config_hash:016x}\nkind,amount,degrees,drift,exact,passed\n");
    for r in rows {
        writeln!(s, "{},{},{},{:e},{},{}", r.kind, r.amount, r.degrees, r.drift, r.exact, r.passed()).unwrap();
    }
    s
}

/// First frame of a one-frame synthetic drive; the default probe scan.
pub fn synthetic_probe_scan(seed: u64) -> Result<PointCloud> {
    let synth = SynthConfig { seed, n_frames: 1, revisit_fraction: 0.0, ..SynthConfig::default() };
    let (_, cloud) = render_dataset(&synth)?
        .into_iter()
        .next()
        .ok_or(Error::Empty("synthetic drive"))?;
    Ok(cloud)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckRow {
    pub name: String,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl GradCheckRow {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= self.tolerance
    }
}

/// Network used for the end-to-end gradient check.
pub fn gradcheck_network() -> NetConfig {
    NetConfig::tiny()
}

/// Finite-difference checks of every differentiable primitive, then of
/// every parameter tensor of the tiny network on `8 x 32` inputs.
pub fn cmd_gradcheck(seed: u64) -> Result<Vec<GradCheckRow>> {
    let mut rows: Vec<GradCheckRow> = check_primitives(seed)?
        .into_iter()
        .map(|r| GradCheckRow {
            name: r.primitive.to_string(),
            max_relative_error: r.max_relative_error,
            tolerance: r.tolerance,
        })
        .collect();
    let net = NetConfig { seed, ..gradcheck_network() };
    for p in check_network_gradients(&net, 8, 32, seed)? {
        rows.push(GradCheckRow {
            name: format!("net:{}", p.name),
            max_relative_error: p.max_relative_error,
            tolerance: crate::net::NETWORK_TOLERANCE,
        });
    }
    Ok(rows)
}

pub fn gradcheck_hash(seed: u64) -> u64 {
    config_hash(&(seed, gradcheck_network()))
}

/// Fixed-width pass/fail table.
pub fn gradcheck_table(rows: &[GradCheckRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut s = format!("{:width$}  {:>12}  {:>9}  result\n", "name", "max rel err", "tolerance");
    for r in rows {
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        writeln!(s, "{:width$}  {:>12.3e}  {:>9.0e}  {verdict}", r.name, r.max_relative_error, r.tolerance).unwrap();
    }
    s
}

pub fn gradcheck_csv(rows: &[GradCheckRow], config_hash: u64) -> String {
    let mut s = format!("# config_hash={config_hash:016x}\nname,max_relative_error,tolerance,passed\n");
    for r in rows {
        writeln!(s, "{},{:e},{:e},{}", r.name, r.max_relative_error, r.tolerance, r.passed()).unwrap();
    }
    s
}

/// Repetition counts and problem sizes for `bench`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchOptions {
    pub points: usize,
    pub encode_reps: usize,
    pub forward_reps: usize,
    pub query_reps: usize,
    pub database_size: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            points: 100_000,
            encode_reps: 100,
            forward_reps: 100,
            query_reps: 100,
            database_size: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyStats {
    pub reps: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    /// Summary of per-repetition timings in milliseconds.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("latency samples"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let p95 = sorted[(0.95 * n as f64).ceil() as usize - 1];
        Ok(Self {
            reps: n,
            mean_ms: sorted.iter().sum::<f64>() / n as f64,
            p95_ms: p95,
            min_ms: sorted[0],
            max_ms: sorted[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub options: BenchOptions,
    /// RIV projection plus BEV encoding of one cloud.
    pub encode: LatencyStats,
    pub forward: LatencyStats,
    /// Exact top-k over `database_size` descriptors.
    pub query: LatencyStats,
    pub config_hash: String,
}

/// Points spread uniformly in azimuth and elevation over the sensor's field
/// of view, at ranges between 2 m and the maximum range.
pub fn bench_cloud(n: usize, cfg: &RunConfig, seed: u64) -> PointCloud {
    let mut r = rng(seed, Stream::Bench, 0);
    let (up, down) = (cfg.riv.fov_up_deg.to_radians(), cfg.riv.fov_down_deg.to_radians());
    let points = (0..n)
        .map(|_| {
            let az = r.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let el = r.random_range(down..up);
            let range = r.random_range(2.0..cfg.riv.max_range);
            let (x, y, z) = (range * el.cos() * az.cos(), range * el.cos() * az.sin(), range * el.sin());
            Point::new(x, y, z, r.random_range(0.0..1.0))
        })
        .collect();
    PointCloud::new("bench", points)
}

fn time_reps(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<LatencyStats> {
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        f()?;
        samples.push(t.elapsed().as_secs_f64() * 1e3);
    }
    LatencyStats::from_samples(&samples)
}

/// Per-stage latency of encoding, the network forward pass and retrieval.
pub fn cmd_bench(cfg: &RunConfig, net: &FusionNet, opts: &BenchOptions) -> Result<BenchReport> {
    let cloud = bench_cloud(opts.points, cfg, opts.seed);
    let encode = time_reps(opts.encode_reps, || encode_views(&cloud, cfg).map(drop))?;
    let (riv, bev) = encode_views(&cloud, cfg)?;
    let forward = time_reps(opts.forward_reps, || net.describe(&riv, &bev).map(drop))?;

    let dim = net.config().descriptor_dim;
    let mut r = rng(opts.seed, Stream::Bench, 1);
    let mut random_descriptor = || {
        let v: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        Descriptor::new(v.into_iter().map(|x| x / n).collect())
    };
    let entries = (0..opts.database_size)
        .map(|i| {
            Ok(IndexEntry {
                frame_id: format!("{i:06}"),
                descriptor: random_descriptor()?,
                east: 0.0,
                north: 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let index = DescriptorIndex::new(entries)?;
    let probe = random_descriptor()?;
    let k = cfg.eval.ks.iter().copied().max().unwrap_or(1);
    let query = time_reps(opts.query_reps, || index.query_topk(&probe, k).map(drop))?;
    Ok(BenchReport {
        options: opts.clone(),
        encode,
        forward,
        query,
        config_hash: format!("{:016x}", cfg.hash()),
    })
}

/// Writes `text` to `cfg.output_dir/name`.
pub fn write_output(cfg: &RunConfig, name: &str, text: &str) -> Result<PathBuf> {
    let path = cfg.output_dir.join(name);
    write_file(&path, text)?;
    Ok(path)
}

//! Scan-to-descriptor plumbing shared by the commands and examples.

use crate::bev::{build_bev, BevMap};
use crate::cloud::{FrameMeta, PointCloud};
use crate::config::RunConfig;
use crate::dataset::{render_dataset, SplitMode, SynthConfig};
use crate::error::Result;
use crate::index::{recall_at_k, DescriptorIndex, EvalQuery, IndexEntry};
use crate::net::{grid_tensor, FusionNet};
use crate::riv::{project_riv, RivImage};
use crate::train::{train, EpochLog, TrainSample};

pub fn encode_views(cloud: &PointCloud, cfg: &RunConfig) -> Result<(RivImage, BevMap)> {
    Ok((project_riv(cloud, &cfg.riv)?, build_bev(cloud, &cfg.bev)?))
}

pub fn encode_sample(meta: FrameMeta, cloud: &PointCloud, cfg: &RunConfig) -> Result<TrainSample> {
    let (riv, bev) = encode_views(cloud, cfg)?;
    Ok(TrainSample {
        meta,
        riv: grid_tensor(riv.grid()),
        bev: grid_tensor(bev.grid()),
    })
}

/// Renders a synthetic dataset and encodes every frame with `cfg`.
/// Returns the samples plus, per sample, whether it is a revisit.
pub fn synth_samples(synth: &SynthConfig, cfg: &RunConfig) -> Result<Vec<(TrainSample, bool)>> {
    render_dataset(synth)?
        .into_iter()
        .map(|(f, cloud)| Ok((encode_sample(f.meta, &cloud, cfg)?, f.revisit_of.is_some())))
        .collect()
}

/// Maps `f` over `items` on all available cores, preserving order.
pub fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync) -> Result<Vec<U>> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    if threads == 1 || items.len() < 2 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(f).collect::<Result<Vec<U>>>()))
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("worker thread panicked")?);
        }
        Ok(out)
    })
}

pub fn index_entry(net: &FusionNet, s: &TrainSample) -> Result<IndexEntry> {
    Ok(IndexEntry {
        frame_id: s.meta.frame_id.clone(),
        descriptor: net.describe_tensors(&s.riv, &s.bev)?,
        east: s.meta.east,
        north: s.meta.north,
    })
}

/// Describes database and query samples with `net`.
pub fn build_eval_set(
    net: &FusionNet,
    database: &[TrainSample],
    queries: &[TrainSample],
) -> Result<(DescriptorIndex, Vec<EvalQuery>)> {
    let db = par_map(database, |s| index_entry(net, s))?;
    let qs = par_map(queries, |s| index_entry(net, s))?;
    Ok((DescriptorIndex::new(db)?, qs))
}

/// Training world and the offset evaluation pass through it.
///
/// Training frames come from one drive (200 frames, half of them
/// revisits). The evaluation drive covers the same world shifted 5 m
/// east, with 100 first visits forming the database and 50 revisits as
/// queries.
pub fn toy_benchmark_configs(seed: u64) -> (SynthConfig, SynthConfig) {
    let base = SynthConfig {
        world_extent: Some(280.0),
        revisit_along: 2.0,
        revisit_lateral: 0.5,
        ..SynthConfig::default()
    };
    let train = SynthConfig {
        seed: 100 + seed,
        n_frames: 200,
        revisit_fraction: 0.5,
        ..base.clone()
    };
    let eval = SynthConfig {
        seed: 200 + seed,
        world_seed: Some(100 + seed),
        offset: [5.0, 0.0],
        n_frames: 150,
        revisit_fraction: 1.0 / 3.0,
        split_mode: SplitMode::Evaluation,
        ..base
    };
    (train, eval)
}

/// Encoded toy benchmark.
#[derive(Debug, Clone)]
pub struct ToyBenchmark {
    pub train: Vec<TrainSample>,
    pub database: Vec<TrainSample>,
    pub queries: Vec<TrainSample>,
}

impl ToyBenchmark {
    pub fn build(seed: u64, cfg: &RunConfig) -> Result<Self> {
        let (train_cfg, eval_cfg) = toy_benchmark_configs(seed);
        let train = synth_samples(&train_cfg, cfg)?.into_iter().map(|(s, _)| s).collect();
        let (queries, database): (Vec<_>, Vec<_>) =
            synth_samples(&eval_cfg, cfg)?.into_iter().partition(|(_, revisit)| *revisit);
        Ok(Self {
            train,
            database: database.into_iter().map(|(s, _)| s).collect(),
            queries: queries.into_iter().map(|(s, _)| s).collect(),
        })
    }

    pub fn recall_at_1(&self, net: &FusionNet, pos_radius: f64) -> Result<f64> {
        let (index, queries) = build_eval_set(net, &self.database, &self.queries)?;
        Ok(recall_at_k(&index, &queries, &[1], pos_radius)?.recall_at[&1])
    }
}

/// Outcome of training on the toy benchmark.
#[derive(Debug, Clone)]
pub struct ToyRun {
    pub untrained_recall: f64,
    pub trained_recall: f64,
    pub logs: Vec<EpochLog>,
    pub net: FusionNet,
}

/// Trains a fresh network on `bench` and reports Recall@1 before and after.
pub fn run_toy(bench: &ToyBenchmark, cfg: &RunConfig, mut on_epoch: impl FnMut(&EpochLog, &FusionNet)) -> Result<ToyRun> {
    let mut net = FusionNet::new(cfg.net.clone())?;
    let untrained_recall = bench.recall_at_1(&net, cfg.eval.pos_radius)?;
    let logs = train(&mut net, &bench.train, &cfg.mining, &cfg.train, cfg.seed, &mut on_epoch)?;
    let trained_recall = bench.recall_at_1(&net, cfg.eval.pos_radius)?;
    Ok(ToyRun { untrained_recall, trained_recall, logs, net })
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mptf::bev::BevEncoding;
use mptf::cloud::load_kitti_bin;
use mptf::commands::*;
use mptf::config::RunConfig;
use mptf::dataset::{SplitMode, SynthConfig};
use mptf::manifest::Manifest;
use mptf::net::NetConfig;

#[derive(Parser)]
#[command(name = "mptf", version, about = "Multi-view LiDAR place recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 32 x 1056 inputs, four-level network
    Default,
    /// Default with azimuth stride 2 at levels 2-4
    Speed,
    /// 16 x 64 inputs, tiny network
    Toy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Bev {
    Ndt,
    Height,
}

/// Run configuration: preset, then config file, then individual flags.
#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "default")]
    preset: Preset,
    /// TOML run configuration; replaces the preset
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Shared azimuth width of both views
    #[arg(long)]
    width: Option<usize>,
    /// Rows of both views
    #[arg(long)]
    height: Option<usize>,
    #[arg(long, value_enum)]
    bev: Option<Bev>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    n_neg: Option<usize>,
    #[arg(long)]
    pos_radius: Option<f64>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => match self.preset {
                Preset::Default => RunConfig::default(),
                Preset::Speed => RunConfig { net: NetConfig::speed_profile(), ..RunConfig::default() },
                Preset::Toy => RunConfig::toy(),
            },
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.width {
            cfg.riv.width = v;
            cfg.bev.width = v;
        }
        if let Some(v) = self.height {
            cfg.riv.height = v;
            cfg.bev.height = v;
        }
        if let Some(b) = self.bev {
            cfg = cfg.with_bev_encoding(match b {
                Bev::Ndt => BevEncoding::Ndt,
                Bev::Height => BevEncoding::HeightOccupancy,
            });
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.train.lr = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.margin {
            cfg.mining.margin = v;
        }
        if let Some(v) = self.n_neg {
            cfg.mining.n_neg = v;
        }
        if let Some(v) = self.pos_radius {
            cfg.eval.pos_radius = v;
        }
        Ok(cfg.finalize()?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic drive: KITTI-layout scans plus manifest.tsv
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        n_frames: usize,
        #[arg(long, default_value_t = 0.3)]
        revisit_fraction: f64,
        /// Tag first visits `database` and revisits `query` instead of `train`
        #[arg(long)]
        eval_split: bool,
        /// World seed, for drives through a shared world
        #[arg(long)]
        world_seed: Option<u64>,
        /// Square world side, meters
        #[arg(long)]
        world_extent: Option<f64>,
    },
    /// Encode every manifest frame into RIV and BEV grid files
    Encode {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        grids: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train on the manifest's train frames
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        grids: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Retrieve query frames against database frames
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        grids: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Descriptor drift under yaw rotations and azimuth bin shifts
    Invariance {
        /// Scan to probe; a synthetic scan when omitted
        #[arg(long)]
        scan: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Finite-difference check of every primitive and the tiny network
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "runs/gradcheck")]
        output_dir: PathBuf,
    },
    /// Encode, forward and query latency
    Bench {
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 100_000)]
        points: usize,
        #[arg(long, default_value_t = 1000)]
        database_size: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth { out, seed, n_frames, revisit_fraction, eval_split, world_seed, world_extent } => {
            let synth = SynthConfig {
                seed,
                n_frames,
                revisit_fraction,
                world_seed,
                world_extent,
                split_mode: if eval_split { SplitMode::Evaluation } else { SplitMode::Train },
                ..SynthConfig::default()
            };
            let m = cmd_synth(&synth, &out)?;
            println!("wrote {} frames to {}", m.entries.len(), out.display());
        }
        Command::Encode { manifest, grids, run } => {
            let cfg = run.resolve()?;
            let m = Manifest::load(&manifest)?;
            let n = cmd_encode(&m, &cfg, &grids)?;
            println!("encoded {n} frames into {} ({:016x})", grids.display(), cfg.encoding_hash());
        }
        Command::Train { manifest, grids, run } => {
            let cfg = run.resolve()?;
            let m = Manifest::load(&manifest)?;
            cmd_train(&m, &grids, &cfg, |log, _| {
                let loss = log.mean_loss.map_or("-".into(), |l| format!("{l:.5}"));
                println!(
                    "epoch {:3}  loss {loss}  lr {:.1e}  used {}  skipped {}",
                    log.epoch, log.lr, log.batches_used, log.batches_skipped
                );
            })?;
            println!("checkpoint and loss log in {}", cfg.output_dir.display());
        }
        Command::Eval { manifest, grids, checkpoint, run } => {
            let cfg = run.resolve()?;
            let m = Manifest::load(&manifest)?;
            if !checkpoint.exists() {
                bail!("checkpoint {} does not exist", checkpoint.display());
            }
            let report = cmd_eval(&m, &grids, &checkpoint, &cfg)?;
            for (k, r) in &report.recall_at {
                println!("Recall@{k:<3} {r:.4}");
            }
            println!("max F1     {:.4}", report.max_f1);
            println!("PR-AUC     {:.4}", report.pr_auc);
            println!(
                "{} queries scored, {} without a true match, database {}",
                report.queries_evaluated, report.queries_without_match, report.database_size
            );
        }
        Command::Invariance { scan, checkpoint, run } => {
            let cfg = run.resolve()?;
            let cloud = match &scan {
                Some(path) => load_kitti_bin(path)?,
                None => synthetic_probe_scan(cfg.seed)?,
            };
            let net = load_net(&cfg, checkpoint.as_deref())?;
            let rows = cmd_invariance(&cloud, &net, &cfg)?;
            let csv = invariance_csv(&rows, cfg.hash());
            print!("{}", csv.lines().skip(1).map(|l| format!("{l}\n")).collect::<String>());
            let path = write_output(&cfg, "invariance.csv", &csv)?;
            println!("wrote {}", path.display());
            return Ok(rows.iter().all(InvarianceRow::passed));
        }
        Command::Gradcheck { seed, output_dir } => {
            let rows = cmd_gradcheck(seed)?;
            print!("{}", gradcheck_table(&rows));
            let cfg = RunConfig { output_dir, ..RunConfig::default() };
            write_output(&cfg, "gradcheck.csv", &gradcheck_csv(&rows, gradcheck_hash(seed)))?;
            return Ok(rows.iter().all(GradCheckRow::passed));
        }
        Command::Bench { reps, points, database_size, checkpoint, run } => {
            let cfg = run.resolve()?;
            let net = load_net(&cfg, checkpoint.as_deref())?;
            let opts = BenchOptions {
                points,
                encode_reps: reps,
                forward_reps: reps,
                query_reps: reps,
                database_size,
                seed: cfg.seed,
            };
            let report = cmd_bench(&cfg, &net, &opts)?;
            for (stage, s) in [("encode", &report.encode), ("forward", &report.forward), ("query", &report.query)] {
                println!("{stage:8} mean {:9.3} ms  p95 {:9.3} ms  ({} reps)", s.mean_ms, s.p95_ms, s.reps);
            }
            let json = serde_json::to_string_pretty(&report)?;
            write_output(&cfg, "bench.json", &(json + "\n"))?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()).context("mptf") {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

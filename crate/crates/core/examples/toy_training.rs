//! Trains the tiny network on the synthetic toy benchmark and reports
//! Recall@1 before and after.
//!
//! `cargo run --release --example toy_training -- [seed] [ndt|height]`

use std::time::Instant;

use mptf::bev::BevEncoding;
use mptf::config::RunConfig;
use mptf::pipeline::{run_toy, ToyBenchmark};

fn main() -> mptf::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let encoding = match args.next().as_deref() {
        Some("height") => BevEncoding::HeightOccupancy,
        _ => BevEncoding::Ndt,
    };
    let cfg = RunConfig { seed, ..RunConfig::toy() }.with_bev_encoding(encoding).finalize()?;

    let t0 = Instant::now();
    let bench = ToyBenchmark::build(seed, &cfg)?;
    println!(
        "{} training frames, {} database, {} queries, rendered in {:.1?}",
        bench.train.len(),
        bench.database.len(),
        bench.queries.len(),
        t0.elapsed()
    );
    let t1 = Instant::now();
    let run = run_toy(&bench, &cfg, |log, _| {
        let loss = log.mean_loss.map_or("-".to_string(), |l| format!("{l:.4}"));
        println!(
            "epoch {:2}  loss {loss}  batches {:3} used, {:3} skipped",
            log.epoch, log.batches_used, log.batches_skipped
        );
    })?;
    println!("untrained Recall@1 {:.3}", run.untrained_recall);
    println!("trained   Recall@1 {:.3}  ({:.1?})", run.trained_recall, t1.elapsed());
    Ok(())
}

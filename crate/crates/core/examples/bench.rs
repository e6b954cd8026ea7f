//! Latency of encoding a 100k-point cloud at 32 x 1056, the forward pass,
//! and exact top-k retrieval.
//!
//! `cargo run --release --example bench -- [reps]`

use mptf::commands::{cmd_bench, BenchOptions};
use mptf::config::RunConfig;
use mptf::net::FusionNet;

fn main() -> mptf::Result<()> {
    let reps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let cfg = RunConfig::default().finalize()?;
    let net = FusionNet::new(cfg.net.clone())?;
    let opts = BenchOptions {
        encode_reps: reps,
        forward_reps: reps.min(5),
        query_reps: reps,
        ..BenchOptions::default()
    };
    let r = cmd_bench(&cfg, &net, &opts)?;
    for (stage, s) in [("encode", &r.encode), ("forward", &r.forward), ("query", &r.query)] {
        println!("{stage:8} mean {:9.3} ms  p95 {:9.3} ms  ({} reps)", s.mean_ms, s.p95_ms, s.reps);
    }
    Ok(())
}

//! Encodes a scan into the range image and the NDT polar BEV, and prints
//! per-channel summaries.

use mptf::commands::synthetic_probe_scan;
use mptf::config::RunConfig;
use mptf::grid::FeatureGrid;
use mptf::pipeline::encode_views;

fn summarize(name: &str, g: &FeatureGrid) {
    let [c, h, w] = g.shape();
    println!("{name}: {c} x {h} x {w}, {} of {} cells valid", g.valid_count(), h * w);
    for (ch, label) in g.kind().channel_names().iter().enumerate() {
        let vals: Vec<f64> = (0..h)
            .flat_map(|r| (0..w).map(move |u| (r, u)))
            .filter(|&(r, u)| g.is_valid(r, u))
            .map(|(r, u)| g.get(ch, r, u))
            .collect();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
        println!("  {label:<14} min {lo:9.4}  mean {mean:9.4}  max {hi:9.4}");
    }
}

fn main() -> mptf::Result<()> {
    let cloud = synthetic_probe_scan(3)?;
    let cfg = RunConfig::default();
    let (riv, bev) = encode_views(&cloud, &cfg)?;
    summarize("range image", riv.grid());
    summarize("NDT BEV", bev.grid());
    Ok(())
}

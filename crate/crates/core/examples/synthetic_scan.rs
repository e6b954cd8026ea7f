//! Renders one scan from the synthetic world and writes it in KITTI layout.
//!
//! `cargo run --example synthetic_scan -- [out.bin]`

use mptf::cloud::{encode_kitti, load_kitti_bin, write_kitti_bin};
use mptf::commands::synthetic_probe_scan;

fn main() -> mptf::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "scan.bin".into());
    let cloud = synthetic_probe_scan(7)?;
    let ranges: Vec<f64> = cloud.points.iter().map(|p| p.range()).collect();
    let max = ranges.iter().copied().fold(0.0, f64::max);
    let mean = ranges.iter().sum::<f64>() / ranges.len() as f64;
    println!("{} points, mean range {mean:.1} m, max {max:.1} m", cloud.len());

    write_kitti_bin(&out, &cloud)?;
    let back = load_kitti_bin(&out)?;
    println!("{out}: {} bytes, {} points read back", encode_kitti(&cloud).len(), back.len());
    Ok(())
}

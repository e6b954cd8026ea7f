//! Descriptor drift of a randomly initialized network under yaw rotations
//! of the scan and exact azimuth shifts of its encodings.

use mptf::commands::{cmd_invariance, synthetic_probe_scan};
use mptf::config::RunConfig;
use mptf::net::FusionNet;

fn main() -> mptf::Result<()> {
    let cfg = RunConfig { seed: 4, ..RunConfig::toy() }.finalize()?;
    let net = FusionNet::new(cfg.net.clone())?;
    let cloud = synthetic_probe_scan(4)?;
    println!("{:<10} {:>7} {:>9} {:>12}", "kind", "amount", "degrees", "drift");
    for row in cmd_invariance(&cloud, &net, &cfg)? {
        println!("{:<10} {:>7} {:>9.3} {:>12.3e}", row.kind, row.amount, row.degrees, row.drift);
    }
    Ok(())
}

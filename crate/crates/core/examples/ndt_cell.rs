//! Fits Gaussian statistics to one cell of points and prints entropy and
//! density scores next to values computed by hand.

use mptf::cloud::Point;
use mptf::ndt::fit_cell;

fn main() -> mptf::Result<()> {
    // a flat 1 m x 1 m patch with a little height jitter
    let points: Vec<Point> = (0..25)
        .map(|i| {
            let (a, b) = ((i % 5) as f64 * 0.25, (i / 5) as f64 * 0.25);
            Point::new(10.0 + a, b, 0.02 * ((i * 7 % 5) as f64 - 2.0), 0.3 + 0.01 * (i % 3) as f64)
        })
        .collect();
    let s = fit_cell(&points, 1e-6, 2).expect("25 points fit");
    println!("points       {}", s.count);
    println!("mean         [{:.4}, {:.4}, {:.4}]", s.mean.x, s.mean.y, s.mean.z);
    println!("cov diag     [{:.5}, {:.5}, {:.5}]", s.cov[(0, 0)], s.cov[(1, 1)], s.cov[(2, 2)]);
    let det = s.cov.determinant();
    let by_hand = 0.5 * (3.0 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + det.ln());
    println!("entropy      {:.6} nats (from det: {by_hand:.6})", s.entropy_p);
    println!("density      {:.4} (at most {})", s.pds_p, s.count);
    println!("intensity    mean {:.4}, var {:.2e}, entropy {:.4}", s.intensity_mean, s.intensity_var, s.entropy_it);
    Ok(())
}

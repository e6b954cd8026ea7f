use std::f64::consts::TAU;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mptf::bev::{bev_cell_stats, build_bev, BevConfig};
use mptf::cloud::{apply_yaw, decode_kitti, encode_kitti, FrameMeta, IntensityScale, Point, PointCloud};
use mptf::engine::{Tape, Tensor};
use mptf::grid::azimuth_boundary_distance;
use mptf::index::{pr_curve, recall_at_k, top_one_outcomes, DescriptorIndex, IndexEntry};
use mptf::net::{forward_nodes, Descriptor, FusionNet, NetConfig};
use mptf::riv::{project_riv, RivConfig};
use mptf::train::{mine_triplet, triplet_loss, Mined, MiningConfig};

fn cloud_strategy(max_points: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec((-40.0..40.0f64, -40.0..40.0f64, -3.0..4.0f64, 0.0..=1.0f64), 1..max_points).prop_map(|v| {
        PointCloud::new("p", v.into_iter().map(|(x, y, z, i)| Point::new(x, y, z, i)).collect())
    })
}

fn tensor_strategy(shape: Vec<usize>) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-1.0..1.0f64, n).prop_map(move |d| Tensor::new(&shape, d).unwrap())
}

fn unit(v: Vec<f64>) -> Descriptor {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
    Descriptor::new(v.into_iter().map(|x| x / n).collect()).unwrap()
}

fn small_riv() -> RivConfig {
    RivConfig { height: 8, width: 48, ..RivConfig::default() }
}

fn small_bev() -> BevConfig {
    BevConfig { height: 8, width: 48, r_max: 60.0, ..BevConfig::default() }
}

/// Drops points within `1e-6` bins of a column boundary before or after
/// rotating by `k` bins.
fn boundary_safe(cloud: &PointCloud, width: usize, k: usize) -> PointCloud {
    let theta = TAU * k as f64 / width as f64;
    let keep = |p: &Point| {
        let r = apply_yaw(&PointCloud::new("", vec![*p]), theta).points[0];
        azimuth_boundary_distance(p.x, p.y, width) > 1e-6 && azimuth_boundary_distance(r.x, r.y, width) > 1e-6
    };
    PointCloud::new(cloud.frame_id.clone(), cloud.points.iter().copied().filter(keep).collect())
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kitti_round_trip(cloud in cloud_strategy(64)) {
        let back = decode_kitti(&encode_kitti(&cloud), IntensityScale::Unit).unwrap();
        let f32s = |c: &PointCloud| c.points.iter().map(|p| [p.x as f32, p.y as f32, p.z as f32, p.intensity as f32]).collect::<Vec<_>>();
        prop_assert_eq!(f32s(&back), f32s(&cloud));
        let again = decode_kitti(&encode_kitti(&back), IntensityScale::Unit).unwrap();
        prop_assert_eq!(again.points, back.points);
    }

    #[test]
    fn yaw_preserves_range_and_inverts(cloud in cloud_strategy(64), theta in -10.0..10.0f64) {
        let r = apply_yaw(&cloud, theta);
        let back = apply_yaw(&r, -theta);
        for ((p, q), b) in cloud.points.iter().zip(&r.points).zip(&back.points) {
            prop_assert!((q.range() - p.range()).abs() <= 1e-12 * p.range().max(1e-300));
            prop_assert!((b.x - p.x).abs() <= 1e-9 && (b.y - p.y).abs() <= 1e-9 && b.z == p.z);
            prop_assert_eq!(q.intensity, p.intensity);
        }
    }

    #[test]
    fn riv_ignores_point_order(cloud in cloud_strategy(200), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = cloud.clone();
        shuffled.points.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = project_riv(&cloud, &small_riv()).unwrap();
        let b = project_riv(&shuffled, &small_riv()).unwrap();
        prop_assert_eq!(a.grid(), b.grid());
        prop_assert!(a.grid().values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn bev_ignores_point_order(cloud in cloud_strategy(200), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = cloud.clone();
        shuffled.points.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = build_bev(&cloud, &small_bev()).unwrap();
        let b = build_bev(&shuffled, &small_bev()).unwrap();
        prop_assert_eq!(a.grid(), b.grid());
        prop_assert!(a.grid().values().iter().all(|v| (0.0..=1.0).contains(v)));
        for (_, _, s) in bev_cell_stats(&cloud, &small_bev()).unwrap() {
            prop_assert!(s.pds_p > 0.0 && s.pds_p <= s.count as f64 + 1e-12);
            prop_assert!(s.pds_it > 0.0 && s.pds_it <= s.count as f64 + 1e-12);
        }
    }

    #[test]
    fn rotation_commutes_with_shift(cloud in cloud_strategy(200), k in 0usize..48) {
        let w = 48;
        let cloud = boundary_safe(&cloud, w, k);
        let theta = TAU * k as f64 / w as f64;
        let rotated = apply_yaw(&cloud, theta);

        let riv = project_riv(&cloud, &small_riv()).unwrap().shift_azimuth(-(k as i64));
        let riv_rot = project_riv(&rotated, &small_riv()).unwrap();
        prop_assert_eq!(riv.grid().mask(), riv_rot.grid().mask());
        prop_assert!(close(riv.grid().values(), riv_rot.grid().values(), 1e-12));

        let bev = build_bev(&cloud, &small_bev()).unwrap().shift_azimuth(-(k as i64));
        let bev_rot = build_bev(&rotated, &small_bev()).unwrap();
        prop_assert_eq!(bev.grid().mask(), bev_rot.grid().mask());
        prop_assert!(close(bev.grid().values(), bev_rot.grid().values(), 1e-9));
    }

    #[test]
    fn strided_conv_is_shift_equivariant(
        x in tensor_strategy(vec![2, 5, 12]),
        kernel in tensor_strategy(vec![3, 2, 3, 3]),
        m in 0i64..6,
        sw in 1usize..=3,
    ) {
        let k = m * sw as i64;
        let run = |input: &Tensor| {
            let mut t = Tape::new();
            let xv = t.constant(input.clone());
            let kv = t.constant(kernel.clone());
            let y = t.conv2d_circular(xv, kv, None, 2, sw).unwrap();
            t.value(y).clone()
        };
        prop_assert_eq!(run(&x.shift_last(k)), run(&x).shift_last(k / sw as i64));
    }

    #[test]
    fn forward_and_backward_are_deterministic(x in tensor_strategy(vec![2, 3, 8])) {
        let run = || {
            let mut t = Tape::new();
            let xv = t.leaf(x.clone(), true);
            let y = t.relu(xv);
            let s = t.sum(y);
            let g = t.backward(s).unwrap();
            (t.value(s).clone(), g.get(xv).cloned())
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn netvlad_ignores_column_order(
        x in tensor_strategy(vec![4, 9]),
        logits in tensor_strategy(vec![9, 3]),
        centers in tensor_strategy(vec![3, 4]),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..9).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let px = Tensor::new(&[4, 9], (0..4).flat_map(|d| perm.iter().map(move |&j| (d, j))).map(|(d, j)| x.data()[d * 9 + j]).collect()).unwrap();
        let pl = Tensor::new(&[9, 3], perm.iter().flat_map(|&j| logits.data()[j * 3..j * 3 + 3].to_vec()).collect()).unwrap();
        let run = |x: &Tensor, l: &Tensor| {
            let mut t = Tape::new();
            let (xv, lv, cv) = (t.constant(x.clone()), t.constant(l.clone()), t.constant(centers.clone()));
            let a = t.softmax_rows(lv).unwrap();
            let v = t.vlad_aggregate(xv, a, cv).unwrap();
            t.value(v).clone()
        };
        prop_assert_eq!(run(&x, &logits), run(&px, &pl));
    }

    #[test]
    fn gate_never_amplifies(r in tensor_strategy(vec![2, 8, 16]), b in tensor_strategy(vec![4, 8, 16]), seed in 0u64..1000) {
        let cfg = NetConfig { seed, ..NetConfig::tiny() };
        let net = FusionNet::new(cfg.clone()).unwrap();
        let mut tape = Tape::new();
        let p = net.weights().register(&mut tape, false);
        let nodes = forward_nodes(&mut tape, &p, &cfg, &r, &b).unwrap();
        let pre = tape.value(nodes.pre_gate).data();
        let gated = tape.value(nodes.gated).data();
        prop_assert!(pre.iter().zip(gated).all(|(y, g)| g.abs() <= y.abs()));
    }

    #[test]
    fn triplet_loss_properties(d_pos in 0.0..2.0f64, d_negs in prop::collection::vec(0.0..2.0f64, 1..8), m in 0.01..1.5f64) {
        let l = triplet_loss(d_pos, &d_negs, m).unwrap();
        prop_assert!(l >= 0.0);
        let min_neg = d_negs.iter().copied().fold(f64::INFINITY, f64::min);
        if d_pos + m <= min_neg {
            prop_assert_eq!(l, 0.0);
        }
    }

    #[test]
    fn mining_respects_radii(
        pos in prop::collection::vec((0.0..60.0f64, 0.0..60.0f64), 2..30),
        desc in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 4), 30),
        query in 0usize..30,
        seed in any::<u64>(),
    ) {
        let n = pos.len();
        let query = query % n;
        let frames: Vec<FrameMeta> = pos.iter().enumerate().map(|(i, &(e, no))| FrameMeta::new(format!("{i}"), e, no, None)).collect();
        let descriptors: Vec<Descriptor> = desc[..n].iter().cloned().map(unit).collect();
        let cfg = MiningConfig { n_neg: 3, ..MiningConfig::default() };
        let mined = mine_triplet(query, &frames, &descriptors, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        if let Mined::Triplet(t) = mined {
            let q = &frames[query];
            let d = |i: usize| mptf::net::descriptor_distance(&descriptors[query], &descriptors[i]).unwrap();
            prop_assert_eq!(t.query, query);
            prop_assert!(t.positive != query && q.distance_to(&frames[t.positive]) <= cfg.pos_radius);
            for i in (0..n).filter(|&i| i != query && q.distance_to(&frames[i]) <= cfg.pos_radius) {
                prop_assert!(d(t.positive) <= d(i));
            }
            prop_assert!(!t.negatives.is_empty() && t.negatives.len() <= cfg.n_neg);
            prop_assert!(t.negatives.windows(2).all(|w| w[0] < w[1]));
            for &j in &t.negatives {
                prop_assert!(q.distance_to(&frames[j]) >= cfg.neg_radius);
                prop_assert!(d(j) < cfg.margin);
            }
        }
    }

    #[test]
    fn recall_monotone_and_metrics_bounded(
        db in prop::collection::vec((prop::collection::vec(-1.0..1.0f64, 3), 0.0..50.0f64), 1..15),
        qs in prop::collection::vec((prop::collection::vec(-1.0..1.0f64, 3), 0.0..50.0f64), 1..10),
    ) {
        let entries: Vec<IndexEntry> = db.into_iter().enumerate().map(|(i, (v, e))| IndexEntry { frame_id: format!("d{i}"), descriptor: unit(v), east: e, north: 0.0 }).collect();
        let queries: Vec<IndexEntry> = qs.into_iter().enumerate().map(|(i, (v, e))| IndexEntry { frame_id: format!("q{i}"), descriptor: unit(v), east: e, north: 0.0 }).collect();
        let index = DescriptorIndex::new(entries).unwrap();
        let before = index.fingerprint();
        let ks: Vec<usize> = (1..=6).collect();
        let Ok(report) = recall_at_k(&index, &queries, &ks, 9.0) else {
            // no query has a true match within the radius
            return Ok(());
        };
        let values: Vec<f64> = ks.iter().map(|k| report.recall_at[k]).collect();
        prop_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        let curve = pr_curve(&top_one_outcomes(&index, &queries, 9.0).unwrap()).unwrap();
        prop_assert!(curve.points.iter().all(|p| (0.0..=1.0).contains(&p.precision) && (0.0..=1.0).contains(&p.recall)));
        prop_assert!((0.0..=1.0).contains(&curve.auc) && (0.0..=1.0).contains(&curve.max_f1));
        prop_assert_eq!(index.fingerprint(), before);
    }
}

mod common;

use geolayout::objectives::{
    loss_depth_2d, loss_depth_supervised, loss_discriminative, loss_stretch, loss_total_2d, loss_total_3d,
};
use geolayout::{optimize_param_map, DepthMap, Error, LossConfig, Mode, ParamMap, SegmentationMap, Supervision};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Inverse depth of normalized-frame channels at pixel `(u, v)`.
fn unit_inv(ch: [f64; 4], u: usize, v: usize, extent: f64) -> f64 {
    (ch[0] * u as f64 / extent + ch[1] * v as f64 / extent + ch[2]) * ch[3]
}

fn piecewise(seg: &SegmentationMap, table: &[[f64; 4]]) -> ParamMap {
    let (w, h) = seg.dims();
    ParamMap::from_fn(w, h, |u, v| Some(table[seg.get(u, v) as usize]))
}

#[test]
fn depth_offset_on_forty_percent() {
    let seg = SegmentationMap::from_fn(10, 10, |u, _| u32::from(u >= 4));
    let gt = DepthMap::from_fn(10, 10, |u, _| Some(if u < 4 { 2.0 } else { 1.25 }));
    let exact = piecewise(&seg, &[[0.0, 0.0, 1.0, 0.5], [0.0, 0.0, 1.0, 0.8]]);
    assert!(loss_depth_supervised(&exact, &seg, &gt).unwrap().value.abs() < 1e-15);
    let offset = piecewise(&seg, &[[0.0, 0.0, 1.0, 0.6], [0.0, 0.0, 1.0, 0.8]]);
    let l = loss_depth_supervised(&offset, &seg, &gt).unwrap();
    assert!((l.value - 0.04).abs() < 1e-12, "{}", l.value);
}

#[test]
fn nearer_wall_over_the_floor_is_penalized() {
    let (w, h) = (12, 10);
    let seg = SegmentationMap::from_fn(w, h, |_, v| u32::from(v < 5));
    let floor = [0.0, 0.6, 0.8, 0.9];
    let wall = [0.0, 0.0, 1.0, 0.7];
    let pm = piecewise(&seg, &[floor, wall]);
    let extent = pm.extent();
    let mut gap = 0.0;
    for v in 0..h {
        for u in 0..w {
            let (f, a) = (unit_inv(floor, u, v, extent), unit_inv(wall, u, v, extent));
            let labeled = if seg.get(u, v) == 0 { f } else { a };
            gap += f.max(a) - labeled;
        }
    }
    gap /= (w * h) as f64;
    assert!(gap > 0.0);
    let l = loss_depth_2d(&pm, &seg).unwrap();
    assert!((l.value - gap).abs() < 1e-12, "{} vs {gap}", l.value);

    // Labels that follow the nearest surface leave nothing to penalize.
    let nearest =
        SegmentationMap::from_fn(w, h, |u, v| u32::from(unit_inv(wall, u, v, extent) > unit_inv(floor, u, v, extent)));
    let consistent = piecewise(&nearest, &[floor, wall]);
    assert_eq!(loss_depth_2d(&consistent, &nearest).unwrap().value, 0.0);
}

#[test]
fn stretch_matches_softmax_oracle() {
    let seg = SegmentationMap::filled(8, 8, 1);
    let mut labels = seg.labels().to_vec();
    labels[0] = 0;
    let seg = SegmentationMap::from_labels(8, 8, labels).unwrap();
    let pm = piecewise(&seg, &[[0.0, 0.0, 1.0, 1.0], [0.0, 0.0, 1.0, 2.0]]);
    let l = loss_stretch(&pm, &seg, 20.0).unwrap();
    let oracle = {
        let win = 1.0 / (1.0 + (-20.0f64).exp());
        let lose = (-20.0f64).exp() / (1.0 + (-20.0f64).exp());
        -(63.0 * win + lose) / 64.0
    };
    assert!((l.value - oracle).abs() < 1e-12);
    assert!(l.value <= -0.98);
}

#[test]
fn stretch_with_gap_one_everywhere() {
    // Two surfaces on disjoint pixel sets; each is nearer by 1.0 on its own
    // pixels thanks to opposite slopes along u.
    let (w, h) = (10, 4);
    let seg = SegmentationMap::from_fn(w, h, |u, _| u32::from(u >= 5));
    let extent = 10.0;
    let a = [-10.0, 0.0, 3.0, 1.0];
    let b = [10.0, 0.0, -6.0, 1.0];
    let pm = piecewise(&seg, &[a, b]);
    for v in 0..h {
        for u in 0..w {
            let (x, y) = (unit_inv(a, u, v, extent), unit_inv(b, u, v, extent));
            let gap = if u < 5 { x - y } else { y - x };
            assert!(gap >= 1.0, "({u},{v}) gap {gap}");
        }
    }
    let l = loss_stretch(&pm, &seg, 20.0).unwrap();
    assert!(l.value <= -0.99, "{}", l.value);
}

#[test]
fn identical_instances_give_uniform_softmax() {
    for c in 1..=5u32 {
        let seg = SegmentationMap::from_fn(10, 3, |u, _| u as u32 % c);
        let pm = ParamMap::from_fn(10, 3, |_, _| Some([0.1, -0.2, 0.9, 1.3]));
        let l = loss_stretch(&pm, &seg, 20.0).unwrap();
        assert_eq!(l.value, -1.0 / c as f64, "C = {c}");
    }
}

#[test]
fn coincident_centers_cost_the_margin() {
    let seg = SegmentationMap::from_fn(6, 6, |u, _| u32::from(u >= 3));
    let pm = ParamMap::from_fn(6, 6, |_, _| Some([0.0, 0.0, 1.0, 1.0]));
    let cfg = LossConfig::default();
    let d = loss_discriminative(&pm, &seg, &cfg).unwrap();
    assert_eq!(d.var.value, 0.0);
    assert!((d.dist.value - cfg.delta_d).abs() < 1e-15);
}

fn random_case(seed: u64) -> (ParamMap, ParamMap, SegmentationMap, DepthMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (9, 7);
    let seg = SegmentationMap::from_fn(w, h, |u, v| ((u * 3 / w) + 3 * (v * 2 / h)) as u32 % 4);
    let centers: Vec<[f64; 4]> = (0..4)
        .map(|_| [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 1.0, rng.random_range(0.5..1.5)])
        .collect();
    let target = piecewise(&seg, &centers);
    let pred = common::perturb(&target, 0.05, &mut rng);
    let depth = DepthMap::from_fn(w, h, |u, v| {
        let c = centers[seg.get(u, v) as usize];
        Some(1.0 / unit_inv(c, u, v, w.max(h) as f64))
    });
    (pred, target, seg, depth)
}

#[test]
fn perfect_prediction_costs_nothing() {
    let (_, target, seg, depth) = random_case(1);
    let b = loss_total_3d(&target, &target, &seg, &depth, &LossConfig::default()).unwrap();
    assert!(b.total.abs() < 1e-12, "{b:?}");
}

#[test]
fn totals_are_weighted_sums() {
    let cfg = LossConfig { alpha: 0.7, beta: 1.9, eta: 0.3, theta: 2.5, ..LossConfig::default() };
    for seed in 0..20 {
        let (pred, target, seg, depth) = random_case(seed);
        let b3 = loss_total_3d(&pred, &target, &seg, &depth, &cfg).unwrap();
        let want = b3.l_p.unwrap() + cfg.alpha * b3.l_var.unwrap() + cfg.beta * b3.l_z.unwrap();
        assert!((b3.total - want).abs() <= 1e-12);
        let b2 = loss_total_2d(&pred, &seg, &cfg).unwrap();
        let want = b2.l_var.unwrap() + b2.l_dist.unwrap() + cfg.eta * b2.l_z.unwrap() + cfg.theta * b2.l_s.unwrap();
        assert!((b2.total - want).abs() <= 1e-12);
        assert!(b2.l_var.unwrap() >= 0.0 && b2.l_dist.unwrap() >= 0.0 && b2.l_z.unwrap() >= 0.0);
    }
}

#[test]
fn relabeling_surfaces_changes_no_loss() {
    let cfg = LossConfig::default();
    let perm = [2u32, 0, 3, 1];
    for seed in 0..10 {
        let (pred, target, seg, depth) = random_case(seed);
        let relabeled = seg.map_labels(|l| perm[l as usize]);
        let a = loss_total_2d(&pred, &seg, &cfg).unwrap();
        let b = loss_total_2d(&pred, &relabeled, &cfg).unwrap();
        for (x, y) in [(a.total, b.total), (a.l_var.unwrap(), b.l_var.unwrap()), (a.l_dist.unwrap(), b.l_dist.unwrap())]
            .into_iter()
            .chain([(a.l_z.unwrap(), b.l_z.unwrap()), (a.l_s.unwrap(), b.l_s.unwrap())])
        {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "seed {seed}: {x} vs {y}");
        }
        let a = loss_total_3d(&pred, &target, &seg, &depth, &cfg).unwrap();
        let b = loss_total_3d(&pred, &target, &relabeled, &depth, &cfg).unwrap();
        assert!((a.total - b.total).abs() <= 1e-12 * a.total.abs().max(1.0));
    }
}

#[test]
fn optimizer_trace_never_increases() {
    let cfg = LossConfig::default();
    for seed in 0..5 {
        let (pred, target, seg, depth) = random_case(seed);
        let sup = Supervision { seg: &seg, params: Some(&target), depth: Some(&depth) };
        for mode in [Mode::TwoD, Mode::ThreeD] {
            let (_, trace) = optimize_param_map(&pred, &sup, mode, &cfg, 30, 1.0).unwrap();
            assert_eq!(trace.len(), 31);
            assert!(trace.windows(2).all(|w| w[1] <= w[0]), "{mode:?} {trace:?}");
        }
        let (same, trace) = optimize_param_map(&pred, &sup, Mode::ThreeD, &cfg, 0, 1.0).unwrap();
        assert_eq!(same, pred);
        assert_eq!(trace.len(), 1);
    }
}

#[test]
fn three_d_needs_full_supervision() {
    let (pred, _, seg, _) = random_case(0);
    let sup = Supervision { seg: &seg, params: None, depth: None };
    assert!(matches!(
        optimize_param_map(&pred, &sup, Mode::ThreeD, &LossConfig::default(), 1, 1.0),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn overflowing_loss_aborts_with_trace() {
    let seg = SegmentationMap::filled(2, 1, 0);
    let pm =
        ParamMap::from_fn(2, 1, |u, _| Some(if u == 0 { [1e200, 0.0, 1.0, 1.0] } else { [-1e200, 0.0, 1.0, 1.0] }));
    let sup = Supervision { seg: &seg, params: None, depth: None };
    match optimize_param_map(&pm, &sup, Mode::TwoD, &LossConfig::default(), 5, 1.0) {
        Err(Error::NonFiniteLoss { step, trace }) => {
            assert_eq!(step, 0);
            assert_eq!(trace.len(), 1);
        }
        other => panic!("expected NonFiniteLoss, got {other:?}"),
    }
}

mod common;

use std::collections::BTreeSet;

use common::{gaussian, perturb, same_up_to_permutation};
use geolayout::{
    cluster_param_map, generate_cuboid, mean_shift, render_scene, CameraIntrinsics, ClusterConfig, Error, ParamMap,
    SegmentationMap, SurfaceParams,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blobs(centers: &[[f64; 4]], per: usize, spread: f64, seed: u64) -> Vec<[f64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    centers
        .iter()
        .flat_map(|c| (0..per).map(|_| c.map(|x| x + spread * gaussian(&mut rng))).collect::<Vec<_>>())
        .collect()
}

fn mean(points: &[[f64; 4]]) -> [f64; 4] {
    let mut m = [0.0; 4];
    for p in points {
        for k in 0..4 {
            m[k] += p[k] / points.len() as f64;
        }
    }
    m
}

#[test]
fn three_separated_groups() {
    let centers = [[0.0, 0.0, 1.0, 1.0], [1.0, 0.0, 0.0, 1.0], [0.0, 1.0, 0.0, 1.5]];
    let points = blobs(&centers, 100, 0.01, 4);
    let modes = mean_shift(&points, 0.3);
    assert_eq!(modes.len(), 3);
    for m in &modes {
        assert_eq!(m.members.len(), 100);
        let group = m.members[0] / 100;
        assert!(m.members.iter().all(|&i| i / 100 == group));
        let truth = mean(&points[group * 100..group * 100 + 100]);
        assert!(common::dist(m.center, truth) < 0.01);
    }
}

#[test]
fn isolated_point_is_its_own_mode() {
    let mut points = vec![[0.2, 0.1, 0.9, 1.0]; 50];
    points.push([0.2, 0.1, 0.9, 1.0 + 10.0 * 0.3]);
    let modes = mean_shift(&points, 0.3);
    assert_eq!(modes.len(), 2);
    assert!(modes.iter().any(|m| m.members == vec![50]));
}

fn mode_sets(modes: &[geolayout::cluster::Mode], back: &[usize]) -> Vec<(BTreeSet<usize>, [f64; 4])> {
    let mut out: Vec<_> =
        modes.iter().map(|m| (m.members.iter().map(|&i| back[i]).collect::<BTreeSet<_>>(), m.center)).collect();
    out.sort_by_key(|(s, _)| *s.iter().next().unwrap());
    out
}

#[test]
fn shuffling_points_keeps_modes_and_members() {
    let centers = [[0.0, 0.0, 1.0, 1.0], [0.7, 0.0, 0.7, 0.5], [0.0, 0.6, 0.8, 2.0], [0.0, 0.0, -1.0, 1.0]];
    let points = blobs(&centers, 60, 0.03, 8);
    let identity: Vec<usize> = (0..points.len()).collect();
    let reference = mode_sets(&mean_shift(&points, 0.3), &identity);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let mut order = identity.clone();
        order.shuffle(&mut rng);
        let shuffled: Vec<_> = order.iter().map(|&i| points[i]).collect();
        let got = mode_sets(&mean_shift(&shuffled, 0.3), &order);
        assert_eq!(got.len(), reference.len());
        for ((a, ca), (b, cb)) in got.iter().zip(&reference) {
            assert_eq!(a, b);
            assert!(common::dist(*ca, *cb) < 1e-9);
        }
    }
}

#[test]
fn mode_count_shrinks_with_bandwidth() {
    let centers =
        [[0.0, 0.0, 1.0, 1.0], [0.15, 0.0, 1.0, 1.0], [0.6, 0.0, 1.0, 1.0], [0.6, 0.5, 1.0, 1.2], [1.8, 0.5, 0.0, 1.2]];
    let points = blobs(&centers, 40, 0.02, 12);
    let ladder = [0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.2, 2.0, 4.0];
    let counts: Vec<usize> = ladder.iter().map(|&h| mean_shift(&points, h).len()).collect();
    assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
    assert_eq!(*counts.last().unwrap(), 1);
}

fn cam() -> CameraIntrinsics {
    CameraIntrinsics::centered(64, 48, 70.0).unwrap()
}

#[test]
fn noiseless_cuboid_clusters_to_its_surfaces() {
    for seed in 0..10 {
        let spec = generate_cuboid(seed, cam()).unwrap();
        let render = render_scene(&spec).unwrap();
        let set = cluster_param_map(&render.params, &ClusterConfig::default()).unwrap();
        assert_eq!(set.instances.len(), spec.surfaces.len(), "seed {seed}");
        assert!(same_up_to_permutation(set.seg.labels(), render.seg.labels()));
        assert_eq!(set.seg.sentinel_count(), 0);
        for inst in &set.instances {
            let i = set.seg.labels().iter().position(|&l| l == inst.id).unwrap();
            let truth = spec.surfaces[render.seg.labels()[i] as usize].params;
            assert!(inst.params.max_abs_diff(&truth) < 1e-6, "seed {seed}");
        }
        let total: usize = set.instances.iter().map(|i| i.pixels).sum();
        assert_eq!(total, 64 * 48);
    }
}

#[test]
fn piecewise_constant_maps_are_reproduced() {
    let consts = [[0.3, -0.2, 0.932_737_905_308_881_5, 0.8], [0.0, 0.0, 1.0, 2.0]];
    let pm = ParamMap::from_fn(20, 20, |u, _| Some(if u < 8 { consts[0] } else { consts[1] }));
    let set = cluster_param_map(&pm, &ClusterConfig::default()).unwrap();
    assert_eq!(set.instances.len(), 2);
    assert_eq!(set.seg.sentinel_count(), 0);
    for inst in &set.instances {
        let want = if inst.pixels == 160 { consts[0] } else { consts[1] };
        for k in 0..4 {
            assert!((inst.channels[k] - want[k]).abs() < 1e-9);
        }
    }
}

#[test]
fn noisy_two_surface_map() {
    let a = [0.0, 0.0, 1.0, 1.0];
    let b = [0.0, 0.8, 0.6, 0.7];
    let pm = ParamMap::from_fn(40, 30, |_, v| Some(if v < 12 { a } else { b }));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noisy = perturb(&pm, 0.01, &mut rng);
    let set = cluster_param_map(&noisy, &ClusterConfig::default()).unwrap();
    assert_eq!(set.instances.len(), 2);
    for inst in &set.instances {
        let want = if inst.channels[1] < 0.4 { a } else { b };
        let got = SurfaceParams::from_channels(inst.channels).unwrap();
        assert!(got.max_abs_diff(&SurfaceParams::from_channels(want).unwrap()) < 0.01, "{:?}", inst.channels);
    }
    let truth = SegmentationMap::from_fn(40, 30, |_, v| u32::from(v >= 12));
    assert!(same_up_to_permutation(set.seg.labels(), truth.labels()));
}

#[test]
fn uniform_garbage_is_mostly_unassigned() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pm = ParamMap::from_fn(30, 30, |_, _| {
        Some([
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(0.1..10.0),
        ])
    });
    match cluster_param_map(&pm, &ClusterConfig::default()) {
        Err(Error::NoInstances) => {}
        Ok(set) => assert!(set.seg.sentinel_count() * 2 > 900, "{} unassigned", set.seg.sentinel_count()),
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn empty_map_has_no_instances() {
    assert!(cluster_param_map(&ParamMap::invalid(5, 5), &ClusterConfig::default()).is_err());
}

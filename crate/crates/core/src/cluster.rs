//! Surface instances from a pixel-level parameter map by flat-kernel mean
//! shift in the 4-D `(p, q, r, s)` space.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SurfaceParams;
use crate::raster::{ParamMap, SegmentationMap};

const SHIFT_TOL: f64 = 1e-5;
const MAX_SHIFT_ITERS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Flat-kernel radius in the normalized parameter space.
    pub bandwidth: f64,
    /// Clusters covering less than this fraction of the valid pixels are
    /// dropped.
    pub min_fraction: f64,
    /// Upper bound on the number of pixels that seed and support the mean
    /// shift; all pixels are assigned afterwards.
    pub max_seeds: usize,
    /// Seed of the pixel subsampling.
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { bandwidth: 0.3, min_fraction: 0.01, max_seeds: 2000, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mode {
    pub center: [f64; 4],
    pub members: Vec<usize>,
}

#[inline]
fn dist2(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    (0..4).map(|k| (a[k] - b[k]).powi(2)).sum()
}

fn nearest(modes: &[[f64; 4]], x: &[f64; 4]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, m) in modes.iter().enumerate() {
        let d = dist2(m, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Converged position of one seed under the flat kernel.
fn climb(points: &[[f64; 4]], mut x: [f64; 4], bandwidth: f64) -> [f64; 4] {
    let h2 = bandwidth * bandwidth;
    for _ in 0..MAX_SHIFT_ITERS {
        let mut sum = [0.0; 4];
        let mut n = 0usize;
        for p in points {
            if dist2(p, &x) <= h2 {
                for k in 0..4 {
                    sum[k] += p[k];
                }
                n += 1;
            }
        }
        if n == 0 {
            break;
        }
        let next = sum.map(|s| s / n as f64);
        let shift = dist2(&next, &x).sqrt();
        x = next;
        if shift < SHIFT_TOL {
            break;
        }
    }
    x
}

/// Modes of `points` and the surviving modes after merging; used both by
/// [`mean_shift`] and by the subsampled map clustering.
fn find_modes(points: &[[f64; 4]], bandwidth: f64) -> Vec<[f64; 4]> {
    let converged: Vec<[f64; 4]> = points.par_iter().map(|p| climb(points, *p, bandwidth)).collect();
    let h2 = bandwidth * bandwidth;
    let mut ranked: Vec<([f64; 4], usize)> =
        converged.into_par_iter().map(|m| (m, points.iter().filter(|p| dist2(p, &m) <= h2).count())).collect();
    ranked.sort_by(|a, b| {
        b.1.cmp(&a.1).then_with(|| {
            (0..4).map(|k| a.0[k].total_cmp(&b.0[k])).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let merge2 = (bandwidth / 2.0).powi(2);
    let mut kept: Vec<[f64; 4]> = Vec::new();
    for (m, _) in ranked {
        if kept.iter().all(|k| dist2(k, &m) > merge2) {
            kept.push(m);
        }
    }
    kept
}

/// Flat-kernel mean shift: every point climbs to a density mode (shift
/// below 1e-5 or 100 iterations), modes closer than `bandwidth / 2` are
/// merged in order of decreasing support, and every point joins its nearest
/// surviving mode. Modes without members are dropped.
pub fn mean_shift(points: &[[f64; 4]], bandwidth: f64) -> Vec<Mode> {
    if points.is_empty() || !(bandwidth > 0.0) {
        return Vec::new();
    }
    let centers = find_modes(points, bandwidth);
    let mut modes: Vec<Mode> = centers.into_iter().map(|center| Mode { center, members: Vec::new() }).collect();
    let centers: Vec<[f64; 4]> = modes.iter().map(|m| m.center).collect();
    for (i, p) in points.iter().enumerate() {
        modes[nearest(&centers, p)].members.push(i);
    }
    modes.retain(|m| !m.members.is_empty());
    modes
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: u32,
    /// Pixel-frame parameters.
    pub params: SurfaceParams,
    /// Mean channels in the map's normalized frame, renormalized.
    pub channels: [f64; 4],
    pub pixels: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSet {
    pub instances: Vec<Instance>,
    /// Instance id per pixel; invalid and dropped pixels carry the sentinel.
    pub seg: SegmentationMap,
}

/// Clusters the valid pixels of a parameter map into surface instances.
///
/// Mean shift runs on at most `max_seeds` uniformly sampled pixels; every
/// valid pixel is then assigned to the nearest mode. Clusters below
/// `min_fraction` of the valid pixels are dropped. Instance parameters are
/// the member means with the direction `(p, q, r)` renormalized and `s` the
/// mean scale. Instances are numbered by decreasing size.
pub fn cluster_param_map(pm: &ParamMap, config: &ClusterConfig) -> Result<ClusterSet> {
    if !(config.bandwidth > 0.0) || !(0.0..1.0).contains(&config.min_fraction) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive and min_fraction in [0, 1) (got {}, {})",
            config.bandwidth, config.min_fraction
        )));
    }
    let (width, height) = pm.dims();
    let valid: Vec<usize> = (0..width * height).filter(|&i| pm.mask()[i]).collect();
    if valid.is_empty() {
        return Err(Error::NoInstances);
    }
    let channels = pm.channels();
    let seeds: Vec<[f64; 4]> = if valid.len() <= config.max_seeds.max(1) {
        valid.iter().map(|&i| channels[i]).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut picked = index::sample(&mut rng, valid.len(), config.max_seeds.max(1)).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|k| channels[valid[k]]).collect()
    };
    let modes = find_modes(&seeds, config.bandwidth);

    let assignment: Vec<usize> = valid.par_iter().map(|&i| nearest(&modes, &channels[i])).collect();
    let mut sums = vec![([0.0; 4], 0usize); modes.len()];
    for (&i, &m) in valid.iter().zip(&assignment) {
        for k in 0..4 {
            sums[m].0[k] += channels[i][k];
        }
        sums[m].1 += 1;
    }

    let min_pixels = config.min_fraction * valid.len() as f64;
    let mut order: Vec<usize> = (0..modes.len()).filter(|&m| sums[m].1 > 0 && sums[m].1 as f64 >= min_pixels).collect();
    order.sort_by(|&a, &b| sums[b].1.cmp(&sums[a].1).then(a.cmp(&b)));

    let extent = pm.extent();
    let mut id_of = vec![SegmentationMap::SENTINEL; modes.len()];
    let mut instances = Vec::with_capacity(order.len());
    for m in order {
        let (sum, n) = sums[m];
        let mean = sum.map(|x| x / n as f64);
        let norm = (mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2]).sqrt();
        let Ok(unit) =
            SurfaceParams::from_raw(mean[0] / norm * mean[3], mean[1] / norm * mean[3], mean[2] / norm * mean[3])
        else {
            continue;
        };
        let Ok(params) = unit.from_unit_frame(extent) else {
            continue;
        };
        id_of[m] = instances.len() as u32;
        instances.push(Instance { id: instances.len() as u32, params, channels: unit.to_array(), pixels: n });
    }
    if instances.is_empty() {
        return Err(Error::NoInstances);
    }

    let mut seg = SegmentationMap::filled(width, height, SegmentationMap::SENTINEL);
    for (&i, &m) in valid.iter().zip(&assignment) {
        seg.labels_mut()[i] = id_of[m];
    }
    Ok(ClusterSet { instances, seg })
}

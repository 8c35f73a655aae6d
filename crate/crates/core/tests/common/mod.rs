//! Oracles shared by the integration tests. They deliberately avoid the
//! library routines they check.
#![allow(dead_code)]

use geolayout::{CameraIntrinsics, ParamMap, SegmentationMap, SurfaceParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `(p·u + q·v + r)·s`, written out independently.
pub fn inv_depth(p: &SurfaceParams, u: f64, v: f64) -> f64 {
    (p.p() * u + p.q() * v + p.r()) * p.s()
}

/// Per-pixel argmax of the inverse depths; ties go to the lowest index and
/// pixels without a positive inverse depth get the sentinel.
pub fn brute_force_argmax(params: &[SurfaceParams], width: usize, height: usize) -> Vec<u32> {
    let mut out = Vec::with_capacity(width * height);
    for v in 0..height {
        for u in 0..width {
            let mut best = (SegmentationMap::SENTINEL, 0.0);
            for (i, p) in params.iter().enumerate() {
                let w = inv_depth(p, u as f64, v as f64);
                if w > best.1 {
                    best = (i as u32, w);
                }
            }
            out.push(best.0);
        }
    }
    out
}

/// True when the two label maps agree up to a bijective relabeling.
pub fn same_up_to_permutation(a: &[u32], b: &[u32]) -> bool {
    use std::collections::HashMap;
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| *fwd.entry(*x).or_insert(*y) == *y && *back.entry(*y).or_insert(*x) == *x)
}

pub fn backproject(cam: &CameraIntrinsics, u: f64, v: f64, z: f64) -> [f64; 3] {
    [(u - cam.u0) * z / cam.fx, (v - cam.v0) * z / cam.fy, z]
}

pub fn dist<const N: usize>(a: [f64; N], b: [f64; N]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Matches every ground-truth point to its nearest prediction and checks
/// the matching is one-to-one; returns the matched pairs `(pred, gt)`.
pub fn nearest_bijection<const N: usize>(pred: &[[f64; N]], gt: &[[f64; N]]) -> Option<Vec<(usize, usize)>> {
    if pred.len() != gt.len() {
        return None;
    }
    let mut used = vec![false; pred.len()];
    let mut pairs = Vec::new();
    for (j, g) in gt.iter().enumerate() {
        let i = (0..pred.len()).min_by(|&a, &b| dist(pred[a], *g).total_cmp(&dist(pred[b], *g)))?;
        if used[i] {
            return None;
        }
        used[i] = true;
        pairs.push((i, j));
    }
    Some(pairs)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps the oracle free of the library's noise sampler.
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Adds independent Gaussian noise to every valid channel.
pub fn perturb(pm: &ParamMap, sigma: f64, rng: &mut ChaCha8Rng) -> ParamMap {
    let (w, h) = pm.dims();
    ParamMap::from_fn(w, h, |u, v| pm.get(u, v).map(|c| c.map(|x| x + sigma * gaussian(rng))))
}

/// Central finite-difference gradient of `f` with respect to every valid
/// channel.
pub fn fd_gradient(pm: &ParamMap, step: f64, f: impl Fn(&ParamMap) -> f64) -> Vec<[f64; 4]> {
    let (w, h) = pm.dims();
    let mut grad = vec![[0.0; 4]; w * h];
    for v in 0..h {
        for u in 0..w {
            let Some(ch) = pm.get(u, v) else { continue };
            for k in 0..4 {
                let mut plus = pm.clone();
                let mut minus = pm.clone();
                let mut c = ch;
                c[k] += step;
                plus.set(u, v, Some(c));
                c[k] = ch[k] - step;
                minus.set(u, v, Some(c));
                grad[v * w + u][k] = (f(&plus) - f(&minus)) / (2.0 * step);
            }
        }
    }
    grad
}

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖)`; zero when both vanish.
pub fn relative_error(a: &[[f64; 4]], b: &[[f64; 4]]) -> f64 {
    let sq = |x: &[[f64; 4]]| x.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let diff: f64 = a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = sq(a).max(sq(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

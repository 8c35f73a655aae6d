//! Surface parameters from depth samples: closed-form least squares on
//! inverse depth, RANSAC around it, and fitting of annotated regions.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SurfaceParams;
use crate::polygon::{self, Point2};
use crate::raster::DepthMap;

/// Largest accepted condition number of the (standardized) normal equations.
const MAX_CONDITION: f64 = 1e10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Semantic {
    Floor,
    Ceiling,
    Wall,
}

/// Polygon drawn over the visible part of one surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionAnnotation {
    pub id: u32,
    pub semantic: Semantic,
    /// Vertices `[u, v]` in pixels.
    pub polygon: Vec<[f64; 2]>,
}

impl RegionAnnotation {
    fn points(&self) -> Vec<Point2> {
        self.polygon.iter().map(|p| (p[0], p[1])).collect()
    }

    /// Requires at least three vertices, a simple polygon, and vertices
    /// within the raster rectangle.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidAnnotation { id: self.id, reason: reason.to_string() };
        if self.polygon.len() < 3 {
            return Err(invalid("fewer than 3 vertices"));
        }
        if !polygon::is_simple(&self.points()) {
            return Err(invalid("polygon is not simple"));
        }
        let (wf, hf) = (width as f64, height as f64);
        if self.polygon.iter().any(|p| !(-0.5..=wf - 0.5).contains(&p[0]) || !(-0.5..=hf - 0.5).contains(&p[1])) {
            return Err(invalid("vertex outside the raster"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Annotation id when the fit comes from [`fit_annotated`].
    pub region: Option<u32>,
    pub params: SurfaceParams,
    pub inliers: usize,
    pub inlier_ratio: f64,
    /// Root mean square of `|p̂u + q̂v + r̂ − 1/Z|` over the inliers (1/m).
    pub rms_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    pub iters: usize,
    /// Inlier threshold on the inverse-depth residual (1/m).
    pub inlier_tol: f64,
    /// Minimum accepted inlier ratio.
    pub min_inlier_ratio: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { iters: 500, inlier_tol: 1e-3, min_inlier_ratio: 0.5, seed: 0 }
    }
}

fn check_samples(samples: &[(f64, f64, f64)]) -> Result<()> {
    if let Some(s) = samples.iter().find(|s| !(s.0.is_finite() && s.1.is_finite() && s.2.is_finite() && s.2 > 0.0)) {
        return Err(Error::InvalidArgument(format!("sample {s:?} needs finite coordinates and Z > 0")));
    }
    Ok(())
}

/// Raw coefficients `(p̂, q̂, r̂)` minimizing `Σ (p̂u + q̂v + r̂ − 1/Z)²`.
/// Coordinates are standardized before forming the normal equations so the
/// condition number reflects the geometry of the samples, not their units.
fn lsq_raw(samples: &[(f64, f64, f64)]) -> Result<[f64; 3]> {
    let n = samples.len() as f64;
    if samples.len() < 3 {
        return Err(Error::DegenerateConfiguration { cond: f64::INFINITY });
    }
    let mu = samples.iter().fold((0.0, 0.0), |a, s| (a.0 + s.0 / n, a.1 + s.1 / n));
    let var = samples.iter().fold((0.0, 0.0), |a, s| (a.0 + (s.0 - mu.0).powi(2) / n, a.1 + (s.1 - mu.1).powi(2) / n));
    let sd = (var.0.sqrt(), var.1.sqrt());
    if sd.0 == 0.0 || sd.1 == 0.0 {
        return Err(Error::DegenerateConfiguration { cond: f64::INFINITY });
    }

    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for &(u, v, z) in samples {
        let row = Vector3::new(1.0, (u - mu.0) / sd.0, (v - mu.1) / sd.1);
        ata += row * row.transpose();
        atb += row * (1.0 / z);
    }
    let eig = SymmetricEigen::new(ata).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::DegenerateConfiguration { cond });
    }
    let c = ata.cholesky().ok_or(Error::DegenerateConfiguration { cond })?.solve(&atb);
    let (pu, qv) = (c[1] / sd.0, c[2] / sd.1);
    Ok([pu, qv, c[0] - pu * mu.0 - qv * mu.1])
}

/// Closed-form least-squares surface through `(u, v, Z)` samples.
pub fn lsq_fit(samples: &[(f64, f64, f64)]) -> Result<SurfaceParams> {
    check_samples(samples)?;
    let [p, q, r] = lsq_raw(samples)?;
    SurfaceParams::from_raw(p, q, r)
}

/// Exact surface through three samples, if they are not collinear.
fn three_point(a: (f64, f64, f64), b: (f64, f64, f64), c: (f64, f64, f64)) -> Option<[f64; 3]> {
    let m = Matrix3::new(a.0, a.1, 1.0, b.0, b.1, 1.0, c.0, c.1, 1.0);
    let sol = m.lu().solve(&Vector3::new(1.0 / a.2, 1.0 / b.2, 1.0 / c.2))?;
    sol.iter().all(|x| x.is_finite()).then(|| [sol[0], sol[1], sol[2]])
}

fn residual(raw: &[f64; 3], s: &(f64, f64, f64)) -> f64 {
    (raw[0] * s.0 + raw[1] * s.1 + raw[2] - 1.0 / s.2).abs()
}

/// Three-point hypothesize-and-verify on the inverse-depth model followed by
/// a least-squares refit on the best consensus set. Deterministic per seed.
pub fn ransac_fit(samples: &[(f64, f64, f64)], config: &RansacConfig) -> Result<FitResult> {
    check_samples(samples)?;
    if samples.len() < 3 {
        return Err(Error::InvalidArgument(format!("RANSAC needs at least 3 samples, got {}", samples.len())));
    }
    if config.iters == 0 || !(config.inlier_tol > 0.0) {
        return Err(Error::InvalidArgument("RANSAC needs iters >= 1 and inlier_tol > 0".into()));
    }
    let n = samples.len();
    let count = |raw: &[f64; 3]| samples.iter().filter(|s| residual(raw, s) <= config.inlier_tol).count();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<([f64; 3], usize)> = None;
    for _ in 0..config.iters {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.random_range(0..n - 2);
        for taken in [i.min(j), i.max(j)] {
            if k >= taken {
                k += 1;
            }
        }
        let Some(raw) = three_point(samples[i], samples[j], samples[k]) else {
            continue;
        };
        let c = count(&raw);
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((raw, c));
            if c == n {
                break;
            }
        }
    }

    let (hypothesis, support) = best.unwrap_or(([0.0; 3], 0));
    let ratio = support as f64 / n as f64;
    if ratio < config.min_inlier_ratio || support < 3 {
        return Err(Error::NoConsensus { ratio, floor: config.min_inlier_ratio });
    }

    let consensus: Vec<_> = samples.iter().copied().filter(|s| residual(&hypothesis, s) <= config.inlier_tol).collect();
    let mut raw = lsq_raw(&consensus)?;
    // The refit may shift the consensus; keep whichever model explains more.
    if count(&raw) < support {
        raw = hypothesis;
    }
    let inliers: Vec<f64> = samples.iter().map(|s| residual(&raw, s)).filter(|r| *r <= config.inlier_tol).collect();
    let rms = (inliers.iter().map(|r| r * r).sum::<f64>() / inliers.len().max(1) as f64).sqrt();
    Ok(FitResult {
        region: None,
        params: SurfaceParams::from_raw(raw[0], raw[1], raw[2])?,
        inliers: inliers.len(),
        inlier_ratio: inliers.len() as f64 / n as f64,
        rms_residual: rms,
    })
}

/// Root mean square residual of `params` over all samples.
pub fn rms_residual(params: &SurfaceParams, samples: &[(f64, f64, f64)]) -> f64 {
    let raw = params.raw().to_array();
    (samples.iter().map(|s| residual(&raw, s).powi(2)).sum::<f64>() / samples.len().max(1) as f64).sqrt()
}

/// Valid depth samples at the pixel centers inside an annotation.
pub fn region_samples(depth: &DepthMap, annotation: &RegionAnnotation) -> Vec<(f64, f64, f64)> {
    let (width, height) = depth.dims();
    polygon::rasterize(&annotation.points(), width, height)
        .into_iter()
        .filter_map(|i| depth.get_index(i).map(|z| ((i % width) as f64, (i / width) as f64, z)))
        .collect()
}

/// Fits every annotated region with RANSAC; results are ordered by region id.
/// Region `id` uses the RANSAC seed `config.seed + id`.
pub fn fit_annotated(
    depth: &DepthMap,
    annotations: &[RegionAnnotation],
    config: &RansacConfig,
) -> Result<Vec<FitResult>> {
    let (width, height) = depth.dims();
    for a in annotations {
        a.validate(width, height)?;
    }
    let mut order: Vec<&RegionAnnotation> = annotations.iter().collect();
    order.sort_by_key(|a| a.id);
    order
        .par_iter()
        .map(|a| {
            let samples = region_samples(depth, a);
            if samples.len() < 3 {
                return Err(Error::EmptyRegion { id: a.id, valid: samples.len() });
            }
            let cfg = RansacConfig { seed: config.seed.wrapping_add(a.id as u64), ..config.clone() };
            let mut fit = ransac_fit(&samples, &cfg)?;
            fit.region = Some(a.id);
            Ok(fit)
        })
        .collect()
}

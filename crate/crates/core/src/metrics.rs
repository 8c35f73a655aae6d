//! Layout evaluation: segmentation error, 2D and 3D corner errors and the
//! usual monocular depth metrics.

use serde::{Deserialize, Serialize};

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::layout::Corner;
use crate::raster::{ensure_same_shape, DepthMap, SegmentationMap};

/// Percentage of mislabeled pixels under the best one-to-one matching of
/// predicted to ground-truth labels. Pixels without a ground-truth label are
/// ignored; unlabeled predictions always count as errors.
pub fn pixel_error(pred: &SegmentationMap, gt: &SegmentationMap) -> Result<f64> {
    pixel_error_with(pred, gt, false)
}

/// [`pixel_error`]; with `identity` set, labels are compared as they are
/// (datasets with fixed semantic labels).
pub fn pixel_error_with(pred: &SegmentationMap, gt: &SegmentationMap, identity: bool) -> Result<f64> {
    ensure_same_shape(pred.dims(), gt.dims())?;
    let pairs = pred.labels().iter().zip(gt.labels()).filter(|(_, g)| **g != SegmentationMap::SENTINEL);
    let evaluated = gt.labels().len() - gt.sentinel_count();
    if evaluated == 0 {
        return Ok(0.0);
    }
    let correct = if identity {
        pairs.filter(|(p, g)| p == g).count()
    } else {
        let pl = pred.distinct_labels();
        let gl = gt.distinct_labels();
        let mut confusion = vec![vec![0.0; gl.len()]; pl.len()];
        for (p, g) in pairs {
            if let (Ok(i), Ok(j)) = (pl.binary_search(p), gl.binary_search(g)) {
                confusion[i][j] += 1.0;
            }
        }
        let cost: Vec<Vec<f64>> = confusion.iter().map(|row| row.iter().map(|c| -c).collect()).collect();
        let matching = min_cost_assignment(&cost);
        matching.iter().enumerate().filter_map(|(i, j)| j.map(|j| confusion[i][j] as usize)).sum()
    };
    Ok(100.0 * (evaluated - correct) as f64 / evaluated as f64)
}

fn match_points<const N: usize>(pred: &[[f64; N]], gt: &[[f64; N]]) -> Vec<(usize, usize, f64)> {
    let dist = |a: &[f64; N], b: &[f64; N]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let cost: Vec<Vec<f64>> = pred.iter().map(|p| gt.iter().map(|g| dist(p, g)).collect()).collect();
    min_cost_assignment(&cost).into_iter().enumerate().filter_map(|(i, j)| j.map(|j| (i, j, cost[i][j]))).collect()
}

/// Corner location error in percent of the image diagonal: optimal
/// one-to-one matching, unmatched corners (on either side) cost one
/// diagonal, averaged over the ground-truth corners.
pub fn corner_error_2d(pred: &[Corner], gt: &[Corner], width: usize, height: usize) -> f64 {
    let diag = (width as f64).hypot(height as f64);
    let to_pt = |c: &Corner| [c.u, c.v];
    let p: Vec<[f64; 2]> = pred.iter().map(to_pt).collect();
    let g: Vec<[f64; 2]> = gt.iter().map(to_pt).collect();
    let matched = match_points(&p, &g);
    let unmatched = pred.len().abs_diff(gt.len());
    let total = matched.iter().map(|m| m.2).sum::<f64>() + diag * unmatched as f64;
    100.0 * total / gt.len().max(1) as f64 / diag
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerError3d {
    /// Mean distance (m) over matched corners; `None` when nothing matched.
    pub mean: Option<f64>,
    pub distance_sum: f64,
    pub matched: usize,
    pub unmatched: usize,
}

/// Mean camera-frame distance between optimally matched back-projected
/// corners. Unmatched corners are counted but excluded from the mean.
pub fn corner_error_3d(pred: &[Corner], gt: &[Corner], cam: &CameraIntrinsics) -> CornerError3d {
    let p: Vec<[f64; 3]> = pred.iter().map(|c| c.to_3d(cam)).collect();
    let g: Vec<[f64; 3]> = gt.iter().map(|c| c.to_3d(cam)).collect();
    let matched = match_points(&p, &g);
    let sum: f64 = matched.iter().map(|m| m.2).sum();
    CornerError3d {
        mean: (!matched.is_empty()).then(|| sum / matched.len() as f64),
        distance_sum: sum,
        matched: matched.len(),
        unmatched: pred.len().abs_diff(gt.len()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub rms: f64,
    pub rel: f64,
    pub log10: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

/// Depth metrics over pixels valid in both maps; `δ_j` counts ratios
/// strictly below `1.25^j`.
pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap) -> Result<DepthMetrics> {
    ensure_same_shape(pred.dims(), gt.dims())?;
    let (mut n, mut sq, mut rel, mut lg) = (0usize, 0.0, 0.0, 0.0);
    let mut within = [0usize; 3];
    for i in 0..pred.values().len() {
        let (Some(z), Some(t)) = (pred.get_index(i), gt.get_index(i)) else {
            continue;
        };
        n += 1;
        sq += (z - t).powi(2);
        rel += (z - t).abs() / t;
        lg += (z.log10() - t.log10()).abs();
        let ratio = (z / t).max(t / z);
        for (j, w) in within.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(j as i32 + 1) {
                *w += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyOverlap);
    }
    let nf = n as f64;
    Ok(DepthMetrics {
        rms: (sq / nf).sqrt(),
        rel: rel / nf,
        log10: lg / nf,
        delta1: within[0] as f64 / nf,
        delta2: within[1] as f64 / nf,
        delta3: within[2] as f64 / nf,
    })
}

/// Metrics of one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub e_pix: f64,
    pub e_cor: f64,
    pub e_3d_cor: Option<f64>,
    pub corners_3d: Option<CornerError3d>,
    pub depth: Option<DepthMetrics>,
}

/// Prediction or ground truth of one image.
#[derive(Clone, Copy, Debug)]
pub struct LayoutView<'a> {
    pub seg: &'a SegmentationMap,
    pub depth: Option<&'a DepthMap>,
    pub corners: &'a [Corner],
}

/// Evaluates a prediction; 3D corner errors need intrinsics and depth
/// metrics need both depth maps.
pub fn evaluate(pred: &LayoutView, gt: &LayoutView, cam: Option<&CameraIntrinsics>) -> Result<MetricReport> {
    let (width, height) = gt.seg.dims();
    let corners_3d = cam.map(|cam| corner_error_3d(pred.corners, gt.corners, cam));
    let depth = match (pred.depth, gt.depth) {
        (Some(p), Some(g)) => Some(depth_metrics(p, g)?),
        _ => None,
    };
    Ok(MetricReport {
        e_pix: pixel_error(pred.seg, gt.seg)?,
        e_cor: corner_error_2d(pred.corners, gt.corners, width, height),
        e_3d_cor: corners_3d.as_ref().and_then(|c| c.mean),
        corners_3d,
        depth,
    })
}

/// Batch summary: per-image means and the per-corner 3D error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub images: usize,
    pub e_pix: f64,
    pub e_cor: f64,
    /// Mean over images of the per-image mean 3D corner error.
    pub e_3d_cor_per_image: Option<f64>,
    /// Mean over all matched corners.
    pub e_3d_cor_per_corner: Option<f64>,
    pub depth: Option<DepthMetrics>,
}

pub fn aggregate(reports: &[MetricReport]) -> AggregateReport {
    let n = reports.len().max(1) as f64;
    let mean_of = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let per_image = mean_of(reports.iter().filter_map(|r| r.e_3d_cor).collect());
    let (sum, count) = reports
        .iter()
        .filter_map(|r| r.corners_3d.as_ref())
        .fold((0.0, 0usize), |a, c| (a.0 + c.distance_sum, a.1 + c.matched));
    let depths: Vec<&DepthMetrics> = reports.iter().filter_map(|r| r.depth.as_ref()).collect();
    let depth = (!depths.is_empty()).then(|| {
        let m = depths.len() as f64;
        let avg = |f: fn(&DepthMetrics) -> f64| depths.iter().map(|d| f(d)).sum::<f64>() / m;
        DepthMetrics {
            rms: avg(|d| d.rms),
            rel: avg(|d| d.rel),
            log10: avg(|d| d.log10),
            delta1: avg(|d| d.delta1),
            delta2: avg(|d| d.delta2),
            delta3: avg(|d| d.delta3),
        }
    });
    AggregateReport {
        images: reports.len(),
        e_pix: reports.iter().map(|r| r.e_pix).sum::<f64>() / n,
        e_cor: reports.iter().map(|r| r.e_cor).sum::<f64>() / n,
        e_3d_cor_per_image: per_image,
        e_3d_cor_per_corner: (count > 0).then(|| sum / count as f64),
        depth,
    }
}

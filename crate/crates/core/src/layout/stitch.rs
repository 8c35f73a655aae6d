use rayon::prelude::*;

use crate::geometry::SurfaceParams;
use crate::raster::{DepthMap, SegmentationMap};

/// Per-pixel nearest surface: the label maximizing inverse depth, with the
/// corresponding depth. Pixels where no surface has positive inverse depth
/// get the sentinel label and an invalid depth. Ties go to the lowest id.
pub fn stitch_min_depth(instances: &[SurfaceParams], width: usize, height: usize) -> (SegmentationMap, DepthMap) {
    let rows: Vec<Vec<(u32, f64)>> = (0..height)
        .into_par_iter()
        .map(|v| {
            (0..width)
                .map(|u| {
                    let mut best = (SegmentationMap::SENTINEL, 0.0);
                    for (id, params) in instances.iter().enumerate() {
                        let w = params.inverse_depth_at(u as f64, v as f64);
                        if w > best.1 {
                            best = (id as u32, w);
                        }
                    }
                    best
                })
                .collect()
        })
        .collect();

    let mut seg = SegmentationMap::filled(width, height, SegmentationMap::SENTINEL);
    let mut depth = DepthMap::invalid(width, height);
    for (v, row) in rows.into_iter().enumerate() {
        for (u, (label, w)) in row.into_iter().enumerate() {
            if label != SegmentationMap::SENTINEL {
                seg.set(u, v, label);
                depth.set(u, v, Some(1.0 / w));
            }
        }
    }
    (seg, depth)
}

/// Depth of each pixel's labeled surface; sentinel pixels and labels with
/// non-positive inverse depth are invalid.
pub fn depth_from_labels(instances: &[SurfaceParams], seg: &SegmentationMap) -> DepthMap {
    let (width, height) = seg.dims();
    DepthMap::from_fn(width, height, |u, v| {
        let label = seg.get(u, v);
        let params = instances.get(label as usize)?;
        let w = params.inverse_depth_at(u as f64, v as f64);
        (w > 0.0).then(|| 1.0 / w)
    })
}

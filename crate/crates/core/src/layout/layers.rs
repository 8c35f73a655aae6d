use crate::geometry::SurfaceParams;
use crate::raster::SegmentationMap;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerResolution {
    pub seg: SegmentationMap,
    /// Pixels where the clustered label is not among the surfaces in front
    /// of the camera; they keep the nearest surface.
    pub fallback_pixels: usize,
}

/// [`resolve_layers_with`] ignoring clustered regions below 1% of the
/// labeled pixels.
pub fn resolve_layers(instances: &[SurfaceParams], clustered_seg: &SegmentationMap) -> LayerResolution {
    resolve_layers_with(instances, clustered_seg, 0.01)
}

/// Layer-wise consistency between depth ordering and a clustered
/// segmentation.
///
/// Every pixel sorts the surfaces in front of it by increasing depth. The
/// first layer is the min-depth stitch; a pixel whose current label
/// disagrees with the clustered label moves on to the next layer until the
/// two agree. When the layers run out the pixel falls back to the first
/// layer. Connected clustered regions covering less than `min_region_fraction`
/// of the labeled pixels, and sentinel pixels, provide no evidence and keep
/// the first layer. With no evidence at all the result is the min-depth
/// stitch.
pub fn resolve_layers_with(
    instances: &[SurfaceParams],
    clustered_seg: &SegmentationMap,
    min_region_fraction: f64,
) -> LayerResolution {
    let (width, height) = clustered_seg.dims();
    let components = clustered_seg.components();
    let labeled = width * height - clustered_seg.sentinel_count();
    let min_size = min_region_fraction * labeled as f64;

    let mut seg = SegmentationMap::filled(width, height, SegmentationMap::SENTINEL);
    let mut fallback_pixels = 0;
    let mut layers: Vec<(u32, f64)> = Vec::with_capacity(instances.len());
    for v in 0..height {
        for u in 0..width {
            layers.clear();
            for (id, params) in instances.iter().enumerate() {
                let w = params.inverse_depth_at(u as f64, v as f64);
                if w > 0.0 {
                    layers.push((id as u32, w));
                }
            }
            // Stable sort keeps the lowest id first among ties.
            layers.sort_by(|a, b| b.1.total_cmp(&a.1));
            let Some(&(nearest, _)) = layers.first() else {
                continue;
            };

            let i = v * width + u;
            let evidence = match components.ids[i] {
                SegmentationMap::SENTINEL => None,
                c if (components.sizes[c as usize] as f64) < min_size => None,
                _ => Some(clustered_seg.labels()[i]),
            };
            let label = match evidence {
                None => nearest,
                // At most one pass per layer, so the walk always terminates.
                Some(target) => match layers.iter().find(|(id, _)| *id == target) {
                    Some(&(id, _)) => id,
                    None => {
                        fallback_pixels += 1;
                        nearest
                    }
                },
            };
            seg.set(u, v, label);
        }
    }
    LayerResolution { seg, fallback_pixels }
}

//! Layout synthesis from instance-level surface parameters: min-depth
//! stitching, layer-wise consistency with a clustered segmentation, corner
//! extraction and point-cloud export.

mod corners;
mod layers;
mod stitch;

use serde::{Deserialize, Serialize};

use crate::cluster::{cluster_param_map, ClusterConfig};
use crate::error::Result;
use crate::geometry::{CameraIntrinsics, SurfaceParams};
use crate::raster::{DepthMap, ParamMap, SegmentationMap};

pub use corners::{extract_corners, extract_corners_with, Boundary, CornerSet, SkipReason, SkippedCorner};
pub use layers::{resolve_layers, resolve_layers_with, LayerResolution};
pub use stitch::{depth_from_labels, stitch_min_depth};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageEdge {
    Left,
    Right,
    Top,
    Bottom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CornerKind {
    /// Meeting point of three surfaces.
    Interior,
    /// Two surfaces meeting on an image edge.
    Boundary(ImageEdge),
}

/// A layout corner in pixel coordinates with its depth and the (sorted)
/// labels of the surfaces that meet there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corner {
    pub u: f64,
    pub v: f64,
    pub z: f64,
    pub surfaces: Vec<u32>,
    pub kind: CornerKind,
}

impl Corner {
    pub fn to_3d(&self, cam: &CameraIntrinsics) -> [f64; 3] {
        cam.backproject_pixel(self.u, self.v, self.z)
    }
}

/// Sorts corners clockwise on screen around the image center, starting from
/// the direction of the negative `u` axis.
pub fn sort_clockwise(corners: &mut [Corner], width: usize, height: usize) {
    let (cu, cv) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let key = |c: &Corner| (c.v - cv).atan2(c.u - cu);
    corners.sort_by(|a, b| key(a).total_cmp(&key(b)).then(a.u.total_cmp(&b.u)).then(a.v.total_cmp(&b.v)));
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub cluster: ClusterConfig,
    /// Clustered regions smaller than this fraction of the labeled pixels
    /// carry no evidence during layer resolution.
    pub min_region_fraction: f64,
    /// Maximum distance (px) between a corner and the segmentation junction
    /// it explains.
    pub junction_radius: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self { cluster: ClusterConfig::default(), min_region_fraction: 0.01, junction_radius: 2.0 }
    }
}

#[derive(Clone, Debug)]
pub struct LayoutResult {
    pub seg: SegmentationMap,
    pub depth: DepthMap,
    /// Pixel-frame parameters indexed by label.
    pub instances: Vec<SurfaceParams>,
    pub clustered_seg: SegmentationMap,
    pub corners_2d: Vec<Corner>,
    pub corners_3d: Option<Vec<[f64; 3]>>,
    pub boundaries: Vec<Boundary>,
    pub skipped_corners: Vec<SkippedCorner>,
    /// Pixels where no depth layer agreed with the clustered label.
    pub fallback_pixels: usize,
}

impl LayoutResult {
    /// Builds the layout of known instances given a segmentation that carries
    /// the layer evidence (e.g. the clustered segmentation).
    pub fn from_instances(
        instances: Vec<SurfaceParams>,
        clustered_seg: SegmentationMap,
        cam: Option<&CameraIntrinsics>,
        config: &LayoutConfig,
    ) -> Self {
        let resolution = resolve_layers_with(&instances, &clustered_seg, config.min_region_fraction);
        let depth = depth_from_labels(&instances, &resolution.seg);
        let corner_set = extract_corners_with(&instances, &resolution.seg, config.junction_radius);
        let corners_3d = cam.map(|cam| corner_set.corners.iter().map(|c| c.to_3d(cam)).collect());
        Self {
            seg: resolution.seg,
            depth,
            instances,
            clustered_seg,
            corners_2d: corner_set.corners,
            corners_3d,
            boundaries: corner_set.boundaries,
            skipped_corners: corner_set.skipped,
            fallback_pixels: resolution.fallback_pixels,
        }
    }
}

/// Clustering, stitching, layer resolution and corner extraction in one
/// pass. Supplying intrinsics also yields 3D corners.
pub fn full_pipeline(pm: &ParamMap, cam: Option<&CameraIntrinsics>, config: &LayoutConfig) -> Result<LayoutResult> {
    let clusters = cluster_param_map(pm, &config.cluster)?;
    let instances = clusters.instances.iter().map(|i| i.params).collect();
    Ok(LayoutResult::from_instances(instances, clusters.seg, cam, config))
}

/// Camera-frame points of every labeled pixel with their surface label.
pub fn layout_point_cloud(result: &LayoutResult, cam: &CameraIntrinsics) -> Vec<([f64; 3], u32)> {
    let (width, height) = result.depth.dims();
    let mut out = Vec::with_capacity(result.depth.valid_count());
    for v in 0..height {
        for u in 0..width {
            if let Some(z) = result.depth.get(u, v) {
                out.push((cam.backproject_pixel(u as f64, v as f64, z), result.seg.get(u, v)));
            }
        }
    }
    out
}

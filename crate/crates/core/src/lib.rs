//! Room layout estimation from the depth maps of dominant planes.
//!
//! Floors, ceilings and walls are described by intrinsics-free surface
//! parameters whose inverse depth is affine in pixel coordinates. The crate
//! covers the geometry of that parameterization, synthetic ground truth,
//! robust fitting from annotated depth, instance clustering, layout
//! synthesis by stitching plane depth maps, the training objectives with
//! analytic gradients, evaluation metrics, and the on-disk formats.

pub mod assignment;
pub mod cluster;
pub mod config;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod io;
pub mod layout;
pub mod metrics;
pub mod objectives;
pub mod polygon;
pub mod raster;
pub mod synth;

pub use cluster::{cluster_param_map, mean_shift, ClusterConfig, ClusterSet, Instance};
pub use config::Config;
pub use error::{Error, Result};
pub use fit::{fit_annotated, lsq_fit, ransac_fit, FitResult, RansacConfig, RegionAnnotation, Semantic};
pub use geometry::{
    backproject, normalize, params_from_depth, plane_to_surface, render_depth, surface_to_plane, CameraIntrinsics,
    PlaneEq3D, RawSurfaceParams, SurfaceParams,
};
pub use io::{DatasetRecord, DepthFormat, Resample};
pub use layout::{
    extract_corners, full_pipeline, layout_point_cloud, resolve_layers, stitch_min_depth, Corner, CornerKind,
    ImageEdge, LayoutConfig, LayoutResult,
};
pub use metrics::{
    aggregate, corner_error_2d, corner_error_3d, depth_metrics, evaluate, pixel_error, AggregateReport, DepthMetrics,
    MetricReport,
};
pub use objectives::{optimize_param_map, LossBreakdown, LossConfig, Mode, Supervision};
pub use raster::{DepthMap, ParamMap, SegmentationMap};
pub use synth::{
    generate_cuboid, generate_noncuboid, render_scene, LayoutType, PrismRoom, SceneRender, SceneSpec, SynthConfig,
};

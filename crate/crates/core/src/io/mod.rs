//! On-disk formats: dataset records, layout outputs, parameter maps and PLY
//! point clouds.
//!
//! A record is a directory:
//!
//! ```text
//! meta.json              intrinsics, depth format, surfaces, corners
//! annotations.json       region polygons
//! layout_depth.{glr,png} depth of the layout planes
//! seg.png                layout segmentation
//! depth.{glr,png}        observed depth, objects included
//! normals.glr            optional per-pixel surface normals
//! color.png              optional color image
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place.

mod formats;
mod resample;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{RegionAnnotation, Semantic};
use crate::geometry::{CameraIntrinsics, SurfaceParams};
use crate::layout::{Boundary, Corner, LayoutResult, SkippedCorner};
use crate::raster::{DepthMap, ParamMap, SegmentationMap};
use crate::synth::{region_annotations, SceneRender, SceneSpec};

pub use formats::{
    colorize, decode_depth_png, decode_seg_png, encode_depth_png, encode_seg_png, palette, quantize_depth, FloatRaster,
    RgbImage, MAX_PNG_LABEL,
};
pub use resample::{resample_depth, resample_params, resample_seg, Resample};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read_bytes(path)?).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

/// Storage of depth rasters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthFormat {
    /// Lossless `f64` (`.glr`).
    #[default]
    Float,
    /// 16-bit PNG in millimeters; quantizes to 1 mm.
    Png16,
}

impl DepthFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DepthFormat::Float => "glr",
            DepthFormat::Png16 => "png",
        }
    }
}

pub fn write_depth(path: &Path, depth: &DepthMap, format: DepthFormat) -> Result<()> {
    let bytes = match format {
        DepthFormat::Float => FloatRaster::from_depth(depth).encode(),
        DepthFormat::Png16 => encode_depth_png(depth)?,
    };
    write_atomic(path, &bytes)
}

/// Reads a depth raster, choosing the format by extension.
pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let bytes = read_bytes(path)?;
    if path.extension().is_some_and(|e| e == "png") {
        decode_depth_png(&bytes, path)
    } else {
        FloatRaster::decode(&bytes, path)?.to_depth(path)
    }
}

pub fn write_seg(path: &Path, seg: &SegmentationMap) -> Result<()> {
    write_atomic(path, &encode_seg_png(seg)?)
}

pub fn read_seg(path: &Path) -> Result<SegmentationMap> {
    decode_seg_png(&read_bytes(path)?, path)
}

pub fn write_params(path: &Path, pm: &ParamMap) -> Result<()> {
    write_atomic(path, &FloatRaster::from_params(pm).encode())
}

pub fn read_params(path: &Path) -> Result<ParamMap> {
    FloatRaster::read(path)?.to_params(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRecord {
    pub id: u32,
    pub semantic: Option<Semantic>,
    /// Pixel-frame parameters at the record's resolution.
    pub params: SurfaceParams,
}

/// One dataset sample.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub color: Option<RgbImage>,
    pub layout_depth: DepthMap,
    pub seg: SegmentationMap,
    pub depth: DepthMap,
    pub annotations: Vec<RegionAnnotation>,
    pub cam: CameraIntrinsics,
    pub surfaces: Vec<SurfaceRecord>,
    pub corners: Vec<Corner>,
    pub normals: Option<Vec<[f64; 3]>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordMeta {
    version: u32,
    width: usize,
    height: usize,
    intrinsics: CameraIntrinsics,
    depth_format: DepthFormat,
    surfaces: Vec<SurfaceRecord>,
    corners: Vec<Corner>,
    has_color: bool,
    has_normals: bool,
}

const RECORD_VERSION: u32 = 1;

impl DatasetRecord {
    /// Record of a synthetic scene.
    pub fn from_scene(spec: &SceneSpec, render: &SceneRender) -> Self {
        Self {
            color: None,
            layout_depth: render.layout_depth.clone(),
            seg: render.seg.clone(),
            depth: render.depth.clone(),
            annotations: region_annotations(spec, render),
            cam: spec.cam,
            surfaces: spec
                .surfaces
                .iter()
                .map(|s| SurfaceRecord { id: s.label, semantic: Some(s.semantic), params: s.params })
                .collect(),
            corners: spec.gt_corners_2d.clone(),
            normals: Some(render.normals.clone()),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.seg.dims()
    }

    /// Pixel-frame parameters indexed by surface id; ids must be `0..n`.
    pub fn instance_params(&self) -> Result<Vec<SurfaceParams>> {
        let mut out = vec![None; self.surfaces.len()];
        for s in &self.surfaces {
            match out.get_mut(s.id as usize) {
                Some(slot @ None) => *slot = Some(s.params),
                _ => return Err(Error::InvalidArgument(format!("surface ids must be 0..{}", self.surfaces.len()))),
            }
        }
        Ok(out.into_iter().map(Option::unwrap).collect())
    }

    /// The record on a `width`×`height` raster: labels by nearest neighbor,
    /// depths bilinear, corners, polygons and intrinsics mapped to the new
    /// pixel grid. Normals and color are dropped.
    pub fn resampled(&self, width: usize, height: usize) -> Result<Self> {
        if self.dims() == (width, height) {
            return Ok(self.clone());
        }
        let (w0, h0) = self.dims();
        let (su, sv) = (width as f64 / w0 as f64, height as f64 / h0 as f64);
        let map = |u: f64, v: f64| ((u + 0.5) * su - 0.5, (v + 0.5) * sv - 0.5);
        let cam = self.cam.resized(width, height)?;
        let surfaces = self
            .surfaces
            .iter()
            .map(|s| {
                let params = s.params.change_coordinates(1.0 / su, 0.5 / su - 0.5, 1.0 / sv, 0.5 / sv - 0.5)?;
                Ok(SurfaceRecord { params, ..s.clone() })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            color: None,
            layout_depth: resample_depth(&self.layout_depth, width, height, Resample::Bilinear)?,
            seg: resample_seg(&self.seg, width, height)?,
            depth: resample_depth(&self.depth, width, height, Resample::Bilinear)?,
            annotations: self
                .annotations
                .iter()
                .map(|a| RegionAnnotation {
                    polygon: a.polygon.iter().map(|p| map(p[0], p[1]).into()).collect(),
                    ..a.clone()
                })
                .collect(),
            cam,
            surfaces,
            corners: self
                .corners
                .iter()
                .map(|c| {
                    let (u, v) = map(c.u, c.v);
                    Corner { u, v, ..c.clone() }
                })
                .collect(),
            normals: None,
        })
    }

    pub fn write(&self, dir: &Path, format: DepthFormat) -> Result<()> {
        let (width, height) = self.dims();
        for (name, dims) in [("layout_depth", self.layout_depth.dims()), ("depth", self.depth.dims())] {
            if dims != (width, height) {
                return Err(Error::InvalidArgument(format!(
                    "{name} is {dims:?} but the segmentation is {:?}",
                    (width, height)
                )));
            }
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let ext = format.extension();
        write_depth(&dir.join(format!("layout_depth.{ext}")), &self.layout_depth, format)?;
        write_depth(&dir.join(format!("depth.{ext}")), &self.depth, format)?;
        write_seg(&dir.join("seg.png"), &self.seg)?;
        if let Some(normals) = &self.normals {
            write_atomic(&dir.join("normals.glr"), &FloatRaster::from_vectors(width, height, normals).encode())?;
        }
        if let Some(color) = &self.color {
            write_atomic(&dir.join("color.png"), &color.encode()?)?;
        }
        write_json(&dir.join("annotations.json"), &self.annotations)?;
        write_json(
            &dir.join("meta.json"),
            &RecordMeta {
                version: RECORD_VERSION,
                width,
                height,
                intrinsics: self.cam,
                depth_format: format,
                surfaces: self.surfaces.clone(),
                corners: self.corners.clone(),
                has_color: self.color.is_some(),
                has_normals: self.normals.is_some(),
            },
        )
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        if !meta_path.exists() {
            return Err(Error::MissingField("meta".into()));
        }
        let meta: RecordMeta = read_json(&meta_path)?;
        if meta.version != RECORD_VERSION {
            return Err(Error::InvalidArgument(format!(
                "{}: unsupported record version {}",
                meta_path.display(),
                meta.version
            )));
        }
        let declared = (meta.intrinsics.width, meta.intrinsics.height);
        let check = |path: &Path, actual: (usize, usize)| -> Result<()> {
            if actual != declared {
                return Err(Error::IntrinsicsMismatch { path: path.to_path_buf(), declared, actual });
            }
            Ok(())
        };
        let required = |name: &str| -> Result<PathBuf> {
            let path = dir.join(name);
            if path.exists() {
                Ok(path)
            } else {
                Err(Error::MissingField(name.split('.').next().unwrap_or(name).to_string()))
            }
        };
        let ext = meta.depth_format.extension();

        let path = required(&format!("layout_depth.{ext}"))?;
        let layout_depth = read_depth(&path)?;
        check(&path, layout_depth.dims())?;
        let path = required(&format!("depth.{ext}"))?;
        let depth = read_depth(&path)?;
        check(&path, depth.dims())?;
        let path = required("seg.png")?;
        let seg = read_seg(&path)?;
        check(&path, seg.dims())?;
        let annotations = read_json(&required("annotations.json")?)?;

        let normals = if meta.has_normals {
            let path = required("normals.glr")?;
            let raster = FloatRaster::read(&path)?;
            check(&path, (raster.width, raster.height))?;
            Some(raster.to_vectors(&path)?)
        } else {
            None
        };
        let color = if meta.has_color {
            let path = required("color.png")?;
            let img = RgbImage::decode(&read_bytes(&path)?, &path)?;
            check(&path, (img.width, img.height))?;
            Some(img)
        } else {
            None
        };
        Ok(Self {
            color,
            layout_depth,
            seg,
            depth,
            annotations,
            cam: meta.intrinsics,
            surfaces: meta.surfaces,
            corners: meta.corners,
            normals,
        })
    }
}

/// Serializable part of a [`LayoutResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutJson {
    pub width: usize,
    pub height: usize,
    pub instances: Vec<SurfaceParams>,
    pub corners_2d: Vec<Corner>,
    pub corners_3d: Option<Vec<[f64; 3]>>,
    pub boundaries: Vec<Boundary>,
    pub skipped_corners: Vec<SkippedCorner>,
    pub fallback_pixels: usize,
}

/// A layout prediction as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct LayoutFiles {
    pub meta: LayoutJson,
    pub seg: SegmentationMap,
    pub depth: DepthMap,
}

/// Writes `layout.json`, `seg.png`, `clustered_seg.png` and `depth.glr`.
pub fn write_layout(dir: &Path, result: &LayoutResult) -> Result<()> {
    let (width, height) = result.seg.dims();
    write_seg(&dir.join("seg.png"), &result.seg)?;
    write_seg(&dir.join("clustered_seg.png"), &result.clustered_seg)?;
    write_depth(&dir.join("depth.glr"), &result.depth, DepthFormat::Float)?;
    write_json(
        &dir.join("layout.json"),
        &LayoutJson {
            width,
            height,
            instances: result.instances.clone(),
            corners_2d: result.corners_2d.clone(),
            corners_3d: result.corners_3d.clone(),
            boundaries: result.boundaries.clone(),
            skipped_corners: result.skipped_corners.clone(),
            fallback_pixels: result.fallback_pixels,
        },
    )
}

pub fn read_layout(dir: &Path) -> Result<LayoutFiles> {
    let path = dir.join("layout.json");
    if !path.exists() {
        return Err(Error::MissingField("layout".into()));
    }
    let meta: LayoutJson = read_json(&path)?;
    let seg = read_seg(&dir.join("seg.png"))?;
    let depth = read_depth(&dir.join("depth.glr"))?;
    for (p, dims) in [("seg.png", seg.dims()), ("depth.glr", depth.dims())] {
        if dims != (meta.width, meta.height) {
            return Err(Error::IntrinsicsMismatch {
                path: dir.join(p),
                declared: (meta.width, meta.height),
                actual: dims,
            });
        }
    }
    Ok(LayoutFiles { meta, seg, depth })
}

/// ASCII PLY with `double` coordinates, a palette color and the label.
pub fn encode_ply(points: &[([f64; 3], u32)]) -> Vec<u8> {
    let mut out = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nproperty uint label\nend_header\n",
        points.len()
    );
    for (p, label) in points {
        let [r, g, b] = palette(*label);
        out.push_str(&format!("{:?} {:?} {:?} {r} {g} {b} {label}\n", p[0], p[1], p[2]));
    }
    out.into_bytes()
}

pub fn write_ply(path: &Path, points: &[([f64; 3], u32)]) -> Result<()> {
    write_atomic(path, &encode_ply(points))
}

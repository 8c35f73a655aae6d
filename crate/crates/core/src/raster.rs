//! Row-major rasters shared by every module.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::SurfaceParams;

pub(crate) fn ensure_same_shape(left: (usize, usize), right: (usize, usize)) -> Result<()> {
    if left != right {
        return Err(Error::ShapeMismatch { left, right });
    }
    Ok(())
}

/// Metric depth (meters) with a validity mask. Invalid entries store `0.0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    pub fn invalid(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![0.0; width * height], valid: vec![false; width * height] }
    }

    /// Builds a map from per-pixel values; non-finite or non-positive depths
    /// become invalid.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Self {
        let mut map = Self::invalid(width, height);
        for v in 0..height {
            for u in 0..width {
                map.set(u, v, f(u, v));
            }
        }
        map
    }

    pub fn from_values(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidArgument(format!("{} depth values for a {width}x{height} raster", values.len())));
        }
        Ok(Self::from_fn(width, height, |u, v| Some(values[v * width + u])))
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        self.get_index(v * self.width + u)
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> Option<f64> {
        self.valid[i].then(|| self.values[i])
    }

    pub fn set(&mut self, u: usize, v: usize, z: Option<f64>) {
        let i = v * self.width + u;
        match z {
            Some(z) if z.is_finite() && z > 0.0 => {
                self.values[i] = z;
                self.valid[i] = true;
            }
            _ => {
                self.values[i] = 0.0;
                self.valid[i] = false;
            }
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Per-pixel surface parameter channels `(p, q, r, s)`: the stand-in for a
/// network's four output heat maps.
///
/// Channels are expressed in resolution-normalized coordinates
/// `(u / extent, v / extent)` with `extent = max(width, height)`, which keeps
/// all four channels commensurate for clustering and for the margin-based
/// losses. Use [`ParamMap::surface_at`] for pixel-frame parameters. Maps
/// built by the geometry routines hold normalized parameters; optimizer
/// outputs may hold free channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamMap {
    width: usize,
    height: usize,
    data: Vec<[f64; 4]>,
    valid: Vec<bool>,
}

impl ParamMap {
    pub fn extent_of(width: usize, height: usize) -> f64 {
        width.max(height) as f64
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![[0.0; 4]; width * height], valid: vec![false; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Option<[f64; 4]>) -> Self {
        let mut map = Self::invalid(width, height);
        for v in 0..height {
            for u in 0..width {
                map.set(u, v, f(u, v));
            }
        }
        map
    }

    /// Builds a map from pixel-frame parameters.
    pub fn from_pixel_params(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Option<SurfaceParams>,
    ) -> Self {
        let extent = Self::extent_of(width, height);
        Self::from_fn(width, height, |u, v| {
            f(u, v).and_then(|p| p.to_unit_frame(extent).ok()).map(SurfaceParams::to_array)
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn extent(&self) -> f64 {
        Self::extent_of(self.width, self.height)
    }

    /// Normalized-frame coordinates of pixel `(u, v)`.
    #[inline]
    pub fn unit_coords(&self, u: usize, v: usize) -> (f64, f64) {
        let e = self.extent();
        (u as f64 / e, v as f64 / e)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<[f64; 4]> {
        self.get_index(v * self.width + u)
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> Option<[f64; 4]> {
        self.valid[i].then(|| self.data[i])
    }

    pub fn set(&mut self, u: usize, v: usize, ch: Option<[f64; 4]>) {
        let i = v * self.width + u;
        match ch {
            Some(c) if c.iter().all(|x| x.is_finite()) => {
                self.data[i] = c;
                self.valid[i] = true;
            }
            _ => {
                self.data[i] = [0.0; 4];
                self.valid[i] = false;
            }
        }
    }

    /// Pixel-frame surface parameters at `(u, v)`, renormalized.
    pub fn surface_at(&self, u: usize, v: usize) -> Option<SurfaceParams> {
        let ch = self.get(u, v)?;
        SurfaceParams::from_channels(ch).and_then(|p| p.from_unit_frame(self.extent())).ok()
    }

    pub fn channels(&self) -> &[[f64; 4]] {
        &self.data
    }

    pub(crate) fn channels_mut(&mut self) -> &mut [[f64; 4]] {
        &mut self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Integer surface labels; [`SegmentationMap::SENTINEL`] marks unassigned
/// pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl SegmentationMap {
    pub const SENTINEL: u32 = u32::MAX;

    pub fn filled(width: usize, height: usize, label: u32) -> Self {
        Self { width, height, labels: vec![label; width * height] }
    }

    pub fn from_labels(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::InvalidArgument(format!("{} labels for a {width}x{height} raster", labels.len())));
        }
        Ok(Self { width, height, labels })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u32) -> Self {
        let mut labels = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                labels.push(f(u, v));
            }
        }
        Self { width, height, labels }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u32 {
        self.labels[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, label: u32) {
        self.labels[v * self.width + u] = label;
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u32] {
        &mut self.labels
    }

    /// Pixel count per label, sentinel excluded, ordered by label.
    pub fn histogram(&self) -> BTreeMap<u32, usize> {
        let mut h = BTreeMap::new();
        for &l in &self.labels {
            if l != Self::SENTINEL {
                *h.entry(l).or_insert(0) += 1;
            }
        }
        h
    }

    pub fn distinct_labels(&self) -> Vec<u32> {
        self.histogram().into_keys().collect()
    }

    pub fn sentinel_count(&self) -> usize {
        self.labels.iter().filter(|l| **l == Self::SENTINEL).count()
    }

    pub fn map_labels(&self, mut f: impl FnMut(u32) -> u32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            labels: self.labels.iter().map(|&l| if l == Self::SENTINEL { l } else { f(l) }).collect(),
        }
    }
}

/// 4-connected components of a segmentation.
#[derive(Clone, Debug)]
pub struct Components {
    /// Component id per pixel; [`SegmentationMap::SENTINEL`] for sentinel pixels.
    pub ids: Vec<u32>,
    pub sizes: Vec<usize>,
    pub labels: Vec<u32>,
}

impl SegmentationMap {
    pub fn components(&self) -> Components {
        let (w, h) = self.dims();
        let mut ids = vec![Self::SENTINEL; w * h];
        let mut sizes = Vec::new();
        let mut labels = Vec::new();
        let mut stack = Vec::new();
        for start in 0..w * h {
            let label = self.labels[start];
            if label == Self::SENTINEL || ids[start] != Self::SENTINEL {
                continue;
            }
            let id = sizes.len() as u32;
            ids[start] = id;
            stack.push(start);
            let mut size = 0;
            while let Some(i) = stack.pop() {
                size += 1;
                let (u, v) = (i % w, i / w);
                let mut visit = |j: usize| {
                    if ids[j] == Self::SENTINEL && self.labels[j] == label {
                        ids[j] = id;
                        stack.push(j);
                    }
                };
                if u > 0 {
                    visit(i - 1);
                }
                if u + 1 < w {
                    visit(i + 1);
                }
                if v > 0 {
                    visit(i - w);
                }
                if v + 1 < h {
                    visit(i + w);
                }
            }
            sizes.push(size);
            labels.push(label);
        }
        Components { ids, sizes, labels }
    }
}

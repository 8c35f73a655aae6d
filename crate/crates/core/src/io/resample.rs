//! Resolution changes. Pixel centers are aligned: target pixel `u'` samples
//! the source at `(u' + 0.5)·W/W' − 0.5`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SurfaceParams;
use crate::raster::{DepthMap, ParamMap, SegmentationMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resample {
    Nearest,
    Bilinear,
}

/// Maps a target coordinate to `(scale, offset)` with `src = scale·dst + offset`.
fn axis(src: usize, dst: usize) -> (f64, f64) {
    let scale = src as f64 / dst as f64;
    (scale, 0.5 * scale - 0.5)
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!("target size {width}x{height} must be positive")));
    }
    Ok(())
}

/// Source samples and weights feeding one target pixel.
fn taps(src: (usize, usize), dst: (usize, usize), u: usize, v: usize, kind: Resample) -> Vec<(usize, f64)> {
    let (su, ou) = axis(src.0, dst.0);
    let (sv, ov) = axis(src.1, dst.1);
    let x = (su * u as f64 + ou).clamp(0.0, (src.0 - 1) as f64);
    let y = (sv * v as f64 + ov).clamp(0.0, (src.1 - 1) as f64);
    match kind {
        Resample::Nearest => {
            // Ties round down so that halving picks the top-left pixel.
            let nu = (x - 0.5).ceil().max(0.0) as usize;
            let nv = (y - 0.5).ceil().max(0.0) as usize;
            vec![(nv * src.0 + nu, 1.0)]
        }
        Resample::Bilinear => {
            let (x0, y0) = (x.floor() as usize, y.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(src.0 - 1), (y0 + 1).min(src.1 - 1));
            let (fx, fy) = (x - x0 as f64, y - y0 as f64);
            vec![
                (y0 * src.0 + x0, (1.0 - fx) * (1.0 - fy)),
                (y0 * src.0 + x1, fx * (1.0 - fy)),
                (y1 * src.0 + x0, (1.0 - fx) * fy),
                (y1 * src.0 + x1, fx * fy),
            ]
        }
    }
}

/// Mask-aware weighted mean: weights of invalid samples are dropped and the
/// rest renormalized; `None` when no valid sample carries weight.
fn blend<const N: usize>(taps: &[(usize, f64)], get: impl Fn(usize) -> Option<[f64; N]>) -> Option<[f64; N]> {
    if let [(i, _)] = taps {
        return get(*i);
    }
    let mut acc = [0.0; N];
    let mut total = 0.0;
    for &(i, w) in taps {
        if w == 0.0 {
            continue;
        }
        if let Some(x) = get(i) {
            for k in 0..N {
                acc[k] += w * x[k];
            }
            total += w;
        }
    }
    (total > 0.0).then(|| acc.map(|a| a / total))
}

/// Nearest-neighbor resize; never introduces new labels.
pub fn resample_seg(seg: &SegmentationMap, width: usize, height: usize) -> Result<SegmentationMap> {
    check_dims(width, height)?;
    let src = seg.dims();
    Ok(SegmentationMap::from_fn(width, height, |u, v| {
        seg.labels()[taps(src, (width, height), u, v, Resample::Nearest)[0].0]
    }))
}

pub fn resample_depth(depth: &DepthMap, width: usize, height: usize, kind: Resample) -> Result<DepthMap> {
    check_dims(width, height)?;
    if depth.dims() == (width, height) {
        return Ok(depth.clone());
    }
    let src = depth.dims();
    Ok(DepthMap::from_fn(width, height, |u, v| {
        blend(&taps(src, (width, height), u, v, kind), |i| depth.get_index(i).map(|z| [z])).map(|[z]| z)
    }))
}

/// Resizes a parameter map. Interpolated channels are renormalized and then
/// re-expressed in the target raster's coordinates, so every target pixel
/// keeps the depth of the source point it samples.
pub fn resample_params(pm: &ParamMap, width: usize, height: usize, kind: Resample) -> Result<ParamMap> {
    check_dims(width, height)?;
    if pm.dims() == (width, height) {
        return Ok(pm.clone());
    }
    let src = pm.dims();
    let (su, ou) = axis(src.0, width);
    let (sv, ov) = axis(src.1, height);
    let (src_extent, dst_extent) = (pm.extent(), ParamMap::extent_of(width, height));
    let convert = |c: [f64; 4]| -> Option<[f64; 4]> {
        let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        let unit = SurfaceParams::from_raw(c[0] / norm * c[3], c[1] / norm * c[3], c[2] / norm * c[3]).ok()?;
        let target = unit
            .from_unit_frame(src_extent)
            .and_then(|p| p.change_coordinates(su, ou, sv, ov))
            .and_then(|p| p.to_unit_frame(dst_extent))
            .ok()?;
        Some(target.to_array())
    };
    Ok(ParamMap::from_fn(width, height, |u, v| {
        blend(&taps(src, (width, height), u, v, kind), |i| pm.get_index(i)).and_then(convert)
    }))
}

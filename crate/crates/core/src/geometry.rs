//! Intrinsics-free parameterization of planar depth maps.
//!
//! Under perspective projection the inverse depth of a plane is affine in the
//! pixel coordinates, `1/Z = p̂·u + q̂·v + r̂`. The raw coefficients carry the
//! (ambiguous) scene scale, so they are split into a unit direction `(p, q, r)`
//! and a positive scale `s`:
//!
//! ```text
//! Z = 1 / ((p·u + q·v + r)·s),   p² + q² + r² = 1,   s > 0
//! ```
//!
//! Pixel coordinates follow one convention everywhere: `u` is the column and
//! `v` the row, both zero-based at the center of the top-left pixel, in pixels
//! of the raster the parameters belong to.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{DepthMap, ParamMap};

const DEGENERATE_NORM: f64 = 1e-12;

/// Un-normalized inverse-depth coefficients `(p̂, q̂, r̂)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawSurfaceParams {
    p_hat: f64,
    q_hat: f64,
    r_hat: f64,
}

impl RawSurfaceParams {
    pub fn new(p_hat: f64, q_hat: f64, r_hat: f64) -> Result<Self> {
        let norm = (p_hat * p_hat + q_hat * q_hat + r_hat * r_hat).sqrt();
        if !norm.is_finite() || norm < DEGENERATE_NORM {
            return Err(Error::DegenerateSurface { norm });
        }
        Ok(Self { p_hat, q_hat, r_hat })
    }

    pub fn p_hat(&self) -> f64 {
        self.p_hat
    }

    pub fn q_hat(&self) -> f64 {
        self.q_hat
    }

    pub fn r_hat(&self) -> f64 {
        self.r_hat
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.p_hat, self.q_hat, self.r_hat]
    }
}

/// Normalized surface parameters `(p, q, r, s)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SurfaceParamsRepr", into = "SurfaceParamsRepr")]
pub struct SurfaceParams {
    p: f64,
    q: f64,
    r: f64,
    s: f64,
}

#[derive(Serialize, Deserialize)]
struct SurfaceParamsRepr {
    p: f64,
    q: f64,
    r: f64,
    s: f64,
}

impl TryFrom<SurfaceParamsRepr> for SurfaceParams {
    type Error = Error;

    fn try_from(v: SurfaceParamsRepr) -> Result<Self> {
        let unit = (v.p * v.p + v.q * v.q + v.r * v.r).sqrt();
        if !(v.s > 0.0) || (unit - 1.0).abs() > 1e-9 {
            return Err(Error::DegenerateSurface { norm: unit * v.s });
        }
        Ok(Self { p: v.p, q: v.q, r: v.r, s: v.s })
    }
}

impl From<SurfaceParams> for SurfaceParamsRepr {
    fn from(v: SurfaceParams) -> Self {
        Self { p: v.p, q: v.q, r: v.r, s: v.s }
    }
}

/// Splits raw coefficients into a unit direction and a positive scale.
pub fn normalize(raw: RawSurfaceParams) -> Result<SurfaceParams> {
    let [a, b, c] = raw.to_array();
    let s = (a * a + b * b + c * c).sqrt();
    if !s.is_finite() || s < DEGENERATE_NORM {
        return Err(Error::DegenerateSurface { norm: s });
    }
    Ok(SurfaceParams { p: a / s, q: b / s, r: c / s, s })
}

impl SurfaceParams {
    /// Builds parameters from raw coefficients.
    pub fn from_raw(p_hat: f64, q_hat: f64, r_hat: f64) -> Result<Self> {
        normalize(RawSurfaceParams::new(p_hat, q_hat, r_hat)?)
    }

    /// Builds parameters from four free channels, renormalizing `(p, q, r)`
    /// and folding the norm (and sign) into the scale.
    pub fn from_channels(ch: [f64; 4]) -> Result<Self> {
        Self::from_raw(ch[0] * ch[3], ch[1] * ch[3], ch[2] * ch[3])
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.p, self.q, self.r, self.s]
    }

    /// The raw coefficients `(p·s, q·s, r·s)`.
    pub fn raw(self) -> RawSurfaceParams {
        RawSurfaceParams { p_hat: self.p * self.s, q_hat: self.q * self.s, r_hat: self.r * self.s }
    }

    /// Inverse depth `(p·u + q·v + r)·s`. Every module evaluates inverse depth
    /// through this expression so that argmax comparisons agree bit for bit.
    #[inline]
    pub fn inverse_depth_at(&self, u: f64, v: f64) -> f64 {
        (self.p * u + self.q * v + self.r) * self.s
    }

    /// Signed depth; non-positive inverse depth yields a negative value or
    /// `+inf` on the horizon line.
    #[inline]
    pub fn depth_at(&self, u: f64, v: f64) -> f64 {
        let w = self.inverse_depth_at(u, v);
        if w == 0.0 {
            f64::INFINITY
        } else {
            1.0 / w
        }
    }

    /// Re-expresses the parameters in new coordinates `(u', v')` related to
    /// the current ones by `u = su·u' + ou`, `v = sv·v' + ov`.
    pub fn change_coordinates(self, su: f64, ou: f64, sv: f64, ov: f64) -> Result<Self> {
        let [a, b, c] = self.raw().to_array();
        Self::from_raw(a * su, b * sv, c + a * ou + b * ov)
    }

    /// Converts pixel-frame parameters to the resolution-normalized frame
    /// `(u/extent, v/extent)` used by [`ParamMap`].
    pub fn to_unit_frame(self, extent: f64) -> Result<Self> {
        self.change_coordinates(extent, 0.0, extent, 0.0)
    }

    /// Inverse of [`SurfaceParams::to_unit_frame`].
    pub fn from_unit_frame(self, extent: f64) -> Result<Self> {
        self.change_coordinates(1.0 / extent, 0.0, 1.0 / extent, 0.0)
    }

    /// Largest absolute component difference.
    pub fn max_abs_diff(&self, other: &SurfaceParams) -> f64 {
        self.to_array().iter().zip(other.to_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Plane `a·X + b·Y + c·Z + d = 0` in camera coordinates with a unit normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct PlaneEq3D {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl TryFrom<[f64; 4]> for PlaneEq3D {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        PlaneEq3D::new(v[0], v[1], v[2], v[3])
    }
}

impl From<PlaneEq3D> for [f64; 4] {
    fn from(p: PlaneEq3D) -> Self {
        [p.a, p.b, p.c, p.d]
    }
}

impl PlaneEq3D {
    /// Scales the equation so the normal has unit length.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let n = (a * a + b * b + c * c).sqrt();
        if !n.is_finite() || n < DEGENERATE_NORM {
            return Err(Error::DegeneratePlane("normal vanishes"));
        }
        if !d.is_finite() || d == 0.0 {
            return Err(Error::DegeneratePlane("plane passes through the camera center"));
        }
        Ok(Self { a: a / n, b: b / n, c: c / n, d: d / n })
    }

    /// Plane through `point` with (not necessarily unit) normal `normal`.
    pub fn from_point_normal(point: [f64; 3], normal: [f64; 3]) -> Result<Self> {
        let d = -(normal[0] * point[0] + normal[1] * point[1] + normal[2] * point[2]);
        Self::new(normal[0], normal[1], normal[2], d)
    }

    pub fn normal(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn signed_distance(&self, x: [f64; 3]) -> f64 {
        self.a * x[0] + self.b * x[1] + self.c * x[2] + self.d
    }

    pub fn flipped(self) -> Self {
        Self { a: -self.a, b: -self.b, c: -self.c, d: -self.d }
    }

    /// Component distance to `other`, taking the smaller of the two sign
    /// choices (`(a,b,c,d)` and `-(a,b,c,d)` describe the same plane).
    pub fn distance_up_to_sign(&self, other: &PlaneEq3D) -> f64 {
        let diff = |o: [f64; 4]| self.to_array().iter().zip(o).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        diff(other.to_array()).min(diff(other.flipped().to_array()))
    }
}

/// Pinhole intrinsics tied to a raster size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub u0: f64,
    pub v0: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, u0: f64, v0: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Self { fx, fy, u0, v0, width, height };
        cam.validate()?;
        Ok(cam)
    }

    /// Square pixels, principal point at the raster center, horizontal field
    /// of view `hfov_deg`.
    pub fn centered(width: usize, height: usize, hfov_deg: f64) -> Result<Self> {
        let f = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        Self::new(f, f, (width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fx.is_finite() && self.fy > 0.0 && self.fy.is_finite()) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidIntrinsics("empty raster".into()));
        }
        if !(self.u0 >= 0.0 && self.u0 < self.width as f64 && self.v0 >= 0.0 && self.v0 < self.height as f64) {
            return Err(Error::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} raster",
                self.u0, self.v0, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Intrinsics of the same camera on a resized raster, with pixel
    /// centers mapped by `x' = (x + 0.5)·W'/W − 0.5`.
    pub fn resized(&self, width: usize, height: usize) -> Result<Self> {
        let (su, sv) = (width as f64 / self.width as f64, height as f64 / self.height as f64);
        Self::new(self.fx * su, self.fy * sv, (self.u0 + 0.5) * su - 0.5, (self.v0 + 0.5) * sv - 0.5, width, height)
    }

    /// Camera-frame ray through pixel `(u, v)` scaled to unit depth.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        [(u - self.u0) / self.fx, (v - self.v0) / self.fy, 1.0]
    }

    /// Projects a camera-frame point with `Z > 0` to `(u, v)`.
    #[inline]
    pub fn project(&self, x: [f64; 3]) -> (f64, f64) {
        (self.fx * x[0] / x[2] + self.u0, self.fy * x[1] / x[2] + self.v0)
    }

    /// Back-projects pixel `(u, v)` at depth `z`.
    #[inline]
    pub fn backproject_pixel(&self, u: f64, v: f64, z: f64) -> [f64; 3] {
        [(u - self.u0) * z / self.fx, (v - self.v0) * z / self.fy, z]
    }
}

/// Depth raster of a single surface; pixels with non-positive inverse depth
/// are marked invalid.
pub fn render_depth(params: &SurfaceParams, width: usize, height: usize) -> DepthMap {
    let mut depth = DepthMap::invalid(width, height);
    for v in 0..height {
        for u in 0..width {
            let w = params.inverse_depth_at(u as f64, v as f64);
            if w > 0.0 {
                depth.set(u, v, Some(1.0 / w));
            }
        }
    }
    depth
}

fn derivative(w: &[Option<f64>], i: usize, stride: usize, pos: usize, len: usize) -> Option<f64> {
    let at = |k: isize| {
        let p = pos as isize + k;
        (p >= 0 && (p as usize) < len).then(|| w[(i as isize + k * stride as isize) as usize]).flatten()
    };
    let here = w[i]?;
    match (at(-1), at(1)) {
        (Some(a), Some(b)) => {
            // At a crease the central stencil straddles two surfaces; take the
            // one-sided difference whose side is locally affine instead.
            let kink = (a - 2.0 * here + b).abs();
            let tol = 1e-9 * here.abs().max(a.abs()).max(b.abs());
            let left = at(-2).map(|aa| (aa - 2.0 * a + here).abs());
            let right = at(2).map(|bb| (here - 2.0 * b + bb).abs());
            let smooth = |d: Option<f64>| d.is_some_and(|d| kink > 4.0 * d + tol);
            match (smooth(left), smooth(right)) {
                (true, r) if !r || left.unwrap() <= right.unwrap() + tol => Some(here - a),
                (_, true) => Some(b - here),
                _ => Some((b - a) / 2.0),
            }
        }
        (None, Some(b)) => Some(b - here),
        (Some(a), None) => Some(here - a),
        (None, None) => None,
    }
}

/// Per-pixel target parameters from a ground-truth depth raster: the spatial
/// derivatives of `1/Z` give `(p̂, q̂)`, the offset follows from the value at
/// the pixel. Central differences in the interior, one-sided at borders, next
/// to invalid pixels and on the smooth side of creases. The result is
/// expressed in the map's normalized frame.
pub fn params_from_depth(gt: &DepthMap) -> ParamMap {
    let (width, height) = gt.dims();
    let extent = ParamMap::extent_of(width, height);
    let inv: Vec<Option<f64>> = (0..width * height).map(|i| gt.get_index(i).map(|z| 1.0 / z)).collect();
    let mut out = ParamMap::invalid(width, height);
    for v in 0..height {
        for u in 0..width {
            let i = v * width + u;
            let (Some(w), Some(du), Some(dv)) =
                (inv[i], derivative(&inv, i, 1, u, width), derivative(&inv, i, width, v, height))
            else {
                continue;
            };
            let r_hat = w - du * u as f64 - dv * v as f64;
            if let Ok(params) = SurfaceParams::from_raw(du, dv, r_hat).and_then(|p| p.to_unit_frame(extent)) {
                out.set(u, v, Some(params.to_array()));
            }
        }
    }
    out
}

/// Surface parameters of a camera-frame plane.
pub fn plane_to_surface(plane: &PlaneEq3D, cam: &CameraIntrinsics) -> Result<SurfaceParams> {
    let [a, b, c] = plane.normal();
    let d = plane.d();
    SurfaceParams::from_raw(-a / (cam.fx * d), -b / (cam.fy * d), (a * cam.u0 / cam.fx + b * cam.v0 / cam.fy - c) / d)
}

/// Camera-frame plane of a surface. The sign is fixed so that `d < 0`, i.e.
/// the normal points away from the camera.
pub fn surface_to_plane(params: &SurfaceParams, cam: &CameraIntrinsics) -> Result<PlaneEq3D> {
    let [ph, qh, rh] = params.raw().to_array();
    // (a, b, c) / d
    let m = [-ph * cam.fx, -qh * cam.fy, -ph * cam.u0 - qh * cam.v0 - rh];
    let norm = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
    if !norm.is_finite() || norm < DEGENERATE_NORM {
        return Err(Error::DegeneratePlane("recovered normal vanishes"));
    }
    PlaneEq3D::new(-m[0] / norm, -m[1] / norm, -m[2] / norm, -1.0 / norm)
}

/// Camera-frame points of every valid pixel, in row-major pixel order.
pub fn backproject(depth: &DepthMap, cam: &CameraIntrinsics) -> Vec<[f64; 3]> {
    let (width, height) = depth.dims();
    let mut points = Vec::with_capacity(depth.valid_count());
    for v in 0..height {
        for u in 0..width {
            if let Some(z) = depth.get(u, v) {
                points.push(cam.backproject_pixel(u as f64, v as f64, z));
            }
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let p = normalize(RawSurfaceParams::new(3.0, 0.0, 4.0).unwrap()).unwrap();
        assert_eq!(p.to_array(), [0.6, 0.0, 0.8, 5.0]);
        let p = normalize(RawSurfaceParams::new(0.0, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!(p.to_array(), [0.0, 0.0, 1.0, 1.0]);
        assert!(matches!(RawSurfaceParams::new(0.0, 0.0, 0.0), Err(Error::DegenerateSurface { .. })));
        assert!(RawSurfaceParams::new(f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn normalize_is_scale_invariant() {
        let raw = [0.0013, -0.0021, 0.43];
        let base = SurfaceParams::from_raw(raw[0], raw[1], raw[2]).unwrap();
        for lambda in [1e-3, 0.5, 2.0, 17.0, 1e4] {
            let scaled = SurfaceParams::from_raw(raw[0] * lambda, raw[1] * lambda, raw[2] * lambda).unwrap();
            assert!((scaled.p() - base.p()).abs() < 1e-15);
            assert!((scaled.q() - base.q()).abs() < 1e-15);
            assert!((scaled.r() - base.r()).abs() < 1e-15);
            assert!((scaled.s() - base.s() * lambda).abs() <= 1e-12 * scaled.s());
        }
    }

    #[test]
    fn depth_at_examples() {
        let p = SurfaceParams::from_channels([0.0, 0.0, 1.0, 0.5]).unwrap();
        assert_eq!(p.depth_at(12.0, 99.0), 2.0);
        let p = SurfaceParams::from_channels([0.6, 0.0, 0.8, 0.001]).unwrap();
        let expected = 1.0 / ((0.6 * 100.0 + 0.8) * 0.001);
        assert!((p.depth_at(100.0, 7.0) - expected).abs() < 1e-9);
        assert!((expected - 16.447368421052632).abs() < 1e-9);
        let p = SurfaceParams::from_channels([-1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(p.depth_at(0.0, 5.0), f64::INFINITY);
        assert!(p.depth_at(2.0, 5.0) < 0.0);
    }

    #[test]
    fn render_depth_examples() {
        let d = render_depth(&SurfaceParams::from_channels([0.0, 0.0, 1.0, 1.0]).unwrap(), 2, 2);
        assert_eq!(d.valid_count(), 4);
        assert!((0..4).all(|i| d.get_index(i) == Some(1.0)));

        let p = SurfaceParams::from_raw(-1.0, 0.0, 0.5).unwrap();
        let d = render_depth(&p, 4, 3);
        for v in 0..3 {
            assert!(d.get(0, v).is_some());
            for u in 1..4 {
                assert!(d.get(u, v).is_none());
            }
        }

        let p = SurfaceParams::from_raw(0.0, 0.0, -0.3).unwrap();
        assert_eq!(render_depth(&p, 5, 5).valid_count(), 0);
    }

    #[test]
    fn params_from_constant_depth() {
        let d = DepthMap::from_fn(6, 5, |_, _| Some(2.0));
        let pm = params_from_depth(&d);
        for v in 0..5 {
            for u in 0..6 {
                let p = pm.surface_at(u, v).unwrap();
                assert!(p.max_abs_diff(&SurfaceParams::from_channels([0.0, 0.0, 1.0, 0.5]).unwrap()) < 1e-12);
            }
        }
    }

    #[test]
    fn params_from_inverse_depth_ramp() {
        let d = DepthMap::from_fn(20, 15, |u, v| Some(1.0 / (0.001 * u as f64 + 0.002 * v as f64 + 0.5)));
        let pm = params_from_depth(&d);
        for v in 1..14 {
            for u in 1..19 {
                let raw = pm.surface_at(u, v).unwrap().raw().to_array();
                assert!((raw[0] - 0.001).abs() < 1e-9, "{raw:?}");
                assert!((raw[1] - 0.002).abs() < 1e-9);
                assert!((raw[2] - 0.5).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn params_from_depth_masks_isolated_pixels() {
        // A lone valid pixel has no neighbor in either direction.
        let d = DepthMap::from_fn(3, 3, |u, v| (u == 1 && v == 1).then_some(2.0));
        assert_eq!(params_from_depth(&d).valid_count(), 0);
    }

    #[test]
    fn plane_surface_examples() {
        let fronto = PlaneEq3D::new(0.0, 0.0, 1.0, -2.0).unwrap();
        let s = plane_to_surface(&fronto, &cam()).unwrap();
        assert!(s.max_abs_diff(&SurfaceParams::from_channels([0.0, 0.0, 1.0, 0.5]).unwrap()) < 1e-15);

        let floor = PlaneEq3D::new(0.0, -1.0, 0.0, 1.5).unwrap();
        let raw = plane_to_surface(&floor, &cam()).unwrap().raw().to_array();
        assert!(raw[0].abs() < 1e-15);
        assert!((raw[1] - 1.0 / 750.0).abs() < 1e-15);
        assert!((raw[2] + 240.0 / 750.0).abs() < 1e-15);

        let back = surface_to_plane(&SurfaceParams::from_channels([0.0, 0.0, 1.0, 0.5]).unwrap(), &cam()).unwrap();
        assert_eq!(back.to_array(), [0.0, 0.0, 1.0, -2.0]);
        assert!(surface_to_plane(&s, &cam()).unwrap().distance_up_to_sign(&fronto) < 1e-12);
        assert!(
            surface_to_plane(&plane_to_surface(&floor, &cam()).unwrap(), &cam()).unwrap().distance_up_to_sign(&floor)
                < 1e-12
        );
    }

    #[test]
    fn plane_validation() {
        assert!(PlaneEq3D::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(PlaneEq3D::new(0.0, 1.0, 0.0, 0.0).is_err());
        let p = PlaneEq3D::new(0.0, 3.0, 4.0, 10.0).unwrap();
        assert_eq!(p.to_array(), [0.0, 0.6, 0.8, 2.0]);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 3.9, 0.0, 4, 4).is_ok());
    }

    #[test]
    fn backproject_examples() {
        let c = cam();
        assert_eq!(c.backproject_pixel(c.u0, c.v0, 3.0), [0.0, 0.0, 3.0]);
        assert_eq!(c.backproject_pixel(c.u0 + c.fx, c.v0, 2.0), [2.0, 0.0, 2.0]);
        let d = DepthMap::from_fn(3, 2, |u, _| (u != 1).then_some(1.0));
        assert_eq!(backproject(&d, &c).len(), 4);
    }

    #[test]
    fn unit_frame_round_trip() {
        let p = SurfaceParams::from_raw(0.0013, -0.0007, 0.41).unwrap();
        let unit = p.to_unit_frame(64.0).unwrap();
        let back = unit.from_unit_frame(64.0).unwrap();
        assert!(back.max_abs_diff(&p) < 1e-14);
        let w = p.inverse_depth_at(17.0, 40.0);
        assert!((unit.inverse_depth_at(17.0 / 64.0, 40.0 / 64.0) - w).abs() < 1e-14);
    }
}

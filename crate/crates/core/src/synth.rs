//! Synthetic prism rooms with exact ground truth.
//!
//! A room is a vertical prism over a polygon footprint in the world `X–Z`
//! plane, bounded by a horizontal floor and ceiling. World `Y` points down
//! (like image rows) and the camera sits at the world origin; its
//! orientation is `Ry(yaw)·Rx(pitch)·Rz(roll)` (camera to world). Primitive
//! indices are `0` floor, `1` ceiling, `2 + k` the wall from footprint
//! vertex `k` to `k + 1`. Surfaces visible in the image receive contiguous
//! labels in primitive order.
//!
//! Visibility is decided by exact ray casting against the bounded faces, so
//! concave rooms get their true segmentation rather than the min-depth one.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{RegionAnnotation, Semantic};
use crate::geometry::{plane_to_surface, CameraIntrinsics, PlaneEq3D, SurfaceParams};
use crate::layout::{sort_clockwise, stitch_min_depth, Corner, CornerKind, ImageEdge};
use crate::polygon::{self, Point2};
use crate::raster::{DepthMap, ParamMap, SegmentationMap};

/// Slack (meters) when testing whether a ray hit lies on a bounded face.
const FACE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutType {
    Cuboid,
    NonCuboid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub yaw_max_deg: f64,
    /// Pitch and roll are drawn from `±tilt_max_deg`.
    pub tilt_max_deg: f64,
    /// Every connected region of every visible surface must cover at least
    /// this fraction of the image.
    pub min_surface_fraction: f64,
    /// Minimum distance (px) of interior corners from the image border, of
    /// boundary corners from the image corners, and half the minimum
    /// distance between corners.
    pub corner_margin: f64,
    pub max_attempts: usize,
    pub noise: Option<f64>,
    pub clutter: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            yaw_max_deg: 35.0,
            tilt_max_deg: 0.0,
            min_surface_fraction: 0.02,
            corner_margin: 2.0,
            max_attempts: 10_000,
            noise: None,
            clutter: None,
        }
    }
}

/// Prism room geometry in world coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrismRoom {
    /// Counter-clockwise footprint vertices `(X, Z)`.
    pub footprint: Vec<[f64; 2]>,
    /// Floor height (`Y > 0`, below the camera).
    pub floor_y: f64,
    /// Ceiling height (`Y < 0`).
    pub ceiling_y: f64,
    /// Camera orientation in radians.
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl PrismRoom {
    /// Axis-aligned box of the given size (`X`, `Y`, `Z` extents in meters)
    /// centered on the camera, which looks at the far `+Z` wall.
    pub fn centered_box(size: [f64; 3]) -> Self {
        let (hx, hy, hz) = (size[0] / 2.0, size[1] / 2.0, size[2] / 2.0);
        Self {
            footprint: vec![[-hx, -hz], [hx, -hz], [hx, hz], [-hx, hz]],
            floor_y: hy,
            ceiling_y: -hy,
            yaw: 0.0,
            pitch: 0.0,
            roll: 0.0,
        }
    }

    fn points(&self) -> Vec<Point2> {
        self.footprint.iter().map(|p| (p[0], p[1])).collect()
    }

    /// Camera-to-world rotation.
    pub fn rotation(&self) -> Matrix3<f64> {
        let (sy, cy) = self.yaw.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        let (sr, cr) = self.roll.sin_cos();
        let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
        let rz = Matrix3::new(cr, -sr, 0.0, sr, cr, 0.0, 0.0, 0.0, 1.0);
        ry * rx * rz
    }

    pub fn validate(&self) -> Result<()> {
        let poly = self.points();
        if poly.len() < 3 || !polygon::is_simple(&poly) {
            return Err(Error::InvalidFootprint("footprint must be a simple polygon with at least 3 vertices".into()));
        }
        if polygon::signed_area(&poly) <= 0.0 {
            return Err(Error::InvalidFootprint("footprint must be counter-clockwise".into()));
        }
        if !polygon::contains(&poly, (0.0, 0.0)) {
            return Err(Error::InvalidFootprint("camera is outside the footprint".into()));
        }
        if !(self.floor_y > 0.0 && self.ceiling_y < 0.0) {
            return Err(Error::InvalidFootprint("floor must lie below and ceiling above the camera".into()));
        }
        Ok(())
    }

    fn wall_count(&self) -> usize {
        self.footprint.len()
    }

    /// World-frame plane `n·X + d = 0` of a primitive with its normal
    /// pointing into the room.
    fn world_plane(&self, prim: usize) -> ([f64; 3], f64) {
        match prim {
            0 => ([0.0, -1.0, 0.0], self.floor_y),
            1 => ([0.0, 1.0, 0.0], -self.ceiling_y),
            _ => {
                let k = prim - 2;
                let a = self.footprint[k];
                let b = self.footprint[(k + 1) % self.footprint.len()];
                let (dx, dz) = (b[0] - a[0], b[1] - a[1]);
                let len = dx.hypot(dz);
                let n = [-dz / len, 0.0, dx / len];
                (n, -(n[0] * a[0] + n[2] * a[1]))
            }
        }
    }

    fn semantic(prim: usize) -> Semantic {
        match prim {
            0 => Semantic::Floor,
            1 => Semantic::Ceiling,
            _ => Semantic::Wall,
        }
    }

    /// Whether a world point on the plane of `prim` lies on its bounded face.
    fn on_face(&self, prim: usize, x: &Vector3<f64>, poly: &[Point2]) -> bool {
        match prim {
            0 | 1 => {
                let p = (x[0], x[2]);
                polygon::contains(poly, p)
                    || (0..poly.len())
                        .any(|i| polygon::segment_distance(p, poly[i], poly[(i + 1) % poly.len()]) <= FACE_TOL)
            }
            _ => {
                let k = prim - 2;
                let a = self.footprint[k];
                let b = self.footprint[(k + 1) % self.footprint.len()];
                let (dx, dz) = (b[0] - a[0], b[1] - a[1]);
                let len = dx.hypot(dz);
                let t = ((x[0] - a[0]) * dx + (x[2] - a[1]) * dz) / len;
                t >= -FACE_TOL
                    && t <= len + FACE_TOL
                    && x[1] >= self.ceiling_y - FACE_TOL
                    && x[1] <= self.floor_y + FACE_TOL
            }
        }
    }
}

/// One visible surface of a scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSurface {
    pub label: u32,
    pub primitive: usize,
    pub semantic: Semantic,
    /// Camera-frame plane with the normal pointing into the room.
    pub plane: PlaneEq3D,
    /// Pixel-frame surface parameters.
    pub params: SurfaceParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub cam: CameraIntrinsics,
    pub room: PrismRoom,
    pub layout_type: LayoutType,
    pub surfaces: Vec<SceneSurface>,
    pub gt_corners_2d: Vec<Corner>,
    pub noise: Option<f64>,
    pub clutter: Option<f64>,
    pub seed: u64,
}

impl SceneSpec {
    /// Pixel-frame parameters indexed by label.
    pub fn instance_params(&self) -> Vec<SurfaceParams> {
        self.surfaces.iter().map(|s| s.params).collect()
    }

    /// Builds the spec of a given room. Fails when the room is invalid or a
    /// face plane passes through the camera.
    pub fn from_room(cam: CameraIntrinsics, room: PrismRoom, layout_type: LayoutType, seed: u64) -> Result<Self> {
        cam.validate()?;
        room.validate()?;
        let scene = Tracer::new(&cam, &room)?;
        let winners = scene.winners();
        let mut label_of = vec![None; scene.prims.len()];
        let mut surfaces = Vec::new();
        for (prim, p) in scene.prims.iter().enumerate() {
            if winners.iter().any(|w| w.map(|(i, _)| i) == Some(prim)) {
                label_of[prim] = Some(surfaces.len() as u32);
                surfaces.push(SceneSurface {
                    label: surfaces.len() as u32,
                    primitive: prim,
                    semantic: PrismRoom::semantic(prim),
                    plane: p.plane,
                    params: p.params,
                });
            }
        }
        let gt_corners_2d = scene.corners(&label_of);
        Ok(Self { cam, room, layout_type, surfaces, gt_corners_2d, noise: None, clutter: None, seed })
    }
}

struct Primitive {
    plane: PlaneEq3D,
    params: SurfaceParams,
}

/// Ray caster over the bounded faces of a room.
struct Tracer<'a> {
    cam: &'a CameraIntrinsics,
    room: &'a PrismRoom,
    rot: Matrix3<f64>,
    poly: Vec<Point2>,
    prims: Vec<Primitive>,
}

impl<'a> Tracer<'a> {
    fn new(cam: &'a CameraIntrinsics, room: &'a PrismRoom) -> Result<Self> {
        let rot = room.rotation();
        let prims = (0..2 + room.wall_count())
            .map(|prim| {
                let (n, d) = room.world_plane(prim);
                let nc = rot.transpose() * Vector3::new(n[0], n[1], n[2]);
                if d.abs() < 1e-6 {
                    return Err(Error::InvalidFootprint(format!("face {prim} passes through the camera")));
                }
                let plane = PlaneEq3D::new(nc[0], nc[1], nc[2], d)?;
                let params = plane_to_surface(&plane, cam)?;
                Ok(Primitive { plane, params })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cam, room, rot, poly: room.points(), prims })
    }

    /// Visible primitive at a (sub)pixel position and its inverse depth.
    fn cast(&self, u: f64, v: f64) -> Option<(usize, f64)> {
        let ray = self.cam.ray(u, v);
        let ray = Vector3::new(ray[0], ray[1], ray[2]);
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.prims.iter().enumerate() {
            let w = p.params.inverse_depth_at(u, v);
            if w <= 0.0 || best.is_some_and(|(_, bw)| w <= bw) {
                continue;
            }
            let world = self.rot * (ray / w);
            if self.room.on_face(i, &world, &self.poly) {
                best = Some((i, w));
            }
        }
        best
    }

    fn winners(&self) -> Vec<Option<(usize, f64)>> {
        let (w, h) = (self.cam.width, self.cam.height);
        (0..w * h).map(|i| self.cast((i % w) as f64, (i / w) as f64)).collect()
    }

    fn to_camera(&self, x: [f64; 3]) -> Vector3<f64> {
        self.rot.transpose() * Vector3::new(x[0], x[1], x[2])
    }

    /// Whether the camera-frame point `x` (on the faces `prims`) is what the
    /// camera sees at its projection.
    fn sees(&self, u: f64, v: f64, z: f64, prims: &[usize]) -> bool {
        match self.cast(u, v) {
            Some((p, w)) => prims.contains(&p) && (1.0 / w - z).abs() <= 1e-6 * z,
            None => false,
        }
    }

    /// Projected room vertices and edge/border crossings that are visible.
    fn corners(&self, label_of: &[Option<u32>]) -> Vec<Corner> {
        let n = self.room.wall_count();
        let (wf, hf) = (self.cam.width as f64, self.cam.height as f64);
        let inside = |u: f64, v: f64| u > -0.5 && u < wf - 0.5 && v > -0.5 && v < hf - 0.5;
        let labels = |prims: &[usize]| -> Option<Vec<u32>> {
            let mut out = prims.iter().map(|&p| label_of[p]).collect::<Option<Vec<_>>>()?;
            out.sort_unstable();
            Some(out)
        };
        let wall = |k: usize| 2 + k % n;
        let vertex = |k: usize, y: f64| [self.room.footprint[k % n][0], y, self.room.footprint[k % n][1]];

        let mut out = Vec::new();
        for k in 0..n {
            for (y, cap) in [(self.room.floor_y, 0), (self.room.ceiling_y, 1)] {
                let prims = [cap, wall(k + n - 1), wall(k)];
                let x = self.to_camera(vertex(k, y));
                if x[2] <= 1e-6 {
                    continue;
                }
                let (u, v) = self.cam.project([x[0], x[1], x[2]]);
                if inside(u, v) && self.sees(u, v, x[2], &prims) {
                    if let Some(surfaces) = labels(&prims) {
                        out.push(Corner { u, v, z: x[2], surfaces, kind: CornerKind::Interior });
                    }
                }
            }
        }

        let mut edges = Vec::new();
        for k in 0..n {
            edges.push((vertex(k, self.room.floor_y), vertex(k + 1, self.room.floor_y), [0, wall(k)]));
            edges.push((vertex(k, self.room.ceiling_y), vertex(k + 1, self.room.ceiling_y), [1, wall(k)]));
            edges.push((vertex(k, self.room.floor_y), vertex(k, self.room.ceiling_y), [wall(k + n - 1), wall(k)]));
        }
        let borders = [
            (ImageEdge::Left, (-0.5, -0.5), (-0.5, hf - 0.5)),
            (ImageEdge::Right, (wf - 0.5, -0.5), (wf - 0.5, hf - 0.5)),
            (ImageEdge::Top, (-0.5, -0.5), (wf - 0.5, -0.5)),
            (ImageEdge::Bottom, (-0.5, hf - 0.5), (wf - 0.5, hf - 0.5)),
        ];
        for (a, b, prims) in edges {
            let (mut xa, mut xb) = (self.to_camera(a), self.to_camera(b));
            let near = 1e-4;
            if xa[2] < near && xb[2] < near {
                continue;
            }
            if xa[2] < near {
                std::mem::swap(&mut xa, &mut xb);
            }
            if xb[2] < near {
                let t = (xa[2] - near) / (xa[2] - xb[2]);
                xb = xa + (xb - xa) * t;
            }
            let pa = self.cam.project([xa[0], xa[1], xa[2]]);
            let pb = self.cam.project([xb[0], xb[1], xb[2]]);
            for (edge, ea, eb) in borders {
                let Some((u, v)) = segment_intersection(pa, pb, ea, eb) else {
                    continue;
                };
                let w = self.prims[prims[0]].params.inverse_depth_at(u, v);
                if w <= 0.0 || !self.sees(u, v, 1.0 / w, &prims) {
                    continue;
                }
                if let Some(surfaces) = labels(&prims) {
                    out.push(Corner { u, v, z: 1.0 / w, surfaces, kind: CornerKind::Boundary(edge) });
                }
            }
        }
        sort_clockwise(&mut out, self.cam.width, self.cam.height);
        out
    }
}

fn segment_intersection(a: Point2, b: Point2, c: Point2, d: Point2) -> Option<Point2> {
    let r = (b.0 - a.0, b.1 - a.1);
    let s = (d.0 - c.0, d.1 - c.1);
    let den = r.0 * s.1 - r.1 * s.0;
    if den == 0.0 {
        return None;
    }
    let t = ((c.0 - a.0) * s.1 - (c.1 - a.1) * s.0) / den;
    let w = ((c.0 - a.0) * r.1 - (c.1 - a.1) * r.0) / den;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&w)).then_some((a.0 + t * r.0, a.1 + t * r.1))
}

/// Rasters of a rendered scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneRender {
    /// Depth of the room surfaces alone.
    pub layout_depth: DepthMap,
    pub seg: SegmentationMap,
    /// Parameters of the visible surface per pixel (normalized frame).
    pub params: ParamMap,
    /// Observed depth: layout depth with clutter and noise applied.
    pub depth: DepthMap,
    pub clutter_mask: Vec<bool>,
    /// Camera-frame unit normals of the visible surfaces, facing the camera.
    pub normals: Vec<[f64; 3]>,
}

/// Renders segmentation, layout depth, parameter map and observed depth.
pub fn render_scene(spec: &SceneSpec) -> Result<SceneRender> {
    let cam = &spec.cam;
    let (width, height) = (cam.width, cam.height);
    let scene = Tracer::new(cam, &spec.room)?;
    let winners = scene.winners();
    let by_prim: std::collections::HashMap<usize, &SceneSurface> =
        spec.surfaces.iter().map(|s| (s.primitive, s)).collect();

    let mut seg = SegmentationMap::filled(width, height, SegmentationMap::SENTINEL);
    let mut layout_depth = DepthMap::invalid(width, height);
    let mut params = ParamMap::invalid(width, height);
    let mut normals = vec![[0.0; 3]; width * height];
    let extent = ParamMap::extent_of(width, height);
    let unit: Vec<Option<[f64; 4]>> =
        spec.surfaces.iter().map(|s| s.params.to_unit_frame(extent).ok().map(SurfaceParams::to_array)).collect();
    for (i, winner) in winners.iter().enumerate() {
        let Some((prim, _)) = winner else { continue };
        let Some(surface) = by_prim.get(prim) else {
            continue;
        };
        let (u, v) = (i % width, i / width);
        seg.set(u, v, surface.label);
        layout_depth.set(u, v, Some(surface.params.depth_at(u as f64, v as f64)));
        params.set(u, v, unit[surface.label as usize]);
        let n = surface.plane.normal();
        let sign = if surface.plane.d() >= 0.0 { 1.0 } else { -1.0 };
        normals[i] = [n[0] * sign, n[1] * sign, n[2] * sign];
    }

    let mut depth = layout_depth.clone();
    let mut clutter_mask = vec![false; width * height];
    if let Some(fraction) = spec.clutter.filter(|f| *f > 0.0) {
        add_clutter(&mut depth, &mut clutter_mask, fraction, spec.seed);
    }
    if let Some(sigma) = spec.noise.filter(|s| *s > 0.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xD1B5_4A32_D192_ED03);
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for v in 0..height {
            for u in 0..width {
                if let Some(z) = depth.get(u, v) {
                    depth.set(u, v, Some((z + normal.sample(&mut rng)).max(1e-3)));
                }
            }
        }
    }
    Ok(SceneRender { layout_depth, seg, params, depth, clutter_mask, normals })
}

/// Overwrites rectangles of `depth` with fronto-parallel occluders nearer
/// than everything they cover until `fraction` of the pixels are cluttered.
fn add_clutter(depth: &mut DepthMap, mask: &mut [bool], fraction: f64, seed: u64) {
    let (width, height) = depth.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let target = (fraction.min(1.0) * (width * height) as f64).ceil() as usize;
    let lo = (width / 10).max(1);
    let hi = (width / 4).max(lo);
    let mut covered = 0;
    for _ in 0..100_000 {
        if covered >= target {
            break;
        }
        let rw = rng.random_range(lo..=hi).min(width);
        let rh = rng.random_range(lo..=hi).min(height);
        let u0 = rng.random_range(0..=width - rw);
        let v0 = rng.random_range(0..=height - rh);
        let factor = rng.random_range(0.5..0.85);
        let nearest = (v0..v0 + rh)
            .flat_map(|v| (u0..u0 + rw).map(move |u| (u, v)))
            .filter_map(|(u, v)| depth.get(u, v))
            .fold(f64::INFINITY, f64::min);
        if !nearest.is_finite() {
            continue;
        }
        for v in v0..v0 + rh {
            for u in u0..u0 + rw {
                let i = v * width + u;
                if depth.get_index(i).is_none() {
                    continue;
                }
                depth.set(u, v, Some(factor * nearest));
                if !mask[i] {
                    mask[i] = true;
                    covered += 1;
                }
            }
        }
    }
}

/// Outline polygon of the largest connected region of every surface.
pub fn region_annotations(spec: &SceneSpec, render: &SceneRender) -> Vec<RegionAnnotation> {
    let (width, height) = render.seg.dims();
    let comps = render.seg.components();
    spec.surfaces
        .iter()
        .filter_map(|s| {
            let largest =
                (0..comps.sizes.len()).filter(|&c| comps.labels[c] == s.label).max_by_key(|&c| comps.sizes[c])?;
            let start = comps.ids.iter().position(|&id| id == largest as u32)?;
            let mask: Vec<bool> = comps.ids.iter().map(|&id| id == largest as u32).collect();
            let poly = polygon::trace_outline(&mask, width, height, start);
            Some(RegionAnnotation {
                id: s.label,
                semantic: s.semantic,
                polygon: poly.into_iter().map(|p| [p.0, p.1]).collect(),
            })
        })
        .collect()
}

/// Checks that make a scene usable as ground truth for corner and cluster
/// oracles.
fn admissible(spec: &SceneSpec, render: &SceneRender, config: &SynthConfig) -> bool {
    let (width, height) = render.seg.dims();
    let total = (width * height) as f64;
    if render.seg.sentinel_count() > 0 || spec.surfaces.len() < 2 {
        return false;
    }
    let comps = render.seg.components();
    if comps.sizes.iter().any(|&s| (s as f64) < config.min_surface_fraction * total) {
        return false;
    }
    let (wf, hf) = (width as f64, height as f64);
    let m = config.corner_margin;
    for c in &spec.gt_corners_2d {
        let ok = match c.kind {
            CornerKind::Interior => c.u >= m - 0.5 && c.u <= wf - 0.5 - m && c.v >= m - 0.5 && c.v <= hf - 0.5 - m,
            CornerKind::Boundary(ImageEdge::Left | ImageEdge::Right) => c.v >= m - 0.5 && c.v <= hf - 0.5 - m,
            CornerKind::Boundary(_) => c.u >= m - 0.5 && c.u <= wf - 0.5 - m,
        };
        if !ok {
            return false;
        }
    }
    let cs = &spec.gt_corners_2d;
    for i in 0..cs.len() {
        for j in i + 1..cs.len() {
            if (cs[i].u - cs[j].u).hypot(cs[i].v - cs[j].v) < 2.0 * m {
                return false;
            }
        }
    }
    true
}

/// Pixels where the min-depth stitch of the visible surfaces disagrees with
/// the true visibility segmentation.
pub fn min_depth_disagreement(spec: &SceneSpec, render: &SceneRender) -> usize {
    let (width, height) = render.seg.dims();
    let (stitched, _) = stitch_min_depth(&spec.instance_params(), width, height);
    stitched.labels().iter().zip(render.seg.labels()).filter(|(a, b)| a != b).count()
}

fn angle(rng: &mut ChaCha8Rng, max_deg: f64) -> f64 {
    if max_deg > 0.0 {
        rng.random_range(-max_deg..=max_deg).to_radians()
    } else {
        0.0
    }
}

/// Random box room with the camera inside, using default settings.
pub fn generate_cuboid(seed: u64, cam: CameraIntrinsics) -> Result<SceneSpec> {
    generate_cuboid_with(seed, cam, &SynthConfig::default())
}

/// Random box room: side walls 1–3 m to the left and right, front wall
/// 2–5 m ahead, back wall 0.5–2 m behind, floor 1.2–1.7 m below and ceiling
/// 0.8–1.5 m above the camera. Draws are repeated until the scene passes the
/// admissibility checks of `config`.
pub fn generate_cuboid_with(seed: u64, cam: CameraIntrinsics, config: &SynthConfig) -> Result<SceneSpec> {
    cam.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..config.max_attempts {
        let left = rng.random_range(1.0..3.0);
        let right = rng.random_range(1.0..3.0);
        let front = rng.random_range(2.0..5.0);
        let back = rng.random_range(0.5..2.0);
        let room = PrismRoom {
            footprint: vec![[-left, -back], [right, -back], [right, front], [-left, front]],
            floor_y: rng.random_range(1.2..1.7),
            ceiling_y: -rng.random_range(0.8..1.5),
            yaw: angle(&mut rng, config.yaw_max_deg),
            pitch: angle(&mut rng, config.tilt_max_deg),
            roll: angle(&mut rng, config.tilt_max_deg),
        };
        if let Some(spec) = accept(cam, room, LayoutType::Cuboid, seed, config, |spec, _| {
            spec.surfaces.iter().filter(|s| s.semantic == Semantic::Wall).count() <= 3
        })? {
            return Ok(spec);
        }
    }
    Err(exhausted(config))
}

/// Random prism room with `n_walls` walls. Three or four walls give a
/// convex footprint; five or more give a convex polygon with one reflex
/// vertex pushed towards the camera along the viewing direction, so that
/// part of the view is mislabeled by the min-depth rule.
pub fn generate_noncuboid(seed: u64, cam: CameraIntrinsics, n_walls: usize) -> Result<SceneSpec> {
    generate_noncuboid_with(seed, cam, n_walls, &SynthConfig::default())
}

pub fn generate_noncuboid_with(
    seed: u64,
    cam: CameraIntrinsics,
    n_walls: usize,
    config: &SynthConfig,
) -> Result<SceneSpec> {
    cam.validate()?;
    if n_walls < 3 {
        return Err(Error::InvalidArgument(format!("a room needs at least 3 walls, got {n_walls}")));
    }
    let concave = n_walls >= 5;
    let hull_size = if concave { n_walls - 1 } else { n_walls };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..config.max_attempts {
        let yaw = angle(&mut rng, config.yaw_max_deg);
        let pitch = angle(&mut rng, config.tilt_max_deg);
        let roll = angle(&mut rng, config.tilt_max_deg);
        let floor_y = rng.random_range(1.2..1.7);
        let ceiling_y = -rng.random_range(0.8..1.5);
        let step = std::f64::consts::TAU / hull_size as f64;
        let offset = rng.random_range(0.0..step);
        let pts: Vec<Point2> = (0..hull_size)
            .map(|i| {
                let a = offset + step * (i as f64 + rng.random_range(-0.3..0.3));
                let radius = rng.random_range(2.0..4.5);
                (radius * a.cos(), radius * a.sin())
            })
            .collect();
        let mut footprint = polygon::convex_hull(&pts);
        if footprint.len() != hull_size {
            continue;
        }
        let lambda = rng.random_range(0.55..0.8);
        if concave {
            // Viewing direction in the X–Z plane and the hull edge it hits.
            let dir = (yaw.sin(), yaw.cos());
            let far = (dir.0 * 100.0, dir.1 * 100.0);
            let hit = (0..hull_size).find_map(|k| {
                segment_intersection((0.0, 0.0), far, footprint[k], footprint[(k + 1) % hull_size]).map(|h| (k, h))
            });
            let Some((k, h)) = hit else { continue };
            footprint.insert(k + 1, (lambda * h.0, lambda * h.1));
        }
        let room = PrismRoom {
            footprint: footprint.iter().map(|p| [p.0, p.1]).collect(),
            floor_y,
            ceiling_y,
            yaw,
            pitch,
            roll,
        };
        if room.validate().is_err() {
            continue;
        }
        let min_pixels = config.min_surface_fraction * (cam.width * cam.height) as f64;
        if let Some(spec) = accept(cam, room, LayoutType::NonCuboid, seed, config, |spec, render| {
            !concave || min_depth_disagreement(spec, render) as f64 >= min_pixels
        })? {
            return Ok(spec);
        }
    }
    Err(exhausted(config))
}

fn accept(
    cam: CameraIntrinsics,
    room: PrismRoom,
    layout_type: LayoutType,
    seed: u64,
    config: &SynthConfig,
    extra: impl Fn(&SceneSpec, &SceneRender) -> bool,
) -> Result<Option<SceneSpec>> {
    let mut spec = match SceneSpec::from_room(cam, room, layout_type, seed) {
        Ok(spec) => spec,
        Err(Error::InvalidFootprint(_) | Error::DegeneratePlane(_) | Error::DegenerateSurface { .. }) => {
            return Ok(None)
        }
        Err(e) => return Err(e),
    };
    let render = render_scene(&spec)?;
    if !admissible(&spec, &render, config) || !extra(&spec, &render) {
        return Ok(None);
    }
    spec.noise = config.noise;
    spec.clutter = config.clutter;
    Ok(Some(spec))
}

fn exhausted(config: &SynthConfig) -> Error {
    Error::InvalidArgument(format!(
        "no admissible scene after {} attempts; the camera or the admissibility settings are too restrictive",
        config.max_attempts
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{params_from_depth, surface_to_plane};

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::centered(64, 64, 70.0).unwrap()
    }

    #[test]
    fn cuboid_is_deterministic() {
        let a = generate_cuboid(0, cam()).unwrap();
        let b = generate_cuboid(0, cam()).unwrap();
        assert_eq!(a, b);
        assert_eq!(render_scene(&a).unwrap(), render_scene(&b).unwrap());
        assert_ne!(a, generate_cuboid(1, cam()).unwrap());
    }

    #[test]
    fn cuboid_segmentation_is_the_min_depth_stitch() {
        for seed in 0..10 {
            let spec = generate_cuboid(seed, cam()).unwrap();
            let render = render_scene(&spec).unwrap();
            let params = spec.instance_params();
            for v in 0..64 {
                for u in 0..64 {
                    let (mut best, mut best_w) = (u32::MAX, 0.0);
                    for (l, p) in params.iter().enumerate() {
                        let w = p.inverse_depth_at(u as f64, v as f64);
                        if w > best_w {
                            best = l as u32;
                            best_w = w;
                        }
                    }
                    assert_eq!(render.seg.get(u, v), best);
                }
            }
            assert!(spec.surfaces.len() <= 5);
        }
    }

    #[test]
    fn centered_box_shows_five_surfaces_and_four_corners() {
        let cam = CameraIntrinsics::centered(64, 64, 90.0).unwrap();
        let spec = SceneSpec::from_room(cam, PrismRoom::centered_box([4.0, 3.0, 5.0]), LayoutType::Cuboid, 0).unwrap();
        assert_eq!(spec.surfaces.len(), 5);
        let interior: Vec<_> = spec.gt_corners_2d.iter().filter(|c| c.kind == CornerKind::Interior).collect();
        assert_eq!(interior.len(), 4);
        for c in interior {
            // (±2, ±1.5, 2.5) seen with f = 32.
            assert!((c.z - 2.5).abs() < 1e-9);
            assert!(((c.u - cam.u0).abs() - 32.0 * 0.8).abs() < 1e-9);
            assert!(((c.v - cam.v0).abs() - 32.0 * 0.6).abs() < 1e-9);
        }
    }

    #[test]
    fn corners_lie_on_pairwise_boundaries() {
        for seed in 0..10 {
            let spec = generate_cuboid(seed, cam()).unwrap();
            for c in &spec.gt_corners_2d {
                let ws: Vec<f64> =
                    c.surfaces.iter().map(|&l| spec.surfaces[l as usize].params.inverse_depth_at(c.u, c.v)).collect();
                for w in &ws {
                    assert!((w - ws[0]).abs() <= 1e-6 * ws[0]);
                }
            }
        }
    }

    #[test]
    fn planes_match_parameters() {
        let spec = generate_cuboid(3, cam()).unwrap();
        for s in &spec.surfaces {
            let back = surface_to_plane(&s.params, &spec.cam).unwrap();
            assert!(back.distance_up_to_sign(&s.plane) < 1e-9);
        }
    }

    #[test]
    fn noiseless_depth_round_trips_to_parameters() {
        let spec = generate_cuboid(5, cam()).unwrap();
        let render = render_scene(&spec).unwrap();
        assert!((0..64 * 64).all(|i| render.depth.get_index(i).is_some_and(|z| z > 0.0 && z.is_finite())));
        let recovered = params_from_depth(&render.layout_depth);
        let seg = &render.seg;
        for v in 1..63 {
            for u in 1..63 {
                let l = seg.get(u, v);
                let interior = (-1..=1).all(|dv: i64| {
                    (-1..=1).all(|du: i64| seg.get((u as i64 + du) as usize, (v as i64 + dv) as usize) == l)
                });
                if !interior {
                    continue;
                }
                let got = recovered.get(u, v).unwrap();
                let want = render.params.get(u, v).unwrap();
                for k in 0..4 {
                    assert!((got[k] - want[k]).abs() < 1e-6, "{got:?} vs {want:?}");
                }
            }
        }
    }

    #[test]
    fn fronto_parallel_wall_gives_constant_depth() {
        // A wall 2 m ahead that fills a narrow field of view.
        let cam = CameraIntrinsics::centered(16, 16, 20.0).unwrap();
        let room = PrismRoom::centered_box([40.0, 40.0, 4.0]);
        let spec = SceneSpec::from_room(cam, room, LayoutType::Cuboid, 0).unwrap();
        let render = render_scene(&spec).unwrap();
        assert_eq!(spec.surfaces.len(), 1);
        assert!((0..256).all(|i| (render.depth.get_index(i).unwrap() - 2.0).abs() < 1e-12));
    }

    #[test]
    fn clutter_only_brings_pixels_nearer() {
        let mut spec = generate_cuboid(2, cam()).unwrap();
        spec.clutter = Some(0.2);
        let render = render_scene(&spec).unwrap();
        let count = render.clutter_mask.iter().filter(|m| **m).count();
        assert!(count as f64 >= 0.2 * 4096.0);
        for i in 0..4096 {
            let (a, b) = (render.layout_depth.get_index(i).unwrap(), render.depth.get_index(i).unwrap());
            if render.clutter_mask[i] {
                assert!(b < a);
            } else {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn convex_noncuboid_matches_min_depth() {
        for seed in 0..5 {
            let spec = generate_noncuboid(seed, cam(), 4).unwrap();
            let render = render_scene(&spec).unwrap();
            assert_eq!(min_depth_disagreement(&spec, &render), 0);
        }
    }

    #[test]
    fn concave_noncuboid_defeats_min_depth() {
        for seed in 0..5 {
            let spec = generate_noncuboid(seed, cam(), 5).unwrap();
            let render = render_scene(&spec).unwrap();
            assert!(min_depth_disagreement(&spec, &render) >= 1);
            assert_eq!(spec, generate_noncuboid(seed, cam(), 5).unwrap());
        }
    }

    #[test]
    fn self_intersecting_footprint_is_rejected() {
        let mut room = PrismRoom::centered_box([4.0, 3.0, 5.0]);
        room.footprint = vec![[-2.0, -2.0], [2.0, 2.0], [2.0, -2.0], [-2.0, 2.0]];
        assert!(matches!(SceneSpec::from_room(cam(), room, LayoutType::NonCuboid, 0), Err(Error::InvalidFootprint(_))));
    }

    #[test]
    fn annotations_cover_visible_regions() {
        let spec = generate_cuboid(4, cam()).unwrap();
        let render = render_scene(&spec).unwrap();
        let ann = region_annotations(&spec, &render);
        assert_eq!(ann.len(), spec.surfaces.len());
        for a in &ann {
            let poly: Vec<Point2> = a.polygon.iter().map(|p| (p[0], p[1])).collect();
            assert!(polygon::is_simple(&poly));
            for i in polygon::rasterize(&poly, 64, 64) {
                assert_eq!(render.seg.labels()[i], a.id);
            }
        }
    }
}

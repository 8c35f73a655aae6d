use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{sort_clockwise, Corner, CornerKind, ImageEdge};
use crate::geometry::SurfaceParams;
use crate::raster::SegmentationMap;

/// Below this magnitude a (row-normalized) intersection system is treated as
/// singular.
const DET_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// Near-parallel boundaries; `det` is the row-normalized determinant.
    IllConditioned { det: f64 },
    /// The intersection lies on or beyond the horizon of the surfaces.
    AtInfinity,
    /// The intersection leaves the raster.
    OutsideRaster,
    /// No matching junction in the segmentation within the search radius.
    NoJunction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedCorner {
    pub surfaces: Vec<u32>,
    pub edge: Option<ImageEdge>,
    pub reason: SkipReason,
}

/// Polyline of the corners shared by two adjacent surfaces, ordered along
/// their common boundary line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub surfaces: [u32; 2],
    pub polyline: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CornerSet {
    pub corners: Vec<Corner>,
    pub skipped: Vec<SkippedCorner>,
    pub boundaries: Vec<Boundary>,
}

/// [`extract_corners_with`] using a 2 px junction radius.
pub fn extract_corners(instances: &[SurfaceParams], seg: &SegmentationMap) -> CornerSet {
    extract_corners_with(instances, seg, 2.0)
}

/// Pairwise boundary line `a·u + b·v + c = 0` of two surfaces (where their
/// inverse depths agree), scaled so that `(a, b)` is a unit vector. `None`
/// when the surfaces are parallel in 3D: their inverse depths are then
/// proportional and only meet on the shared horizon.
fn boundary_line(x: &SurfaceParams, y: &SurfaceParams) -> Result<[f64; 3], f64> {
    let (rx, ry) = (x.raw().to_array(), y.raw().to_array());
    let unit = |r: [f64; 3]| {
        let n = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        [r[0] / n, r[1] / n, r[2] / n]
    };
    let (ux, uy) = (unit(rx), unit(ry));
    let cross = [ux[1] * uy[2] - ux[2] * uy[1], ux[2] * uy[0] - ux[0] * uy[2], ux[0] * uy[1] - ux[1] * uy[0]];
    let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    if sin < DET_EPS {
        return Err(sin);
    }
    let l = [rx[0] - ry[0], rx[1] - ry[1], rx[2] - ry[2]];
    let n = l[0].hypot(l[1]);
    if n < DET_EPS * l[2].abs().max(1.0) {
        return Err(n);
    }
    Ok([l[0] / n, l[1] / n, l[2] / n])
}

/// Corners of a segmented layout.
///
/// Every triple of mutually adjacent surfaces (8-connectivity) is
/// intersected by solving two pairwise equal-inverse-depth equations; every
/// pair of surfaces meeting on an image edge is intersected with that edge.
/// A candidate is kept when it lies inside the raster rectangle
/// `[-0.5, W-0.5] × [-0.5, H-0.5]`, in front of the camera, and within
/// `junction_radius` pixels of a place where the segmentation shows the same
/// surfaces meeting. Rejected candidates are reported with the reason.
pub fn extract_corners_with(instances: &[SurfaceParams], seg: &SegmentationMap, junction_radius: f64) -> CornerSet {
    let (width, height) = seg.dims();
    let labels = seg.labels();
    let (wf, hf) = (width as f64, height as f64);
    let valid = |l: u32| l != SegmentationMap::SENTINEL && (l as usize) < instances.len();

    // Pairwise adjacency and, per pixel, the labels of its 3×3 window.
    let mut adjacent: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut triple_sites: BTreeMap<(u32, u32, u32), Vec<(f64, f64)>> = BTreeMap::new();
    let mut window = Vec::with_capacity(9);
    for v in 0..height {
        for u in 0..width {
            window.clear();
            for dv in -1i64..=1 {
                for du in -1i64..=1 {
                    let (nu, nv) = (u as i64 + du, v as i64 + dv);
                    if nu < 0 || nv < 0 || nu >= width as i64 || nv >= height as i64 {
                        continue;
                    }
                    let l = labels[nv as usize * width + nu as usize];
                    if valid(l) && !window.contains(&l) {
                        window.push(l);
                    }
                }
            }
            let here = labels[v * width + u];
            if valid(here) {
                for &l in &window {
                    if l != here {
                        adjacent.insert((here.min(l), here.max(l)));
                    }
                }
            }
            if window.len() >= 3 {
                window.sort_unstable();
                for i in 0..window.len() {
                    for j in i + 1..window.len() {
                        for k in j + 1..window.len() {
                            triple_sites
                                .entry((window[i], window[j], window[k]))
                                .or_default()
                                .push((u as f64, v as f64));
                        }
                    }
                }
            }
        }
    }

    // Pairs meeting along each image edge, with the label changes along the
    // outermost pixel row or column.
    let mut edge_sites: BTreeMap<(ImageEdge, u32, u32), Vec<(f64, f64)>> = BTreeMap::new();
    let mut scan = |edge: ImageEdge, pixels: Vec<(usize, usize)>| {
        for w in pixels.windows(2) {
            let (a, b) = (seg.get(w[0].0, w[0].1), seg.get(w[1].0, w[1].1));
            if a != b && valid(a) && valid(b) {
                let mid = ((w[0].0 + w[1].0) as f64 / 2.0, (w[0].1 + w[1].1) as f64 / 2.0);
                edge_sites.entry((edge, a.min(b), a.max(b))).or_default().push(mid);
            }
        }
    };
    scan(ImageEdge::Left, (0..height).map(|v| (0, v)).collect());
    scan(ImageEdge::Right, (0..height).map(|v| (width - 1, v)).collect());
    scan(ImageEdge::Top, (0..width).map(|u| (u, 0)).collect());
    scan(ImageEdge::Bottom, (0..width).map(|u| (u, height - 1)).collect());

    let mut out = CornerSet::default();
    let near =
        |sites: &[(f64, f64)], p: (f64, f64)| sites.iter().any(|s| (s.0 - p.0).hypot(s.1 - p.1) <= junction_radius);
    let inside = |u: f64, v: f64| (-0.5..=wf - 0.5).contains(&u) && (-0.5..=hf - 0.5).contains(&v);
    let in_front =
        |ids: &[u32], u: f64, v: f64| ids.iter().all(|&l| instances[l as usize].inverse_depth_at(u, v) > 0.0);

    for (&(a, b, c), sites) in &triple_sites {
        if !(adjacent.contains(&(a, b)) && adjacent.contains(&(a, c)) && adjacent.contains(&(b, c))) {
            continue;
        }
        let ids = vec![a, b, c];
        let skip = |reason| SkippedCorner { surfaces: ids.clone(), edge: None, reason };
        let (ia, ib, ic) = (&instances[a as usize], &instances[b as usize], &instances[c as usize]);
        let (l1, l2) = match (boundary_line(ia, ib), boundary_line(ia, ic), boundary_line(ib, ic)) {
            (Ok(l1), Ok(l2), Ok(_)) => (l1, l2),
            (Err(det), _, _) | (_, Err(det), _) | (_, _, Err(det)) => {
                out.skipped.push(skip(SkipReason::IllConditioned { det }));
                continue;
            }
        };
        let det = l1[0] * l2[1] - l1[1] * l2[0];
        if det.abs() < DET_EPS {
            out.skipped.push(skip(SkipReason::IllConditioned { det }));
            continue;
        }
        let u = (-l1[2] * l2[1] + l2[2] * l1[1]) / det;
        let v = (-l1[0] * l2[2] + l2[0] * l1[2]) / det;
        if !in_front(&ids, u, v) {
            out.skipped.push(skip(SkipReason::AtInfinity));
        } else if !inside(u, v) {
            out.skipped.push(skip(SkipReason::OutsideRaster));
        } else if !near(sites, (u, v)) {
            out.skipped.push(skip(SkipReason::NoJunction));
        } else {
            out.corners.push(Corner { u, v, z: ia.depth_at(u, v), surfaces: ids, kind: CornerKind::Interior });
        }
    }

    for (&(edge, a, b), sites) in &edge_sites {
        let ids = vec![a, b];
        let skip = |reason| SkippedCorner { surfaces: ids.clone(), edge: Some(edge), reason };
        let line = match boundary_line(&instances[a as usize], &instances[b as usize]) {
            Ok(l) => l,
            Err(det) => {
                out.skipped.push(skip(SkipReason::IllConditioned { det }));
                continue;
            }
        };
        // Intersect a·u + b·v + c = 0 with the edge line, and with the line
        // through the outermost pixel centers where the evidence lies.
        let (fixed_is_u, fixed, centers) = match edge {
            ImageEdge::Left => (true, -0.5, 0.0),
            ImageEdge::Right => (true, wf - 0.5, wf - 1.0),
            ImageEdge::Top => (false, -0.5, 0.0),
            ImageEdge::Bottom => (false, hf - 0.5, hf - 1.0),
        };
        let coef = if fixed_is_u { line[1] } else { line[0] };
        if coef.abs() < DET_EPS {
            out.skipped.push(skip(SkipReason::IllConditioned { det: coef }));
            continue;
        }
        let cross = |at: f64| {
            if fixed_is_u {
                (at, -(line[0] * at + line[2]) / coef)
            } else {
                (-(line[1] * at + line[2]) / coef, at)
            }
        };
        let (u, v) = cross(fixed);
        if !in_front(&ids, u, v) {
            out.skipped.push(skip(SkipReason::AtInfinity));
        } else if !inside(u, v) {
            out.skipped.push(skip(SkipReason::OutsideRaster));
        } else if !near(sites, cross(centers)) {
            out.skipped.push(skip(SkipReason::NoJunction));
        } else {
            out.corners.push(Corner {
                u,
                v,
                z: instances[a as usize].depth_at(u, v),
                surfaces: ids,
                kind: CornerKind::Boundary(edge),
            });
        }
    }

    sort_clockwise(&mut out.corners, width, height);

    for &(a, b) in &adjacent {
        let Ok(line) = boundary_line(&instances[a as usize], &instances[b as usize]) else {
            continue;
        };
        let mut pts: Vec<(f64, f64)> = out
            .corners
            .iter()
            .filter(|c| c.surfaces.contains(&a) && c.surfaces.contains(&b))
            .map(|c| (c.u, c.v))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let along = |p: &(f64, f64)| -line[1] * p.0 + line[0] * p.1;
        pts.sort_by(|p, q| along(p).total_cmp(&along(q)));
        out.boundaries.push(Boundary { surfaces: [a, b], polyline: pts });
    }
    out
}

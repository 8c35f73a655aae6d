//! Planar polygon helpers: containment, simplicity, rasterization and
//! outline tracing of pixel masks.

/// 2D point `(x, y)`; in image space `x = u`, `y = v`.
pub type Point2 = (f64, f64);

#[inline]
fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Shoelace signed area.
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        / 2.0
}

/// Even-odd containment test.
pub fn contains(poly: &[Point2], p: Point2) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.1 > p.1) != (b.1 > p.1) {
            let x = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
            if p.0 < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// True when the open segments `ab` and `cd` cross at a single interior
/// point.
pub fn segments_cross(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// At least three vertices, no zero-length edge, and no two non-adjacent
/// edges crossing. Edges may touch at a shared vertex.
pub fn is_simple(poly: &[Point2]) -> bool {
    let n = poly.len();
    if n < 3 || poly.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return false;
    }
    if (0..n).any(|i| poly[i] == poly[(i + 1) % n]) {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    signed_area(poly).abs() > 0.0
}

/// All vertices on the same side of every edge.
pub fn is_convex(poly: &[Point2]) -> bool {
    let n = poly.len();
    let mut sign = 0.0;
    for i in 0..n {
        let c = cross(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]);
        if c != 0.0 {
            if sign != 0.0 && c.signum() != sign {
                return false;
            }
            sign = c.signum();
        }
    }
    true
}

/// Distance from `p` to the segment `ab`.
pub fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Counter-clockwise convex hull (monotone chain); collinear points dropped.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Row-major indices of pixels whose centers fall inside `poly`.
pub fn rasterize(poly: &[Point2], width: usize, height: usize) -> Vec<usize> {
    let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in poly {
        lo_u = lo_u.min(x);
        hi_u = hi_u.max(x);
        lo_v = lo_v.min(y);
        hi_v = hi_v.max(y);
    }
    let clamp = |x: f64, n: usize| x.max(0.0).min(n as f64 - 1.0);
    let (u0, u1) = (clamp(lo_u.ceil(), width) as usize, clamp(hi_u.floor(), width) as usize);
    let (v0, v1) = (clamp(lo_v.ceil(), height) as usize, clamp(hi_v.floor(), height) as usize);
    let mut out = Vec::new();
    for v in v0..=v1 {
        for u in u0..=u1 {
            if contains(poly, (u as f64, v as f64)) {
                out.push(v * width + u);
            }
        }
    }
    out
}

/// Outer boundary of the 4-connected pixel set containing `start`, traced
/// along pixel edges (vertices at half-integer coordinates) with collinear
/// vertices removed. Rasterizing the result reproduces the set with its
/// holes filled.
pub fn trace_outline(mask: &[bool], width: usize, height: usize, start: usize) -> Vec<Point2> {
    use std::collections::HashMap;

    let inside = |u: isize, v: isize| {
        u >= 0 && v >= 0 && (u as usize) < width && (v as usize) < height && mask[v as usize * width + u as usize]
    };
    // Flood the component first so that other components sharing the mask
    // do not contribute edges.
    let mut comp = vec![false; width * height];
    let mut stack = vec![start];
    comp[start] = true;
    while let Some(i) = stack.pop() {
        let (u, v) = ((i % width) as isize, (i / width) as isize);
        for (du, dv) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let (nu, nv) = (u + du, v + dv);
            if inside(nu, nv) {
                let j = nv as usize * width + nu as usize;
                if !comp[j] {
                    comp[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    let in_comp = |u: isize, v: isize| {
        u >= 0 && v >= 0 && (u as usize) < width && (v as usize) < height && comp[v as usize * width + u as usize]
    };

    // Directed edges on the corner lattice, clockwise on screen around each
    // pixel (interior on the right-hand side).
    let mut out_edges: HashMap<(isize, isize), Vec<(isize, isize)>> = HashMap::new();
    let mut first: Option<((isize, isize), (isize, isize))> = None;
    for v in 0..height as isize {
        for u in 0..width as isize {
            if !in_comp(u, v) {
                continue;
            }
            let sides = [
                (!in_comp(u, v - 1), (u, v), (u + 1, v)),
                (!in_comp(u + 1, v), (u + 1, v), (u + 1, v + 1)),
                (!in_comp(u, v + 1), (u + 1, v + 1), (u, v + 1)),
                (!in_comp(u - 1, v), (u, v + 1), (u, v)),
            ];
            for (open, a, b) in sides {
                if open {
                    out_edges.entry(a).or_default().push(b);
                    if first.is_none() {
                        first = Some((a, b));
                    }
                }
            }
        }
    }
    let Some((start_a, start_b)) = first else {
        return Vec::new();
    };

    let mut ring = vec![start_a];
    let (mut prev, mut cur) = (start_a, start_b);
    while cur != start_a {
        ring.push(cur);
        let heading = (cur.0 - prev.0, cur.1 - prev.1);
        let candidates = &out_edges[&cur];
        // Prefer the right turn (towards the interior), then straight, then left.
        let right = (-heading.1, heading.0);
        let left = (heading.1, -heading.0);
        let next = [right, heading, left]
            .iter()
            .map(|d| (cur.0 + d.0, cur.1 + d.1))
            .find(|n| candidates.contains(n))
            .unwrap_or(candidates[0]);
        prev = cur;
        cur = next;
    }

    let n = ring.len();
    let mut poly = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b, c) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
        let collinear = (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0) == 0;
        if !collinear {
            poly.push((b.0 as f64 - 0.5, b.1 as f64 - 0.5));
        }
    }
    poly
}

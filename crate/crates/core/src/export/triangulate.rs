//! Ear-clipping triangulation of polygons with holes.
//!
//! Holes are first joined to the outer ring by bridge edges, giving one
//! weakly simple ring. Every input vertex, including collinear ones, ends
//! up as a triangle corner so caps conform to the extruded side walls.

use super::{ring_area, ExportError};

type P = [f64; 2];

fn orient(a: P, b: P, c: P) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: P, b: P, p: P) -> bool {
    orient(a, b, p) == 0.0
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

/// Whether segments `ab` and `cd` share any point.
fn segments_touch(a: P, b: P, c: P, d: P) -> bool {
    let (d1, d2) = (orient(a, b, c), orient(a, b, d));
    let (d3, d4) = (orient(c, d, a), orient(c, d, b));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(a, b, c) || on_segment(a, b, d) || on_segment(c, d, a) || on_segment(c, d, b)
}

struct Seg {
    a: P,
    b: P,
    ring: usize,
    idx: usize,
}

/// Reject rings that cross themselves or each other. Rings may touch at
/// shared vertices.
pub fn check_simple(outer: &[P], holes: &[Vec<P>]) -> Result<(), ExportError> {
    let rings: Vec<&[P]> = std::iter::once(outer).chain(holes.iter().map(Vec::as_slice)).collect();
    let mut segs = Vec::new();
    for (r, ring) in rings.iter().enumerate() {
        if ring.len() < 3 {
            return Err(ExportError::Geometry(format!("ring {r} has fewer than three vertices")));
        }
        for i in 0..ring.len() {
            let (a, b) = (ring[i], ring[(i + 1) % ring.len()]);
            if a == b {
                return Err(ExportError::Geometry(format!(
                    "ring {r} has a zero-length edge at {a:?}"
                )));
            }
            segs.push(Seg { a, b, ring: r, idx: i });
        }
    }
    segs.sort_by(|s, t| s.a[0].min(s.b[0]).partial_cmp(&t.a[0].min(t.b[0])).unwrap());
    for i in 0..segs.len() {
        let s = &segs[i];
        let xmax = s.a[0].max(s.b[0]);
        for t in &segs[i + 1..] {
            if t.a[0].min(t.b[0]) > xmax {
                break;
            }
            let shared: Vec<P> = [s.a, s.b].into_iter().filter(|p| *p == t.a || *p == t.b).collect();
            let crossing = match shared.len() {
                0 => segments_touch(s.a, s.b, t.a, t.b),
                // only a collinear overlap beyond the shared vertex counts
                1 => {
                    let (so, to) = (
                        if s.a == shared[0] { s.b } else { s.a },
                        if t.a == shared[0] { t.b } else { t.a },
                    );
                    on_segment(s.a, s.b, to) || on_segment(t.a, t.b, so)
                }
                _ => true,
            };
            if crossing {
                return Err(ExportError::Geometry(format!(
                    "edges {} of ring {} and {} of ring {} intersect near {:?}",
                    s.idx, s.ring, t.idx, t.ring, s.a
                )));
            }
        }
    }
    Ok(())
}

/// Inside or on the boundary of the cone at `v` spanned by the polygon
/// interior between `prev -> v -> next` (counter-clockwise ring).
fn in_cone(prev: P, v: P, next: P, target: P) -> bool {
    if orient(prev, v, next) >= 0.0 {
        orient(v, next, target) >= 0.0 && orient(prev, v, target) >= 0.0
    } else {
        orient(v, next, target) >= 0.0 || orient(prev, v, target) >= 0.0
    }
}

fn blocked(m: P, p: P, rings: &[&[P]]) -> bool {
    for ring in rings {
        for i in 0..ring.len() {
            let (a, b) = (ring[i], ring[(i + 1) % ring.len()]);
            if a == m || b == m || a == p || b == p {
                continue;
            }
            if segments_touch(m, p, a, b) {
                return true;
            }
        }
    }
    false
}

/// Splice `hole` into `poly` through a visible bridge from its rightmost
/// vertex.
fn bridge(poly: &mut Vec<P>, hole: &[P], pending: &[Vec<P>]) -> Result<(), ExportError> {
    let m = (0..hole.len())
        .max_by(|&a, &b| hole[a].partial_cmp(&hole[b]).unwrap())
        .unwrap();
    let mp = hole[m];
    let mut order: Vec<usize> = (0..poly.len()).collect();
    let dist = |p: P| {
        let (dx, dy) = (p[0] - mp[0], p[1] - mp[1]);
        // prefer vertices to the right of the hole
        (if dx >= 0.0 { 0 } else { 1 }, dx * dx + dy * dy)
    };
    order.sort_by(|&a, &b| dist(poly[a]).partial_cmp(&dist(poly[b])).unwrap());
    let mut rings: Vec<&[P]> = vec![poly.as_slice(), hole];
    rings.extend(pending.iter().map(Vec::as_slice));
    let n = poly.len();
    for &i in &order {
        let p = poly[i];
        if p == mp {
            continue;
        }
        let (prev, next) = (poly[(i + n - 1) % n], poly[(i + 1) % n]);
        if !in_cone(prev, p, next, mp) {
            continue;
        }
        let hn = hole.len();
        if !in_cone(hole[(m + hn - 1) % hn], mp, hole[(m + 1) % hn], p) {
            continue;
        }
        if blocked(mp, p, &rings) {
            continue;
        }
        let mut out = Vec::with_capacity(n + hn + 2);
        out.extend_from_slice(&poly[..=i]);
        out.extend_from_slice(&hole[m..]);
        out.extend_from_slice(&hole[..=m]);
        out.extend_from_slice(&poly[i..]);
        *poly = out;
        return Ok(());
    }
    Err(ExportError::Geometry(
        "no visible bridge from a hole to its boundary".into(),
    ))
}

/// Triangulate a counter-clockwise outer ring with clockwise holes
/// (orientation is normalized here). Returns counter-clockwise triangles.
pub fn triangulate_polygon(outer: &[P], holes: &[Vec<P>]) -> Result<Vec<[P; 3]>, ExportError> {
    let mut poly = outer.to_vec();
    if ring_area(&poly) < 0.0 {
        poly.reverse();
    }
    let mut hs: Vec<Vec<P>> = holes
        .iter()
        .map(|h| {
            let mut h = h.clone();
            if ring_area(&h) > 0.0 {
                h.reverse();
            }
            h
        })
        .collect();
    // rightmost holes first so earlier bridges do not shadow later ones
    hs.sort_by(|a, b| {
        let ma = a.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let mb = b.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        mb.partial_cmp(&ma).unwrap()
    });
    for k in 0..hs.len() {
        bridge(&mut poly, &hs[k], &hs[k + 1..])?;
    }
    Ok(ear_clip(&poly))
}

fn ear_clip(pts: &[P]) -> Vec<[P; 3]> {
    let n = pts.len();
    let mut tris = Vec::with_capacity(n.saturating_sub(2));
    if n < 3 {
        return tris;
    }
    let mut prev: Vec<usize> = (0..n).map(|i| (i + n - 1) % n).collect();
    let mut next: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
    let mut alive = n;
    let mut cur = 0;
    let is_ear = |prev: &[usize], next: &[usize], i: usize, strict: bool| -> bool {
        let (a, b, c) = (pts[prev[i]], pts[i], pts[next[i]]);
        if orient(a, b, c) <= 0.0 {
            return false;
        }
        if !strict {
            return true;
        }
        let mut v = next[next[i]];
        while v != prev[i] {
            let p = pts[v];
            if p != a && p != b && p != c {
                if orient(a, b, p) >= 0.0 && orient(b, c, p) >= 0.0 && orient(c, a, p) >= 0.0 {
                    return false;
                }
            }
            v = next[v];
        }
        true
    };
    while alive > 3 {
        let mut found = None;
        for strict in [true, false] {
            let mut i = cur;
            for _ in 0..alive {
                if is_ear(&prev, &next, i, strict) {
                    found = Some(i);
                    break;
                }
                i = next[i];
            }
            if found.is_some() {
                break;
            }
        }
        // a fully degenerate remainder: drop one vertex to guarantee progress
        let i = found.unwrap_or(cur);
        let (a, c) = (prev[i], next[i]);
        if orient(pts[a], pts[i], pts[c]) > 0.0 {
            tris.push([pts[a], pts[i], pts[c]]);
        }
        next[a] = c;
        prev[c] = a;
        alive -= 1;
        cur = a;
    }
    let (a, b, c) = (prev[cur], cur, next[cur]);
    if orient(pts[a], pts[b], pts[c]) > 0.0 {
        tris.push([pts[a], pts[b], pts[c]]);
    }
    tris
}

//! Threshold splitting of a P1 field into polygonal regions.
//!
//! Every triangle is clipped against the linear constraints that define a
//! region, producing a convex piece per triangle. Pieces meet along shared
//! sub-edges whose endpoints carry symbolic keys, so interior edges cancel
//! exactly and the remaining directed edges form the region boundary.

use std::collections::{BTreeMap, HashMap};

use super::{ring_area, ExportError};

#[derive(Debug, Clone, PartialEq)]
pub struct PolygonWithHoles {
    /// Counter-clockwise.
    pub outer: Vec<[f64; 2]>,
    /// Clockwise.
    pub holes: Vec<Vec<[f64; 2]>>,
}

impl PolygonWithHoles {
    pub fn area(&self) -> f64 {
        ring_area(&self.outer) + self.holes.iter().map(|h| ring_area(h)).sum::<f64>()
    }

    pub fn rings(&self) -> impl Iterator<Item = &Vec<[f64; 2]>> {
        std::iter::once(&self.outer).chain(&self.holes)
    }
}

/// The two sides of a threshold split.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourPolygonSet {
    pub threshold: f64,
    pub above: Vec<PolygonWithHoles>,
    pub below: Vec<PolygonWithHoles>,
}

impl ContourPolygonSet {
    pub fn above_area(&self) -> f64 {
        self.above.iter().map(PolygonWithHoles::area).sum()
    }

    pub fn below_area(&self) -> f64 {
        self.below.iter().map(PolygonWithHoles::area).sum()
    }

    /// Length of the boundary of the above region that lies strictly inside
    /// the bounding box `[x0, y0, x1, y1]`, i.e. the iso-line length.
    pub fn interface_length(&self, bbox: [f64; 4]) -> f64 {
        let on_side = |p: [f64; 2], q: [f64; 2]| {
            (p[0] == bbox[0] && q[0] == bbox[0])
                || (p[0] == bbox[2] && q[0] == bbox[2])
                || (p[1] == bbox[1] && q[1] == bbox[1])
                || (p[1] == bbox[3] && q[1] == bbox[3])
        };
        let mut len = 0.0;
        for poly in &self.above {
            for ring in poly.rings() {
                for i in 0..ring.len() {
                    let (p, q) = (ring[i], ring[(i + 1) % ring.len()]);
                    if !on_side(p, q) {
                        len += (q[0] - p[0]).hypot(q[1] - p[1]);
                    }
                }
            }
        }
        len
    }
}

/// Restricts both regions to where `phi >= threshold`.
#[derive(Debug, Clone, Copy)]
pub struct RegionMask<'a> {
    pub phi: &'a [f64],
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Key {
    Node(usize),
    /// Crossing of field `2` on mesh edge `(0, 1)`, smaller node first.
    Edge(usize, usize, u8),
    /// Crossing of two constraint lines inside element `0`.
    Interior(usize),
}

#[derive(Debug, Clone, Copy)]
struct Vert {
    key: Key,
    bary: [f64; 3],
}

#[derive(Clone, Copy)]
struct Constraint<'a> {
    field: &'a [f64],
    id: u8,
    level: f64,
    /// `+1` keeps `field >= level`, `-1` keeps `field < level`.
    sign: f64,
}

impl Constraint<'_> {
    fn value(&self, tri: &[usize; 3], b: &[f64; 3]) -> f64 {
        let v: f64 = (0..3).map(|k| b[k] * self.field[tri[k]]).sum();
        self.sign * (v - self.level)
    }

    fn inside(&self, f: f64) -> bool {
        if self.sign > 0.0 {
            f >= 0.0
        } else {
            f > 0.0
        }
    }
}

struct Tracer<'a> {
    nodes: &'a [[f64; 2]],
    cells: &'a [[usize; 3]],
    points: HashMap<Key, [f64; 2]>,
    /// First key created at each exact position; later keys at the same
    /// spot (two fields crossing one edge at one point) collapse onto it.
    by_pos: HashMap<[u64; 2], Key>,
}

impl<'a> Tracer<'a> {
    fn new(nodes: &'a [[f64; 2]], cells: &'a [[usize; 3]]) -> Self {
        let mut t = Tracer {
            nodes,
            cells,
            points: HashMap::new(),
            by_pos: HashMap::new(),
        };
        for (i, &p) in nodes.iter().enumerate() {
            t.intern(Key::Node(i), p);
        }
        t
    }

    fn intern(&mut self, key: Key, pos: [f64; 2]) -> Key {
        let canon = *self.by_pos.entry([pos[0].to_bits(), pos[1].to_bits()]).or_insert(key);
        self.points.entry(canon).or_insert(pos);
        canon
    }

    fn common_edge(a: Key, b: Key) -> Option<(usize, usize)> {
        let ends = |k: Key| match k {
            Key::Node(n) => Some((n, usize::MAX)),
            Key::Edge(l, h, _) => Some((l, h)),
            Key::Interior(_) => None,
        };
        match (a, b) {
            (Key::Node(x), Key::Node(y)) => Some((x.min(y), x.max(y))),
            (Key::Node(x), other) | (other, Key::Node(x)) => {
                let (l, h) = ends(other)?;
                (x == l || x == h).then_some((l, h))
            }
            (Key::Edge(l, h, _), Key::Edge(l2, h2, _)) => (l == l2 && h == h2).then_some((l, h)),
            _ => None,
        }
    }

    fn clip(&mut self, e: usize, poly: &[Vert], c: &Constraint) -> Vec<Vert> {
        let tri = self.cells[e];
        let mut out: Vec<Vert> = Vec::with_capacity(poly.len() + 2);
        let push = |out: &mut Vec<Vert>, v: Vert| {
            if out.last().map_or(true, |l| l.key != v.key) {
                out.push(v);
            }
        };
        let n = poly.len();
        for i in 0..n {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            let (fp, fq) = (c.value(&tri, &p.bary), c.value(&tri, &q.bary));
            let (ip, iq) = (c.inside(fp), c.inside(fq));
            if ip {
                push(&mut out, p);
            }
            if ip == iq {
                continue;
            }
            if fp == 0.0 {
                push(&mut out, p);
            } else if fq == 0.0 {
                push(&mut out, q);
            } else {
                let v = self.crossing(e, p, q, fp, fq, c);
                push(&mut out, v);
            }
        }
        while out.len() > 1 && out[0].key == out[out.len() - 1].key {
            out.pop();
        }
        out
    }

    fn crossing(&mut self, e: usize, p: Vert, q: Vert, fp: f64, fq: f64, c: &Constraint) -> Vert {
        let tri = self.cells[e];
        if let Some((lo, hi)) = Self::common_edge(p.key, q.key) {
            // canonical parameter along the mesh edge so both neighbours agree
            let (vl, vh) = (c.field[lo], c.field[hi]);
            let s = (c.level - vl) / (vh - vl);
            let (a, b) = (self.nodes[lo], self.nodes[hi]);
            let key = self.intern(
                Key::Edge(lo, hi, c.id),
                [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])],
            );
            let mut bary = [0.0; 3];
            for k in 0..3 {
                if tri[k] == lo {
                    bary[k] = 1.0 - s;
                } else if tri[k] == hi {
                    bary[k] = s;
                }
            }
            Vert { key, bary }
        } else {
            let s = fp / (fp - fq);
            let mut bary = [0.0; 3];
            for k in 0..3 {
                bary[k] = p.bary[k] + s * (q.bary[k] - p.bary[k]);
            }
            let pos = (0..3).fold([0.0, 0.0], |acc, k| {
                let x = self.nodes[tri[k]];
                [acc[0] + bary[k] * x[0], acc[1] + bary[k] * x[1]]
            });
            let key = self.intern(Key::Interior(e), pos);
            Vert { key, bary }
        }
    }

    fn region(&mut self, constraints: &[Constraint]) -> Result<Vec<PolygonWithHoles>, ExportError> {
        let mut count: HashMap<(Key, Key), i64> = HashMap::new();
        for e in 0..self.cells.len() {
            let tri = self.cells[e];
            let mut poly: Vec<Vert> = (0..3)
                .map(|k| {
                    let mut bary = [0.0; 3];
                    bary[k] = 1.0;
                    Vert {
                        key: Key::Node(tri[k]),
                        bary,
                    }
                })
                .collect();
            for c in constraints {
                poly = self.clip(e, &poly, c);
                if poly.len() < 3 {
                    break;
                }
            }
            if poly.len() < 3 {
                continue;
            }
            for i in 0..poly.len() {
                let (a, b) = (poly[i].key, poly[(i + 1) % poly.len()].key);
                match count.get_mut(&(b, a)) {
                    Some(c) if *c > 0 => *c -= 1,
                    _ => *count.entry((a, b)).or_insert(0) += 1,
                }
            }
        }
        let mut outgoing: BTreeMap<Key, Vec<Key>> = BTreeMap::new();
        let mut edges: Vec<(Key, Key)> = Vec::new();
        for (&(a, b), &c) in &count {
            for _ in 0..c {
                edges.push((a, b));
            }
        }
        edges.sort_unstable();
        for &(a, b) in &edges {
            outgoing.entry(a).or_default().push(b);
        }
        let mut loops: Vec<Vec<[f64; 2]>> = self.trace(outgoing).into_iter().map(clean_ring).collect();
        loops.retain(|r| r.len() >= 3);
        separate_pinches(&mut loops, 1e-6 * self.diameter());
        assemble(loops)
    }

    fn diameter(&self) -> f64 {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in self.nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (hi[0] - lo[0]).hypot(hi[1] - lo[1])
    }

    fn pos(&self, k: Key) -> [f64; 2] {
        self.points[&k]
    }

    fn trace(&self, mut outgoing: BTreeMap<Key, Vec<Key>>) -> Vec<Vec<[f64; 2]>> {
        let mut loops = Vec::new();
        loop {
            let Some((&start, _)) = outgoing.iter().find(|(_, v)| !v.is_empty()) else {
                break;
            };
            let first = outgoing.get_mut(&start).unwrap().remove(0);
            let mut ring = vec![start];
            let (mut prev, mut cur) = (start, first);
            loop {
                let mut cands: Vec<Key> = outgoing.get(&cur).cloned().unwrap_or_default();
                if cur == start {
                    cands.push(first);
                }
                if cands.is_empty() {
                    // open chain; cannot happen for a consistent partition
                    break;
                }
                let next = self.leftmost(prev, cur, &cands);
                if cur == start && next == first {
                    break;
                }
                let list = outgoing.get_mut(&cur).unwrap();
                let idx = list.iter().position(|&k| k == next).unwrap();
                list.remove(idx);
                ring.push(cur);
                prev = cur;
                cur = next;
            }
            loops.push(ring.iter().map(|&k| self.pos(k)).collect());
        }
        loops
    }

    /// Among candidate successors choose the one reached first when turning
    /// clockwise from the incoming edge, which keeps the region on the left
    /// in its own wedge at pinch points.
    fn leftmost(&self, prev: Key, cur: Key, cands: &[Key]) -> Key {
        if cands.len() == 1 {
            return cands[0];
        }
        let c = self.pos(cur);
        let p = self.pos(prev);
        let back = (p[1] - c[1]).atan2(p[0] - c[0]);
        let tau = std::f64::consts::TAU;
        let mut best = (f64::INFINITY, cands[0]);
        for &k in cands {
            let q = self.pos(k);
            let a = (q[1] - c[1]).atan2(q[0] - c[0]);
            let mut turn = (back - a).rem_euclid(tau);
            if turn == 0.0 {
                turn = tau;
            }
            if turn < best.0 || (turn == best.0 && k < best.1) {
                best = (turn, k);
            }
        }
        best.1
    }
}

fn clean_ring(ring: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(ring.len());
    for p in ring {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    while out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    out
}

/// Where a region touches itself at a single point, move every occurrence
/// of that point a distance `eps` into its own wedge so the extruded solid
/// stays a 2-manifold. The region lies left of each ring edge.
fn separate_pinches(loops: &mut [Vec<[f64; 2]>], eps: f64) {
    let mut uses: HashMap<[u64; 2], usize> = HashMap::new();
    for ring in loops.iter() {
        for p in ring {
            *uses.entry([p[0].to_bits(), p[1].to_bits()]).or_default() += 1;
        }
    }
    for ring in loops.iter_mut() {
        let n = ring.len();
        let orig = ring.clone();
        for i in 0..n {
            let p = orig[i];
            if uses[&[p[0].to_bits(), p[1].to_bits()]] < 2 {
                continue;
            }
            let (prev, next) = (orig[(i + n - 1) % n], orig[(i + 1) % n]);
            let out_dir = (next[1] - p[1]).atan2(next[0] - p[0]);
            let back_dir = (prev[1] - p[1]).atan2(prev[0] - p[0]);
            let sweep = (back_dir - out_dir).rem_euclid(std::f64::consts::TAU);
            let bisector = out_dir + 0.5 * sweep;
            ring[i] = [p[0] + eps * bisector.cos(), p[1] + eps * bisector.sin()];
        }
    }
}

fn canonical(mut ring: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let start = (0..ring.len())
        .min_by(|&a, &b| ring[a].partial_cmp(&ring[b]).unwrap())
        .unwrap_or(0);
    ring.rotate_left(start);
    ring
}

fn point_in_ring(p: [f64; 2], ring: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Group traced loops into outer rings with their holes.
fn assemble(loops: Vec<Vec<[f64; 2]>>) -> Result<Vec<PolygonWithHoles>, ExportError> {
    let mut outers = Vec::new();
    let mut holes = Vec::new();
    for ring in loops {
        let a = ring_area(&ring);
        if a > 0.0 {
            outers.push((a, canonical(ring)));
        } else if a < 0.0 {
            holes.push(canonical(ring));
        }
    }
    let mut polys: Vec<PolygonWithHoles> = outers
        .iter()
        .map(|(_, r)| PolygonWithHoles {
            outer: r.clone(),
            holes: Vec::new(),
        })
        .collect();
    for hole in holes {
        // a point just to the right of a hole edge lies inside the hole
        let (p, q) = (hole[0], hole[1]);
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        let eps = 1e-6;
        let probe = [p[0] + 0.5 * dx + eps * dy, p[1] + 0.5 * dy - eps * dx];
        let owner = outers
            .iter()
            .enumerate()
            .filter(|(_, (_, r))| point_in_ring(probe, r))
            .min_by(|a, b| a.1 .0.partial_cmp(&b.1 .0).unwrap())
            .map(|(i, _)| i)
            .ok_or_else(|| ExportError::Geometry("hole without an enclosing boundary".into()))?;
        polys[owner].holes.push(hole);
    }
    for p in &mut polys {
        p.holes.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
    }
    polys.sort_by(|a, b| a.outer[0].partial_cmp(&b.outer[0]).unwrap());
    Ok(polys)
}

/// Split the triangulated domain at `chi = threshold`. Points with
/// `chi >= threshold` are above; with a mask, both sides are further
/// restricted to `phi >= mask.threshold`.
pub fn split_regions(
    nodes: &[[f64; 2]],
    cells: &[[usize; 3]],
    chi: &[f64],
    threshold: f64,
    mask: Option<RegionMask>,
) -> Result<ContourPolygonSet, ExportError> {
    if chi.len() != nodes.len() || mask.map_or(false, |m| m.phi.len() != nodes.len()) {
        return Err(ExportError::Argument(
            "nodal field length does not match the mesh".into(),
        ));
    }
    let mut tracer = Tracer::new(nodes, cells);
    let side = |sign: f64| Constraint {
        field: chi,
        id: 0,
        level: threshold,
        sign,
    };
    let mask_constraint = mask.map(|m| Constraint {
        field: m.phi,
        id: 1,
        level: m.threshold,
        sign: 1.0,
    });
    let mut region = |sign: f64| {
        let mut cs = vec![side(sign)];
        if let Some(m) = &mask_constraint {
            cs.push(*m);
        }
        tracer.region(&cs)
    };
    let above = region(1.0)?;
    let below = region(-1.0)?;
    Ok(ContourPolygonSet {
        threshold,
        above,
        below,
    })
}

/// Iso-contour of a nodal field without a material mask.
pub fn threshold_contour(
    nodes: &[[f64; 2]],
    cells: &[[usize; 3]],
    chi: &[f64],
    threshold: f64,
) -> Result<ContourPolygonSet, ExportError> {
    split_regions(nodes, cells, chi, threshold, None)
}

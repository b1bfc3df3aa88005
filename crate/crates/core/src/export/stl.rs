use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{check_simple, triangulate_polygon, ExportError, PolygonWithHoles};

type V3 = [f64; 3];

/// Closed triangle surface in 3D.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleSoup3D {
    pub triangles: Vec<[V3; 3]>,
}

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn key(p: V3) -> [u64; 3] {
    [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()]
}

impl TriangleSoup3D {
    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn normal(t: &[V3; 3]) -> V3 {
        let n = cross(sub(t[1], t[0]), sub(t[2], t[0]));
        let l = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if l == 0.0 {
            [0.0; 3]
        } else {
            [n[0] / l, n[1] / l, n[2] / l]
        }
    }

    /// Enclosed volume by the divergence theorem; positive for outward
    /// normals.
    pub fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let c = cross(t[1], t[2]);
                t[0][0] * c[0] + t[0][1] * c[1] + t[0][2] * c[2]
            })
            .sum::<f64>()
            / 6.0
    }

    /// Every undirected edge is used by exactly two triangles, once in each
    /// direction.
    pub fn is_watertight(&self) -> bool {
        let mut directed: HashMap<([u64; 3], [u64; 3]), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *directed.entry((key(t[k]), key(t[(k + 1) % 3]))).or_default() += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &c)| c == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// `V - E + F` of each connected component, ordered by first triangle.
    pub fn euler_characteristics(&self) -> Vec<i64> {
        let mut ids: HashMap<[u64; 3], usize> = HashMap::new();
        let mut tri_ids = Vec::with_capacity(self.triangles.len());
        for t in &self.triangles {
            let mut v = [0usize; 3];
            for k in 0..3 {
                let n = ids.len();
                v[k] = *ids.entry(key(t[k])).or_insert(n);
            }
            tri_ids.push(v);
        }
        let mut parent: Vec<usize> = (0..ids.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for t in &tri_ids {
            for k in 1..3 {
                let (a, b) = (find(&mut parent, t[0]), find(&mut parent, t[k]));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let mut order: Vec<usize> = Vec::new();
        let mut stats: HashMap<usize, (i64, std::collections::HashSet<(usize, usize)>, i64)> = HashMap::new();
        for t in &tri_ids {
            let r = find(&mut parent, t[0]);
            if !stats.contains_key(&r) {
                order.push(r);
            }
            let s = stats.entry(r).or_default();
            s.2 += 1;
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                s.1.insert((a.min(b), a.max(b)));
            }
        }
        for v in 0..parent.len() {
            let r = find(&mut parent, v);
            stats.get_mut(&r).unwrap().0 += 1;
        }
        order
            .iter()
            .map(|r| {
                let (v, e, f) = &stats[r];
                v - e.len() as i64 + f
            })
            .collect()
    }

    /// Binary STL: 80-byte header, triangle count, then 50-byte records.
    pub fn to_stl_bytes(&self, header: &str) -> Vec<u8> {
        let mut out = Vec::with_capacity(84 + 50 * self.triangles.len());
        let mut h = [0u8; 80];
        let hb = header.as_bytes();
        h[..hb.len().min(80)].copy_from_slice(&hb[..hb.len().min(80)]);
        out.extend_from_slice(&h);
        out.extend_from_slice(&(self.triangles.len() as u32).to_le_bytes());
        for t in &self.triangles {
            for c in Self::normal(t).iter().chain(t.iter().flatten()) {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
            out.extend_from_slice(&0u16.to_le_bytes());
        }
        out
    }

    pub fn from_stl_bytes(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < 84 {
            return Err("file shorter than the STL header".into());
        }
        let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
        if bytes.len() != 84 + 50 * n {
            return Err(format!(
                "header declares {n} triangles but the file holds {} bytes",
                bytes.len()
            ));
        }
        let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64;
        let triangles = (0..n)
            .map(|i| {
                let o = 84 + 50 * i + 12;
                let v = |k: usize| [f(o + 12 * k), f(o + 12 * k + 4), f(o + 12 * k + 8)];
                [v(0), v(1), v(2)]
            })
            .collect();
        Ok(Self { triangles })
    }
}

/// Prism over the polygons between `z = 0` and `z = height`.
pub fn extrude_region(polys: &[PolygonWithHoles], height: f64) -> Result<TriangleSoup3D, ExportError> {
    if !(height > 0.0) || !height.is_finite() {
        return Err(ExportError::Argument(format!(
            "extrusion height must be positive, got {height}"
        )));
    }
    let mut soup = TriangleSoup3D::default();
    for poly in polys {
        check_simple(&poly.outer, &poly.holes)?;
        for t in triangulate_polygon(&poly.outer, &poly.holes)? {
            let lift = |p: [f64; 2], z: f64| [p[0], p[1], z];
            soup.triangles
                .push([lift(t[0], height), lift(t[1], height), lift(t[2], height)]);
            soup.triangles.push([lift(t[0], 0.0), lift(t[2], 0.0), lift(t[1], 0.0)]);
        }
        // region lies left of each ring edge, so walls face right
        for ring in poly.rings() {
            for i in 0..ring.len() {
                let (p, q) = (ring[i], ring[(i + 1) % ring.len()]);
                let (p0, q0) = ([p[0], p[1], 0.0], [q[0], q[1], 0.0]);
                let (p1, q1) = ([p[0], p[1], height], [q[0], q[1], height]);
                soup.triangles.push([p0, q0, q1]);
                soup.triangles.push([p0, q1, p1]);
            }
        }
    }
    Ok(soup)
}

pub fn write_stl(path: &Path, soup: &TriangleSoup3D) -> Result<(), ExportError> {
    if path.as_os_str().is_empty() {
        return Err(ExportError::EmptyPath);
    }
    let mut f = fs::File::create(path).map_err(|e| ExportError::io(path, e))?;
    f.write_all(&soup.to_stl_bytes("gradtopo extruded region"))
        .map_err(|e| ExportError::io(path, e))
}

pub fn read_stl(path: &Path) -> Result<TriangleSoup3D, ExportError> {
    let bytes = fs::read(path).map_err(|e| ExportError::io(path, e))?;
    TriangleSoup3D::from_stl_bytes(&bytes).map_err(|message| ExportError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message,
    })
}

/// Extrude, verify the surface is closed, and write it as binary STL.
pub fn extrude_to_stl(polys: &[PolygonWithHoles], height: f64, path: &Path) -> Result<TriangleSoup3D, ExportError> {
    let soup = extrude_region(polys, height)?;
    if !soup.is_watertight() {
        return Err(ExportError::Geometry("extruded surface is not closed".into()));
    }
    write_stl(path, &soup)?;
    Ok(soup)
}

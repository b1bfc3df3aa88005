//! Structured triangulation of the rectangle `[0, a] x [0, b]`.

use crate::config::{Region, RunConfig, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
    /// The single element owning this edge.
    pub element: usize,
}

/// Loaded segment on one side of the rectangle, in the coordinate running
/// along that side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TractionZone {
    pub side: Side,
    pub start: f64,
    pub end: f64,
}

impl TractionZone {
    pub fn from_config(cfg: &RunConfig) -> Self {
        let c = cfg.domain.traction_center();
        let l = cfg.domain.traction_length();
        Self {
            side: cfg.domain.traction_side,
            start: c - 0.5 * l,
            end: c + 0.5 * l,
        }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    pub nodes: Vec<[f64; 2]>,
    /// Counter-clockwise node triples.
    pub elements: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub element_areas: Vec<f64>,
    pub traction_zone: Option<TractionZone>,
}

impl Mesh {
    /// `(nx+1)(ny+1)` nodes numbered column by column and `2 nx ny`
    /// triangles; the cell diagonal alternates in a checkerboard pattern.
    /// The side `x = 0` is Dirichlet; edges overlapping `zone` are Neumann.
    pub fn rectangle(width: f64, height: f64, nx: usize, ny: usize, zone: Option<TractionZone>) -> Self {
        assert!(nx >= 1 && ny >= 1, "mesh needs at least one cell per side");
        let id = |i: usize, j: usize| i * (ny + 1) + j;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for i in 0..=nx {
            for j in 0..=ny {
                let x = if i == nx { width } else { width * i as f64 / nx as f64 };
                let y = if j == ny { height } else { height * j as f64 / ny as f64 };
                nodes.push([x, y]);
            }
        }
        let mut elements = Vec::with_capacity(2 * nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                if (i + j) % 2 == 0 {
                    elements.push([a, b, c]);
                    elements.push([a, c, d]);
                } else {
                    elements.push([a, b, d]);
                    elements.push([b, c, d]);
                }
            }
        }
        let element_areas = elements
            .iter()
            .map(|e| signed_area(nodes[e[0]], nodes[e[1]], nodes[e[2]]))
            .collect();

        let mut mesh = Mesh {
            width,
            height,
            nx,
            ny,
            nodes,
            elements,
            boundary_edges: Vec::new(),
            element_areas,
            traction_zone: zone,
        };
        mesh.boundary_edges = mesh.tag_boundary();
        mesh
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn area(&self) -> f64 {
        self.element_areas.iter().sum()
    }

    /// Overlap length of a boundary edge with the traction zone.
    pub fn traction_overlap(&self, edge: [usize; 2]) -> Option<(f64, f64)> {
        let zone = self.traction_zone?;
        let (p, q) = (self.nodes[edge[0]], self.nodes[edge[1]]);
        let on_side = match zone.side {
            Side::Right => p[0] == self.width && q[0] == self.width,
            Side::Top => p[1] == self.height && q[1] == self.height,
            Side::Bottom => p[1] == 0.0 && q[1] == 0.0,
        };
        if !on_side {
            return None;
        }
        let axis = if zone.side == Side::Right { 1 } else { 0 };
        let (s0, s1) = (p[axis].min(q[axis]), p[axis].max(q[axis]));
        let lo = s0.max(zone.start);
        let hi = s1.min(zone.end);
        (hi > lo).then_some((lo, hi))
    }

    fn tag_boundary(&self) -> Vec<BoundaryEdge> {
        use std::collections::HashMap;
        let mut count: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (e, tri) in self.elements.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                count.entry(key).or_insert((0, e)).0 += 1;
            }
        }
        let mut out = Vec::new();
        // walk elements in order so the edge list is deterministic
        for (e, tri) in self.elements.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if count[&(a.min(b), a.max(b))].0 != 1 {
                    continue;
                }
                let (p, q) = (self.nodes[a], self.nodes[b]);
                let tag = if p[0] == 0.0 && q[0] == 0.0 {
                    BoundaryTag::Dirichlet
                } else if self.traction_overlap([a, b]).is_some() {
                    BoundaryTag::Neumann
                } else {
                    BoundaryTag::Free
                };
                out.push(BoundaryEdge {
                    nodes: [a, b],
                    tag,
                    element: e,
                });
            }
        }
        out
    }

    /// Nodes on Dirichlet-tagged edges, sorted.
    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.tag == BoundaryTag::Dirichlet)
            .flat_map(|e| e.nodes)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Node-to-element incidence.
    pub fn node_elements(&self) -> Vec<Vec<usize>> {
        let mut star = vec![Vec::new(); self.node_count()];
        for (e, tri) in self.elements.iter().enumerate() {
            for &n in tri {
                star[n].push(e);
            }
        }
        star
    }

    /// Gradients of the three barycentric shape functions on element `e`.
    pub fn shape_gradients(&self, e: usize) -> [[f64; 2]; 3] {
        let [i, j, k] = self.elements[e];
        let (p, q, r) = (self.nodes[i], self.nodes[j], self.nodes[k]);
        let two_a = 2.0 * self.element_areas[e];
        [
            [(q[1] - r[1]) / two_a, (r[0] - q[0]) / two_a],
            [(r[1] - p[1]) / two_a, (p[0] - r[0]) / two_a],
            [(p[1] - q[1]) / two_a, (q[0] - p[0]) / two_a],
        ]
    }

    pub fn build(cfg: &RunConfig) -> Self {
        build_rect_mesh(cfg)
    }
}

pub fn signed_area(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

pub fn build_rect_mesh(cfg: &RunConfig) -> Mesh {
    let d = &cfg.domain;
    Mesh::rectangle(d.width, d.height, d.nx, d.ny, Some(TractionZone::from_config(cfg)))
}

/// Indices of all nodes inside the closed box.
pub fn locate_region_nodes(mesh: &Mesh, region: &Region) -> Vec<usize> {
    let eps = 1e-9 * mesh.width.max(mesh.height);
    mesh.nodes
        .iter()
        .enumerate()
        .filter(|(_, p)| region.contains(**p, eps))
        .map(|(i, _)| i)
        .collect()
}

/// Legacy-VTK dump of the bare mesh with boundary tags per node.
pub fn write_mesh_vtk(mesh: &Mesh, w: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(
        w,
        "# vtk DataFile Version 3.0\ngradtopo mesh\nASCII\nDATASET UNSTRUCTURED_GRID"
    )?;
    writeln!(w, "POINTS {} double", mesh.node_count())?;
    for p in &mesh.nodes {
        writeln!(w, "{} {} 0", p[0], p[1])?;
    }
    writeln!(w, "CELLS {} {}", mesh.element_count(), 4 * mesh.element_count())?;
    for t in &mesh.elements {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {}", mesh.element_count())?;
    for _ in &mesh.elements {
        writeln!(w, "5")?;
    }
    let mut tag = vec![0i32; mesh.node_count()];
    for e in &mesh.boundary_edges {
        let t = match e.tag {
            BoundaryTag::Dirichlet => 1,
            BoundaryTag::Neumann => 2,
            BoundaryTag::Free => 3,
        };
        for n in e.nodes {
            tag[n] = tag[n].max(t);
        }
    }
    writeln!(
        w,
        "POINT_DATA {}\nSCALARS boundary_tag int 1\nLOOKUP_TABLE default",
        mesh.node_count()
    )?;
    for t in tag {
        writeln!(w, "{t}")?;
    }
    Ok(())
}

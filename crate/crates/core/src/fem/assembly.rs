use nalgebra::{Matrix3, SMatrix, Vector3};

use super::sparse::SparseSymMatrix;
use super::{ElementStress, TriangleRule};
use crate::config::RunConfig;
use crate::material::MaterialModel;
use crate::mesh::{BoundaryTag, Mesh};

type Matrix3x6 = SMatrix<f64, 3, 6>;

/// Strain-displacement matrix of a P1 triangle, engineering shear.
pub fn strain_matrix(mesh: &Mesh, e: usize) -> Matrix3x6 {
    let g = mesh.shape_gradients(e);
    let mut b = Matrix3x6::zeros();
    for a in 0..3 {
        b[(0, 2 * a)] = g[a][0];
        b[(1, 2 * a + 1)] = g[a][1];
        b[(2, 2 * a)] = g[a][1];
        b[(2, 2 * a + 1)] = g[a][0];
    }
    b
}

fn element_dofs(tri: &[usize; 3]) -> [usize; 6] {
    [
        2 * tri[0],
        2 * tri[0] + 1,
        2 * tri[1],
        2 * tri[1] + 1,
        2 * tri[2],
        2 * tri[2] + 1,
    ]
}

/// Constant strain of element `e` under nodal displacements `u`.
pub fn element_strain(mesh: &Mesh, e: usize, u: &[f64]) -> Vector3<f64> {
    let ue = nalgebra::Vector6::from_iterator(element_dofs(&mesh.elements[e]).iter().map(|&d| u[d]));
    strain_matrix(mesh, e) * ue
}

/// Element stiffness scale `s_e = sum_q w_q s(phi_q, chi_q)`.
pub fn element_scale(material: &MaterialModel, rule: &TriangleRule, phi: [f64; 3], chi: [f64; 3]) -> f64 {
    rule.points
        .iter()
        .map(|(l, w)| w * material.scale(interp(l, phi), interp(l, chi)))
        .sum()
}

/// Partial derivatives of `s_e` with respect to the three nodal `phi` and
/// `chi` values.
pub fn element_scale_grad(
    material: &MaterialModel,
    rule: &TriangleRule,
    phi: [f64; 3],
    chi: [f64; 3],
) -> ([f64; 3], [f64; 3]) {
    let mut dp = [0.0; 3];
    let mut dc = [0.0; 3];
    for (l, w) in rule.points {
        let (p, c) = (interp(l, phi), interp(l, chi));
        let sp = material.scale_dphi(p, c);
        let sc = material.scale_dchi(p, c);
        for a in 0..3 {
            dp[a] += w * sp * l[a];
            dc[a] += w * sc * l[a];
        }
    }
    (dp, dc)
}

pub(crate) fn interp(l: &[f64; 3], v: [f64; 3]) -> f64 {
    l[0] * v[0] + l[1] * v[1] + l[2] * v[2]
}

pub(crate) fn gather(tri: &[usize; 3], v: &[f64]) -> [f64; 3] {
    [v[tri[0]], v[tri[1]], v[tri[2]]]
}

pub fn element_scales(
    mesh: &Mesh,
    material: &MaterialModel,
    rule: &TriangleRule,
    phi: &[f64],
    chi: &[f64],
) -> Vec<f64> {
    mesh.elements
        .iter()
        .map(|t| element_scale(material, rule, gather(t, phi), gather(t, chi)))
        .collect()
}

/// Elasticity stiffness assembly with a fixed sparsity pattern; only the
/// per-element stiffness scale changes between design iterations.
#[derive(Debug, Clone)]
pub struct ElasticAssembler {
    pattern: SparseSymMatrix,
    slots: Vec<[usize; 36]>,
    unit: Vec<[f64; 36]>,
}

impl ElasticAssembler {
    pub fn new(mesh: &Mesh, base: &Matrix3<f64>) -> Self {
        let ndof = 2 * mesh.node_count();
        let mut rows = vec![Vec::new(); ndof];
        for tri in &mesh.elements {
            let d = element_dofs(tri);
            for &i in &d {
                rows[i].extend_from_slice(&d);
            }
        }
        let pattern = SparseSymMatrix::from_pattern(ndof, rows);
        let mut slots = Vec::with_capacity(mesh.element_count());
        let mut unit = Vec::with_capacity(mesh.element_count());
        for (e, tri) in mesh.elements.iter().enumerate() {
            let d = element_dofs(tri);
            let b = strain_matrix(mesh, e);
            let k = b.transpose() * base * b * mesh.element_areas[e];
            let mut s = [0usize; 36];
            let mut u = [0.0; 36];
            for i in 0..6 {
                for j in 0..6 {
                    s[6 * i + j] = pattern.find(d[i], d[j]).expect("pattern covers element");
                    u[6 * i + j] = k[(i, j)];
                }
            }
            slots.push(s);
            unit.push(u);
        }
        Self { pattern, slots, unit }
    }

    /// `sum_e scale_e * A_e B_e^T K_A B_e`.
    pub fn assemble(&self, scales: &[f64]) -> SparseSymMatrix {
        assert_eq!(scales.len(), self.slots.len());
        let mut m = self.pattern.clone();
        let vals = m.values_mut();
        for ((slots, unit), &s) in self.slots.iter().zip(&self.unit).zip(scales) {
            for k in 0..36 {
                vals[slots[k]] += s * unit[k];
            }
        }
        m
    }
}

/// P1 elasticity stiffness with `K(phi, chi)` taken at element centroids.
pub fn assemble_elastic_stiffness(mesh: &Mesh, material: &MaterialModel, phi: &[f64], chi: &[f64]) -> SparseSymMatrix {
    let scales = element_scales(mesh, material, &TriangleRule::centroid(), phi, chi);
    ElasticAssembler::new(mesh, &material.base).assemble(&scales)
}

/// Boundary traction `g` integrated exactly over the overlap of each
/// Neumann edge with the loaded segment.
pub fn traction_load(mesh: &Mesh, g: [f64; 2]) -> Vec<f64> {
    let mut f = vec![0.0; 2 * mesh.node_count()];
    let Some(zone) = mesh.traction_zone else {
        return f;
    };
    let axis = if zone.side == crate::config::Side::Right { 1 } else { 0 };
    for edge in mesh.boundary_edges.iter().filter(|e| e.tag == BoundaryTag::Neumann) {
        let Some((lo, hi)) = mesh.traction_overlap(edge.nodes) else {
            continue;
        };
        let [p, q] = edge.nodes;
        let (sp, sq) = (mesh.nodes[p][axis], mesh.nodes[q][axis]);
        let mid = 0.5 * (lo + hi);
        // linear shape functions at the overlap midpoint integrate exactly
        let np = (sq - mid) / (sq - sp);
        let nq = 1.0 - np;
        let len = hi - lo;
        for (node, w) in [(p, np), (q, nq)] {
            f[2 * node] += g[0] * w * len;
            f[2 * node + 1] += g[1] * w * len;
        }
    }
    f
}

/// `int phi f . N_i` with the consistent P1 mass matrix.
pub fn body_load(mass: &SparseSymMatrix, f: [f64; 2], phi: &[f64]) -> Vec<f64> {
    let mphi = mass.mul_vec(phi);
    let mut out = vec![0.0; 2 * phi.len()];
    for (i, m) in mphi.iter().enumerate() {
        out[2 * i] = m * f[0];
        out[2 * i + 1] = m * f[1];
    }
    out
}

/// Right-hand side of the state equation: traction plus phi-weighted body force.
pub fn assemble_load(mesh: &Mesh, cfg: &RunConfig, phi: &[f64]) -> Vec<f64> {
    let mut f = traction_load(mesh, cfg.domain.traction);
    if cfg.domain.body_force != [0.0, 0.0] {
        let b = body_load(&assemble_scalar_mass(mesh, 1.0), cfg.domain.body_force, phi);
        f.iter_mut().zip(b).for_each(|(a, b)| *a += b);
    }
    f
}

fn scalar_pattern(mesh: &Mesh) -> SparseSymMatrix {
    let mut rows = vec![Vec::new(); mesh.node_count()];
    for tri in &mesh.elements {
        for &i in tri {
            rows[i].extend_from_slice(tri);
        }
    }
    SparseSymMatrix::from_pattern(mesh.node_count(), rows)
}

/// Consistent P1 mass matrix scaled by `coeff`.
pub fn assemble_scalar_mass(mesh: &Mesh, coeff: f64) -> SparseSymMatrix {
    let mut m = scalar_pattern(mesh);
    for (e, tri) in mesh.elements.iter().enumerate() {
        let a = mesh.element_areas[e] / 12.0 * coeff;
        for (i, &ni) in tri.iter().enumerate() {
            for (j, &nj) in tri.iter().enumerate() {
                let k = m.find(ni, nj).unwrap();
                m.values_mut()[k] += if i == j { 2.0 * a } else { a };
            }
        }
    }
    m
}

/// P1 Laplacian scaled by `coeff`; shares the mass-matrix sparsity.
pub fn assemble_scalar_stiffness(mesh: &Mesh, coeff: f64) -> SparseSymMatrix {
    let mut m = scalar_pattern(mesh);
    for (e, tri) in mesh.elements.iter().enumerate() {
        let g = mesh.shape_gradients(e);
        let a = mesh.element_areas[e] * coeff;
        for (i, &ni) in tri.iter().enumerate() {
            for (j, &nj) in tri.iter().enumerate() {
                let k = m.find(ni, nj).unwrap();
                m.values_mut()[k] += a * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            }
        }
    }
    m
}

/// Row `r` with `r . phi = int phi dx` for any P1 field.
pub fn assemble_volume_row(mesh: &Mesh) -> Vec<f64> {
    let mut r = vec![0.0; mesh.node_count()];
    for (e, tri) in mesh.elements.iter().enumerate() {
        for &n in tri {
            r[n] += mesh.element_areas[e] / 3.0;
        }
    }
    r
}

/// Per-element stress `K(phi_e, chi_e) eps(u)` with the scale at the
/// element centroid.
pub fn compute_element_stress(
    mesh: &Mesh,
    material: &MaterialModel,
    phi: &[f64],
    chi: &[f64],
    u: &[f64],
) -> ElementStress {
    let scales = element_scales(mesh, material, &TriangleRule::centroid(), phi, chi);
    stress_from_scales(mesh, material, &scales, u)
}

pub fn stress_from_scales(mesh: &Mesh, material: &MaterialModel, scales: &[f64], u: &[f64]) -> ElementStress {
    ElementStress(
        (0..mesh.element_count())
            .map(|e| material.base * element_strain(mesh, e, u) * scales[e])
            .collect(),
    )
}

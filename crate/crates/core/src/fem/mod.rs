//! P1 finite elements on the triangulated rectangle: assembly of the
//! elasticity and scalar phase-field operators, loads, element stresses,
//! and the linear solvers used by the optimizer.

mod assembly;
pub mod solve;
pub mod sparse;

use nalgebra::Vector3;

pub use assembly::{
    assemble_elastic_stiffness, assemble_load, assemble_scalar_mass, assemble_scalar_stiffness, assemble_volume_row,
    body_load, compute_element_stress, element_scale, element_scale_grad, element_scales, element_strain,
    strain_matrix, stress_from_scales, traction_load, ElasticAssembler,
};
pub(crate) use assembly::{gather, interp};
pub use solve::{solve_saddle, solve_spd, PreparedSolver, SolveError};
pub use sparse::{dot, norm, SparseSymMatrix};

use crate::config::Quadrature;

/// Barycentric quadrature on a triangle; weights sum to one and are
/// multiplied by the element area by the caller.
#[derive(Debug, Clone, Copy)]
pub struct TriangleRule {
    pub points: &'static [([f64; 3], f64)],
}

const THIRD: f64 = 1.0 / 3.0;
const CENTROID: [([f64; 3], f64); 1] = [([THIRD, THIRD, THIRD], 1.0)];

const W1: f64 = 0.223381589678011;
const A1: f64 = 0.445948490915965;
const B1: f64 = 0.108103018168070;
const W2: f64 = 0.109951743655322;
const A2: f64 = 0.091576213509771;
const B2: f64 = 0.816847572980459;
const DEGREE4: [([f64; 3], f64); 6] = [
    ([A1, A1, B1], W1),
    ([A1, B1, A1], W1),
    ([B1, A1, A1], W1),
    ([A2, A2, B2], W2),
    ([A2, B2, A2], W2),
    ([B2, A2, A2], W2),
];

impl TriangleRule {
    pub fn centroid() -> Self {
        Self { points: &CENTROID }
    }

    /// Six-point rule exact for polynomials of degree four.
    pub fn degree4() -> Self {
        Self { points: &DEGREE4 }
    }

    pub fn from_config(q: Quadrature) -> Self {
        match q {
            Quadrature::Centroid => Self::centroid(),
            Quadrature::Exact => Self::degree4(),
        }
    }
}

/// Constant Voigt stress `(s11, s22, s12)` of each element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementStress(pub Vec<Vector3<f64>>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Phi,
    Chi,
    Displacement,
}

/// Nodal values of a P1 field; displacements interleave `(u_x, u_y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    pub kind: FieldKind,
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn new(kind: FieldKind, values: Vec<f64>) -> Self {
        Self { kind, values }
    }

    pub fn components(&self) -> usize {
        match self.kind {
            FieldKind::Displacement => 2,
            _ => 1,
        }
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / self.components()
    }
}

//! Von Mises stress, its p-norm aggregate, and the stress penalty
//! `F = (sigma_pn - 1)^2` with the adjoint load it induces.

use nalgebra::Vector3;

use crate::config::StressConfig;
use crate::fem::{strain_matrix, ElementStress};
use crate::mesh::Mesh;

pub fn von_mises(s: &Vector3<f64>) -> f64 {
    (s[0] * s[0] - s[0] * s[1] + s[1] * s[1] + 3.0 * s[2] * s[2])
        .max(0.0)
        .sqrt()
}

/// Gradient of [`von_mises`] with respect to `(s11, s22, s12)`; zero at the
/// origin.
pub fn von_mises_grad(s: &Vector3<f64>) -> Vector3<f64> {
    let vm = von_mises(s);
    if vm == 0.0 {
        return Vector3::zeros();
    }
    Vector3::new(2.0 * s[0] - s[1], 2.0 * s[1] - s[0], 6.0 * s[2]) / (2.0 * vm)
}

pub fn element_von_mises(stress: &ElementStress) -> Vec<f64> {
    stress.0.iter().map(von_mises).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StressAggregate {
    pub sigma_pn: f64,
    /// Per-element von Mises stress.
    pub sigma_e: Vec<f64>,
    pub f_value: f64,
    /// `dF / d sigma` per element (Voigt).
    pub df_dsigma: Vec<Vector3<f64>>,
}

impl StressAggregate {
    /// Pointwise density `F_sigma` of the penalty derivative such that
    /// `d/d sigma_e (|Omega| F) = A_e F_sigma,e`.
    pub fn density(&self, mesh: &Mesh) -> Vec<Vector3<f64>> {
        let area = mesh.area();
        self.df_dsigma
            .iter()
            .zip(&mesh.element_areas)
            .map(|(g, a)| g * (area / a))
            .collect()
    }

    pub fn max_von_mises(&self) -> f64 {
        self.sigma_e.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PNorm {
    pub p: f64,
    pub yield_stress: f64,
    /// Divide the integral by the domain area.
    pub normalized: bool,
}

impl PNorm {
    pub fn from_config(cfg: &StressConfig) -> Self {
        Self {
            p: cfg.pnorm_p as f64,
            yield_stress: cfg.yield_stress,
            normalized: cfg.normalized,
        }
    }

    pub fn aggregate(&self, mesh: &Mesh, stress: &ElementStress) -> StressAggregate {
        let sigma_e = element_von_mises(stress);
        let denom = if self.normalized { mesh.area() } else { 1.0 };
        let p = self.p;
        let ratios: Vec<f64> = sigma_e.iter().map(|s| s / self.yield_stress).collect();
        let rmax = ratios.iter().copied().fold(0.0, f64::max);
        let sigma_pn = if rmax == 0.0 {
            0.0
        } else {
            let sum: f64 = ratios
                .iter()
                .zip(&mesh.element_areas)
                .map(|(r, a)| a / denom * (r / rmax).powf(p))
                .sum();
            rmax * sum.powf(1.0 / p)
        };
        let f_value = (sigma_pn - 1.0).powi(2);
        let df_dsigma = if sigma_pn == 0.0 {
            vec![Vector3::zeros(); sigma_e.len()]
        } else {
            let lead = 2.0 * (sigma_pn - 1.0) / self.yield_stress;
            stress
                .0
                .iter()
                .zip(&ratios)
                .zip(&mesh.element_areas)
                .map(|((s, r), a)| von_mises_grad(s) * (lead * a / denom * (r / sigma_pn).powf(p - 1.0)))
                .collect()
        };
        StressAggregate {
            sigma_pn,
            sigma_e,
            f_value,
            df_dsigma,
        }
    }
}

pub fn pnorm_aggregate(mesh: &Mesh, stress: &ElementStress, yield_stress: f64, p: f64) -> StressAggregate {
    PNorm {
        p,
        yield_stress,
        normalized: true,
    }
    .aggregate(mesh, stress)
}

/// Adjoint right-hand side `kappa5 sum_e A_e B_e^T s_e K_A F_sigma,e` for a
/// pointwise penalty-derivative density.
pub fn adjoint_stress_load(
    mesh: &Mesh,
    base: &nalgebra::Matrix3<f64>,
    scales: &[f64],
    density: &[Vector3<f64>],
    kappa5: f64,
) -> Vec<f64> {
    let mut q = vec![0.0; 2 * mesh.node_count()];
    if kappa5 == 0.0 {
        return q;
    }
    for (e, tri) in mesh.elements.iter().enumerate() {
        if density[e] == Vector3::zeros() {
            continue;
        }
        let v = strain_matrix(mesh, e).transpose() * (base * density[e]) * (kappa5 * scales[e] * mesh.element_areas[e]);
        for (a, &n) in tri.iter().enumerate() {
            q[2 * n] += v[2 * a];
            q[2 * n + 1] += v[2 * a + 1];
        }
    }
    q
}

//! Graded elasticity interpolation and the double-well potential.
//!
//! The stiffness at a point is a scalar multiple of the plane-stress base
//! tensor `K_A`:
//!
//! ```text
//! K(phi, chi) = km(chi) * (phi^3 + gamma^2 (1 - phi)^3) * K_A
//! km(chi)     = chi + beta (1 - chi)          (default)
//!             = chi + (1 - chi) / beta        (literal_km)
//! ```
//!
//! so material (`phi = 1`) with full micro density (`chi = 1`) recovers
//! `K_A`, and the void phase keeps a `gamma^2` fraction of the stiffness.

use nalgebra::Matrix3;

use crate::config::MaterialConfig;

/// Plane-stress elasticity in Voigt form `(s11, s22, s12)` with engineering
/// shear strain.
pub fn plane_stress_tensor(e: f64, nu: f64) -> Matrix3<f64> {
    let c = e / (1.0 - nu * nu);
    Matrix3::new(c, c * nu, 0.0, c * nu, c, 0.0, 0.0, 0.0, c * (1.0 - nu) / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialModel {
    pub base: Matrix3<f64>,
    pub beta: f64,
    /// Interface width; the void phase is scaled by its square.
    pub gamma: f64,
    pub literal_km: bool,
}

impl MaterialModel {
    pub fn new(youngs_modulus: f64, poisson: f64, beta: f64, gamma: f64) -> Self {
        Self {
            base: plane_stress_tensor(youngs_modulus, poisson),
            beta,
            gamma,
            literal_km: false,
        }
    }

    pub fn from_config(cfg: &MaterialConfig) -> Self {
        Self {
            literal_km: cfg.literal_km,
            ..Self::new(cfg.youngs_modulus, cfg.poisson, cfg.beta, cfg.gamma_phi)
        }
    }

    fn km(&self, chi: f64) -> f64 {
        if self.literal_km {
            chi + (1.0 - chi) / self.beta
        } else {
            chi + self.beta * (1.0 - chi)
        }
    }

    fn dkm(&self) -> f64 {
        if self.literal_km {
            1.0 - 1.0 / self.beta
        } else {
            1.0 - self.beta
        }
    }

    /// Scalar factor `s(phi, chi)` with `K(phi, chi) = s K_A`.
    pub fn scale(&self, phi: f64, chi: f64) -> f64 {
        let (phi, chi) = (phi.clamp(0.0, 1.0), chi.clamp(0.0, 1.0));
        let g2 = self.gamma * self.gamma;
        self.km(chi) * (phi.powi(3) + g2 * (1.0 - phi).powi(3))
    }

    pub fn scale_dphi(&self, phi: f64, chi: f64) -> f64 {
        let (phi, chi) = (phi.clamp(0.0, 1.0), chi.clamp(0.0, 1.0));
        let g2 = self.gamma * self.gamma;
        self.km(chi) * 3.0 * (phi * phi - g2 * (1.0 - phi).powi(2))
    }

    pub fn scale_dchi(&self, phi: f64, _chi: f64) -> f64 {
        let phi = phi.clamp(0.0, 1.0);
        let g2 = self.gamma * self.gamma;
        self.dkm() * (phi.powi(3) + g2 * (1.0 - phi).powi(3))
    }

    pub fn k_of(&self, phi: f64, chi: f64) -> Matrix3<f64> {
        self.base * self.scale(phi, chi)
    }

    pub fn dk_dphi(&self, phi: f64, chi: f64) -> Matrix3<f64> {
        self.base * self.scale_dphi(phi, chi)
    }

    pub fn dk_dchi(&self, phi: f64, chi: f64) -> Matrix3<f64> {
        self.base * self.scale_dchi(phi, chi)
    }
}

/// `W(phi) = (phi - phi^2)^2`.
pub fn double_well(phi: f64) -> f64 {
    let t = phi - phi * phi;
    t * t
}

pub fn double_well_deriv(phi: f64) -> f64 {
    2.0 * (phi - phi * phi) * (1.0 - 2.0 * phi)
}

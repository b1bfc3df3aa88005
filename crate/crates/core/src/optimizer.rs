//! Staggered Allen-Cahn gradient flow for the two-scale design.
//!
//! Each iteration solves the elasticity state, the adjoint system, then one
//! implicit phase-field step for `phi` (with a volume multiplier) and for
//! `chi`, and finally projects onto `0 <= chi <= phi <= 1`.

use std::io::Write;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::fem::{
    assemble_scalar_mass, assemble_scalar_stiffness, assemble_volume_row, dot, element_scale_grad, element_scales,
    element_strain, gather, interp, stress_from_scales, traction_load, ElasticAssembler, ElementStress, FieldKind,
    NodalField, PreparedSolver, SolveError, SparseSymMatrix, TriangleRule,
};
use crate::material::{double_well, double_well_deriv, MaterialModel};
use crate::mesh::{locate_region_nodes, Mesh};
use crate::stress::{adjoint_stress_load, PNorm, StressAggregate};

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("iteration {iteration}: {source}")]
    Solve {
        iteration: usize,
        #[source]
        source: SolveError,
        /// Last design that passed through a complete iteration.
        last_state: Option<Box<OptimizerState>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    IterationCap,
}

impl RunStatus {
    pub fn converged(self) -> bool {
        self == RunStatus::Converged
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub compliance: f64,
    pub m_chi: f64,
    pub delta_phi: f64,
    pub delta_chi: f64,
    pub lambda: f64,
    pub max_von_mises: f64,
    /// Relative volume error of the KKT solution before projection.
    pub volume_residual: f64,
    /// Relative volume error after projection.
    pub volume_drift: f64,
    pub tau: f64,
    /// Seconds since the start of the run.
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub iter: usize,
    pub phi: NodalField,
    pub chi: NodalField,
    pub lambda: f64,
    pub u: NodalField,
    pub adjoint: NodalField,
    pub sigma: ElementStress,
    pub delta_phi: f64,
    pub delta_chi: f64,
    pub compliance: f64,
    pub m_chi: f64,
    pub objective: f64,
    pub sigma_pn: f64,
    pub max_von_mises: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: OptimizerState,
    pub history: Vec<IterationRecord>,
    pub status: RunStatus,
}

/// Elasticity solution for one design, keeping the factorized operator so
/// the adjoint system can reuse it.
#[derive(Debug, Clone)]
pub struct StateSolution {
    pub u: Vec<f64>,
    pub scales: Vec<f64>,
    pub stress: ElementStress,
    pub aggregate: StressAggregate,
    solver: PreparedSolver,
    free: Vec<usize>,
}

/// Design sensitivities assembled from the state and adjoint.
#[derive(Debug, Clone)]
pub struct Sensitivity {
    /// `sum_e ds_e/dphi_i A_e Sigma_e . K_A eps_e(u)`.
    pub q_s: Vec<f64>,
    /// Same with `ds_e/dchi_i`.
    pub q_s_chi: Vec<f64>,
    /// `M (f . (U + kappa3 u))`, the body-force coupling.
    pub body: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub compliance: f64,
    pub m_chi: f64,
    pub objective: f64,
}

/// Gradient of the reduced objective `j(phi, chi)`.
#[derive(Debug, Clone)]
pub struct ReducedGradient {
    pub phi: Vec<f64>,
    pub chi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PhaseFieldStep {
    pub phi: Vec<f64>,
    pub chi: Vec<f64>,
    pub lambda: f64,
    /// `|int phi - m |Omega|| / (m |Omega|)` of the unprojected `phi`.
    pub volume_residual: f64,
}

/// Entrywise clamp of `field` into `[lower, upper]`.
pub fn rescale(field: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    field
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(&v, (&lo, &hi))| v.max(lo).min(hi))
        .collect()
}

/// Everything about the discrete problem that stays fixed during a run.
#[derive(Debug, Clone)]
pub struct Problem {
    pub cfg: RunConfig,
    pub mesh: Mesh,
    pub material: MaterialModel,
    pub pnorm: PNorm,
    pub rule: TriangleRule,
    elastic: ElasticAssembler,
    mass: SparseSymMatrix,
    laplacian: SparseSymMatrix,
    volume_row: Vec<f64>,
    traction: Vec<f64>,
    dirichlet: Vec<(usize, f64)>,
    fixed_phi: Vec<(usize, f64)>,
    fixed_chi: Vec<(usize, f64)>,
    phi_solver: PreparedSolver,
    chi_solver: PreparedSolver,
    reduced_phi_free: Vec<usize>,
    reduced_chi_free: Vec<usize>,
    area: f64,
}

impl Problem {
    pub fn new(cfg: &RunConfig) -> Result<Self, OptimizerError> {
        let violations = cfg.validate();
        if !violations.is_empty() {
            return Err(ConfigError::Invalid(violations).into());
        }
        let mesh = Mesh::build(cfg);
        let material = MaterialModel::from_config(&cfg.material);
        let elastic = ElasticAssembler::new(&mesh, &material.base);
        let mass = assemble_scalar_mass(&mesh, 1.0);
        let laplacian = assemble_scalar_stiffness(&mesh, 1.0);
        let volume_row = assemble_volume_row(&mesh);
        let traction = traction_load(&mesh, cfg.domain.traction);
        let dirichlet = mesh
            .dirichlet_nodes()
            .into_iter()
            .flat_map(|n| [(2 * n, 0.0), (2 * n + 1, 0.0)])
            .collect();

        let n = mesh.node_count();
        let mut fixed = vec![None; n];
        let mut chi_zero = vec![false; n];
        for r in &cfg.domain.fixed_solid {
            for i in locate_region_nodes(&mesh, r) {
                fixed[i] = Some(1.0);
            }
        }
        for r in &cfg.domain.fixed_void {
            for i in locate_region_nodes(&mesh, r) {
                fixed[i] = Some(0.0);
                chi_zero[i] = true;
            }
        }
        let fixed_phi: Vec<(usize, f64)> = fixed
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
            .collect();
        let fixed_chi: Vec<(usize, f64)> = (0..n).filter(|&i| chi_zero[i]).map(|i| (i, 0.0)).collect();

        let area = mesh.area();
        let placeholder = PreparedSolver::Iterative {
            matrix: SparseSymMatrix::identity(0),
            tol: 0.0,
        };
        let mut problem = Problem {
            cfg: cfg.clone(),
            mesh,
            pnorm: PNorm::from_config(&cfg.stress),
            rule: TriangleRule::from_config(cfg.optimizer.quadrature),
            material,
            elastic,
            mass,
            laplacian,
            volume_row,
            traction,
            dirichlet,
            fixed_phi,
            fixed_chi,
            phi_solver: placeholder.clone(),
            chi_solver: placeholder,
            reduced_phi_free: Vec::new(),
            reduced_chi_free: Vec::new(),
            area,
        };
        let step = problem
            .step_solvers(cfg.optimizer.tau)
            .map_err(|source| OptimizerError::Solve {
                iteration: 0,
                source,
                last_state: None,
            })?;
        (
            problem.phi_solver,
            problem.reduced_phi_free,
            problem.chi_solver,
            problem.reduced_chi_free,
        ) = step;
        Ok(problem)
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn mass(&self) -> &SparseSymMatrix {
        &self.mass
    }

    pub fn laplacian(&self) -> &SparseSymMatrix {
        &self.laplacian
    }

    pub fn volume_row(&self) -> &[f64] {
        &self.volume_row
    }

    fn gamma_phi(&self) -> f64 {
        self.cfg.material.gamma_phi
    }

    fn gamma_chi(&self) -> f64 {
        self.cfg.material.gamma_chi()
    }

    #[allow(clippy::type_complexity)]
    fn step_solvers(&self, tau: f64) -> Result<(PreparedSolver, Vec<usize>, PreparedSolver, Vec<usize>), SolveError> {
        let o = &self.cfg.optimizer;
        let (gp, gc) = (self.gamma_phi(), self.gamma_chi());
        let a_phi = self.mass.combine(gp / tau, &self.laplacian, o.kappa1 * gp);
        let a_chi = self.mass.combine(gc / tau, &self.laplacian, o.kappa2 * gc);
        let n = self.mesh.node_count();
        let rp = a_phi.eliminate(&self.fixed_phi, &vec![0.0; n]);
        let rc = a_chi.eliminate(&self.fixed_chi, &vec![0.0; n]);
        Ok((
            PreparedSolver::new(rp.matrix, o.solver, o.solver_tol)?,
            rp.free,
            PreparedSolver::new(rc.matrix, o.solver, o.solver_tol)?,
            rc.free,
        ))
    }

    /// Initial design: uniform `m`, frozen regions applied, optional seeded
    /// perturbation of the free nodes.
    pub fn initialize_fields(&self) -> (Vec<f64>, Vec<f64>) {
        let o = &self.cfg.optimizer;
        let n = self.mesh.node_count();
        let m = o.volume_fraction;
        let mut phi = vec![m; n];
        let mut chi = vec![m; n];
        if o.perturbation > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
            for i in 0..n {
                phi[i] = (m + o.perturbation * rng.gen_range(-1.0..1.0)).clamp(0.0, 1.0);
                chi[i] = (m + o.perturbation * rng.gen_range(-1.0..1.0)).clamp(0.0, phi[i]);
            }
        }
        for &(i, v) in &self.fixed_phi {
            phi[i] = v;
        }
        if self.single_material() {
            chi.clone_from(&phi);
        }
        for &(i, v) in &self.fixed_chi {
            chi[i] = v;
        }
        (phi, chi)
    }

    /// With `beta = 1` the micro density has no effect on stiffness, so `chi`
    /// follows `phi`: every solid point is fully dense.
    fn single_material(&self) -> bool {
        self.cfg.material.beta == 1.0
    }

    /// Body load `(M phi) f` as an interleaved displacement vector.
    pub fn body_load(&self, phi: &[f64]) -> Vec<f64> {
        let f = self.cfg.domain.body_force;
        let mut out = vec![0.0; 2 * phi.len()];
        if f == [0.0, 0.0] {
            return out;
        }
        for (i, m) in self.mass.mul_vec(phi).iter().enumerate() {
            out[2 * i] = m * f[0];
            out[2 * i + 1] = m * f[1];
        }
        out
    }

    pub fn traction_load(&self) -> &[f64] {
        &self.traction
    }

    pub fn element_scales(&self, phi: &[f64], chi: &[f64]) -> Vec<f64> {
        element_scales(&self.mesh, &self.material, &self.rule, phi, chi)
    }

    pub fn stiffness(&self, phi: &[f64], chi: &[f64]) -> SparseSymMatrix {
        self.elastic.assemble(&self.element_scales(phi, chi))
    }

    /// Solve `K(phi, chi) u = b_f(phi) + b_g` with `u = 0` on `x = 0`.
    pub fn state_solve(&self, phi: &[f64], chi: &[f64]) -> Result<StateSolution, SolveError> {
        let scales = self.element_scales(phi, chi);
        let k = self.elastic.assemble(&scales);
        let mut rhs = self.body_load(phi);
        rhs.iter_mut().zip(&self.traction).for_each(|(a, b)| *a += b);
        let red = k.eliminate(&self.dirichlet, &rhs);
        let o = &self.cfg.optimizer;
        let solver = PreparedSolver::new(red.matrix, o.solver, o.solver_tol)?;
        let x = solver.solve(&red.rhs)?;
        let u = scatter(&x, &red.free, rhs.len());
        let stress = stress_from_scales(&self.mesh, &self.material, &scales, &u);
        let aggregate = self.pnorm.aggregate(&self.mesh, &stress);
        Ok(StateSolution {
            u,
            scales,
            stress,
            aggregate,
            solver,
            free: red.free,
        })
    }

    /// Adjoint load `kappa3 b_f + kappa4 b_g + q_sigma`.
    pub fn adjoint_load(&self, st: &StateSolution, phi: &[f64]) -> Vec<f64> {
        let o = &self.cfg.optimizer;
        let density = st.aggregate.density(&self.mesh);
        let mut rhs = adjoint_stress_load(&self.mesh, &self.material.base, &st.scales, &density, o.kappa5);
        let body = self.body_load(phi);
        for (i, r) in rhs.iter_mut().enumerate() {
            *r += o.kappa3 * body[i] + o.kappa4 * self.traction[i];
        }
        rhs
    }

    pub fn adjoint_solve(&self, st: &StateSolution, phi: &[f64]) -> Result<Vec<f64>, SolveError> {
        let rhs = self.adjoint_load(st, phi);
        let reduced: Vec<f64> = st.free.iter().map(|&i| rhs[i]).collect();
        let x = st.solver.solve(&reduced)?;
        Ok(scatter(&x, &st.free, rhs.len()))
    }

    pub fn sensitivity(&self, phi: &[f64], chi: &[f64], st: &StateSolution, adjoint: &[f64]) -> Sensitivity {
        let o = &self.cfg.optimizer;
        let n = self.mesh.node_count();
        let density = st.aggregate.density(&self.mesh);
        let mut q_s = vec![0.0; n];
        let mut q_s_chi = vec![0.0; n];
        for (e, tri) in self.mesh.elements.iter().enumerate() {
            let eps_u = element_strain(&self.mesh, e, &st.u);
            let sigma: Vector3<f64> = element_strain(&self.mesh, e, adjoint) - density[e] * o.kappa5;
            let work = sigma.dot(&(self.material.base * eps_u)) * self.mesh.element_areas[e];
            let (dp, dc) = element_scale_grad(&self.material, &self.rule, gather(tri, phi), gather(tri, chi));
            for a in 0..3 {
                q_s[tri[a]] += dp[a] * work;
                q_s_chi[tri[a]] += dc[a] * work;
            }
        }
        let f = self.cfg.domain.body_force;
        let body = if f == [0.0, 0.0] {
            vec![0.0; n]
        } else {
            let w: Vec<f64> = (0..n)
                .map(|i| {
                    f[0] * (adjoint[2 * i] + o.kappa3 * st.u[2 * i])
                        + f[1] * (adjoint[2 * i + 1] + o.kappa3 * st.u[2 * i + 1])
                })
                .collect();
            self.mass.mul_vec(&w)
        };
        Sensitivity { q_s, q_s_chi, body }
    }

    /// `int W'(phi) N_i`, integrated with the degree-four rule.
    pub fn double_well_load(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; phi.len()];
        let rule = TriangleRule::degree4();
        for (e, tri) in self.mesh.elements.iter().enumerate() {
            let v = gather(tri, phi);
            let a = self.mesh.element_areas[e];
            for (l, w) in rule.points {
                let d = double_well_deriv(interp(l, v)) * w * a;
                for k in 0..3 {
                    out[tri[k]] += d * l[k];
                }
            }
        }
        out
    }

    pub fn double_well_energy(&self, phi: &[f64]) -> f64 {
        let rule = TriangleRule::degree4();
        self.mesh
            .elements
            .iter()
            .enumerate()
            .map(|(e, tri)| {
                let v = gather(tri, phi);
                self.mesh.element_areas[e]
                    * rule
                        .points
                        .iter()
                        .map(|(l, w)| w * double_well(interp(l, v)))
                        .sum::<f64>()
            })
            .sum()
    }

    /// Load work `int g . u + kappa3 int phi f . u`.
    pub fn compliance(&self, phi: &[f64], u: &[f64]) -> f64 {
        dot(&self.traction, u) + self.cfg.optimizer.kappa3 * dot(&self.body_load(phi), u)
    }

    pub fn m_chi(&self, chi: &[f64]) -> f64 {
        dot(&self.volume_row, chi) / self.area
    }

    /// Discrete objective at a solved state.
    pub fn objective(&self, phi: &[f64], chi: &[f64], st: &StateSolution) -> f64 {
        let o = &self.cfg.optimizer;
        let g = self.gamma_phi();
        o.kappa1 / g * self.double_well_energy(phi)
            + 0.5 * o.kappa1 * g * self.laplacian.quad_form(phi)
            + 0.5 * o.kappa2 * self.laplacian.quad_form(chi)
            + o.kappa3 * dot(&self.body_load(phi), &st.u)
            + o.kappa4 * dot(&self.traction, &st.u)
            + o.kappa5 * self.area * st.aggregate.f_value
    }

    pub fn diagnostics(&self, phi: &[f64], chi: &[f64], st: &StateSolution) -> Diagnostics {
        Diagnostics {
            compliance: self.compliance(phi, &st.u),
            m_chi: self.m_chi(chi),
            objective: self.objective(phi, chi, st),
        }
    }

    /// Reduced objective `j(phi, chi)` with the state solved internally.
    pub fn reduced_objective(&self, phi: &[f64], chi: &[f64]) -> Result<f64, SolveError> {
        let st = self.state_solve(phi, chi)?;
        Ok(self.objective(phi, chi, &st))
    }

    /// Adjoint gradient of [`Problem::reduced_objective`].
    pub fn reduced_gradient(&self, phi: &[f64], chi: &[f64]) -> Result<ReducedGradient, SolveError> {
        let st = self.state_solve(phi, chi)?;
        let adj = self.adjoint_solve(&st, phi)?;
        let s = self.sensitivity(phi, chi, &st, &adj);
        let o = &self.cfg.optimizer;
        let g = self.gamma_phi();
        let psi = self.double_well_load(phi);
        let lphi = self.laplacian.mul_vec(phi);
        let lchi = self.laplacian.mul_vec(chi);
        Ok(ReducedGradient {
            phi: (0..phi.len())
                .map(|i| o.kappa1 / g * psi[i] + o.kappa1 * g * lphi[i] + s.body[i] - s.q_s[i])
                .collect(),
            chi: (0..chi.len()).map(|i| o.kappa2 * lchi[i] - s.q_s_chi[i]).collect(),
        })
    }

    /// Solve `((g/tau) M + kappa1 g L) phi + lambda r = (g/tau) M phi_n + drive`
    /// with `r . phi = m |Omega|` and frozen nodes held.
    pub fn solve_phi_system(&self, phi_n: &[f64], drive: &[f64], tau: f64) -> Result<(Vec<f64>, f64), SolveError> {
        let g = self.gamma_phi();
        let o = &self.cfg.optimizer;
        let owned;
        let (solver, free) = if tau == o.tau {
            (&self.phi_solver, &self.reduced_phi_free)
        } else {
            owned = self.step_solvers(tau)?;
            (&owned.0, &owned.1)
        };
        let mphi = self.mass.mul_vec(phi_n);
        let mut rhs: Vec<f64> = mphi.iter().zip(drive).map(|(m, d)| g / tau * m + d).collect();
        if self.fixed_phi.is_empty() {
            rhs = free.iter().map(|&i| rhs[i]).collect();
        } else {
            // lift frozen values onto the free rows
            let a = self.mass.combine(g / tau, &self.laplacian, o.kappa1 * g);
            rhs = a.eliminate(&self.fixed_phi, &rhs).rhs;
        }
        let r: Vec<f64> = free.iter().map(|&i| self.volume_row[i]).collect();
        let fixed_volume: f64 = self.fixed_phi.iter().map(|&(i, v)| self.volume_row[i] * v).sum();
        let target = o.volume_fraction * self.area - fixed_volume;
        let (x, lambda) = crate::fem::solve::solve_saddle_with(solver, &r, &rhs, target)?;
        let mut phi = scatter(&x, free, phi_n.len());
        for &(i, v) in &self.fixed_phi {
            phi[i] = v;
        }
        Ok((phi, lambda))
    }

    /// Solve `((g/tau) M + kappa2 g L) chi = (g/tau) M chi_n + drive`.
    pub fn solve_chi_system(&self, chi_n: &[f64], drive: &[f64], tau: f64) -> Result<Vec<f64>, SolveError> {
        let g = self.gamma_chi();
        let o = &self.cfg.optimizer;
        let owned;
        let (solver, free) = if tau == o.tau {
            (&self.chi_solver, &self.reduced_chi_free)
        } else {
            owned = self.step_solvers(tau)?;
            (&owned.2, &owned.3)
        };
        let mchi = self.mass.mul_vec(chi_n);
        let rhs: Vec<f64> = mchi.iter().zip(drive).map(|(m, d)| g / tau * m + d).collect();
        let rhs: Vec<f64> = free.iter().map(|&i| rhs[i]).collect();
        let x = solver.solve(&rhs)?;
        Ok(scatter(&x, free, chi_n.len()))
    }

    /// One implicit gradient-flow step from `(phi_n, chi_n)`, before
    /// projection.
    pub fn phase_field_step(
        &self,
        phi_n: &[f64],
        chi_n: &[f64],
        sens: &Sensitivity,
        tau: f64,
    ) -> Result<PhaseFieldStep, SolveError> {
        let o = &self.cfg.optimizer;
        let g = self.gamma_phi();
        let sign = if o.flip_sensitivity { -1.0 } else { 1.0 };
        let psi = self.double_well_load(phi_n);
        let psi_coeff = if o.literal_rhs { o.kappa3 / g } else { -o.kappa1 / g };
        let drive_phi: Vec<f64> = (0..phi_n.len())
            .map(|i| sign * sens.q_s[i] + psi_coeff * psi[i] - sens.body[i])
            .collect();
        let (phi, lambda) = self.solve_phi_system(phi_n, &drive_phi, tau)?;
        let drive_chi: Vec<f64> = sens.q_s_chi.iter().map(|q| sign * q).collect();
        let chi = self.solve_chi_system(chi_n, &drive_chi, tau)?;
        let target = o.volume_fraction * self.area;
        let volume_residual = (dot(&self.volume_row, &phi) - target).abs() / target;
        Ok(PhaseFieldStep {
            phi,
            chi,
            lambda,
            volume_residual,
        })
    }

    /// Clamp `phi` to `[0, 1]` and `chi` to `[0, phi]`, holding frozen nodes.
    /// A single-material problem sets `chi = phi`.
    pub fn project(&self, phi: &[f64], chi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = phi.len();
        let mut phi = rescale(phi, &vec![0.0; n], &vec![1.0; n]);
        for &(i, v) in &self.fixed_phi {
            phi[i] = v;
        }
        let mut chi = if self.single_material() {
            phi.clone()
        } else {
            rescale(chi, &vec![0.0; n], &phi)
        };
        for &(i, v) in &self.fixed_chi {
            chi[i] = v;
        }
        (phi, chi)
    }

    fn l2_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.mass.quad_form(&d).max(0.0).sqrt()
    }

    fn snapshot(&self, iter: usize, phi: &[f64], chi: &[f64], st: &StateSolution, adjoint: &[f64]) -> OptimizerState {
        let d = self.diagnostics(phi, chi, st);
        OptimizerState {
            iter,
            phi: NodalField::new(FieldKind::Phi, phi.to_vec()),
            chi: NodalField::new(FieldKind::Chi, chi.to_vec()),
            lambda: 0.0,
            u: NodalField::new(FieldKind::Displacement, st.u.clone()),
            adjoint: NodalField::new(FieldKind::Displacement, adjoint.to_vec()),
            sigma: st.stress.clone(),
            delta_phi: 0.0,
            delta_chi: 0.0,
            compliance: d.compliance,
            m_chi: d.m_chi,
            objective: d.objective,
            sigma_pn: st.aggregate.sigma_pn,
            max_von_mises: st.aggregate.max_von_mises(),
        }
    }

    /// Run the gradient flow, calling `observer` after every iteration.
    pub fn run_with<F>(&self, mut observer: F) -> Result<RunOutcome, OptimizerError>
    where
        F: FnMut(&IterationRecord, &OptimizerState),
    {
        let o = &self.cfg.optimizer;
        let start = Instant::now();
        let (mut phi, mut chi) = self.initialize_fields();
        log::info!(
            "mesh {}x{} ({} nodes), seed {}, perturbation {}",
            self.mesh.nx,
            self.mesh.ny,
            self.mesh.node_count(),
            o.seed,
            o.perturbation
        );
        let fail = |iteration: usize, source: SolveError, last: Option<&OptimizerState>| OptimizerError::Solve {
            iteration,
            source,
            last_state: last.map(|s| Box::new(s.clone())),
        };
        let mut st = self.state_solve(&phi, &chi).map_err(|e| fail(0, e, None))?;
        let mut objective = self.objective(&phi, &chi, &st);
        let mut history = Vec::new();
        let mut last: Option<OptimizerState> = None;
        let target = o.volume_fraction * self.area;
        let mut iter = 0;
        loop {
            iter += 1;
            let adjoint = self
                .adjoint_solve(&st, &phi)
                .map_err(|e| fail(iter, e, last.as_ref()))?;
            let sens = self.sensitivity(&phi, &chi, &st, &adjoint);
            let mut tau = o.tau;
            let mut halvings = 0;
            let (step, new_phi, new_chi, new_st, new_objective) = loop {
                let step = self
                    .phase_field_step(&phi, &chi, &sens, tau)
                    .map_err(|e| fail(iter, e, last.as_ref()))?;
                let (p, c) = self.project(&step.phi, &step.chi);
                let s = self.state_solve(&p, &c).map_err(|e| fail(iter, e, last.as_ref()))?;
                let j = self.objective(&p, &c, &s);
                if o.safeguard && j - objective > 0.01 * objective.abs() && halvings < 5 {
                    halvings += 1;
                    tau *= 0.5;
                    log::debug!("iteration {iter}: objective rose to {j:.6e}, retrying with tau {tau:.3e}");
                    continue;
                }
                break (step, p, c, s, j);
            };
            let delta_phi = self.l2_distance(&new_phi, &phi);
            let delta_chi = self.l2_distance(&new_chi, &chi);
            phi = new_phi;
            chi = new_chi;
            st = new_st;
            objective = new_objective;

            let mut state = self.snapshot(iter, &phi, &chi, &st, &adjoint);
            state.lambda = step.lambda;
            state.delta_phi = delta_phi;
            state.delta_chi = delta_chi;
            let record = IterationRecord {
                iter,
                objective: state.objective,
                compliance: state.compliance,
                m_chi: state.m_chi,
                delta_phi,
                delta_chi,
                lambda: step.lambda,
                max_von_mises: state.max_von_mises,
                volume_residual: step.volume_residual,
                volume_drift: (dot(&self.volume_row, &phi) - target).abs() / target,
                tau,
                wall_time: start.elapsed().as_secs_f64(),
            };
            let every = self.cfg.output.log_every;
            if every > 0 && iter % every == 0 {
                log::info!(
                    "iter {iter}: J = {:.6e}, compliance = {:.6e}, m_chi = {:.4}, dphi = {:.3e}, dchi = {:.3e}",
                    record.objective,
                    record.compliance,
                    record.m_chi,
                    delta_phi,
                    delta_chi
                );
            }
            observer(&record, &state);
            history.push(record);

            let converged = delta_phi < o.tol && delta_chi < o.tol;
            if converged || iter >= o.max_iter {
                let status = if converged {
                    RunStatus::Converged
                } else {
                    RunStatus::IterationCap
                };
                log::info!("finished after {iter} iterations: {status:?}");
                return Ok(RunOutcome { state, history, status });
            }
            last = Some(state);
        }
    }

    pub fn run(&self) -> Result<RunOutcome, OptimizerError> {
        self.run_with(|_, _| {})
    }
}

fn scatter(x: &[f64], free: &[usize], n: usize) -> Vec<f64> {
    let mut full = vec![0.0; n];
    for (k, &i) in free.iter().enumerate() {
        full[i] = x[k];
    }
    full
}

/// Build the problem for `cfg` and run it to completion.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, OptimizerError> {
    Problem::new(cfg)?.run()
}

const HISTORY_COLUMNS: &str =
    "iter,objective,compliance,m_chi,delta_phi,delta_chi,lambda,max_von_mises,volume_residual,volume_drift,tau";

/// Iteration history as CSV. Wall time is optional so that reruns of one
/// configuration produce identical files.
pub fn write_history_csv(w: &mut impl Write, history: &[IterationRecord], timing: bool) -> std::io::Result<()> {
    write!(w, "{HISTORY_COLUMNS}")?;
    if timing {
        write!(w, ",wall_time")?;
    }
    writeln!(w)?;
    for r in history {
        write!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.iter,
            r.objective,
            r.compliance,
            r.m_chi,
            r.delta_phi,
            r.delta_chi,
            r.lambda,
            r.max_von_mises,
            r.volume_residual,
            r.volume_drift,
            r.tau
        )?;
        if timing {
            write!(w, ",{}", r.wall_time)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

//! Problem description: data model, validation and file ingestion.
//!
//! A configuration file is TOML with the sections `[domain]`, `[material]`,
//! `[optimizer]`, `[stress]`, `[export]` and `[output]`. Every key has a
//! default, so an empty file describes the reference cantilever benchmark.
//! Units are millimetre, Newton and MPa throughout.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid override `{0}`: expected section.key=value")]
    Override(String),
    #[error("invalid configuration: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// A single broken invariant, named by its dotted config key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Axis-aligned box `[x_min, y_min, x_max, y_max]` in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Region {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Region {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn contains(&self, p: [f64; 2], eps: f64) -> bool {
        p[0] >= self.x_min - eps && p[0] <= self.x_max + eps && p[1] >= self.y_min - eps && p[1] <= self.y_max + eps
    }

    /// Closed boxes sharing more than a boundary line.
    pub fn overlaps(&self, other: &Region) -> bool {
        self.x_min < other.x_max && other.x_min < self.x_max && self.y_min < other.y_max && other.y_min < self.y_max
    }
}

impl From<[f64; 4]> for Region {
    fn from(v: [f64; 4]) -> Self {
        Region::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Region> for [f64; 4] {
    fn from(r: Region) -> Self {
        [r.x_min, r.y_min, r.x_max, r.y_max]
    }
}

/// Boundary side carrying the traction. The clamped side is always `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Right,
    Top,
    Bottom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    /// Domain width `a` [mm].
    pub width: f64,
    /// Domain height `b` [mm].
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    /// Boundary traction `g` [N/mm].
    pub traction: [f64; 2],
    pub traction_side: Side,
    /// Centre of the loaded segment along its side; defaults to the midpoint.
    pub traction_center: Option<f64>,
    /// Length of the loaded segment; defaults to a tenth of the side height.
    pub traction_length: Option<f64>,
    /// Body force `f` [N/mm^3].
    pub body_force: [f64; 2],
    /// Boxes where the design is frozen to void.
    pub fixed_void: Vec<Region>,
    /// Boxes where the design is frozen to material.
    pub fixed_solid: Vec<Region>,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            width: 200.0,
            height: 100.0,
            nx: 100,
            ny: 50,
            traction: [0.0, -600.0],
            traction_side: Side::Right,
            traction_center: None,
            traction_length: None,
            body_force: [0.0, 0.0],
            fixed_void: Vec::new(),
            fixed_solid: Vec::new(),
        }
    }
}

impl DomainConfig {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    fn side_length(&self) -> f64 {
        match self.traction_side {
            Side::Right => self.height,
            Side::Top | Side::Bottom => self.width,
        }
    }

    pub fn traction_center(&self) -> f64 {
        self.traction_center.unwrap_or(0.5 * self.side_length())
    }

    pub fn traction_length(&self) -> f64 {
        self.traction_length.unwrap_or(0.1 * self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialConfig {
    /// Young's modulus [MPa].
    pub youngs_modulus: f64,
    pub poisson: f64,
    pub beta: f64,
    pub gamma_phi: f64,
    /// Defaults to `gamma_phi`.
    pub gamma_chi: Option<f64>,
    /// Use `K_A chi + K_A (1 - chi) / beta` for the micro-density scaling.
    pub literal_km: bool,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self {
            youngs_modulus: 12_500.0,
            poisson: 0.25,
            beta: 1.0 / 6.0,
            gamma_phi: 0.01,
            gamma_chi: None,
            literal_km: false,
        }
    }
}

impl MaterialConfig {
    pub fn gamma_chi(&self) -> f64 {
        self.gamma_chi.unwrap_or(self.gamma_phi)
    }
}

/// Rule used to integrate the interpolated stiffness over an element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    /// One point at the element centroid.
    Centroid,
    /// Six-point rule, exact for the quartic stiffness interpolant.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// Sparse envelope Cholesky.
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    Cg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Volume fraction `m`.
    pub volume_fraction: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub kappa4: f64,
    pub kappa5: f64,
    /// Pseudo-time step.
    pub tau: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    /// Amplitude of the seeded uniform perturbation of the initial fields.
    pub perturbation: f64,
    /// Put `+kappa3 / gamma` instead of `-kappa1 / gamma` on the double-well
    /// load of the phi step.
    pub literal_rhs: bool,
    /// Flip the sign of the stiffness sensitivity terms.
    pub flip_sensitivity: bool,
    /// Halve tau on objective increase (>1 %), up to five times per iteration.
    pub safeguard: bool,
    pub quadrature: Quadrature,
    pub solver: SolverKind,
    /// Relative residual target of iterative solves.
    pub solver_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            volume_fraction: 0.8,
            kappa1: 400.0,
            kappa2: 4000.0,
            kappa3: 1.0,
            kappa4: 1.0,
            kappa5: 1.0,
            tau: 1e-6,
            max_iter: 2000,
            tol: 1e-3,
            seed: 42,
            perturbation: 0.0,
            literal_rhs: false,
            flip_sensitivity: false,
            safeguard: false,
            quadrature: Quadrature::Centroid,
            solver: SolverKind::Direct,
            solver_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StressConfig {
    pub pnorm_p: u32,
    /// Yield stress [MPa].
    pub yield_stress: f64,
    /// Divide the p-norm integral by the domain area.
    pub normalized: bool,
}

impl Default for StressConfig {
    fn default() -> Self {
        Self {
            pnorm_p: 8,
            yield_stress: 45.0,
            normalized: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub chi_threshold: f64,
    /// Nodes with `phi` below this level are treated as void.
    pub phi_threshold: f64,
    /// Extrusion height of the printed plate [mm].
    pub extrude_height: f64,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            chi_threshold: 0.5,
            phi_threshold: 0.5,
            extrude_height: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub vtk: bool,
    pub csv: bool,
    pub stl: bool,
    /// Append a wall-clock column to the history CSV.
    pub csv_timing: bool,
    /// Log one progress line every this many iterations (0 disables).
    pub log_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            vtk: true,
            csv: true,
            stl: false,
            csv_timing: false,
            log_every: 50,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub material: MaterialConfig,
    pub optimizer: OptimizerConfig,
    pub stress: StressConfig,
    pub export: ExportConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Reference cantilever: 200 x 100 mm, g = (0, -600) N/mm, m = 0.8,
    /// ABS-like material, graded with `kappa2 = 4000`.
    pub fn cantilever() -> Self {
        Self::default()
    }

    /// Parse a TOML document with optional `section.key=value` overrides.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg = RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| ConfigError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        let violations = cfg.validate();
        if violations.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(violations))
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("RunConfig always serializes")
    }

    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, ConfigError> {
        Self::from_toml_str(&self.to_toml_string(), overrides)
    }

    /// Every broken invariant; empty iff the configuration is usable.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let d = &self.domain;
        let positive = |v: &mut Vec<Violation>, name: &str, x: f64| {
            if !(x > 0.0 && x.is_finite()) {
                v.push(Violation::new(name, format!("must be positive and finite, got {x}")));
            }
        };
        positive(&mut v, "domain.width", d.width);
        positive(&mut v, "domain.height", d.height);
        if d.nx < 1 {
            v.push(Violation::new("domain.nx", "must be at least 1"));
        }
        if d.ny < 1 {
            v.push(Violation::new("domain.ny", "must be at least 1"));
        }
        let len = d.traction_length();
        let center = d.traction_center();
        let side = d.side_length();
        if !(len > 0.0) {
            v.push(Violation::new("domain.traction_length", "must be positive"));
        } else if center - 0.5 * len < -1e-12 * side || center + 0.5 * len > side * (1.0 + 1e-12) {
            v.push(Violation::new(
                "domain.traction_length",
                format!(
                    "segment [{}, {}] leaves the loaded side [0, {side}]",
                    center - 0.5 * len,
                    center + 0.5 * len
                ),
            ));
        }
        if d.traction.iter().chain(d.body_force.iter()).any(|x| !x.is_finite()) {
            v.push(Violation::new("domain.traction", "loads must be finite"));
        }
        for (name, regions) in [
            ("domain.fixed_void", &d.fixed_void),
            ("domain.fixed_solid", &d.fixed_solid),
        ] {
            if regions.iter().any(|r| r.x_min > r.x_max || r.y_min > r.y_max) {
                v.push(Violation::new(name, "box minimum exceeds maximum"));
            }
        }
        if d.fixed_void.iter().any(|a| d.fixed_solid.iter().any(|b| a.overlaps(b))) {
            v.push(Violation::new("domain.fixed_void", "fixed regions overlap"));
        }

        let m = &self.material;
        positive(&mut v, "material.youngs_modulus", m.youngs_modulus);
        if !(m.poisson > 0.0 && m.poisson < 0.5) {
            v.push(Violation::new("material.poisson", "must be in (0, 0.5)"));
        }
        if !(m.beta > 0.0 && m.beta <= 1.0) {
            v.push(Violation::new("material.beta", "beta must be in (0,1]"));
        }
        positive(&mut v, "material.gamma_phi", m.gamma_phi);
        positive(&mut v, "material.gamma_chi", m.gamma_chi());

        let o = &self.optimizer;
        if !(o.volume_fraction > 0.0 && o.volume_fraction < 1.0) {
            v.push(Violation::new("optimizer.volume_fraction", "must be in (0,1)"));
        }
        for (name, k) in [
            ("optimizer.kappa1", o.kappa1),
            ("optimizer.kappa2", o.kappa2),
            ("optimizer.kappa3", o.kappa3),
            ("optimizer.kappa4", o.kappa4),
            ("optimizer.kappa5", o.kappa5),
        ] {
            if !(k >= 0.0 && k.is_finite()) {
                v.push(Violation::new(name, "must be nonnegative and finite"));
            }
        }
        positive(&mut v, "optimizer.tau", o.tau);
        if !(o.tol > 0.0) {
            v.push(Violation::new("optimizer.tol", "must be positive"));
        }
        if o.max_iter < 1 {
            v.push(Violation::new("optimizer.max_iter", "must be at least 1"));
        }
        if !(o.perturbation >= 0.0 && o.perturbation < 1.0) {
            v.push(Violation::new("optimizer.perturbation", "must be in [0,1)"));
        }
        positive(&mut v, "optimizer.solver_tol", o.solver_tol);

        let s = &self.stress;
        if s.pnorm_p < 2 {
            v.push(Violation::new("stress.pnorm_p", "must be at least 2"));
        }
        positive(&mut v, "stress.yield_stress", s.yield_stress);

        let e = &self.export;
        if !(0.0..=1.0).contains(&e.chi_threshold) {
            v.push(Violation::new("export.chi_threshold", "must be in [0,1]"));
        }
        if !(0.0..=1.0).contains(&e.phi_threshold) {
            v.push(Violation::new("export.phi_threshold", "must be in [0,1]"));
        }
        positive(&mut v, "export.extrude_height", e.extrude_height);
        v
    }
}

/// Read, override and validate a configuration file.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::from_toml_str(&text, overrides)
}

fn parse_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    ConfigError::Parse {
        line,
        message: e.message().to_string(),
    }
}

/// Apply `section.key=value`; the value is read as a TOML literal and falls
/// back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let bad = || ConfigError::Override(assignment.to_string());
    let (key, raw) = assignment.split_once('=').ok_or_else(bad)?;
    let (section, field) = key.trim().split_once('.').ok_or_else(bad)?;
    if section.is_empty() || field.is_empty() {
        return Err(bad());
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let sec = entry.as_table_mut().ok_or_else(bad)?;
    sec.insert(field.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANTILEVER: &str = r#"
[domain]
width = 200.0
height = 100.0
traction = [0.0, -600.0]

[material]
youngs_modulus = 12500.0
poisson = 0.25
beta = 0.16666666666666666
gamma_phi = 0.01

[optimizer]
volume_fraction = 0.8
kappa1 = 400.0
kappa2 = 4000.0
kappa3 = 1.0
kappa4 = 1.0
tau = 1e-6

[stress]
yield_stress = 45.0
"#;

    #[test]
    fn cantilever_file_loads_with_its_values() {
        let cfg = RunConfig::from_toml_str(CANTILEVER, &[]).unwrap();
        assert_eq!(cfg.domain.width, 200.0);
        assert_eq!(cfg.domain.height, 100.0);
        assert_eq!(cfg.domain.traction, [0.0, -600.0]);
        assert_eq!(cfg.optimizer.volume_fraction, 0.8);
        assert_eq!(cfg.material.youngs_modulus, 12_500.0);
        assert_eq!(cfg.material.poisson, 0.25);
        assert_eq!(cfg.stress.yield_stress, 45.0);
        assert!((cfg.material.beta - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(cfg.material.gamma_phi, 0.01);
        assert_eq!(cfg.optimizer.kappa1, 400.0);
        assert_eq!(cfg.optimizer.kappa2, 4000.0);
        assert_eq!(cfg.optimizer.kappa3, 1.0);
        assert_eq!(cfg.optimizer.kappa4, 1.0);
        assert_eq!(cfg.optimizer.tau, 1e-6);
    }

    #[test]
    fn missing_pnorm_defaults_to_eight() {
        let cfg = RunConfig::from_toml_str(CANTILEVER, &[]).unwrap();
        assert_eq!(cfg.stress.pnorm_p, 8);
        assert_eq!(cfg.material.gamma_chi(), cfg.material.gamma_phi);
        assert!(cfg.domain.fixed_void.is_empty() && cfg.domain.fixed_solid.is_empty());
    }

    #[test]
    fn volume_fraction_out_of_range_is_named() {
        let err = RunConfig::from_toml_str("[optimizer]\nvolume_fraction = 1.2\n", &[]).unwrap_err();
        match err {
            ConfigError::Invalid(v) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].field, "optimizer.volume_fraction");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn parse_failure_reports_line() {
        let err = RunConfig::from_toml_str("[domain]\nwidth = 1\nheight = = 2\n", &[]).unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(RunConfig::from_toml_str("[domain]\nwidht = 1\n", &[]).is_err());
    }

    #[test]
    fn validate_cases() {
        assert!(RunConfig::cantilever().validate().is_empty());

        let mut c = RunConfig::cantilever();
        c.material.beta = 0.0;
        let v = c.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "material.beta");
        assert!(v[0].message.contains("(0,1]"));

        let mut c = RunConfig::cantilever();
        c.domain.fixed_void.push(Region::new(0.0, 0.0, 20.0, 20.0));
        c.domain.fixed_solid.push(Region::new(10.0, 10.0, 30.0, 30.0));
        let v = c.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("overlap"));

        let mut c = RunConfig::cantilever();
        c.domain.traction_length = Some(0.0);
        assert_eq!(c.validate()[0].field, "domain.traction_length");
    }

    #[test]
    fn overrides_apply_and_parse_types() {
        let cfg = RunConfig::cantilever()
            .with_overrides(&[
                "optimizer.kappa2=400000".into(),
                "output.dir=runs/a".into(),
                "material.literal_km=true".into(),
                "optimizer.tol=inf".into(),
            ])
            .unwrap();
        assert_eq!(cfg.optimizer.kappa2, 400_000.0);
        assert_eq!(cfg.output.dir, PathBuf::from("runs/a"));
        assert!(cfg.material.literal_km);
        assert!(cfg.optimizer.tol.is_infinite());
        assert!(RunConfig::cantilever().with_overrides(&["kappa2=4".into()]).is_err());
    }

    #[test]
    fn round_trip_is_identity() {
        let mut c = RunConfig::cantilever();
        c.domain.fixed_solid.push(Region::new(0.0, 40.0, 5.0, 60.0));
        c.domain.traction_length = Some(4.0);
        c.material.gamma_chi = Some(0.02);
        let once = RunConfig::from_toml_str(&c.to_toml_string(), &[]).unwrap();
        let twice = RunConfig::from_toml_str(&once.to_toml_string(), &[]).unwrap();
        assert_eq!(c, once);
        assert_eq!(once, twice);
    }
}

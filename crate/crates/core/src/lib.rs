//! Two-scale phase-field topology optimization for plane elasticity.
//!
//! A macroscopic phase field `phi` separates material from void, and a
//! micro-density field `chi` grades the stiffness inside the material.
//! Both evolve by an implicit Allen-Cahn gradient flow driven by
//! compliance, a volume constraint and a p-norm stress penalty.

pub mod config;
pub mod export;
pub mod fem;
pub mod material;
pub mod mesh;
pub mod optimizer;
pub mod stress;

pub use config::{load_config, ConfigError, RunConfig};
pub use mesh::Mesh;

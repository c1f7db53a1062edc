//! Quantum dynamics in the trajectory (Lagrangian) picture of quantum
//! hydrodynamics.
//!
//! The engine evolves an ensemble of labelled fluid particles under the
//! quantum stress force, reconstructs the wavefunction from the trajectories
//! alone, and verifies symmetries and conserved charges against an
//! independent Schrödinger-equation solver.
//!
//! Modules mirror the pipeline:
//!
//! - [`lattice`]: grids, high-order stencils, quadrature
//! - [`kinematics`]: deformation tensors, label-map inversion, Eulerian fields
//! - [`forces`]: quantum internal energy, quantum potential, stress tensor
//! - [`integrator`]: RK4 time evolution with co-integrated phase
//! - [`reconstruction`]: wavefunction assembly from trajectories
//! - [`oracle`]: Crank–Nicolson reference solver and analytic solutions
//! - [`symmetry`]: kinematical group transforms and particle relabelling
//! - [`charges`]: conserved-charge evaluation on both pictures
//! - [`scenario`]: batch scenario runner behind the CLI
//!
//! See the crate `examples/` directory for runnable demonstrations of each
//! capability.

pub mod charges;
pub mod error;
pub mod fields;
pub mod forces;
pub mod integrator;
pub mod interp;
pub mod kinematics;
pub mod lattice;
pub mod oracle;
pub mod potential;
pub mod reconstruction;
pub mod scenario;
pub mod symmetry;

pub use error::{Error, Result};
pub use lattice::{Field, Grid, NodeMask};

/// Physical constants of a run. Natural units by default.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhysParams {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams { hbar: 1.0, mass: 1.0 }
    }
}

//! Quantum contributions to the dynamics: internal energy, quantum
//! potential, stress tensor, and the right-hand side of the trajectory law
//! of motion in both its stress-divergence and gradient (Weber) forms.
//!
//! All density-derived quantities are evaluated through the log-density,
//! which is algebraically identical for positive density and keeps the
//! Gaussian tails free of cancellation and division blow-ups.

use crate::error::Result;
use crate::kinematics::{deformation, grad_q, lagrangian_density, Deformation, FlowState};
use crate::lattice::{derivative_with, DerivSpec, Field, Grid, NodeMask};
use crate::potential::PotentialSpec;
use crate::PhysParams;

/// Relative density floor: nodes where the density falls below this fraction
/// of the reference maximum are reported as starved.
pub const DENSITY_FLOOR_REL: f64 = 1e-8;
/// Absolute guard against zero or negative density in logarithms.
const DENSITY_GUARD_ABS: f64 = 1e-300;

/// Log-density samples plus the count of nodes below the relative floor.
pub fn log_density(rho: &[f64]) -> (Field, usize) {
    let max = rho.iter().cloned().fold(0.0f64, f64::max);
    let floor = DENSITY_FLOOR_REL * max;
    let mut starved = 0;
    let c = rho
        .iter()
        .map(|&r| {
            if r < floor {
                starved += 1;
            }
            r.max(DENSITY_GUARD_ABS).ln()
        })
        .collect();
    (c, starved)
}

/// Quantum fields of one flow snapshot.
#[derive(Clone, Debug)]
pub struct QuantumFields {
    /// Internal potential energy per unit mass density.
    pub internal_energy: Field,
    /// de Broglie–Bohm quantum potential.
    pub quantum_potential: Field,
    /// Symmetric stress tensor, row-major dim x dim.
    pub stress: Vec<Field>,
    pub starved_nodes: usize,
}

/// Internal potential energy U = (hbar^2 / 8m) |grad_q ln rho|^2.
pub fn internal_potential(
    rho: &[f64],
    def: &Deformation,
    grid: &Grid,
    mask: Option<&NodeMask>,
    phys: &PhysParams,
) -> Result<Field> {
    let (c, _) = log_density(rho);
    let g = grad_q(&c, def, grid, mask)?;
    let coeff = phys.hbar * phys.hbar / (8.0 * phys.mass);
    let n = grid.len();
    let mut out = vec![0.0; n];
    for p in 0..n {
        let mut s = 0.0;
        for comp in &g {
            s += comp[p] * comp[p];
        }
        out[p] = coeff * s;
    }
    Ok(out)
}

/// The quantum potential in log-density form:
/// V_Q = -(hbar^2 / 2m) [ (1/2) lap_q ln rho + (1/4) |grad_q ln rho|^2 ].
pub fn quantum_potential(
    rho: &[f64],
    def: &Deformation,
    grid: &Grid,
    mask: Option<&NodeMask>,
    phys: &PhysParams,
) -> Result<Field> {
    let (c, _) = log_density(rho);
    let g = grad_q(&c, def, grid, mask)?;
    let dim = grid.dim();
    let n = grid.len();
    let mut lap = vec![0.0; n];
    for (i, gi) in g.iter().enumerate().take(dim) {
        let gg = grad_q(gi, def, grid, mask)?;
        for p in 0..n {
            lap[p] += gg[i][p];
        }
    }
    let coeff = -phys.hbar * phys.hbar / (2.0 * phys.mass);
    let mut out = vec![0.0; n];
    for p in 0..n {
        let mut grad2 = 0.0;
        for comp in &g {
            grad2 += comp[p] * comp[p];
        }
        out[p] = coeff * (0.5 * lap[p] + 0.25 * grad2);
    }
    Ok(out)
}

/// Symmetric quantum stress tensor,
/// sigma_ij = -(hbar^2 / 4m) rho d^2 (ln rho) / dq_i dq_j.
pub fn stress_tensor(
    rho: &[f64],
    def: &Deformation,
    grid: &Grid,
    mask: Option<&NodeMask>,
    phys: &PhysParams,
) -> Result<Vec<Field>> {
    let (c, _) = log_density(rho);
    let g = grad_q(&c, def, grid, mask)?;
    let dim = grid.dim();
    let n = grid.len();
    // hess[i][j] = d g_i / d q_j, symmetrized
    let mut hess: Vec<Field> = vec![vec![0.0; n]; dim * dim];
    for i in 0..dim {
        let gg = grad_q(&g[i], def, grid, mask)?;
        for j in 0..dim {
            for p in 0..n {
                hess[i * dim + j][p] += 0.5 * gg[j][p];
                hess[j * dim + i][p] += 0.5 * gg[j][p];
            }
        }
    }
    let coeff = -phys.hbar * phys.hbar / (4.0 * phys.mass);
    for field in hess.iter_mut() {
        for (p, v) in field.iter_mut().enumerate() {
            *v *= coeff * rho[p];
        }
    }
    Ok(hess)
}

/// Assemble all quantum fields of a snapshot.
pub fn quantum_fields(
    rho: &[f64],
    def: &Deformation,
    grid: &Grid,
    mask: Option<&NodeMask>,
    phys: &PhysParams,
) -> Result<QuantumFields> {
    let (_, starved) = log_density(rho);
    Ok(QuantumFields {
        internal_energy: internal_potential(rho, def, grid, mask, phys)?,
        quantum_potential: quantum_potential(rho, def, grid, mask, phys)?,
        stress: stress_tensor(rho, def, grid, mask, phys)?,
        starved_nodes: starved,
    })
}

/// Which algebraic form of the law of motion drives the acceleration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForceForm {
    /// Gradient form: acceleration = -(1/m) grad_q (V + V_Q).
    Weber,
    /// Stress-divergence form:
    /// m rho0 qdd_i = -rho0 dV/dq_i - cof_kj d sigma_ik / d a_j.
    Stress,
}

/// One force evaluation: acceleration plus the potential fields needed for
/// the phase quadrature.
pub struct ForceEval {
    pub acc: Vec<Field>,
    /// External potential at each particle.
    pub external: Field,
    /// Quantum potential at each particle (zero on masked nodes).
    pub quantum: Field,
    pub min_det: f64,
    pub starved_nodes: usize,
}

/// Evaluate the acceleration of a flow snapshot.
pub fn acceleration(
    flow: &FlowState,
    rho0: &[f64],
    potential: &PotentialSpec,
    grid: &Grid,
    mask: Option<&NodeMask>,
    phys: &PhysParams,
    form: ForceForm,
) -> Result<ForceEval> {
    let dim = grid.dim();
    let n = grid.len();
    let def = deformation(flow, grid, mask)?;
    let rho = lagrangian_density(rho0, &def);
    let (_, starved) = log_density(&rho);
    let vq = quantum_potential(&rho, &def, grid, mask, phys)?;

    let mut external = vec![0.0; n];
    let mut acc: Vec<Field> = vec![vec![0.0; n]; dim];
    for p in 0..n {
        let x = flow.position(p);
        external[p] = potential.value(&x[..dim], flow.t, phys.mass);
        let gv = potential.gradient(&x[..dim], flow.t, phys.mass);
        for k in 0..dim {
            acc[k][p] = -gv[k] / phys.mass;
        }
    }

    match form {
        ForceForm::Weber => {
            let gq = grad_q(&vq, &def, grid, mask)?;
            for k in 0..dim {
                for p in 0..n {
                    acc[k][p] -= gq[k][p] / phys.mass;
                }
            }
        }
        ForceForm::Stress => {
            let sigma = stress_tensor(&rho, &def, grid, mask, phys)?;
            let spec = DerivSpec::with_default_accuracy(1);
            for i in 0..dim {
                let mut divergence = vec![0.0; n];
                for k in 0..dim {
                    for j in 0..dim {
                        let ds = derivative_with(grid, &sigma[i * dim + k], j, spec, mask)?;
                        for p in 0..n {
                            divergence[p] += def.cof[k * dim + j][p] * ds[p];
                        }
                    }
                }
                for p in 0..n {
                    let masked = mask.map_or(false, |m| !m.is_valid(p));
                    if !masked {
                        let r0 = rho0[p].max(DENSITY_GUARD_ABS);
                        acc[i][p] -= divergence[p] / (phys.mass * r0);
                    }
                }
            }
        }
    }

    Ok(ForceEval {
        acc,
        external,
        quantum: vq,
        min_det: def.min_det,
        starved_nodes: starved,
    })
}

/// Quantum potential of an Eulerian density (identity map, plain stencils).
pub fn quantum_potential_eulerian(
    rho: &[f64],
    grid: &Grid,
    mask: Option<&NodeMask>,
    phys: &PhysParams,
) -> Result<Field> {
    let (c, _) = log_density(rho);
    let spec = DerivSpec::with_default_accuracy(1);
    let spec2 = DerivSpec::with_default_accuracy(2);
    let n = grid.len();
    let mut grad2 = vec![0.0; n];
    let mut lap = vec![0.0; n];
    for axis in 0..grid.dim() {
        let d1 = derivative_with(grid, &c, axis, spec, mask)?;
        let d2 = derivative_with(grid, &c, axis, spec2, mask)?;
        for p in 0..n {
            grad2[p] += d1[p] * d1[p];
            lap[p] += d2[p];
        }
    }
    let coeff = -phys.hbar * phys.hbar / (2.0 * phys.mass);
    Ok((0..n)
        .map(|p| coeff * (0.5 * lap[p] + 0.25 * grad2[p]))
        .collect())
}

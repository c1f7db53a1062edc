//! Eulerian field containers shared by the kinematic conversion, the
//! reference solver, and the charge machinery.

use crate::lattice::{integrate, Field, Grid};
use num_complex::Complex64;

/// Density, velocity and (optionally) the wavefunction sampled on a fixed
/// spatial grid at one time.
#[derive(Clone, Debug)]
pub struct EulerianField {
    pub grid: Grid,
    pub t: f64,
    pub rho: Field,
    pub vel: Vec<Field>,
    pub psi: Option<Vec<Complex64>>,
    /// Nodes covered by fluid; density is zero and velocity meaningless
    /// outside.
    pub coverage: Vec<bool>,
}

impl EulerianField {
    pub fn new(grid: Grid, t: f64, rho: Field, vel: Vec<Field>) -> EulerianField {
        let coverage = vec![true; grid.len()];
        EulerianField {
            grid,
            t,
            rho,
            vel,
            psi: None,
            coverage,
        }
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Total probability over the covered region.
    pub fn norm(&self) -> f64 {
        let masked: Field = self
            .rho
            .iter()
            .zip(&self.coverage)
            .map(|(&r, &c)| if c { r } else { 0.0 })
            .collect();
        integrate(&self.grid, &masked)
    }

    /// Density-weighted first moment along `axis`.
    pub fn centroid(&self, axis: usize) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.grid.len() {
            if self.coverage[i] {
                let w = self.rho[i] * self.grid.quad_weight(i);
                num += w * self.grid.node(i)[axis];
                den += w;
            }
        }
        num / den
    }

    /// Density-weighted standard deviation along `axis`.
    pub fn width(&self, axis: usize) -> f64 {
        let c = self.centroid(axis);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.grid.len() {
            if self.coverage[i] {
                let w = self.rho[i] * self.grid.quad_weight(i);
                let d = self.grid.node(i)[axis] - c;
                num += w * d * d;
                den += w;
            }
        }
        (num / den).sqrt()
    }
}

/// |psi|^2 on a grid.
pub fn density_of(psi: &[Complex64]) -> Field {
    psi.iter().map(|z| z.norm_sqr()).collect()
}

/// L2 norm of a wavefunction under trapezoidal quadrature.
pub fn wave_norm(grid: &Grid, psi: &[Complex64]) -> f64 {
    integrate(grid, &density_of(psi)).sqrt()
}

/// Normalize in place to unit L2 norm.
pub fn normalize_wave(grid: &Grid, psi: &mut [Complex64]) {
    let n = wave_norm(grid, psi);
    if n > 0.0 {
        for z in psi.iter_mut() {
            *z /= n;
        }
    }
}

/// Inner product <a|b> under trapezoidal quadrature.
pub fn inner_product(grid: &Grid, a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..grid.len() {
        acc += a[i].conj() * b[i] * grid.quad_weight(i);
    }
    acc
}

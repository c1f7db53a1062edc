//! External potential descriptors: evaluation, gradients, and time
//! derivatives used by the force law and the admissibility checks.

use serde::{Deserialize, Serialize};

/// External conservative body-force potential. All supported kinds are
/// static in time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialSpec {
    Free,
    /// V = (1/2) m w^2 |x|^2
    Harmonic { omega: f64 },
    /// V = sum_k c_k |x|^k  (radially symmetric polynomial)
    Polynomial { coefficients: Vec<f64> },
    /// V = g / |x|^2
    InverseSquare { strength: f64 },
}

impl PotentialSpec {
    pub fn time_dependent(&self) -> bool {
        false
    }

    pub fn describe(&self) -> String {
        match self {
            PotentialSpec::Free => "free".into(),
            PotentialSpec::Harmonic { omega } => format!("harmonic (omega = {omega})"),
            PotentialSpec::Polynomial { coefficients } => {
                format!("radial polynomial {coefficients:?}")
            }
            PotentialSpec::InverseSquare { strength } => {
                format!("inverse-square (g = {strength})")
            }
        }
    }

    /// V(x, t).
    pub fn value(&self, x: &[f64], _t: f64, mass: f64) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        match self {
            PotentialSpec::Free => 0.0,
            PotentialSpec::Harmonic { omega } => 0.5 * mass * omega * omega * r2,
            PotentialSpec::Polynomial { coefficients } => {
                let r = r2.sqrt();
                coefficients
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * r.powi(k as i32))
                    .sum()
            }
            PotentialSpec::InverseSquare { strength } => strength / r2.max(1e-300),
        }
    }

    /// dV/dx_i (x, t).
    pub fn gradient(&self, x: &[f64], _t: f64, mass: f64) -> [f64; 3] {
        let mut g = [0.0; 3];
        let r2: f64 = x.iter().map(|v| v * v).sum();
        match self {
            PotentialSpec::Free => {}
            PotentialSpec::Harmonic { omega } => {
                for (i, &xi) in x.iter().enumerate() {
                    g[i] = mass * omega * omega * xi;
                }
            }
            PotentialSpec::Polynomial { coefficients } => {
                let r = r2.sqrt();
                if r > 1e-300 {
                    let dv_dr: f64 = coefficients
                        .iter()
                        .enumerate()
                        .skip(1)
                        .map(|(k, c)| c * k as f64 * r.powi(k as i32 - 1))
                        .sum();
                    for (i, &xi) in x.iter().enumerate() {
                        g[i] = dv_dr * xi / r;
                    }
                }
            }
            PotentialSpec::InverseSquare { strength } => {
                let r2s = r2.max(1e-300);
                for (i, &xi) in x.iter().enumerate() {
                    g[i] = -2.0 * strength * xi / (r2s * r2s);
                }
            }
        }
        g
    }

    /// dV/dt (x, t). Zero for all supported kinds.
    pub fn time_derivative(&self, _x: &[f64], _t: f64, _mass: f64) -> f64 {
        0.0
    }
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec::Free
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn harmonic_value_and_gradient() {
        let v = PotentialSpec::Harmonic { omega: 2.0 };
        assert_relative_eq!(v.value(&[1.5], 0.0, 1.0), 0.5 * 4.0 * 2.25);
        assert_relative_eq!(v.gradient(&[1.5], 0.0, 1.0)[0], 4.0 * 1.5);
        let g = v.gradient(&[1.0, -2.0], 0.0, 3.0);
        assert_relative_eq!(g[0], 12.0);
        assert_relative_eq!(g[1], -24.0);
    }

    #[test]
    fn inverse_square_scaling_identity() {
        // r dV/dr + 2V = 0 for V = g/r^2
        let v = PotentialSpec::InverseSquare { strength: 0.7 };
        for &x in &[0.3, 1.0, 2.9] {
            let val = v.value(&[x], 0.0, 1.0);
            let grad = v.gradient(&[x], 0.0, 1.0)[0];
            assert_relative_eq!(x * grad + 2.0 * val, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn polynomial_matches_closed_form() {
        let v = PotentialSpec::Polynomial {
            coefficients: vec![0.0, 0.0, 0.5, 0.0, 0.25],
        };
        let x = [1.3f64];
        assert_relative_eq!(
            v.value(&x, 0.0, 1.0),
            0.5 * 1.3f64.powi(2) + 0.25 * 1.3f64.powi(4),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            v.gradient(&x, 0.0, 1.0)[0],
            1.3 + 1.3f64.powi(3),
            epsilon = 1e-12
        );
    }
}

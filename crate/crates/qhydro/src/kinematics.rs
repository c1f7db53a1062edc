//! Deformation algebra for the label-to-position map: volume ratios and
//! cofactors, position-space gradients of label-space fields, inversion of
//! the map, and conversion of the flow to Eulerian fields.

use crate::error::{Error, Result};
use crate::fields::EulerianField;
use crate::interp::{sample_scalar, MapInverse2D, MonotoneInverse};
use crate::lattice::{derivative_with, DerivSpec, Field, Grid, NodeMask, MAX_DIM};

/// State of the particle ensemble at one time: positions, velocities and the
/// accumulated phase of every labelled particle.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    /// Current positions, one field per component.
    pub pos: Vec<Field>,
    /// Velocities, one field per component.
    pub vel: Vec<Field>,
    /// Phase carried by each particle. Starts at the initial phase samples,
    /// or at zero for multivalued-phase states (then only gradients and
    /// circulation integrals of it are meaningful).
    pub phase: Field,
    pub multivalued_phase: bool,
}

impl FlowState {
    pub fn dim(&self) -> usize {
        self.pos.len()
    }

    pub fn len(&self) -> usize {
        self.pos[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos[0].is_empty()
    }

    /// Position of node `i` as a fixed-size vector.
    pub fn position(&self, i: usize) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        for (k, c) in self.pos.iter().enumerate() {
            x[k] = c[i];
        }
        x
    }
}

/// Per-node deformation data: the matrix d q_i / d a_j (row-major), its
/// determinant, and the cofactor matrix.
#[derive(Clone, Debug)]
pub struct Deformation {
    pub dim: usize,
    /// grad[i * dim + j] = d q_i / d a_j
    pub grad: Vec<Field>,
    pub det: Field,
    /// cof[i * dim + j]: cofactor of d q_i / d a_j; contraction with the
    /// deformation matrix gives det times the identity.
    pub cof: Vec<Field>,
    pub min_det: f64,
    /// Count of non-positive determinants inside the mask (tolerated there).
    pub tangled_masked: usize,
}

/// Compute the deformation tensors of a flow. A non-positive volume ratio at
/// an unmasked node is mesh tangling and fatal; inside the mask the tensors
/// are replaced by the identity and counted.
pub fn deformation(flow: &FlowState, grid: &Grid, mask: Option<&NodeMask>) -> Result<Deformation> {
    let dim = grid.dim();
    let n = grid.len();
    let spec = DerivSpec::with_default_accuracy(1);
    let mut grad: Vec<Field> = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            grad.push(derivative_with(grid, &flow.pos[i], j, spec, mask)?);
        }
    }
    let mut det = vec![0.0; n];
    let mut cof: Vec<Field> = vec![vec![0.0; n]; dim * dim];
    let mut min_det = f64::MAX;
    let mut tangled_masked = 0usize;
    for p in 0..n {
        let masked = mask.map_or(false, |m| !m.is_valid(p));
        if masked {
            // neutral placeholders; the node is excluded from physics anyway
            det[p] = 1.0;
            for i in 0..dim {
                cof[i * dim + i][p] = 1.0;
            }
            tangled_masked += 1;
            continue;
        }
        let g = |i: usize, j: usize| grad[i * dim + j][p];
        let d = match dim {
            1 => {
                cof[0][p] = 1.0;
                g(0, 0)
            }
            2 => {
                cof[0][p] = g(1, 1);
                cof[1][p] = -g(1, 0);
                cof[2][p] = -g(0, 1);
                cof[3][p] = g(0, 0);
                g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0)
            }
            _ => {
                // cofactor of entry (i, l): signed 2x2 minor
                for i in 0..3 {
                    for l in 0..3 {
                        let (r0, r1) = match i {
                            0 => (1, 2),
                            1 => (0, 2),
                            _ => (0, 1),
                        };
                        let (c0, c1) = match l {
                            0 => (1, 2),
                            1 => (0, 2),
                            _ => (0, 1),
                        };
                        let minor = g(r0, c0) * g(r1, c1) - g(r0, c1) * g(r1, c0);
                        let sign = if (i + l) % 2 == 0 { 1.0 } else { -1.0 };
                        cof[i * 3 + l][p] = sign * minor;
                    }
                }
                g(0, 0) * cof[0][p] + g(0, 1) * cof[1][p] + g(0, 2) * cof[2][p]
            }
        };
        if !(d > 0.0) {
            return Err(Error::MeshTangling {
                node: p,
                time: flow.t,
                value: d,
            });
        }
        det[p] = d;
        min_det = min_det.min(d);
    }
    if !min_det.is_finite() {
        min_det = 1.0;
    }
    Ok(Deformation {
        dim,
        grad,
        det,
        cof,
        min_det,
        tangled_masked,
    })
}

/// Current density of the flow: reference density divided by the volume
/// ratio, node by node.
pub fn lagrangian_density(rho0: &[f64], def: &Deformation) -> Field {
    rho0.iter()
        .zip(&def.det)
        .map(|(&r, &j)| r / j)
        .collect()
}

/// Position-space gradient of a label-space scalar field, through the
/// cofactor contraction.
pub fn grad_q(
    field: &[f64],
    def: &Deformation,
    grid: &Grid,
    mask: Option<&NodeMask>,
) -> Result<Vec<Field>> {
    let dim = grid.dim();
    let spec = DerivSpec::with_default_accuracy(1);
    let mut da: Vec<Field> = Vec::with_capacity(dim);
    for j in 0..dim {
        da.push(derivative_with(grid, field, j, spec, mask)?);
    }
    let n = grid.len();
    let mut out: Vec<Field> = vec![vec![0.0; n]; dim];
    for p in 0..n {
        let inv_det = 1.0 / def.det[p];
        for i in 0..dim {
            let mut acc = 0.0;
            for j in 0..dim {
                acc += def.cof[i * dim + j][p] * da[j][p];
            }
            out[i][p] = acc * inv_det;
        }
    }
    Ok(out)
}

/// Inverse of the label-to-position map sampled on a position grid.
#[derive(Clone, Debug)]
pub struct InverseMap {
    /// Label of the particle currently at each position node (valid entries
    /// only).
    pub labels: Vec<[f64; MAX_DIM]>,
    /// False where the position node lies outside the image of the label
    /// domain.
    pub hull: Vec<bool>,
}

/// Invert the flow map on every node of `xgrid`.
pub fn invert_labels(flow: &FlowState, grid: &Grid, xgrid: &Grid) -> Result<InverseMap> {
    let dim = grid.dim();
    if xgrid.dim() != dim {
        return Err(Error::GridMismatch(
            "position grid dimension differs from label grid".into(),
        ));
    }
    let n = xgrid.len();
    let mut labels = vec![[0.0; MAX_DIM]; n];
    let mut hull = vec![false; n];
    match dim {
        1 => {
            let inv = MonotoneInverse::new(grid, &flow.pos[0]);
            for p in 0..n {
                let x = xgrid.coord(0, p);
                if let Some(a) = inv.invert(x) {
                    labels[p][0] = a;
                    hull[p] = true;
                }
            }
        }
        2 => {
            let inv = MapInverse2D::new(grid, &flow.pos[0], &flow.pos[1]);
            for p in 0..n {
                let x = xgrid.node(p);
                if let Some(a) = inv.invert(&x[..2]) {
                    labels[p][0] = a[0];
                    labels[p][1] = a[1];
                    hull[p] = true;
                }
            }
        }
        _ => {
            return Err(Error::UnsupportedTransform(
                "label-map inversion implemented for 1-d and 2-d flows".into(),
            ))
        }
    }
    Ok(InverseMap { labels, hull })
}

/// Convert a flow to Eulerian density and velocity on `xgrid`. Density is
/// set to zero outside the image of the label domain.
pub fn to_eulerian(
    flow: &FlowState,
    def: &Deformation,
    rho0: &[f64],
    grid: &Grid,
    xgrid: &Grid,
) -> Result<EulerianField> {
    let dim = grid.dim();
    let inv = invert_labels(flow, grid, xgrid)?;
    let rho_label = lagrangian_density(rho0, def);
    let n = xgrid.len();
    let mut rho = vec![0.0; n];
    let mut vel: Vec<Field> = vec![vec![0.0; n]; dim];
    for p in 0..n {
        if !inv.hull[p] {
            continue;
        }
        let a = &inv.labels[p][..dim];
        if let Some(r) = sample_scalar(grid, &rho_label, a) {
            rho[p] = r.max(0.0);
            for k in 0..dim {
                vel[k][p] = sample_scalar(grid, &flow.vel[k], a).unwrap_or(0.0);
            }
        }
    }
    let mut out = EulerianField::new(xgrid.clone(), flow.t, rho, vel);
    out.coverage = inv.hull;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_flow(grid: &Grid) -> FlowState {
        let dim = grid.dim();
        let n = grid.len();
        let mut pos = vec![vec![0.0; n]; dim];
        for i in 0..n {
            let a = grid.node(i);
            for k in 0..dim {
                pos[k][i] = a[k];
            }
        }
        FlowState {
            t: 0.0,
            vel: vec![vec![0.0; n]; dim],
            phase: vec![0.0; n],
            multivalued_phase: false,
            pos,
        }
    }

    #[test]
    fn identity_map_deformation() {
        let g = Grid::new(2, &[[-1.0, 1.0], [-1.0, 1.0]], &[20, 20]).unwrap();
        let flow = identity_flow(&g);
        let def = deformation(&flow, &g, None).unwrap();
        for p in 0..g.len() {
            assert_relative_eq!(def.det[p], 1.0, epsilon = 1e-11);
            assert_relative_eq!(def.cof[0][p], 1.0, epsilon = 1e-11);
            assert_relative_eq!(def.cof[1][p], 0.0, epsilon = 1e-11);
            assert_relative_eq!(def.cof[3][p], 1.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn uniform_stretch_density() {
        let g = Grid::line(-2.0, 2.0, 64).unwrap();
        let mut flow = identity_flow(&g);
        for v in flow.pos[0].iter_mut() {
            *v *= 2.0;
        }
        let def = deformation(&flow, &g, None).unwrap();
        let rho0: Field = (0..g.len()).map(|i| (-g.coord(0, i).powi(2)).exp()).collect();
        let rho = lagrangian_density(&rho0, &def);
        for p in 0..g.len() {
            assert_relative_eq!(def.det[p], 2.0, epsilon = 1e-10);
            assert_relative_eq!(rho[p], rho0[p] / 2.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn rotation_is_volume_preserving() {
        let g = Grid::new(2, &[[-1.0, 1.0], [-1.0, 1.0]], &[24, 24]).unwrap();
        let mut flow = identity_flow(&g);
        let th = 0.7f64;
        let (c, s) = (th.cos(), th.sin());
        for i in 0..g.len() {
            let a = g.node(i);
            flow.pos[0][i] = c * a[0] - s * a[1];
            flow.pos[1][i] = s * a[0] + c * a[1];
        }
        let def = deformation(&flow, &g, None).unwrap();
        for p in 0..g.len() {
            assert_relative_eq!(def.det[p], 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn cofactor_identity_holds() {
        // contraction of the deformation matrix with the cofactors gives
        // det times the identity, node-wise
        let g = Grid::new(2, &[[-1.0, 1.0], [-1.0, 1.0]], &[32, 32]).unwrap();
        let mut flow = identity_flow(&g);
        for i in 0..g.len() {
            let a = g.node(i);
            flow.pos[0][i] = a[0] + 0.1 * (a[1]).sin();
            flow.pos[1][i] = a[1] + 0.07 * (a[0] * 1.3).cos();
        }
        let def = deformation(&flow, &g, None).unwrap();
        let dim = 2;
        for p in 0..g.len() {
            for i in 0..dim {
                for j in 0..dim {
                    let mut acc = 0.0;
                    for k in 0..dim {
                        acc += def.grad[k * dim + j][p] * def.cof[k * dim + i][p];
                    }
                    let expect = if i == j { def.det[p] } else { 0.0 };
                    assert!(
                        (acc - expect).abs() <= 1e-10 * def.det[p].abs().max(1.0),
                        "node {p} ({i},{j}): {acc} vs {expect}"
                    );
                }
            }
        }
    }

    #[test]
    fn tangling_detected() {
        let g = Grid::line(-1.0, 1.0, 32).unwrap();
        let mut flow = identity_flow(&g);
        for i in 0..g.len() {
            flow.pos[0][i] = -g.coord(0, i);
        }
        assert!(matches!(
            deformation(&flow, &g, None),
            Err(Error::MeshTangling { .. })
        ));
    }

    #[test]
    fn grad_q_chain_rule_1d() {
        let g = Grid::line(-2.0, 2.0, 64).unwrap();
        let mut flow = identity_flow(&g);
        for v in flow.pos[0].iter_mut() {
            *v *= 2.0;
        }
        let def = deformation(&flow, &g, None).unwrap();
        let f: Field = (0..g.len()).map(|i| g.coord(0, i).powi(2)).collect();
        let gq = grad_q(&f, &def, &g, None).unwrap();
        for p in 0..g.len() {
            // df/dq = (df/da)/2 = a
            assert_relative_eq!(gq[0][p], g.coord(0, p), epsilon = 1e-9);
        }
    }

    #[test]
    fn grad_q_rotates_covariantly() {
        let g = Grid::new(2, &[[-3.0, 3.0], [-3.0, 3.0]], &[64, 64]).unwrap();
        let mut flow = identity_flow(&g);
        let th = 0.5f64;
        let (c, s) = (th.cos(), th.sin());
        for i in 0..g.len() {
            let a = g.node(i);
            flow.pos[0][i] = c * a[0] - s * a[1];
            flow.pos[1][i] = s * a[0] + c * a[1];
        }
        let def = deformation(&flow, &g, None).unwrap();
        // radial field of the labels; its position gradient must be the
        // rotated label gradient
        let f: Field = (0..g.len())
            .map(|i| {
                let a = g.node(i);
                (-(a[0] * a[0] + a[1] * a[1]) / 2.0).exp()
            })
            .collect();
        let gq = grad_q(&f, &def, &g, None).unwrap();
        for p in 0..g.len() {
            let a = g.node(p);
            if a[0].abs() > 2.5 || a[1].abs() > 2.5 {
                continue;
            }
            let ga = [-a[0] * f[p], -a[1] * f[p]];
            let want = [c * ga[0] - s * ga[1], s * ga[0] + c * ga[1]];
            assert!((gq[0][p] - want[0]).abs() <= 1e-8);
            assert!((gq[1][p] - want[1]).abs() <= 1e-8);
        }
    }

    #[test]
    fn invert_identity_and_linear() {
        let g = Grid::line(-2.0, 2.0, 64).unwrap();
        let flow = identity_flow(&g);
        let x = Grid::line(-1.5, 1.5, 32).unwrap();
        let inv = invert_labels(&flow, &g, &x).unwrap();
        for p in 0..x.len() {
            assert!(inv.hull[p]);
            assert_relative_eq!(inv.labels[p][0], x.coord(0, p), epsilon = 1e-10);
        }
        let mut stretched = identity_flow(&g);
        for v in stretched.pos[0].iter_mut() {
            *v *= 2.0;
        }
        let inv = invert_labels(&stretched, &g, &x).unwrap();
        for p in 0..x.len() {
            assert_relative_eq!(inv.labels[p][0], x.coord(0, p) / 2.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn eulerian_identity_at_t0() {
        let g = Grid::line(-6.0, 6.0, 256).unwrap();
        let flow = identity_flow(&g);
        let def = deformation(&flow, &g, None).unwrap();
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let rho0: Field = (0..g.len())
            .map(|i| norm * (-g.coord(0, i).powi(2) / 2.0).exp())
            .collect();
        let x = Grid::line(-5.0, 5.0, 200).unwrap();
        let e = to_eulerian(&flow, &def, &rho0, &g, &x).unwrap();
        for p in 0..x.len() {
            let want = norm * (-x.coord(0, p).powi(2) / 2.0).exp();
            assert!((e.rho[p] - want).abs() <= 1e-9);
            assert_eq!(e.vel[0][p], 0.0);
        }
        // mass over the covered region
        assert!((e.norm() - 1.0).abs() <= 1e-4);
    }
}

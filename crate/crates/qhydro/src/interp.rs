//! Interpolation and map inversion on uniform grids: cubic (4-point Lagrange)
//! sampling in 1–3 dimensions, monotone inversion of 1-d maps, and Newton
//! inversion of 2-d maps on the bilinear interpolant.

use crate::lattice::{Grid, MAX_DIM};

/// Cubic Lagrange basis at local coordinate `t` in [0, 1] relative to the
/// second node of a 4-node window.
fn cubic_basis(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        -t3 / 6.0 + t2 / 2.0 - t / 3.0,
        t3 / 2.0 - t2 - t / 2.0 + 1.0,
        -t3 / 2.0 + t2 / 2.0 + t,
        t3 / 6.0 - t / 6.0,
    ]
}

/// Window start and local coordinate for cubic interpolation along an axis.
/// Returns None outside the grid extent (beyond half a spacing of tolerance).
fn window(grid: &Grid, axis: usize, x: f64) -> Option<(usize, f64)> {
    let [lo, hi] = grid.extents()[axis];
    let h = grid.spacing()[axis];
    let n = grid.counts()[axis];
    let eps = 1e-9 * h;
    if x < lo - eps || x > hi + eps {
        return None;
    }
    let u = ((x - lo) / h).clamp(0.0, (n - 1) as f64);
    let cell = (u.floor() as usize).min(n - 2);
    let start = cell.saturating_sub(1).min(n - 4);
    Some((start, u - start as f64 - 1.0))
}

/// Cubic interpolation of a scalar field at `point`. None when outside.
pub fn sample_scalar(grid: &Grid, field: &[f64], point: &[f64]) -> Option<f64> {
    debug_assert_eq!(field.len(), grid.len());
    let dim = grid.dim();
    let mut starts = [0usize; MAX_DIM];
    let mut basis = [[0.0f64; 4]; MAX_DIM];
    for k in 0..dim {
        let (s, t) = window(grid, k, point[k])?;
        starts[k] = s;
        basis[k] = cubic_basis(t);
    }
    match dim {
        1 => {
            let mut acc = 0.0;
            for j in 0..4 {
                acc += basis[0][j] * field[starts[0] + j];
            }
            Some(acc)
        }
        2 => {
            let n1 = grid.counts()[1];
            let mut acc = 0.0;
            for i in 0..4 {
                let row = (starts[0] + i) * n1 + starts[1];
                let mut racc = 0.0;
                for j in 0..4 {
                    racc += basis[1][j] * field[row + j];
                }
                acc += basis[0][i] * racc;
            }
            Some(acc)
        }
        _ => {
            let n1 = grid.counts()[1];
            let n2 = grid.counts()[2];
            let mut acc = 0.0;
            for i in 0..4 {
                let mut pacc = 0.0;
                for j in 0..4 {
                    let row = ((starts[0] + i) * n1 + starts[1] + j) * n2 + starts[2];
                    let mut racc = 0.0;
                    for l in 0..4 {
                        racc += basis[2][l] * field[row + l];
                    }
                    pacc += basis[1][j] * racc;
                }
                acc += basis[0][i] * pacc;
            }
            Some(acc)
        }
    }
}

/// Cubic interpolation of several fields at once (shared window work).
pub fn sample_many(grid: &Grid, fields: &[&[f64]], point: &[f64]) -> Option<Vec<f64>> {
    fields
        .iter()
        .map(|f| sample_scalar(grid, f, point))
        .collect()
}

/// Inversion of a strictly monotone 1-d map given by nodal samples `q`.
/// Bracketing by binary search, then safeguarded Newton on the local cubic.
pub struct MonotoneInverse<'a> {
    grid: &'a Grid,
    q: &'a [f64],
    increasing: bool,
}

impl<'a> MonotoneInverse<'a> {
    pub fn new(grid: &'a Grid, q: &'a [f64]) -> MonotoneInverse<'a> {
        debug_assert_eq!(grid.dim(), 1);
        MonotoneInverse {
            grid,
            q,
            increasing: q[q.len() - 1] > q[0],
        }
    }

    /// Image of the label interval.
    pub fn range(&self) -> (f64, f64) {
        if self.increasing {
            (self.q[0], self.q[self.q.len() - 1])
        } else {
            (self.q[self.q.len() - 1], self.q[0])
        }
    }

    /// Label `a` with q(a) = x, or None if x lies outside the image.
    pub fn invert(&self, x: f64) -> Option<f64> {
        let n = self.q.len();
        let (qlo, qhi) = self.range();
        let tol = 1e-12 * (qhi - qlo).abs().max(1.0);
        if x < qlo - tol || x > qhi + tol {
            return None;
        }
        // binary search for the bracketing cell
        let key = |v: f64| if self.increasing { v } else { -v };
        let xk = key(x);
        let (mut lo, mut hi) = (0usize, n - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if key(self.q[mid]) <= xk {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a_lo = self.grid.coord(0, lo);
        let a_hi = self.grid.coord(0, hi);
        // Newton on the cubic interpolant, bisection fallback
        let mut a = a_lo + (a_hi - a_lo) * 0.5;
        let (mut blo, mut bhi) = (a_lo, a_hi);
        let h = self.grid.spacing()[0];
        for _ in 0..60 {
            let qa = sample_scalar(self.grid, self.q, &[a])?;
            let r = qa - x;
            if r.abs() <= tol {
                return Some(a);
            }
            let qp = (sample_scalar(self.grid, self.q, &[a + 1e-6 * h])?
                - sample_scalar(self.grid, self.q, &[a - 1e-6 * h])?)
                / (2e-6 * h);
            let r_increasing = r > 0.0;
            if r_increasing == self.increasing {
                bhi = a;
            } else {
                blo = a;
            }
            let step = if qp.abs() > 1e-300 { r / qp } else { f64::INFINITY };
            let cand = a - step;
            a = if cand.is_finite() && cand > blo.min(bhi) && cand < blo.max(bhi) {
                cand
            } else {
                0.5 * (blo + bhi)
            };
        }
        Some(a)
    }
}

/// Newton inversion of a 2-d map on its bilinear interpolant, seeded from the
/// nearest sample node (found through a uniform spatial hash of positions).
pub struct MapInverse2D<'a> {
    grid: &'a Grid,
    qx: &'a [f64],
    qy: &'a [f64],
    bins: Vec<Vec<u32>>,
    bin_counts: [usize; 2],
    bin_origin: [f64; 2],
    bin_size: [f64; 2],
}

impl<'a> MapInverse2D<'a> {
    pub fn new(grid: &'a Grid, qx: &'a [f64], qy: &'a [f64]) -> MapInverse2D<'a> {
        debug_assert_eq!(grid.dim(), 2);
        let n = grid.len();
        let (mut xlo, mut xhi, mut ylo, mut yhi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for i in 0..n {
            xlo = xlo.min(qx[i]);
            xhi = xhi.max(qx[i]);
            ylo = ylo.min(qy[i]);
            yhi = yhi.max(qy[i]);
        }
        let nb = ((n as f64).sqrt() as usize).clamp(8, 256);
        let sx = ((xhi - xlo) / nb as f64).max(1e-12);
        let sy = ((yhi - ylo) / nb as f64).max(1e-12);
        let mut bins = vec![Vec::new(); nb * nb];
        for i in 0..n {
            let bx = (((qx[i] - xlo) / sx) as usize).min(nb - 1);
            let by = (((qy[i] - ylo) / sy) as usize).min(nb - 1);
            bins[bx * nb + by].push(i as u32);
        }
        MapInverse2D {
            grid,
            qx,
            qy,
            bins,
            bin_counts: [nb, nb],
            bin_origin: [xlo, ylo],
            bin_size: [sx, sy],
        }
    }

    fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        let nb = self.bin_counts[0];
        let bx = (((x[0] - self.bin_origin[0]) / self.bin_size[0]) as isize).clamp(0, nb as isize - 1);
        let by = (((x[1] - self.bin_origin[1]) / self.bin_size[1]) as isize).clamp(0, nb as isize - 1);
        let mut best: Option<(f64, usize)> = None;
        for ring in 0..nb as isize {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    if dx.abs() != ring && dy.abs() != ring {
                        continue;
                    }
                    let (cx, cy) = (bx + dx, by + dy);
                    if cx < 0 || cy < 0 || cx >= nb as isize || cy >= nb as isize {
                        continue;
                    }
                    for &i in &self.bins[(cx as usize) * nb + cy as usize] {
                        let i = i as usize;
                        let d = (self.qx[i] - x[0]).powi(2) + (self.qy[i] - x[1]).powi(2);
                        if best.map_or(true, |(bd, _)| d < bd) {
                            best = Some((d, i));
                        }
                    }
                }
            }
            if let Some((d, _)) = best {
                // one extra ring guarantees the true nearest is seen
                let safe = (ring as f64 - 1.0).max(0.0)
                    * self.bin_size[0].min(self.bin_size[1]);
                if d.sqrt() <= safe || ring == nb as isize - 1 {
                    break;
                }
            }
        }
        best.map(|(_, i)| i)
    }

    /// Bilinear map value and Jacobian at label point `a`.
    fn eval(&self, a: &[f64]) -> Option<([f64; 2], [[f64; 2]; 2])> {
        let g = self.grid;
        let (n0, n1) = (g.counts()[0], g.counts()[1]);
        let h0 = g.spacing()[0];
        let h1 = g.spacing()[1];
        let u = (a[0] - g.extents()[0][0]) / h0;
        let v = (a[1] - g.extents()[1][0]) / h1;
        if u < -0.5 || v < -0.5 || u > (n0 - 1) as f64 + 0.5 || v > (n1 - 1) as f64 + 0.5 {
            return None;
        }
        let i = (u.floor() as isize).clamp(0, n0 as isize - 2) as usize;
        let j = (v.floor() as isize).clamp(0, n1 as isize - 2) as usize;
        let (fu, fv) = (u - i as f64, v - j as f64);
        let idx = |ii: usize, jj: usize| ii * n1 + jj;
        let mut val = [0.0; 2];
        let mut jac = [[0.0; 2]; 2];
        for (comp, q) in [self.qx, self.qy].iter().enumerate() {
            let q00 = q[idx(i, j)];
            let q10 = q[idx(i + 1, j)];
            let q01 = q[idx(i, j + 1)];
            let q11 = q[idx(i + 1, j + 1)];
            val[comp] = q00 * (1.0 - fu) * (1.0 - fv)
                + q10 * fu * (1.0 - fv)
                + q01 * (1.0 - fu) * fv
                + q11 * fu * fv;
            jac[comp][0] = ((q10 - q00) * (1.0 - fv) + (q11 - q01) * fv) / h0;
            jac[comp][1] = ((q01 - q00) * (1.0 - fu) + (q11 - q10) * fu) / h1;
        }
        Some((val, jac))
    }

    /// Label with q(a) = x, or None after 50 Newton iterations (out of hull).
    pub fn invert(&self, x: &[f64]) -> Option<[f64; 2]> {
        let seed = self.nearest_node(x)?;
        let start = self.grid.node(seed);
        let mut a = [start[0], start[1]];
        let scale = self.grid.spacing()[0].min(self.grid.spacing()[1]);
        let tol = 1e-11 * scale.max(1.0);
        for _ in 0..50 {
            let (val, jac) = self.eval(&a)?;
            let r = [val[0] - x[0], val[1] - x[1]];
            if (r[0] * r[0] + r[1] * r[1]).sqrt() <= tol {
                // reject converged points outside the label hull
                let e = self.grid.extents();
                if a[0] < e[0][0] - 1e-9 || a[0] > e[0][1] + 1e-9
                    || a[1] < e[1][0] - 1e-9 || a[1] > e[1][1] + 1e-9
                {
                    return None;
                }
                return Some(a);
            }
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if det.abs() < 1e-300 {
                return None;
            }
            let da0 = (jac[1][1] * r[0] - jac[0][1] * r[1]) / det;
            let da1 = (-jac[1][0] * r[0] + jac[0][0] * r[1]) / det;
            // damp long steps to stay on the interpolant
            let lim = 3.0 * scale;
            let norm = (da0 * da0 + da1 * da1).sqrt();
            let damp = if norm > lim { lim / norm } else { 1.0 };
            a[0] -= damp * da0;
            a[1] -= damp * da1;
        }
        None
    }
}

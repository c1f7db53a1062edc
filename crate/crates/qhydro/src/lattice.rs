//! Uniform rectangular grids (label space or position space), finite-difference
//! derivative operators up to fourth order, and trapezoidal quadrature.
//!
//! Stencil weights are generated with Fornberg's recurrence, so interior nodes
//! get symmetric windows and nodes near a boundary (or near a masked hole) get
//! one-sided windows of the same accuracy order. Nodes inside a mask produce
//! zero derivatives and carry zero quadrature weight.

use crate::error::{Error, Result};
use std::collections::HashMap;

pub const MAX_DIM: usize = 3;

/// Scalar samples over a grid, row-major.
pub type Field = Vec<f64>;

/// Uniform rectangular grid. Node enumeration is row-major (last axis fastest)
/// and deterministic.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    extents: [[f64; 2]; MAX_DIM],
    counts: [usize; MAX_DIM],
    spacing: [f64; MAX_DIM],
    strides: [usize; MAX_DIM],
    len: usize,
}

impl Grid {
    pub fn new(dim: usize, extents: &[[f64; 2]], counts: &[usize]) -> Result<Grid> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Config(format!("grid dim must be 1..=3, got {dim}")));
        }
        if extents.len() != dim || counts.len() != dim {
            return Err(Error::Config(format!(
                "grid needs {dim} extents and counts, got {} and {}",
                extents.len(),
                counts.len()
            )));
        }
        let mut g = Grid {
            dim,
            extents: [[0.0; 2]; MAX_DIM],
            counts: [1; MAX_DIM],
            spacing: [1.0; MAX_DIM],
            strides: [0; MAX_DIM],
            len: 1,
        };
        for k in 0..dim {
            let [lo, hi] = extents[k];
            if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!(
                    "degenerate extent [{lo}, {hi}] on axis {k}"
                )));
            }
            if counts[k] < 16 {
                return Err(Error::Config(format!(
                    "axis {k} needs at least 16 nodes, got {}",
                    counts[k]
                )));
            }
            g.extents[k] = [lo, hi];
            g.counts[k] = counts[k];
            g.spacing[k] = (hi - lo) / (counts[k] - 1) as f64;
        }
        g.len = g.counts[..dim].iter().product();
        // row-major: last axis contiguous
        let mut stride = 1usize;
        for k in (0..dim).rev() {
            g.strides[k] = stride;
            stride *= g.counts[k];
        }
        Ok(g)
    }

    pub fn line(lo: f64, hi: f64, count: usize) -> Result<Grid> {
        Grid::new(1, &[[lo, hi]], &[count])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim]
    }
    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }
    pub fn extents(&self) -> &[[f64; 2]] {
        &self.extents[..self.dim]
    }

    /// Coordinate of node `i` along `axis`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.extents[axis][0] + self.spacing[axis] * i as f64
    }

    pub fn multi_index(&self, flat: usize) -> [usize; MAX_DIM] {
        let mut rest = flat;
        let mut idx = [0usize; MAX_DIM];
        for k in 0..self.dim {
            idx[k] = rest / self.strides[k];
            rest %= self.strides[k];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for k in 0..self.dim {
            flat += idx[k] * self.strides[k];
        }
        flat
    }

    /// Physical coordinates of node `flat`.
    pub fn node(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(flat);
        let mut x = [0.0; MAX_DIM];
        for k in 0..self.dim {
            x[k] = self.coord(k, idx[k]);
        }
        x
    }

    /// Iterate over all 1-d lines along `axis` as (base offset, stride, length).
    pub fn lines(&self, axis: usize) -> Vec<(usize, usize, usize)> {
        let stride = self.strides[axis];
        let n = self.counts[axis];
        let mut out = Vec::with_capacity(self.len / n);
        let mut idx = [0usize; MAX_DIM];
        loop {
            if idx[axis] == 0 {
                out.push((self.flat_index(&idx), stride, n));
            }
            // odometer over all axes except `axis`
            let mut k = self.dim;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                if k == axis {
                    continue;
                }
                idx[k] += 1;
                if idx[k] < self.counts[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        let idx = self.multi_index(flat);
        (0..self.dim).any(|k| idx[k] == 0 || idx[k] == self.counts[k] - 1)
    }

    /// Trapezoidal quadrature weight of a node (product rule).
    pub fn quad_weight(&self, flat: usize) -> f64 {
        let idx = self.multi_index(flat);
        let mut w = 1.0;
        for k in 0..self.dim {
            let edge = idx[k] == 0 || idx[k] == self.counts[k] - 1;
            w *= self.spacing[k] * if edge { 0.5 } else { 1.0 };
        }
        w
    }

    pub fn same_layout(&self, other: &Grid) -> bool {
        self == other
    }
}

/// Node validity mask. Invalid nodes are excluded from stencils and quadrature.
#[derive(Clone, Debug)]
pub struct NodeMask {
    valid: Vec<bool>,
    masked: usize,
}

impl NodeMask {
    pub fn all_valid(len: usize) -> NodeMask {
        NodeMask {
            valid: vec![true; len],
            masked: 0,
        }
    }

    /// Mask nodes for which `pred(position)` is true.
    pub fn from_predicate<F: Fn(&[f64]) -> bool>(grid: &Grid, masked_if: F) -> NodeMask {
        let mut valid = vec![true; grid.len()];
        let mut masked = 0;
        for i in 0..grid.len() {
            let x = grid.node(i);
            if masked_if(&x[..grid.dim()]) {
                valid[i] = false;
                masked += 1;
            }
        }
        NodeMask { valid, masked }
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.valid[i]
    }
    pub fn masked_count(&self) -> usize {
        self.masked
    }
    pub fn len(&self) -> usize {
        self.valid.len()
    }
    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }
}

/// Derivative request: order 1..=4, accuracy 2 or 4.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DerivSpec {
    pub order: usize,
    pub accuracy: usize,
}

impl DerivSpec {
    /// Default accuracy: fourth order for first/second derivatives, second
    /// order for third/fourth (their wide one-sided windows degrade near
    /// boundaries otherwise).
    pub fn with_default_accuracy(order: usize) -> DerivSpec {
        let accuracy = if order <= 2 { 4 } else { 2 };
        DerivSpec { order, accuracy }
    }
}

/// Finite-difference weights for the m-th derivative at `x0` given nodes `x`
/// (Fornberg's recurrence). Returns weights for derivative orders 0..=m.
fn fornberg_weights(x0: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - x0;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Weight table for windows of a fixed width, keyed by the evaluation
/// position inside the window. Offsets are in units of the grid spacing.
struct WeightCache {
    order: usize,
    cache: HashMap<(usize, usize), Vec<f64>>,
}

impl WeightCache {
    fn new(order: usize) -> WeightCache {
        WeightCache {
            order,
            cache: HashMap::new(),
        }
    }

    fn get(&mut self, width: usize, pos: usize) -> &[f64] {
        let order = self.order;
        self.cache.entry((width, pos)).or_insert_with(|| {
            let xs: Vec<f64> = (0..width).map(|j| j as f64).collect();
            let all = fornberg_weights(pos as f64, &xs, order);
            all[order].clone()
        })
    }
}

fn check_finite(field: &[f64]) -> Result<()> {
    for (i, v) in field.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Numeric {
                what: format!("non-finite sample {v}"),
                node: i,
            });
        }
    }
    Ok(())
}

/// Apply the stencil along one contiguous run of valid nodes.
fn apply_run(
    line: &[f64],
    out: &mut [f64],
    run: (usize, usize), // [start, end) within the line
    h: f64,
    spec: DerivSpec,
    weights: &mut WeightCache,
) {
    let (start, end) = run;
    let len = end - start;
    let m = spec.order;
    if len <= m {
        for o in out.iter_mut().take(end).skip(start) {
            *o = 0.0;
        }
        return;
    }
    // symmetric interior window (odd width), one-sided near run edges
    let w_central = {
        let w = m + spec.accuracy - 1;
        if w % 2 == 0 {
            w + 1
        } else {
            w
        }
    };
    let w_edge = m + spec.accuracy;
    let scale = h.powi(m as i32).recip();
    for i in start..end {
        let (width, w_start) = {
            let half = (w_central - 1) / 2;
            if len >= w_central && i >= start + half && i + half < end {
                (w_central, i - half)
            } else {
                let w = w_edge.min(len);
                // slide the window inside the run, keeping i covered
                let lo_max = end - w;
                let lo = i.saturating_sub((w - 1) / 2).clamp(start, lo_max.max(start));
                (w, lo)
            }
        };
        let wts = weights.get(width, i - w_start);
        let mut acc = 0.0;
        for (j, wj) in wts.iter().enumerate() {
            acc += wj * line[w_start + j];
        }
        out[i] = acc * scale;
    }
}

/// Derivative of `field` along `axis` with explicit spec and optional mask.
///
/// Valid nodes never read masked neighbours: the stencil window slides to a
/// one-sided variant of the same accuracy inside the local valid run. Masked
/// nodes get a zero derivative.
pub fn derivative_with(
    grid: &Grid,
    field: &[f64],
    axis: usize,
    spec: DerivSpec,
    mask: Option<&NodeMask>,
) -> Result<Field> {
    assert!(axis < grid.dim(), "axis out of range");
    assert!(
        (1..=4).contains(&spec.order),
        "derivative order must be 1..=4"
    );
    assert!(
        spec.accuracy == 2 || spec.accuracy == 4,
        "accuracy must be 2 or 4"
    );
    if field.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "field has {} samples, grid has {} nodes",
            field.len(),
            grid.len()
        )));
    }
    check_finite(field)?;

    let h = grid.spacing()[axis];
    let mut weights = WeightCache::new(spec.order);
    let mut out = vec![0.0; grid.len()];
    let mut line_buf = vec![0.0; grid.counts()[axis]];
    let mut out_buf = vec![0.0; grid.counts()[axis]];
    let mut valid_buf = vec![true; grid.counts()[axis]];

    for (base, stride, n) in grid.lines(axis) {
        for j in 0..n {
            let g = base + j * stride;
            line_buf[j] = field[g];
            valid_buf[j] = mask.map_or(true, |m| m.is_valid(g));
        }
        out_buf[..n].fill(0.0);
        // contiguous valid runs
        let mut j = 0;
        while j < n {
            if !valid_buf[j] {
                j += 1;
                continue;
            }
            let run_start = j;
            while j < n && valid_buf[j] {
                j += 1;
            }
            apply_run(&line_buf[..n], &mut out_buf[..n], (run_start, j), h, spec, &mut weights);
        }
        for (j, &v) in out_buf[..n].iter().enumerate() {
            out[base + j * stride] = v;
        }
    }
    Ok(out)
}

/// Derivative along `axis` at the default accuracy for the order.
pub fn derivative(grid: &Grid, field: &[f64], axis: usize, order: usize) -> Result<Field> {
    derivative_with(grid, field, axis, DerivSpec::with_default_accuracy(order), None)
}

/// Mixed second derivative as a composition of two first derivatives.
pub fn derivative_mixed(
    grid: &Grid,
    field: &[f64],
    axis_a: usize,
    axis_b: usize,
    mask: Option<&NodeMask>,
) -> Result<Field> {
    let spec = DerivSpec::with_default_accuracy(1);
    let first = derivative_with(grid, field, axis_a, spec, mask)?;
    derivative_with(grid, &first, axis_b, spec, mask)
}

/// A reusable derivative operator bound to an axis (or axis pair).
#[derive(Clone, Copy, Debug)]
pub struct StencilOperator {
    pub spec: DerivSpec,
    pub axis: usize,
    pub second_axis: Option<usize>,
}

impl StencilOperator {
    pub fn new(order: usize, accuracy: usize, axis: usize) -> StencilOperator {
        StencilOperator {
            spec: DerivSpec { order, accuracy },
            axis,
            second_axis: None,
        }
    }

    pub fn mixed(axis_a: usize, axis_b: usize) -> StencilOperator {
        StencilOperator {
            spec: DerivSpec::with_default_accuracy(1),
            axis: axis_a,
            second_axis: Some(axis_b),
        }
    }

    pub fn apply(&self, grid: &Grid, field: &[f64]) -> Result<Field> {
        self.apply_masked(grid, field, None)
    }

    pub fn apply_masked(&self, grid: &Grid, field: &[f64], mask: Option<&NodeMask>) -> Result<Field> {
        match self.second_axis {
            Some(b) => derivative_mixed(grid, field, self.axis, b, mask),
            None => derivative_with(grid, field, self.axis, self.spec, mask),
        }
    }
}

/// Trapezoidal quadrature over the whole grid.
pub fn integrate(grid: &Grid, field: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, &v) in field.iter().enumerate() {
        acc += v * grid.quad_weight(i);
    }
    acc
}

/// Quadrature excluding masked nodes.
pub fn integrate_masked(grid: &Grid, field: &[f64], mask: Option<&NodeMask>) -> f64 {
    match mask {
        None => integrate(grid, field),
        Some(m) => {
            let mut acc = 0.0;
            for (i, &v) in field.iter().enumerate() {
                if m.is_valid(i) {
                    acc += v * grid.quad_weight(i);
                }
            }
            acc
        }
    }
}

/// Boundary-decay check used before quadrature of compact fields.
#[derive(Clone, Copy, Debug)]
pub struct LeakageCheck {
    pub boundary_max: f64,
    pub interior_max: f64,
    pub leaking: bool,
}

pub fn boundary_leakage(grid: &Grid, field: &[f64]) -> LeakageCheck {
    let mut bmax = 0.0f64;
    let mut imax = 0.0f64;
    for (i, &v) in field.iter().enumerate() {
        let a = v.abs();
        if grid.is_boundary(i) {
            bmax = bmax.max(a);
        } else {
            imax = imax.max(a);
        }
    }
    LeakageCheck {
        boundary_max: bmax,
        interior_max: imax,
        leaking: imax > 0.0 && bmax >= 1e-6 * imax,
    }
}

/// Quadrature plus the boundary-decay warning channel.
pub fn integrate_checked(grid: &Grid, field: &[f64]) -> (f64, LeakageCheck) {
    (integrate(grid, field), boundary_leakage(grid, field))
}

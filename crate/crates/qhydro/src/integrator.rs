//! Time evolution of the trajectory ensemble: classical RK4 on positions and
//! velocities, with the particle phase accumulated from the same quadrature
//! so that the velocity covector stays the gradient of the phase.

use crate::error::{Error, Result};
use crate::forces::{acceleration, ForceEval, ForceForm, DENSITY_FLOOR_REL};
use crate::kinematics::{deformation, FlowState};
use crate::lattice::{
    boundary_leakage, derivative_with, integrate, DerivSpec, Field, Grid, NodeMask, MAX_DIM,
};
use crate::potential::PotentialSpec;
use crate::PhysParams;

/// Initial data of a run: reference density, initial phase (or an initial
/// velocity field for multivalued-phase states), and the external potential.
#[derive(Clone, Debug)]
pub struct InitialData {
    pub rho0: Field,
    pub phase0: Option<Field>,
    pub vel0: Option<Vec<Field>>,
    pub potential: PotentialSpec,
    pub phys: PhysParams,
}

/// Step-size rule. The CFL rule follows the quadratic dispersion of the
/// quantum stress: dt = c * m * (min spacing)^2 / hbar.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum StepRule {
    Cfl { c: f64 },
    Fixed { dt: f64 },
}

/// Circular region of label space excluded from physics and diagnostics
/// (used around vortex cores, where the map winds up and dealigns from any
/// fixed grid).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CoreMask {
    pub center: [f64; MAX_DIM],
    pub radius: f64,
}

#[derive(Clone, Debug)]
pub struct IntegrationConfig {
    pub step: StepRule,
    pub t_end: f64,
    /// Number of stored snapshots, including the initial and final states.
    pub snapshots: usize,
    pub force_form: ForceForm,
    pub core_mask: Option<CoreMask>,
}

impl IntegrationConfig {
    pub fn validate(&self, grid: &Grid) -> Result<f64> {
        if self.t_end < 0.0 {
            return Err(Error::Config("t_end must be non-negative".into()));
        }
        let dt = match self.step {
            StepRule::Fixed { dt } => {
                if dt <= 0.0 {
                    return Err(Error::Config("dt must be positive".into()));
                }
                dt
            }
            StepRule::Cfl { c } => {
                if !(c > 0.0 && c <= 1.0) {
                    return Err(Error::Config(format!(
                        "CFL factor must lie in (0, 1], got {c}"
                    )));
                }
                let hmin = grid.spacing().iter().cloned().fold(f64::MAX, f64::min);
                c * hmin * hmin // scaled by m/hbar at run time
            }
        };
        Ok(dt)
    }
}

/// Run-level health metrics.
#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct RunDiagnostics {
    pub steps: usize,
    pub dt: f64,
    pub min_volume_ratio: f64,
    pub starved_nodes_max: usize,
    pub masked_nodes: usize,
    pub boundary_leakage: f64,
    /// Max residual of the phase-gradient identity over the snapshots.
    pub velocity_identity_max: f64,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub snapshots: Vec<FlowState>,
    pub diagnostics: RunDiagnostics,
}

fn mask_from_config(grid: &Grid, config: &IntegrationConfig) -> Option<NodeMask> {
    config.core_mask.map(|cm| {
        NodeMask::from_predicate(grid, |a| {
            let mut r2 = 0.0;
            for (k, &ak) in a.iter().enumerate() {
                let d = ak - cm.center[k];
                r2 += d * d;
            }
            r2.sqrt() < cm.radius
        })
    })
}

/// Build the state at t = 0: positions equal to labels, velocities from the
/// initial phase gradient (or given directly), phase from the samples.
pub fn initialize(init: &InitialData, grid: &Grid) -> Result<FlowState> {
    let dim = grid.dim();
    let n = grid.len();
    if init.rho0.len() != n {
        return Err(Error::GridMismatch("rho0 sample count".into()));
    }
    let norm = integrate(grid, &init.rho0);
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "reference density integrates to {norm}, expected 1 within 1e-6"
        )));
    }
    let mut pos = vec![vec![0.0; n]; dim];
    for i in 0..n {
        let a = grid.node(i);
        for k in 0..dim {
            pos[k][i] = a[k];
        }
    }
    let (vel, phase, multivalued) = match (&init.phase0, &init.vel0) {
        (Some(s0), _) => {
            if s0.len() != n {
                return Err(Error::GridMismatch("phase0 sample count".into()));
            }
            let spec = DerivSpec::with_default_accuracy(1);
            let mut vel = Vec::with_capacity(dim);
            for k in 0..dim {
                let d = derivative_with(grid, s0, k, spec, None)?;
                vel.push(d.iter().map(|v| v / init.phys.mass).collect());
            }
            (vel, s0.clone(), false)
        }
        (None, Some(v0)) => {
            if v0.len() != dim || v0.iter().any(|c| c.len() != n) {
                return Err(Error::GridMismatch("vel0 component count".into()));
            }
            (v0.clone(), vec![0.0; n], true)
        }
        (None, None) => (vec![vec![0.0; n]; dim], vec![0.0; n], false),
    };
    Ok(FlowState {
        t: 0.0,
        pos,
        vel,
        phase,
        multivalued_phase: multivalued,
    })
}

struct StageEval {
    force: ForceEval,
    /// Phase rate at each node for a given velocity field.
    phase_rate: Field,
}

fn eval_stage(
    pos: &[Field],
    vel: &[Field],
    t: f64,
    init: &InitialData,
    grid: &Grid,
    mask: Option<&NodeMask>,
    form: ForceForm,
) -> Result<StageEval> {
    let dim = grid.dim();
    let n = grid.len();
    let probe = FlowState {
        t,
        pos: pos.to_vec(),
        vel: vel.to_vec(),
        phase: vec![0.0; n],
        multivalued_phase: false,
    };
    let force = acceleration(&probe, &init.rho0, &init.potential, grid, mask, &init.phys, form)?;
    let mut phase_rate = vec![0.0; n];
    for p in 0..n {
        let mut v2 = 0.0;
        for k in 0..dim {
            v2 += vel[k][p] * vel[k][p];
        }
        phase_rate[p] =
            0.5 * init.phys.mass * v2 - force.external[p] - force.quantum[p];
    }
    Ok(StageEval { force, phase_rate })
}

fn axpy(out: &mut [Field], base: &[Field], k: &[Field], h: f64) {
    for (o, (b, kk)) in out.iter_mut().zip(base.iter().zip(k)) {
        for p in 0..o.len() {
            o[p] = b[p] + h * kk[p];
        }
    }
}

/// One RK4 step of (positions, velocities, phase).
pub fn step(
    state: &FlowState,
    init: &InitialData,
    grid: &Grid,
    mask: Option<&NodeMask>,
    dt: f64,
    form: ForceForm,
) -> Result<(FlowState, f64, usize)> {
    let dim = grid.dim();
    let n = grid.len();
    let t = state.t;

    let k1 = eval_stage(&state.pos, &state.vel, t, init, grid, mask, form)?;

    let mut pos_b = vec![vec![0.0; n]; dim];
    let mut vel_b = vec![vec![0.0; n]; dim];
    axpy(&mut pos_b, &state.pos, &state.vel, 0.5 * dt);
    axpy(&mut vel_b, &state.vel, &k1.force.acc, 0.5 * dt);
    let k2 = eval_stage(&pos_b, &vel_b, t + 0.5 * dt, init, grid, mask, form)?;
    let k2_vel = vel_b.clone();

    axpy(&mut pos_b, &state.pos, &k2_vel, 0.5 * dt);
    axpy(&mut vel_b, &state.vel, &k2.force.acc, 0.5 * dt);
    let k3 = eval_stage(&pos_b, &vel_b, t + 0.5 * dt, init, grid, mask, form)?;
    let k3_vel = vel_b.clone();

    axpy(&mut pos_b, &state.pos, &k3_vel, dt);
    axpy(&mut vel_b, &state.vel, &k3.force.acc, dt);
    let k4 = eval_stage(&pos_b, &vel_b, t + dt, init, grid, mask, form)?;
    let k4_vel = vel_b;

    let sixth = dt / 6.0;
    let mut next = state.clone();
    next.t = t + dt;
    for k in 0..dim {
        for p in 0..n {
            let dq = state.vel[k][p] + 2.0 * k2_vel[k][p] + 2.0 * k3_vel[k][p] + k4_vel[k][p];
            let dv = k1.force.acc[k][p]
                + 2.0 * k2.force.acc[k][p]
                + 2.0 * k3.force.acc[k][p]
                + k4.force.acc[k][p];
            next.pos[k][p] = state.pos[k][p] + sixth * dq;
            next.vel[k][p] = state.vel[k][p] + sixth * dv;
        }
    }
    for p in 0..n {
        let ds = k1.phase_rate[p]
            + 2.0 * k2.phase_rate[p]
            + 2.0 * k3.phase_rate[p]
            + k4.phase_rate[p];
        next.phase[p] = state.phase[p] + sixth * ds;
        if !next.phase[p].is_finite() || !next.pos[0][p].is_finite() {
            return Err(Error::Numeric {
                what: "non-finite state after step".into(),
                node: p,
            });
        }
    }
    let min_det = k1
        .force
        .min_det
        .min(k2.force.min_det)
        .min(k3.force.min_det)
        .min(k4.force.min_det);
    let starved = k1.force.starved_nodes.max(k4.force.starved_nodes);
    Ok((next, min_det, starved))
}

/// Residual of the phase-gradient identity
/// m qdot_i dq_i/da_k - m v0_i (at t=0) - d(phase - phase0)/da_k,
/// evaluated over the well-resolved region. Valid for multivalued initial
/// phases as well, since only the accumulated part is differentiated.
pub fn velocity_identity_residual(
    flow: &FlowState,
    init: &InitialData,
    grid: &Grid,
    mask: Option<&NodeMask>,
) -> Result<f64> {
    let dim = grid.dim();
    let n = grid.len();
    let def = deformation(flow, grid, mask)?;
    let spec = DerivSpec::with_default_accuracy(1);
    // accumulated phase: subtract the initial samples when present
    let chi: Field = match &init.phase0 {
        Some(s0) => flow.phase.iter().zip(s0).map(|(s, s0)| s - s0).collect(),
        None => flow.phase.clone(),
    };
    // initial velocity covector (identity deformation at t = 0)
    let v0: Vec<Field> = match (&init.phase0, &init.vel0) {
        (Some(s0), _) => {
            let mut v = Vec::with_capacity(dim);
            for k in 0..dim {
                let d = derivative_with(grid, s0, k, spec, None)?;
                v.push(d.iter().map(|x| x / init.phys.mass).collect());
            }
            v
        }
        (None, Some(v0)) => v0.clone(),
        (None, None) => vec![vec![0.0; n]; dim],
    };
    let floor = DENSITY_FLOOR_REL * init.rho0.iter().cloned().fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for k in 0..dim {
        let dchi = derivative_with(grid, &chi, k, spec, mask)?;
        for p in 0..n {
            if init.rho0[p] < floor * 10.0 {
                continue;
            }
            if mask.map_or(false, |m| !m.is_valid(p)) {
                continue;
            }
            if grid.is_boundary(p) {
                continue;
            }
            let mut cov = 0.0;
            for i in 0..dim {
                cov += flow.vel[i][p] * def.grad[i * dim + k][p];
            }
            let res = init.phys.mass * (cov - v0[k][p]) - dchi[p];
            worst = worst.max(res.abs());
        }
    }
    Ok(worst)
}

/// Integrate the flow to `t_end`, storing snapshots at a uniform cadence.
pub fn run(init: &InitialData, grid: &Grid, config: &IntegrationConfig) -> Result<RunResult> {
    let dt_raw = config.validate(grid)?;
    let dt_scaled = match config.step {
        StepRule::Cfl { .. } => dt_raw * init.phys.mass / init.phys.hbar,
        StepRule::Fixed { .. } => dt_raw,
    };
    let mask = mask_from_config(grid, config);
    let mask_ref = mask.as_ref();

    let state0 = initialize(init, grid)?;
    let leakage = boundary_leakage(grid, &init.rho0);

    let steps = if config.t_end == 0.0 {
        0
    } else {
        (config.t_end / dt_scaled).ceil() as usize
    };
    let dt = if steps > 0 { config.t_end / steps as f64 } else { 0.0 };
    let want = config.snapshots.max(2).min(steps + 1);
    let snap_steps: Vec<usize> = (0..want)
        .map(|k| ((k as f64) * steps as f64 / (want - 1).max(1) as f64).round() as usize)
        .collect();

    let mut diagnostics = RunDiagnostics {
        steps,
        dt,
        min_volume_ratio: f64::MAX,
        starved_nodes_max: 0,
        masked_nodes: mask_ref.map_or(0, |m| m.masked_count()),
        boundary_leakage: if leakage.interior_max > 0.0 {
            leakage.boundary_max / leakage.interior_max
        } else {
            0.0
        },
        velocity_identity_max: 0.0,
    };

    let mut snapshots = Vec::with_capacity(want);
    let mut state = state0;
    let mut next_snap = 0usize;
    for s in 0..=steps {
        if next_snap < snap_steps.len() && snap_steps[next_snap] == s {
            let res = velocity_identity_residual(&state, init, grid, mask_ref)?;
            diagnostics.velocity_identity_max = diagnostics.velocity_identity_max.max(res);
            snapshots.push(state.clone());
            next_snap += 1;
        }
        if s == steps {
            break;
        }
        let (next, min_det, starved) = step(&state, init, grid, mask_ref, dt, config.force_form)?;
        diagnostics.min_volume_ratio = diagnostics.min_volume_ratio.min(min_det);
        diagnostics.starved_nodes_max = diagnostics.starved_nodes_max.max(starved);
        state = next;
    }
    if diagnostics.min_volume_ratio == f64::MAX {
        diagnostics.min_volume_ratio = 1.0;
    }
    Ok(RunResult {
        snapshots,
        diagnostics,
    })
}

/// Convenience: gaussian reference density centred at `center`.
pub fn gaussian_density(grid: &Grid, sigma: f64, center: &[f64]) -> Field {
    let dim = grid.dim();
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma).powi(dim as i32);
    (0..grid.len())
        .map(|i| {
            let a = grid.node(i);
            let mut r2 = 0.0;
            for k in 0..dim {
                let d = a[k] - center.get(k).copied().unwrap_or(0.0);
                r2 += d * d;
            }
            norm * (-r2 / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn free_gaussian_init(grid: &Grid, sigma: f64) -> InitialData {
        InitialData {
            rho0: gaussian_density(grid, sigma, &[0.0]),
            phase0: Some(vec![0.0; grid.len()]),
            vel0: None,
            potential: PotentialSpec::Free,
            phys: PhysParams::default(),
        }
    }

    #[test]
    fn initialize_positions_and_velocity() {
        let g = Grid::line(-10.0, 10.0, 128).unwrap();
        let mut init = free_gaussian_init(&g, 1.0);
        // linear phase: uniform velocity p/m
        let p = 0.7;
        init.phase0 = Some((0..g.len()).map(|i| p * g.coord(0, i)).collect());
        let s = initialize(&init, &g).unwrap();
        for i in 0..g.len() {
            assert_relative_eq!(s.pos[0][i], g.coord(0, i));
            assert_relative_eq!(s.vel[0][i], p, epsilon = 1e-9);
        }
    }

    #[test]
    fn initialize_rejects_unnormalized() {
        let g = Grid::line(-10.0, 10.0, 128).unwrap();
        let mut init = free_gaussian_init(&g, 1.0);
        init.rho0.iter_mut().for_each(|v| *v *= 1.5);
        assert!(matches!(initialize(&init, &g), Err(Error::Config(_))));
    }

    #[test]
    fn zero_duration_run() {
        let g = Grid::line(-10.0, 10.0, 64).unwrap();
        let init = free_gaussian_init(&g, 1.0);
        let config = IntegrationConfig {
            step: StepRule::Cfl { c: 0.2 },
            t_end: 0.0,
            snapshots: 5,
            force_form: ForceForm::Weber,
            core_mask: None,
        };
        let r = run(&init, &g, &config).unwrap();
        assert_eq!(r.snapshots.len(), 1);
        assert_eq!(r.snapshots[0].t, 0.0);
    }

    #[test]
    fn free_gaussian_spreads_on_schedule() {
        let g = Grid::line(-12.0, 12.0, 256).unwrap();
        let init = free_gaussian_init(&g, 1.0);
        let config = IntegrationConfig {
            step: StepRule::Cfl { c: 0.2 },
            t_end: 2.0,
            snapshots: 3,
            force_form: ForceForm::Weber,
            core_mask: None,
        };
        let r = run(&init, &g, &config).unwrap();
        let last = r.snapshots.last().unwrap();
        let s = (1.0 + (last.t / 2.0).powi(2)).sqrt();
        for p in 0..g.len() {
            let a = g.coord(0, p);
            if a.abs() > 4.0 || a.abs() < 0.2 {
                continue;
            }
            let rel = (last.pos[0][p] - a * s).abs() / (a.abs() * s);
            assert!(rel <= 1e-3, "a={a}: rel err {rel}");
        }
        assert!(r.diagnostics.velocity_identity_max <= 1e-5);
    }

    #[test]
    fn harmonic_ground_state_is_stationary() {
        let omega = 1.0;
        let phys = PhysParams::default();
        let sigma = (phys.hbar / (2.0 * phys.mass * omega)).sqrt();
        let g = Grid::line(-10.0, 10.0, 256).unwrap();
        let init = InitialData {
            rho0: gaussian_density(&g, sigma, &[0.0]),
            phase0: Some(vec![0.0; g.len()]),
            vel0: None,
            potential: PotentialSpec::Harmonic { omega },
            phys,
        };
        let config = IntegrationConfig {
            step: StepRule::Cfl { c: 0.2 },
            t_end: 1.0,
            snapshots: 3,
            force_form: ForceForm::Weber,
            core_mask: None,
        };
        let r = run(&init, &g, &config).unwrap();
        let last = r.snapshots.last().unwrap();
        let mut drift = 0.0f64;
        for p in 0..g.len() {
            drift = drift.max((last.pos[0][p] - g.coord(0, p)).abs());
        }
        assert!(drift <= 1e-6 * 20.0, "drift {drift}");
        // phase advances at -E0 uniformly
        let e0 = 0.5 * phys.hbar * omega;
        for p in 0..g.len() {
            if g.coord(0, p).abs() < 5.0 {
                assert!((last.phase[p] + e0 * last.t).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn coherent_state_translates_rigidly() {
        let omega = 1.0;
        let x0 = 1.0;
        let phys = PhysParams::default();
        let sigma = (phys.hbar / (2.0 * phys.mass * omega)).sqrt();
        let g = Grid::line(-10.0, 10.0, 401).unwrap();
        let init = InitialData {
            rho0: gaussian_density(&g, sigma, &[x0]),
            phase0: Some(vec![0.0; g.len()]),
            vel0: None,
            potential: PotentialSpec::Harmonic { omega },
            phys,
        };
        let config = IntegrationConfig {
            step: StepRule::Cfl { c: 0.2 },
            t_end: std::f64::consts::PI, // half a period
            snapshots: 5,
            force_form: ForceForm::Weber,
            core_mask: None,
        };
        let r = run(&init, &g, &config).unwrap();
        for snap in &r.snapshots {
            let shift = x0 * ((omega * snap.t).cos() - 1.0);
            for p in 0..g.len() {
                let a = g.coord(0, p);
                if (a - x0).abs() > 3.0 {
                    continue;
                }
                let err = (snap.pos[0][p] - (a + shift)).abs();
                assert!(err <= 1e-4, "t={} a={a}: err {err}", snap.t);
            }
        }
    }

    #[test]
    fn rk4_fourth_order_in_time() {
        let g = Grid::line(-12.0, 12.0, 128).unwrap();
        let init = free_gaussian_init(&g, 1.0);
        let final_pos = |dt: f64| -> Field {
            let config = IntegrationConfig {
                step: StepRule::Fixed { dt },
                t_end: 0.4,
                snapshots: 2,
                force_form: ForceForm::Weber,
                core_mask: None,
            };
            run(&init, &g, &config).unwrap().snapshots.last().unwrap().pos[0].clone()
        };
        let a = final_pos(0.02);
        let b = final_pos(0.01);
        let c = final_pos(0.005);
        let norm = |u: &Field, v: &Field| -> f64 {
            u.iter().zip(v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let e1 = norm(&a, &b);
        let e2 = norm(&b, &c);
        assert!(e1 / e2 >= 10.0, "refinement ratio {} (expect ~16)", e1 / e2);
    }

    #[test]
    fn time_reversal_returns_home() {
        let g = Grid::line(-12.0, 12.0, 128).unwrap();
        let init = free_gaussian_init(&g, 1.0);
        let config = IntegrationConfig {
            step: StepRule::Cfl { c: 0.2 },
            t_end: 0.5,
            snapshots: 2,
            force_form: ForceForm::Weber,
            core_mask: None,
        };
        let r = run(&init, &g, &config).unwrap();
        let mut turned = r.snapshots.last().unwrap().clone();
        for v in turned.vel[0].iter_mut() {
            *v = -*v;
        }
        turned.t = 0.0;
        // drive the reversed state through the same stepper
        let dt = r.diagnostics.dt;
        let mut state = turned;
        for _ in 0..r.diagnostics.steps {
            let (next, _, _) = step(&state, &init, &g, None, dt, ForceForm::Weber).unwrap();
            state = next;
        }
        let mut worst = 0.0f64;
        for p in 0..g.len() {
            worst = worst.max((state.pos[0][p] - g.coord(0, p)).abs());
        }
        assert!(worst <= 1e-6, "return error {worst}");
    }
}

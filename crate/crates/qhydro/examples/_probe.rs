fn main() {
    use qhydro::lattice::*;
    use qhydro::integrator::*;
    use qhydro::forces::*;
    use qhydro::potential::PotentialSpec;
    use qhydro::PhysParams;
    let g = Grid::line(-12.0, 12.0, 256).unwrap();
    let init = InitialData {
        rho0: gaussian_density(&g, 1.0, &[0.0]),
        phase0: Some(vec![0.0; g.len()]),
        vel0: None,
        potential: PotentialSpec::Free,
        phys: PhysParams::default(),
    };
    let mut state = initialize(&init, &g).unwrap();
    // initial acceleration profile
    let f = acceleration(&state, &init.rho0, &init.potential, &g, None, &init.phys, ForceForm::Weber).unwrap();
    for p in (200..256).step_by(4) {
        println!("a={:7.3} rho0={:9.2e} acc={:12.5e}", g.coord(0,p), init.rho0[p], f.acc[0][p]);
    }
    println!("--- stepping");
    let dt = 0.2 * g.spacing()[0] * g.spacing()[0];
    for s in 0..400 {
        match step(&state, &init, &g, None, dt, ForceForm::Weber) {
            Ok((next, mind, _)) => {
                state = next;
                if s % 50 == 0 {
                    let amax = state.pos[0].iter().zip(0..).filter(|&(_, i)| i > 230)
                        .map(|(q, i)| (i, *q)).collect::<Vec<_>>();
                    println!("t={:.3} min_det={:.3e} tailpos={:?}", state.t, mind, &amax[20..25]);
                }
            }
            Err(e) => { println!("t={:.3} step {s}: {e}", state.t); break; }
        }
    }
}

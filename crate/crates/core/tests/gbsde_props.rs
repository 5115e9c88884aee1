use gexp_core::control::ControlProcess;
use gexp_core::gbsde::{
    equivalence_check, solve_ppde, solve_ppde_picard, surface_gap, GBSDEProblem,
};
use gexp_core::mc::{simulate_with, IncrementLaw, SimulationSpec};
use gexp_core::tolerance::grid_budget;
use gexp_core::{
    ConditionalExpectation, CylinderFunctional, GParams, PdeConfig, SpaceGrid, TimeGrid,
};
use proptest::prelude::*;

fn band() -> GParams {
    GParams::from_variances(1.0, 4.0).unwrap()
}

fn grids(band: &GParams) -> (TimeGrid, SpaceGrid) {
    let space = SpaceGrid::centered(0.0, 8.0, 81).unwrap();
    (TimeGrid::cfl_maximal(1.0, &space, band).unwrap(), space)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn larger_data_give_larger_solutions(
        shift in 0.0f64..1.0,
        lift in 0.0f64..1.0,
        a in -0.5f64..0.5,
        b in -0.5f64..0.5,
    ) {
        let band = band();
        let (time, space) = grids(&band);
        let low = GBSDEProblem::new(band, 1.0, |x: f64| x.sin(), move |_, y, z: f64| a * y + b * z.tanh(), 1.0).unwrap();
        let high = GBSDEProblem::new(
            band,
            1.0,
            move |x: f64| x.sin() + shift,
            move |_, y, z: f64| a * y + b * z.tanh() + lift,
            1.0,
        )
        .unwrap();
        let (y1, y2) = (solve_ppde(&high, &time, &space).unwrap(), solve_ppde(&low, &time, &space).unwrap());
        let (v1, v2) = (y1.y_surface().values(), y2.y_surface().values());
        prop_assert!(v1.iter().zip(v2).all(|(u, v)| u >= v));
    }
}

#[test]
fn linear_driver_without_uncertainty_is_discounted_heat() {
    let band = GParams::new(1.0, 1.0).unwrap();
    let (time, space) = grids(&band);
    let r: f64 = -0.4;
    let p = GBSDEProblem::new(band, 1.0, |x: f64| x.cos(), move |_, y, _| r * y, r.abs()).unwrap();
    let s = solve_ppde(&p, &time, &space).unwrap();
    let budget = grid_budget(time.dt(), space.dx());
    for x in [-1.0, 0.0, 0.7] {
        let exact = f64::exp(r - 0.5) * f64::cos(x);
        let got = s.y_at(0.0, x).unwrap();
        assert!((got - exact).abs() <= budget, "x = {x}: {got} vs {exact}");
    }
}

#[test]
fn pde_and_conditional_expectation_agree_without_driver() {
    let band = band();
    let (time, space) = grids(&band);
    let phi = |x: f64| 2.0 * x.cos() + x.sin();
    let s = solve_ppde(
        &GBSDEProblem::martingale(band, 1.0, phi).unwrap(),
        &time,
        &space,
    )
    .unwrap();
    let xi = CylinderFunctional::terminal(1.0, phi, 3.0, 3.0).unwrap();
    let ce = ConditionalExpectation::solve(&xi, &band, &PdeConfig::new(space)).unwrap();
    let budget = grid_budget(time.dt(), space.dx());
    for t in [0.0, 0.3, 0.8] {
        for x in [-1.5, 0.0, 0.4, 2.0] {
            let d = ce.derivatives(t, &[x]).unwrap();
            assert!((s.y_at(t, x).unwrap() - ce.value(t, &[x]).unwrap()).abs() <= budget);
            assert!(
                (s.z_at(t, x).unwrap() - d.du_dx).abs() <= budget,
                "t = {t}, x = {x}"
            );
        }
    }
}

#[test]
fn nonlinear_driver_solves_the_path_equation() {
    let band = band();
    let space = SpaceGrid::centered(0.0, 12.0, 241).unwrap();
    let time = TimeGrid::cfl_maximal(1.0, &space, &band).unwrap();
    let p = GBSDEProblem::new(
        band,
        1.0,
        |x: f64| x.cos(),
        |_, y: f64, z: f64| -0.3 * y + 0.2 * z.abs(),
        0.3,
    )
    .unwrap();
    let s = solve_ppde(&p, &time, &space).unwrap();
    let spec =
        SimulationSpec::new(TimeGrid::new(1.0, 64).unwrap(), 200, 4).with_law(IncrementLaw::Binary);
    let bundle = simulate_with(&ControlProcess::bang_bang_on_level(band), &spec).unwrap();
    let e = equivalence_check(&s, &bundle, None).unwrap();
    assert!(e.pass(), "{e:?}");
}

#[test]
fn picard_iteration_converges_to_the_direct_scheme() {
    let band = band();
    let (time, space) = grids(&band);
    let p = GBSDEProblem::new(
        band,
        1.0,
        |x: f64| x.sin(),
        |_, y: f64, z: f64| 0.5 * y.sin() - 0.3 * z,
        0.5,
    )
    .unwrap();
    let direct = solve_ppde(&p, &time, &space).unwrap();
    let run = solve_ppde_picard(&p, &time, &space, 30, 1e-12).unwrap();
    assert!(run.increments.windows(2).all(|w| w[1] <= w[0]));
    assert!(*run.increments.last().unwrap() <= 1e-12);
    assert!(surface_gap(&direct, &run.solution).unwrap() < 1e-9);
}

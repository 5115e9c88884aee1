use gexp_core::tolerance::grid_budget;
use gexp_core::{solve_gheat, solve_gheat_fn, GParams, SpaceGrid, TimeGrid};
use proptest::prelude::*;

const HORIZON: f64 = 0.5;

fn band() -> GParams {
    GParams::from_variances(1.0, 4.0).unwrap()
}

fn setup(band: &GParams) -> (TimeGrid, SpaceGrid) {
    let space = SpaceGrid::new(-8.0, 8.0, 81).unwrap();
    (TimeGrid::cfl_maximal(HORIZON, &space, band).unwrap(), space)
}

fn payoff(space: &SpaceGrid, c: [f64; 3]) -> Vec<f64> {
    space
        .points()
        .into_iter()
        .map(|x| c[0] + c[1] * (c[2] * x).sin() + (x - c[0]).abs().min(3.0))
        .collect()
}

fn initial_row(phi: &[f64]) -> Vec<f64> {
    let band = band();
    let (time, space) = setup(&band);
    solve_gheat(phi, &band, &time, &space)
        .unwrap()
        .row(0)
        .to_vec()
}

fn coeffs() -> impl Strategy<Value = [f64; 3]> {
    (-2.0f64..2.0, -2.0f64..2.0, 0.1f64..2.0).prop_map(|(a, b, c)| [a, b, c])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn monotone_in_the_payoff(c in coeffs(), bump in prop::collection::vec(0.0f64..1.0, 81)) {
        let (_, space) = setup(&band());
        let phi = payoff(&space, c);
        let psi: Vec<f64> = phi.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let (u, v) = (initial_row(&phi), initial_row(&psi));
        prop_assert!(u.iter().zip(&v).all(|(a, b)| a <= b));
    }

    #[test]
    fn constants_translate(c in coeffs(), k in -5.0f64..5.0) {
        let (_, space) = setup(&band());
        let phi = payoff(&space, c);
        let shifted: Vec<f64> = phi.iter().map(|v| v + k).collect();
        let (u, v) = (initial_row(&phi), initial_row(&shifted));
        prop_assert!(u.iter().zip(&v).all(|(a, b)| (a + k - b).abs() < 1e-12));
    }

    #[test]
    fn sublinear_and_positively_homogeneous(c in coeffs(), d in coeffs(), l in 0.0f64..5.0) {
        let (_, space) = setup(&band());
        let (phi, psi) = (payoff(&space, c), payoff(&space, d));
        let sum: Vec<f64> = phi.iter().zip(&psi).map(|(a, b)| a + b).collect();
        let scaled: Vec<f64> = phi.iter().map(|v| l * v).collect();
        let (u, v, w, s) = (initial_row(&phi), initial_row(&psi), initial_row(&sum), initial_row(&scaled));
        for i in 0..u.len() {
            prop_assert!(w[i] <= u[i] + v[i] + 1e-12);
            prop_assert!((s[i] - l * u[i]).abs() <= 1e-12 * (1.0 + s[i].abs()));
        }
    }
}

#[test]
fn degenerate_band_matches_the_heat_kernel() {
    let band = GParams::new(1.0, 1.0).unwrap();
    let (time, space) = setup(&band);
    let budget = grid_budget(time.dt(), space.dx());
    let u = solve_gheat_fn(|x| x.cos(), &band, &time, &space).unwrap();
    for x in [-1.0, 0.0, 0.5, 2.0] {
        let exact = (-0.5 * HORIZON).exp() * f64::cos(x);
        let got = u.value_at(0.0, x).unwrap();
        assert!((got - exact).abs() <= budget, "x = {x}: {got} vs {exact}");
    }
}

#[test]
fn convex_and_concave_payoffs_use_the_band_edges() {
    let band = band();
    let (time, space) = setup(&band);
    let up = solve_gheat_fn(|x| x.powi(4), &band, &time, &space).unwrap();
    let down = solve_gheat_fn(|x| -x.powi(4), &band, &time, &space).unwrap();
    let hi = 3.0 * band.var_hi().powi(2) * HORIZON * HORIZON;
    let lo = -3.0 * band.var_lo().powi(2) * HORIZON * HORIZON;
    let budget = grid_budget(time.dt(), space.dx());
    let (u, d) = (
        up.value_at(0.0, 0.0).unwrap(),
        down.value_at(0.0, 0.0).unwrap(),
    );
    assert!((u - hi).abs() <= budget, "{u} vs {hi}");
    assert!((d - lo).abs() <= budget, "{d} vs {lo}");
}

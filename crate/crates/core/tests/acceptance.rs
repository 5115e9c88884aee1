//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Reference configuration: σ̲² = 1, σ̄² = 4, T = 1, 401 points on [−6, 6],
//! CFL-maximal steps, 10⁵ paths for expectation estimates.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use gexp_core::control::{compensating_level, BoundedRule, ControlProcess, PerturbationSchedule};
use gexp_core::gbsde::{
    equivalence_check, gbsde_residual, shift_identity, solve_ppde, GBSDEProblem,
};
use gexp_core::ito::{
    bang_bang_for, block_identity_residual, decompose_on, empirical_order, identify_drift,
    martingale_test, qn_identity_gap, reconstruction_study, step2_limit_check, PathProcess,
    StepProcess,
};
use gexp_core::mc::{
    check_qv_bounds, marginal_match_test, perturb_control, simulate_with, sup_over_controls,
    BlockFunctional, IncrementLaw, SimulationSpec,
};
use gexp_core::tolerance::{grid_budget, relative_error, MC_SIGMAS};
use gexp_core::{
    feedback_field, g_expectation, solve_gheat_fn, ConditionalExpectation, CylinderFunctional,
    GParams, PdeConfig, Result, SpaceGrid, TimeGrid,
};

const N_PATHS: usize = 100_000;
/// Paths for criteria whose check is pathwise (a maximum over paths) rather than an expectation.
const PATHWISE_PATHS: usize = 2_000;
const SEED: u64 = 20_240_601;

fn band() -> GParams {
    GParams::from_variances(1.0, 4.0).unwrap()
}

fn reference_space() -> SpaceGrid {
    SpaceGrid::new(-6.0, 6.0, 401).unwrap()
}

/// Wider domain for criteria that follow paths, which leave `[−6, 6]` under `σ̄ = 2`.
fn path_space() -> SpaceGrid {
    SpaceGrid::new(-12.0, 12.0, 801).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn variance_bounds() -> Result<Outcome> {
    let band = band();
    let config = PdeConfig::new(reference_space());
    let sq = CylinderFunctional::terminal(1.0, |x| x * x, f64::INFINITY, f64::INFINITY)?;
    let upper = g_expectation(&sq, &band, &config)?;
    let lower = -g_expectation(&sq.scale(-1.0)?, &band, &config)?;
    let (eu, el) = (relative_error(upper, 4.0), relative_error(lower, 1.0));
    Ok(Outcome {
        pass: eu <= 0.01 && el <= 0.01,
        detail: format!(
            "E[B1^2] = {upper:.5} (rel {eu:.1e}), -E[-B1^2] = {lower:.5} (rel {el:.1e}), tol 1%"
        ),
    })
}

fn sandwich() -> Result<Outcome> {
    let band = band();
    let space = reference_space();
    let butterfly = |x: f64| (1.0 - x.abs()).max(0.0);
    let pde_grid = TimeGrid::cfl_maximal(1.0, &space, &band)?;
    let surface = solve_gheat_fn(butterfly, &band, &pde_grid, &space)?;
    let pde = surface.value_at(0.0, 0.0)?;
    let feedback = ControlProcess::feedback(Arc::new(feedback_field(&surface)));
    let family = [
        ControlProcess::lower(band),
        ControlProcess::upper(band),
        feedback,
    ];
    let xi = CylinderFunctional::terminal(1.0, butterfly, 1.0, 1.0)?;
    let mc_grid = TimeGrid::new(1.0, 256)?;
    let sup = sup_over_controls(&xi, &family, &mc_grid, N_PATHS, SEED)?;
    let best = sup.best_estimate();
    let budget = grid_budget(pde_grid.dt().max(mc_grid.dt()), space.dx());
    let matched = (best.mean - pde).abs() <= MC_SIGMAS * best.stderr + budget;
    let lower_only = sup_over_controls(&xi, &family[..1], &mc_grid, N_PATHS, SEED)?.best_estimate();
    let short = pde - lower_only.mean;
    let falls_short = short > MC_SIGMAS * lower_only.stderr;
    Ok(Outcome {
        pass: matched && falls_short,
        detail: format!(
            "PDE {pde:.5}; sup {:.5} by {} (stderr {:.1e}, budget {budget:.3}); sigma_lo-only short by {short:.4} (3 stderr {:.1e})",
            best.mean,
            sup.best_label(),
            best.stderr,
            MC_SIGMAS * lower_only.stderr
        ),
    })
}

fn martingale_family(band: GParams) -> Vec<ControlProcess> {
    vec![
        ControlProcess::lower(band),
        ControlProcess::upper(band),
        ControlProcess::bang_bang_on_level(band),
    ]
}

const PAIRS: [(f64, f64); 3] = [(0.0, 0.5), (0.5, 1.0), (0.0, 1.0)];

fn k_martingale() -> Result<Outcome> {
    let band = band();
    let spec = SimulationSpec::new(TimeGrid::new(1.0, 64)?, N_PATHS, SEED);
    let k = PathProcess::k_of(StepProcess::constant(1.0, 1.0)?, band);
    let report = martingale_test(&k, &martingale_family(band), &PAIRS, &spec)?;
    let min_ok = report
        .rows
        .iter()
        .all(|r| relative_error(r.min, -3.0 * (r.t - r.s)) <= 0.05);
    let mins: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{:.4}", r.min))
        .collect();
    let sups: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{:.1e}", r.sup))
        .collect();
    Ok(Outcome {
        pass: report.consistent && min_ok,
        detail: format!(
            "sup [{}], min [{}] vs -3(t-s) within 5%",
            sups.join(", "),
            mins.join(", ")
        ),
    })
}

fn contrapositive() -> Result<Outcome> {
    let band = band();
    let spec = SimulationSpec::new(TimeGrid::new(1.0, 64)?, N_PATHS, SEED);
    let family = martingale_family(band);
    let drift = martingale_test(&PathProcess::drift(-1.0), &family, &PAIRS, &spec)?;
    let rejected = drift.rows.iter().all(|r| r.sup < -MC_SIGMAS * r.sup_stderr);
    let k = PathProcess::k_of(StepProcess::constant(1.0, 1.0)?, band);
    let accepted = martingale_test(&k, &family, &PAIRS, &spec)?;
    let sups: Vec<String> = drift.rows.iter().map(|r| format!("{:.3}", r.sup)).collect();
    Ok(Outcome {
        pass: rejected && !drift.consistent && accepted.consistent,
        detail: format!(
            "X=-t sup [{}] rejected on all pairs: {rejected}; K(1) consistent: {}",
            sups.join(", "),
            accepted.consistent
        ),
    })
}

fn lemma_perturbation() -> Result<Outcome> {
    let band = band();
    let (low, high) = (2f64.sqrt(), 3f64.sqrt());
    let second = BoundedRule::new(
        low,
        high,
        move |incr| if incr[0] > 0.0 { high } else { low },
    )?;
    let base = ControlProcess::self_dependent(band, vec![BoundedRule::constant(low), second])?;
    let schedules = [
        PerturbationSchedule::new(0, 0.25, ControlProcess::lower(band))?,
        PerturbationSchedule::new(1, 0.25, ControlProcess::upper(band))?,
        PerturbationSchedule::new(2, 0.25, ControlProcess::bang_bang_on_level(band))?,
    ];
    let functionals = [
        BlockFunctional::new("cos(d1+d2)", 2, |d| (d[0] + d[1]).cos())?,
        BlockFunctional::new("1{d1>0}cos(d2)", 2, |d| {
            if d[0] > 0.0 {
                d[1].cos()
            } else {
                0.0
            }
        })?,
        BlockFunctional::new("min(d2^2,4)", 2, |d| (d[1] * d[1]).min(4.0))?,
    ];
    let spec = SimulationSpec::new(TimeGrid::new(1.0, 64)?, N_PATHS, SEED);
    let mut passed = 0;
    for schedule in &schedules {
        let h_tilde = perturb_control(&base, schedule)?;
        for psi in &functionals {
            if marginal_match_test(&base, &h_tilde, psi, &spec)?.pass() {
                passed += 1;
            }
        }
    }
    let level = compensating_level(2.0, 0.25, 1.0)?;
    let level_ok = (level - 1.5275).abs() <= 1e-4 && band.contains(level);
    Ok(Outcome {
        pass: passed == 9 && level_ok,
        detail: format!("{passed}/9 matched within 3 combined stderr; compensating level {level:.6} in band: {level_ok}"),
    })
}

fn step2_quadrature() -> Result<Outcome> {
    let zeta = StepProcess::new(vec![0.0, 0.25, 0.5, 1.0], vec![1.0, -0.5, 2.0])?;
    let rows = step2_limit_check(&zeta, 0.25, &[1, 2, 3, 4, 5, 6, 7, 8, 12, 16])?;
    let aligned_zero = rows.iter().filter(|r| r.aligned).all(|r| r.gap == 0.0);
    let misaligned: Vec<String> = rows
        .iter()
        .filter(|r| !r.aligned)
        .map(|r| format!("k={}:{:.3}", r.k, r.gap))
        .collect();
    let mut block: f64 = 0.0;
    for k in [1, 2, 4, 8, 16] {
        block = block.max(block_identity_residual(k, 0.25)?);
    }
    Ok(Outcome {
        pass: aligned_zero && block <= 4.0 * f64::EPSILON,
        detail: format!(
            "aligned gaps exactly 0: {aligned_zero}; misaligned [{}]; per-block identity {block:.1e}",
            misaligned.join(", ")
        ),
    })
}

fn drift_identification() -> Result<Outcome> {
    let band = band();
    let spec = SimulationSpec::new(TimeGrid::new(1.0, 64)?, N_PATHS, SEED);
    let cases = [
        (StepProcess::constant(1.0, 1.0)?, vec![4.0]),
        (StepProcess::constant(1.0, -1.0)?, vec![-1.0]),
        (
            StepProcess::new(vec![0.0, 0.5, 1.0], vec![1.0, -1.0])?,
            vec![4.0, -1.0],
        ),
    ];
    let mut pass = true;
    let mut found = Vec::new();
    for (eta, expected) in &cases {
        let family = [
            ControlProcess::lower(band),
            ControlProcess::upper(band),
            bang_bang_for(eta, band),
        ];
        let rows = identify_drift(eta, &band, &family, &spec, 1e-8)?;
        for (r, e) in rows.iter().zip(expected) {
            pass &= relative_error(r.drift, *e) <= 0.02;
            found.push(format!("{:.4}", r.drift));
        }
    }
    Ok(Outcome {
        pass,
        detail: format!("c = [{}] vs [4, -1, 4, -1], tol 2%", found.join(", ")),
    })
}

fn reconstruction() -> Result<Outcome> {
    let band = band();
    let space = path_space();
    let xi = CylinderFunctional::terminal(1.0, |x| x * x, f64::INFINITY, f64::INFINITY)?;
    let config = PdeConfig::new(space);
    let ce = ConditionalExpectation::solve(&xi, &band, &config)?;
    let control = ControlProcess::bang_bang_on_level(band);
    let steps = [64, 256, 1024];
    let rows = reconstruction_study(&ce, &control, &steps, PATHWISE_PATHS, SEED)?;
    let dts: Vec<f64> = rows.iter().map(|r| r.dt).collect();
    let maxes: Vec<f64> = rows.iter().map(|r| r.max_residual).collect();
    let order = empirical_order(&dts, &maxes);
    let decreasing = maxes.windows(2).all(|w| w[1] < w[0]);

    let grid = TimeGrid::new(1.0, 256)?;
    let bundle = simulate_with(&control, &SimulationSpec::new(grid, PATHWISE_PATHS, SEED))?;
    let d = decompose_on(&ce, &bundle)?;
    let pde_dt = config.step(&band)?;
    let budget = grid_budget(pde_dt.max(grid.dt()), space.dx());
    let (mut z_gap, mut k_gap): (f64, f64) = (0.0, 0.0);
    for p in 0..bundle.n_paths() {
        let path = bundle.path(p);
        for s in 0..grid.n_steps() {
            z_gap = z_gap.max((d.z_path(p)[s] - 2.0 * path.b[s]).abs());
            k_gap = k_gap.max((d.k_path(p)[s] - (path.qv[s] - 4.0 * grid.time(s))).abs());
        }
    }
    let m: Vec<String> = maxes.iter().map(|v| format!("{v:.4}")).collect();
    Ok(Outcome {
        pass: decreasing && order >= 0.4 && z_gap <= budget && k_gap <= budget,
        detail: format!(
            "max residuals [{}] at n = 64/256/1024, order {order:.3}; |Z-2B| {z_gap:.1e}, |K-(<B>-4t)| {k_gap:.1e}, budget {budget:.3}",
            m.join(", ")
        ),
    })
}

fn qn_identity() -> Result<Outcome> {
    let band = band();
    let grid = TimeGrid::new(1.0, 64)?;
    let mut realized: f64 = 0.0;
    let mut exact_qv: f64 = 0.0;
    let mut bounds = true;
    let controls = [
        ControlProcess::lower(band),
        ControlProcess::upper(band),
        ControlProcess::bang_bang_on_level(band),
    ];
    for (i, c) in controls.iter().enumerate() {
        for law in [IncrementLaw::Gaussian, IncrementLaw::Binary] {
            let spec = SimulationSpec::new(grid, PATHWISE_PATHS * 5, SEED + i as u64).with_law(law);
            let bundle = simulate_with(c, &spec)?;
            bounds &= check_qv_bounds(&bundle, &band).holds();
            for path in bundle.paths() {
                let scale = path
                    .b
                    .iter()
                    .map(|b| b * b)
                    .fold(path.qv[grid.n_steps()], f64::max)
                    .max(1.0);
                for level in 0..=6 {
                    let gap = qn_identity_gap(&path, level)?;
                    realized = realized.max(gap.vs_realized / scale);
                    if law == IncrementLaw::Binary {
                        exact_qv = exact_qv.max(gap.vs_qv / scale);
                    }
                }
            }
        }
    }
    let tol = 64.0 * f64::EPSILON;
    Ok(Outcome {
        pass: realized <= tol && exact_qv <= tol && bounds,
        detail: format!(
            "Q^n - int lambda^n dB (n = 0..6) vs sum dB^2: {realized:.1e}, vs <B> (binary increments): {exact_qv:.1e}, tol {tol:.1e}; Eq.(1) bounds exact: {bounds}"
        ),
    })
}

fn gbsde() -> Result<Outcome> {
    let band = band();
    let space = reference_space();
    let time = TimeGrid::cfl_maximal(1.0, &space, &band)?;
    let budget = grid_budget(time.dt(), space.dx());
    let base = GBSDEProblem::martingale(band, 1.0, |x: f64| (1.0 - x.abs()).max(0.0))?;
    let shift = shift_identity(&base, 0.5, &time, &space)?;

    let flat = GParams::new(1.0, 1.0)?;
    let flat_time = TimeGrid::cfl_maximal(1.0, &space, &flat)?;
    let linear = GBSDEProblem::new(flat, 1.0, |_| 1.0, |_, y, _| -0.1 * y, 0.1)?;
    let y0 = solve_ppde(&linear, &flat_time, &space)?.y_at(0.0, 0.0)?;
    let y0_err = (y0 - (-0.1f64).exp()).abs();

    let wide = path_space();
    let wide_time = TimeGrid::cfl_maximal(1.0, &wide, &band)?;
    let spec = SimulationSpec::new(TimeGrid::new(1.0, 256)?, PATHWISE_PATHS, SEED)
        .with_law(IncrementLaw::Binary);
    let bundle = simulate_with(&ControlProcess::bang_bang_on_level(band), &spec)?;
    let problems = [
        GBSDEProblem::martingale(band, 1.0, |x| x * x)?,
        GBSDEProblem::new(band, 1.0, |x: f64| x.cos(), |_, _, _| 0.5, 0.0)?,
    ];
    let (mut residual, mut residual_tol, mut k_ok, mut ppde, mut ito, mut eq_tol, mut eq_ok) =
        (0.0f64, 0.0f64, true, 0.0f64, 0.0f64, 0.0f64, true);
    for p in &problems {
        let s = solve_ppde(p, &wide_time, &wide)?;
        let r = gbsde_residual(&s, &bundle)?;
        residual = residual.max(r.max_residual);
        residual_tol = r.tolerance;
        k_ok &= r.pass && r.max_abs_k0 == 0.0 && r.k_monotone;
        let e = equivalence_check(&s, &bundle, None)?;
        ppde = ppde.max(e.ppde_residual);
        ito = ito.max(e.ito_residual);
        eq_tol = e.tolerance;
        eq_ok &= e.pass();
    }
    Ok(Outcome {
        pass: shift.max_gap <= budget && y0_err <= 1e-3 && k_ok && eq_ok,
        detail: format!(
            "shift gap {:.1e} (budget {budget:.3}); Y0 {y0:.6} vs e^-0.1 (err {y0_err:.1e}); equA residual {residual:.1e} (tol {residual_tol:.3}), K0 = 0 and monotone: {k_ok}; PPDE residual {ppde:.1e}, Ito residual {ito:.1e} (tol {eq_tol:.3})",
            shift.max_gap
        ),
    })
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Outcome>); 10] = [
        ("variance bounds", variance_bounds),
        ("PDE/MC sandwich", sandwich),
        ("K(varsigma) G-martingale", k_martingale),
        ("martingale test contrapositive", contrapositive),
        ("m-perturbation marginals", lemma_perturbation),
        ("Step-2 quadrature", step2_quadrature),
        ("drift identification", drift_identification),
        ("decomposition reconstruction", reconstruction),
        ("Qn identity and QV bounds", qn_identity),
        ("G-BSDE", gbsde),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "{} {:>2} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Built-in experiments. Each writes one table and returns its summary checks.

use std::path::Path;
use std::sync::Arc;

use gexp_core::control::{BoundedRule, ControlProcess, PerturbationSchedule};
use gexp_core::gbsde::{
    equivalence_check, gbsde_residual, solve_ppde, GBSDEProblem, K_MONOTONE_SLACK,
};
use gexp_core::ito::{
    bang_bang_for, decompose_on, identify_drift, martingale_test, verify_theorem35,
    MartingaleReport, PathProcess, StepProcess, Theorem35Config, ROUNDING_FLOOR,
};
use gexp_core::mc::{
    marginal_match_test, perturb_control, simulate_with, sup_over_controls, BlockFunctional,
    IncrementLaw, SimulationSpec,
};
use gexp_core::tolerance::{grid_budget, relative_error, MC_SIGMAS};
use gexp_core::{
    feedback_field, g_expectation, solve_gheat_fn, ConditionalExpectation, CylinderFunctional,
    PdeConfig, Result, ValueSurface,
};
use serde::Serialize;

use crate::config::{DriverConfig, Experiment, Payoff, Setup, StepConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Info,
}

impl Status {
    fn of(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub check: String,
    pub value: f64,
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
    pub status: Status,
}

impl Check {
    fn info(
        check: impl Into<String>,
        value: f64,
        tolerance: Option<f64>,
        seed: Option<u64>,
    ) -> Self {
        Self {
            check: check.into(),
            value,
            tolerance,
            seed,
            status: Status::Info,
        }
    }

    fn test(
        check: impl Into<String>,
        value: f64,
        tolerance: f64,
        seed: Option<u64>,
        pass: bool,
    ) -> Self {
        Self {
            check: check.into(),
            value,
            tolerance: Some(tolerance),
            seed,
            status: Status::of(pass),
        }
    }
}

const DEFAULT_ROWS: usize = 11;

pub fn run(experiment: &Experiment, setup: &Setup, table: &Path) -> Result<Vec<Check>> {
    let (n_paths, seed) = setup.mc_for(experiment);
    let spec = SimulationSpec::new(setup.sim_grid, n_paths, seed);
    let mut w = csv::Writer::from_path(table)?;
    let checks = match experiment {
        Experiment::SolveGheat { payoff, rows } => solve_gheat(
            &mut w,
            setup,
            payoff.unwrap_or(BUTTERFLY),
            rows.unwrap_or(DEFAULT_ROWS),
        ),
        Experiment::Gexp { payoff, times } => gexp(
            &mut w,
            setup,
            payoff.unwrap_or(Payoff::Square),
            times.clone().unwrap_or_else(|| vec![setup.horizon]),
        ),
        Experiment::Decompose { payoff, .. } => {
            decompose(&mut w, setup, payoff.unwrap_or(Payoff::Square), &spec)
        }
        Experiment::VerifyMartingale {
            varsigma,
            drift,
            pairs,
            ..
        } => verify_martingale(
            &mut w,
            setup,
            varsigma.as_ref(),
            drift.unwrap_or(-1.0),
            pairs.clone(),
            &spec,
        ),
        Experiment::VerifyLemma32 {
            alpha, refinements, ..
        } => verify_lemma32(
            &mut w,
            setup,
            alpha.unwrap_or(0.25),
            refinements.clone().unwrap_or_else(|| vec![0, 1, 2]),
            &spec,
        ),
        Experiment::VerifyTheorem35 { .. } => verify_theorem(&mut w, setup, n_paths, seed),
        Experiment::IdentifyDrift { eta, rel_tol, .. } => {
            identify(&mut w, setup, eta.as_ref(), rel_tol.unwrap_or(0.02), &spec)
        }
        Experiment::Gbsde {
            payoff,
            driver,
            rows,
            ..
        } => gbsde(
            &mut w,
            setup,
            payoff.unwrap_or(Payoff::Cos),
            driver.unwrap_or(DriverConfig {
                a: -0.1,
                b: 0.0,
                c: 0.0,
            }),
            rows.unwrap_or(DEFAULT_ROWS),
            &spec,
        ),
        Experiment::PriceUvm { payoff, .. } => {
            price_uvm(&mut w, setup, payoff.unwrap_or(BUTTERFLY), &spec)
        }
    }?;
    w.flush()?;
    Ok(checks)
}

type Table = csv::Writer<std::fs::File>;

const BUTTERFLY: Payoff = Payoff::Butterfly {
    center: 0.0,
    width: 1.0,
};

fn pde_budget(setup: &Setup) -> f64 {
    grid_budget(setup.pde_grid.dt(), setup.space.dx())
}

fn coupled_budget(setup: &Setup) -> f64 {
    grid_budget(
        setup.pde_grid.dt().max(setup.sim_grid.dt()),
        setup.space.dx(),
    )
}

fn row_times(setup: &Setup, rows: usize) -> Vec<f64> {
    (0..rows)
        .map(|r| setup.horizon * r as f64 / (rows - 1) as f64)
        .collect()
}

fn solve(setup: &Setup, payoff: &Payoff, sign: f64) -> Result<ValueSurface> {
    let f = payoff.function();
    solve_gheat_fn(
        move |x| sign * f(x),
        &setup.band,
        &setup.pde_grid,
        &setup.space,
    )
}

fn solve_gheat(w: &mut Table, setup: &Setup, payoff: Payoff, rows: usize) -> Result<Vec<Check>> {
    let surface = solve(setup, &payoff, 1.0)?;
    w.write_record(["t", "x", "u"])?;
    for t in row_times(setup, rows) {
        for x in setup.space.points() {
            w.serialize((t, x, surface.value_at(t, x)?))?;
        }
    }
    Ok(vec![Check::info(
        "u(0,0)",
        surface.value_at(0.0, 0.0)?,
        Some(pde_budget(setup)),
        None,
    )])
}

fn pde_config(setup: &Setup) -> PdeConfig {
    PdeConfig::new(setup.space).with_dt(setup.pde_grid.dt())
}

fn gexp(w: &mut Table, setup: &Setup, payoff: Payoff, times: Vec<f64>) -> Result<Vec<Check>> {
    let xi = payoff.functional(times)?;
    let config = pde_config(setup);
    let upper = g_expectation(&xi, &setup.band, &config)?;
    let lower = -g_expectation(&xi.scale(-1.0)?, &setup.band, &config)?;
    let budget = grid_budget(config.step(&setup.band)?, setup.space.dx());
    w.write_record(["quantity", "value", "tolerance"])?;
    w.serialize(("upper", upper, budget))?;
    w.serialize(("lower", lower, budget))?;
    Ok(vec![
        Check::info("upper E[xi]", upper, Some(budget), None),
        Check::info("lower -E[-xi]", lower, Some(budget), None),
        Check::test("upper - lower", upper - lower, 0.0, None, lower <= upper),
    ])
}

fn decompose(
    w: &mut Table,
    setup: &Setup,
    payoff: Payoff,
    spec: &SimulationSpec,
) -> Result<Vec<Check>> {
    let xi = payoff.functional(vec![setup.horizon])?;
    let ce = ConditionalExpectation::solve(&xi, &setup.band, &pde_config(setup))?;
    let bundle = simulate_with(&ControlProcess::bang_bang_on_level(setup.band), spec)?;
    let d = decompose_on(&ce, &bundle)?;
    let seed = Some(spec.seed);
    w.write_record([
        "path",
        "max_residual",
        "k_terminal",
        "max_k_increase",
        "seed",
    ])?;
    for p in 0..d.n_paths() {
        let k = d.k_path(p);
        let rise = k
            .windows(2)
            .map(|v| v[1] - v[0])
            .fold(f64::NEG_INFINITY, f64::max);
        w.serialize((p, d.residuals()[p], k[k.len() - 1], rise, spec.seed))?;
    }
    let budget = coupled_budget(setup);
    let rise = d.max_k_increase();
    Ok(vec![
        Check::info("E[xi]", d.initial, Some(pde_budget(setup)), None),
        Check::info(
            "max reconstruction residual",
            d.max_residual(),
            Some(budget),
            seed,
        ),
        Check::info(
            "mean reconstruction residual",
            d.mean_residual(),
            Some(budget),
            seed,
        ),
        Check::test(
            "max one-step increase of K",
            rise,
            K_MONOTONE_SLACK,
            seed,
            rise <= K_MONOTONE_SLACK,
        ),
    ])
}

fn step_or(config: Option<&StepConfig>, setup: &Setup, values: &[f64]) -> Result<StepProcess> {
    match config {
        Some(c) => c.build(setup.horizon).map_err(gexp_core::GexpError::Usage),
        None if values.len() == 1 => StepProcess::constant(setup.horizon, values[0]),
        None => StepProcess::new(
            vec![0.0, 0.5 * setup.horizon, setup.horizon],
            values.to_vec(),
        ),
    }
}

fn write_martingale(
    w: &mut Table,
    report: &MartingaleReport,
    expected: bool,
    seed: u64,
) -> Result<()> {
    for r in &report.rows {
        w.serialize((
            &report.process,
            r.s,
            r.t,
            r.sup,
            r.sup_stderr,
            &r.sup_control,
            r.min,
            r.min_stderr,
            &r.min_control,
            MC_SIGMAS * r.sup_stderr + ROUNDING_FLOOR,
            seed,
            r.consistent,
            expected,
        ))?;
    }
    Ok(())
}

fn verify_martingale(
    w: &mut Table,
    setup: &Setup,
    varsigma: Option<&StepConfig>,
    drift: f64,
    pairs: Option<Vec<(f64, f64)>>,
    spec: &SimulationSpec,
) -> Result<Vec<Check>> {
    let band = setup.band;
    let t = setup.horizon;
    let pairs = pairs.unwrap_or_else(|| vec![(0.0, 0.5 * t), (0.5 * t, t), (0.0, t)]);
    let varsigma = step_or(varsigma, setup, &[1.0])?;
    let family = [
        ControlProcess::lower(band),
        ControlProcess::upper(band),
        ControlProcess::bang_bang_on_level(band),
        bang_bang_for(&varsigma, band),
    ];
    let k = martingale_test(&PathProcess::k_of(varsigma, band), &family, &pairs, spec)?;
    let x = martingale_test(&PathProcess::drift(drift), &family, &pairs, spec)?;
    w.write_record([
        "process",
        "s",
        "t",
        "sup",
        "sup_stderr",
        "sup_control",
        "min",
        "min_stderr",
        "min_control",
        "tolerance",
        "seed",
        "consistent",
        "expected",
    ])?;
    write_martingale(w, &k, true, spec.seed)?;
    write_martingale(w, &x, false, spec.seed)?;
    let worst = |r: &MartingaleReport| r.rows.iter().map(|r| r.sup.abs()).fold(0.0, f64::max);
    let highest = |r: &MartingaleReport| {
        r.rows
            .iter()
            .map(|r| r.sup)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let tol = |r: &MartingaleReport| {
        r.rows
            .iter()
            .map(|r| MC_SIGMAS * r.sup_stderr + ROUNDING_FLOOR)
            .fold(0.0, f64::max)
    };
    let seed = Some(spec.seed);
    Ok(vec![
        Check::test(
            format!("{} is a G-martingale", k.process),
            worst(&k),
            tol(&k),
            seed,
            k.consistent,
        ),
        Check::test(
            format!("{} is rejected", x.process),
            highest(&x),
            tol(&x),
            seed,
            !x.consistent,
        ),
    ])
}

fn verify_lemma32(
    w: &mut Table,
    setup: &Setup,
    alpha: f64,
    refinements: Vec<u32>,
    spec: &SimulationSpec,
) -> Result<Vec<Check>> {
    let band = setup.band;
    let low = (band.var_lo() + band.spread() / 3.0).sqrt();
    let high = (band.var_lo() + 2.0 * band.spread() / 3.0).sqrt();
    let second = BoundedRule::new(
        low,
        high,
        move |incr| if incr[0] > 0.0 { high } else { low },
    )?;
    let base = ControlProcess::self_dependent(band, vec![BoundedRule::constant(low), second])?;
    let subs = [
        ControlProcess::lower(band),
        ControlProcess::upper(band),
        ControlProcess::bang_bang_on_level(band),
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
    w.write_record([
        "refinement",
        "sub_control",
        "functional",
        "base_mean",
        "base_stderr",
        "perturbed_mean",
        "perturbed_stderr",
        "diff",
        "tolerance",
        "seed",
        "status",
    ])?;
    let mut checks = Vec::new();
    for (i, &n) in refinements.iter().enumerate() {
        let sub = subs[i % subs.len()].clone();
        let label = sub.label().to_string();
        let h_tilde = perturb_control(&base, &PerturbationSchedule::new(n, alpha, sub)?)?;
        for psi in &functionals {
            let r = marginal_match_test(&base, &h_tilde, psi, spec)?;
            let tol = MC_SIGMAS * r.combined_stderr;
            w.serialize((
                n,
                &label,
                &r.functional,
                r.base.mean,
                r.base.stderr,
                r.perturbed.mean,
                r.perturbed.stderr,
                r.diff,
                tol,
                spec.seed,
                &r.status,
            ))?;
            checks.push(Check::test(
                format!("n={n} {label} {}", r.functional),
                r.diff,
                tol,
                Some(spec.seed),
                r.pass(),
            ));
        }
    }
    Ok(checks)
}

fn verify_theorem(w: &mut Table, setup: &Setup, n_paths: usize, seed: u64) -> Result<Vec<Check>> {
    let config = Theorem35Config::default_for(setup.band, n_paths, seed)?;
    let report = verify_theorem35(&config)?;
    w.write_record(["step", "check", "value", "tolerance", "seed", "pass"])?;
    let mut checks = Vec::new();
    for r in &report.rows {
        w.serialize((&r.step, &r.check, r.value, r.tolerance, seed, r.pass))?;
        checks.push(Check::test(
            format!("{}: {}", r.step, r.check),
            r.value,
            r.tolerance,
            Some(seed),
            r.pass,
        ));
    }
    Ok(checks)
}

fn identify(
    w: &mut Table,
    setup: &Setup,
    eta: Option<&StepConfig>,
    rel_tol: f64,
    spec: &SimulationSpec,
) -> Result<Vec<Check>> {
    let band = setup.band;
    let eta = step_or(eta, setup, &[1.0, -1.0])?;
    let family = [
        ControlProcess::lower(band),
        ControlProcess::upper(band),
        bang_bang_for(&eta, band),
    ];
    let rows = identify_drift(&eta, &band, &family, spec, 1e-8)?;
    w.write_record([
        "start",
        "end",
        "eta",
        "drift",
        "expected",
        "relative_error",
        "tolerance",
        "seed",
        "pass",
    ])?;
    let mut checks = Vec::new();
    for r in &rows {
        let err = relative_error(r.drift, r.expected);
        let pass = err <= rel_tol;
        w.serialize((
            r.start, r.end, r.eta, r.drift, r.expected, err, rel_tol, spec.seed, pass,
        ))?;
        checks.push(Check::test(
            format!("drift on [{}, {}] vs 2G({})", r.start, r.end, r.eta),
            r.drift,
            rel_tol,
            Some(spec.seed),
            pass,
        ));
    }
    Ok(checks)
}

fn gbsde(
    w: &mut Table,
    setup: &Setup,
    payoff: Payoff,
    driver: DriverConfig,
    rows: usize,
    spec: &SimulationSpec,
) -> Result<Vec<Check>> {
    let f = payoff.function();
    let DriverConfig { a, b, c } = driver;
    let problem = GBSDEProblem::new(
        setup.band,
        setup.horizon,
        move |x| f(x),
        move |_, y, z| a * y + b * z + c,
        a.abs() + b.abs(),
    )?;
    let solution = solve_ppde(&problem, &setup.pde_grid, &setup.space)?;
    w.write_record(["t", "x", "Y", "Z"])?;
    for t in row_times(setup, rows) {
        for x in setup.space.points() {
            w.serialize((t, x, solution.y_at(t, x)?, solution.z_at(t, x)?))?;
        }
    }
    let spec = spec.with_law(IncrementLaw::Binary);
    let bundle = simulate_with(&ControlProcess::bang_bang_on_level(setup.band), &spec)?;
    let r = gbsde_residual(&solution, &bundle)?;
    let e = equivalence_check(&solution, &bundle, None)?;
    let seed = Some(spec.seed);
    Ok(vec![
        Check::info(
            "Y(0,0)",
            solution.y_at(0.0, 0.0)?,
            Some(pde_budget(setup)),
            None,
        ),
        Check::test(
            "backward equation residual",
            r.max_residual,
            r.tolerance,
            seed,
            r.pass,
        ),
        Check::test(
            "K0 = 0 and K non-increasing",
            r.max_k_increase.max(r.max_abs_k0),
            K_MONOTONE_SLACK,
            seed,
            r.max_abs_k0 == 0.0 && r.k_monotone,
        ),
        Check::test(
            "path equation residual",
            e.ppde_residual,
            e.tolerance,
            None,
            e.ppde_pass,
        ),
        Check::test(
            "Ito expansion residual",
            e.ito_residual,
            e.tolerance,
            seed,
            e.ito_pass,
        ),
    ])
}

fn price_uvm(
    w: &mut Table,
    setup: &Setup,
    payoff: Payoff,
    spec: &SimulationSpec,
) -> Result<Vec<Check>> {
    let band = setup.band;
    let budget = coupled_budget(setup);
    let f = payoff.function();
    w.write_record([
        "quantity",
        "pde",
        "mc",
        "mc_stderr",
        "mc_control",
        "tolerance",
        "seed",
        "pass",
    ])?;
    let mut checks = Vec::new();
    for (quantity, sign) in [("ask", 1.0), ("bid", -1.0)] {
        let surface = solve(setup, &payoff, sign)?;
        let pde = sign * surface.value_at(0.0, 0.0)?;
        let g = f.clone();
        let xi = CylinderFunctional::terminal(
            setup.horizon,
            move |x| sign * g(x),
            f64::INFINITY,
            f64::INFINITY,
        )?;
        let family = [
            ControlProcess::lower(band),
            ControlProcess::upper(band),
            ControlProcess::feedback(Arc::new(feedback_field(&surface))),
        ];
        let sup = sup_over_controls(&xi, &family, &spec.grid, spec.n_paths, spec.seed)?;
        let best = sup.best_estimate();
        let mc = sign * best.mean;
        let tol = MC_SIGMAS * best.stderr + budget;
        let pass = (mc - pde).abs() <= tol;
        w.serialize((
            quantity,
            pde,
            mc,
            best.stderr,
            sup.best_label(),
            tol,
            spec.seed,
            pass,
        ))?;
        checks.push(Check::info(
            format!("{quantity} (PDE)"),
            pde,
            Some(pde_budget(setup)),
            None,
        ));
        checks.push(Check::test(
            format!("{quantity}: Monte Carlo matches PDE"),
            mc - pde,
            tol,
            Some(spec.seed),
            pass,
        ));
    }
    Ok(checks)
}

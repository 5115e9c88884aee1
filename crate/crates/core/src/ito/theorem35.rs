//! Executable checks for the construction behind "an `ds`-absolutely
//! continuous non-increasing G-martingale vanishes": the `2ⁿm`-perturbations,
//! the `δ_{k,α}` quadrature, the limit of `E_{P_{hⁿ}}[∫δ⁻η ds]` and the
//! martingale test on both sides of the statement.

use std::sync::Arc;

use serde::Serialize;

use super::calculus::{PathProcess, StepProcess};
use super::martingale::martingale_test;
use super::quadrature::{block_identity_residual, step2_limit_check, Step2Row};
use crate::control::{BoundedRule, ControlProcess, PathView, PerturbationSchedule};
use crate::error::{GexpError, Result};
use crate::generator::{DeltaOscillator, GParams};
use crate::grid::TimeGrid;
use crate::mc::{
    check_qv_bounds, derive_seed, estimate_paths, estimate_paths_multi, marginal_match_test,
    perturb_control, simulate_with, BlockFunctional, McEstimate, SimulationSpec,
};
use crate::tolerance::MC_SIGMAS;

/// Integrand `η(t, B_t)` of `K_t = ∫η ds`.
pub type EtaFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Theorem35Config {
    pub base: ControlProcess,
    pub alpha: f64,
    pub sub_control: ControlProcess,
    pub refinements: Vec<u32>,
    pub eta: EtaFn,
    pub eta_label: String,
    pub zeta: StepProcess,
    pub step2_ks: Vec<usize>,
    pub spec: SimulationSpec,
    /// Paths used for the pathwise construction checks.
    pub construction_paths: usize,
}

impl std::fmt::Debug for Theorem35Config {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Theorem35Config")
            .field("base", &self.base.label())
            .field("alpha", &self.alpha)
            .field("refinements", &self.refinements)
            .field("eta", &self.eta_label)
            .field("spec", &self.spec)
            .finish()
    }
}

impl Theorem35Config {
    /// Two-block base control with squared levels `σ̲² + spread/3` on the
    /// first block and, on the second, `σ̲² + 2·spread/3` after an up-move
    /// (`σ̲² + spread/3` otherwise); `α = 1/4`, sub-control `σ̲`,
    /// refinements `1..=3` on 256 steps, `η = −min(1, |B|)`.
    pub fn default_for(band: GParams, n_paths: usize, seed: u64) -> Result<Self> {
        if band.is_degenerate() {
            return Err(GexpError::Domain("the construction needs σ̲ < σ̄".into()));
        }
        let low = (band.var_lo() + band.spread() / 3.0).sqrt();
        let high = (band.var_lo() + 2.0 * band.spread() / 3.0).sqrt();
        let second = BoundedRule::new(
            low,
            high,
            move |incr| if incr[0] > 0.0 { high } else { low },
        )?;
        let base = ControlProcess::self_dependent(band, vec![BoundedRule::constant(low), second])?
            .with_label("base(2 blocks)");
        Ok(Self {
            base,
            alpha: 0.25,
            sub_control: ControlProcess::lower(band),
            refinements: vec![1, 2, 3],
            eta: Arc::new(|_, b: f64| -b.abs().min(1.0)),
            eta_label: "-min(1,|B|)".into(),
            zeta: StepProcess::new(vec![0.0, 0.25, 0.5, 1.0], vec![1.0, -0.5, 2.0])?,
            step2_ks: vec![1, 2, 3, 4, 5, 7, 8, 16],
            spec: SimulationSpec::new(TimeGrid::new(1.0, 256)?, n_paths, seed),
            construction_paths: n_paths.min(2000),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem35Row {
    pub step: String,
    pub check: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step3Row {
    pub refinement: u32,
    pub k: usize,
    /// `E_{P_{hⁿ}}[∫δ⁻η ds]`.
    pub minus_integral: McEstimate,
    /// `E_{P_{hⁿ}}[∫δ⁺η ds]`.
    pub plus_integral: McEstimate,
    /// `E_{P_{hⁿ}}[∫(δ⁺ − α/(1−α)·δ⁻)η ds]`.
    pub step4_integral: McEstimate,
    /// `(1−α)·E_{P_h}[∫η ds]`.
    pub target: f64,
    pub gap: f64,
    pub combined_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem35Report {
    pub rows: Vec<Theorem35Row>,
    pub step2: Vec<Step2Row>,
    pub step3: Vec<Step3Row>,
    /// `E_{P_h}[∫η ds]`.
    pub base_integral: McEstimate,
}

impl Theorem35Report {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

fn row(
    step: &str,
    check: impl Into<String>,
    value: f64,
    tolerance: f64,
    pass: bool,
) -> Theorem35Row {
    Theorem35Row {
        step: step.into(),
        check: check.into(),
        value,
        tolerance,
        pass,
    }
}

/// `max |∫_{sub-block} h̃² ds − ξ²·|sub-block||` along the paths of the
/// perturbed control, with `ξ` the base level read off the perturbed path.
fn block_identity_gap(
    base: &ControlProcess,
    h_n: &ControlProcess,
    sub_blocks: usize,
    spec: &SimulationSpec,
) -> Result<f64> {
    let bundle = simulate_with(h_n, spec)?;
    let grid = *bundle.time_grid();
    let per = grid.n_steps() / sub_blocks;
    let mut gap: f64 = 0.0;
    for p in 0..bundle.n_paths() {
        let (b, h) = (bundle.b(p), bundle.h(p));
        for j in 0..sub_blocks {
            let start = j * per;
            let view = PathView {
                grid: &grid,
                step: start,
                b: &b[..=start],
                h: &h[..start],
            };
            let xi = base.level(&view)?;
            let integrated: f64 =
                h[start..start + per].iter().map(|v| v * v).sum::<f64>() * grid.dt();
            gap = gap.max((integrated - xi * xi * per as f64 * grid.dt()).abs());
        }
    }
    Ok(gap)
}

fn step3_row(
    config: &Theorem35Config,
    h_n: &ControlProcess,
    refinement: u32,
    k: usize,
    base_integral: &McEstimate,
) -> Result<Step3Row> {
    let grid = config.spec.grid;
    let osc = DeltaOscillator::new(k, config.alpha)?;
    let n = grid.n_steps();
    if !n.is_multiple_of(k) || ((n / k) as f64 * config.alpha).fract() != 0.0 {
        return Err(GexpError::Usage(format!(
            "{n} steps do not resolve δ with k = {k}, α = {}",
            config.alpha
        )));
    }
    let signs: Vec<i8> = (0..n)
        .map(|j| osc.value(grid.time(j) + 0.5 * grid.dt()))
        .collect::<Result<_>>()?;
    let eta = config.eta.clone();
    let ratio = config.alpha / (1.0 - config.alpha);
    let spec = config
        .spec
        .with_seed(derive_seed(config.spec.seed, 2 + refinement as u64));
    let est = estimate_paths_multi(h_n, &spec, 3, |p, out| {
        let (mut plus, mut minus) = (0.0, 0.0);
        for (j, &s) in signs.iter().enumerate() {
            let v = eta(grid.time(j), p.b[j]) * grid.dt();
            if s > 0 {
                plus += v;
            } else {
                minus += v;
            }
        }
        out[0] = minus;
        out[1] = plus;
        out[2] = plus - ratio * minus;
        Ok(())
    })?;
    let target = (1.0 - config.alpha) * base_integral.mean;
    Ok(Step3Row {
        refinement,
        k,
        minus_integral: est[0],
        plus_integral: est[1],
        step4_integral: est[2],
        target,
        gap: est[0].mean - target,
        combined_stderr: est[0]
            .stderr
            .hypot((1.0 - config.alpha) * base_integral.stderr),
    })
}

pub fn verify_theorem35(config: &Theorem35Config) -> Result<Theorem35Report> {
    let band = *config.base.band();
    let m = config.base.self_dependent_steps().ok_or_else(|| {
        GexpError::Usage(format!("{} is not self-dependent", config.base.label()))
    })?;
    let construction = config.spec.with_seed(derive_seed(config.spec.seed, 1));
    let construction = SimulationSpec {
        n_paths: config.construction_paths,
        ..construction
    };
    let psi = BlockFunctional::new("cos(B^m)", m, |incr| incr.iter().sum::<f64>().cos())?;
    let mut rows = Vec::new();
    let mut perturbed = Vec::new();
    for &n in &config.refinements {
        let schedule = PerturbationSchedule::new(n, config.alpha, config.sub_control.clone())?;
        let h_n = perturb_control(&config.base, &schedule)?;
        let k = m << n;
        let bundle = simulate_with(&h_n, &construction)?;
        let qv = check_qv_bounds(&bundle, &band);
        rows.push(row(
            "1",
            format!("n={n}: levels of h^n in band"),
            qv.violations as f64,
            0.0,
            qv.holds(),
        ));
        let gap = block_identity_gap(&config.base, &h_n, k, &construction)?;
        rows.push(row(
            "1",
            format!("n={n}: integrated variance per sub-block"),
            gap,
            1e-12,
            gap <= 1e-12,
        ));
        let matched = marginal_match_test(&config.base, &h_n, &psi, &config.spec)?;
        rows.push(row(
            "1",
            format!("n={n}: E_h[psi(B^m)] = E_h^n[psi(B^m)]"),
            matched.diff,
            MC_SIGMAS * matched.combined_stderr,
            matched.pass(),
        ));
        perturbed.push((n, k, h_n));
    }

    let step2 = step2_limit_check(&config.zeta, config.alpha, &config.step2_ks)?;
    let aligned_gap = step2
        .iter()
        .filter(|r| r.aligned)
        .map(|r| r.gap)
        .fold(0.0, f64::max);
    rows.push(row(
        "2",
        "aligned quadrature gap",
        aligned_gap,
        0.0,
        aligned_gap == 0.0,
    ));

    let eta = config.eta.clone();
    let grid = config.spec.grid;
    let base_integral = estimate_paths(
        &config.base,
        &config.spec.with_seed(derive_seed(config.spec.seed, 2)),
        |p| {
            Ok((0..grid.n_steps())
                .map(|j| eta(grid.time(j), p.b[j]))
                .sum::<f64>()
                * grid.dt())
        },
    )?;
    let step3: Vec<Step3Row> = perturbed
        .iter()
        .map(|(n, k, h_n)| step3_row(config, h_n, *n, *k, &base_integral))
        .collect::<Result<_>>()?;
    if let Some(last) = step3.last() {
        rows.push(row(
            "3",
            format!(
                "n={}: E_h^n[int delta^- eta] vs (1-alpha) E_h[int eta]",
                last.refinement
            ),
            last.gap,
            MC_SIGMAS * last.combined_stderr,
            last.gap.abs() <= MC_SIGMAS * last.combined_stderr,
        ));
    }

    let identity = step2
        .iter()
        .map(|r| r.identity_residual)
        .fold(0.0, f64::max);
    rows.push(row(
        "4",
        "(1-alpha) d = D on the step table",
        identity,
        1e-15,
        identity <= 1e-15,
    ));
    let step4: Vec<f64> = step3.iter().map(|r| r.step4_integral.mean.abs()).collect();
    let shrinking = step4.windows(2).all(|w| w[1] < w[0]);
    rows.push(row(
        "4",
        "|E_h^n[int (delta^+ - alpha/(1-alpha) delta^-) eta]| decreases in n",
        step4.last().copied().unwrap_or(0.0),
        0.0,
        shrinking,
    ));
    let mut block: f64 = 0.0;
    for &(_, k, _) in &perturbed {
        block = block.max(block_identity_residual(k, config.alpha)?);
    }
    rows.push(row(
        "4",
        "per-block integral of delta^+ - alpha/(1-alpha) delta^-",
        block,
        1e-15,
        block <= 1e-15,
    ));

    let family = vec![
        ControlProcess::lower(band),
        ControlProcess::upper(band),
        ControlProcess::bang_bang_on_level(band),
        config.base.clone(),
    ];
    let pairs = [(0.0, 0.5), (0.5, 1.0), (0.0, 1.0)];
    let drift = martingale_test(&PathProcess::drift(-1.0), &family, &pairs, &config.spec)?;
    let worst = drift
        .rows
        .iter()
        .map(|r| r.sup + MC_SIGMAS * r.sup_stderr)
        .fold(f64::NEG_INFINITY, f64::max);
    rows.push(row(
        "contrapositive",
        "X_t = -t rejected on every pair",
        worst,
        0.0,
        worst < 0.0,
    ));
    let k_one = PathProcess::k_of(StepProcess::constant(grid.horizon(), 1.0)?, band);
    let accepted = martingale_test(&k_one, &family, &pairs, &config.spec)?;
    let sup = accepted
        .rows
        .iter()
        .map(|r| r.sup.abs())
        .fold(0.0, f64::max);
    rows.push(row(
        "contrapositive",
        "K(varsigma=1) consistent on every pair",
        sup,
        0.0,
        accepted.consistent,
    ));

    Ok(Theorem35Report {
        rows,
        step2,
        step3,
        base_integral,
    })
}

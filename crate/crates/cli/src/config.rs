//! Suite configuration: JSON schema, defaults and validation.

use std::sync::Arc;

use gexp_core::grid::check_cfl;
use gexp_core::ito::StepProcess;
use gexp_core::{CylinderFunctional, GParams, PayoffConvention, SpaceGrid, TimeGrid};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default)]
    pub band: BandConfig,
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub experiments: Vec<Experiment>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub sigma_lo: f64,
    pub sigma_hi: f64,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            sigma_lo: 1.0,
            sigma_hi: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Steps of the simulation grid.
    pub n_steps: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    /// Steps of the PDE grid; CFL-maximal when absent.
    pub pde_steps: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            n_steps: 64,
            x_min: -12.0,
            x_max: 12.0,
            n_points: 241,
            pde_steps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            seed: 1,
        }
    }
}

/// Terminal payoffs `φ(x)`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Payoff {
    Square,
    Linear,
    Cos,
    Call {
        strike: f64,
    },
    Put {
        strike: f64,
    },
    Digital {
        strike: f64,
    },
    Butterfly {
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        width: f64,
    },
}

fn one() -> f64 {
    1.0
}

pub type PayoffFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

impl Payoff {
    pub fn validate(&self) -> Result<(), String> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be finite, got {v}"))
            }
        };
        match *self {
            Payoff::Call { strike } | Payoff::Put { strike } | Payoff::Digital { strike } => {
                finite("strike", strike)
            }
            Payoff::Butterfly { center, width } => {
                finite("center", center)?;
                if width > 0.0 && width.is_finite() {
                    Ok(())
                } else {
                    Err(format!("width must be positive, got {width}"))
                }
            }
            _ => Ok(()),
        }
    }

    pub fn function(&self) -> PayoffFn {
        match *self {
            Payoff::Square => Arc::new(|x| x * x),
            Payoff::Linear => Arc::new(|x| x),
            Payoff::Cos => Arc::new(f64::cos),
            Payoff::Call { strike } => Arc::new(move |x| (x - strike).max(0.0)),
            Payoff::Put { strike } => Arc::new(move |x| (strike - x).max(0.0)),
            Payoff::Digital { strike } => Arc::new(move |x| if x > strike { 1.0 } else { 0.0 }),
            Payoff::Butterfly { center, width } => {
                Arc::new(move |x| (width - (x - center).abs()).max(0.0))
            }
        }
    }

    /// `(Lipschitz bound, value bound)`.
    fn bounds(&self) -> (f64, f64) {
        match *self {
            Payoff::Square => (f64::INFINITY, f64::INFINITY),
            Payoff::Linear | Payoff::Call { .. } | Payoff::Put { .. } => (1.0, f64::INFINITY),
            Payoff::Cos => (1.0, 1.0),
            Payoff::Digital { .. } => (f64::INFINITY, 1.0),
            Payoff::Butterfly { width, .. } => (1.0, width),
        }
    }

    /// `ξ = φ(B_{t₁} + … + B_{tₙ})`.
    pub fn functional(&self, times: Vec<f64>) -> gexp_core::Result<CylinderFunctional> {
        let f = self.function();
        let (lip, bound) = self.bounds();
        let n = times.len() as f64;
        CylinderFunctional::new(
            times,
            PayoffConvention::Levels,
            move |levels: &[f64]| f(levels.iter().sum()),
            lip * n,
            bound,
        )
    }
}

/// A deterministic step function given by breakpoints `0 = s₀ < … < s_m = T` and values.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepConfig {
    pub fn build(&self, horizon: f64) -> Result<StepProcess, String> {
        if self
            .breakpoints
            .last()
            .is_some_and(|&b| (b - horizon).abs() > 1e-12 * horizon)
        {
            return Err(format!("breakpoints must end at T = {horizon}"));
        }
        StepProcess::new(self.breakpoints.clone(), self.values.clone()).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverConfig {
    /// `f(t, y, z) = a·y + b·z + c`.
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub c: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    SolveGheat {
        payoff: Option<Payoff>,
        /// Stored time rows in the output table.
        rows: Option<usize>,
    },
    Gexp {
        payoff: Option<Payoff>,
        times: Option<Vec<f64>>,
    },
    Decompose {
        payoff: Option<Payoff>,
        n_paths: Option<usize>,
        seed: Option<u64>,
    },
    VerifyMartingale {
        varsigma: Option<StepConfig>,
        drift: Option<f64>,
        pairs: Option<Vec<(f64, f64)>>,
        n_paths: Option<usize>,
        seed: Option<u64>,
    },
    VerifyLemma32 {
        alpha: Option<f64>,
        refinements: Option<Vec<u32>>,
        n_paths: Option<usize>,
        seed: Option<u64>,
    },
    VerifyTheorem35 {
        n_paths: Option<usize>,
        seed: Option<u64>,
    },
    IdentifyDrift {
        eta: Option<StepConfig>,
        rel_tol: Option<f64>,
        n_paths: Option<usize>,
        seed: Option<u64>,
    },
    Gbsde {
        payoff: Option<Payoff>,
        driver: Option<DriverConfig>,
        rows: Option<usize>,
        n_paths: Option<usize>,
        seed: Option<u64>,
    },
    PriceUvm {
        payoff: Option<Payoff>,
        n_paths: Option<usize>,
        seed: Option<u64>,
    },
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::SolveGheat { .. } => "solve-gheat",
            Experiment::Gexp { .. } => "gexp",
            Experiment::Decompose { .. } => "decompose",
            Experiment::VerifyMartingale { .. } => "verify-martingale",
            Experiment::VerifyLemma32 { .. } => "verify-lemma32",
            Experiment::VerifyTheorem35 { .. } => "verify-theorem35",
            Experiment::IdentifyDrift { .. } => "identify-drift",
            Experiment::Gbsde { .. } => "gbsde",
            Experiment::PriceUvm { .. } => "price-uvm",
        }
    }

    fn overrides(&self) -> (Option<usize>, Option<u64>) {
        match *self {
            Experiment::Decompose { n_paths, seed, .. }
            | Experiment::VerifyMartingale { n_paths, seed, .. }
            | Experiment::VerifyLemma32 { n_paths, seed, .. }
            | Experiment::VerifyTheorem35 { n_paths, seed }
            | Experiment::IdentifyDrift { n_paths, seed, .. }
            | Experiment::Gbsde { n_paths, seed, .. }
            | Experiment::PriceUvm { n_paths, seed, .. } => (n_paths, seed),
            Experiment::SolveGheat { .. } | Experiment::Gexp { .. } => (None, None),
        }
    }
}

/// Validated run parameters shared by all experiments.
#[derive(Debug, Clone, Copy)]
pub struct Setup {
    pub band: GParams,
    pub horizon: f64,
    pub space: SpaceGrid,
    pub pde_grid: TimeGrid,
    pub sim_grid: TimeGrid,
    pub n_paths: usize,
    pub seed: u64,
}

impl Setup {
    /// Paths and seed for one experiment.
    pub fn mc_for(&self, experiment: &Experiment) -> (usize, u64) {
        let (n, s) = experiment.overrides();
        (n.unwrap_or(self.n_paths), s.unwrap_or(self.seed))
    }
}

fn at(location: &str) -> impl Fn(String) -> CliError + '_ {
    move |message| CliError::Config {
        location: location.to_string(),
        message,
    }
}

impl SuiteConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    /// Checks every field and builds the shared grids.
    pub fn setup(&self, seed_override: Option<u64>) -> Result<Setup, CliError> {
        let BandConfig { sigma_lo, sigma_hi } = self.band;
        if !(sigma_lo > 0.0) {
            return Err(at("band.sigma_lo")(format!(
                "sigma_lo must be positive, got {sigma_lo}"
            )));
        }
        if !(sigma_lo <= sigma_hi) || !sigma_hi.is_finite() {
            return Err(at("band.sigma_hi")(format!(
                "sigma_hi must be finite and at least sigma_lo = {sigma_lo}, got {sigma_hi}"
            )));
        }
        let band = GParams::new(sigma_lo, sigma_hi).map_err(|e| at("band")(e.to_string()))?;
        let g = self.grids;
        if !(g.horizon > 0.0 && g.horizon.is_finite()) {
            return Err(at("grids.T")(format!(
                "T must be positive, got {}",
                g.horizon
            )));
        }
        if g.n_steps == 0 {
            return Err(at("grids.n_steps")("n_steps must be positive".into()));
        }
        if !(g.x_min < 0.0 && g.x_max > 0.0) {
            return Err(at("grids.x_min")(format!(
                "the space grid must contain the starting point 0, got [{}, {}]",
                g.x_min, g.x_max
            )));
        }
        let space =
            SpaceGrid::new(g.x_min, g.x_max, g.n_points).map_err(|e| at("grids")(e.to_string()))?;
        let pde_grid = match g.pde_steps {
            Some(0) => return Err(at("grids.pde_steps")("pde_steps must be positive".into())),
            Some(n) => {
                let grid = TimeGrid::new(g.horizon, n)
                    .map_err(|e| at("grids.pde_steps")(e.to_string()))?;
                check_cfl(grid.dt(), &space, &band)
                    .map_err(|e| at("grids.pde_steps")(e.to_string()))?;
                grid
            }
            None => TimeGrid::cfl_maximal(g.horizon, &space, &band)
                .map_err(|e| at("grids")(e.to_string()))?,
        };
        let sim_grid =
            TimeGrid::new(g.horizon, g.n_steps).map_err(|e| at("grids.n_steps")(e.to_string()))?;
        if self.mc.n_paths < 2 {
            return Err(at("mc.n_paths")(format!(
                "n_paths must be at least 2, got {}",
                self.mc.n_paths
            )));
        }
        let setup = Setup {
            band,
            horizon: g.horizon,
            space,
            pde_grid,
            sim_grid,
            n_paths: self.mc.n_paths,
            seed: seed_override.unwrap_or(self.mc.seed),
        };
        for (i, e) in self.experiments.iter().enumerate() {
            validate(e, &setup).map_err(at(&format!("experiments[{i}] ({})", e.name())))?;
        }
        Ok(setup)
    }
}

fn check_payoff(payoff: &Option<Payoff>) -> Result<(), String> {
    payoff.as_ref().map_or(Ok(()), Payoff::validate)
}

fn check_rows(rows: Option<usize>) -> Result<(), String> {
    match rows {
        Some(r) if r < 2 => Err(format!("rows must be at least 2, got {r}")),
        _ => Ok(()),
    }
}

fn validate(e: &Experiment, setup: &Setup) -> Result<(), String> {
    if let (Some(n), _) = e.overrides() {
        if n < 2 {
            return Err(format!("n_paths must be at least 2, got {n}"));
        }
    }
    let horizon = setup.horizon;
    match e {
        Experiment::SolveGheat { payoff, rows } => {
            check_payoff(payoff)?;
            check_rows(*rows)
        }
        Experiment::Gexp { payoff, times } => {
            check_payoff(payoff)?;
            if let Some(times) = times {
                if times.last().is_some_and(|&t| t > horizon) {
                    return Err(format!("times must not exceed T = {horizon}"));
                }
                payoff
                    .unwrap_or(Payoff::Square)
                    .functional(times.clone())
                    .map_err(|e| e.to_string())?;
            }
            Ok(())
        }
        Experiment::Decompose { payoff, .. } | Experiment::PriceUvm { payoff, .. } => {
            check_payoff(payoff)
        }
        Experiment::VerifyMartingale {
            varsigma,
            drift,
            pairs,
            ..
        } => {
            if let Some(v) = varsigma {
                v.build(horizon)?;
            }
            if drift.is_some_and(|c| !c.is_finite() || c == 0.0) {
                return Err("drift must be finite and non-zero".into());
            }
            if let Some(pairs) = pairs {
                for &(s, t) in pairs {
                    if !(0.0 <= s && s < t && t <= horizon) {
                        return Err(format!(
                            "pair ({s}, {t}) must satisfy 0 ≤ s < t ≤ T = {horizon}"
                        ));
                    }
                }
            }
            Ok(())
        }
        Experiment::VerifyLemma32 {
            alpha, refinements, ..
        } => {
            if let Some(a) = alpha {
                if !(*a > 0.0 && *a <= 1.0 / 3.0) {
                    return Err(format!("alpha must lie in (0, 1/3], got {a}"));
                }
            }
            if refinements
                .as_ref()
                .is_some_and(|r| r.is_empty() || r.iter().any(|&n| n > 6))
            {
                return Err("refinements must be non-empty and at most 6".into());
            }
            if setup.band.is_degenerate() {
                return Err("perturbations need sigma_lo < sigma_hi".into());
            }
            Ok(())
        }
        Experiment::VerifyTheorem35 { .. } => {
            if setup.band.is_degenerate() {
                return Err("the construction needs sigma_lo < sigma_hi".into());
            }
            Ok(())
        }
        Experiment::IdentifyDrift { eta, rel_tol, .. } => {
            if let Some(eta) = eta {
                eta.build(horizon)?;
            }
            if rel_tol.is_some_and(|t| !(t > 0.0)) {
                return Err("rel_tol must be positive".into());
            }
            Ok(())
        }
        Experiment::Gbsde {
            payoff,
            driver,
            rows,
            ..
        } => {
            check_payoff(payoff)?;
            check_rows(*rows)?;
            if let Some(d) = driver {
                if ![d.a, d.b, d.c].iter().all(|v| v.is_finite()) {
                    return Err("driver coefficients must be finite".into());
                }
            }
            Ok(())
        }
    }
}

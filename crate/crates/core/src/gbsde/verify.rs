//! Pathwise residuals of a solved G-BSDE and the two directions of the
//! BSDE ↔ PPDE correspondence.

use rayon::prelude::*;
use serde::Serialize;

use super::solve::GBSDESolution;
use crate::error::{GexpError, Result};
use crate::mc::{PathBundle, PathRef};
use crate::tolerance::grid_budget;

/// Slack on per-step increases of `K` (rounding only).
pub const K_MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GbsdeResidualReport {
    pub n_paths: usize,
    /// `max |Y_t − (ξ + ∫_t^T f ds − ∫_t^T Z dB − (K_T − K_t))|`.
    pub max_residual: f64,
    pub max_abs_k0: f64,
    /// Largest one-step increase of `K`.
    pub max_k_increase: f64,
    pub k_monotone: bool,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalenceReport {
    /// `[x_lo, x_hi]` of the nodes entering the equation residual.
    pub region: (f64, f64),
    /// `max |∂_t u + G(∂²_x u) + f(t, u, ∂_x u)|` on interior nodes of the region.
    pub ppde_residual: f64,
    /// Mean of `∂_t u + G(∂²_x u)` over the same nodes.
    pub mean_a_g: f64,
    /// `max |u_t − (u₀ + ∫𝒜_G u ds + ∫∂_x u dB + K_t)|` along the paths.
    pub ito_residual: f64,
    pub tolerance: f64,
    pub ppde_pass: bool,
    pub ito_pass: bool,
}

impl EquivalenceReport {
    pub fn pass(&self) -> bool {
        self.ppde_pass && self.ito_pass
    }
}

fn check_bundle(solution: &GBSDESolution, bundle: &PathBundle) -> Result<()> {
    let grid = bundle.time_grid();
    let horizon = solution.problem().horizon();
    if grid.start() != 0.0 || (grid.end() - horizon).abs() > 1e-12 * horizon {
        return Err(GexpError::Usage(format!(
            "bundle covers [{}, {}], the equation [0, {horizon}]",
            grid.start(),
            grid.end()
        )));
    }
    Ok(())
}

/// Budget `C·(dt + dx²)` with the coarser of the equation and bundle steps.
pub fn combined_budget(solution: &GBSDESolution, bundle: &PathBundle) -> f64 {
    let surface = solution.y_surface();
    let dt = surface.time_grid().dt().max(bundle.time_grid().dt());
    grid_budget(dt, surface.space().dx())
}

struct PathTerms {
    y: Vec<f64>,
    z: Vec<f64>,
    a_g: Vec<f64>,
    k: Vec<f64>,
}

fn path_terms(solution: &GBSDESolution, path: &PathRef<'_>) -> Result<PathTerms> {
    let surface = solution.y_surface();
    let band = solution.problem().band();
    let grid = path.grid;
    let width = path.b.len();
    let (mut y, mut z, mut a_g) = (
        Vec::with_capacity(width),
        Vec::with_capacity(width),
        Vec::with_capacity(width),
    );
    for j in 0..width {
        let (t, x) = (grid.time(j), path.b[j]);
        y.push(surface.value_at(t, x)?);
        z.push(surface.du_dx_at(t, x)?);
        a_g.push(surface.du_dt_at(t, x)? + band.g_value(surface.d2u_dx2_at(t, x)?));
    }
    Ok(PathTerms {
        y,
        z,
        a_g,
        k: solution.k_path(path)?,
    })
}

/// Residual of the backward equation along every path, with `ξ = φ(B_T)`.
pub fn gbsde_residual(
    solution: &GBSDESolution,
    bundle: &PathBundle,
) -> Result<GbsdeResidualReport> {
    check_bundle(solution, bundle)?;
    let problem = solution.problem();
    let per_path: Vec<(f64, f64, f64)> = (0..bundle.n_paths())
        .into_par_iter()
        .map(|p| {
            let path = bundle.path(p);
            let grid = path.grid;
            let dt = grid.dt();
            let n = path.h.len();
            let terms = path_terms(solution, &path)?;
            let xi = problem.terminal(path.b[n]);
            let mut tail_f = 0.0;
            let mut tail_z = 0.0;
            let mut worst = (terms.y[n] - xi).abs();
            for j in (0..n).rev() {
                tail_f += problem.driver(grid.time(j), terms.y[j], terms.z[j]) * dt;
                tail_z += terms.z[j] * (path.b[j + 1] - path.b[j]);
                let rhs = xi + tail_f - tail_z - (terms.k[n] - terms.k[j]);
                worst = worst.max((terms.y[j] - rhs).abs());
            }
            let increase = terms
                .k
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((worst, terms.k[0].abs(), increase))
        })
        .collect::<Result<_>>()?;
    let max_residual = per_path.iter().map(|r| r.0).fold(0.0, f64::max);
    let max_abs_k0 = per_path.iter().map(|r| r.1).fold(0.0, f64::max);
    let max_k_increase = per_path
        .iter()
        .map(|r| r.2)
        .fold(f64::NEG_INFINITY, f64::max);
    let tolerance = combined_budget(solution, bundle);
    let k_monotone = max_k_increase <= K_MONOTONE_SLACK;
    Ok(GbsdeResidualReport {
        n_paths: bundle.n_paths(),
        max_residual,
        max_abs_k0,
        max_k_increase,
        k_monotone,
        tolerance,
        pass: max_residual <= tolerance && max_abs_k0 == 0.0 && k_monotone,
    })
}

/// Middle half of the space grid, away from the truncated boundary.
pub fn default_region(solution: &GBSDESolution) -> (f64, f64) {
    let space = solution.y_surface().space();
    let quarter = 0.25 * (space.x_max() - space.x_min());
    (space.x_min() + quarter, space.x_max() - quarter)
}

/// Checks the equation on the grid and the generalized G-Itô expansion of
/// `u` along the paths of `bundle`.
pub fn equivalence_check(
    solution: &GBSDESolution,
    bundle: &PathBundle,
    region: Option<(f64, f64)>,
) -> Result<EquivalenceReport> {
    check_bundle(solution, bundle)?;
    let region = region.unwrap_or_else(|| default_region(solution));
    let problem = solution.problem();
    let surface = solution.y_surface();
    let space = surface.space();
    let band = problem.band();
    let d = surface.derivatives();
    let n = space.n_points();
    let (mut ppde_residual, mut sum, mut count) = (0.0f64, 0.0, 0usize);
    for r in 1..surface.n_rows() - 1 {
        let t = surface.time_grid().time(r);
        for i in 1..n - 1 {
            let x = space.x(i);
            if x < region.0 || x > region.1 {
                continue;
            }
            let k = r * n + i;
            let a = d.du_dt[k] + band.g_value(d.d2u_dx2[k]);
            ppde_residual =
                ppde_residual.max((a + problem.driver(t, surface.at_node(r, i), d.du_dx[k])).abs());
            sum += a;
            count += 1;
        }
    }
    if count == 0 {
        return Err(GexpError::Usage(format!(
            "region [{}, {}] holds no interior node",
            region.0, region.1
        )));
    }
    let ito_residual = (0..bundle.n_paths())
        .into_par_iter()
        .map(|p| {
            let path = bundle.path(p);
            let dt = path.grid.dt();
            let terms = path_terms(solution, &path)?;
            let mut acc = terms.y[0];
            let mut worst: f64 = 0.0;
            for j in 0..path.h.len() {
                acc += terms.a_g[j] * dt + terms.z[j] * (path.b[j + 1] - path.b[j]);
                worst = worst.max((terms.y[j + 1] - (acc + terms.k[j + 1])).abs());
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let tolerance = combined_budget(solution, bundle);
    Ok(EquivalenceReport {
        region,
        ppde_residual,
        mean_a_g: sum / count as f64,
        ito_residual,
        tolerance,
        ppde_pass: ppde_residual <= tolerance,
        ito_pass: ito_residual <= tolerance,
    })
}

/// Per-path `K` traces as CSV with header `path,step,t,K`.
pub fn write_k_csv<W: std::io::Write>(
    solution: &GBSDESolution,
    bundle: &PathBundle,
    writer: W,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(["path", "step", "t", "K"])?;
    for p in 0..bundle.n_paths() {
        let path = bundle.path(p);
        for (j, k) in solution.k_path(&path)?.iter().enumerate() {
            w.write_record(&[
                (bundle.first_path() + p).to_string(),
                j.to_string(),
                path.grid.time(j).to_string(),
                k.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlProcess;
    use crate::gbsde::solve::{solve_ppde, GBSDEProblem};
    use crate::generator::GParams;
    use crate::grid::{SpaceGrid, TimeGrid};
    use crate::mc::{simulate_with, IncrementLaw, SimulationSpec};

    fn setup() -> (GParams, TimeGrid, SpaceGrid, PathBundle) {
        let band = GParams::from_variances(1.0, 4.0).unwrap();
        let space = SpaceGrid::centered(0.0, 12.0, 241).unwrap();
        let time = TimeGrid::cfl_maximal(1.0, &space, &band).unwrap();
        let spec = SimulationSpec::new(TimeGrid::new(1.0, 64).unwrap(), 200, 5)
            .with_law(IncrementLaw::Binary);
        let bundle = simulate_with(&ControlProcess::bang_bang_on_level(band), &spec).unwrap();
        (band, time, space, bundle)
    }

    #[test]
    fn square_payoff_without_driver() {
        let (band, time, space, bundle) = setup();
        let p = GBSDEProblem::martingale(band, 1.0, |x| x * x).unwrap();
        let s = solve_ppde(&p, &time, &space).unwrap();
        let r = gbsde_residual(&s, &bundle).unwrap();
        assert!(r.pass, "{r:?}");
        let e = equivalence_check(&s, &bundle, None).unwrap();
        assert!(e.pass(), "{e:?}");
        assert!(e.mean_a_g.abs() < 1e-4, "{e:?}");
    }

    #[test]
    fn constant_driver() {
        let (band, time, space, bundle) = setup();
        let p = GBSDEProblem::new(band, 1.0, |x: f64| x.cos(), |_, _, _| 0.5, 0.0).unwrap();
        let s = solve_ppde(&p, &time, &space).unwrap();
        assert!(gbsde_residual(&s, &bundle).unwrap().pass);
        let e = equivalence_check(&s, &bundle, None).unwrap();
        assert!(e.pass(), "{e:?}");
    }

    #[test]
    fn linear_payoff_has_no_k() {
        let (band, time, space, bundle) = setup();
        let p = GBSDEProblem::martingale(band, 1.0, |x| x).unwrap();
        let s = solve_ppde(&p, &time, &space).unwrap();
        for path in bundle.paths().take(20) {
            assert!(s.k_path(&path).unwrap().iter().all(|k| k.abs() < 1e-9));
        }
        let e = equivalence_check(&s, &bundle, None).unwrap();
        assert!(e.ito_residual < 1e-9);
    }

    #[test]
    fn horizon_mismatch_is_a_usage_error() {
        let (band, time, space, _) = setup();
        let p = GBSDEProblem::martingale(band, 1.0, |x| x).unwrap();
        let s = solve_ppde(&p, &time, &space).unwrap();
        let spec = SimulationSpec::new(TimeGrid::new(0.5, 8).unwrap(), 2, 1);
        let short = simulate_with(&ControlProcess::lower(band), &spec).unwrap();
        assert!(matches!(
            gbsde_residual(&s, &short),
            Err(GexpError::Usage(_))
        ));
    }

    #[test]
    fn k_traces_csv() {
        let (band, time, space, bundle) = setup();
        let p = GBSDEProblem::martingale(band, 1.0, |x| x * x).unwrap();
        let s = solve_ppde(&p, &time, &space).unwrap();
        let mut out = Vec::new();
        write_k_csv(&s, &bundle, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("path,step,t,K\n0,0,0,0\n"));
        assert_eq!(text.lines().count(), 1 + 200 * 65);
    }
}

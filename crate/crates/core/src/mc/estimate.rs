//! Sample means with standard errors, and the supremum over a control family.

use rayon::prelude::*;
use serde::Serialize;

use super::bundle::{for_each_chunk, PathBundle, PathRef, SimulationSpec};
use crate::control::ControlProcess;
use crate::error::{GexpError, Result};
use crate::functional::CylinderFunctional;
use crate::grid::TimeGrid;

/// Mean and standard error `sample-std/√n` over paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Infinite when fewer than two samples are available.
    pub stderr: f64,
    pub n_paths: usize,
}

/// Streaming mean/variance accumulator, fed in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn estimate(&self) -> McEstimate {
        let stderr = if self.n < 2 {
            f64::INFINITY
        } else {
            (self.m2.max(0.0) / (self.n - 1) as f64 / self.n as f64).sqrt()
        };
        McEstimate {
            mean: self.mean,
            stderr,
            n_paths: self.n,
        }
    }
}

/// How cylinder times off the simulation grid are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Snapping {
    #[default]
    Exact,
    Nearest,
}

/// Node indices of the cylinder times on `grid`.
pub fn cylinder_nodes(
    xi: &CylinderFunctional,
    grid: &TimeGrid,
    snapping: Snapping,
) -> Result<Vec<usize>> {
    xi.times()
        .iter()
        .map(|&t| match snapping {
            Snapping::Exact => grid.index_of(t).ok_or_else(|| {
                GexpError::Usage(format!(
                    "cylinder time {t} is not a node of the simulation grid"
                ))
            }),
            Snapping::Nearest if grid.contains(t) => Ok(grid.nearest_index(t)),
            Snapping::Nearest => Err(GexpError::Usage(format!(
                "cylinder time {t} lies beyond the grid"
            ))),
        })
        .collect()
}

fn eval_on_path(xi: &CylinderFunctional, nodes: &[usize], path: &PathRef<'_>) -> f64 {
    let levels: Vec<f64> = nodes.iter().map(|&k| path.b[k]).collect();
    xi.eval_levels(&levels)
}

/// `E_{P_h}[ξ]` on a simulated bundle.
pub fn mc_expectation(xi: &CylinderFunctional, bundle: &PathBundle) -> Result<McEstimate> {
    mc_expectation_with(xi, bundle, Snapping::Exact)
}

pub fn mc_expectation_with(
    xi: &CylinderFunctional,
    bundle: &PathBundle,
    snapping: Snapping,
) -> Result<McEstimate> {
    let nodes = cylinder_nodes(xi, bundle.time_grid(), snapping)?;
    let values: Vec<f64> = (0..bundle.n_paths())
        .into_par_iter()
        .map(|p| eval_on_path(xi, &nodes, &bundle.path(p)))
        .collect();
    let mut acc = Welford::default();
    values.into_iter().for_each(|v| acc.push(v));
    Ok(acc.estimate())
}

/// Estimates `k` path statistics at once, simulating chunk by chunk.
pub fn estimate_paths_multi<F>(
    control: &ControlProcess,
    spec: &SimulationSpec,
    k: usize,
    f: F,
) -> Result<Vec<McEstimate>>
where
    F: Fn(&PathRef<'_>, &mut [f64]) -> Result<()> + Sync,
{
    let mut acc = vec![Welford::default(); k];
    for_each_chunk(control, spec, |bundle| {
        let values: Vec<f64> = (0..bundle.n_paths())
            .into_par_iter()
            .map(|p| {
                let mut out = vec![0.0; k];
                f(&bundle.path(p), &mut out).map(|_| out)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        for row in values.chunks(k.max(1)) {
            for (a, &v) in acc.iter_mut().zip(row) {
                a.push(v);
            }
        }
        Ok(())
    })?;
    Ok(acc.iter().map(Welford::estimate).collect())
}

/// Estimates one path statistic.
pub fn estimate_paths<F>(
    control: &ControlProcess,
    spec: &SimulationSpec,
    f: F,
) -> Result<McEstimate>
where
    F: Fn(&PathRef<'_>) -> Result<f64> + Sync,
{
    let v = estimate_paths_multi(control, spec, 1, |p, out| {
        out[0] = f(p)?;
        Ok(())
    })?;
    Ok(v[0])
}

/// `E_{P_h}[ξ]` without keeping the paths.
pub fn estimate_functional(
    xi: &CylinderFunctional,
    control: &ControlProcess,
    spec: &SimulationSpec,
) -> Result<McEstimate> {
    let nodes = cylinder_nodes(xi, &spec.grid, Snapping::Exact)?;
    estimate_paths(control, spec, |p| Ok(eval_on_path(xi, &nodes, p)))
}

/// Per-control estimates and the maximizing member.
#[derive(Debug, Clone, PartialEq)]
pub struct SupReport {
    pub best: usize,
    pub labels: Vec<String>,
    pub estimates: Vec<McEstimate>,
}

impl SupReport {
    pub fn best_label(&self) -> &str {
        &self.labels[self.best]
    }

    pub fn best_estimate(&self) -> McEstimate {
        self.estimates[self.best]
    }

    pub fn worst(&self) -> usize {
        argmin(&self.estimates)
    }
}

fn argmax(e: &[McEstimate]) -> usize {
    let mut best = 0;
    for (i, x) in e.iter().enumerate() {
        if x.mean > e[best].mean {
            best = i;
        }
    }
    best
}

fn argmin(e: &[McEstimate]) -> usize {
    let mut best = 0;
    for (i, x) in e.iter().enumerate() {
        if x.mean < e[best].mean {
            best = i;
        }
    }
    best
}

/// `max_h E_{P_h}[ξ]` over a finite family, with common random numbers.
///
/// A lower-bound estimator of `𝔼[ξ]` up to sampling error.
pub fn sup_over_controls(
    xi: &CylinderFunctional,
    family: &[ControlProcess],
    time_grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<SupReport> {
    sup_over_controls_with(xi, family, &SimulationSpec::new(*time_grid, n_paths, seed))
}

pub fn sup_over_controls_with(
    xi: &CylinderFunctional,
    family: &[ControlProcess],
    spec: &SimulationSpec,
) -> Result<SupReport> {
    if family.is_empty() {
        return Err(GexpError::Usage("control family is empty".into()));
    }
    let estimates = family
        .iter()
        .map(|c| estimate_functional(xi, c, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(SupReport {
        best: argmax(&estimates),
        labels: family.iter().map(|c| c.label().to_string()).collect(),
        estimates,
    })
}

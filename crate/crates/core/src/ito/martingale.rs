//! One-sided G-martingale test by suprema over a control family, and the
//! stationarity check on increments.
//!
//! A finite family can only refute the martingale property. A process passes
//! when `sup_h E_{P_h}[X_t − X_s]` is within three standard errors of zero for
//! every tested pair.

use serde::Serialize;

use super::calculus::PathProcess;
use crate::control::ControlProcess;
use crate::error::{GexpError, Result};
use crate::mc::{estimate_paths_multi, McEstimate, SimulationSpec};
use crate::tolerance::MC_SIGMAS;

/// Slack added to `3·stderr`, absorbing rounding when every estimate is exact.
pub const ROUNDING_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleRow {
    pub s: f64,
    pub t: f64,
    pub sup: f64,
    pub sup_stderr: f64,
    pub sup_control: String,
    pub min: f64,
    pub min_stderr: f64,
    pub min_control: String,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub process: String,
    pub rows: Vec<MartingaleRow>,
    /// "Consistent with a G-martingale" on every pair; never a proof.
    pub consistent: bool,
}

fn pair_nodes(spec: &SimulationSpec, pairs: &[(f64, f64)]) -> Result<Vec<(usize, usize)>> {
    pairs
        .iter()
        .map(|&(s, t)| {
            let i = spec.grid.index_of(s);
            let j = spec.grid.index_of(t);
            match (i, j) {
                (Some(i), Some(j)) if i < j => Ok((i, j)),
                _ => Err(GexpError::Usage(format!(
                    "pair ({s}, {t}) must be increasing grid nodes"
                ))),
            }
        })
        .collect()
}

/// `E_{P_h}[X_t − X_s]` for each control and pair.
pub fn increment_estimates(
    process: &PathProcess,
    family: &[ControlProcess],
    pairs: &[(f64, f64)],
    spec: &SimulationSpec,
) -> Result<Vec<Vec<McEstimate>>> {
    if family.is_empty() {
        return Err(GexpError::Usage("control family is empty".into()));
    }
    let nodes = pair_nodes(spec, pairs)?;
    let width = spec.grid.n_steps() + 1;
    family
        .iter()
        .map(|c| {
            estimate_paths_multi(c, spec, nodes.len(), |p, out| {
                let mut x = vec![0.0; width];
                process.eval(p, &mut x)?;
                for (o, &(i, j)) in out.iter_mut().zip(&nodes) {
                    *o = x[j] - x[i];
                }
                Ok(())
            })
        })
        .collect()
}

pub fn martingale_test(
    process: &PathProcess,
    family: &[ControlProcess],
    pairs: &[(f64, f64)],
    spec: &SimulationSpec,
) -> Result<MartingaleReport> {
    let est = increment_estimates(process, family, pairs, spec)?;
    let rows: Vec<MartingaleRow> = pairs
        .iter()
        .enumerate()
        .map(|(q, &(s, t))| {
            let (mut hi, mut lo) = (0, 0);
            for c in 0..family.len() {
                if est[c][q].mean > est[hi][q].mean {
                    hi = c;
                }
                if est[c][q].mean < est[lo][q].mean {
                    lo = c;
                }
            }
            let sup = est[hi][q];
            let min = est[lo][q];
            MartingaleRow {
                s,
                t,
                sup: sup.mean,
                sup_stderr: sup.stderr,
                sup_control: family[hi].label().to_string(),
                min: min.mean,
                min_stderr: min.stderr,
                min_control: family[lo].label().to_string(),
                consistent: sup.mean.abs() <= MC_SIGMAS * sup.stderr + ROUNDING_FLOOR,
            }
        })
        .collect();
    Ok(MartingaleReport {
        process: process.label().to_string(),
        consistent: rows.iter().all(|r| r.consistent),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityRow {
    pub control: String,
    pub first: McEstimate,
    pub second: McEstimate,
    pub diff: f64,
    pub combined_stderr: f64,
    pub equal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityReport {
    pub process: String,
    pub windows: [(f64, f64); 2],
    pub rows: Vec<StationarityRow>,
    /// Increments over both windows agree in mean under every control.
    pub stationary: bool,
}

/// Compares `E_{P_h}[X_{t₁} − X_{s₁}]` with `E_{P_h}[X_{t₂} − X_{s₂}]` for
/// windows of equal length, control by control.
pub fn stationarity_check(
    process: &PathProcess,
    family: &[ControlProcess],
    windows: [(f64, f64); 2],
    spec: &SimulationSpec,
) -> Result<StationarityReport> {
    let (a, b) = (windows[0].1 - windows[0].0, windows[1].1 - windows[1].0);
    if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
        return Err(GexpError::Usage(
            "stationarity windows must have equal length".into(),
        ));
    }
    let est = increment_estimates(process, family, &windows, spec)?;
    let rows: Vec<StationarityRow> = family
        .iter()
        .zip(&est)
        .map(|(c, e)| {
            let diff = e[1].mean - e[0].mean;
            let combined_stderr = e[0].stderr.hypot(e[1].stderr);
            StationarityRow {
                control: c.label().to_string(),
                first: e[0],
                second: e[1],
                diff,
                combined_stderr,
                equal: diff.abs() <= MC_SIGMAS * combined_stderr + ROUNDING_FLOOR,
            }
        })
        .collect();
    Ok(StationarityReport {
        process: process.label().to_string(),
        windows,
        stationary: rows.iter().all(|r| r.equal),
        rows,
    })
}

//! Drift identification: the constant `c` on each interval for which
//! `∫η d⟨B⟩ − ∫c ds` is a G-martingale, expected to equal `2G(η)`.

use serde::Serialize;

use super::calculus::{PathProcess, StepProcess};
use super::martingale::increment_estimates;
use crate::control::ControlProcess;
use crate::error::{GexpError, Result};
use crate::generator::GParams;
use crate::mc::SimulationSpec;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftRow {
    pub start: f64,
    pub end: f64,
    pub eta: f64,
    pub drift: f64,
    pub expected: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
    pub sup_control: String,
    pub sup_stderr: f64,
}

/// Markov control `sign_vol(η(t))`.
pub fn bang_bang_for(eta: &StepProcess, band: GParams) -> ControlProcess {
    let eta = eta.clone();
    ControlProcess::markov(band, band.sigma_lo(), band.sigma_hi(), move |t, _| {
        band.sign_vol(eta.value_at(t))
    })
    .expect("sign_vol stays in band")
    .with_label("bang-bang(eta)")
}

/// Per interval of `η`, bisects `c ↦ sup_h E_{P_h}[∫η d⟨B⟩ − c·(b − a)]` for its root.
///
/// The bracket is `[2G_ε(η), 2G(η) + ε]` with `ε = (σ̄² − σ̲²)/2`.
pub fn identify_drift(
    eta: &StepProcess,
    band: &GParams,
    family: &[ControlProcess],
    spec: &SimulationSpec,
    tolerance: f64,
) -> Result<Vec<DriftRow>> {
    if !(tolerance > 0.0) {
        return Err(GexpError::Domain(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    let pairs: Vec<(f64, f64)> = eta.breakpoints().windows(2).map(|w| (w[0], w[1])).collect();
    let est = increment_estimates(
        &PathProcess::bracket_integral(eta.clone()),
        family,
        &pairs,
        spec,
    )?;
    let eps = 0.5 * band.spread();
    pairs
        .iter()
        .enumerate()
        .map(|(q, &(a, b))| {
            let len = b - a;
            let v = eta.values()[q];
            let best = (0..family.len())
                .max_by(|&i, &j| est[i][q].mean.total_cmp(&est[j][q].mean))
                .unwrap();
            let sup = est[best][q].mean;
            let objective = |c: f64| sup - c * len;
            let mut lo = band.g_eps_value(eps, v)? * 2.0;
            let mut hi = 2.0 * band.g_value(v) + eps;
            let bracket = (lo, hi);
            if !(objective(lo) >= 0.0 && objective(hi) <= 0.0) {
                return Err(GexpError::Numeric(format!(
                    "drift on [{a}, {b}] is not bracketed: objective({lo}) = {}, objective({hi}) = {}, sup = {sup} by {}",
                    objective(lo),
                    objective(hi),
                    family[best].label()
                )));
            }
            let mut iterations = 0;
            while hi - lo > tolerance && iterations < 200 {
                let mid = 0.5 * (lo + hi);
                if objective(mid) >= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                iterations += 1;
            }
            Ok(DriftRow {
                start: a,
                end: b,
                eta: v,
                drift: 0.5 * (lo + hi),
                expected: 2.0 * band.g_value(v),
                bracket,
                iterations,
                sup_control: family[best].label().to_string(),
                sup_stderr: est[best][q].stderr / len,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    #[test]
    fn recovers_two_g() {
        let band = GParams::from_variances(1.0, 4.0).unwrap();
        let eta = StepProcess::new(vec![0.0, 0.5, 1.0], vec![1.0, -1.0]).unwrap();
        let family = vec![
            ControlProcess::lower(band),
            ControlProcess::upper(band),
            bang_bang_for(&eta, band),
        ];
        let spec = SimulationSpec::new(TimeGrid::new(1.0, 16).unwrap(), 100, 1);
        let rows = identify_drift(&eta, &band, &family, &spec, 1e-10).unwrap();
        assert!((rows[0].drift - 4.0).abs() < 1e-8);
        assert!((rows[1].drift + 1.0).abs() < 1e-8);
        let narrow = [ControlProcess::constant(band, 1.2).unwrap()];
        let r = identify_drift(
            &StepProcess::constant(1.0, 1.0).unwrap(),
            &band,
            &narrow,
            &spec,
            1e-10,
        );
        assert!(matches!(r, Err(GexpError::Numeric(_))));
    }
}

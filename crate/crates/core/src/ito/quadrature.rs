//! Exact quadrature of `δ^±_{k,α}` against deterministic step functions on `]0, 1]`.

use serde::Serialize;

use super::calculus::StepProcess;
use crate::error::{GexpError, Result};
use crate::generator::DeltaOscillator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Step2Row {
    pub k: usize,
    /// `1/k` divides every breakpoint of `ζ`.
    pub aligned: bool,
    /// `∫δ⁻ζ ds`.
    pub minus_integral: f64,
    /// `(1−α)∫ζ ds`.
    pub target: f64,
    /// `D = |∫δ⁻ζ ds − (1−α)∫ζ ds|`.
    pub gap: f64,
    /// `d = |∫(δ⁺ − α/(1−α)·δ⁻)ζ ds|`.
    pub signed_gap: f64,
    /// `|(1−α)·d − D|`.
    pub identity_residual: f64,
}

/// `(∫δ⁺ζ, ∫δ⁻ζ)`. Blocks lying inside one interval of `ζ` are counted and
/// weighted by `count/k`, so that aligned partitions reproduce `(1−α)∫ζ`
/// term by term.
fn plus_minus_integrals(zeta: &StepProcess, osc: &DeltaOscillator) -> (f64, f64) {
    let k = osc.k();
    let alpha = osc.alpha();
    let bp = zeta.breakpoints();
    let mut counts = vec![0usize; zeta.n_intervals()];
    let (mut plus, mut minus) = (0.0, 0.0);
    for i in 0..k {
        let a = i as f64 / k as f64;
        let b = (i + 1) as f64 / k as f64;
        if let Some(j) = (0..counts.len()).find(|&j| bp[j] <= a && b <= bp[j + 1]) {
            counts[j] += 1;
            continue;
        }
        for (j, &v) in zeta.values().iter().enumerate() {
            let lo = a.max(bp[j]);
            let hi = b.min(bp[j + 1]);
            if hi > lo {
                plus += v * osc.plus_measure(lo, hi);
                minus += v * osc.minus_measure(lo, hi);
            }
        }
    }
    for (j, &v) in zeta.values().iter().enumerate() {
        let share = counts[j] as f64 / k as f64;
        plus += v * alpha * share;
        minus += v * (1.0 - alpha) * share;
    }
    (plus, minus)
}

/// Quadrature gaps of Step 2 and the Step-4 identity for each `k`.
pub fn step2_limit_check(zeta: &StepProcess, alpha: f64, ks: &[usize]) -> Result<Vec<Step2Row>> {
    if (zeta.horizon() - 1.0).abs() > 1e-12 {
        return Err(GexpError::Usage(format!(
            "the oscillator lives on ]0, 1], step process ends at {}",
            zeta.horizon()
        )));
    }
    let target_terms: f64 = zeta
        .values()
        .iter()
        .zip(zeta.breakpoints().windows(2))
        .map(|(v, w)| v * (1.0 - alpha) * (w[1] - w[0]))
        .sum();
    ks.iter()
        .map(|&k| {
            let osc = DeltaOscillator::new(k, alpha)?;
            let (plus, minus) = plus_minus_integrals(zeta, &osc);
            let aligned = zeta
                .breakpoints()
                .iter()
                .all(|&s| (s * k as f64 - (s * k as f64).round()).abs() < 1e-9);
            let gap = (minus - target_terms).abs();
            let signed_gap = (plus - alpha / (1.0 - alpha) * minus).abs();
            Ok(Step2Row {
                k,
                aligned,
                minus_integral: minus,
                target: target_terms,
                gap,
                signed_gap,
                identity_residual: ((1.0 - alpha) * signed_gap - gap).abs(),
            })
        })
        .collect()
}

/// `max_i |∫_{i/k}^{(i+1)/k} (δ⁺ − α/(1−α)·δ⁻) ds|`.
pub fn block_identity_residual(k: usize, alpha: f64) -> Result<f64> {
    let osc = DeltaOscillator::new(k, alpha)?;
    Ok((0..k)
        .map(|i| {
            let a = i as f64 / k as f64;
            let b = (i + 1) as f64 / k as f64;
            (osc.plus_measure(a, b) - alpha / (1.0 - alpha) * osc.minus_measure(a, b)).abs()
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_zeta_has_zero_gap() {
        let one = StepProcess::constant(1.0, 1.0).unwrap();
        for row in step2_limit_check(&one, 0.25, &[1, 2, 3, 5, 7, 16]).unwrap() {
            assert_eq!(row.gap, 0.0, "k = {}", row.k);
        }
    }

    #[test]
    fn two_step_zeta() {
        let z = StepProcess::new(vec![0.0, 0.5, 1.0], vec![1.0, -1.0]).unwrap();
        let rows = step2_limit_check(&z, 0.25, &[1, 2, 3, 4, 5, 8]).unwrap();
        for r in &rows {
            if r.k % 2 == 0 {
                assert!(r.aligned);
                assert_eq!(r.gap, 0.0);
            } else {
                assert!(!r.aligned);
                assert!(r.gap > 0.0);
            }
            assert!(r.identity_residual < 1e-15);
        }
        assert!(rows[4].gap < rows[2].gap);
    }

    #[test]
    fn block_identity_is_machine_exact() {
        for k in [1, 2, 4, 8, 16] {
            assert!(block_identity_residual(k, 0.25).unwrap() < 1e-15);
        }
    }
}

//! `2ⁿm`-perturbations of self-dependent controls and the checks that they
//! leave the law of the block increments unchanged.

use std::sync::Arc;

use serde::Serialize;

use super::bundle::{derive_seed, SimulationSpec};
use super::estimate::{estimate_paths, McEstimate};
use crate::control::{ControlKind, ControlProcess, Perturbation, PerturbationSchedule};
use crate::error::{GexpError, Result};
use crate::tolerance::MC_SIGMAS;

/// Replaces the level of each sub-block by the schedule's sub-control on its
/// leading `α`-fraction and by the compensating constant on the rest.
///
/// Every block rule of `h` must map into `[σ̲² + ε, σ̄² − ε]` (in squares),
/// `ε = α(σ̄² − σ̲²)`, so that the compensating level stays in the band.
pub fn perturb_control(
    h: &ControlProcess,
    schedule: &PerturbationSchedule,
) -> Result<ControlProcess> {
    let ControlKind::SelfDependent { m, rules } = h.kind() else {
        return Err(GexpError::Usage(format!(
            "only self-dependent controls can be perturbed, got {}",
            h.label()
        )));
    };
    let band = h.band();
    if schedule.sub_control().band() != band {
        return Err(GexpError::Usage(
            "sub-control and base control use different bands".into(),
        ));
    }
    let eps = schedule.epsilon();
    let (band_lo, band_hi) = (band.var_lo() + eps, band.var_hi() - eps);
    for (block, rule) in rules.iter().enumerate() {
        let (lo, hi) = rule.range();
        let (level_sq_lo, level_sq_hi) = (lo * lo, hi * hi);
        let slack = 1e-12 * band.var_hi();
        if level_sq_lo < band_lo - slack || level_sq_hi > band_hi + slack {
            return Err(GexpError::BlockOutOfBand {
                block,
                level_sq_lo,
                level_sq_hi,
                band_lo,
                band_hi,
            });
        }
    }
    Ok(ControlProcess::perturbed(Perturbation {
        base: h.clone(),
        m: *m,
        schedule: schedule.clone(),
    }))
}

/// A bounded function of the increments of `B` over `blocks` equal blocks of `[0, T]`.
#[derive(Clone)]
pub struct BlockFunctional {
    blocks: usize,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    label: String,
}

impl std::fmt::Debug for BlockFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BlockFunctional({}, {} blocks)", self.label, self.blocks)
    }
}

impl BlockFunctional {
    pub fn new<F>(label: impl Into<String>, blocks: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if blocks == 0 {
            return Err(GexpError::Usage(
                "block functional needs at least one block".into(),
            ));
        }
        Ok(Self {
            blocks,
            f: Arc::new(f),
            label: label.into(),
        })
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Evaluates on the block increments of a path on a grid refining the blocks.
    pub fn eval_path(&self, b: &[f64]) -> Result<f64> {
        let n = b.len() - 1;
        if !n.is_multiple_of(self.blocks) {
            return Err(GexpError::Usage(format!(
                "{n} steps do not split into {} blocks",
                self.blocks
            )));
        }
        let w = n / self.blocks;
        let incr: Vec<f64> = (0..self.blocks)
            .map(|j| b[(j + 1) * w] - b[j * w])
            .collect();
        Ok((self.f)(&incr))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchStatus {
    Pass,
    Fail,
    /// The functional reads a finer grid than the blocks of the base control.
    OutOfScope,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchReport {
    pub functional: String,
    pub base: McEstimate,
    pub perturbed: McEstimate,
    pub diff: f64,
    pub combined_stderr: f64,
    pub status: MatchStatus,
}

impl MatchReport {
    pub fn pass(&self) -> bool {
        self.status == MatchStatus::Pass
    }
}

fn compare(
    h: &ControlProcess,
    h_tilde: &ControlProcess,
    psi: &BlockFunctional,
    spec: &SimulationSpec,
    in_scope: bool,
) -> Result<MatchReport> {
    let base = estimate_paths(h, &spec.with_seed(derive_seed(spec.seed, 1)), |p| {
        psi.eval_path(p.b)
    })?;
    let perturbed = estimate_paths(h_tilde, &spec.with_seed(derive_seed(spec.seed, 2)), |p| {
        psi.eval_path(p.b)
    })?;
    let diff = perturbed.mean - base.mean;
    let combined_stderr = base.stderr.hypot(perturbed.stderr);
    let status = if !in_scope {
        MatchStatus::OutOfScope
    } else if diff.abs() <= MC_SIGMAS * combined_stderr {
        MatchStatus::Pass
    } else {
        MatchStatus::Fail
    };
    Ok(MatchReport {
        functional: psi.label().to_string(),
        base,
        perturbed,
        diff,
        combined_stderr,
        status,
    })
}

/// Compares `E_{P_h}[ψ(B^m)]` with `E_{P_{h̃}}[ψ(B^m)]` on independent streams.
pub fn marginal_match_test(
    h: &ControlProcess,
    h_tilde: &ControlProcess,
    psi: &BlockFunctional,
    spec: &SimulationSpec,
) -> Result<MatchReport> {
    let m = h
        .self_dependent_steps()
        .ok_or_else(|| GexpError::Usage(format!("{} is not self-dependent", h.label())))?;
    let m_tilde = h_tilde
        .self_dependent_steps()
        .ok_or_else(|| GexpError::Usage(format!("{} is not self-dependent", h_tilde.label())))?;
    if m != m_tilde {
        return Err(GexpError::Usage(format!(
            "base has {m} blocks, perturbation has {m_tilde}"
        )));
    }
    compare(h, h_tilde, psi, spec, m % psi.blocks() == 0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRow {
    pub refinement: u32,
    /// Whether the functional reads a grid no finer than `2ⁿm` blocks.
    pub covered: bool,
    pub report: MatchReport,
}

/// Compares `h` with its `2ⁿm`-perturbations for `n = 0..=max_refinement`.
pub fn weak_convergence_probe(
    h: &ControlProcess,
    alpha: f64,
    sub_control: &ControlProcess,
    max_refinement: u32,
    psi: &BlockFunctional,
    spec: &SimulationSpec,
) -> Result<Vec<ProbeRow>> {
    let m = h
        .self_dependent_steps()
        .ok_or_else(|| GexpError::Usage(format!("{} is not self-dependent", h.label())))?;
    (0..=max_refinement)
        .map(|n| {
            let schedule = PerturbationSchedule::new(n, alpha, sub_control.clone())?;
            let h_n = perturb_control(h, &schedule)?;
            let covered = (m << n) % psi.blocks() == 0;
            let report = compare(h, &h_n, psi, spec, true)?;
            Ok(ProbeRow {
                refinement: n,
                covered,
                report,
            })
        })
        .collect()
}

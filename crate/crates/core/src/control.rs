//! Adapted volatility controls `h` with values in `[σ̲, σ̄]`.

use std::fmt;
use std::sync::Arc;

use crate::error::{GexpError, Result};
use crate::generator::GParams;
use crate::gheat::FeedbackField;
use crate::grid::TimeGrid;

pub type LevelRule = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type MarkovRule = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

const BAND_SLACK: f64 = 1e-12;

/// A level rule together with its declared range of attainable values.
#[derive(Clone)]
pub struct BoundedRule {
    rule: LevelRule,
    lo: f64,
    hi: f64,
}

impl fmt::Debug for BoundedRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BoundedRule[{}, {}]", self.lo, self.hi)
    }
}

impl BoundedRule {
    pub fn new<F>(lo: f64, hi: f64, rule: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(GexpError::Domain(format!(
                "invalid rule range [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            rule: Arc::new(rule),
            lo,
            hi,
        })
    }

    pub fn constant(level: f64) -> Self {
        Self {
            rule: Arc::new(move |_| level),
            lo: level,
            hi: level,
        }
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn eval(&self, args: &[f64]) -> Result<f64> {
        let v = (self.rule)(args);
        if !(v >= self.lo - BAND_SLACK && v <= self.hi + BAND_SLACK) {
            return Err(GexpError::Domain(format!(
                "rule produced {v} outside its declared range [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(v.clamp(self.lo, self.hi))
    }
}

/// What the simulator exposes to a control when choosing `h_k` on `]t_k, t_{k+1}]`.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    pub grid: &'a TimeGrid,
    pub step: usize,
    /// `B` at grid nodes `0..=step`.
    pub b: &'a [f64],
    /// Controls already applied on steps `0..step`.
    pub h: &'a [f64],
}

/// Refinement, `α` and sub-control of a `2ⁿm`-perturbation.
#[derive(Debug, Clone)]
pub struct PerturbationSchedule {
    refinement: u32,
    alpha: f64,
    sub_control: ControlProcess,
}

impl PerturbationSchedule {
    pub fn new(refinement: u32, alpha: f64, sub_control: ControlProcess) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(GexpError::Domain(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        if refinement > 20 {
            return Err(GexpError::Domain(format!(
                "refinement {refinement} is unreasonably deep"
            )));
        }
        Ok(Self {
            refinement,
            alpha,
            sub_control,
        })
    }

    /// `α = ε/(σ̄² − σ̲²)` for `ε ∈ (0, σ̄² − σ̲²)`.
    pub fn from_epsilon(refinement: u32, eps: f64, sub_control: ControlProcess) -> Result<Self> {
        let spread = sub_control.band().spread();
        if !(eps > 0.0 && eps < spread) {
            return Err(GexpError::Domain(format!(
                "epsilon must lie in (0, {spread}), got {eps}"
            )));
        }
        Self::new(refinement, eps / spread, sub_control)
    }

    pub fn refinement(&self) -> u32 {
        self.refinement
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sub_control(&self) -> &ControlProcess {
        &self.sub_control
    }

    /// `ε = α(σ̄² − σ̲²)`.
    pub fn epsilon(&self) -> f64 {
        self.alpha * self.sub_control.band().spread()
    }
}

/// Base self-dependent control plus the schedule that perturbs it.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub(crate) base: ControlProcess,
    pub(crate) m: usize,
    pub(crate) schedule: PerturbationSchedule,
}

impl Perturbation {
    pub fn base(&self) -> &ControlProcess {
        &self.base
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn schedule(&self) -> &PerturbationSchedule {
        &self.schedule
    }

    /// Number of sub-blocks `2ⁿm`.
    pub fn sub_blocks(&self) -> usize {
        self.m << self.schedule.refinement
    }
}

#[derive(Clone)]
pub enum ControlKind {
    Constant(f64),
    /// Rule `i` acts on `]tᵢ, tᵢ₊₁]` and reads the levels `B_{t₁}, …, B_{tᵢ}`.
    Step {
        partition: Vec<f64>,
        rules: Vec<BoundedRule>,
    },
    /// `m` equal blocks; rule `i` reads the `i` earlier block increments of
    /// `B`, in chronological order.
    SelfDependent {
        m: usize,
        rules: Vec<BoundedRule>,
    },
    /// `h = rule(t, B_t)`.
    Markov {
        rule: MarkovRule,
        lo: f64,
        hi: f64,
    },
    /// Bang-bang selector on the curvature of a value surface.
    Feedback(Arc<FeedbackField>),
    Perturbed(Arc<Perturbation>),
}

impl fmt::Debug for ControlKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(s) => f.debug_tuple("Constant").field(s).finish(),
            Self::Step { partition, rules } => f
                .debug_struct("Step")
                .field("partition", partition)
                .field("rules", rules)
                .finish(),
            Self::SelfDependent { m, rules } => f
                .debug_struct("SelfDependent")
                .field("m", m)
                .field("rules", rules)
                .finish(),
            Self::Markov { lo, hi, .. } => f
                .debug_struct("Markov")
                .field("lo", lo)
                .field("hi", hi)
                .finish(),
            Self::Feedback(_) => f.write_str("Feedback"),
            Self::Perturbed(p) => f.debug_tuple("Perturbed").field(p).finish(),
        }
    }
}

/// An adapted volatility process bound to a band.
#[derive(Debug, Clone)]
pub struct ControlProcess {
    kind: ControlKind,
    band: GParams,
    label: String,
}

fn check_range(band: &GParams, lo: f64, hi: f64) -> Result<()> {
    if lo < band.sigma_lo() - BAND_SLACK || hi > band.sigma_hi() + BAND_SLACK {
        return Err(GexpError::Domain(format!(
            "control levels [{lo}, {hi}] leave the band [{}, {}]",
            band.sigma_lo(),
            band.sigma_hi()
        )));
    }
    Ok(())
}

impl ControlProcess {
    pub fn constant(band: GParams, sigma: f64) -> Result<Self> {
        check_range(&band, sigma, sigma)?;
        Ok(Self {
            kind: ControlKind::Constant(sigma),
            band,
            label: format!("const({sigma})"),
        })
    }

    pub fn lower(band: GParams) -> Self {
        Self::constant(band, band.sigma_lo()).expect("σ̲ lies in its own band")
    }

    pub fn upper(band: GParams) -> Self {
        Self::constant(band, band.sigma_hi()).expect("σ̄ lies in its own band")
    }

    pub fn step(band: GParams, partition: Vec<f64>, rules: Vec<BoundedRule>) -> Result<Self> {
        if partition.len() < 2 || partition[0] != 0.0 {
            return Err(GexpError::Usage(
                "step partition must start at 0 and have an end".into(),
            ));
        }
        if partition.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GexpError::Usage(
                "step partition must be strictly increasing".into(),
            ));
        }
        if rules.len() + 1 != partition.len() {
            return Err(GexpError::Usage(format!(
                "{} intervals need {} rules, got {}",
                partition.len() - 1,
                partition.len() - 1,
                rules.len()
            )));
        }
        for r in &rules {
            let (lo, hi) = r.range();
            check_range(&band, lo, hi)?;
        }
        Ok(Self {
            kind: ControlKind::Step { partition, rules },
            band,
            label: "step".into(),
        })
    }

    pub fn self_dependent(band: GParams, rules: Vec<BoundedRule>) -> Result<Self> {
        if rules.is_empty() {
            return Err(GexpError::Usage(
                "self-dependent control needs m ≥ 1 rules".into(),
            ));
        }
        for r in &rules {
            let (lo, hi) = r.range();
            check_range(&band, lo, hi)?;
        }
        let m = rules.len();
        Ok(Self {
            kind: ControlKind::SelfDependent { m, rules },
            band,
            label: format!("self-dependent({m})"),
        })
    }

    pub fn markov<F>(band: GParams, lo: f64, hi: f64, rule: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        check_range(&band, lo, hi)?;
        Ok(Self {
            kind: ControlKind::Markov {
                rule: Arc::new(rule),
                lo,
                hi,
            },
            band,
            label: "markov".into(),
        })
    }

    /// `h_t = σ̄` if `B_t ≥ 0`, else `σ̲`.
    pub fn bang_bang_on_level(band: GParams) -> Self {
        let b = band;
        Self::markov(band, band.sigma_lo(), band.sigma_hi(), move |_, x| {
            b.sign_vol(x)
        })
        .expect("sign_vol stays in band")
        .with_label("bang-bang(B)")
    }

    pub fn feedback(field: Arc<FeedbackField>) -> Self {
        Self {
            band: *field.band(),
            kind: ControlKind::Feedback(field),
            label: "feedback".into(),
        }
    }

    pub(crate) fn perturbed(p: Perturbation) -> Self {
        let label = format!(
            "perturbed({}, n={}, alpha={})",
            p.base.label, p.schedule.refinement, p.schedule.alpha
        );
        Self {
            band: p.base.band,
            kind: ControlKind::Perturbed(Arc::new(p)),
            label,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn band(&self) -> &GParams {
        &self.band
    }

    pub fn kind(&self) -> &ControlKind {
        &self.kind
    }

    /// Number of blocks of a self-dependent control (or of a perturbation's base).
    pub fn self_dependent_steps(&self) -> Option<usize> {
        match &self.kind {
            ControlKind::SelfDependent { m, .. } => Some(*m),
            ControlKind::Perturbed(p) => Some(p.m),
            _ => None,
        }
    }

    /// Checks that every time the control reads lies on `grid`.
    pub fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        let n = grid.n_steps();
        match &self.kind {
            ControlKind::Constant(_) | ControlKind::Markov { .. } => Ok(()),
            ControlKind::Step { partition, .. } => {
                let end = *partition.last().unwrap();
                if (end - grid.end()).abs() > 1e-9 * grid.horizon() || grid.start() != 0.0 {
                    return Err(GexpError::Usage(format!(
                        "step control ends at {end}, simulation grid at {}",
                        grid.end()
                    )));
                }
                for &t in partition {
                    if grid.index_of(t).is_none() {
                        return Err(GexpError::Usage(format!(
                            "step control breakpoint {t} is not a simulation grid node"
                        )));
                    }
                }
                Ok(())
            }
            ControlKind::SelfDependent { m, .. } => {
                if !n.is_multiple_of(*m) {
                    return Err(GexpError::Usage(format!(
                        "{n} simulation steps do not split into {m} blocks"
                    )));
                }
                Ok(())
            }
            ControlKind::Feedback(field) => {
                let fg = field.time_grid();
                if grid.start() < fg.start() - 1e-12 || grid.end() > fg.end() + 1e-9 * fg.horizon()
                {
                    return Err(GexpError::Extrapolation(format!(
                        "feedback surface covers [{}, {}], simulation runs on [{}, {}]",
                        fg.start(),
                        fg.end(),
                        grid.start(),
                        grid.end()
                    )));
                }
                Ok(())
            }
            ControlKind::Perturbed(p) => {
                p.base.check_grid(grid)?;
                p.schedule.sub_control.check_grid(grid)?;
                let blocks = p.sub_blocks();
                if !n.is_multiple_of(blocks) {
                    return Err(GexpError::Usage(format!(
                        "{n} simulation steps do not split into {blocks} sub-blocks"
                    )));
                }
                let per_block = n / blocks;
                let alpha_steps = p.schedule.alpha * per_block as f64;
                if (alpha_steps - alpha_steps.round()).abs() > 1e-9 || alpha_steps.round() < 1.0 {
                    return Err(GexpError::Usage(format!(
                        "alpha = {} does not align with {per_block} steps per sub-block",
                        p.schedule.alpha
                    )));
                }
                if alpha_steps.round() as usize >= per_block {
                    return Err(GexpError::Usage(
                        "alpha-piece fills the whole sub-block".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// The level `h_k` applied on `]t_k, t_{k+1}]`, using only `B` up to `t_k`.
    pub fn level(&self, view: &PathView<'_>) -> Result<f64> {
        let k = view.step;
        let n = view.grid.n_steps();
        let h = match &self.kind {
            ControlKind::Constant(s) => *s,
            ControlKind::Step { partition, rules } => {
                let t = view.grid.time(k);
                let i = partition[1..]
                    .iter()
                    .take_while(|&&p| p <= t + 1e-12 * view.grid.horizon())
                    .count()
                    .min(rules.len() - 1);
                let mut levels = Vec::with_capacity(i);
                for &p in &partition[1..=i] {
                    let idx = view.grid.index_of(p).ok_or_else(|| {
                        GexpError::Usage(format!("breakpoint {p} is off the simulation grid"))
                    })?;
                    levels.push(view.b[idx]);
                }
                rules[i].eval(&levels)?
            }
            ControlKind::SelfDependent { m, rules } => {
                let per_block = n / m;
                let i = k / per_block;
                let incr: Vec<f64> = (0..i)
                    .map(|j| view.b[(j + 1) * per_block] - view.b[j * per_block])
                    .collect();
                rules[i].eval(&incr)?
            }
            ControlKind::Markov { rule, lo, hi } => {
                let v = rule(view.grid.time(k), view.b[k]);
                if !(v >= lo - BAND_SLACK && v <= hi + BAND_SLACK) {
                    return Err(GexpError::Domain(format!(
                        "markov rule produced {v} outside [{lo}, {hi}]"
                    )));
                }
                v.clamp(*lo, *hi)
            }
            ControlKind::Feedback(field) => field.level(view.grid.time(k), view.b[k])?,
            ControlKind::Perturbed(p) => perturbed_level(p, view)?,
        };
        Ok(h)
    }
}

fn perturbed_level(p: &Perturbation, view: &PathView<'_>) -> Result<f64> {
    let n = view.grid.n_steps();
    let per_block = n / p.sub_blocks();
    let alpha_steps = (p.schedule.alpha * per_block as f64).round() as usize;
    let k = view.step;
    let block_start = (k / per_block) * per_block;
    let offset = k - block_start;
    if offset < alpha_steps {
        return p.schedule.sub_control.level(view);
    }
    let base = p.base.level(view)?;
    let alpha_sq_sum: f64 = view.h[block_start..block_start + alpha_steps]
        .iter()
        .map(|h| h * h)
        .sum();
    let level_sq =
        (base * base * per_block as f64 - alpha_sq_sum) / (per_block - alpha_steps) as f64;
    let band = &p.base.band;
    let (lo, hi) = (band.var_lo(), band.var_hi());
    if !(level_sq >= lo * (1.0 - 1e-10) && level_sq <= hi * (1.0 + 1e-10)) {
        return Err(GexpError::Numeric(format!(
            "compensating level² {level_sq} left [{lo}, {hi}] at step {k}"
        )));
    }
    Ok(level_sq
        .clamp(lo, hi)
        .sqrt()
        .clamp(band.sigma_lo(), band.sigma_hi()))
}

/// Level on the remaining `(1−α)`-part of a sub-block that restores the
/// block's integrated variance: `√((|ξ|² − α·m̄)/(1−α))`, where `m̄` is the
/// mean of `|h|²` over the `α`-piece.
pub fn compensating_level(base_level_sq: f64, alpha: f64, alpha_piece_mean_sq: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(GexpError::Domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let v = (base_level_sq - alpha * alpha_piece_mean_sq) / (1.0 - alpha);
    if v < 0.0 {
        return Err(GexpError::Domain(format!(
            "compensating variance {v} is negative"
        )));
    }
    Ok(v.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band() -> GParams {
        GParams::from_variances(1.0, 4.0).unwrap()
    }

    #[test]
    fn constructors_enforce_band() {
        assert!(ControlProcess::constant(band(), 2.5).is_err());
        assert!(ControlProcess::constant(band(), 1.5).is_ok());
        let wide = BoundedRule::new(0.5, 2.0, |_| 1.0).unwrap();
        assert!(ControlProcess::self_dependent(band(), vec![wide]).is_err());
        assert!(ControlProcess::step(band(), vec![0.0, 1.0], vec![]).is_err());
    }

    #[test]
    fn compensating_level_example() {
        let v = compensating_level(2.0, 0.25, 1.0).unwrap();
        assert!((v - (1.75f64 / 0.75).sqrt()).abs() < 1e-15);
        assert!((v - 1.5275).abs() < 1e-4);
    }

    #[test]
    fn self_dependent_reads_block_increments() {
        let rules = vec![
            BoundedRule::constant(1.5),
            BoundedRule::new(1.0, 2.0, |inc: &[f64]| if inc[0] > 0.0 { 2.0 } else { 1.0 }).unwrap(),
        ];
        let c = ControlProcess::self_dependent(band(), rules).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        c.check_grid(&grid).unwrap();
        let b = [0.0, 0.1, 0.3, 0.2, 0.0];
        let h = [1.5, 1.5, 2.0, 2.0];
        let view = |step| PathView {
            grid: &grid,
            step,
            b: &b[..=step],
            h: &h[..step],
        };
        assert_eq!(c.level(&view(0)).unwrap(), 1.5);
        assert_eq!(c.level(&view(1)).unwrap(), 1.5);
        assert_eq!(c.level(&view(2)).unwrap(), 2.0);
        assert!(c.check_grid(&TimeGrid::new(1.0, 3).unwrap()).is_err());
    }

    #[test]
    fn rule_outside_declared_range_is_reported() {
        let r = BoundedRule::new(1.0, 1.5, |_| 1.9).unwrap();
        assert!(matches!(r.eval(&[]), Err(GexpError::Domain(_))));
    }

    #[test]
    fn schedule_from_epsilon() {
        let s = PerturbationSchedule::from_epsilon(1, 0.75, ControlProcess::lower(band())).unwrap();
        assert!((s.alpha() - 0.25).abs() < 1e-15);
        assert!((s.epsilon() - 0.75).abs() < 1e-15);
        assert!(PerturbationSchedule::from_epsilon(1, 3.0, ControlProcess::lower(band())).is_err());
        assert!(PerturbationSchedule::new(1, 1.0, ControlProcess::lower(band())).is_err());
    }
}

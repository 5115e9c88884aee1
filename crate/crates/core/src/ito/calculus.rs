//! Left-point stochastic integrals, dyadic quadratic variation and `K(ς)`.

use std::sync::Arc;

use crate::error::{GexpError, Result};
use crate::generator::GParams;
use crate::grid::TimeGrid;
use crate::mc::PathRef;

/// Deterministic step function with value `values[i]` on `[s_i, s_{i+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepProcess {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl StepProcess {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 || values.len() + 1 != breakpoints.len() {
            return Err(GexpError::Usage(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len().saturating_sub(1),
                values.len()
            )));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) || breakpoints[0] != 0.0 {
            return Err(GexpError::Usage(
                "breakpoints must start at 0 and increase".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GexpError::Data("step values must be finite".into()));
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    pub fn constant(horizon: f64, value: f64) -> Result<Self> {
        Self::new(vec![0.0, horizon], vec![value])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn n_intervals(&self) -> usize {
        self.values.len()
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let i = self.breakpoints[1..]
            .iter()
            .take_while(|&&b| b <= t)
            .count();
        self.values[i.min(self.values.len() - 1)]
    }

    /// Left-point samples `η(t_k)`, `k = 0..n_steps`.
    pub fn sample(&self, grid: &TimeGrid) -> Vec<f64> {
        (0..grid.n_steps())
            .map(|k| self.value_at(grid.time(k)))
            .collect()
    }

    pub fn integral(&self) -> f64 {
        self.values
            .iter()
            .zip(self.breakpoints.windows(2))
            .map(|(v, w)| v * (w[1] - w[0]))
            .sum()
    }
}

/// `∫ integrand dB` by left-point sums; `integrand[k]` acts on `]t_k, t_{k+1}]`.
pub fn stochastic_integral(integrand: &[f64], driver: &[f64]) -> Result<Vec<f64>> {
    let n = driver
        .len()
        .checked_sub(1)
        .ok_or_else(|| GexpError::Usage("empty driver path".into()))?;
    if integrand.len() != n && integrand.len() != n + 1 {
        return Err(GexpError::Usage(format!(
            "integrand has {} values, driver has {n} steps",
            integrand.len()
        )));
    }
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(acc);
    for k in 0..n {
        acc += integrand[k] * (driver[k + 1] - driver[k]);
        out.push(acc);
    }
    Ok(out)
}

fn dyadic_width(steps: usize, level: u32) -> Result<usize> {
    let blocks = 1usize.checked_shl(level).filter(|&b| b > 0 && b <= steps);
    match blocks {
        Some(b) if steps.is_multiple_of(b) => Ok(steps / b),
        _ => Err(GexpError::Usage(format!(
            "2^{level} dyadic blocks do not divide the {steps}-step grid"
        ))),
    }
}

/// `Qⁿ_t = Σ_j (B_{t_{j+1}∧t} − B_{t_j∧t})²` at every grid node, `t_j = jT/2ⁿ`.
pub fn qn_quadratic_variation(b: &[f64], level: u32) -> Result<Vec<f64>> {
    let n = b.len().saturating_sub(1);
    let w = dyadic_width(n, level)?;
    let mut out = Vec::with_capacity(n + 1);
    let mut closed = 0.0;
    for k in 0..=n {
        let j = k / w;
        if k % w == 0 && k > 0 {
            closed += (b[k] - b[k - w]).powi(2);
        }
        let partial = if k % w == 0 {
            0.0
        } else {
            (b[k] - b[j * w]).powi(2)
        };
        out.push(closed + partial);
    }
    Ok(out)
}

/// `λⁿ_t = 2(B_t − B_{t_j})` on `]t_j, t_{j+1}]`, sampled at left points.
pub fn lambda_n(b: &[f64], level: u32) -> Result<Vec<f64>> {
    let n = b.len().saturating_sub(1);
    let w = dyadic_width(n, level)?;
    Ok((0..n).map(|k| 2.0 * (b[k] - b[(k / w) * w])).collect())
}

/// Running `Σ (ΔB)²` over simulation steps.
pub fn realized_bracket(b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(b.len());
    let mut acc = 0.0;
    out.push(acc);
    for w in b.windows(2) {
        acc += (w[1] - w[0]).powi(2);
        out.push(acc);
    }
    out
}

/// Largest gaps of `Qⁿ − ∫λⁿ dB` against the realized bracket `Σ(ΔB)²` and
/// against the recorded `⟨B⟩ = ∫h² ds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QnIdentityGap {
    pub vs_realized: f64,
    pub vs_qv: f64,
}

pub fn qn_identity_gap(path: &PathRef<'_>, level: u32) -> Result<QnIdentityGap> {
    let q = qn_quadratic_variation(path.b, level)?;
    let lam = lambda_n(path.b, level)?;
    let integral = stochastic_integral(&lam, path.b)?;
    let bracket = realized_bracket(path.b);
    let mut gap = QnIdentityGap {
        vs_realized: 0.0,
        vs_qv: 0.0,
    };
    for k in 0..q.len() {
        let rest = q[k] - integral[k];
        gap.vs_realized = gap.vs_realized.max((rest - bracket[k]).abs());
        gap.vs_qv = gap.vs_qv.max((rest - path.qv[k]).abs());
    }
    Ok(gap)
}

/// `K(ς)_t = ∫ς d⟨B⟩ − ∫2G(ς) ds` along one path; `varsigma[k]` acts on `]t_k, t_{k+1}]`.
///
/// Each increment is `ς·h²·dt − 2G(ς)·dt`, written so that `h ∈ [σ̲, σ̄]`
/// makes it non-positive in floating point as well.
pub fn k_process(varsigma: &[f64], path: &PathRef<'_>, band: &GParams) -> Result<Vec<f64>> {
    let n = path.h.len();
    if varsigma.len() != n {
        return Err(GexpError::Usage(format!(
            "integrand has {} values, path has {n} steps",
            varsigma.len()
        )));
    }
    let dt = path.grid.dt();
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(acc);
    for k in 0..n {
        let s = varsigma[k];
        let h = path.h[k];
        acc += (s * (h * h)) * dt - (2.0 * band.g_value(s)) * dt;
        out.push(acc);
    }
    Ok(out)
}

/// Fills `out[k]` with `X_{t_k}` for a path; `out` has `n_steps + 1` slots.
pub type PathFn = Arc<dyn Fn(&PathRef<'_>, &mut [f64]) -> Result<()> + Send + Sync>;

/// A process evaluable on any simulated path.
#[derive(Clone)]
pub struct PathProcess {
    label: String,
    f: PathFn,
}

impl std::fmt::Debug for PathProcess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PathProcess({})", self.label)
    }
}

impl PathProcess {
    pub fn new<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&PathRef<'_>, &mut [f64]) -> Result<()> + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, path: &PathRef<'_>, out: &mut [f64]) -> Result<()> {
        (self.f)(path, out)
    }

    /// `B` itself.
    pub fn level() -> Self {
        Self::new("B", |p, out| {
            out.copy_from_slice(p.b);
            Ok(())
        })
    }

    /// `X_t = c·t`.
    pub fn drift(c: f64) -> Self {
        Self::new(format!("{c}*t"), move |p, out| {
            for (k, o) in out.iter_mut().enumerate() {
                *o = c * p.grid.time(k);
            }
            Ok(())
        })
    }

    /// `K(ς)` for a deterministic step `ς`.
    pub fn k_of(varsigma: StepProcess, band: GParams) -> Self {
        let label = format!("K(varsigma={:?})", varsigma.values());
        Self::new(label, move |p, out| {
            let v = k_process(&varsigma.sample(p.grid), p, &band)?;
            out.copy_from_slice(&v);
            Ok(())
        })
    }

    /// `∫η d⟨B⟩` for a deterministic step `η`.
    pub fn bracket_integral(eta: StepProcess) -> Self {
        let label = format!("int eta d<B> (eta={:?})", eta.values());
        Self::new(label, move |p, out| {
            let eta = eta.sample(p.grid);
            out[0] = 0.0;
            for k in 0..eta.len() {
                out[k + 1] = out[k] + eta[k] * (p.qv[k + 1] - p.qv[k]);
            }
            Ok(())
        })
    }
}

//! The sublinear generator `G`, its shrunk variant `G_ε`, the bang-bang
//! volatility selector and the `δ_{k,α}` oscillator.

use serde::{Deserialize, Serialize};

use crate::error::{GexpError, Result};

/// Volatility band `[σ̲, σ̄]` defining `G(a) = ½(σ̄²a⁺ − σ̲²a⁻)`.
///
/// Stored as volatilities; variances are derived on demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GParams {
    sigma_lo: f64,
    sigma_hi: f64,
}

impl GParams {
    pub fn new(sigma_lo: f64, sigma_hi: f64) -> Result<Self> {
        if !(sigma_lo.is_finite() && sigma_hi.is_finite()) {
            return Err(GexpError::Domain(format!(
                "volatility band must be finite, got [{sigma_lo}, {sigma_hi}]"
            )));
        }
        if sigma_lo <= 0.0 {
            return Err(GexpError::Domain(format!(
                "sigma_lo must be positive, got {sigma_lo}"
            )));
        }
        if sigma_lo > sigma_hi {
            return Err(GexpError::Domain(format!(
                "sigma_lo {sigma_lo} exceeds sigma_hi {sigma_hi}"
            )));
        }
        Ok(Self { sigma_lo, sigma_hi })
    }

    /// Builds the band from the variances `σ̲²`, `σ̄²`.
    pub fn from_variances(var_lo: f64, var_hi: f64) -> Result<Self> {
        if var_lo < 0.0 || var_hi < 0.0 {
            return Err(GexpError::Domain(format!(
                "variances must be non-negative, got [{var_lo}, {var_hi}]"
            )));
        }
        Self::new(var_lo.sqrt(), var_hi.sqrt())
    }

    pub fn sigma_lo(&self) -> f64 {
        self.sigma_lo
    }

    pub fn sigma_hi(&self) -> f64 {
        self.sigma_hi
    }

    pub fn var_lo(&self) -> f64 {
        self.sigma_lo * self.sigma_lo
    }

    pub fn var_hi(&self) -> f64 {
        self.sigma_hi * self.sigma_hi
    }

    /// `σ̄² − σ̲²`.
    pub fn spread(&self) -> f64 {
        self.var_hi() - self.var_lo()
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma_lo == self.sigma_hi
    }

    pub fn contains(&self, sigma: f64) -> bool {
        sigma >= self.sigma_lo && sigma <= self.sigma_hi
    }

    /// `G(a) = ½(σ̄²a⁺ − σ̲²a⁻)`.
    pub fn g_value(&self, a: f64) -> f64 {
        0.5 * (self.var_hi() * a.max(0.0) - self.var_lo() * (-a).max(0.0))
    }

    /// `G_ε(a) = G(a) − (ε/2)|a|` for `0 ≤ ε ≤ (σ̄² − σ̲²)/2`.
    pub fn g_eps_value(&self, eps: f64, a: f64) -> Result<f64> {
        let max_eps = 0.5 * self.spread();
        if !(0.0..=max_eps).contains(&eps) {
            return Err(GexpError::Domain(format!(
                "eps must lie in [0, {max_eps}], got {eps}"
            )));
        }
        Ok(self.g_value(a) - 0.5 * eps * a.abs())
    }

    /// Bang-bang selector: `σ̄` where `a ≥ 0`, `σ̲` where `a < 0`.
    pub fn sign_vol(&self, a: f64) -> f64 {
        if a >= 0.0 {
            self.sigma_hi
        } else {
            self.sigma_lo
        }
    }
}

/// The oscillator `δ_{k,α}` on `]0, 1]`: `+1` on the leading `α`-fraction of
/// each of the `k` subintervals `]i/k, (i+1)/k]` and `−1` on the rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaOscillator {
    k: usize,
    alpha: f64,
}

impl DeltaOscillator {
    pub fn new(k: usize, alpha: f64) -> Result<Self> {
        if k == 0 {
            return Err(GexpError::Domain("k must be at least 1".into()));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(GexpError::Domain(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        Ok(Self { k, alpha })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn value(&self, s: f64) -> Result<i8> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(GexpError::Domain(format!(
                "delta_kalpha is defined on ]0, 1], got s = {s}"
            )));
        }
        let scaled = s * self.k as f64;
        let block = (scaled.ceil() as usize).clamp(1, self.k) - 1;
        let offset = scaled - block as f64;
        Ok(if offset <= self.alpha { 1 } else { -1 })
    }

    /// Lebesgue measure of `{s ∈ ]a, b] : δ(s) = +1}` (the integral of `δ⁺`).
    pub fn plus_measure(&self, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        let b = b.min(1.0);
        if b <= a {
            return 0.0;
        }
        let k = self.k as f64;
        let first = ((a * k).floor() as usize).min(self.k - 1);
        let last = ((b * k).ceil() as usize).clamp(1, self.k);
        (first..last)
            .map(|i| {
                let lo = i as f64 / k;
                let hi = (i as f64 + self.alpha) / k;
                (hi.min(b) - lo.max(a)).max(0.0)
            })
            .sum()
    }

    /// Lebesgue measure of `{s ∈ ]a, b] : δ(s) = −1}` (the integral of `δ⁻`).
    pub fn minus_measure(&self, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        let b = b.min(1.0);
        if b <= a {
            return 0.0;
        }
        let k = self.k as f64;
        let first = ((a * k).floor() as usize).min(self.k - 1);
        let last = ((b * k).ceil() as usize).clamp(1, self.k);
        (first..last)
            .map(|i| {
                let lo = (i as f64 + self.alpha) / k;
                let hi = (i as f64 + 1.0) / k;
                (hi.min(b) - lo.max(a)).max(0.0)
            })
            .sum()
    }
}

/// `δ_{k,α}(s)` as a free function.
pub fn delta_kalpha(k: usize, alpha: f64, s: f64) -> Result<i8> {
    DeltaOscillator::new(k, alpha)?.value(s)
}

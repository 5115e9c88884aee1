//! Cylinder functionals `ξ = φ(B_{t₁}, …, B_{tₙ})`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GexpError, Result};

pub type PayoffFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Whether a payoff reads path levels `ω(tᵢ)` or increments `ω(tᵢ) − ω(tᵢ₋₁)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayoffConvention {
    Levels,
    Increments,
}

const SAMPLE_RADIUS: f64 = 8.0;
const SAMPLE_COUNT: usize = 128;
const SAMPLE_SEED: u64 = 0x5eed_c11d;

/// A payoff of the path at finitely many times, with declared bounds.
///
/// Infinite bounds mark payoffs of polynomial growth (such as `B_T²`); finite
/// bounds are spot-checked on random points at construction.
#[derive(Clone)]
pub struct CylinderFunctional {
    times: Vec<f64>,
    payoff: PayoffFn,
    convention: PayoffConvention,
    lipschitz_bound: f64,
    value_bound: f64,
}

impl fmt::Debug for CylinderFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CylinderFunctional")
            .field("times", &self.times)
            .field("convention", &self.convention)
            .field("lipschitz_bound", &self.lipschitz_bound)
            .field("value_bound", &self.value_bound)
            .finish()
    }
}

impl CylinderFunctional {
    pub fn new<F>(
        times: Vec<f64>,
        convention: PayoffConvention,
        payoff: F,
        lipschitz_bound: f64,
        value_bound: f64,
    ) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::from_arc(
            times,
            convention,
            Arc::new(payoff),
            lipschitz_bound,
            value_bound,
        )
    }

    pub fn from_arc(
        times: Vec<f64>,
        convention: PayoffConvention,
        payoff: PayoffFn,
        lipschitz_bound: f64,
        value_bound: f64,
    ) -> Result<Self> {
        if times.is_empty() {
            return Err(GexpError::Usage(
                "cylinder functional needs at least one time".into(),
            ));
        }
        if !times.iter().all(|t| t.is_finite()) || times[0] <= 0.0 {
            return Err(GexpError::Usage(format!(
                "cylinder times must be finite and positive, got {times:?}"
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GexpError::Usage(format!(
                "cylinder times must be strictly increasing, got {times:?}"
            )));
        }
        if lipschitz_bound.is_nan()
            || lipschitz_bound < 0.0
            || value_bound.is_nan()
            || value_bound < 0.0
        {
            return Err(GexpError::Domain(
                "payoff bounds must be non-negative".into(),
            ));
        }
        let xi = Self {
            times,
            payoff,
            convention,
            lipschitz_bound,
            value_bound,
        };
        xi.spot_check()?;
        Ok(xi)
    }

    /// `ξ = φ(B_T)`.
    pub fn terminal<F>(
        horizon: f64,
        payoff: F,
        lipschitz_bound: f64,
        value_bound: f64,
    ) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(
            vec![horizon],
            PayoffConvention::Levels,
            move |x: &[f64]| payoff(x[0]),
            lipschitz_bound,
            value_bound,
        )
    }

    pub fn constant(horizon: f64, c: f64) -> Result<Self> {
        Self::terminal(horizon, move |_| c, 0.0, c.abs())
    }

    fn spot_check(&self) -> Result<()> {
        let check_value = self.value_bound.is_finite();
        let check_lip = self.lipschitz_bound.is_finite();
        if !check_value && !check_lip {
            return Ok(());
        }
        let n = self.times.len();
        let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        for _ in 0..SAMPLE_COUNT {
            for i in 0..n {
                a[i] = rng.random_range(-SAMPLE_RADIUS..SAMPLE_RADIUS);
                b[i] = if rng.random_bool(0.5) {
                    a[i] + rng.random_range(-0.5..0.5)
                } else {
                    rng.random_range(-SAMPLE_RADIUS..SAMPLE_RADIUS)
                };
            }
            let fa = self.eval_native(&a);
            let fb = self.eval_native(&b);
            if !(fa.is_finite() && fb.is_finite()) {
                return Err(GexpError::Data(format!("payoff is not finite at {a:?}")));
            }
            if check_value && fa.abs() > self.value_bound * (1.0 + 1e-12) + 1e-12 {
                return Err(GexpError::Domain(format!(
                    "payoff value {fa} at {a:?} exceeds declared bound {}",
                    self.value_bound
                )));
            }
            if check_lip {
                let dist: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
                if (fa - fb).abs() > self.lipschitz_bound * dist * (1.0 + 1e-9) + 1e-12 {
                    return Err(GexpError::Domain(format!(
                        "payoff violates declared Lipschitz bound {} between {a:?} and {b:?}",
                        self.lipschitz_bound
                    )));
                }
            }
        }
        Ok(())
    }

    fn eval_native(&self, args: &[f64]) -> f64 {
        (self.payoff)(args)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn convention(&self) -> PayoffConvention {
        self.convention
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn value_bound(&self) -> f64 {
        self.value_bound
    }

    /// Evaluates the payoff at path levels `ω(t₁), …, ω(tₙ)`.
    pub fn eval_levels(&self, levels: &[f64]) -> f64 {
        debug_assert_eq!(levels.len(), self.times.len());
        match self.convention {
            PayoffConvention::Levels => (self.payoff)(levels),
            PayoffConvention::Increments => {
                let mut incr = Vec::with_capacity(levels.len());
                let mut prev = 0.0;
                for &x in levels {
                    incr.push(x - prev);
                    prev = x;
                }
                (self.payoff)(&incr)
            }
        }
    }

    /// The functional `g(ξ)` on the same times, expressed in levels.
    pub fn map<G>(&self, g: G, lipschitz_bound: f64, value_bound: f64) -> Result<Self>
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let inner = self.clone();
        Self::new(
            self.times.clone(),
            PayoffConvention::Levels,
            move |x: &[f64]| g(inner.eval_levels(x)),
            lipschitz_bound,
            value_bound,
        )
    }

    /// `λ·ξ`.
    pub fn scale(&self, lambda: f64) -> Result<Self> {
        self.map(
            move |v| lambda * v,
            lambda.abs() * self.lipschitz_bound,
            lambda.abs() * self.value_bound,
        )
    }

    /// `ξ + c`.
    pub fn shift(&self, c: f64) -> Result<Self> {
        self.map(
            move |v| v + c,
            self.lipschitz_bound,
            self.value_bound + c.abs(),
        )
    }

    /// `ξ + η` for functionals on the same times.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.times != other.times {
            return Err(GexpError::Usage(
                "sum of functionals needs a common partition".into(),
            ));
        }
        let (a, b) = (self.clone(), other.clone());
        Self::new(
            self.times.clone(),
            PayoffConvention::Levels,
            move |x: &[f64]| a.eval_levels(x) + b.eval_levels(x),
            self.lipschitz_bound + other.lipschitz_bound,
            self.value_bound + other.value_bound,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn increments_are_converted_to_levels() {
        let xi = CylinderFunctional::new(
            vec![0.5, 1.0],
            PayoffConvention::Increments,
            |d: &[f64]| d[1],
            1.0,
            f64::INFINITY,
        )
        .unwrap();
        assert_eq!(xi.eval_levels(&[0.3, 1.0]), 0.7);
    }

    #[test]
    fn rejects_bad_times() {
        let f = |_: &[f64]| 0.0;
        assert!(
            CylinderFunctional::new(vec![0.5, 0.5], PayoffConvention::Levels, f, 0.0, 0.0).is_err()
        );
        assert!(CylinderFunctional::new(vec![0.0], PayoffConvention::Levels, f, 0.0, 0.0).is_err());
        assert!(CylinderFunctional::new(vec![], PayoffConvention::Levels, f, 0.0, 0.0).is_err());
    }

    #[test]
    fn spot_check_catches_wrong_bounds() {
        let err = CylinderFunctional::terminal(1.0, |x| x.sin() * 3.0, 3.0, 1.0);
        assert!(matches!(err, Err(GexpError::Domain(_))));
        let err = CylinderFunctional::terminal(1.0, |x| (3.0 * x).sin(), 1.0, 1.0);
        assert!(matches!(err, Err(GexpError::Domain(_))));
        assert!(CylinderFunctional::terminal(1.0, |x| (3.0 * x).sin(), 3.0, 1.0).is_ok());
        let err = CylinderFunctional::terminal(1.0, |_| f64::NAN, 1.0, 1.0);
        assert!(matches!(err, Err(GexpError::Data(_))));
    }

    #[test]
    fn combinators() {
        let xi = CylinderFunctional::terminal(1.0, |x| x.clamp(-1.0, 1.0), 1.0, 1.0).unwrap();
        assert_eq!(xi.scale(-2.0).unwrap().eval_levels(&[0.5]), -1.0);
        assert_eq!(xi.shift(3.0).unwrap().eval_levels(&[0.5]), 3.5);
        assert_eq!(xi.add(&xi).unwrap().eval_levels(&[2.0]), 2.0);
    }
}

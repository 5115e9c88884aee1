//! `D_t`, `D_x`, `D²_x` and `𝒜_G = D_t + G(D²_x)` on cylinder path processes
//! `u(t, ω) = u_k(t, ω(t); ω(t₁), …, ω(t_k))` for `t ∈ [t_k, t_{k+1})`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{GexpError, Result};
use crate::generator::GParams;

/// `u_k(t, x, [x₁, …, x_k])`.
pub type PieceFn = Arc<dyn Fn(f64, f64, &[f64]) -> f64 + Send + Sync>;

/// Relative finite-difference step; the absolute step is this times `max(1, |·|)`.
pub const FD_STEP: f64 = 1e-4;

#[derive(Clone)]
pub struct CylinderPathProcess {
    partition: Vec<f64>,
    pieces: Vec<PieceFn>,
}

impl std::fmt::Debug for CylinderPathProcess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CylinderPathProcess")
            .field("partition", &self.partition)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CylinderDerivatives {
    pub d_t: f64,
    pub d_x: f64,
    pub d2_x: f64,
    pub step_t: f64,
    pub step_x: f64,
}

impl CylinderPathProcess {
    /// `partition = [0, t₁, …, T]`, one piece per interval.
    pub fn new(partition: Vec<f64>, pieces: Vec<PieceFn>) -> Result<Self> {
        if partition.len() < 2 || partition[0] != 0.0 || partition.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(GexpError::Usage(
                "partition must start at 0 and increase".into(),
            ));
        }
        if pieces.len() + 1 != partition.len() {
            return Err(GexpError::Usage(format!(
                "{} intervals need {} pieces, got {}",
                partition.len() - 1,
                partition.len() - 1,
                pieces.len()
            )));
        }
        Ok(Self { partition, pieces })
    }

    /// A process depending only on `(t, ω(t))` on `[0, T]`.
    pub fn markov<F>(horizon: f64, u: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(vec![0.0, horizon], vec![Arc::new(move |t, x, _| u(t, x))])
    }

    pub fn partition(&self) -> &[f64] {
        &self.partition
    }

    pub fn horizon(&self) -> f64 {
        *self.partition.last().unwrap()
    }

    /// Index `k` with `t ∈ [t_k, t_{k+1})`; `T` belongs to the last interval.
    pub fn interval_of(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t <= self.horizon()) {
            return Err(GexpError::Domain(format!(
                "t = {t} is outside [0, {}]",
                self.horizon()
            )));
        }
        let k = self.partition[1..].iter().take_while(|&&p| p <= t).count();
        Ok(k.min(self.pieces.len() - 1))
    }

    /// `prefix = [ω(t₁), …, ω(t_k), ω(t)]`.
    pub fn value(&self, t: f64, prefix: &[f64]) -> Result<f64> {
        let k = self.check_prefix(t, prefix)?;
        Ok((self.pieces[k])(t, prefix[k], &prefix[..k]))
    }

    fn check_prefix(&self, t: f64, prefix: &[f64]) -> Result<usize> {
        let k = self.interval_of(t)?;
        if prefix.len() != k + 1 {
            return Err(GexpError::Usage(format!(
                "t = {t} lies in interval {k} and needs {} path values, got {}",
                k + 1,
                prefix.len()
            )));
        }
        Ok(k)
    }

    /// Largest `|u_k(t_k, x; x₁, …, x_{k−1}, x) − u_{k−1}(t_k, x; x₁, …, x_{k−1})|`
    /// with earlier path values drawn cyclically from `samples`.
    pub fn stitching_gap(&self, samples: &[f64]) -> f64 {
        let mut gap: f64 = 0.0;
        for k in 1..self.pieces.len() {
            let t = self.partition[k];
            for (i, &x) in samples.iter().enumerate() {
                let mut params: Vec<f64> = (0..k - 1)
                    .map(|j| samples[(i + j + 1) % samples.len()])
                    .collect();
                let left = (self.pieces[k - 1])(t, x, &params);
                params.push(x);
                let right = (self.pieces[k])(t, x, &params);
                gap = gap.max((right - left).abs());
            }
        }
        gap
    }
}

/// Central differences in `x`; in `t` central inside the interval and
/// second-order one-sided at its ends.
pub fn cylinder_derivatives(
    u: &CylinderPathProcess,
    t: f64,
    prefix: &[f64],
) -> Result<CylinderDerivatives> {
    let k = u.check_prefix(t, prefix)?;
    let piece = &u.pieces[k];
    let params = &prefix[..k];
    let x = prefix[k];
    let hx = FD_STEP * x.abs().max(1.0);
    let ht = FD_STEP * u.horizon().max(1.0);
    let f = |s: f64, y: f64| piece(s, y, params);
    let centre = f(t, x);
    let (plus, minus) = (f(t, x + hx), f(t, x - hx));
    let (lo, hi) = (u.partition[k], u.partition[k + 1]);
    let d_t = if t - ht >= lo && t + ht <= hi {
        (f(t + ht, x) - f(t - ht, x)) / (2.0 * ht)
    } else if t + 2.0 * ht <= hi {
        (-3.0 * centre + 4.0 * f(t + ht, x) - f(t + 2.0 * ht, x)) / (2.0 * ht)
    } else {
        (3.0 * centre - 4.0 * f(t - ht, x) + f(t - 2.0 * ht, x)) / (2.0 * ht)
    };
    Ok(CylinderDerivatives {
        d_t,
        d_x: (plus - minus) / (2.0 * hx),
        d2_x: (plus - 2.0 * centre + minus) / (hx * hx),
        step_t: ht,
        step_x: hx,
    })
}

/// `𝒜_G u = D_t u + G(D²_x u)`.
pub fn a_g(u: &CylinderPathProcess, band: &GParams, t: f64, prefix: &[f64]) -> Result<f64> {
    let d = cylinder_derivatives(u, t, prefix)?;
    Ok(d.d_t + band.g_value(d.d2_x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band() -> GParams {
        GParams::from_variances(1.0, 4.0).unwrap()
    }

    #[test]
    fn level_process() {
        let u = CylinderPathProcess::markov(1.0, |_, x| x).unwrap();
        let d = cylinder_derivatives(&u, 0.3, &[0.7]).unwrap();
        assert!(d.d_t.abs() < 1e-9);
        assert!((d.d_x - 1.0).abs() < 1e-9);
        assert!(d.d2_x.abs() < 1e-6);
        assert!(a_g(&u, &band(), 0.3, &[0.7]).unwrap().abs() < 1e-6);
    }

    #[test]
    fn squares() {
        let sq = CylinderPathProcess::markov(1.0, |_, x| x * x).unwrap();
        let d = cylinder_derivatives(&sq, 0.5, &[1.5]).unwrap();
        assert!((d.d_x - 3.0).abs() < 1e-7);
        assert!((d.d2_x - 2.0).abs() < 1e-5);
        assert!((a_g(&sq, &band(), 0.5, &[1.5]).unwrap() - 4.0).abs() < 1e-5);
        let mart = CylinderPathProcess::markov(1.0, |t, x| x * x + 4.0 * (1.0 - t)).unwrap();
        for t in [0.0, 0.5, 1.0] {
            let d = cylinder_derivatives(&mart, t, &[-0.4]).unwrap();
            assert!((d.d_t + 4.0).abs() < 1e-7, "t = {t}");
            assert!(a_g(&mart, &band(), t, &[-0.4]).unwrap().abs() < 1e-5);
        }
    }

    #[test]
    fn path_dependent_pieces_and_stitching() {
        let first: PieceFn = Arc::new(|t, x, _| x * x + 0.5 - t);
        let second: PieceFn = Arc::new(|_, x, p| p[0] * x);
        let u = CylinderPathProcess::new(vec![0.0, 0.5, 1.0], vec![first, second]).unwrap();
        assert!(u.stitching_gap(&[-1.0, 0.0, 0.3, 2.0]) < 1e-15);
        let d = cylinder_derivatives(&u, 0.75, &[0.4, 1.0]).unwrap();
        assert!((d.d_x - 0.4).abs() < 1e-9);
        assert!(cylinder_derivatives(&u, 0.75, &[1.0]).is_err());
        assert_eq!(u.interval_of(0.5).unwrap(), 1);
        assert_eq!(u.interval_of(1.0).unwrap(), 1);
        let broken: PieceFn = Arc::new(|_, x, p| p[0] * x + 1.0);
        let v = CylinderPathProcess::new(vec![0.0, 0.5, 1.0], vec![u.pieces[0].clone(), broken])
            .unwrap();
        assert!(v.stitching_gap(&[0.0, 1.0]) > 0.5);
    }
}

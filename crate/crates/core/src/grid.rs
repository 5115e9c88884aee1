//! Uniform time and space grids.

use serde::{Deserialize, Serialize};

use crate::error::{GexpError, Result};
use crate::generator::GParams;

/// Relative slack used when matching a time against grid nodes.
const NODE_SLACK: f64 = 1e-9;

/// Uniform time grid on `[start, start + horizon]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    start: f64,
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// Grid on `[0, horizon]`.
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        Self::span(0.0, horizon, n_steps)
    }

    /// Grid on `[start, end]`.
    pub fn span(start: f64, end: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(GexpError::Config(
                "time grid needs at least one step".into(),
            ));
        }
        if !(start.is_finite() && end.is_finite()) || end <= start {
            return Err(GexpError::Config(format!(
                "time grid needs start < end, got [{start}, {end}]"
            )));
        }
        Ok(Self {
            start,
            horizon: end - start,
            n_steps,
        })
    }

    /// Coarsest uniform grid on `[0, horizon]` satisfying `dt ≤ dx²/σ̄²`.
    pub fn cfl_maximal(horizon: f64, space: &SpaceGrid, band: &GParams) -> Result<Self> {
        Self::cfl_maximal_span(0.0, horizon, space, band)
    }

    pub fn cfl_maximal_span(
        start: f64,
        end: f64,
        space: &SpaceGrid,
        band: &GParams,
    ) -> Result<Self> {
        let limit = cfl_limit(space, band);
        let n = ((end - start) / limit * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Self::span(start, end, n)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.start + self.horizon
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.end()
        } else {
            self.start + self.horizon * (i as f64 / self.n_steps as f64)
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.time(i)).collect()
    }

    /// Index of the node equal to `t`, if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let pos = (t - self.start) / self.dt();
        let idx = pos.round();
        if (pos - idx).abs() <= NODE_SLACK * (1.0 + pos.abs())
            && idx >= 0.0
            && idx <= self.n_steps as f64
        {
            Some(idx as usize)
        } else {
            None
        }
    }

    /// Index of the node nearest to `t` (clamped to the grid).
    pub fn nearest_index(&self, t: f64) -> usize {
        let pos = ((t - self.start) / self.dt()).round();
        pos.clamp(0.0, self.n_steps as f64) as usize
    }

    /// Interval index `i` and weight `w` with `t = (1−w)·time(i) + w·time(i+1)`.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let tol = NODE_SLACK * self.dt();
        if t < self.start - tol || t > self.end() + tol {
            return Err(GexpError::Extrapolation(format!(
                "time {t} outside [{}, {}]",
                self.start,
                self.end()
            )));
        }
        let pos = ((t - self.start) / self.dt()).clamp(0.0, self.n_steps as f64);
        let i = (pos.floor() as usize).min(self.n_steps - 1);
        Ok((i, pos - i as f64))
    }

    pub fn contains(&self, t: f64) -> bool {
        let tol = NODE_SLACK * self.dt();
        t >= self.start - tol && t <= self.end() + tol
    }
}

/// Uniform space grid on `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl SpaceGrid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min >= x_max {
            return Err(GexpError::Config(format!(
                "space grid needs x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n_points < 3 {
            return Err(GexpError::Config(format!(
                "space grid needs at least 3 points, got {n_points}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
        })
    }

    /// Symmetric grid `[center − half_width, center + half_width]`.
    pub fn centered(center: f64, half_width: f64, n_points: usize) -> Result<Self> {
        Self::new(center - half_width, center + half_width, n_points)
    }

    /// Default truncation `±6·σ̄·√T` around `center`.
    pub fn default_for(band: &GParams, horizon: f64, center: f64, n_points: usize) -> Result<Self> {
        Self::centered(center, 6.0 * band.sigma_hi() * horizon.sqrt(), n_points)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.x_max
        } else {
            self.x_min + self.dx() * i as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Cell index `i` and weight `w` with `x = (1−w)·x(i) + w·x(i+1)`.
    pub fn locate(&self, x: f64) -> Result<(usize, f64)> {
        let dx = self.dx();
        let tol = NODE_SLACK * dx;
        if !(x >= self.x_min - tol && x <= self.x_max + tol) {
            return Err(GexpError::Extrapolation(format!(
                "state {x} outside space grid [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        let pos = ((x - self.x_min) / dx).clamp(0.0, (self.n_points - 1) as f64);
        let i = (pos.floor() as usize).min(self.n_points - 2);
        Ok((i, pos - i as f64))
    }

    pub fn contains(&self, x: f64) -> bool {
        self.locate(x).is_ok()
    }
}

/// Largest explicit-scheme time step keeping the G-heat update monotone.
pub fn cfl_limit(space: &SpaceGrid, band: &GParams) -> f64 {
    let dx = space.dx();
    dx * dx / band.var_hi()
}

/// Fails with a configuration error when `dt` exceeds the CFL limit.
pub fn check_cfl(dt: f64, space: &SpaceGrid, band: &GParams) -> Result<()> {
    let limit = cfl_limit(space, band);
    if dt > limit * (1.0 + 1e-12) {
        return Err(GexpError::Config(format!(
            "CFL violated: dt = {dt:.6e} exceeds dx²/σ̄² = {limit:.6e}"
        )));
    }
    Ok(())
}

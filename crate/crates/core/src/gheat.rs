//! Monotone explicit solver for the backward G-heat equation
//! `∂_t u + G(∂²_x u) = 0`, `u(T, ·) = φ`.
//!
//! Surfaces are stored in calendar time: row `i` holds `u(tᵢ, ·)` and the last
//! row holds the terminal data, so `u(0, x) = 𝔼[φ(x + B_T)]`. Each backward
//! step applies `u ← u + dt·G(D²u)` at interior nodes, with `D²` the centered
//! second difference; the two boundary nodes keep their terminal values.

use std::io::Write;
use std::sync::OnceLock;

use crate::error::{GexpError, Result};
use crate::generator::GParams;
use crate::grid::{check_cfl, SpaceGrid, TimeGrid};

/// Grid function `u(t, x)` with lazily computed finite-difference derivatives.
#[derive(Debug, Clone)]
pub struct ValueSurface {
    time_grid: TimeGrid,
    space: SpaceGrid,
    values: Vec<f64>,
    band: GParams,
    derivatives: OnceLock<DerivativeFields>,
}

/// `∂_t u`, `∂_x u`, `∂²_x u` on the surface nodes (same layout as the values).
#[derive(Debug, Clone)]
pub struct DerivativeFields {
    pub du_dt: Vec<f64>,
    pub du_dx: Vec<f64>,
    pub d2u_dx2: Vec<f64>,
}

/// Source added to the explicit update, called with the index of the known
/// time level, the node index, `y` and `z`.
pub(crate) type Driver<'a> = &'a (dyn Fn(usize, usize, f64, f64) -> f64 + Sync);

/// Explicit backward sweep shared by the G-heat and G-BSDE solvers.
///
/// Rows `0, stride, 2·stride, …, n_steps` are kept.
pub(crate) fn explicit_backward(
    terminal: &[f64],
    band: &GParams,
    time_grid: &TimeGrid,
    space: &SpaceGrid,
    driver: Option<Driver<'_>>,
    stride: usize,
) -> Result<ValueSurface> {
    let n = space.n_points();
    if terminal.len() != n {
        return Err(GexpError::Usage(format!(
            "payoff has {} samples, space grid has {n} points",
            terminal.len()
        )));
    }
    if let Some((i, v)) = terminal.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(GexpError::Data(format!(
            "payoff sample {i} is not finite ({v})"
        )));
    }
    let dt = time_grid.dt();
    check_cfl(dt, space, band)?;
    let n_steps = time_grid.n_steps();
    if stride == 0 || !n_steps.is_multiple_of(stride) {
        return Err(GexpError::Usage(format!(
            "row stride {stride} does not divide {n_steps} steps"
        )));
    }
    let rows = n_steps / stride + 1;
    let mut values = vec![0.0; rows * n];
    values[(rows - 1) * n..].copy_from_slice(terminal);

    let dx = space.dx();
    let inv_dx2 = 1.0 / (dx * dx);
    let inv_2dx = 0.5 / dx;
    let mut cur = terminal.to_vec();
    let mut next = vec![0.0; n];
    for step in (0..n_steps).rev() {
        let known = step + 1;
        for i in 1..n - 1 {
            let curvature = (cur[i + 1] - 2.0 * cur[i] + cur[i - 1]) * inv_dx2;
            let mut rate = band.g_value(curvature);
            if let Some(f) = driver {
                let z = (cur[i + 1] - cur[i - 1]) * inv_2dx;
                rate += f(known, i, cur[i], z);
            }
            next[i] = cur[i] + dt * rate;
        }
        match driver {
            Some(f) => {
                let z_lo = (-3.0 * cur[0] + 4.0 * cur[1] - cur[2]) * inv_2dx;
                let z_hi = (3.0 * cur[n - 1] - 4.0 * cur[n - 2] + cur[n - 3]) * inv_2dx;
                next[0] = cur[0] + dt * f(known, 0, cur[0], z_lo);
                next[n - 1] = cur[n - 1] + dt * f(known, n - 1, cur[n - 1], z_hi);
            }
            None => {
                next[0] = cur[0];
                next[n - 1] = cur[n - 1];
            }
        }
        std::mem::swap(&mut cur, &mut next);
        if step % stride == 0 {
            let row = step / stride;
            values[row * n..(row + 1) * n].copy_from_slice(&cur);
        }
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(GexpError::Numeric(format!(
            "solver produced a non-finite value ({v})"
        )));
    }
    let stored = TimeGrid::span(time_grid.start(), time_grid.end(), rows - 1)?;
    Ok(ValueSurface::from_values(stored, *space, values, *band))
}

/// Solves the backward G-heat equation from terminal samples on `space`.
pub fn solve_gheat(
    payoff: &[f64],
    band: &GParams,
    time_grid: &TimeGrid,
    space: &SpaceGrid,
) -> Result<ValueSurface> {
    explicit_backward(payoff, band, time_grid, space, None, 1)
}

/// [`solve_gheat`] for a payoff given as a function of the state.
pub fn solve_gheat_fn<F: Fn(f64) -> f64>(
    payoff: F,
    band: &GParams,
    time_grid: &TimeGrid,
    space: &SpaceGrid,
) -> Result<ValueSurface> {
    let samples: Vec<f64> = space.points().into_iter().map(payoff).collect();
    solve_gheat(&samples, band, time_grid, space)
}

impl ValueSurface {
    pub(crate) fn from_values(
        time_grid: TimeGrid,
        space: SpaceGrid,
        values: Vec<f64>,
        band: GParams,
    ) -> Self {
        debug_assert_eq!(values.len(), (time_grid.n_steps() + 1) * space.n_points());
        Self {
            time_grid,
            space,
            values,
            band,
            derivatives: OnceLock::new(),
        }
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.time_grid
    }

    pub fn space(&self) -> &SpaceGrid {
        &self.space
    }

    pub fn band(&self) -> &GParams {
        &self.band
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.time_grid.n_steps() + 1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.space.n_points();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn at_node(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.space.n_points() + col]
    }

    /// Finite-difference derivatives: centered in `x` (second-order one-sided
    /// at the edges), centered in `t` (one-sided on the first and last rows).
    pub fn derivatives(&self) -> &DerivativeFields {
        self.derivatives.get_or_init(|| self.compute_derivatives())
    }

    fn compute_derivatives(&self) -> DerivativeFields {
        let n = self.space.n_points();
        let rows = self.n_rows();
        let dx = self.space.dx();
        let dt = self.time_grid.dt();
        let mut du_dx = vec![0.0; rows * n];
        let mut d2u_dx2 = vec![0.0; rows * n];
        let mut du_dt = vec![0.0; rows * n];
        for r in 0..rows {
            let u = self.row(r);
            let off = r * n;
            for i in 1..n - 1 {
                du_dx[off + i] = (u[i + 1] - u[i - 1]) / (2.0 * dx);
                d2u_dx2[off + i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (dx * dx);
            }
            du_dx[off] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dx);
            du_dx[off + n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * dx);
            d2u_dx2[off] = d2u_dx2[off + 1];
            d2u_dx2[off + n - 1] = d2u_dx2[off + n - 2];
        }
        for r in 0..rows {
            let (lo, hi, span) = if r == 0 {
                (0, 1, dt)
            } else if r == rows - 1 {
                (rows - 2, rows - 1, dt)
            } else {
                (r - 1, r + 1, 2.0 * dt)
            };
            for i in 0..n {
                du_dt[r * n + i] = (self.values[hi * n + i] - self.values[lo * n + i]) / span;
            }
        }
        DerivativeFields {
            du_dt,
            du_dx,
            d2u_dx2,
        }
    }

    /// Bilinear interpolation of a node field at `(t, x)`.
    pub fn interpolate(&self, field: &[f64], t: f64, x: f64) -> Result<f64> {
        let (r, wt) = self.time_grid.locate(t)?;
        let (c, wx) = self.space.locate(x)?;
        let n = self.space.n_points();
        let at = |row: usize| (1.0 - wx) * field[row * n + c] + wx * field[row * n + c + 1];
        let lo = at(r);
        if wt == 0.0 {
            return Ok(lo);
        }
        Ok((1.0 - wt) * lo + wt * at(r + 1))
    }

    pub fn value_at(&self, t: f64, x: f64) -> Result<f64> {
        self.interpolate(&self.values, t, x)
    }

    pub fn du_dx_at(&self, t: f64, x: f64) -> Result<f64> {
        self.interpolate(&self.derivatives().du_dx, t, x)
    }

    pub fn d2u_dx2_at(&self, t: f64, x: f64) -> Result<f64> {
        self.interpolate(&self.derivatives().d2u_dx2, t, x)
    }

    pub fn du_dt_at(&self, t: f64, x: f64) -> Result<f64> {
        self.interpolate(&self.derivatives().du_dt, t, x)
    }

    /// `max |∂_t u + G(∂²_x u)|` over interior nodes with `t ≤ t_max`.
    ///
    /// Rows right before a non-smooth terminal payoff carry an `O(1/dx)`
    /// residual; `t_max` keeps them out.
    pub fn heat_residual(&self, t_max: f64) -> f64 {
        let d = self.derivatives();
        let n = self.space.n_points();
        let mut worst: f64 = 0.0;
        for r in 1..self.n_rows() - 1 {
            if self.time_grid.time(r) > t_max {
                break;
            }
            for i in 1..n - 1 {
                let k = r * n + i;
                worst = worst.max((d.du_dt[k] + self.band.g_value(d.d2u_dx2[k])).abs());
            }
        }
        worst
    }

    /// CSV with header `t,x,u,du_dx,d2u_dx2`, one row per node.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let d = self.derivatives();
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["t", "x", "u", "du_dx", "d2u_dx2"])?;
        let n = self.space.n_points();
        for r in 0..self.n_rows() {
            let t = self.time_grid.time(r);
            for i in 0..n {
                let k = r * n + i;
                w.write_record(&[
                    t.to_string(),
                    self.space.x(i).to_string(),
                    self.values[k].to_string(),
                    d.du_dx[k].to_string(),
                    d.d2u_dx2[k].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Bang-bang volatility field `σ*(t, x) = sign_vol(∂²_x u(t, x))`.
#[derive(Debug, Clone)]
pub struct FeedbackField {
    time_grid: TimeGrid,
    space: SpaceGrid,
    curvature: Vec<f64>,
    sigma: Vec<f64>,
    band: GParams,
}

pub fn feedback_field(surface: &ValueSurface) -> FeedbackField {
    let curvature = surface.derivatives().d2u_dx2.clone();
    let band = *surface.band();
    let sigma = curvature.iter().map(|&a| band.sign_vol(a)).collect();
    FeedbackField {
        time_grid: *surface.time_grid(),
        space: *surface.space(),
        curvature,
        sigma,
        band,
    }
}

impl FeedbackField {
    pub fn band(&self) -> &GParams {
        &self.band
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.time_grid
    }

    pub fn space(&self) -> &SpaceGrid {
        &self.space
    }

    /// Node values, laid out like the surface.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    pub fn sigma_at_node(&self, row: usize, col: usize) -> f64 {
        self.sigma[row * self.space.n_points() + col]
    }

    /// Volatility selected at an arbitrary `(t, x)`: the bang-bang rule
    /// applied to the interpolated curvature. States beyond the space grid
    /// use the curvature at the nearest edge.
    pub fn level(&self, t: f64, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(GexpError::Domain("state is NaN".into()));
        }
        let (r, wt) = self.time_grid.locate(t)?;
        let (c, wx) = self
            .space
            .locate(x.clamp(self.space.x_min(), self.space.x_max()))?;
        let n = self.space.n_points();
        let at = |row: usize| {
            (1.0 - wx) * self.curvature[row * n + c] + wx * self.curvature[row * n + c + 1]
        };
        let a = if wt == 0.0 {
            at(r)
        } else {
            (1.0 - wt) * at(r) + wt * at(r + 1)
        };
        Ok(self.band.sign_vol(a))
    }
}

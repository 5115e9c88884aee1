//! Markovian G-BSDEs `Y_t = φ(B_T) + ∫_t^T f(s, Y, Z) ds − ∫_t^T Z dB − (K_T − K_t)`
//! through the semilinear equation `∂_t u + G(∂²_x u) + f(t, u, ∂_x u) = 0`.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{GexpError, Result};
use crate::generator::GParams;
use crate::gheat::{explicit_backward, ValueSurface};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::mc::PathRef;

pub type TerminalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// `f(t, y, z)`.
pub type DriverFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

const LIPSCHITZ_SAMPLES: usize = 512;
const LIPSCHITZ_RANGE: f64 = 10.0;

#[derive(Clone)]
pub struct GBSDEProblem {
    band: GParams,
    horizon: f64,
    terminal: TerminalFn,
    driver: DriverFn,
    lipschitz: f64,
}

impl std::fmt::Debug for GBSDEProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GBSDEProblem")
            .field("band", &self.band)
            .field("horizon", &self.horizon)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl GBSDEProblem {
    /// Spot-checks `|f(t,y,z) − f(t,y′,z′)| ≤ L(|y − y′| + |z − z′|)` on
    /// seeded samples with `y, z ∈ [−10, 10]`.
    pub fn new<P, F>(
        band: GParams,
        horizon: f64,
        terminal: P,
        driver: F,
        lipschitz: f64,
    ) -> Result<Self>
    where
        P: Fn(f64) -> f64 + Send + Sync + 'static,
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(GexpError::Domain(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(GexpError::Domain(format!(
                "Lipschitz constant must be ≥ 0, got {lipschitz}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..LIPSCHITZ_SAMPLES {
            let t = rng.random_range(0.0..=horizon);
            let mut draw = || rng.random_range(-LIPSCHITZ_RANGE..=LIPSCHITZ_RANGE);
            let (y, z, y2, z2) = (draw(), draw(), draw(), draw());
            let (a, b) = (driver(t, y, z), driver(t, y2, z2));
            if !(a.is_finite() && b.is_finite()) {
                return Err(GexpError::Domain(format!(
                    "driver is not finite at t = {t}"
                )));
            }
            let bound = lipschitz * ((y - y2).abs() + (z - z2).abs());
            if (a - b).abs() > bound * (1.0 + 1e-9) + 1e-12 {
                return Err(GexpError::Domain(format!(
                    "driver violates the Lipschitz bound {lipschitz} at t = {t}: |f({y}, {z}) − f({y2}, {z2})| = {}",
                    (a - b).abs()
                )));
            }
        }
        Ok(Self {
            band,
            horizon,
            terminal: Arc::new(terminal),
            driver: Arc::new(driver),
            lipschitz,
        })
    }

    /// `f ≡ 0`: the solution is the conditional G-expectation of `φ(B_T)`.
    pub fn martingale<P>(band: GParams, horizon: f64, terminal: P) -> Result<Self>
    where
        P: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(band, horizon, terminal, |_, _, _| 0.0, 0.0)
    }

    pub fn band(&self) -> &GParams {
        &self.band
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn terminal(&self, x: f64) -> f64 {
        (self.terminal)(x)
    }

    pub fn driver(&self, t: f64, y: f64, z: f64) -> f64 {
        (self.driver)(t, y, z)
    }

    fn check_grids(&self, time: &TimeGrid, space: &SpaceGrid) -> Result<()> {
        if time.start() != 0.0 || (time.end() - self.horizon).abs() > 1e-12 * self.horizon {
            return Err(GexpError::Config(format!(
                "time grid [{}, {}] does not cover [0, {}]",
                time.start(),
                time.end(),
                self.horizon
            )));
        }
        let coupling = time.dt() * self.lipschitz * (1.0 + 1.0 / space.dx());
        if coupling > 1.0 {
            return Err(GexpError::Config(format!(
                "explicit driver coupling dt·L·(1 + 1/dx) = {coupling} exceeds 1"
            )));
        }
        Ok(())
    }

    fn terminal_samples(&self, space: &SpaceGrid) -> Vec<f64> {
        space
            .points()
            .into_iter()
            .map(|x| self.terminal(x))
            .collect()
    }
}

/// `Y = u`, `Z = ∂_x u` on the grid; `K` is built along paths on demand.
#[derive(Debug, Clone)]
pub struct GBSDESolution {
    problem: GBSDEProblem,
    y: ValueSurface,
}

impl GBSDESolution {
    pub fn problem(&self) -> &GBSDEProblem {
        &self.problem
    }

    pub fn y_surface(&self) -> &ValueSurface {
        &self.y
    }

    /// `Z` on the nodes of the `Y` surface.
    pub fn z_field(&self) -> &[f64] {
        &self.y.derivatives().du_dx
    }

    pub fn y_at(&self, t: f64, x: f64) -> Result<f64> {
        self.y.value_at(t, x)
    }

    pub fn z_at(&self, t: f64, x: f64) -> Result<f64> {
        self.y.du_dx_at(t, x)
    }

    /// `K_t = ½∫∂²_x u d⟨B⟩ − ∫G(∂²_x u) ds` along one path, `K₀ = 0`.
    pub fn k_path(&self, path: &PathRef<'_>) -> Result<Vec<f64>> {
        let grid = path.grid;
        let dt = grid.dt();
        let band = &self.problem.band;
        let mut k = Vec::with_capacity(path.h.len() + 1);
        let mut acc = 0.0;
        k.push(acc);
        for (j, &h) in path.h.iter().enumerate() {
            let gamma = self.y.d2u_dx2_at(grid.time(j), path.b[j])?;
            acc += (0.5 * gamma * (h * h)) * dt - band.g_value(gamma) * dt;
            k.push(acc);
        }
        Ok(k)
    }

    /// CSV with header `t,x,Y,Z`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["t", "x", "Y", "Z"])?;
        let space = self.y.space();
        let n = space.n_points();
        let z = self.z_field();
        for r in 0..self.y.n_rows() {
            let t = self.y.time_grid().time(r);
            for i in 0..n {
                w.write_record(&[
                    t.to_string(),
                    space.x(i).to_string(),
                    self.y.at_node(r, i).to_string(),
                    z[r * n + i].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Explicit backward scheme `u ← u + dt·(G(∂²_x u) + f(t, u, ∂_x u))` with
/// the driver read on the known level. Boundary nodes evolve by the driver alone.
pub fn solve_ppde(
    problem: &GBSDEProblem,
    time: &TimeGrid,
    space: &SpaceGrid,
) -> Result<GBSDESolution> {
    problem.check_grids(time, space)?;
    let driver = |j: usize, _: usize, y: f64, z: f64| problem.driver(time.time(j), y, z);
    let y = explicit_backward(
        &problem.terminal_samples(space),
        &problem.band,
        time,
        space,
        Some(&driver),
        1,
    )?;
    Ok(GBSDESolution {
        problem: problem.clone(),
        y,
    })
}

#[derive(Debug, Clone)]
pub struct PicardRun {
    pub solution: GBSDESolution,
    /// `max |u^{j+1} − u^j|` over the grid, per iteration.
    pub increments: Vec<f64>,
}

/// `∂_x` with the stencils of the explicit scheme (central inside, one-sided at the ends).
fn scheme_gradient(u: &[f64], dx: f64) -> Vec<f64> {
    let n = u.len();
    let inv = 0.5 / dx;
    let mut z = vec![0.0; n];
    for i in 1..n - 1 {
        z[i] = (u[i + 1] - u[i - 1]) * inv;
    }
    z[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) * inv;
    z[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) * inv;
    z
}

/// Picard iteration over the driver: each sweep freezes `f(t, u^j, ∂_x u^j)`
/// from the previous iterate, starting from `f ≡ 0`. Stops after
/// `max_iterations` or once the increment drops below `tolerance`.
pub fn solve_ppde_picard(
    problem: &GBSDEProblem,
    time: &TimeGrid,
    space: &SpaceGrid,
    max_iterations: usize,
    tolerance: f64,
) -> Result<PicardRun> {
    problem.check_grids(time, space)?;
    let terminal = problem.terminal_samples(space);
    let n = space.n_points();
    let mut current = explicit_backward(&terminal, &problem.band, time, space, None, 1)?;
    let mut increments = Vec::new();
    for _ in 0..max_iterations {
        let prev = current.values();
        let gradients: Vec<Vec<f64>> = (0..current.n_rows())
            .map(|r| scheme_gradient(current.row(r), space.dx()))
            .collect();
        let source = |j: usize, i: usize, _: f64, _: f64| {
            problem.driver(time.time(j), prev[j * n + i], gradients[j][i])
        };
        let next = explicit_backward(&terminal, &problem.band, time, space, Some(&source), 1)?;
        let inc = next
            .values()
            .iter()
            .zip(prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        increments.push(inc);
        current = next;
        if inc <= tolerance {
            break;
        }
    }
    Ok(PicardRun {
        solution: GBSDESolution {
            problem: problem.clone(),
            y: current,
        },
        increments,
    })
}

/// `max |u_a − u_b|` over two solutions on the same grid.
pub fn surface_gap(a: &GBSDESolution, b: &GBSDESolution) -> Result<f64> {
    if a.y.values().len() != b.y.values().len() {
        return Err(GexpError::Usage("solutions live on different grids".into()));
    }
    Ok(a.y
        .values()
        .iter()
        .zip(b.y.values())
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftIdentity {
    pub c: f64,
    /// `max |u_c(t, x) − u_0(t, x) − c(T − t)|` over the grid.
    pub max_gap: f64,
}

/// Solves with `f` and with `f + c` and compares against `c(T − t)`.
pub fn shift_identity(
    problem: &GBSDEProblem,
    c: f64,
    time: &TimeGrid,
    space: &SpaceGrid,
) -> Result<ShiftIdentity> {
    let base = solve_ppde(problem, time, space)?;
    let inner = problem.driver.clone();
    let shifted = GBSDEProblem {
        driver: Arc::new(move |t, y, z| inner(t, y, z) + c),
        ..problem.clone()
    };
    let moved = solve_ppde(&shifted, time, space)?;
    let n = space.n_points();
    let mut max_gap: f64 = 0.0;
    for r in 0..base.y.n_rows() {
        let lag = c * (problem.horizon - base.y.time_grid().time(r));
        for i in 0..n {
            max_gap = max_gap.max((moved.y.at_node(r, i) - base.y.at_node(r, i) - lag).abs());
        }
    }
    Ok(ShiftIdentity { c, max_gap })
}

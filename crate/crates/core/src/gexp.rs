//! G-expectation and conditional G-expectation of cylinder functionals by
//! backward recursion over the partition.
//!
//! For `ξ = φ(B_{t₁}, …, B_{tₙ})` the segment `k` carries the parameterized
//! G-heat solutions `u_k(t, x; x₁, …, x_{k−1})` on `[t_{k−1}, t_k]`, with
//! `u_n(t_n, x; ·) = φ(·, x)` and `u_k(t_k, x; ·) = u_{k+1}(t_k, x; ·, x)`.
//! Parameters live on the space grid, so the stitching only reads diagonal
//! nodes; between parameter nodes values are interpolated multilinearly.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{GexpError, Result};
use crate::functional::{CylinderFunctional, PayoffConvention};
use crate::generator::GParams;
use crate::gheat::{explicit_backward, ValueSurface};
use crate::grid::{cfl_limit, check_cfl, SpaceGrid, TimeGrid};

/// Discretization of the nested solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeConfig {
    pub space: SpaceGrid,
    /// Time step cap; `None` selects the CFL-maximal step.
    pub dt: Option<f64>,
    /// Stored time rows per parameterized surface.
    pub max_rows: usize,
    /// Largest supported number of cylinder times.
    pub n_max: usize,
}

impl PdeConfig {
    pub fn new(space: SpaceGrid) -> Self {
        Self {
            space,
            dt: None,
            max_rows: 129,
            n_max: 3,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_max_rows(mut self, max_rows: usize) -> Self {
        self.max_rows = max_rows;
        self
    }

    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }

    /// Time step actually requested (before rounding to the segment length).
    pub fn step(&self, band: &GParams) -> Result<f64> {
        let dt = self.dt.unwrap_or_else(|| cfl_limit(&self.space, band));
        if !(dt > 0.0) {
            return Err(GexpError::Config(format!(
                "time step must be positive, got {dt}"
            )));
        }
        check_cfl(dt, &self.space, band)?;
        Ok(dt)
    }

    /// Solver grid on `[start, end]` and the row stride kept in storage.
    pub(crate) fn segment_grid(
        &self,
        start: f64,
        end: f64,
        band: &GParams,
        parameterized: bool,
    ) -> Result<(TimeGrid, usize)> {
        let dt = self.step(band)?;
        let mut n = ((end - start) / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let mut stride = 1;
        if parameterized && self.max_rows >= 2 && n + 1 > self.max_rows {
            stride = n.div_ceil(self.max_rows - 1);
            n = stride * n.div_ceil(stride);
        }
        Ok((TimeGrid::span(start, end, n)?, stride))
    }
}

#[derive(Debug)]
struct Segment {
    start: f64,
    end: f64,
    /// One surface per parameter node, first parameter most significant.
    surfaces: Vec<ValueSurface>,
}

/// All conditional surfaces of one cylinder functional.
#[derive(Debug, Clone)]
pub struct ConditionalExpectation {
    xi: CylinderFunctional,
    band: GParams,
    config: PdeConfig,
    segments: Arc<Vec<Segment>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Value,
    DuDt,
    DuDx,
    D2uDx2,
}

/// `(∂_t u, ∂_x u, ∂²_x u)` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointDerivatives {
    pub du_dt: f64,
    pub du_dx: f64,
    pub d2u_dx2: f64,
}

impl ConditionalExpectation {
    pub fn solve(xi: &CylinderFunctional, band: &GParams, config: &PdeConfig) -> Result<Self> {
        let n = xi.n();
        if n > config.n_max {
            return Err(GexpError::Capability(format!(
                "{n} cylinder times exceed the supported maximum of {}",
                config.n_max
            )));
        }
        let space = config.space;
        let np = space.n_points();
        let nodes = space.points();
        let times = xi.times();
        let mut segments: Vec<Segment> = Vec::with_capacity(n);
        for k in (1..=n).rev() {
            let start = if k == 1 { 0.0 } else { times[k - 2] };
            let end = times[k - 1];
            let params = k - 1;
            let (grid, stride) = config.segment_grid(start, end, band, params > 0)?;
            let count = np
                .checked_pow(params as u32)
                .ok_or_else(|| GexpError::Capability("parameter grid too large".into()))?;
            let later = segments.last();
            let surfaces = (0..count)
                .into_par_iter()
                .map(|idx| {
                    let terminal: Vec<f64> = match later {
                        None => {
                            let mut levels = param_levels(idx, params, &nodes);
                            levels.push(0.0);
                            (0..np)
                                .map(|j| {
                                    levels[params] = nodes[j];
                                    xi.eval_levels(&levels)
                                })
                                .collect()
                        }
                        Some(next) => (0..np)
                            .map(|j| next.surfaces[idx * np + j].at_node(0, j))
                            .collect(),
                    };
                    explicit_backward(&terminal, band, &grid, &space, None, stride)
                })
                .collect::<Result<Vec<_>>>()?;
            segments.push(Segment {
                start,
                end,
                surfaces,
            });
        }
        segments.reverse();
        Ok(Self {
            xi: xi.clone(),
            band: *band,
            config: *config,
            segments: Arc::new(segments),
        })
    }

    pub fn functional(&self) -> &CylinderFunctional {
        &self.xi
    }

    pub fn band(&self) -> &GParams {
        &self.band
    }

    pub fn config(&self) -> &PdeConfig {
        &self.config
    }

    /// `𝔼[ξ] = u₁(0, 0)`.
    pub fn initial(&self) -> Result<f64> {
        self.value(0.0, &[0.0])
    }

    /// The surface of segment `k` (1-based) at parameter node `param_index`.
    pub fn surface(&self, k: usize, param_index: usize) -> Result<&ValueSurface> {
        self.segments
            .get(k.wrapping_sub(1))
            .and_then(|s| s.surfaces.get(param_index))
            .ok_or_else(|| GexpError::Usage(format!("no surface ({k}, {param_index})")))
    }

    /// Solver time grid of segment `k` (1-based).
    pub fn segment_grid(&self, k: usize) -> Result<&TimeGrid> {
        Ok(self.surface(k, 0)?.time_grid())
    }

    /// Index of the segment used at time `t`, or `None` at `t = T`.
    fn segment_at(&self, t: f64) -> Result<Option<usize>> {
        let horizon = self.xi.horizon();
        let tol = 1e-12 * horizon.max(1.0);
        if !(t >= -tol && t <= horizon + tol) {
            return Err(GexpError::Domain(format!(
                "time {t} outside [0, {horizon}]"
            )));
        }
        if t >= horizon - tol {
            return Ok(None);
        }
        let k = self.segments.iter().position(|s| t < s.end - tol).unwrap();
        Ok(Some(k))
    }

    fn check_prefix(&self, t: f64, prefix: &[f64]) -> Result<Option<usize>> {
        let seg = self.segment_at(t)?;
        let expected = match seg {
            Some(k) => k + 1,
            None => self.xi.n() + 1,
        };
        if prefix.len() != expected {
            return Err(GexpError::Usage(format!(
                "at t = {t} the prefix needs {expected} values (cylinder values up to t and the current level), got {}",
                prefix.len()
            )));
        }
        if let Some(v) = prefix.iter().find(|v| !v.is_finite()) {
            return Err(GexpError::Data(format!("prefix value {v} is not finite")));
        }
        Ok(seg)
    }

    fn eval(&self, field: Field, t: f64, prefix: &[f64]) -> Result<f64> {
        let seg = match self.check_prefix(t, prefix)? {
            Some(k) => &self.segments[k],
            None if field == Field::Value => {
                let n = self.xi.n();
                return Ok(self.xi.eval_levels(&prefix[..n]));
            }
            None => {
                let last = self.segments.last().unwrap();
                return self.eval_segment(last, field, last.end, &prefix_for_last(prefix));
            }
        };
        self.eval_segment(seg, field, t.max(seg.start), prefix)
    }

    fn eval_segment(&self, seg: &Segment, field: Field, t: f64, prefix: &[f64]) -> Result<f64> {
        let space = &self.config.space;
        let np = space.n_points();
        let (params, x) = prefix.split_at(prefix.len() - 1);
        let x = x[0];
        let mut cells = Vec::with_capacity(params.len());
        for &p in params {
            cells.push(space.locate(p)?);
        }
        let mut total = 0.0;
        for corner in 0..(1usize << params.len()) {
            let mut weight = 1.0;
            let mut idx = 0;
            for (d, &(i, w)) in cells.iter().enumerate() {
                let upper = corner >> (params.len() - 1 - d) & 1 == 1;
                weight *= if upper { w } else { 1.0 - w };
                idx = idx * np + i + upper as usize;
            }
            if weight == 0.0 {
                continue;
            }
            let s = &seg.surfaces[idx];
            let v = match field {
                Field::Value => s.value_at(t, x)?,
                Field::DuDt => s.du_dt_at(t, x)?,
                Field::DuDx => s.du_dx_at(t, x)?,
                Field::D2uDx2 => s.d2u_dx2_at(t, x)?,
            };
            total += weight * v;
        }
        Ok(total)
    }

    /// `𝔼_t[ξ]` given `ω(tᵢ)` for `tᵢ ≤ t` followed by `ω(t)`.
    pub fn value(&self, t: f64, prefix: &[f64]) -> Result<f64> {
        self.eval(Field::Value, t, prefix)
    }

    /// Finite-difference derivatives of the conditional surface at `(t, prefix)`.
    pub fn derivatives(&self, t: f64, prefix: &[f64]) -> Result<PointDerivatives> {
        Ok(PointDerivatives {
            du_dt: self.eval(Field::DuDt, t, prefix)?,
            du_dx: self.eval(Field::DuDx, t, prefix)?,
            d2u_dx2: self.eval(Field::D2uDx2, t, prefix)?,
        })
    }

    /// `𝔼_{t_k}[ξ]` as a cylinder functional of `B_{t₁}, …, B_{t_k}`, `1 ≤ k < n`.
    ///
    /// Arguments outside the space grid are clamped to its edges.
    pub fn at_partition(&self, k: usize) -> Result<CylinderFunctional> {
        let n = self.xi.n();
        if k == 0 || k >= n {
            return Err(GexpError::Usage(format!(
                "partition index must lie in 1..{n}, got {k}"
            )));
        }
        let me = self.clone();
        let t_k = self.xi.times()[k - 1];
        let (lo, hi) = (self.config.space.x_min(), self.config.space.x_max());
        CylinderFunctional::new(
            self.xi.times()[..k].to_vec(),
            PayoffConvention::Levels,
            move |levels: &[f64]| {
                let mut prefix: Vec<f64> = levels.iter().map(|v| v.clamp(lo, hi)).collect();
                prefix.push(prefix[k - 1]);
                me.value(t_k, &prefix).unwrap_or(f64::NAN)
            },
            f64::INFINITY,
            f64::INFINITY,
        )
    }
}

/// At `t = T` the last segment reads `ω(t₁), …, ω(t_{n−1})` and `x = ω(T)`.
fn prefix_for_last(prefix: &[f64]) -> Vec<f64> {
    let n = prefix.len() - 1;
    let mut out = prefix[..n - 1].to_vec();
    out.push(prefix[n]);
    out
}

fn param_levels(mut idx: usize, params: usize, nodes: &[f64]) -> Vec<f64> {
    let np = nodes.len();
    let mut out = vec![0.0; params];
    for d in (0..params).rev() {
        out[d] = nodes[idx % np];
        idx /= np;
    }
    out
}

/// `𝔼[ξ]`.
pub fn g_expectation(xi: &CylinderFunctional, band: &GParams, config: &PdeConfig) -> Result<f64> {
    ConditionalExpectation::solve(xi, band, config)?.initial()
}

/// `𝔼_t[ξ]` at one observed prefix.
pub fn conditional_g_expectation(
    xi: &CylinderFunctional,
    t: f64,
    prefix: &[f64],
    band: &GParams,
    config: &PdeConfig,
) -> Result<f64> {
    ConditionalExpectation::solve(xi, band, config)?.value(t, prefix)
}

/// `‖ξ‖_p = 𝔼[|ξ|^p]^{1/p}`.
pub fn lp_norm(xi: &CylinderFunctional, p: f64, band: &GParams, config: &PdeConfig) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(GexpError::Domain(format!("p must be at least 1, got {p}")));
    }
    let powered = xi.map(move |v| v.abs().powf(p), f64::INFINITY, f64::INFINITY)?;
    let e = g_expectation(&powered, band, config)?;
    Ok(e.max(0.0).powf(1.0 / p))
}

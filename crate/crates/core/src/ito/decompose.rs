//! Pathwise martingale decomposition `𝔼_t[ξ] = 𝔼[ξ] + ∫Z dB + K` with
//! `Z = ∂_x u` and `K = ½∫∂²_x u d⟨B⟩ − ∫G(∂²_x u) ds`.

use rayon::prelude::*;
use serde::Serialize;

use crate::control::ControlProcess;
use crate::error::{GexpError, Result};
use crate::functional::CylinderFunctional;
use crate::generator::GParams;
use crate::gexp::{ConditionalExpectation, PdeConfig};
use crate::mc::{cylinder_nodes, simulate, PathBundle, Snapping};

/// Decomposition evaluated along every path of a bundle.
#[derive(Debug, Clone)]
pub struct ItoDecomposition {
    pub initial: f64,
    n_paths: usize,
    width: usize,
    z: Vec<f64>,
    k: Vec<f64>,
    m: Vec<f64>,
    residual: Vec<f64>,
}

impl ItoDecomposition {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// `Z` at the left points of the steps (last slot repeats the final value).
    pub fn z_path(&self, p: usize) -> &[f64] {
        &self.z[p * self.width..(p + 1) * self.width]
    }

    pub fn k_path(&self, p: usize) -> &[f64] {
        &self.k[p * self.width..(p + 1) * self.width]
    }

    /// `𝔼_{t_k}[ξ]` along the path; the last node holds `ξ`.
    pub fn m_path(&self, p: usize) -> &[f64] {
        &self.m[p * self.width..(p + 1) * self.width]
    }

    /// `max_t |m_t − (𝔼[ξ] + ∫Z dB + K_t)|` per path.
    pub fn residuals(&self) -> &[f64] {
        &self.residual
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_residual(&self) -> f64 {
        self.residual.iter().sum::<f64>() / self.n_paths as f64
    }

    /// Largest increase of `K` over one step, over all paths (≤ 0 means non-increasing).
    pub fn max_k_increase(&self) -> f64 {
        (0..self.n_paths)
            .flat_map(|p| {
                self.k_path(p)
                    .windows(2)
                    .map(|w| w[1] - w[0])
                    .collect::<Vec<_>>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Decomposes `ξ` along the paths of `bundle` using the conditional surfaces.
pub fn martingale_decomposition(
    xi: &CylinderFunctional,
    band: &GParams,
    config: &PdeConfig,
    bundle: &PathBundle,
) -> Result<ItoDecomposition> {
    let ce = ConditionalExpectation::solve(xi, band, config)?;
    decompose_on(&ce, bundle)
}

/// [`martingale_decomposition`] with surfaces already solved.
pub fn decompose_on(ce: &ConditionalExpectation, bundle: &PathBundle) -> Result<ItoDecomposition> {
    let grid = *bundle.time_grid();
    if (grid.end() - ce.functional().horizon()).abs() > 1e-9 * grid.horizon() {
        return Err(GexpError::Usage(format!(
            "bundle ends at {}, functional at {}",
            grid.end(),
            ce.functional().horizon()
        )));
    }
    let nodes = cylinder_nodes(ce.functional(), &grid, Snapping::Exact)?;
    let band = *ce.band();
    let initial = ce.initial()?;
    let n = grid.n_steps();
    let width = n + 1;
    let dt = grid.dt();
    let per_path: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, f64)> = (0..bundle.n_paths())
        .into_par_iter()
        .map(|p| {
            let path = bundle.path(p);
            let (mut z, mut k, mut m) = (vec![0.0; width], vec![0.0; width], vec![0.0; width]);
            let mut prefix = Vec::with_capacity(nodes.len() + 1);
            let mut integral = 0.0;
            let mut residual: f64 = 0.0;
            for step in 0..=n {
                let t = grid.time(step);
                prefix.clear();
                prefix.extend(nodes.iter().filter(|&&j| j <= step).map(|&j| path.b[j]));
                prefix.push(path.b[step]);
                m[step] = ce.value(t, &prefix)?;
                residual = residual.max((m[step] - (initial + integral + k[step])).abs());
                if step == n {
                    z[step] = z[step - 1];
                    break;
                }
                let d = ce.derivatives(t, &prefix)?;
                z[step] = d.du_dx;
                let h = path.h[step];
                integral += d.du_dx * (path.b[step + 1] - path.b[step]);
                k[step + 1] =
                    k[step] + (0.5 * d.d2u_dx2 * (h * h)) * dt - band.g_value(d.d2u_dx2) * dt;
            }
            Ok((z, k, m, residual))
        })
        .collect::<Result<Vec<_>>>()?;
    let n_paths = bundle.n_paths();
    let mut out = ItoDecomposition {
        initial,
        n_paths,
        width,
        z: Vec::with_capacity(n_paths * width),
        k: Vec::with_capacity(n_paths * width),
        m: Vec::with_capacity(n_paths * width),
        residual: Vec::with_capacity(n_paths),
    };
    for (z, k, m, r) in per_path {
        out.z.extend(z);
        out.k.extend(k);
        out.m.extend(m);
        out.residual.push(r);
    }
    Ok(out)
}

/// Largest gaps between the `Z` and `K` paths of two decompositions on the same bundle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionGap {
    pub z: f64,
    pub k: f64,
}

pub fn compare_decompositions(
    a: &ItoDecomposition,
    b: &ItoDecomposition,
) -> Result<DecompositionGap> {
    if a.n_paths != b.n_paths || a.width != b.width {
        return Err(GexpError::Usage(
            "decompositions live on different bundles".into(),
        ));
    }
    let gap = |x: &[f64], y: &[f64]| {
        x.iter()
            .zip(y)
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max)
    };
    Ok(DecompositionGap {
        z: gap(&a.z, &b.z),
        k: gap(&a.k, &b.k),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReconstructionRow {
    pub n_steps: usize,
    pub dt: f64,
    pub max_residual: f64,
    pub mean_residual: f64,
}

/// Reconstruction residuals on bundles of increasing resolution, sharing one
/// set of surfaces.
pub fn reconstruction_study(
    ce: &ConditionalExpectation,
    control: &ControlProcess,
    step_counts: &[usize],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<ReconstructionRow>> {
    let horizon = ce.functional().horizon();
    step_counts
        .iter()
        .map(|&n| {
            let grid = crate::grid::TimeGrid::new(horizon, n)?;
            let bundle = simulate(control, &grid, n_paths, seed)?;
            let d = decompose_on(ce, &bundle)?;
            Ok(ReconstructionRow {
                n_steps: n,
                dt: grid.dt(),
                max_residual: d.max_residual(),
                mean_residual: d.mean_residual(),
            })
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn empirical_order(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{SpaceGrid, TimeGrid};

    fn setup() -> (GParams, PdeConfig) {
        let band = GParams::from_variances(1.0, 4.0).unwrap();
        (
            band,
            PdeConfig::new(SpaceGrid::centered(0.0, 12.0, 241).unwrap()),
        )
    }

    #[test]
    fn linear_payoff_has_unit_z_and_no_k() {
        let (band, config) = setup();
        let xi = CylinderFunctional::terminal(1.0, |x| x, 1.0, f64::INFINITY).unwrap();
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let bundle = simulate(&ControlProcess::bang_bang_on_level(band), &grid, 50, 4).unwrap();
        let d = martingale_decomposition(&xi, &band, &config, &bundle).unwrap();
        assert!(d.initial.abs() < 1e-9);
        for p in 0..50 {
            assert!(d.z_path(p).iter().all(|z| (z - 1.0).abs() < 1e-9));
            assert!(d.k_path(p).iter().all(|k| k.abs() < 1e-9));
        }
        assert!(d.max_residual() < 1e-9);
    }

    #[test]
    fn square_payoff_closed_forms() {
        let (band, config) = setup();
        let xi =
            CylinderFunctional::terminal(1.0, |x| x * x, f64::INFINITY, f64::INFINITY).unwrap();
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let bundle = simulate(&ControlProcess::bang_bang_on_level(band), &grid, 40, 8).unwrap();
        let d = martingale_decomposition(&xi, &band, &config, &bundle).unwrap();
        assert!((d.initial - 4.0).abs() < 0.05);
        for p in 0..40 {
            let path = bundle.path(p);
            for s in 0..64 {
                assert!((d.z_path(p)[s] - 2.0 * path.b[s]).abs() < 0.05);
                assert!((d.k_path(p)[s] - (path.qv[s] - 4.0 * grid.time(s))).abs() < 0.05);
            }
        }
        assert!(d.max_k_increase() <= 1e-12);
    }

    #[test]
    fn order_of_exact_power_law() {
        let x = [1.0, 0.25, 0.0625];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(0.5)).collect();
        assert!((empirical_order(&x, &y) - 0.5).abs() < 1e-12);
    }
}

//! Controlled path simulation `B_{k+1} = B_k + h_k·√dt·z_k`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::control::{ControlProcess, PathView};
use crate::error::{GexpError, Result};
use crate::grid::TimeGrid;

/// Distribution of the normalized increments `z_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IncrementLaw {
    /// Standard normal.
    #[default]
    Gaussian,
    /// `±1` with probability ½ each, so that `Σ(ΔB)² = ⟨B⟩` on every path.
    Binary,
}

impl IncrementLaw {
    fn sample(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            IncrementLaw::Gaussian => rng.sample(StandardNormal),
            IncrementLaw::Binary => {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// Everything that determines a simulated path set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSpec {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub seed: u64,
    pub law: IncrementLaw,
}

impl SimulationSpec {
    pub fn new(grid: TimeGrid, n_paths: usize, seed: u64) -> Self {
        Self {
            grid,
            n_paths,
            seed,
            law: IncrementLaw::Gaussian,
        }
    }

    pub fn with_law(mut self, law: IncrementLaw) -> Self {
        self.law = law;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// SplitMix64 finalizer, used to derive independent seeds from one seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator of path `path`: one ChaCha stream per path index.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// One simulated path.
#[derive(Debug, Clone, Copy)]
pub struct PathRef<'a> {
    pub grid: &'a TimeGrid,
    /// Global path index.
    pub index: usize,
    pub b: &'a [f64],
    pub qv: &'a [f64],
    pub h: &'a [f64],
}

/// Simulated paths with `⟨B⟩ = ∫h² ds` and the applied controls.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    spec: SimulationSpec,
    first_path: usize,
    n_paths: usize,
    b: Vec<f64>,
    qv: Vec<f64>,
    h: Vec<f64>,
}

fn simulate_path(
    control: &ControlProcess,
    spec: &SimulationSpec,
    index: usize,
    b: &mut [f64],
    qv: &mut [f64],
    h: &mut [f64],
) -> Result<()> {
    let grid = &spec.grid;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let band = control.band();
    let mut rng = path_rng(spec.seed, index);
    b[0] = 0.0;
    qv[0] = 0.0;
    for k in 0..grid.n_steps() {
        let view = PathView {
            grid,
            step: k,
            b: &b[..=k],
            h: &h[..k],
        };
        let hk = control.level(&view)?;
        if !band.contains(hk) {
            return Err(GexpError::Domain(format!(
                "control {} produced {hk} outside [{}, {}] at step {k}",
                control.label(),
                band.sigma_lo(),
                band.sigma_hi()
            )));
        }
        h[k] = hk;
        let z = spec.law.sample(&mut rng);
        b[k + 1] = b[k] + hk * sqrt_dt * z;
        qv[k + 1] = qv[k] + hk * hk * dt;
    }
    Ok(())
}

impl PathBundle {
    /// Paths `first_path .. first_path + n_paths` of the stream described by `spec`.
    pub fn simulate_range(
        control: &ControlProcess,
        spec: &SimulationSpec,
        first_path: usize,
        n_paths: usize,
    ) -> Result<Self> {
        if n_paths == 0 {
            return Err(GexpError::Usage("at least one path is required".into()));
        }
        control.check_grid(&spec.grid)?;
        let n = spec.grid.n_steps();
        let mut b = vec![0.0; n_paths * (n + 1)];
        let mut qv = vec![0.0; n_paths * (n + 1)];
        let mut h = vec![0.0; n_paths * n];
        b.par_chunks_mut(n + 1)
            .zip(qv.par_chunks_mut(n + 1))
            .zip(h.par_chunks_mut(n))
            .enumerate()
            .map(|(p, ((b, qv), h))| simulate_path(control, spec, first_path + p, b, qv, h))
            .collect::<Result<()>>()?;
        Ok(Self {
            spec: SimulationSpec { n_paths, ..*spec },
            first_path,
            n_paths,
            b,
            qv,
            h,
        })
    }

    pub fn spec(&self) -> &SimulationSpec {
        &self.spec
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.spec.grid
    }

    pub fn seed(&self) -> u64 {
        self.spec.seed
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn first_path(&self) -> usize {
        self.first_path
    }

    fn width(&self) -> usize {
        self.spec.grid.n_steps() + 1
    }

    pub fn b(&self, p: usize) -> &[f64] {
        let w = self.width();
        &self.b[p * w..(p + 1) * w]
    }

    pub fn qv(&self, p: usize) -> &[f64] {
        let w = self.width();
        &self.qv[p * w..(p + 1) * w]
    }

    pub fn h(&self, p: usize) -> &[f64] {
        let n = self.spec.grid.n_steps();
        &self.h[p * n..(p + 1) * n]
    }

    pub fn path(&self, p: usize) -> PathRef<'_> {
        PathRef {
            grid: &self.spec.grid,
            index: self.first_path + p,
            b: self.b(p),
            qv: self.qv(p),
            h: self.h(p),
        }
    }

    pub fn paths(&self) -> impl Iterator<Item = PathRef<'_>> {
        (0..self.n_paths).map(|p| self.path(p))
    }

    /// CSV with header `path,step,t,B,qv,h`; `h` is empty on the last node.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["path", "step", "t", "B", "qv", "h"])?;
        let n = self.spec.grid.n_steps();
        for path in self.paths() {
            for k in 0..=n {
                let h = if k < n {
                    path.h[k].to_string()
                } else {
                    String::new()
                };
                w.write_record(&[
                    path.index.to_string(),
                    k.to_string(),
                    self.spec.grid.time(k).to_string(),
                    path.b[k].to_string(),
                    path.qv[k].to_string(),
                    h,
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates `n_paths` paths of `control` with Gaussian increments.
pub fn simulate(
    control: &ControlProcess,
    time_grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    simulate_with(control, &SimulationSpec::new(*time_grid, n_paths, seed))
}

pub fn simulate_with(control: &ControlProcess, spec: &SimulationSpec) -> Result<PathBundle> {
    PathBundle::simulate_range(control, spec, 0, spec.n_paths)
}

/// Paths per chunk so that one chunk stays near 32 MiB.
pub(crate) fn chunk_size(n_steps: usize) -> usize {
    ((1usize << 22) / (3 * (n_steps + 1))).clamp(64, 16384)
}

/// Simulates `spec.n_paths` paths chunk by chunk, in path order.
pub fn for_each_chunk<F>(control: &ControlProcess, spec: &SimulationSpec, mut f: F) -> Result<()>
where
    F: FnMut(&PathBundle) -> Result<()>,
{
    if spec.n_paths == 0 {
        return Err(GexpError::Usage("at least one path is required".into()));
    }
    let chunk = chunk_size(spec.grid.n_steps());
    let mut first = 0;
    while first < spec.n_paths {
        let count = chunk.min(spec.n_paths - first);
        let bundle = PathBundle::simulate_range(control, spec, first, count)?;
        f(&bundle)?;
        first += count;
    }
    Ok(())
}

/// Result of the exact pathwise check of `σ̲²(t−s) ≤ ⟨B⟩_t − ⟨B⟩_s ≤ σ̄²(t−s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QvBoundsReport {
    pub paths: usize,
    pub pairs_per_path: usize,
    pub violations: usize,
    /// Largest `|qv_{k+1} − qv_k − h_k²·dt|` relative to `qv_T`.
    pub max_bookkeeping_gap: f64,
}

impl QvBoundsReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Checks the quadratic-variation bounds on every single step and on every
/// pair of nodes of a sub-grid of at most 65 nodes.
///
/// Block sums are accumulated from the recorded `h` in the same order as the
/// bounds `Σ σ̲²dt`, `Σ σ̄²dt`; rounded addition is monotone, so the comparison
/// is exact.
pub fn check_qv_bounds(bundle: &PathBundle, band: &crate::generator::GParams) -> QvBoundsReport {
    let grid = bundle.time_grid();
    let n = grid.n_steps();
    let dt = grid.dt();
    let lo = band.var_lo() * dt;
    let hi = band.var_hi() * dt;
    let stride = n.div_ceil(64).max(1);
    let mut nodes: Vec<usize> = (0..=n).step_by(stride).collect();
    if *nodes.last().unwrap() != n {
        nodes.push(n);
    }
    let mut violations = 0;
    let mut gap: f64 = 0.0;
    let mut pairs = 0;
    for path in bundle.paths() {
        let sq: Vec<f64> = path.h.iter().map(|h| h * h * dt).collect();
        let scale = path.qv[n].max(f64::MIN_POSITIVE);
        for k in 0..n {
            if sq[k] < lo || sq[k] > hi {
                violations += 1;
            }
            gap = gap.max((path.qv[k + 1] - path.qv[k] - sq[k]).abs() / scale);
        }
        pairs = 0;
        for (a, &i) in nodes.iter().enumerate() {
            let (mut s, mut sl, mut sh) = (0.0, 0.0, 0.0);
            let mut cursor = i;
            for &j in &nodes[a + 1..] {
                while cursor < j {
                    s += sq[cursor];
                    sl += lo;
                    sh += hi;
                    cursor += 1;
                }
                pairs += 1;
                if s < sl || s > sh {
                    violations += 1;
                }
            }
        }
    }
    QvBoundsReport {
        paths: bundle.n_paths(),
        pairs_per_path: pairs + n,
        violations,
        max_bookkeeping_gap: gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::GParams;

    fn band() -> GParams {
        GParams::from_variances(1.0, 4.0).unwrap()
    }

    #[test]
    fn constant_control_has_exact_qv() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let c = ControlProcess::constant(band(), 1.5).unwrap();
        let bundle = simulate(&c, &grid, 20, 7).unwrap();
        for p in bundle.paths() {
            assert!((p.qv[16] - 2.25).abs() < 1e-14);
            assert_eq!(p.b[0], 0.0);
        }
        assert!(check_qv_bounds(&bundle, &band()).holds());
    }

    #[test]
    fn deterministic_and_chunk_independent() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let c = ControlProcess::bang_bang_on_level(band());
        let a = simulate(&c, &grid, 50, 11).unwrap();
        let b = simulate(&c, &grid, 50, 11).unwrap();
        assert_eq!(a, b);
        let spec = SimulationSpec::new(grid, 50, 11);
        let tail = PathBundle::simulate_range(&c, &spec, 30, 20).unwrap();
        assert_eq!(tail.b(0), a.b(30));
        assert_eq!(tail.h(19), a.h(49));
    }

    #[test]
    fn binary_law_matches_bracket() {
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let c = ControlProcess::bang_bang_on_level(band());
        let spec = SimulationSpec::new(grid, 10, 3).with_law(IncrementLaw::Binary);
        let bundle = simulate_with(&c, &spec).unwrap();
        for p in bundle.paths() {
            let realized: f64 = p.b.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
            assert!((realized - p.qv[32]).abs() < 1e-12);
        }
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(5, 9), derive_seed(5, 9));
    }

    #[test]
    fn csv_layout() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let c = ControlProcess::lower(band());
        let bundle = simulate(&c, &grid, 2, 1).unwrap();
        let mut buf = Vec::new();
        bundle.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "path,step,t,B,qv,h");
        assert_eq!(lines.len(), 7);
        assert!(lines[3].ends_with(','));
    }
}

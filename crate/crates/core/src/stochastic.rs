//! Two-sided Q-Wiener ensembles, the exponential Euler–Maruyama integrator
//! for the mild formulation, and mean-square norms.
//!
//! Time grids are anchored on the integer lattice `t = i·dt`. Noise
//! increments are a pure function of `(seed, sample, i, mode)`, so windows that
//! overlap on the lattice see identical increments regardless of where they
//! start, and negative indices give the backward half of the two-sided
//! process with `W(0) = 0`.
//!
//! Ensembles store values node-major: `data[(node * n_samples + sample) * width + mode]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral_problem::{NoiseModel, SpectralProblem};

/// Coordinates above this magnitude abort a run.
pub const OVERFLOW_GUARD: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    origin: i64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// Uniform grid starting at `t_start`, which must lie on the `dt` lattice.
    pub fn new(t_start: f64, dt: f64, n_steps: usize) -> Result<TimeGrid> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::GridMismatch(format!("step must be positive, got {dt}")));
        }
        let r = t_start / dt;
        let origin = r.round();
        if (r - origin).abs() > 1e-9 * r.abs().max(1.0) {
            return Err(Error::GridMismatch(format!(
                "start {t_start} is not a multiple of dt = {dt}"
            )));
        }
        Ok(TimeGrid {
            origin: origin as i64,
            dt,
            n_steps,
        })
    }

    pub fn from_origin(origin: i64, dt: f64, n_steps: usize) -> TimeGrid {
        TimeGrid {
            origin,
            dt,
            n_steps,
        }
    }

    /// Lattice index of the first node.
    pub fn origin(&self) -> i64 {
        self.origin
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }
    pub fn time(&self, node: usize) -> f64 {
        (self.origin + node as i64) as f64 * self.dt
    }
    pub fn t_start(&self) -> f64 {
        self.time(0)
    }
    pub fn t_end(&self) -> f64 {
        self.time(self.n_steps)
    }

    /// Node index of lattice time `t`, when it falls on this grid.
    pub fn node_of(&self, t: f64) -> Option<usize> {
        let r = (t / self.dt).round() as i64 - self.origin;
        (0..=self.n_steps as i64).contains(&r).then_some(r as usize)
    }

    fn same_lattice(&self, other: &TimeGrid) -> bool {
        self.dt.to_bits() == other.dt.to_bits()
    }
}

/// Per-sample row vectors, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    /// Every sample equal to `v`.
    pub fn broadcast(v: &[f64], rows: usize) -> Self {
        let mut data = Vec::with_capacity(rows * v.len());
        for _ in 0..rows {
            data.extend_from_slice(v);
        }
        Self {
            rows,
            cols: v.len(),
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `sqrt(mean_i ‖row_i‖²)`.
    pub fn ms_norm(&self) -> f64 {
        if self.rows == 0 {
            return 0.0;
        }
        (self.data.iter().map(|x| x * x).sum::<f64>() / self.rows as f64).sqrt()
    }

    /// Column means.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (a, x) in m.iter_mut().zip(self.row(i)) {
                *a += x;
            }
        }
        m.iter_mut().for_each(|a| *a /= self.rows.max(1) as f64);
        m
    }

    /// True when all rows coincide.
    pub fn is_deterministic(&self) -> bool {
        (1..self.rows).all(|i| self.row(i) == self.row(0))
    }

    pub fn sub(&self, other: &SampleMatrix) -> SampleMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        SampleMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// Columns `idx` of every row.
    pub fn select_columns(&self, idx: &[usize]) -> SampleMatrix {
        let mut out = SampleMatrix::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            let r = self.row(i);
            for (o, &k) in out.row_mut(i).iter_mut().zip(idx) {
                *o = r[k];
            }
        }
        out
    }
}

/// Sampled increments `ΔW_j = W(t_{j+1}) − W(t_j)` of a diagonal Q-Wiener
/// process, node-major like [`ProcessEnsemble`].
#[derive(Clone, Debug)]
pub struct WienerEnsemble {
    grid: TimeGrid,
    seed: u64,
    weights: Vec<f64>,
    n_samples: usize,
    data: Vec<f64>,
}

fn stream_key(seed: u64, sample: u64, lattice_step: i64) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&sample.to_le_bytes());
    key[16..24].copy_from_slice(&lattice_step.to_le_bytes());
    key[24..].copy_from_slice(b"msinv-dW");
    key
}

fn fill_increments(
    seed: u64,
    origin: i64,
    step: usize,
    weights: &[f64],
    dt: f64,
    row: &mut [f64],
    sample: usize,
) {
    let mut rng = ChaCha8Rng::from_seed(stream_key(seed, sample as u64, origin + step as i64));
    for (v, q) in row.iter_mut().zip(weights) {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = if *q == 0.0 { 0.0 } else { (q * dt).sqrt() * z };
    }
}

/// Draws an ensemble from counter-based streams keyed on
/// `(seed, sample, lattice step)`.
pub fn sample_wiener(
    seed: u64,
    grid: &TimeGrid,
    noise: &NoiseModel,
    n_samples: usize,
) -> Result<WienerEnsemble> {
    if n_samples < 2 {
        return Err(Error::InvalidConfig("a Wiener ensemble needs at least 2 samples".into()));
    }
    let q = noise.n_modes();
    if q == 0 {
        return Err(Error::InvalidConfig("noise model has no modes".into()));
    }
    let mut ens = WienerEnsemble {
        grid: *grid,
        seed,
        weights: noise.weights.clone(),
        n_samples,
        data: vec![0.0; grid.n_steps() * n_samples * q],
    };
    ens.fill_from(0, seed);
    Ok(ens)
}

impl WienerEnsemble {
    /// All-zero increments, used when the noise coefficient vanishes.
    pub fn zeros(grid: &TimeGrid, n_samples: usize, n_noise: usize) -> WienerEnsemble {
        WienerEnsemble {
            grid: *grid,
            seed: 0,
            weights: vec![0.0; n_noise],
            n_samples,
            data: vec![0.0; grid.n_steps() * n_samples * n_noise],
        }
    }

    fn fill_from(&mut self, first_step: usize, seed: u64) {
        let q = self.weights.len();
        let n = self.n_samples;
        if q == 0 || n == 0 {
            return;
        }
        let (origin, dt) = (self.grid.origin(), self.grid.dt());
        let weights = self.weights.clone();
        self.data[first_step * n * q..]
            .par_chunks_mut(n * q)
            .enumerate()
            .for_each(|(j, block)| {
                for (i, row) in block.chunks_mut(q).enumerate() {
                    fill_increments(seed, origin, first_step + j, &weights, dt, row, i);
                }
            });
    }

    /// Replaces increments at steps `>= step` by draws from `seed`.
    pub fn resample_from(&self, step: usize, seed: u64) -> WienerEnsemble {
        let mut out = self.clone();
        out.fill_from(step.min(self.grid.n_steps()), seed);
        out
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }
    pub fn n_noise(&self) -> usize {
        self.weights.len()
    }

    /// Increments of all samples at `step`, sample-major.
    pub fn step(&self, step: usize) -> &[f64] {
        let w = self.n_samples * self.n_noise();
        &self.data[step * w..(step + 1) * w]
    }

    pub fn increment(&self, sample: usize, step: usize, mode: usize) -> f64 {
        self.data[(step * self.n_samples + sample) * self.n_noise() + mode]
    }

    /// Sums groups of `factor` increments onto the grid with step `factor·dt`.
    /// The fine grid's origin and length must be divisible by `factor`.
    pub fn coarsen(&self, factor: usize) -> Result<WienerEnsemble> {
        let g = self.grid;
        if factor == 0 || g.n_steps() % factor != 0 || g.origin() % factor as i64 != 0 {
            return Err(Error::GridMismatch(format!(
                "cannot coarsen {} steps from origin {} by {factor}",
                g.n_steps(),
                g.origin()
            )));
        }
        let coarse = TimeGrid::from_origin(
            g.origin() / factor as i64,
            g.dt() * factor as f64,
            g.n_steps() / factor,
        );
        let w = self.n_samples * self.n_noise();
        let mut data = vec![0.0; coarse.n_steps() * w];
        for (c, out) in data.chunks_mut(w.max(1)).enumerate().take(coarse.n_steps()) {
            for s in 0..factor {
                for (o, v) in out.iter_mut().zip(self.step(c * factor + s)) {
                    *o += v;
                }
            }
        }
        Ok(WienerEnsemble {
            grid: coarse,
            seed: self.seed,
            weights: self.weights.clone(),
            n_samples: self.n_samples,
            data,
        })
    }

    /// Path `W(t_j)` of one sample and mode. Anchored so that `W(0) = 0` when
    /// the grid contains time 0, otherwise `W(t_start) = 0`.
    pub fn path(&self, sample: usize, mode: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.n_nodes());
        let mut acc = 0.0;
        out.push(0.0);
        for j in 0..self.grid.n_steps() {
            acc += self.increment(sample, j, mode);
            out.push(acc);
        }
        if let Some(z) = self.grid.node_of(0.0) {
            let shift = out[z];
            out.iter_mut().for_each(|v| *v -= shift);
        }
        out
    }

    /// `W(t_node) − W(t_start)` for every sample, as a sample matrix over noise modes.
    pub fn displacement(&self, node: usize) -> SampleMatrix {
        let q = self.n_noise();
        let mut out = SampleMatrix::zeros(self.n_samples, q);
        for j in 0..node {
            for (o, v) in out.as_mut_slice().iter_mut().zip(self.step(j)) {
                *o += v;
            }
        }
        out
    }
}

/// Identifies the noise ensemble a process is adapted to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiltrationTag {
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessEnsemble {
    grid: TimeGrid,
    n_samples: usize,
    n_modes: usize,
    data: Vec<f64>,
    filtration: Option<FiltrationTag>,
}

impl ProcessEnsemble {
    pub fn zeros(grid: &TimeGrid, n_samples: usize, n_modes: usize) -> Self {
        Self {
            grid: *grid,
            n_samples,
            n_modes,
            data: vec![0.0; grid.n_nodes() * n_samples * n_modes],
            filtration: None,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }
    pub fn filtration(&self) -> Option<FiltrationTag> {
        self.filtration
    }
    pub fn set_filtration(&mut self, tag: Option<FiltrationTag>) {
        self.filtration = tag;
    }

    fn width(&self) -> usize {
        self.n_samples * self.n_modes
    }

    /// All samples at `node`, sample-major.
    pub fn node(&self, node: usize) -> &[f64] {
        let w = self.width();
        &self.data[node * w..(node + 1) * w]
    }

    pub fn node_mut(&mut self, node: usize) -> &mut [f64] {
        let w = self.width();
        &mut self.data[node * w..(node + 1) * w]
    }

    pub fn state(&self, sample: usize, node: usize) -> &[f64] {
        let start = (node * self.n_samples + sample) * self.n_modes;
        &self.data[start..start + self.n_modes]
    }

    pub fn get(&self, sample: usize, node: usize, mode: usize) -> f64 {
        self.data[(node * self.n_samples + sample) * self.n_modes + mode]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Values at `node` as a sample matrix.
    pub fn snapshot(&self, node: usize) -> SampleMatrix {
        SampleMatrix::from_vec(self.n_samples, self.n_modes, self.node(node).to_vec())
    }

    pub fn path(&self, sample: usize, mode: usize) -> Vec<f64> {
        (0..self.grid.n_nodes()).map(|j| self.get(sample, j, mode)).collect()
    }

    pub fn difference(&self, other: &ProcessEnsemble) -> ProcessEnsemble {
        assert_eq!(self.data.len(), other.data.len());
        ProcessEnsemble {
            grid: self.grid,
            n_samples: self.n_samples,
            n_modes: self.n_modes,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
            filtration: self.filtration,
        }
    }
}

/// `sqrt` of the sample mean of the squared modal norm at `node`.
pub fn ms_norm(ens: &ProcessEnsemble, node: usize) -> f64 {
    let v = ens.node(node);
    if ens.n_samples == 0 {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / ens.n_samples as f64).sqrt()
}

/// `sup_j e^{−γ(t_j − τ)} ms_norm(t_j)` over every node of the window.
pub fn weighted_norm(ens: &ProcessEnsemble, gamma: f64, tau: f64) -> f64 {
    (0..ens.grid.n_nodes())
        .map(|j| (-gamma * (ens.grid.time(j) - tau)).exp() * ms_norm(ens, j))
        .fold(0.0, f64::max)
}

/// Location of the first coordinate beyond the overflow guard at `node`.
pub(crate) fn find_overflow(values: &[f64], width: usize, node: usize) -> Result<()> {
    if let Some(pos) = values
        .iter()
        .position(|v| !v.is_finite() || v.abs() > OVERFLOW_GUARD)
    {
        return Err(Error::NonfiniteState {
            step: node,
            sample: pos / width.max(1),
        });
    }
    Ok(())
}

/// Exponential Euler–Maruyama for the mild formulation:
/// `u_{j+1} = e^{AΔt}(u_j + Δt·F̃(u_j) + σ̃(u_j)ΔW_j)` with `F̃`, `σ̃` the
/// regularized coefficients.
pub fn integrate_mild(
    p: &SpectralProblem,
    u0: &SampleMatrix,
    grid: &TimeGrid,
    w: &WienerEnsemble,
) -> Result<ProcessEnsemble> {
    let m = p.n_modes();
    let n = u0.rows();
    if u0.cols() != m {
        return Err(Error::GridMismatch(format!(
            "initial state has {} modes, problem has {m}",
            u0.cols()
        )));
    }
    check_noise_alignment(p, grid, w, n)?;
    let mut out = ProcessEnsemble::zeros(grid, n, m);
    out.filtration = Some(FiltrationTag { seed: w.seed() });
    out.node_mut(0).copy_from_slice(u0.as_slice());
    find_overflow(out.node(0), m, 0)?;

    let dt = grid.dt();
    let decay: Vec<f64> = p.eigenvalues().iter().map(|l| (l * dt).exp()).collect();
    let noisy = !p.noise().is_zero();
    let width = n * m;
    for j in 0..grid.n_steps() {
        let (head, tail) = out.data.split_at_mut((j + 1) * width);
        let cur = &head[j * width..];
        let next = &mut tail[..width];
        let dw = if noisy { Some(w.step(j)) } else { None };
        next.par_chunks_mut(m)
            .enumerate()
            .for_each_init(
                || (p.scratch(), vec![0.0; m], vec![0.0; m]),
                |(scratch, f, g), (i, nx)| {
                    let u = &cur[i * m..(i + 1) * m];
                    p.drift(u, scratch, f);
                    if let Some(dw) = dw {
                        p.diffusion(u, &dw[i * m..(i + 1) * m], g);
                    }
                    for k in 0..m {
                        let noise = if dw.is_some() { g[k] } else { 0.0 };
                        nx[k] = decay[k] * (u[k] + dt * f[k] + noise);
                    }
                },
            );
        find_overflow(next, m, j + 1)?;
    }
    Ok(out)
}

pub(crate) fn check_noise_alignment(
    p: &SpectralProblem,
    grid: &TimeGrid,
    w: &WienerEnsemble,
    n: usize,
) -> Result<()> {
    if w.grid().origin() != grid.origin()
        || w.grid().n_steps() != grid.n_steps()
        || !w.grid().same_lattice(grid)
    {
        return Err(Error::GridMismatch("noise grid differs from solver grid".into()));
    }
    if w.n_samples() != n {
        return Err(Error::GridMismatch(format!(
            "noise has {} samples, state has {n}",
            w.n_samples()
        )));
    }
    if !p.noise().is_zero() && w.n_noise() != p.n_modes() {
        return Err(Error::GridMismatch("noise mode count differs from problem".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_problem::{build_problem, NoiseSpec, NonlinearitySpec, ProblemSpec};

    fn scalar(lambda: f64, slope: f64) -> SpectralProblem {
        build_problem(&ProblemSpec {
            eigenvalues: vec![lambda],
            unstable_modes: None,
            alpha: 10.0,
            beta: lambda.max(-1.0),
            gamma: 5.0,
            zeta: 0.0,
            bound_k: 1.0,
            nonlinearity: NonlinearitySpec::Zero,
            noise: NoiseSpec::DiagonalLinear {
                slopes: vec![slope],
                weights: None,
            },
            ladder: vec![1e2, 1e3, 1e4, 1e5, 1e6],
        })
        .unwrap()
    }

    #[test]
    fn grid_alignment() {
        let g = TimeGrid::new(-0.5, 0.01, 100).unwrap();
        assert_eq!(g.origin(), -50);
        assert_eq!(g.t_end(), 0.5);
        assert_eq!(g.node_of(0.0), Some(50));
        assert!(TimeGrid::new(0.005, 0.01, 10).is_err());
    }

    #[test]
    fn zero_weight_gives_zero_increments() {
        let p = build_problem(&ProblemSpec {
            eigenvalues: vec![1.0, -1.0],
            unstable_modes: None,
            alpha: 1.0,
            beta: -1.0,
            gamma: 0.0,
            zeta: -0.5,
            bound_k: 1.0,
            nonlinearity: NonlinearitySpec::Zero,
            noise: NoiseSpec::DiagonalLinear {
                slopes: vec![1.0, 1.0],
                weights: Some(vec![0.0, 1.0]),
            },
            ladder: vec![1e2, 1e3],
        })
        .unwrap();
        let g = TimeGrid::new(0.0, 0.1, 5).unwrap();
        let w = sample_wiener(3, &g, p.noise(), 4).unwrap();
        for j in 0..5 {
            for i in 0..4 {
                assert_eq!(w.increment(i, j, 0), 0.0);
                assert_ne!(w.increment(i, j, 1), 0.0);
            }
        }
    }

    #[test]
    fn increment_variance_band() {
        let p = scalar(-1.0, 1.0);
        let g = TimeGrid::new(0.0, 0.01, 3).unwrap();
        let n = 100_000;
        let w = sample_wiener(11, &g, p.noise(), n).unwrap();
        for j in 0..3 {
            let v: f64 = w.step(j).iter().map(|x| x * x).sum::<f64>() / n as f64;
            assert!((0.0095..=0.0105).contains(&v), "variance {v}");
            let mean: f64 = w.step(j).iter().sum::<f64>() / n as f64;
            assert!(mean.abs() <= 4.0 * (0.01 / n as f64).sqrt());
        }
    }

    #[test]
    fn overlapping_windows_share_increments() {
        let p = scalar(-1.0, 1.0);
        let a = sample_wiener(5, &TimeGrid::new(-1.0, 0.1, 20).unwrap(), p.noise(), 3).unwrap();
        let b = sample_wiener(5, &TimeGrid::new(0.0, 0.1, 10).unwrap(), p.noise(), 3).unwrap();
        for j in 0..10 {
            assert_eq!(a.step(10 + j), b.step(j));
        }
        assert_eq!(a.path(1, 0)[10], 0.0);
    }

    #[test]
    fn pure_semigroup_is_exact() {
        let p = scalar(-2.0, 0.0);
        let g = TimeGrid::new(0.0, 0.01, 100).unwrap();
        let w = WienerEnsemble::zeros(&g, 2, 1);
        let u0 = SampleMatrix::from_vec(2, 1, vec![1.0, -3.0]);
        let u = integrate_mild(&p, &u0, &g, &w).unwrap();
        let decay = (-2.0f64 * 0.01).exp();
        let expected = (0..100).fold(1.0, |acc, _| acc * decay);
        assert_eq!(u.get(0, 100, 0), expected);
        assert!((u.get(1, 100, 0) + 3.0 * (-2.0f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn overflow_is_reported() {
        let p = build_problem(&ProblemSpec {
            eigenvalues: vec![40.0],
            unstable_modes: None,
            alpha: 40.0,
            beta: -1.0,
            gamma: 0.0,
            zeta: -0.5,
            bound_k: 1.0,
            nonlinearity: NonlinearitySpec::Zero,
            noise: NoiseSpec::Zero,
            ladder: vec![1e2, 1e3],
        })
        .unwrap();
        let g = TimeGrid::new(0.0, 0.1, 100).unwrap();
        let w = WienerEnsemble::zeros(&g, 2, 0);
        let u0 = SampleMatrix::from_vec(2, 1, vec![0.0, 1.0]);
        match integrate_mild(&p, &u0, &g, &w) {
            Err(Error::NonfiniteState { sample, .. }) => assert_eq!(sample, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_mismatch_detected() {
        let p = scalar(-1.0, 0.5);
        let g = TimeGrid::new(0.0, 0.01, 10).unwrap();
        let w = sample_wiener(1, &TimeGrid::new(0.0, 0.01, 11).unwrap(), p.noise(), 2).unwrap();
        let u0 = SampleMatrix::zeros(2, 1);
        assert!(matches!(
            integrate_mild(&p, &u0, &g, &w),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn norms() {
        let g = TimeGrid::new(0.0, 0.5, 2).unwrap();
        let mut e = ProcessEnsemble::zeros(&g, 3, 2);
        assert_eq!(weighted_norm(&e, 0.3, 0.0), 0.0);
        for j in 0..3 {
            let s = (0.7 * g.time(j)).exp();
            for i in 0..3 {
                e.node_mut(j)[i * 2] = s * 0.6;
                e.node_mut(j)[i * 2 + 1] = s * 0.8;
            }
        }
        assert!((ms_norm(&e, 0) - 1.0).abs() < 1e-15);
        assert!((weighted_norm(&e, 0.7, 0.0) - 1.0).abs() < 1e-14);
        assert!((weighted_norm(&e, 0.7, 1.0) - 0.7f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn coarsening_sums_increments() {
        let p = scalar(-1.0, 1.0);
        let g = TimeGrid::new(0.0, 0.01, 8).unwrap();
        let w = sample_wiener(2, &g, p.noise(), 3).unwrap();
        let c = w.coarsen(4).unwrap();
        assert_eq!(c.grid().n_steps(), 2);
        let direct: f64 = (4..8).map(|j| w.increment(2, j, 0)).sum();
        assert!((c.increment(2, 1, 0) - direct).abs() < 1e-15);
        assert!(w.coarsen(3).is_err());
    }
}

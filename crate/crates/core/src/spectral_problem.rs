//! Diagonal (Galerkin-spectral) model of the evolution equation.
//!
//! The linear part acts mode-wise with rates `λ_k`. Modes are split into a
//! finite unstable block `U` (rates at least `alpha`) and a stable block `S`
//! (rates at most `beta`). The nonlinearity and the noise coefficient are
//! evaluated in modal coordinates and regularized by `λR_λ` at the top of the
//! configured λ-ladder before they enter any convolution.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LADDER: [f64; 5] = [1e2, 1e3, 1e4, 1e5, 1e6];

fn default_k() -> f64 {
    1.0
}

fn default_ladder() -> Vec<f64> {
    DEFAULT_LADDER.to_vec()
}

/// Structured problem description, the `[problem]` table of a config file.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub eigenvalues: Vec<f64>,
    /// Optional explicit unstable index set; inferred from `alpha` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unstable_modes: Option<Vec<usize>>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub zeta: f64,
    #[serde(default = "default_k")]
    pub bound_k: f64,
    #[serde(default)]
    pub nonlinearity: NonlinearitySpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// Regularization ladder; its largest entry is used by the integrator.
    #[serde(default = "default_ladder")]
    pub ladder: Vec<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NonlinearitySpec {
    #[default]
    Zero,
    /// `F(u) = B u`.
    Linear { matrix: Vec<Vec<f64>> },
    /// `F(u) = B φ(u)` with `φ_j = p(clamp(u_j, ±radius))`, `p(s) = Σ c_i s^i`.
    /// `B` defaults to the identity.
    SaturatedPolynomial {
        coefficients: Vec<f64>,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coupling: Option<Vec<Vec<f64>>>,
    },
    /// Boundary-coupled nonlinearity of the Neumann heat example:
    /// `g0(φ) = c0 tanh φ` in the interior, `g1 = c1 tanh⟨φ,e_0⟩` at x=0 and
    /// `g2 = c2 tanh⟨φ,e_1⟩` at x=1.
    BoundaryExample { g0: f64, g1: f64, g2: f64 },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSpec {
    #[default]
    Zero,
    /// Noise mode k drives state mode k with coefficient `s_k u_k`.
    DiagonalLinear {
        slopes: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    /// Coefficient `s_k R tanh(u_k / R)`.
    Saturated {
        slopes: Vec<f64>,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

/// Element of the extended space `X = R × R × X₀`: interior modes plus the
/// two boundary data. Problems without boundary coupling leave `boundary` zero.
#[derive(Clone, Debug, PartialEq)]
pub struct XElement {
    pub interior: Vec<f64>,
    pub boundary: [f64; 2],
}

impl XElement {
    pub fn zeros(m: usize) -> Self {
        Self {
            interior: vec![0.0; m],
            boundary: [0.0; 2],
        }
    }

    pub fn interior(v: Vec<f64>) -> Self {
        Self {
            interior: v,
            boundary: [0.0; 2],
        }
    }

    pub fn norm(&self) -> f64 {
        let s: f64 = self.interior.iter().map(|x| x * x).sum::<f64>()
            + self.boundary[0] * self.boundary[0]
            + self.boundary[1] * self.boundary[1];
        s.sqrt()
    }
}

/// Work buffers for [`SpectralProblem::drift`].
#[derive(Clone, Debug)]
pub struct Scratch {
    x: XElement,
    phi: Vec<f64>,
}

/// A user-supplied interior forcing `u -> F(u)`.
pub type CustomForcing = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum Nonlinearity {
    Zero,
    Linear(DMatrix<f64>),
    SaturatedPolynomial {
        coefficients: Vec<f64>,
        radius: f64,
        coupling: DMatrix<f64>,
    },
    BoundaryExample(BoundaryCoupling),
    Custom(CustomForcing),
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Zero => write!(f, "Zero"),
            Nonlinearity::Linear(b) => write!(f, "Linear({b:?})"),
            Nonlinearity::SaturatedPolynomial {
                coefficients,
                radius,
                ..
            } => write!(f, "SaturatedPolynomial({coefficients:?}, R={radius})"),
            Nonlinearity::BoundaryExample(b) => write!(f, "BoundaryExample({:?})", b.c),
            Nonlinearity::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Quadrature data for the boundary example on the cosine basis
/// `e_0 = 1`, `e_k = √2 cos(πkx)`.
#[derive(Clone, Debug)]
pub struct BoundaryCoupling {
    pub c: [f64; 3],
    nodes: usize,
    // basis values, node-major: basis[q * m + k] = e_k(x_q)
    basis: Vec<f64>,
    trace_left: Vec<f64>,
    trace_right: Vec<f64>,
}

/// Value of the Neumann cosine basis function `e_k` at `x`.
pub fn cosine_mode(k: usize, x: f64) -> f64 {
    if k == 0 {
        1.0
    } else {
        2f64.sqrt() * (PI * k as f64 * x).cos()
    }
}

impl BoundaryCoupling {
    fn new(c: [f64; 3], m: usize) -> Self {
        // Midpoint nodes integrate products of cosines below the Nyquist
        // index exactly.
        let nodes = 4 * m + 8;
        let mut basis = vec![0.0; nodes * m];
        for q in 0..nodes {
            let x = (q as f64 + 0.5) / nodes as f64;
            for k in 0..m {
                basis[q * m + k] = cosine_mode(k, x);
            }
        }
        let trace_left = (0..m).map(|k| cosine_mode(k, 0.0)).collect();
        let trace_right = (0..m)
            .map(|k| {
                if k == 0 {
                    1.0
                } else if k % 2 == 0 {
                    2f64.sqrt()
                } else {
                    -(2f64.sqrt())
                }
            })
            .collect();
        Self {
            c,
            nodes,
            basis,
            trace_left,
            trace_right,
        }
    }

    fn eval(&self, u: &[f64], out: &mut XElement) {
        let m = u.len();
        out.interior.iter_mut().for_each(|v| *v = 0.0);
        let w = 1.0 / self.nodes as f64;
        for q in 0..self.nodes {
            let row = &self.basis[q * m..(q + 1) * m];
            let phi: f64 = row.iter().zip(u).map(|(e, x)| e * x).sum();
            let g = self.c[0] * phi.tanh() * w;
            for (o, e) in out.interior.iter_mut().zip(row) {
                *o += g * e;
            }
        }
        out.boundary[0] = self.c[1] * u[0].tanh();
        out.boundary[1] = if m > 1 { self.c[2] * u[1].tanh() } else { 0.0 };
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseKind {
    Zero,
    DiagonalLinear,
    Saturated { radius: f64 },
}

#[derive(Clone, Debug)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub slopes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NoiseModel {
    pub fn n_modes(&self) -> usize {
        match self.kind {
            NoiseKind::Zero => 0,
            _ => self.slopes.len(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.kind == NoiseKind::Zero
            || self
                .slopes
                .iter()
                .zip(&self.weights)
                .all(|(s, q)| *s == 0.0 || *q == 0.0)
    }

    /// Hilbert–Schmidt Lipschitz constant `max_k |s_k| √q_k`.
    pub fn lipschitz(&self) -> f64 {
        match self.kind {
            NoiseKind::Zero => 0.0,
            _ => self
                .slopes
                .iter()
                .zip(&self.weights)
                .map(|(s, q)| s.abs() * q.sqrt())
                .fold(0.0, f64::max),
        }
    }

    /// Diagonal coefficient of noise mode `k` at state coordinate `x`.
    #[inline]
    pub fn coefficient(&self, k: usize, x: f64) -> f64 {
        match self.kind {
            NoiseKind::Zero => 0.0,
            NoiseKind::DiagonalLinear => self.slopes[k] * x,
            NoiseKind::Saturated { radius } => self.slopes[k] * radius * (x / radius).tanh(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Block {
    Unstable,
    Stable,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Unstable,
    Stable,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Unstable => "unstable",
            Side::Stable => "stable",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpectralProblem {
    spec: ProblemSpec,
    eigenvalues: Vec<f64>,
    unstable: Vec<usize>,
    stable: Vec<usize>,
    is_unstable: Vec<bool>,
    alpha: f64,
    beta: f64,
    gamma: f64,
    zeta: f64,
    bound_k: f64,
    nonlinearity: Nonlinearity,
    noise: NoiseModel,
    l1: f64,
    l2: f64,
    ladder: Vec<f64>,
    factors: Vec<f64>,
}

fn matrix_from_rows(rows: &[Vec<f64>], m: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidConfig(format!("{what} must be {m}x{m}")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(format!("{what} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

fn spectral_norm(b: &DMatrix<f64>) -> f64 {
    b.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Builds and certifies a problem from its structured description.
pub fn build_problem(spec: &ProblemSpec) -> Result<SpectralProblem> {
    let m = spec.eigenvalues.len();
    if m == 0 {
        return Err(Error::InvalidConfig("at least one mode required".into()));
    }
    if spec.eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidConfig("eigenvalues must be finite".into()));
    }
    let (alpha, beta, gamma, zeta) = (spec.alpha, spec.beta, spec.gamma, spec.zeta);
    if !(beta < zeta && zeta < gamma && gamma < alpha) {
        return Err(Error::OrderingViolation(format!(
            "beta={beta}, zeta={zeta}, gamma={gamma}, alpha={alpha}"
        )));
    }
    if !(spec.bound_k >= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "dichotomy bound K must be >= 1, got {}",
            spec.bound_k
        )));
    }

    let mut is_unstable = vec![false; m];
    match &spec.unstable_modes {
        Some(list) => {
            for &k in list {
                if k >= m || is_unstable[k] {
                    return Err(Error::InvalidConfig(format!("bad unstable mode index {k}")));
                }
                is_unstable[k] = true;
            }
        }
        None => {
            for (k, &l) in spec.eigenvalues.iter().enumerate() {
                is_unstable[k] = l >= alpha;
            }
        }
    }
    for (k, &l) in spec.eigenvalues.iter().enumerate() {
        let ok = if is_unstable[k] { l >= alpha } else { l <= beta };
        if !ok {
            return Err(Error::SpectralGapViolation {
                mode: k,
                lambda: l,
                beta,
                alpha,
            });
        }
    }
    let unstable: Vec<usize> = (0..m).filter(|&k| is_unstable[k]).collect();
    let stable: Vec<usize> = (0..m).filter(|&k| !is_unstable[k]).collect();

    let (nonlinearity, l1) = match &spec.nonlinearity {
        NonlinearitySpec::Zero => (Nonlinearity::Zero, 0.0),
        NonlinearitySpec::Linear { matrix } => {
            let b = matrix_from_rows(matrix, m, "linear matrix")?;
            let l = spectral_norm(&b);
            (Nonlinearity::Linear(b), l)
        }
        NonlinearitySpec::SaturatedPolynomial {
            coefficients,
            radius,
            coupling,
        } => {
            if coefficients.first().is_some_and(|c| *c != 0.0) {
                return Err(Error::NonzeroAtOrigin("nonlinearity"));
            }
            if !(*radius > 0.0) || coefficients.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidConfig(
                    "saturated polynomial needs finite coefficients and radius > 0".into(),
                ));
            }
            let b = match coupling {
                Some(rows) => matrix_from_rows(rows, m, "coupling matrix")?,
                None => DMatrix::identity(m, m),
            };
            let slope: f64 = coefficients
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, c)| j as f64 * c.abs() * radius.powi(j as i32 - 1))
                .sum();
            let l = spectral_norm(&b) * slope;
            (
                Nonlinearity::SaturatedPolynomial {
                    coefficients: coefficients.clone(),
                    radius: *radius,
                    coupling: b,
                },
                l,
            )
        }
        NonlinearitySpec::BoundaryExample { g0, g1, g2 } => {
            let c = [*g0, *g1, *g2];
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig("boundary coefficients must be finite".into()));
            }
            let l = (g0 * g0 + g1 * g1 + g2 * g2).sqrt();
            (Nonlinearity::BoundaryExample(BoundaryCoupling::new(c, m)), l)
        }
    };

    let noise = match &spec.noise {
        NoiseSpec::Zero => NoiseModel {
            kind: NoiseKind::Zero,
            slopes: vec![0.0; m],
            weights: vec![0.0; m],
        },
        NoiseSpec::DiagonalLinear { slopes, weights } => NoiseModel {
            kind: NoiseKind::DiagonalLinear,
            slopes: slopes.clone(),
            weights: weights.clone().unwrap_or_else(|| vec![1.0; m]),
        },
        NoiseSpec::Saturated {
            slopes,
            radius,
            weights,
        } => {
            if !(*radius > 0.0) {
                return Err(Error::InvalidConfig("noise radius must be positive".into()));
            }
            NoiseModel {
                kind: NoiseKind::Saturated { radius: *radius },
                slopes: slopes.clone(),
                weights: weights.clone().unwrap_or_else(|| vec![1.0; m]),
            }
        }
    };
    if noise.slopes.len() != m || noise.weights.len() != m {
        return Err(Error::InvalidConfig(format!(
            "noise slopes and weights need {m} entries"
        )));
    }
    if noise.weights.iter().any(|q| !(*q >= 0.0)) || noise.slopes.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidConfig("noise weights must be >= 0".into()));
    }
    let l2 = noise.lipschitz();

    let ladder = spec.ladder.clone();
    if ladder.len() < 2 || ladder.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidConfig(
            "ladder needs at least two increasing entries".into(),
        ));
    }
    let top = *ladder.last().unwrap();
    let max_rate = spec.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    if !(ladder[0] > max_rate) {
        return Err(Error::InvalidConfig(format!(
            "ladder must lie above the spectrum (max rate {max_rate})"
        )));
    }
    let factors = spec.eigenvalues.iter().map(|l| top / (top - l)).collect();

    let problem = SpectralProblem {
        spec: spec.clone(),
        eigenvalues: spec.eigenvalues.clone(),
        unstable,
        stable,
        is_unstable,
        alpha,
        beta,
        gamma,
        zeta,
        bound_k: spec.bound_k,
        nonlinearity,
        noise,
        l1,
        l2,
        ladder,
        factors,
    };
    problem.check_origin()?;
    Ok(problem)
}

impl SpectralProblem {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }
    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
    pub fn unstable_modes(&self) -> &[usize] {
        &self.unstable
    }
    pub fn stable_modes(&self) -> &[usize] {
        &self.stable
    }
    pub fn is_unstable(&self, k: usize) -> bool {
        self.is_unstable[k]
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn zeta(&self) -> f64 {
        self.zeta
    }
    pub fn bound_k(&self) -> f64 {
        self.bound_k
    }
    pub fn l1(&self) -> f64 {
        self.l1
    }
    pub fn l2(&self) -> f64 {
        self.l2
    }
    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }
    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }
    pub fn ladder(&self) -> &[f64] {
        &self.ladder
    }
    pub fn lambda_top(&self) -> f64 {
        *self.ladder.last().unwrap()
    }
    /// Per-mode regularization factors `λ/(λ−λ_k)` at the top of the ladder.
    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    /// Boundary trace coefficients `(e_k(0), e_k(1))` when the problem has
    /// boundary coupling.
    pub fn boundary_traces(&self) -> Option<(&[f64], &[f64])> {
        match &self.nonlinearity {
            Nonlinearity::BoundaryExample(b) => Some((&b.trace_left, &b.trace_right)),
            _ => None,
        }
    }

    /// Same problem with a different λ-ladder.
    pub fn with_ladder(&self, ladder: Vec<f64>) -> Result<SpectralProblem> {
        let mut spec = self.spec.clone();
        spec.ladder = ladder;
        let mut p = build_problem(&spec)?;
        if let Nonlinearity::Custom(f) = &self.nonlinearity {
            p.nonlinearity = Nonlinearity::Custom(f.clone());
            p.l1 = self.l1;
        }
        Ok(p)
    }

    /// Replaces the nonlinearity by a user callable. The Lipschitz constant
    /// is estimated on random pairs and inflated by 10%.
    pub fn with_custom_nonlinearity(&self, f: CustomForcing, seed: u64) -> Result<SpectralProblem> {
        let m = self.n_modes();
        let mut out = vec![0.0; m];
        f(&vec![0.0; m], &mut out);
        if out.iter().any(|v| *v != 0.0) {
            return Err(Error::NonzeroAtOrigin("nonlinearity"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fu = vec![0.0; m];
        let mut fv = vec![0.0; m];
        let mut ratio: f64 = 0.0;
        for _ in 0..2000 {
            let scale = 10f64.powf(rng.random_range(-2.0..1.0));
            let u: Vec<f64> = (0..m).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..m).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
            f(&u, &mut fu);
            f(&v, &mut fv);
            let num: f64 = fu.iter().zip(&fv).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den: f64 = u.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if den > 0.0 {
                ratio = ratio.max(num / den);
            }
        }
        let mut p = self.clone();
        p.nonlinearity = Nonlinearity::Custom(f);
        p.l1 = 1.1 * ratio;
        Ok(p)
    }

    fn check_origin(&self) -> Result<()> {
        let m = self.n_modes();
        let z = vec![0.0; m];
        let f = self.nonlinearity_x(&z);
        if f.norm() != 0.0 {
            return Err(Error::NonzeroAtOrigin("nonlinearity"));
        }
        if (0..m).any(|k| self.noise.coefficient(k, 0.0) != 0.0) {
            return Err(Error::NonzeroAtOrigin("noise coefficient"));
        }
        Ok(())
    }

    /// Unregularized `F(u)` as an element of the extended space.
    pub fn nonlinearity_x(&self, u: &[f64]) -> XElement {
        let mut out = XElement::zeros(self.n_modes());
        self.nonlinearity_into(u, &mut out);
        out
    }

    fn nonlinearity_into(&self, u: &[f64], out: &mut XElement) {
        let mut phi = vec![0.0; u.len()];
        self.nonlinearity_with(u, out, &mut phi);
    }

    fn nonlinearity_with(&self, u: &[f64], out: &mut XElement, phi: &mut [f64]) {
        match &self.nonlinearity {
            Nonlinearity::Zero => {
                out.interior.iter_mut().for_each(|v| *v = 0.0);
                out.boundary = [0.0; 2];
            }
            Nonlinearity::Linear(b) => {
                for (i, o) in out.interior.iter_mut().enumerate() {
                    *o = (0..u.len()).map(|j| b[(i, j)] * u[j]).sum();
                }
                out.boundary = [0.0; 2];
            }
            Nonlinearity::SaturatedPolynomial {
                coefficients,
                radius,
                coupling,
            } => {
                for (f, x) in phi.iter_mut().zip(u) {
                    let s = x.clamp(-radius, *radius);
                    *f = coefficients.iter().rev().fold(0.0, |acc, c| acc * s + c);
                }
                for (i, o) in out.interior.iter_mut().enumerate() {
                    *o = (0..u.len()).map(|j| coupling[(i, j)] * phi[j]).sum();
                }
                out.boundary = [0.0; 2];
            }
            Nonlinearity::BoundaryExample(b) => b.eval(u, out),
            Nonlinearity::Custom(f) => {
                f(u, &mut out.interior);
                out.boundary = [0.0; 2];
            }
        }
    }

    /// Maps an element of `X` into modal coordinates through `λR_λ` at the
    /// top of the ladder.
    pub fn regularize(&self, g: &XElement, out: &mut [f64]) {
        let traces = self.boundary_traces();
        for (k, o) in out.iter_mut().enumerate() {
            let mut v = g.interior[k];
            if let Some((left, right)) = traces {
                v += g.boundary[0] * left[k] + g.boundary[1] * right[k];
            }
            *o = self.factors[k] * v;
        }
    }

    /// Regularized drift `λR_λ F(u)` in modal coordinates.
    pub fn drift(&self, u: &[f64], scratch: &mut Scratch, out: &mut [f64]) {
        if matches!(self.nonlinearity, Nonlinearity::Zero) {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        self.nonlinearity_with(u, &mut scratch.x, &mut scratch.phi);
        self.regularize(&scratch.x, out);
    }

    pub fn scratch(&self) -> Scratch {
        Scratch {
            x: XElement::zeros(self.n_modes()),
            phi: vec![0.0; self.n_modes()],
        }
    }

    /// Regularized noise contribution `λR_λ σ(u) dW` in modal coordinates.
    pub fn diffusion(&self, u: &[f64], dw: &[f64], out: &mut [f64]) {
        if self.noise.kind == NoiseKind::Zero {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.factors[k] * self.noise.coefficient(k, u[k]) * dw[k];
        }
    }

    /// True when `F` vanishes identically on the unstable block.
    pub fn has_zero_drift(&self) -> bool {
        matches!(self.nonlinearity, Nonlinearity::Zero)
    }

    pub fn block_contains(&self, block: Block, k: usize) -> bool {
        match block {
            Block::Full => true,
            Block::Unstable => self.is_unstable[k],
            Block::Stable => !self.is_unstable[k],
        }
    }
}

/// `T(t) v` restricted to `block`; components outside the block are zeroed.
pub fn semigroup_apply(p: &SpectralProblem, t: f64, v: &[f64], block: Block) -> Result<Vec<f64>> {
    if t < 0.0 && block != Block::Unstable && !p.stable_modes().is_empty() {
        return Err(Error::StableBackwardTime(t));
    }
    Ok(v.iter()
        .enumerate()
        .map(|(k, x)| {
            if p.block_contains(block, k) {
                (p.eigenvalues[k] * t).exp() * x
            } else {
                0.0
            }
        })
        .collect())
}

pub fn project(p: &SpectralProblem, v: &[f64], side: Side) -> Vec<f64> {
    v.iter()
        .enumerate()
        .map(|(k, x)| {
            let keep = match side {
                Side::Unstable => p.is_unstable[k],
                Side::Stable => !p.is_unstable[k],
            };
            if keep {
                *x
            } else {
                0.0
            }
        })
        .collect()
}

/// Itemized contraction constants for both solvers.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GapReport {
    pub eta: f64,
    pub delta: f64,
    pub c_zeta: f64,
    pub pass_unstable: bool,
    pub pass_stable: bool,
    pub terms: GapTerms,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GapTerms {
    pub bound_k: f64,
    pub l1: f64,
    pub l2: f64,
    pub alpha_minus_gamma: f64,
    /// `L1 / (α−γ)`
    pub drift_dichotomy: f64,
    /// `L2 / √(2α−2γ)`, stable side only
    pub noise_dichotomy: f64,
    /// `L1 C_ζ`
    pub drift_convolution: f64,
    /// `L2 C_ζ`
    pub noise_convolution: f64,
}

impl GapReport {
    pub fn from_constants(
        bound_k: f64,
        l1: f64,
        l2: f64,
        alpha_minus_gamma: f64,
        c_zeta: f64,
    ) -> Result<GapReport> {
        if !(alpha_minus_gamma > 0.0) {
            return Err(Error::DegenerateGap(alpha_minus_gamma));
        }
        if !(c_zeta >= 0.0) || !c_zeta.is_finite() {
            return Err(Error::InvalidConfig(format!("C_zeta must be >= 0, got {c_zeta}")));
        }
        let terms = GapTerms {
            bound_k,
            l1,
            l2,
            alpha_minus_gamma,
            drift_dichotomy: l1 / alpha_minus_gamma,
            noise_dichotomy: l2 / (2.0 * alpha_minus_gamma).sqrt(),
            drift_convolution: l1 * c_zeta,
            noise_convolution: l2 * c_zeta,
        };
        let eta = bound_k * (terms.drift_dichotomy + terms.drift_convolution + terms.noise_convolution);
        let delta = bound_k
            * (terms.drift_dichotomy
                + terms.noise_dichotomy
                + terms.drift_convolution
                + terms.noise_convolution);
        Ok(GapReport {
            eta,
            delta,
            c_zeta,
            pass_unstable: eta < 1.0,
            pass_stable: delta < 1.0,
            terms,
        })
    }

    pub fn passes(&self, side: Side) -> bool {
        match side {
            Side::Unstable => self.pass_unstable,
            Side::Stable => self.pass_stable,
        }
    }

    pub fn constant(&self, side: Side) -> f64 {
        match side {
            Side::Unstable => self.eta,
            Side::Stable => self.delta,
        }
    }

    /// Theoretical Lipschitz bound of the graph on `side`; infinite when the
    /// gap condition fails.
    pub fn lipschitz_bound(&self, side: Side) -> f64 {
        let t = &self.terms;
        match side {
            Side::Unstable if self.eta < 1.0 => {
                t.bound_k * self.c_zeta * (t.l1 + t.l2) / (1.0 - self.eta)
            }
            Side::Stable if self.delta < 1.0 => {
                t.bound_k * t.bound_k * (t.drift_dichotomy + t.noise_dichotomy) / (1.0 - self.delta)
            }
            _ => f64::INFINITY,
        }
    }
}

/// Neumann heat example truncated to `m` cosine modes: eigenvalues
/// `(1/2 − k²)π²`, mode 0 unstable, boundary-coupled nonlinearity.
pub fn example_pde_spec(m: usize, g0: f64, g1: f64, g2: f64) -> Result<ProblemSpec> {
    if m < 2 {
        return Err(Error::InvalidConfig(format!("example needs at least 2 modes, got {m}")));
    }
    let pi2 = PI * PI;
    Ok(ProblemSpec {
        eigenvalues: (0..m).map(|k| (0.5 - (k * k) as f64) * pi2).collect(),
        unstable_modes: None,
        alpha: pi2 / 2.0,
        beta: -pi2 / 2.0,
        gamma: 0.0,
        zeta: -pi2 / 4.0,
        bound_k: 1.0,
        nonlinearity: NonlinearitySpec::BoundaryExample { g0, g1, g2 },
        noise: NoiseSpec::Zero,
        ladder: default_ladder(),
    })
}

pub fn gap_unstable(p: &SpectralProblem, c_zeta: f64) -> Result<GapReport> {
    GapReport::from_constants(p.bound_k, p.l1, p.l2, p.alpha - p.gamma, c_zeta)
}

pub fn gap_stable(p: &SpectralProblem, c_zeta: f64) -> Result<GapReport> {
    gap_unstable(p, c_zeta)
}

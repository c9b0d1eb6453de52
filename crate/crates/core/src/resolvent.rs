//! Resolvent machinery for non-densely defined operators: the Neumann
//! boundary resolvent of the heat example, λ-regularization, the λ-ladder with
//! Richardson extrapolation, the `S⋄f` convolution, the convolution modulus
//! `δ(t)` and the constant `C_κ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral_problem::{cosine_mode, Block, SpectralProblem, XElement};
use crate::stochastic::TimeGrid;

/// Growth data `‖R_λ(A)^k‖ ≤ M/(λ−ϑ)^k` for `λ > ϑ`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct HilleYosidaData {
    pub vartheta: f64,
    pub m_bound: f64,
}

impl HilleYosidaData {
    /// Data of the stable block of a diagonal problem: `ϑ = max_{k∈S} λ_k`, `M = 1`.
    pub fn stable_block(p: &SpectralProblem) -> Option<HilleYosidaData> {
        p.stable_modes()
            .iter()
            .map(|&k| p.eigenvalues()[k])
            .reduce(f64::max)
            .map(|vartheta| HilleYosidaData {
                vartheta,
                m_bound: 1.0,
            })
    }
}

/// Data `(a, b, f)` of the boundary problem, `f` sampled on the uniform nodes
/// `x_i = i/(n−1)` of `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryTriple {
    pub a: f64,
    pub b: f64,
    pub f: Vec<f64>,
}

impl BoundaryTriple {
    pub fn nodes(&self) -> usize {
        self.f.len()
    }

    pub fn from_fn(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let h = 1.0 / (n - 1) as f64;
        Self {
            a,
            b,
            f: (0..n).map(|i| f(i as f64 * h)).collect(),
        }
    }
}

// cosh(s·x)cosh(s·(1−y)) / (s·sinh s) for 0 ≤ x ≤ y ≤ 1, with only
// non-positive exponents.
fn neumann_green(s: f64, x: f64, y: f64) -> f64 {
    let e = |t: f64| (-s * t).exp();
    0.5 * e(y - x) * (1.0 + e(2.0 * x)) * (1.0 + e(2.0 * (1.0 - y))) / (s * (1.0 - e(2.0)))
}

/// Solves `λφ − φ'' = f`, `φ'(0) = −a`, `φ'(1) = b` on the nodes of `d`.
pub fn resolvent_boundary(lambda: f64, d: &BoundaryTriple) -> Result<Vec<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::NonpositiveLambda(lambda));
    }
    let n = d.nodes();
    if n < 2 {
        return Err(Error::InvalidConfig("boundary data needs at least 2 nodes".into()));
    }
    if d.f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("forcing must be finite".into()));
    }
    let s = lambda.sqrt();
    let h = 1.0 / (n - 1) as f64;
    let x = |i: usize| i as f64 * h;
    let mut phi = vec![0.0; n];
    for (i, out) in phi.iter_mut().enumerate() {
        let xi = x(i);
        // boundary part: a·G(x, 0) + b·G(x, 1)
        let mut v = d.a * neumann_green(s, 0.0, xi) + d.b * neumann_green(s, xi, 1.0);
        let mut acc = 0.0;
        for (j, fj) in d.f.iter().enumerate() {
            if *fj == 0.0 {
                continue;
            }
            let xj = x(j);
            let g = if xj <= xi {
                neumann_green(s, xj, xi)
            } else {
                neumann_green(s, xi, xj)
            };
            let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            acc += w * g * fj;
        }
        v += h * acc;
        *out = v;
    }
    Ok(phi)
}

/// Cosine coefficients `⟨f, e_k⟩` of a nodal function by the trapezoid rule.
pub fn cosine_coefficients(f: &[f64], n_modes: usize) -> Vec<f64> {
    let n = f.len();
    let h = 1.0 / (n - 1) as f64;
    (0..n_modes)
        .map(|k| {
            f.iter()
                .enumerate()
                .map(|(i, v)| {
                    let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                    w * v * cosine_mode(k, i as f64 * h)
                })
                .sum::<f64>()
                * h
        })
        .collect()
}

/// `λR_λ(A)g` in modal coordinates: mode k scales by `λ/(λ−λ_k)`; boundary
/// data enter through the basis traces.
pub fn lambda_regularize(p: &SpectralProblem, lambda: f64, g: &XElement) -> Result<Vec<f64>> {
    if let Some(k) = p.eigenvalues().iter().position(|l| *l == lambda) {
        return Err(Error::LambdaInSpectrum { lambda, mode: k });
    }
    let max_rate = p.eigenvalues().iter().cloned().fold(f64::MIN, f64::max);
    if lambda <= max_rate {
        return Err(Error::InvalidConfig(format!(
            "lambda {lambda} must exceed the growth bound {max_rate}"
        )));
    }
    let traces = p.boundary_traces();
    Ok((0..p.n_modes())
        .map(|k| {
            let mut v = g.interior[k];
            if let Some((l, r)) = traces {
                v += g.boundary[0] * l[k] + g.boundary[1] * r[k];
            }
            lambda / (lambda - p.eigenvalues()[k]) * v
        })
        .collect())
}

/// `λR_λ(A + shift)` applied to boundary data through the grid resolvent,
/// projected on the first `n_modes` cosines.
pub fn lambda_regularize_boundary(
    lambda: f64,
    shift: f64,
    d: &BoundaryTriple,
    n_modes: usize,
) -> Result<Vec<f64>> {
    let phi = resolvent_boundary(lambda - shift, d)?;
    Ok(cosine_coefficients(&phi, n_modes)
        .into_iter()
        .map(|c| lambda * c)
        .collect())
}

/// Outcome of Richardson extrapolation along the λ-ladder.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LadderResult {
    pub lambdas: Vec<f64>,
    /// `extrapolants[i]` uses ladder entries `0..=i`.
    pub extrapolants: Vec<Vec<f64>>,
    pub limit: Vec<f64>,
    pub last_change: f64,
    pub converged: bool,
}

pub const LADDER_TOL: f64 = 1e-6;

/// Neville extrapolation to `1/λ = 0` of vector values sampled along the ladder.
pub fn richardson(lambdas: &[f64], values: &[Vec<f64>], tol: f64) -> LadderResult {
    assert_eq!(lambdas.len(), values.len());
    let n = lambdas.len();
    let dim = values.first().map_or(0, |v| v.len());
    let h: Vec<f64> = lambdas.iter().map(|l| 1.0 / l).collect();
    let mut extrapolants = Vec::with_capacity(n);
    for c in 0..dim {
        // table[i] holds P_{i..=j}(0) for the current column j.
        let mut table: Vec<f64> = Vec::with_capacity(n);
        for j in 0..n {
            table.push(values[j][c]);
            for i in (0..j).rev() {
                table[i] = (h[j] * table[i] - h[i] * table[i + 1]) / (h[j] - h[i]);
            }
            if c == 0 {
                extrapolants.push(vec![0.0; dim]);
            }
            extrapolants[j][c] = table[0];
        }
    }
    if dim == 0 {
        extrapolants = vec![Vec::new(); n];
    }
    let limit = extrapolants.last().cloned().unwrap_or_default();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let last_change = if n >= 2 {
        let d: Vec<f64> = extrapolants[n - 1]
            .iter()
            .zip(&extrapolants[n - 2])
            .map(|(a, b)| a - b)
            .collect();
        norm(&d)
    } else {
        f64::INFINITY
    };
    let converged = last_change <= tol * norm(&limit);
    LadderResult {
        lambdas: lambdas.to_vec(),
        extrapolants,
        limit,
        last_change,
        converged,
    }
}

/// Ladder entries that lie well above `|λ_k|`, where `λ/(λ−λ_k)` is analytic
/// in `1/λ` with a comfortable radius.
fn usable_ladder(p: &SpectralProblem, rate: f64) -> Vec<f64> {
    p.ladder()
        .iter()
        .cloned()
        .filter(|l| *l >= 2.0 * rate.abs() && *l > rate)
        .collect()
}

fn ladder_for_modes(p: &SpectralProblem, modes: &[usize], g: &XElement) -> Result<LadderResult> {
    let worst = modes
        .iter()
        .map(|&k| p.eigenvalues()[k].abs())
        .fold(0.0, f64::max);
    // Finest entries first: the convergence test then compares against the
    // extrapolant built from the most accurate values.
    let mut lambdas = usable_ladder(p, worst);
    lambdas.reverse();
    if lambdas.len() < 2 {
        return Err(Error::LadderNotConverged {
            diff: f64::INFINITY,
        });
    }
    let values: Vec<Vec<f64>> = lambdas
        .iter()
        .map(|&l| {
            lambda_regularize(p, l, g).map(|v| modes.iter().map(|&k| v[k]).collect())
        })
        .collect::<Result<_>>()?;
    Ok(richardson(&lambdas, &values, LADDER_TOL))
}

/// Unstable projection of an element of `X`, extended to boundary data as
/// the λ→∞ limit of `Π_{0u} λR_λ(A) g`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExtendedProjection {
    pub value: Vec<f64>,
    pub ladder: Option<LadderResult>,
}

pub fn extend_projection(p: &SpectralProblem, g: &XElement) -> Result<ExtendedProjection> {
    let m = p.n_modes();
    let has_boundary = p.boundary_traces().is_some() && g.boundary != [0.0, 0.0];
    if !has_boundary {
        return Ok(ExtendedProjection {
            value: crate::spectral_problem::project(p, &g.interior, crate::spectral_problem::Side::Unstable),
            ladder: None,
        });
    }
    let modes = p.unstable_modes();
    let ladder = ladder_for_modes(p, modes, g)?;
    if !ladder.converged {
        return Err(Error::LadderNotConverged {
            diff: ladder.last_change,
        });
    }
    let mut value = vec![0.0; m];
    for (i, &k) in modes.iter().enumerate() {
        value[k] = ladder.limit[i];
    }
    Ok(ExtendedProjection {
        value,
        ladder: Some(ladder),
    })
}

/// Quadrature rule for convolutions `∫ e^{λ(t−s)} f(s) ds` on a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvolutionRule {
    /// `acc ← e^{λΔt} acc + Δt/2 (e^{λΔt} f_j + f_{j+1})`
    Trapezoid,
    /// `acc ← e^{λΔt}(acc + Δt f_j)`, the rule of the exponential integrator.
    LeftExponential,
}

impl ConvolutionRule {
    #[inline]
    pub fn step(self, decay: f64, acc: f64, f_left: f64, f_right: f64, dt: f64) -> f64 {
        match self {
            ConvolutionRule::Trapezoid => decay * acc + 0.5 * dt * (decay * f_left + f_right),
            ConvolutionRule::LeftExponential => decay * (acc + dt * f_left),
        }
    }
}

/// `(S⋄f)(t_j)` on `block`, with `f` given at every node of `grid`.
pub fn convolve_diamond(
    p: &SpectralProblem,
    f: &[XElement],
    grid: &TimeGrid,
    block: Block,
    rule: ConvolutionRule,
) -> Result<Vec<Vec<f64>>> {
    let m = p.n_modes();
    if f.len() != grid.n_nodes() {
        return Err(Error::GridMismatch(format!(
            "forcing has {} nodes, grid has {}",
            f.len(),
            grid.n_nodes()
        )));
    }
    let modes: Vec<usize> = (0..m).filter(|&k| p.block_contains(block, k)).collect();
    let mut reg = vec![vec![0.0; m]; f.len()];
    for (r, x) in reg.iter_mut().zip(f) {
        p.regularize(x, r);
    }
    let active: Vec<usize> = modes
        .iter()
        .cloned()
        .filter(|&k| reg.iter().any(|r| r[k] != 0.0))
        .collect();
    if !active.is_empty() {
        let probe = XElement {
            interior: vec![1.0; m],
            boundary: if p.boundary_traces().is_some() { [1.0, 1.0] } else { [0.0; 2] },
        };
        let ladder = ladder_for_modes(p, &active, &probe)?;
        if !ladder.converged {
            return Err(Error::LadderNotConverged {
                diff: ladder.last_change,
            });
        }
    }
    let dt = grid.dt();
    let mut out = vec![vec![0.0; m]; f.len()];
    for &k in &active {
        let decay = (p.eigenvalues()[k] * dt).exp();
        let mut acc = 0.0;
        for j in 0..grid.n_steps() {
            acc = rule.step(decay, acc, reg[j][k], reg[j + 1][k], dt);
            out[j + 1][k] = acc;
        }
    }
    Ok(out)
}

/// `C_κ = 2ε max(1, e^{−κρ}) / (1 − e^{(ϑ−κ)ρ})`.
pub fn c_kappa(epsilon: f64, rho: f64, vartheta: f64, kappa: f64) -> Result<f64> {
    if !(kappa > vartheta) {
        return Err(Error::KappaBelowVartheta { kappa, vartheta });
    }
    if !(epsilon > 0.0 && rho > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "epsilon and rho must be positive, got {epsilon}, {rho}"
        )));
    }
    Ok(2.0 * epsilon * (1f64).max((-kappa * rho).exp()) / (1.0 - ((vartheta - kappa) * rho).exp()))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DeltaTable {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub epsilon: f64,
    /// Largest grid time with `M·δ ≤ ε`.
    pub rho_epsilon: Option<f64>,
    pub m_bound: f64,
}

impl DeltaTable {
    /// Admissible `ρ` (grid times with `M·δ(ρ) ≤ ε`) minimizing `C_κ`.
    pub fn optimal_rho(&self, vartheta: f64, kappa: f64) -> Result<Option<(f64, f64)>> {
        let mut best: Option<(f64, f64)> = None;
        for (t, d) in self.times.iter().zip(&self.values) {
            if *t <= 0.0 || self.m_bound * d > self.epsilon {
                continue;
            }
            let c = c_kappa(self.epsilon, *t, vartheta, kappa)?;
            if best.is_none_or(|(_, bc)| c < bc) {
                best = Some((*t, c));
            }
        }
        Ok(best)
    }
}

/// Unit forcings on each stable mode and, for boundary-coupled problems, on
/// each boundary datum.
pub fn unit_probes(p: &SpectralProblem) -> Vec<XElement> {
    let m = p.n_modes();
    let mut probes: Vec<XElement> = p
        .stable_modes()
        .iter()
        .map(|&k| {
            let mut x = XElement::zeros(m);
            x.interior[k] = 1.0;
            x
        })
        .collect();
    if p.boundary_traces().is_some() {
        for side in 0..2 {
            let mut x = XElement::zeros(m);
            x.boundary[side] = 1.0;
            probes.push(x);
        }
    }
    probes
}

/// `δ(t_i)`: the largest ratio `‖(S⋄f)(t_i)‖ / sup‖f‖` over constant probes
/// on the stable block, made non-decreasing.
pub fn estimate_delta(
    p: &SpectralProblem,
    grid: &TimeGrid,
    probes: &[XElement],
    epsilon: f64,
    hy: HilleYosidaData,
) -> Result<DeltaTable> {
    let mut usable: Vec<&XElement> = probes.iter().filter(|x| x.norm() > 0.0).collect();
    let fallback;
    if usable.is_empty() {
        fallback = unit_probes(p);
        usable = fallback.iter().collect();
    }
    let n = grid.n_nodes();
    let mut values = vec![0.0f64; n];
    for probe in usable {
        let path = convolve_diamond(
            p,
            &vec![probe.clone(); n],
            grid,
            Block::Stable,
            ConvolutionRule::Trapezoid,
        )?;
        let scale = probe.norm();
        for (v, x) in values.iter_mut().zip(&path) {
            let r = x.iter().map(|y| y * y).sum::<f64>().sqrt() / scale;
            *v = (*v).max(r);
        }
    }
    for j in 1..n {
        values[j] = values[j].max(values[j - 1]);
    }
    let times: Vec<f64> = (0..n).map(|j| grid.time(j) - grid.t_start()).collect();
    let rho_epsilon = times
        .iter()
        .zip(&values)
        .filter(|(t, d)| **t > 0.0 && hy.m_bound * **d <= epsilon)
        .map(|(t, _)| *t)
        .last();
    Ok(DeltaTable {
        times,
        values,
        epsilon,
        rho_epsilon,
        m_bound: hy.m_bound,
    })
}

/// How `C_ζ` was obtained.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CZeta {
    pub value: f64,
    pub source: String,
    pub epsilon: Option<f64>,
    pub rho: Option<f64>,
    pub vartheta: Option<f64>,
    pub kappa: f64,
}

/// `C_ζ` from `c_kappa` with `κ = ζ`, `ϑ` the stable growth bound and `ρ`
/// chosen among admissible grid times of the stable-block `δ` table.
pub fn c_zeta_auto(p: &SpectralProblem, epsilon: f64) -> Result<CZeta> {
    let kappa = p.zeta();
    let Some(hy) = HilleYosidaData::stable_block(p) else {
        return Ok(CZeta {
            value: 0.0,
            source: "empty stable block".into(),
            epsilon: Some(epsilon),
            rho: None,
            vartheta: None,
            kappa,
        });
    };
    if !(kappa > hy.vartheta) {
        return Err(Error::KappaBelowVartheta {
            kappa,
            vartheta: hy.vartheta,
        });
    }
    let horizon = 4.0 / (kappa - hy.vartheta);
    let steps = 4000;
    let grid = TimeGrid::from_origin(0, horizon / steps as f64, steps);
    let table = estimate_delta(p, &grid, &[], epsilon, hy)?;
    let (rho, value) = table
        .optimal_rho(hy.vartheta, kappa)?
        .ok_or_else(|| Error::InvalidConfig(format!("no admissible rho for epsilon {epsilon}")))?;
    Ok(CZeta {
        value,
        source: "delta-table".into(),
        epsilon: Some(epsilon),
        rho: Some(rho),
        vartheta: Some(hy.vartheta),
        kappa,
    })
}

/// Regularization error study for smooth interior data.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RegularizationRow {
    pub lambda: f64,
    /// `‖λR_λ g − g‖`
    pub error: f64,
    /// `‖E_i − g‖` for the Richardson extrapolant through entries `0..=i`.
    pub extrapolant: f64,
}

pub fn regularization_study(
    p: &SpectralProblem,
    g: &[f64],
    lambdas: &[f64],
) -> Result<Vec<RegularizationRow>> {
    let x = XElement::interior(g.to_vec());
    let values: Vec<Vec<f64>> = lambdas
        .iter()
        .map(|&l| lambda_regularize(p, l, &x))
        .collect::<Result<_>>()?;
    let rich = richardson(lambdas, &values, LADDER_TOL);
    let dist = |v: &[f64]| {
        v.iter()
            .zip(g)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    Ok(lambdas
        .iter()
        .enumerate()
        .map(|(i, &lambda)| RegularizationRow {
            lambda,
            error: dist(&values[i]),
            extrapolant: dist(&rich.extrapolants[i]),
        })
        .collect())
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

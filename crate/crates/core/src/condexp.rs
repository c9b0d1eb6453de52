//! Conditional expectations `E[·|F_t]` over sample ensembles.
//!
//! Itô integrals of adapted integrands have zero conditional mean and are
//! replaced by zero, with a raw Monte Carlo check of that claim. Drift
//! functionals are projected by least squares onto a polynomial basis in the
//! conditioning coordinates (Markovian conditioning on the state at `t`).

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastic::SampleMatrix;

/// Designs with a condition number above this get a ridge penalty.
pub const RIDGE_THRESHOLD: f64 = 1e10;
/// Relative ridge penalty, scaled by the trace of the Gram matrix.
pub const RIDGE_PENALTY: f64 = 1e-10;
/// Condition number, after ridging, beyond which the solve is refused.
pub const MAX_CONDITION: f64 = 1e14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Monomial,
    Hermite,
}

/// Products of univariate polynomials in standardized coordinates. Each term
/// is an exponent vector over the conditioning coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionBasis {
    pub family: Family,
    pub n_coords: usize,
    pub terms: Vec<Vec<u32>>,
}

fn total_degree_terms(n: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0; n]];
    for d in 1..=degree {
        let mut level = Vec::new();
        let mut e = vec![0u32; n];
        fn rec(i: usize, left: u32, e: &mut Vec<u32>, level: &mut Vec<Vec<u32>>) {
            if i + 1 == e.len() {
                e[i] = left;
                level.push(e.clone());
                e[i] = 0;
                return;
            }
            for k in (0..=left).rev() {
                e[i] = k;
                rec(i + 1, left - k, e, level);
            }
            e[i] = 0;
        }
        if n > 0 {
            rec(0, d, &mut e, &mut level);
        }
        out.extend(level);
    }
    out
}

impl RegressionBasis {
    /// All monomials of total degree `≤ degree`.
    pub fn polynomial(n_coords: usize, degree: u32) -> Self {
        Self {
            family: Family::Monomial,
            n_coords,
            terms: total_degree_terms(n_coords, degree),
        }
    }

    /// Tensor products of Hermite polynomials with each degree `≤ degree`.
    pub fn hermite(n_coords: usize, degree: u32) -> Self {
        let mut terms = vec![vec![]];
        for _ in 0..n_coords {
            let mut next = Vec::new();
            for t in &terms {
                for d in 0..=degree {
                    let mut e: Vec<u32> = t.clone();
                    e.push(d);
                    next.push(e);
                }
            }
            terms = next;
        }
        terms.sort_by_key(|e| e.iter().sum::<u32>());
        Self {
            family: Family::Hermite,
            n_coords,
            terms,
        }
    }

    /// Total degree `≤ primary_degree` in the `primary` coordinates plus total
    /// degree `≤ secondary_degree` in the `secondary` ones, without cross terms.
    pub fn split(
        n_coords: usize,
        primary: &[usize],
        secondary: &[usize],
        primary_degree: u32,
        secondary_degree: u32,
    ) -> Self {
        let embed = |idx: &[usize], e: &[u32]| {
            let mut full = vec![0u32; n_coords];
            for (&i, &d) in idx.iter().zip(e) {
                full[i] = d;
            }
            full
        };
        let mut terms: Vec<Vec<u32>> = total_degree_terms(primary.len(), primary_degree)
            .iter()
            .map(|e| embed(primary, e))
            .collect();
        for e in total_degree_terms(secondary.len(), secondary_degree).iter().skip(1) {
            terms.push(embed(secondary, e));
        }
        Self {
            family: Family::Monomial,
            n_coords,
            terms,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

#[inline]
fn univariate(family: Family, d: u32, z: f64) -> f64 {
    match family {
        Family::Monomial => z.powi(d as i32),
        Family::Hermite => {
            let (mut a, mut b) = (1.0, z);
            if d == 0 {
                return 1.0;
            }
            for k in 1..d {
                let c = z * b - k as f64 * a;
                a = b;
                b = c;
            }
            b
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegressionDiagnostics {
    pub basis_size: usize,
    /// Basis size after dropping terms in degenerate coordinates.
    pub effective_size: usize,
    pub condition: f64,
    pub ridge: bool,
    pub r2: Vec<f64>,
    pub residual_norm: f64,
    /// `‖Φᵀ(y − Φβ)‖ / n`, zero for an exact least-squares solve.
    pub normal_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CondexpEstimate {
    pub fitted: SampleMatrix,
    pub diagnostics: RegressionDiagnostics,
}

/// Column means and spreads; `None` marks a coordinate that is constant
/// across the ensemble up to rounding.
fn standardization(state: &SampleMatrix) -> Vec<Option<(f64, f64)>> {
    let n = state.rows() as f64;
    let mean = state.mean();
    let mut var = vec![0.0; state.cols()];
    for i in 0..state.rows() {
        for (c, x) in state.row(i).iter().enumerate() {
            var[c] += (x - mean[c]) * (x - mean[c]);
        }
    }
    mean.iter()
        .zip(&var)
        .map(|(mu, v)| {
            let sd = (v / n).sqrt();
            (sd > 1e-12 * (mu.abs() + sd) && sd > 0.0).then_some((*mu, sd))
        })
        .collect()
}

/// Least-squares projection of `target` on the basis evaluated at `state`.
pub fn condexp_lsmc(
    target: &SampleMatrix,
    state: &SampleMatrix,
    basis: &RegressionBasis,
) -> Result<CondexpEstimate> {
    let n = target.rows();
    let dcols = target.cols();
    if state.rows() != n {
        return Err(Error::GridMismatch(format!(
            "target has {n} samples, state has {}",
            state.rows()
        )));
    }
    if state.cols() != basis.n_coords {
        return Err(Error::InvalidConfig(format!(
            "basis expects {} coordinates, state has {}",
            basis.n_coords,
            state.cols()
        )));
    }
    if n == 0 {
        return Err(Error::Underdetermined {
            samples: 0,
            basis: basis.len(),
        });
    }
    // E[c|F] = c, returned bit-exactly.
    if target.is_deterministic() {
        return Ok(finish(target, target.clone(), basis.len(), 1, 1.0, false, 0.0));
    }
    let scaling = standardization(state);
    let terms: Vec<&Vec<u32>> = basis
        .terms
        .iter()
        .filter(|e| {
            e.iter().sum::<u32>() > 0
                && e.iter().zip(&scaling).all(|(d, s)| *d == 0 || s.is_some())
        })
        .collect();
    let p = terms.len() + 1;
    let mean = target.mean();

    if p == 1 {
        let mut fitted = SampleMatrix::zeros(n, dcols);
        for i in 0..n {
            fitted.row_mut(i).copy_from_slice(&mean);
        }
        return Ok(finish(target, fitted, basis.len(), 1, 1.0, false, 0.0));
    }
    if n <= 3 * p {
        return Err(Error::Underdetermined {
            samples: n,
            basis: p,
        });
    }

    // Design: intercept plus non-constant terms, evaluated on standardized coordinates.
    let mut phi = vec![0.0; n * p];
    let mut z = vec![0.0; basis.n_coords];
    for i in 0..n {
        for (c, (x, s)) in state.row(i).iter().zip(&scaling).enumerate() {
            z[c] = s.map_or(0.0, |(mu, sd)| (x - mu) / sd);
        }
        let row = &mut phi[i * p..(i + 1) * p];
        row[0] = 1.0;
        for (t, e) in terms.iter().enumerate() {
            row[t + 1] = e
                .iter()
                .enumerate()
                .filter(|(_, d)| **d > 0)
                .map(|(c, d)| univariate(basis.family, *d, z[c]))
                .product();
        }
    }
    // Centering the target keeps the intercept well scaled.
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DMatrix::<f64>::zeros(p, dcols);
    for i in 0..n {
        let row = &phi[i * p..(i + 1) * p];
        let y = target.row(i);
        for a in 0..p {
            for b in a..p {
                gram[(a, b)] += row[a] * row[b];
            }
            for c in 0..dcols {
                rhs[(a, c)] += row[a] * (y[c] - mean[c]);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    gram /= n as f64;
    rhs /= n as f64;

    let condition = condition_number(&gram);
    let mut ridge = false;
    let mut system = gram.clone();
    if condition > RIDGE_THRESHOLD {
        ridge = true;
        let pen = RIDGE_PENALTY * gram.trace();
        for a in 0..p {
            system[(a, a)] += pen;
        }
        let post = condition_number(&system);
        if post > MAX_CONDITION {
            return Err(Error::IllConditionedDesign { condition: post });
        }
    }
    let chol = system
        .clone()
        .cholesky()
        .ok_or(Error::IllConditionedDesign { condition })?;
    let beta = chol.solve(&rhs);

    let mut fitted = SampleMatrix::zeros(n, dcols);
    for i in 0..n {
        let row = &phi[i * p..(i + 1) * p];
        for (c, out) in fitted.row_mut(i).iter_mut().enumerate() {
            *out = mean[c] + (0..p).map(|a| row[a] * beta[(a, c)]).sum::<f64>();
        }
    }
    // Orthogonality of the residual to the basis.
    let mut normal = DMatrix::<f64>::zeros(p, dcols);
    for i in 0..n {
        let row = &phi[i * p..(i + 1) * p];
        for c in 0..dcols {
            let r = target.row(i)[c] - fitted.row(i)[c];
            for a in 0..p {
                normal[(a, c)] += row[a] * r;
            }
        }
    }
    let normal_residual = normal.norm() / n as f64;
    Ok(finish(
        target,
        fitted,
        basis.len(),
        p,
        condition,
        ridge,
        normal_residual,
    ))
}

fn condition_number(g: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(g.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn finish(
    target: &SampleMatrix,
    fitted: SampleMatrix,
    basis_size: usize,
    effective_size: usize,
    condition: f64,
    ridge: bool,
    normal_residual: f64,
) -> CondexpEstimate {
    let n = target.rows();
    let mean = target.mean();
    let mut ss_res = vec![0.0; target.cols()];
    let mut ss_tot = vec![0.0; target.cols()];
    for i in 0..n {
        for c in 0..target.cols() {
            let y = target.row(i)[c];
            ss_res[c] += (y - fitted.row(i)[c]).powi(2);
            ss_tot[c] += (y - mean[c]).powi(2);
        }
    }
    let r2 = ss_res
        .iter()
        .zip(&ss_tot)
        .map(|(r, t)| if *t > 0.0 { 1.0 - r / t } else { 1.0 })
        .collect();
    CondexpEstimate {
        fitted,
        diagnostics: RegressionDiagnostics {
            basis_size,
            effective_size,
            condition,
            ridge,
            r2,
            residual_norm: (ss_res.iter().sum::<f64>() / n.max(1) as f64).sqrt(),
            normal_residual,
        },
    }
}

/// An `F_τ`-measurable anchor: one vector for every sample, or per-sample values.
#[derive(Clone, Debug, PartialEq)]
pub enum Anchor {
    Deterministic(Vec<f64>),
    Random(SampleMatrix),
}

impl Anchor {
    pub fn dim(&self) -> usize {
        match self {
            Anchor::Deterministic(v) => v.len(),
            Anchor::Random(m) => m.cols(),
        }
    }

    pub fn to_samples(&self, n: usize) -> SampleMatrix {
        match self {
            Anchor::Deterministic(v) => SampleMatrix::broadcast(v, n),
            Anchor::Random(m) => m.clone(),
        }
    }

    pub fn ms_norm(&self) -> f64 {
        match self {
            Anchor::Deterministic(v) => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Anchor::Random(m) => m.ms_norm(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Anchor::Deterministic(v) => v.iter().all(|x| *x == 0.0),
            Anchor::Random(m) => m.as_slice().iter().all(|x| *x == 0.0),
        }
    }
}

/// `E[x|F_t]` for an anchor; deterministic anchors pass through unchanged.
pub fn condexp_anchor(
    x: &Anchor,
    state: &SampleMatrix,
    basis: &RegressionBasis,
) -> Result<CondexpEstimate> {
    match x {
        Anchor::Deterministic(v) => {
            let fitted = SampleMatrix::broadcast(v, state.rows());
            Ok(CondexpEstimate {
                fitted,
                diagnostics: RegressionDiagnostics {
                    basis_size: basis.len(),
                    effective_size: 0,
                    condition: 1.0,
                    ridge: false,
                    r2: vec![1.0; v.len()],
                    residual_norm: 0.0,
                    normal_residual: 0.0,
                },
            })
        }
        Anchor::Random(m) => condexp_lsmc(m, state, basis),
    }
}

/// Zero estimate of `E[∫_t^T g dW | F_t]` with a raw check on realized values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItoZeroCheck {
    pub window: f64,
    pub raw_mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub pass: bool,
}

/// `realized` holds one realization of the stochastic integral per sample.
pub fn condexp_ito_zero(
    realized: &SampleMatrix,
    window: f64,
    adapted: bool,
) -> Result<(SampleMatrix, ItoZeroCheck)> {
    if !adapted {
        return Err(Error::AdaptednessViolation);
    }
    let n = realized.rows();
    let zeros = SampleMatrix::zeros(n, realized.cols());
    if window == 0.0 {
        return Ok((
            zeros,
            ItoZeroCheck {
                window,
                raw_mean: vec![0.0; realized.cols()],
                std_error: vec![0.0; realized.cols()],
                pass: true,
            },
        ));
    }
    let mean = realized.mean();
    let mut var = vec![0.0; realized.cols()];
    for i in 0..n {
        for (c, x) in realized.row(i).iter().enumerate() {
            var[c] += (x - mean[c]).powi(2);
        }
    }
    let se: Vec<f64> = var
        .iter()
        .map(|v| (v / (n.max(2) - 1) as f64 / n as f64).sqrt())
        .collect();
    let pass = mean.iter().zip(&se).all(|(m, s)| m.abs() <= 4.0 * s);
    Ok((
        zeros,
        ItoZeroCheck {
            window,
            raw_mean: mean,
            std_error: se,
            pass,
        },
    ))
}

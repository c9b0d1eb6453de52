//! Reference computations that do not go through the Lyapunov–Perron solvers:
//! linear invariant-manifold algebra, a dense single-path fixed point, moment
//! formulas, and refinement harnesses.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::condexp::{condexp_lsmc, RegressionBasis};
use crate::error::{Error, Result};
use crate::spectral_problem::{
    build_problem, NoiseSpec, NonlinearitySpec, ProblemSpec, Side, SpectralProblem,
    DEFAULT_LADDER,
};
use crate::stochastic::{integrate_mild, sample_wiener, SampleMatrix, TimeGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub name: String,
    pub reference: Vec<f64>,
    pub value: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleResult {
    /// Pass when every component differs by at most `tolerance`.
    pub fn compare(name: &str, reference: Vec<f64>, value: Vec<f64>, tolerance: f64) -> Self {
        let pass = reference.len() == value.len()
            && reference
                .iter()
                .zip(&value)
                .all(|(r, v)| (r - v).abs() <= tolerance);
        Self {
            name: name.to_string(),
            reference,
            value,
            tolerance,
            pass,
        }
    }

    pub fn max_error(&self) -> f64 {
        self.reference
            .iter()
            .zip(&self.value)
            .map(|(r, v)| (r - v).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlopeOracle {
    /// `M` with the manifold `{(b, M b)}` in (base, graph) coordinates.
    pub slope: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Invariant graph `y = M x` of the linear system
/// `d/dt (x, y) = (diag(A_b, A_g) + B)(x, y)`, with `x` the base block.
///
/// Solves `(A_g + B_gg) M + B_gb − M (A_b + B_bb) − M B_bg M = 0` by
/// fixed-point iteration on the Sylvester form, each step a Kronecker solve.
pub fn linear_manifold_oracle(
    a_base: &DMatrix<f64>,
    a_graph: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<SlopeOracle> {
    let nb = a_base.nrows();
    let ng = a_graph.nrows();
    if b.nrows() != nb + ng || b.ncols() != nb + ng {
        return Err(Error::InvalidConfig(format!(
            "coupling must be {0}x{0}",
            nb + ng
        )));
    }
    let b_bb = b.view((0, 0), (nb, nb)).into_owned();
    let b_bg = b.view((0, nb), (nb, ng)).into_owned();
    let b_gb = b.view((nb, 0), (ng, nb)).into_owned();
    let b_gg = b.view((nb, nb), (ng, ng)).into_owned();
    let left = a_graph + &b_gg;
    let right = a_base + &b_bb;
    // vec(L M − M R) = (I ⊗ L − Rᵀ ⊗ I) vec(M), column-major.
    let op = DMatrix::<f64>::identity(nb, nb).kronecker(&left)
        - right.transpose().kronecker(&DMatrix::<f64>::identity(ng, ng));
    let sv = op.singular_values();
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if !(smin > 1e-12 * smax.max(1.0)) {
        return Err(Error::NoSeparation);
    }
    let lu = op.lu();
    let residual_of = |m: &DMatrix<f64>| {
        (&left * m + &b_gb - m * &right - m * &b_bg * m).norm()
    };
    let mut m = DMatrix::<f64>::zeros(ng, nb);
    for it in 1..=500 {
        let rhs = &m * &b_bg * &m - &b_gb;
        let v = lu
            .solve(&DVector::from_column_slice(rhs.as_slice()))
            .ok_or(Error::NoSeparation)?;
        let next = DMatrix::from_column_slice(ng, nb, v.as_slice());
        let change = (&next - &m).norm();
        m = next;
        if !m.iter().all(|x| x.is_finite()) {
            return Err(Error::NoSeparation);
        }
        if change <= 1e-15 * (1.0 + m.norm()) {
            let residual = residual_of(&m);
            return Ok(SlopeOracle {
                slope: m,
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::NoSeparation)
}

/// Parameters of [`deterministic_lp_oracle`]; the window is
/// `[τ − N dt, τ]` (unstable side) or `[τ, τ + N dt]` (stable side) with
/// `N = ⌈horizon/dt⌉`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterministicLpParams {
    pub tau: f64,
    pub horizon: f64,
    pub dt: f64,
    pub gamma: f64,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeterministicGraph {
    pub h: Vec<f64>,
    /// Fixed-point path, one row per node.
    pub path: Vec<DVector<f64>>,
    pub iterations: usize,
}

/// Single-path fixed point of the discrete Lyapunov–Perron map for `σ ≡ 0`,
/// with dense propagators and direct double sums for the unstable block.
pub fn deterministic_lp_oracle(
    p: &SpectralProblem,
    x: &[f64],
    params: &DeterministicLpParams,
    side: Side,
) -> Result<DeterministicGraph> {
    if !p.noise().is_zero() {
        return Err(Error::InvalidConfig("the deterministic oracle needs zero noise".into()));
    }
    let m = p.n_modes();
    let dt = params.dt;
    let steps = ((params.horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    let start = match side {
        Side::Unstable => params.tau - steps as f64 * dt,
        Side::Stable => params.tau,
    };
    let lam = DMatrix::from_diagonal(&DVector::from_column_slice(p.eigenvalues()));
    let pu = DMatrix::from_diagonal(&DVector::from_fn(m, |k, _| {
        if p.is_unstable(k) { 1.0 } else { 0.0 }
    }));
    let ps = DMatrix::<f64>::identity(m, m) - &pu;
    let step_s = &ps * (&lam * dt).exp();
    // back[l] = Π_u e^{−Λ l dt}
    let mut back = Vec::with_capacity(steps + 1);
    let one_back = &pu * (&lam * (-dt)).exp();
    back.push(pu.clone());
    for l in 1..=steps {
        let prev: &DMatrix<f64> = &back[l - 1];
        back.push(prev * &one_back);
    }
    let x = DVector::from_column_slice(x);
    let mut path: Vec<DVector<f64>> = (0..=steps)
        .map(|j| {
            let t = start + j as f64 * dt - params.tau;
            match side {
                Side::Unstable if j == steps => &pu * &x,
                Side::Unstable => &pu * (&lam * t).exp() * &x,
                Side::Stable => &ps * (&lam * t).exp() * &x,
            }
        })
        .collect();
    let mut scratch = p.scratch();
    let mut buf = vec![0.0; m];
    for it in 1..=params.max_iter {
        let forcing: Vec<DVector<f64>> = path
            .iter()
            .map(|u| {
                p.drift(u.as_slice(), &mut scratch, &mut buf);
                DVector::from_column_slice(&buf) * dt
            })
            .collect();
        let mut next = Vec::with_capacity(steps + 1);
        let mut s = match side {
            Side::Unstable => DVector::zeros(m),
            Side::Stable => &ps * &x,
        };
        for j in 0..=steps {
            let mut u = DVector::zeros(m);
            if side == Side::Unstable {
                u += &back[steps - j] * &x;
            }
            for l in j..steps {
                u -= &back[l - j] * &forcing[l];
            }
            next.push(&u + &s);
            if j < steps {
                s = &step_s * (&s + &ps * &forcing[j]);
            }
        }
        let d = next
            .iter()
            .zip(&path)
            .enumerate()
            .map(|(j, (a, b))| {
                let t = start + j as f64 * dt - params.tau;
                (-params.gamma * t).exp() * (a - b).norm()
            })
            .fold(0.0, f64::max);
        path = next;
        if d <= params.tol {
            let at = match side {
                Side::Unstable => &ps * &path[steps],
                Side::Stable => &pu * &path[0],
            };
            return Ok(DeterministicGraph {
                h: at.as_slice().to_vec(),
                path,
                iterations: it,
            });
        }
    }
    Err(Error::InvalidConfig(format!(
        "deterministic oracle did not converge in {} iterations",
        params.max_iter
    )))
}

/// `E[U(t)²] = u0² e^{(2λ+s²)t}` for `dU = λU dt + sU dW`.
pub fn moment_oracle(lambda: f64, s: f64, u0: f64, t: f64) -> f64 {
    u0 * u0 * ((2.0 * lambda + s * s) * t).exp()
}

/// Second moment of the exponential Euler–Maruyama chain
/// `u_{j+1} = e^{λΔt}(1 + sΔW_j) u_j` after `steps` steps.
pub fn discrete_moment_oracle(lambda: f64, s: f64, u0: f64, dt: f64, steps: usize) -> f64 {
    u0 * u0 * ((2.0 * lambda * dt).exp() * (1.0 + s * s * dt)).powi(steps as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefinementParameter {
    Dt,
    NSamples,
    TBack,
    Lambda,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    pub value: f64,
    pub observable: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementTable {
    pub parameter: RefinementParameter,
    pub rows: Vec<RefinementRow>,
    /// Least-squares slope of `log error` against `log value`.
    pub slope: f64,
    /// Errors decrease along the refinement direction.
    pub monotone: bool,
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Evaluates `f(value) = (observable, error)` over at least three parameter
/// values. Refinement runs toward smaller `dt`/`1/λ` and larger `n`/`T`.
pub fn refinement_study(
    parameter: RefinementParameter,
    values: &[f64],
    f: impl Fn(f64) -> Result<(f64, f64)>,
) -> Result<RefinementTable> {
    if values.len() < 3 {
        return Err(Error::InvalidConfig("a refinement study needs at least 3 values".into()));
    }
    let rows: Vec<RefinementRow> = values
        .iter()
        .map(|&value| {
            f(value).map(|(observable, error)| RefinementRow {
                value,
                observable,
                error,
            })
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let es: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let slope = fit_loglog(&xs, &es);
    // Order rows from coarse to fine before judging monotonicity.
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let finer_is_smaller = matches!(parameter, RefinementParameter::Dt);
    order.sort_by(|&a, &b| {
        let (va, vb) = (rows[a].value, rows[b].value);
        if finer_is_smaller { vb.total_cmp(&va) } else { va.total_cmp(&vb) }
    });
    let monotone = order.windows(2).all(|w| rows[w[1]].error < rows[w[0]].error);
    Ok(RefinementTable {
        parameter,
        rows,
        slope,
        monotone,
    })
}

fn scalar_problem(lambda: f64, s: f64) -> Result<SpectralProblem> {
    let lo = lambda.min(0.0) - 1.0;
    build_problem(&ProblemSpec {
        eigenvalues: vec![lambda],
        unstable_modes: Some(vec![]),
        alpha: lambda.abs() + 2.0,
        beta: lambda.max(lo),
        gamma: lambda.abs() + 1.0,
        zeta: lambda.max(lo) + 0.5,
        bound_k: 1.0,
        nonlinearity: NonlinearitySpec::Zero,
        noise: NoiseSpec::DiagonalLinear {
            slopes: vec![s],
            weights: None,
        },
        ladder: DEFAULT_LADDER.to_vec(),
    })
}

/// Strong error `sqrt(E|U(T) − u_N|²)` of the integrator on the scalar
/// linear SDE, against the exact solution driven by the same Brownian path.
pub fn strong_order_study(
    lambda: f64,
    s: f64,
    t_end: f64,
    levels: &[usize],
    n_samples: usize,
    seed: u64,
) -> Result<RefinementTable> {
    let p = scalar_problem(lambda, s)?;
    let finest = *levels.iter().max().ok_or(Error::InvalidConfig("no levels".into()))?;
    let fine_steps = 1usize << finest;
    let fine = TimeGrid::new(0.0, t_end / fine_steps as f64, fine_steps)?;
    let w = sample_wiener(seed, &fine, p.noise(), n_samples)?;
    let s_eff = p.factors()[0] * s;
    let exact: Vec<f64> = (0..n_samples)
        .map(|i| {
            let wt: f64 = (0..fine_steps).map(|j| w.increment(i, j, 0)).sum();
            ((lambda - 0.5 * s_eff * s_eff) * t_end + s_eff * wt).exp()
        })
        .collect();
    let u0 = SampleMatrix::broadcast(&[1.0], n_samples);
    let dts: Vec<f64> = levels.iter().map(|l| t_end / (1usize << l) as f64).collect();
    refinement_study(RefinementParameter::Dt, &dts, |dt| {
        let steps = (t_end / dt).round() as usize;
        let coarse = w.coarsen(fine_steps / steps)?;
        let grid = *coarse.grid();
        let path = integrate_mild(&p, &u0, &grid, &coarse)?;
        let end = path.node(steps);
        let err = (end
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n_samples as f64)
            .sqrt();
        Ok((end.iter().sum::<f64>() / n_samples as f64, err))
    })
}

/// RMS error over `replicas` independent seeds of the Monte Carlo estimate of
/// `E[u_N²]`, against the exact moment of the discrete chain.
pub fn mc_order_study(
    lambda: f64,
    s: f64,
    t_end: f64,
    steps: usize,
    sample_sizes: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<RefinementTable> {
    let p = scalar_problem(lambda, s)?;
    let dt = t_end / steps as f64;
    let grid = TimeGrid::new(0.0, dt, steps)?;
    let truth = discrete_moment_oracle(lambda, p.factors()[0] * s, 1.0, dt, steps);
    let values: Vec<f64> = sample_sizes.iter().map(|&n| n as f64).collect();
    refinement_study(RefinementParameter::NSamples, &values, |nf| {
        let n = nf as usize;
        let u0 = SampleMatrix::broadcast(&[1.0], n);
        let mut sq = 0.0;
        let mut mean_est = 0.0;
        for r in 0..replicas {
            let w = sample_wiener(seed.wrapping_add(r as u64 * 7919), &grid, p.noise(), n)?;
            let path = integrate_mild(&p, &u0, &grid, &w)?;
            let est = path.node(steps).iter().map(|u| u * u).sum::<f64>() / n as f64;
            sq += (est - truth).powi(2);
            mean_est += est;
        }
        Ok((mean_est / replicas as f64, (sq / replicas as f64).sqrt()))
    })
}

/// LSMC recovery of `E[W(τ)|F_t] = W(t)` and `E[W(τ)²|F_t] = W(t)² + (τ−t)`.
///
/// Each verdict compares the RMS gap between fitted and exact values against
/// `4·sqrt(p σ̂²/n)`, the 4σ band of an ordinary least-squares fit with `p`
/// basis functions and residual variance `σ̂²`.
pub fn brownian_condexp_oracle(
    n_samples: usize,
    t: f64,
    tau: f64,
    seed: u64,
) -> Result<[OracleResult; 2]> {
    if !(0.0 < t && t < tau) {
        return Err(Error::InvalidConfig("need 0 < t < tau".into()));
    }
    let unit = scalar_problem(-1.0, 1.0)?;
    let g1 = TimeGrid::new(0.0, t, 1)?;
    let g2 = TimeGrid::new(0.0, tau - t, 1)?;
    let w1 = sample_wiener(seed, &g1, unit.noise(), n_samples)?;
    let w2 = sample_wiener(seed ^ 0x9e37_79b9_7f4a_7c15, &g2, unit.noise(), n_samples)?;
    let wt = SampleMatrix::from_vec(n_samples, 1, w1.step(0).to_vec());
    let wtau: Vec<f64> = wt
        .as_slice()
        .iter()
        .zip(w2.step(0))
        .map(|(a, b)| a + b)
        .collect();
    let basis = RegressionBasis::polynomial(1, 2);
    let cases: [(&str, Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>); 2] = [
        ("E[W(tau)|F_t]", Box::new(|w| w), Box::new(|w| w)),
        (
            "E[W(tau)^2|F_t]",
            Box::new(|w| w * w),
            Box::new(move |w| w * w + (tau - t)),
        ),
    ];
    let mut out = Vec::with_capacity(2);
    for (name, target_of, exact_of) in cases.iter() {
        let target = SampleMatrix::from_vec(
            n_samples,
            1,
            wtau.iter().map(|v| target_of(*v)).collect(),
        );
        let est = condexp_lsmc(&target, &wt, &basis)?;
        let exact: Vec<f64> = wt.as_slice().iter().map(|v| exact_of(*v)).collect();
        let gap = (est
            .fitted
            .as_slice()
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n_samples as f64)
            .sqrt();
        let p = est.diagnostics.effective_size as f64;
        let band = 4.0 * (p / n_samples as f64).sqrt() * est.diagnostics.residual_norm;
        out.push(OracleResult {
            name: name.to_string(),
            reference: vec![0.0],
            value: vec![gap],
            tolerance: band,
            pass: gap <= band,
        });
    }
    let b = out.pop().unwrap();
    let a = out.pop().unwrap();
    Ok([a, b])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_mode(b: Vec<Vec<f64>>) -> SpectralProblem {
        build_problem(&ProblemSpec {
            eigenvalues: vec![1.0, -1.0],
            unstable_modes: None,
            alpha: 1.0,
            beta: -1.0,
            gamma: 0.0,
            zeta: -0.5,
            bound_k: 1.0,
            nonlinearity: NonlinearitySpec::Linear { matrix: b },
            noise: NoiseSpec::Zero,
            ladder: DEFAULT_LADDER.to_vec(),
        })
        .unwrap()
    }

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn zero_coupling_gives_flat_graph() {
        let o = linear_manifold_oracle(&scalar(1.0), &scalar(-1.0), &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(o.slope[(0, 0)], 0.0);
    }

    #[test]
    fn scalar_invariance_slope() {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.1, 0.0]);
        let o = linear_manifold_oracle(&scalar(1.0), &scalar(-1.0), &b).unwrap();
        assert!((o.slope[(0, 0)] - 0.05).abs() < 1e-15);
        assert!(o.residual < 1e-10);
        // Stable graph over the stable coordinate: coupling into the unstable mode.
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.1, 0.0]);
        let o = linear_manifold_oracle(&scalar(-1.0), &scalar(1.0), &b).unwrap();
        assert!((o.slope[(0, 0)] + 0.05).abs() < 1e-15);
    }

    #[test]
    fn riccati_residual_with_full_coupling() {
        let b = DMatrix::from_row_slice(3, 3, &[0.05, 0.02, -0.03, 0.1, -0.02, 0.04, 0.07, 0.01, 0.03]);
        let a_b = scalar(1.0);
        let a_g = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -3.0]));
        let o = linear_manifold_oracle(&a_b, &a_g, &b).unwrap();
        assert!(o.residual < 1e-10, "{}", o.residual);
    }

    #[test]
    fn overlapping_spectra_rejected() {
        assert!(matches!(
            linear_manifold_oracle(&scalar(1.0), &scalar(1.0), &DMatrix::zeros(2, 2)),
            Err(Error::NoSeparation)
        ));
    }

    fn params() -> DeterministicLpParams {
        DeterministicLpParams {
            tau: 0.0,
            horizon: 12.0,
            dt: 1e-3,
            gamma: 0.0,
            tol: 1e-13,
            max_iter: 100,
        }
    }

    #[test]
    fn deterministic_oracle_zero_forcing() {
        let p = two_mode(vec![vec![0.0; 2]; 2]);
        let g = deterministic_lp_oracle(&p, &[0.7, 0.0], &params(), Side::Unstable).unwrap();
        assert_eq!(g.h, vec![0.0, 0.0]);
        assert_eq!(g.iterations, 1);
    }

    #[test]
    fn deterministic_oracle_matches_linear_slope() {
        let p = two_mode(vec![vec![0.0, 0.0], vec![0.1, 0.0]]);
        let g = deterministic_lp_oracle(&p, &[0.8, 0.0], &params(), Side::Unstable).unwrap();
        assert!((g.h[1] / 0.8 - 0.05).abs() < 1e-4, "{}", g.h[1] / 0.8);
        assert_eq!(g.h[0], 0.0);
        let p = two_mode(vec![vec![0.0, 0.1], vec![0.0, 0.0]]);
        let g = deterministic_lp_oracle(&p, &[0.0, 0.8], &params(), Side::Stable).unwrap();
        assert!((g.h[0] / 0.8 + 0.05).abs() < 1e-4, "{}", g.h[0] / 0.8);
    }

    #[test]
    fn moments() {
        assert!((moment_oracle(-1.0, 0.5, 1.0, 1.0) - 0.17377394345044514).abs() < 1e-15);
        assert_eq!(moment_oracle(-1.0, 0.0, 2.0, 0.0), 4.0);
        assert!((moment_oracle(0.3, 0.0, 1.0, 2.0) - 1.2f64.exp()).abs() < 1e-15);
        let d = discrete_moment_oracle(-1.0, 0.5, 1.0, 1e-5, 100_000);
        assert!((d - moment_oracle(-1.0, 0.5, 1.0, 1.0)).abs() < 1e-5);
    }

    #[test]
    fn refinement_needs_three_points() {
        assert!(refinement_study(RefinementParameter::Dt, &[0.1, 0.2], |v| Ok((v, v))).is_err());
        let t = refinement_study(RefinementParameter::Dt, &[0.4, 0.2, 0.1], |v| Ok((v, v * v))).unwrap();
        assert!((t.slope - 2.0).abs() < 1e-12);
        assert!(t.monotone);
        let t = refinement_study(RefinementParameter::NSamples, &[10.0, 100.0, 1000.0], |v| {
            Ok((v, 1.0 / v.sqrt()))
        })
        .unwrap();
        assert!((t.slope + 0.5).abs() < 1e-12);
        assert!(t.monotone);
    }

    #[test]
    fn strong_order_is_one_half() {
        let t = strong_order_study(-1.0, 1.0, 1.0, &[3, 4, 5, 6, 7], 2000, 11).unwrap();
        assert!((t.slope - 0.5).abs() < 0.2, "{:?}", t);
    }

    #[test]
    fn brownian_oracles_within_band() {
        let [a, b] = brownian_condexp_oracle(20_000, 0.5, 1.0, 3).unwrap();
        assert!(a.pass, "{a:?}");
        assert!(b.pass, "{b:?}");
    }

    #[test]
    fn never_calls_the_solvers() {
        let src = include_str!("validate.rs");
        let needle = ["lyapunov", "_perron"].concat();
        assert!(!src.contains(&needle));
    }
}

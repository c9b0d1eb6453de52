use serde::{Deserialize, Serialize};

use super::backward::unstable_graph_driven;
use super::forward::stable_graph_driven;
use super::{
    resolve_c_zeta, FixedPointTrace, LpConfig, LpSolution,
    RegressionSummary, Truncation,
};
use crate::condexp::{Anchor, ItoZeroCheck};
use crate::error::{Error, Result};
use crate::resolvent::CZeta;
use crate::spectral_problem::{gap_stable, gap_unstable, GapReport, Side, SpectralProblem};
use crate::stochastic::{
    integrate_mild, sample_wiener, ProcessEnsemble, SampleMatrix, TimeGrid, WienerEnsemble,
};

/// Graph value `h(x, τ)` of the unstable manifold or the stable set.
#[derive(Clone, Debug)]
pub struct ManifoldGraph {
    pub side: Side,
    pub tau: f64,
    /// Per-sample anchor, full modal vectors supported on the `side` block.
    pub anchor: SampleMatrix,
    /// Per-sample graph value, supported on the complementary block.
    pub h: SampleMatrix,
    /// `‖h − h'‖` against the extra map evaluation.
    pub consistency: f64,
    pub solution: LpSolution,
}

impl ManifoldGraph {
    pub(crate) fn from_solution(
        p: &SpectralProblem,
        solution: LpSolution,
        side: Side,
        tol: f64,
    ) -> Result<ManifoldGraph> {
        let at = solution.process.snapshot(solution.anchor_node);
        let n = at.rows();
        let m = at.cols();
        let mut anchor = SampleMatrix::zeros(n, m);
        let mut h = SampleMatrix::zeros(n, m);
        let mut h_check = SampleMatrix::zeros(n, m);
        for i in 0..n {
            for k in 0..m {
                let on_side = p.is_unstable(k) == (side == Side::Unstable);
                if on_side {
                    anchor.row_mut(i)[k] = at.row(i)[k];
                } else {
                    h.row_mut(i)[k] = at.row(i)[k];
                    h_check.row_mut(i)[k] = solution.check_state.row(i)[k];
                }
            }
        }
        let consistency = h.sub(&h_check).ms_norm();
        if consistency > 2.0 * tol {
            return Err(Error::ConsistencyFailure {
                difference: consistency,
                tolerance: 2.0 * tol,
            });
        }
        Ok(ManifoldGraph {
            side,
            tau: solution.tau,
            anchor,
            h,
            consistency,
            solution,
        })
    }

    /// Sample mean of `h`.
    pub fn h_mean(&self) -> Vec<f64> {
        self.h.mean()
    }

    pub fn summary(&self) -> GraphSummary {
        let s = &self.solution;
        GraphSummary {
            side: self.side.as_str().to_string(),
            tau: self.tau,
            n_samples: self.h.rows(),
            anchor_mean: self.anchor.mean(),
            h_mean: self.h.mean(),
            h_ms_norm: self.h.ms_norm(),
            consistency: self.consistency,
            residual: s.residual,
            trace: s.trace.clone(),
            gap: s.gap.clone(),
            c_zeta: s.c_zeta.clone(),
            truncation: s.truncation.clone(),
            martingale: s.martingale.clone(),
            martingale_pass: s.martingale_pass(),
            regression: s.regression.clone(),
        }
    }
}

/// Serializable digest of a graph evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub side: String,
    pub tau: f64,
    pub n_samples: usize,
    pub anchor_mean: Vec<f64>,
    pub h_mean: Vec<f64>,
    pub h_ms_norm: f64,
    pub consistency: f64,
    pub residual: f64,
    pub trace: FixedPointTrace,
    pub gap: GapReport,
    pub c_zeta: CZeta,
    pub truncation: Truncation,
    pub martingale: Vec<ItoZeroCheck>,
    pub martingale_pass: bool,
    pub regression: RegressionSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzCertificate {
    pub side: String,
    pub theoretical: f64,
    pub empirical: f64,
    pub ratios: Vec<f64>,
    pub slack: f64,
    pub pass: bool,
}

fn graph(p: &SpectralProblem, x: Anchor, cfg: &LpConfig, side: Side) -> Result<ManifoldGraph> {
    graph_driven(p, x, cfg, side, None)
}

fn graph_driven(
    p: &SpectralProblem,
    x: Anchor,
    cfg: &LpConfig,
    side: Side,
    driver: Option<&ProcessEnsemble>,
) -> Result<ManifoldGraph> {
    match side {
        Side::Unstable => unstable_graph_driven(p, &x, cfg, driver),
        Side::Stable => stable_graph_driven(p, &x, cfg, driver),
    }
}

/// Deterministic anchor pairs in the ball of radius `radius` on the `side`
/// block, from a low-discrepancy sequence.
pub fn anchor_pairs(p: &SpectralProblem, side: Side, count: usize, radius: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let modes: Vec<usize> = match side {
        Side::Unstable => p.unstable_modes().to_vec(),
        Side::Stable => p.stable_modes().to_vec(),
    };
    let d = modes.len().max(1) as f64;
    let mut counter = 0u64;
    let mut point = || {
        let mut v = vec![0.0; p.n_modes()];
        for &k in &modes {
            counter += 1;
            // additive recurrence with the golden ratio
            let u = (counter as f64 * 0.618_033_988_749_894_9).fract();
            v[k] = radius * (2.0 * u - 1.0) / d.sqrt();
        }
        v
    };
    (0..count).map(|_| (point(), point())).collect()
}

/// Largest `‖h(x₁)−h(x₂)‖/‖x₁−x₂‖` over the pairs, against the bound from
/// the gap report. Both graphs of a pair share one noise ensemble.
pub fn lipschitz_certify(
    p: &SpectralProblem,
    cfg: &LpConfig,
    side: Side,
    pairs: &[(Vec<f64>, Vec<f64>)],
    slack: f64,
) -> Result<LipschitzCertificate> {
    let mut ratios = Vec::with_capacity(pairs.len());
    let mut theoretical = None;
    for (a, b) in pairs {
        let dx: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
        if dx == 0.0 {
            ratios.push(0.0);
            continue;
        }
        let ga = graph(p, Anchor::Deterministic(a.clone()), cfg, side)?;
        let gb = graph(p, Anchor::Deterministic(b.clone()), cfg, side)?;
        theoretical.get_or_insert(ga.solution.gap.lipschitz_bound(side));
        ratios.push(ga.h.sub(&gb.h).ms_norm() / dx);
    }
    let theoretical = match theoretical {
        Some(t) => t,
        None => {
            let c = resolve_c_zeta(p, cfg)?.value;
            let gap = match side {
                Side::Unstable => gap_unstable(p, c)?,
                Side::Stable => gap_stable(p, c)?,
            };
            gap.lipschitz_bound(side)
        }
    };
    let empirical = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(LipschitzCertificate {
        side: side.as_str().to_string(),
        theoretical,
        empirical,
        ratios,
        slack,
        pass: empirical <= theoretical * (1.0 + slack),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub side: String,
    pub tau: f64,
    pub t0: f64,
    pub dt: f64,
    pub n_samples: usize,
    /// `‖y′ − h(x′, τ+t0)‖` in `L²(Ω)`.
    pub residual: f64,
    pub before: GraphSummary,
    pub after: GraphSummary,
}

/// Flows `x + h(x, τ)` to `τ + t0` and measures its distance from the graph
/// there, with the noise shared between the flow and both graph evaluations.
pub fn invariance_residual(
    p: &SpectralProblem,
    x: &[f64],
    cfg: &LpConfig,
    t0: f64,
    side: Side,
) -> Result<InvarianceReport> {
    if !(t0 > 0.0) {
        return Err(Error::InvalidConfig(format!("t0 must be positive, got {t0}")));
    }
    let steps = (t0 / cfg.dt).round() as usize;
    if steps == 0 || ((steps as f64) * cfg.dt - t0).abs() > 1e-9 * t0.max(1.0) {
        return Err(Error::GridMismatch(format!("t0 = {t0} is not a multiple of dt = {}", cfg.dt)));
    }
    let p = match &cfg.ladder {
        Some(l) => p.with_ladder(l.clone())?,
        None => p.clone(),
    };
    let first = graph(&p, Anchor::Deterministic(x.to_vec()), cfg, side)?;
    let before = first.summary();
    let mut u0 = first.anchor.clone();
    for (a, b) in u0.as_mut_slice().iter_mut().zip(first.h.as_slice()) {
        *a += b;
    }
    drop(first);

    let grid = TimeGrid::new(cfg.tau, cfg.dt, steps)?;
    let noise = if p.noise().is_zero() {
        WienerEnsemble::zeros(&grid, u0.rows(), p.n_modes())
    } else {
        sample_wiener(cfg.seed, &grid, p.noise(), u0.rows())?
    };
    let path = integrate_mild(&p, &u0, &grid, &noise)?;
    let end = path.snapshot(steps);
    let n = end.rows();
    let m = end.cols();
    let mut x_new = SampleMatrix::zeros(n, m);
    let mut y_new = SampleMatrix::zeros(n, m);
    for i in 0..n {
        for k in 0..m {
            if p.is_unstable(k) == (side == Side::Unstable) {
                x_new.row_mut(i)[k] = end.row(i)[k];
            } else {
                y_new.row_mut(i)[k] = end.row(i)[k];
            }
        }
    }
    let shifted = LpConfig {
        tau: grid.t_end(),
        ..cfg.clone()
    };
    let anchor = if x_new.is_deterministic() {
        Anchor::Deterministic(x_new.row(0).to_vec())
    } else {
        Anchor::Random(x_new)
    };
    // The new anchor is a function of the flow, so the flow joins the
    // regression coordinates of the second solve.
    let second = graph_driven(&p, anchor, &shifted, side, Some(&path))?;
    let residual = y_new.sub(&second.h).ms_norm();
    Ok(InvarianceReport {
        side: side.as_str().to_string(),
        tau: cfg.tau,
        t0,
        dt: cfg.dt,
        n_samples: n,
        residual,
        before,
        after: second.summary(),
    })
}

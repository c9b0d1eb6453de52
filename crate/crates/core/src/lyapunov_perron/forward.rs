use serde::{Deserialize, Serialize};

use super::graph::ManifoldGraph;
use super::kernel::{apply_map, MapOutput};
use super::{anchor_rows, iterate, setup, setup_driven, FixedPointTrace, LpConfig, LpSolution, Outcome};
use crate::condexp::Anchor;
use crate::error::{Error, Result};
use crate::spectral_problem::{Side, SpectralProblem};
use crate::stochastic::{FiltrationTag, ProcessEnsemble, SampleMatrix, TimeGrid};

/// Applies the forward map once to an iterate on `[τ, τ+T_fwd]`.
pub fn lp_forward_map(
    p: &SpectralProblem,
    xi: &ProcessEnsemble,
    x: &Anchor,
    cfg: &LpConfig,
) -> Result<MapOutput> {
    let s = setup(p, cfg, Side::Stable, x.ms_norm())?;
    let rows = anchor_rows(&s.p, x, cfg.n_samples, Side::Stable)?;
    apply_map(&s, xi, &rows, cfg.checkpoints)
}

/// Initial iterate `e^{Λ_s(t−τ)} x` on the stable block.
fn initial_forward(
    p: &SpectralProblem,
    rows: &SampleMatrix,
    grid: &TimeGrid,
    tau: f64,
    seed: u64,
) -> ProcessEnsemble {
    let n = rows.rows();
    let m = p.n_modes();
    let mut xi = ProcessEnsemble::zeros(grid, n, m);
    xi.set_filtration(Some(FiltrationTag { seed }));
    for j in 0..grid.n_nodes() {
        let t = grid.time(j) - tau;
        let node = xi.node_mut(j);
        for i in 0..n {
            for &k in p.stable_modes() {
                node[i * m + k] = (p.eigenvalues()[k] * t).exp() * rows.row(i)[k];
            }
        }
    }
    xi
}

/// The starting iterate of [`lp_forward_solve`], on the window `cfg` selects.
pub fn lp_forward_initial(p: &SpectralProblem, x: &Anchor, cfg: &LpConfig) -> Result<ProcessEnsemble> {
    let s = setup(p, cfg, Side::Stable, x.ms_norm())?;
    let rows = anchor_rows(&s.p, x, cfg.n_samples, Side::Stable)?;
    Ok(initial_forward(&s.p, &rows, &s.grid, cfg.tau, s.noise.seed()))
}

/// Result of a forward solve. Non-convergence means the anchor is judged
/// outside the stable set rather than an error.
#[derive(Clone, Debug)]
pub struct ForwardOutcome {
    pub membership: bool,
    pub trace: FixedPointTrace,
    pub solution: Option<LpSolution>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipRow {
    pub scale: f64,
    pub membership: bool,
    pub iterations: usize,
}

pub fn lp_forward_solve(p: &SpectralProblem, x: &Anchor, cfg: &LpConfig) -> Result<ForwardOutcome> {
    forward_solve(p, x, cfg, None)
}

pub(crate) fn forward_solve(
    p: &SpectralProblem,
    x: &Anchor,
    cfg: &LpConfig,
    driver: Option<&ProcessEnsemble>,
) -> Result<ForwardOutcome> {
    let s = setup_driven(p, cfg, Side::Stable, x.ms_norm(), driver)?;
    let rows = anchor_rows(&s.p, x, cfg.n_samples, Side::Stable)?;
    let init = initial_forward(&s.p, &rows, &s.grid, cfg.tau, s.noise.seed());
    match iterate(&s, init, cfg, &rows) {
        Outcome::Converged(sol) => Ok(ForwardOutcome {
            membership: true,
            trace: sol.trace.clone(),
            solution: Some(*sol),
            failure: None,
        }),
        Outcome::Failed { trace, error } => match error {
            Error::MaxIterExceeded(_) | Error::NonfiniteState { .. } => Ok(ForwardOutcome {
                membership: false,
                trace,
                solution: None,
                failure: Some(error.to_string()),
            }),
            other => Err(other),
        },
    }
}

/// `h^s(x, τ) = Π_u ξ̂(τ)`; fails when `x` is not in the stable set.
pub fn stable_graph(p: &SpectralProblem, x: &Anchor, cfg: &LpConfig) -> Result<ManifoldGraph> {
    stable_graph_driven(p, x, cfg, None)
}

pub(crate) fn stable_graph_driven(
    p: &SpectralProblem,
    x: &Anchor,
    cfg: &LpConfig,
    driver: Option<&ProcessEnsemble>,
) -> Result<ManifoldGraph> {
    let out = forward_solve(p, x, cfg, driver)?;
    match out.solution {
        Some(sol) => ManifoldGraph::from_solution(p, sol, Side::Stable, cfg.tol),
        None => Err(Error::MaxIterExceeded(Box::new(out.trace))),
    }
}

/// Membership of `scale·x` for each scale.
pub fn membership_sweep(
    p: &SpectralProblem,
    x: &[f64],
    scales: &[f64],
    cfg: &LpConfig,
) -> Result<Vec<MembershipRow>> {
    scales
        .iter()
        .map(|&scale| {
            let v: Vec<f64> = x.iter().map(|c| c * scale).collect();
            let out = lp_forward_solve(p, &Anchor::Deterministic(v), cfg)?;
            Ok(MembershipRow {
                scale,
                membership: out.membership,
                iterations: out.trace.iterations,
            })
        })
        .collect()
}

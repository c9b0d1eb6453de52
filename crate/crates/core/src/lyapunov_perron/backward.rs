use super::graph::ManifoldGraph;
use super::kernel::{apply_map, MapOutput};
use super::{anchor_rows, iterate, setup, setup_driven, LpConfig, LpSolution, Outcome};
use crate::condexp::Anchor;
use crate::error::Result;
use crate::spectral_problem::{Side, SpectralProblem};
use crate::stochastic::{FiltrationTag, ProcessEnsemble, SampleMatrix, TimeGrid};

/// Applies the backward map once to an iterate on `[τ−T_back, τ]`.
///
/// The window, noise and regression basis are rebuilt from `cfg`, so `xi`
/// must live on the grid that `cfg` produces for this anchor.
pub fn lp_backward_map(
    p: &SpectralProblem,
    xi: &ProcessEnsemble,
    x: &Anchor,
    cfg: &LpConfig,
) -> Result<MapOutput> {
    let s = setup(p, cfg, Side::Unstable, x.ms_norm())?;
    let rows = anchor_rows(&s.p, x, cfg.n_samples, Side::Unstable)?;
    apply_map(&s, xi, &rows, cfg.checkpoints)
}

/// Initial iterate `e^{Λ_u(t−τ)} E[x]`, with `x` itself at `τ`.
pub(crate) fn initial_backward(
    p: &SpectralProblem,
    rows: &SampleMatrix,
    grid: &TimeGrid,
    tau: f64,
    seed: u64,
) -> ProcessEnsemble {
    let n = rows.rows();
    let m = p.n_modes();
    let mean = if rows.is_deterministic() {
        rows.row(0).to_vec()
    } else {
        rows.mean()
    };
    let mut xi = ProcessEnsemble::zeros(grid, n, m);
    xi.set_filtration(Some(FiltrationTag { seed }));
    let last = grid.n_steps();
    for j in 0..=last {
        let t = grid.time(j) - tau;
        let node = xi.node_mut(j);
        for i in 0..n {
            for &k in p.unstable_modes() {
                node[i * m + k] = if j == last {
                    rows.row(i)[k]
                } else {
                    (p.eigenvalues()[k] * t).exp() * mean[k]
                };
            }
        }
    }
    xi
}

/// Fixed point of the backward map for the anchor `x` at `τ`.
pub fn lp_backward_solve(p: &SpectralProblem, x: &Anchor, cfg: &LpConfig) -> Result<LpSolution> {
    backward_solve(p, x, cfg, None)
}

fn backward_solve(
    p: &SpectralProblem,
    x: &Anchor,
    cfg: &LpConfig,
    driver: Option<&ProcessEnsemble>,
) -> Result<LpSolution> {
    let s = setup_driven(p, cfg, Side::Unstable, x.ms_norm(), driver)?;
    let rows = anchor_rows(&s.p, x, cfg.n_samples, Side::Unstable)?;
    let init = initial_backward(&s.p, &rows, &s.grid, cfg.tau, s.noise.seed());
    match iterate(&s, init, cfg, &rows) {
        Outcome::Converged(sol) => Ok(*sol),
        Outcome::Failed { error, .. } => Err(error),
    }
}

/// `h^u(x, τ) = Π_s ξ̄(τ)`, cross-checked against the stable part of one more
/// map evaluation at `τ`.
pub fn unstable_graph(p: &SpectralProblem, x: &Anchor, cfg: &LpConfig) -> Result<ManifoldGraph> {
    unstable_graph_driven(p, x, cfg, None)
}

pub(crate) fn unstable_graph_driven(
    p: &SpectralProblem,
    x: &Anchor,
    cfg: &LpConfig,
    driver: Option<&ProcessEnsemble>,
) -> Result<ManifoldGraph> {
    let sol = backward_solve(p, x, cfg, driver)?;
    ManifoldGraph::from_solution(p, sol, Side::Unstable, cfg.tol)
}

/// The starting iterate of [`lp_backward_solve`], on the window `cfg` selects.
pub fn lp_backward_initial(
    p: &SpectralProblem,
    x: &Anchor,
    cfg: &LpConfig,
) -> Result<ProcessEnsemble> {
    let s = setup(p, cfg, Side::Unstable, x.ms_norm())?;
    let rows = anchor_rows(&s.p, x, cfg.n_samples, Side::Unstable)?;
    Ok(initial_backward(&s.p, &rows, &s.grid, cfg.tau, s.noise.seed()))
}

//! Lyapunov–Perron fixed points: the backward map for the unstable manifold,
//! the forward map for the stable set, graph extraction, Lipschitz
//! certificates and the invariance residual.
//!
//! Both maps share one discrete kernel. On the window grid the stable block is
//! advanced forward with the exponential Euler rule of the integrator, the
//! unstable block is summed backward from the terminal node and projected on
//! `F_t` by regression. A discrete fixed point is therefore an orbit of
//! [`integrate_mild`](crate::stochastic::integrate_mild) up to the regression.

mod backward;
mod forward;
mod graph;
mod kernel;

pub use backward::{lp_backward_initial, lp_backward_map, lp_backward_solve, unstable_graph};
pub use forward::{
    lp_forward_initial, lp_forward_map, lp_forward_solve, membership_sweep, stable_graph,
    ForwardOutcome, MembershipRow,
};
pub use graph::{
    anchor_pairs, invariance_residual, lipschitz_certify, GraphSummary, InvarianceReport, LipschitzCertificate,
    ManifoldGraph,
};
pub use kernel::{MapOutput, RegressionSummary};

use serde::{Deserialize, Serialize};

use crate::condexp::{Anchor, ItoZeroCheck, RegressionBasis};
use crate::error::{Error, Result};
use crate::resolvent::{c_zeta_auto, CZeta};
use crate::spectral_problem::{gap_stable, gap_unstable, GapReport, Side, SpectralProblem};
use crate::stochastic::{
    ms_norm, sample_wiener, ProcessEnsemble, SampleMatrix, TimeGrid, WienerEnsemble,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BasisChoice {
    /// Degree 2 in the unstable coordinates plus degree 1 in the stable ones.
    Default,
    Polynomial { degree: u32 },
    Hermite { degree: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpConfig {
    pub tau: f64,
    /// Backward truncation horizon; chosen from the tail bound when absent.
    pub t_back: Option<f64>,
    pub t_fwd: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub n_samples: usize,
    pub dt: f64,
    pub seed: u64,
    /// Replaces the problem's λ-ladder when set.
    pub ladder: Option<Vec<f64>>,
    /// User override of `C_ζ`.
    pub c_zeta: Option<f64>,
    pub epsilon: f64,
    pub basis: BasisChoice,
    /// Adds `W(t) − W(t_start)` to the regression coordinates.
    pub condition_on_noise: bool,
    /// Nodes per window at which the martingale-zero check runs.
    pub checkpoints: usize,
    /// Solve even when the gap condition fails.
    pub force: bool,
}

impl Default for LpConfig {
    fn default() -> Self {
        Self {
            tau: 0.0,
            t_back: None,
            t_fwd: None,
            tol: 1e-3,
            max_iter: 60,
            n_samples: 1000,
            dt: 1e-3,
            seed: 0,
            ladder: None,
            c_zeta: None,
            epsilon: 0.05,
            basis: BasisChoice::Default,
            condition_on_noise: false,
            checkpoints: 4,
            force: false,
        }
    }
}

impl LpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidConfig(s));
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.max_iter == 0 || self.n_samples == 0 {
            return bad("max_iter and n_samples must be at least 1".into());
        }
        for (name, t) in [("t_back", self.t_back), ("t_fwd", self.t_fwd)] {
            if let Some(t) = t {
                if !(t > 0.0) || !t.is_finite() {
                    return bad(format!("{name} must be positive, got {t}"));
                }
            }
        }
        if let Some(c) = self.c_zeta {
            if !(c >= 0.0) || !c.is_finite() {
                return bad(format!("c_zeta must be nonnegative, got {c}"));
            }
        }
        TimeGrid::new(self.tau, self.dt, 0)?;
        Ok(())
    }
}

/// Per-iteration differences of the fixed-point iteration in the weighted norm.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FixedPointTrace {
    pub differences: Vec<f64>,
    /// `d_{n+1}/d_n` for consecutive nonzero differences.
    pub ratios: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FixedPointTrace {
    fn push(&mut self, d: f64) {
        if let Some(&prev) = self.differences.last() {
            if prev > 0.0 && d > 0.0 {
                self.ratios.push(d / prev);
            }
        }
        self.differences.push(d);
        self.iterations += 1;
    }

    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub horizon: f64,
    pub steps: usize,
    /// `K e^{−r T} B` with `r` the decay rate of the weighted tail.
    pub tail: f64,
    pub tolerance: f64,
    pub rate: f64,
    pub automatic: bool,
}

/// Everything a converged solve produces.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub side: Side,
    pub tau: f64,
    pub process: ProcessEnsemble,
    /// Node of `τ` on the window grid.
    pub anchor_node: usize,
    pub trace: FixedPointTrace,
    /// Weighted-norm distance between the fixed point and its image.
    pub residual: f64,
    /// State at `τ` of the extra map evaluation.
    pub check_state: SampleMatrix,
    pub gap: GapReport,
    pub c_zeta: CZeta,
    pub truncation: Truncation,
    pub martingale: Vec<ItoZeroCheck>,
    pub regression: RegressionSummary,
}

pub(crate) struct Setup {
    pub p: SpectralProblem,
    pub side: Side,
    pub tau: f64,
    pub gamma: f64,
    pub gap: GapReport,
    pub c_zeta: CZeta,
    pub truncation: Truncation,
    pub grid: TimeGrid,
    pub noise: WienerEnsemble,
    pub basis: RegressionBasis,
    pub extra: Option<ExtraCoords>,
}

/// Additional adapted regression coordinates, node-major `[node][sample][q]`.
pub(crate) struct ExtraCoords {
    pub q: usize,
    pub n: usize,
    pub data: Vec<f64>,
}

impl ExtraCoords {
    pub fn node(&self, j: usize) -> &[f64] {
        let w = self.n * self.q;
        &self.data[j * w..(j + 1) * w]
    }
}

/// Lays out the extra coordinates: `W(t_j) − W(t_0)` when conditioning on the
/// noise, then the driver's state at `min(t_j, driver end)` for nodes at or
/// after the driver's start and zero before it.
fn extra_coords(
    grid: &TimeGrid,
    noise: &WienerEnsemble,
    noisy: bool,
    on_noise: bool,
    driver: Option<&ProcessEnsemble>,
    n: usize,
) -> Result<Option<ExtraCoords>> {
    let qn = if on_noise { noise.n_noise() } else { 0 };
    let qd = driver.map_or(0, |d| d.n_modes());
    let q = qn + qd;
    if q == 0 {
        return Ok(None);
    }
    if let Some(d) = driver {
        let dg = d.grid();
        if d.n_samples() != n || (dg.dt() - grid.dt()).abs() > 1e-12 * grid.dt() {
            return Err(Error::GridMismatch("driver does not match the solver ensemble".into()));
        }
        if let Some(tag) = d.filtration() {
            if noisy && tag.seed != noise.seed() {
                return Err(Error::AdaptednessViolation);
            }
        }
    }
    let nodes = grid.n_nodes();
    let mut data = vec![0.0; nodes * n * q];
    let mut acc = vec![0.0; n * qn];
    for j in 0..nodes {
        if j > 0 && qn > 0 {
            for (a, d) in acc.iter_mut().zip(noise.step(j - 1)) {
                *a += d;
            }
        }
        let out = &mut data[j * n * q..(j + 1) * n * q];
        let dnode = driver.and_then(|d| {
            let k = grid.origin() + j as i64 - d.grid().origin();
            (k >= 0).then(|| (k as usize).min(d.grid().n_steps()))
        });
        for i in 0..n {
            let row = &mut out[i * q..(i + 1) * q];
            row[..qn].copy_from_slice(&acc[i * qn..(i + 1) * qn]);
            if let (Some(d), Some(k)) = (driver, dnode) {
                row[qn..].copy_from_slice(d.state(i, k));
            }
        }
    }
    Ok(Some(ExtraCoords { q, n, data }))
}

pub fn resolve_c_zeta(p: &SpectralProblem, cfg: &LpConfig) -> Result<CZeta> {
    match cfg.c_zeta {
        Some(value) => Ok(CZeta {
            value,
            source: "user".into(),
            epsilon: None,
            rho: None,
            vartheta: None,
            kappa: p.zeta(),
        }),
        None => c_zeta_auto(p, cfg.epsilon),
    }
}

pub(crate) fn setup(
    p: &SpectralProblem,
    cfg: &LpConfig,
    side: Side,
    anchor_norm: f64,
) -> Result<Setup> {
    setup_driven(p, cfg, side, anchor_norm, None)
}

/// [`setup`] with a driver: an adapted process sharing the solver's noise
/// whose state joins the regression coordinates. Random anchors generated by
/// a forward flow are conditioned on that flow.
pub(crate) fn setup_driven(
    p: &SpectralProblem,
    cfg: &LpConfig,
    side: Side,
    anchor_norm: f64,
    driver: Option<&ProcessEnsemble>,
) -> Result<Setup> {
    cfg.validate()?;
    let p = match &cfg.ladder {
        Some(l) => p.with_ladder(l.clone())?,
        None => p.clone(),
    };
    let c_zeta = resolve_c_zeta(&p, cfg)?;
    let gap = match side {
        Side::Unstable => gap_unstable(&p, c_zeta.value)?,
        Side::Stable => gap_stable(&p, c_zeta.value)?,
    };
    if !gap.passes(side) && !cfg.force {
        return Err(Error::GapViolation {
            side: side.as_str(),
            value: gap.constant(side),
        });
    }
    let k = p.bound_k();
    let (rate, user) = match side {
        Side::Unstable => (p.gamma() - p.zeta(), cfg.t_back),
        Side::Stable => (p.alpha() - p.gamma(), cfg.t_fwd),
    };
    let contraction = gap.constant(side).min(0.95);
    let bound = k * anchor_norm / (1.0 - contraction);
    let tail_at = |t: f64| k * (-rate * t).exp() * bound;
    let (horizon, automatic) = match user {
        Some(t) => (t, false),
        None => {
            let t = if bound > 0.0 {
                (10.0 * k * bound / cfg.tol).ln() / rate
            } else {
                0.0
            };
            (t.max(1.0 / rate), true)
        }
    };
    let tail = tail_at(horizon);
    if tail > cfg.tol && !cfg.force {
        return Err(Error::TruncationTooShort {
            horizon,
            tail,
            tolerance: cfg.tol,
        });
    }
    let steps = ((horizon / cfg.dt) - 1e-9).ceil().max(1.0) as usize;
    let grid = match side {
        Side::Unstable => TimeGrid::new(cfg.tau - steps as f64 * cfg.dt, cfg.dt, steps)?,
        Side::Stable => TimeGrid::new(cfg.tau, cfg.dt, steps)?,
    };
    let n = cfg.n_samples;
    let noise = if p.noise().is_zero() {
        WienerEnsemble::zeros(&grid, n, p.n_modes())
    } else {
        sample_wiener(cfg.seed, &grid, p.noise(), n)?
    };
    let extra = extra_coords(
        &grid,
        &noise,
        !p.noise().is_zero(),
        cfg.condition_on_noise && !p.noise().is_zero(),
        driver,
        n,
    )?;
    let m = p.n_modes();
    let qn = extra.as_ref().map_or(0, |e| e.q - driver.map_or(0, |d| d.n_modes()));
    let n_coords = m + extra.as_ref().map_or(0, |e| e.q);
    let basis = match cfg.basis {
        BasisChoice::Default => {
            // Driver coordinates sit after the noise ones, in mode order.
            let mut primary: Vec<usize> = p.unstable_modes().to_vec();
            let mut secondary: Vec<usize> = p.stable_modes().to_vec();
            secondary.extend(m..m + qn);
            if driver.is_some() {
                primary.extend(p.unstable_modes().iter().map(|k| m + qn + k));
                secondary.extend(p.stable_modes().iter().map(|k| m + qn + k));
            }
            RegressionBasis::split(n_coords, &primary, &secondary, 2, 1)
        }
        BasisChoice::Polynomial { degree } => RegressionBasis::polynomial(n_coords, degree),
        BasisChoice::Hermite { degree } => RegressionBasis::hermite(n_coords, degree),
    };
    Ok(Setup {
        gamma: p.gamma(),
        p,
        side,
        tau: cfg.tau,
        gap,
        c_zeta,
        truncation: Truncation {
            horizon,
            steps,
            tail,
            tolerance: cfg.tol,
            rate,
            automatic,
        },
        grid,
        noise,
        basis,
        extra,
    })
}

/// Anchor rows, checked to live in the block of `side`.
pub(crate) fn anchor_rows(p: &SpectralProblem, x: &Anchor, n: usize, side: Side) -> Result<SampleMatrix> {
    if x.dim() != p.n_modes() {
        return Err(Error::InvalidConfig(format!(
            "anchor has {} coordinates, problem has {}",
            x.dim(),
            p.n_modes()
        )));
    }
    let rows = x.to_samples(n);
    if rows.rows() != n {
        return Err(Error::GridMismatch(format!(
            "anchor has {} samples, solver uses {n}",
            rows.rows()
        )));
    }
    for i in 0..n {
        for (k, v) in rows.row(i).iter().enumerate() {
            let inside = match side {
                Side::Unstable => p.is_unstable(k),
                Side::Stable => !p.is_unstable(k),
            };
            if !inside && *v != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "anchor has a nonzero coordinate in mode {k} outside the {} block",
                    side.as_str()
                )));
            }
        }
    }
    Ok(rows)
}

/// `sup_j e^{−γ(t_j−τ)} ms_norm(a_j − b_j)`, without materializing the difference.
pub(crate) fn weighted_distance(a: &ProcessEnsemble, b: &ProcessEnsemble, gamma: f64, tau: f64) -> f64 {
    let g = a.grid();
    let n = a.n_samples().max(1) as f64;
    (0..g.n_nodes())
        .map(|j| {
            let s: f64 = a
                .node(j)
                .iter()
                .zip(b.node(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            (-gamma * (g.time(j) - tau)).exp() * (s / n).sqrt()
        })
        .fold(0.0, f64::max)
}

pub(crate) enum Outcome {
    Converged(Box<LpSolution>),
    Failed { trace: FixedPointTrace, error: Error },
}

/// Picard iteration from `init` until the weighted difference drops below `tol`,
/// followed by one extra evaluation for the residual and the graph check.
pub(crate) fn iterate(
    s: &Setup,
    init: ProcessEnsemble,
    cfg: &LpConfig,
    boundary: &SampleMatrix,
) -> Outcome {
    let map = |xi: &ProcessEnsemble| kernel::apply_map(s, xi, boundary, cfg.checkpoints);
    let mut trace = FixedPointTrace::default();
    let mut xi = init;
    for _ in 0..cfg.max_iter {
        let next = match map(&xi) {
            Ok(o) => o.process,
            Err(error) => return Outcome::Failed { trace, error },
        };
        let d = weighted_distance(&next, &xi, s.gamma, s.tau);
        trace.push(d);
        xi = next;
        if d <= cfg.tol {
            trace.converged = true;
            break;
        }
    }
    if !trace.converged {
        return Outcome::Failed {
            error: Error::MaxIterExceeded(Box::new(trace.clone())),
            trace,
        };
    }
    let extra = match map(&xi) {
        Ok(o) => o,
        Err(error) => return Outcome::Failed { trace, error },
    };
    let residual = weighted_distance(&extra.process, &xi, s.gamma, s.tau);
    let anchor_node = match s.side {
        Side::Unstable => s.grid.n_steps(),
        Side::Stable => 0,
    };
    Outcome::Converged(Box::new(LpSolution {
        side: s.side,
        tau: s.tau,
        anchor_node,
        check_state: extra.process.snapshot(anchor_node),
        process: xi,
        trace,
        residual,
        gap: s.gap.clone(),
        c_zeta: s.c_zeta.clone(),
        truncation: s.truncation.clone(),
        martingale: extra.martingale,
        regression: extra.regression,
    }))
}

impl LpSolution {
    /// Sample-RMS size of the fixed point at `τ`.
    pub fn anchor_ms_norm(&self) -> f64 {
        ms_norm(&self.process, self.anchor_node)
    }

    pub fn martingale_pass(&self) -> bool {
        self.martingale.iter().all(|c| c.pass)
    }
}

#[cfg(test)]
mod tests;

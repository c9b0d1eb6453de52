use anyhow::{bail, Result};
use serde::Serialize;

use msinv_core::condexp::Anchor;
use msinv_core::config::RunConfig;
use msinv_core::lyapunov_perron::{
    anchor_pairs, invariance_residual, lipschitz_certify, membership_sweep, resolve_c_zeta,
    stable_graph, unstable_graph, GraphSummary, InvarianceReport, LipschitzCertificate, LpConfig,
    ManifoldGraph, MembershipRow,
};
use msinv_core::resolvent::{
    c_zeta_auto, extend_projection, loglog_slope, regularization_study, CZeta, ExtendedProjection,
    RegularizationRow,
};
use msinv_core::spectral_problem::{
    build_problem, example_pde_spec, gap_stable, gap_unstable, GapReport, Side, SpectralProblem,
    XElement,
};
use msinv_core::validate::{refinement_study, RefinementParameter, RefinementTable};

use crate::output::{num, RunDir};
use crate::{RefineParameter, EXIT_GAP};

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub p: SpectralProblem,
    pub dir: &'a mut RunDir,
}

#[derive(Serialize)]
struct GapCheck {
    c_zeta: CZeta,
    unstable: GapReport,
    stable: GapReport,
    pass: bool,
}

fn gaps(p: &SpectralProblem, solver: &LpConfig) -> Result<GapCheck> {
    let c_zeta = resolve_c_zeta(p, solver)?;
    let unstable = gap_unstable(p, c_zeta.value)?;
    let stable = gap_stable(p, c_zeta.value)?;
    let pass = unstable.passes(Side::Unstable) && stable.passes(Side::Stable);
    Ok(GapCheck {
        c_zeta,
        unstable,
        stable,
        pass,
    })
}

pub fn check_gap(ctx: Ctx) -> Result<i32> {
    let report = gaps(&ctx.p, &ctx.cfg.solver)?;
    eprintln!(
        "eta = {:.6e} ({}), delta = {:.6e} ({}), C_zeta = {:.6e}",
        report.unstable.eta,
        if report.unstable.passes(Side::Unstable) { "pass" } else { "FAIL" },
        report.stable.delta,
        if report.stable.passes(Side::Stable) { "pass" } else { "FAIL" },
        report.c_zeta.value,
    );
    ctx.dir.json("report.json", &report)?;
    Ok(if report.pass { 0 } else { EXIT_GAP })
}

#[derive(Serialize)]
struct SolveReport {
    certified: bool,
    graph: GraphSummary,
    lipschitz: Option<LipschitzCertificate>,
    membership: Option<Vec<MembershipRow>>,
}

fn graph_rows(g: &ManifoldGraph) -> Vec<Vec<String>> {
    (0..g.h.rows())
        .map(|i| {
            let mut r = vec![i.to_string()];
            r.extend(g.anchor.row(i).iter().map(|v| num(*v)));
            r.extend(g.h.row(i).iter().map(|v| num(*v)));
            r
        })
        .collect()
}

fn warn_uncertified(p: &SpectralProblem, solver: &LpConfig, side: Side) -> Result<bool> {
    let gap = gaps(p, solver)?;
    let ok = match side {
        Side::Unstable => gap.unstable.passes(side),
        Side::Stable => gap.stable.passes(side),
    };
    if !ok && solver.force {
        eprintln!("WARNING: {} gap condition fails; solving anyway (--force), report is UNCERTIFIED", side.as_str());
    }
    Ok(ok)
}

pub fn solve(ctx: Ctx, side: Side, anchor: Option<Vec<f64>>, dump: bool) -> Result<i32> {
    let cfg = ctx.cfg;
    let p = &ctx.p;
    let solver = &cfg.solver;
    let certified = warn_uncertified(p, solver, side)?;
    let x = anchor.unwrap_or_else(|| match side {
        Side::Unstable => cfg.unstable_anchor(p),
        Side::Stable => cfg.stable_anchor(p),
    });
    if x.len() != p.n_modes() {
        return Err(msinv_core::Error::InvalidConfig(format!(
            "anchor has {} coordinates, problem has {}",
            x.len(),
            p.n_modes()
        ))
        .into());
    }
    let g = match side {
        Side::Unstable => unstable_graph(p, &Anchor::Deterministic(x.clone()), solver)?,
        Side::Stable => stable_graph(p, &Anchor::Deterministic(x.clone()), solver)?,
    };
    let lipschitz = if cfg.run.lipschitz_pairs > 0 {
        let pairs = anchor_pairs(p, side, cfg.run.lipschitz_pairs, cfg.run.lipschitz_radius);
        Some(lipschitz_certify(p, solver, side, &pairs, cfg.run.lipschitz_slack)?)
    } else {
        None
    };
    let membership = match side {
        Side::Stable => Some(membership_sweep(p, &x, &cfg.run.membership_scales, solver)?),
        Side::Unstable => None,
    };

    let m = p.n_modes();
    let mut header = vec!["sample".to_string()];
    header.extend((0..m).map(|k| format!("x{k}")));
    header.extend((0..m).map(|k| format!("h{k}")));
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    ctx.dir.csv("graph.csv", &header, &graph_rows(&g))?;
    let t = &g.solution.trace;
    let trace: Vec<Vec<String>> = t
        .differences
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let ratio = if i == 0 { String::new() } else { t.ratios.get(i - 1).map_or(String::new(), |r| num(*r)) };
            vec![(i + 1).to_string(), num(*d), ratio]
        })
        .collect();
    ctx.dir.csv("trace.csv", &["iteration", "difference", "ratio"], &trace)?;
    if dump {
        ctx.dir.binary("paths.bin", &g.solution.process)?;
    }
    let report = SolveReport {
        certified,
        graph: g.summary(),
        lipschitz,
        membership,
    };
    ctx.dir.json("report.json", &report)?;
    Ok(0)
}

#[derive(Serialize)]
struct RefinementLevel {
    dt: f64,
    n_samples: usize,
    residual: f64,
}

#[derive(Serialize)]
struct InvarianceOut {
    certified: bool,
    report: InvarianceReport,
    refinement: Option<Vec<RefinementLevel>>,
    monotone: Option<bool>,
}

fn refine_levels(cfg: &RunConfig) -> Vec<(f64, usize)> {
    if !cfg.run.refine_dt.is_empty() {
        return cfg.run.refine_dt.iter().cloned().zip(cfg.run.refine_samples.iter().cloned()).collect();
    }
    let (dt, n) = (cfg.solver.dt, cfg.solver.n_samples);
    vec![(4.0 * dt, (n / 16).max(2)), (2.0 * dt, (n / 4).max(2)), (dt, n)]
}

pub fn invariance(ctx: Ctx, side: Side, t0: Option<f64>, refine: bool) -> Result<i32> {
    let cfg = ctx.cfg;
    let p = &ctx.p;
    let certified = warn_uncertified(p, &cfg.solver, side)?;
    let t0 = t0.unwrap_or(cfg.run.t0);
    let x = match side {
        Side::Unstable => cfg.unstable_anchor(p),
        Side::Stable => cfg.stable_anchor(p),
    };
    let report = invariance_residual(p, &x, &cfg.solver, t0, side)?;
    eprintln!("invariance residual {:.6e}", report.residual);
    let (refinement, monotone) = if refine {
        let mut levels = Vec::new();
        for (dt, n) in refine_levels(cfg) {
            let solver = LpConfig {
                dt,
                n_samples: n,
                ..cfg.solver.clone()
            };
            let r = invariance_residual(p, &x, &solver, t0, side)?;
            levels.push(RefinementLevel {
                dt,
                n_samples: n,
                residual: r.residual,
            });
        }
        let rows: Vec<Vec<String>> = levels
            .iter()
            .map(|l| vec![num(l.dt), l.n_samples.to_string(), num(l.residual)])
            .collect();
        ctx.dir.csv("refinement.csv", &["dt", "n_samples", "residual"], &rows)?;
        let mono = levels.windows(2).all(|w| w[1].residual < w[0].residual);
        (Some(levels), Some(mono))
    } else {
        (None, None)
    };
    ctx.dir.json(
        "report.json",
        &InvarianceOut {
            certified,
            report,
            refinement,
            monotone,
        },
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct ResolventReport {
    lambdas: Vec<f64>,
    rows: Vec<RegularizationRow>,
    slope: f64,
    c_zeta: CZeta,
    boundary_projection: Option<[ExtendedProjection; 2]>,
}

/// Smooth test datum: geometrically decaying modal coefficients.
fn smooth_datum(m: usize) -> Vec<f64> {
    (0..m).map(|k| 0.5f64.powi(k as i32)).collect()
}

fn boundary_projections(p: &SpectralProblem) -> Result<Option<[ExtendedProjection; 2]>> {
    if p.boundary_traces().is_none() {
        return Ok(None);
    }
    let m = p.n_modes();
    let mut left = XElement::zeros(m);
    left.boundary[0] = 1.0;
    let mut right = XElement::zeros(m);
    right.boundary[1] = 1.0;
    Ok(Some([extend_projection(p, &left)?, extend_projection(p, &right)?]))
}

pub fn resolvent_study(ctx: Ctx) -> Result<i32> {
    let p = &ctx.p;
    let lambdas = ctx.cfg.run.lambdas.clone();
    let g = smooth_datum(p.n_modes());
    let rows = regularization_study(p, &g, &lambdas)?;
    let slope = loglog_slope(&lambdas, &rows.iter().map(|r| r.error).collect::<Vec<_>>());
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![num(r.lambda), num(r.error), num(r.extrapolant)])
        .collect();
    ctx.dir.csv("regularization.csv", &["lambda", "error", "extrapolant_error"], &csv)?;
    let report = ResolventReport {
        lambdas,
        rows,
        slope,
        c_zeta: c_zeta_auto(p, ctx.cfg.solver.epsilon)?,
        boundary_projection: boundary_projections(p)?,
    };
    ctx.dir.json("report.json", &report)?;
    Ok(0)
}

#[derive(Serialize)]
struct ExampleReport {
    modes: usize,
    eigenvalues: Vec<f64>,
    unstable_modes: Vec<usize>,
    lipschitz_l1: f64,
    gap: GapCheck,
    boundary_projection: Option<[ExtendedProjection; 2]>,
}

pub fn example_pde(dir: &mut RunDir, modes: usize, g: [f64; 3], solver: &LpConfig) -> Result<i32> {
    let spec = example_pde_spec(modes, g[0], g[1], g[2])?;
    let p = build_problem(&spec)?;
    let gap = gaps(&p, solver)?;
    let cfg = RunConfig {
        problem: spec.clone(),
        solver: solver.clone(),
        run: Default::default(),
    };
    dir.text("problem.toml", &cfg.to_toml_string())?;
    let rows: Vec<Vec<String>> = spec
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, l)| vec![k.to_string(), num(*l), p.is_unstable(k).to_string()])
        .collect();
    dir.csv("eigenvalues.csv", &["mode", "eigenvalue", "unstable"], &rows)?;
    let report = ExampleReport {
        modes,
        eigenvalues: spec.eigenvalues.clone(),
        unstable_modes: p.unstable_modes().to_vec(),
        lipschitz_l1: p.l1(),
        boundary_projection: boundary_projections(&p)?,
        gap,
    };
    dir.json("report.json", &report)?;
    Ok(if report.gap.pass { 0 } else { EXIT_GAP })
}

#[derive(Serialize)]
struct RefineReport {
    parameter: String,
    reference_value: f64,
    table: RefinementTable,
}

fn default_values(param: RefineParameter, s: &LpConfig) -> Vec<f64> {
    match param {
        RefineParameter::Dt => vec![8.0 * s.dt, 4.0 * s.dt, 2.0 * s.dt],
        RefineParameter::NSamples => {
            let n = s.n_samples as f64;
            vec![(n / 16.0).max(8.0).round(), (n / 4.0).max(16.0).round(), n]
        }
        RefineParameter::TBack => vec![1.0, 2.0, 3.0],
        RefineParameter::Lambda => vec![1e2, 1e3, 1e4],
    }
}

fn reference_value(param: RefineParameter, values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    match param {
        RefineParameter::Dt => lo / 2.0,
        RefineParameter::NSamples => hi * 4.0,
        RefineParameter::TBack => 2.0 * hi,
        RefineParameter::Lambda => hi * 100.0,
    }
}

/// Refinement of the unstable graph mean in one parameter, measured against a
/// run one level beyond the finest value.
pub fn refine(ctx: Ctx, param: RefineParameter, values: Option<Vec<f64>>) -> Result<i32> {
    let cfg = ctx.cfg;
    let p = &ctx.p;
    let values = values.unwrap_or_else(|| default_values(param, &cfg.solver));
    if values.len() < 3 {
        bail!(msinv_core::Error::InvalidConfig("refine needs at least 3 values".into()));
    }
    let x = Anchor::Deterministic(cfg.unstable_anchor(p));
    let observe = |v: f64| -> msinv_core::Result<f64> {
        let mut s = cfg.solver.clone();
        let mut q = p.clone();
        match param {
            RefineParameter::Dt => s.dt = v,
            RefineParameter::NSamples => s.n_samples = v as usize,
            RefineParameter::TBack => {
                // short horizons are the point of this sweep
                s.t_back = Some(v);
                s.force = true;
            }
            RefineParameter::Lambda => q = p.with_ladder(vec![v])?,
        }
        let g = unstable_graph(&q, &x, &s)?;
        Ok(g.h_mean().iter().map(|c| c * c).sum::<f64>().sqrt())
    };
    let reference = reference_value(param, &values);
    let truth = observe(reference)?;
    let table = refinement_study(param.core(), &values, |v| {
        let o = observe(v)?;
        Ok((o, (o - truth).abs()))
    })?;
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| vec![num(r.value), num(r.observable), num(r.error)])
        .collect();
    ctx.dir.csv("refinement.csv", &["value", "observable", "error"], &rows)?;
    ctx.dir.json(
        "report.json",
        &RefineReport {
            parameter: format!("{:?}", table.parameter),
            reference_value: reference,
            table,
        },
    )?;
    Ok(0)
}

impl RefineParameter {
    fn core(self) -> RefinementParameter {
        match self {
            RefineParameter::Dt => RefinementParameter::Dt,
            RefineParameter::NSamples => RefinementParameter::NSamples,
            RefineParameter::TBack => RefinementParameter::TBack,
            RefineParameter::Lambda => RefinementParameter::Lambda,
        }
    }
}

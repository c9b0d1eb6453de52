//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;

use msinv_core::condexp::Anchor;
use msinv_core::lyapunov_perron::{
    anchor_pairs, invariance_residual, lipschitz_certify, lp_backward_solve, stable_graph,
    unstable_graph, LpConfig,
};
use msinv_core::resolvent::{loglog_slope, regularization_study};
use msinv_core::spectral_problem::{
    build_problem, example_pde_spec, GapReport, NoiseSpec, NonlinearitySpec, ProblemSpec, Side,
    SpectralProblem, DEFAULT_LADDER,
};
use msinv_core::validate::{
    brownian_condexp_oracle, linear_manifold_oracle, mc_order_study, strong_order_study,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn two_mode(b: [[f64; 2]; 2], noise: NoiseSpec) -> SpectralProblem {
    build_problem(&ProblemSpec {
        eigenvalues: vec![1.0, -1.0],
        unstable_modes: None,
        alpha: 1.0,
        beta: -1.0,
        gamma: 0.0,
        zeta: -0.5,
        bound_k: 1.0,
        nonlinearity: NonlinearitySpec::Linear {
            matrix: b.iter().map(|r| r.to_vec()).collect(),
        },
        noise,
        ladder: DEFAULT_LADDER.to_vec(),
    })
    .unwrap()
}

fn diagonal_noise_problem() -> SpectralProblem {
    build_problem(&ProblemSpec {
        eigenvalues: vec![2.0, -4.0],
        unstable_modes: None,
        alpha: 2.0,
        beta: -4.0,
        gamma: 0.5,
        zeta: -2.5,
        bound_k: 1.0,
        nonlinearity: NonlinearitySpec::Linear {
            matrix: vec![vec![0.0, 0.0], vec![0.1, 0.0]],
        },
        noise: NoiseSpec::DiagonalLinear {
            slopes: vec![0.3, 0.1],
            weights: None,
        },
        ladder: DEFAULT_LADDER.to_vec(),
    })
    .unwrap()
}

fn gap_arithmetic() -> Outcome {
    let t = Instant::now();
    let g = GapReport::from_constants(1.0, 0.01, 0.01, 1.0, 0.5).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let delta = 0.02 + 0.01 / 2.0f64.sqrt();
    let (de, dd) = ((g.eta - 0.02).abs(), (g.delta - delta).abs());
    outcome(
        de <= 1e-12 && dd <= 1e-12 && secs < 1.0,
        format!("eta {:.15} (err {de:.1e}), delta {:.15} (err {dd:.1e}), {secs:.3}s", g.eta, g.delta),
    )
}

fn trivial_manifold() -> Outcome {
    let p = two_mode([[0.0; 2]; 2], NoiseSpec::Zero);
    let cfg = LpConfig {
        n_samples: 3,
        dt: 1e-2,
        tol: 1e-10,
        ..LpConfig::default()
    };
    let u = unstable_graph(&p, &Anchor::Deterministic(vec![0.7, 0.0]), &cfg).unwrap();
    let s = stable_graph(&p, &Anchor::Deterministic(vec![0.0, 0.7]), &cfg).unwrap();
    let zeros = u.h.as_slice().iter().chain(s.h.as_slice()).all(|v| *v == 0.0);
    let (iu, is) = (u.solution.trace.iterations, s.solution.trace.iterations);
    outcome(
        zeros && iu == 1 && is == 1,
        format!("h identically zero: {zeros}, iterations {iu}/{is}"),
    )
}

fn linear_slope() -> Outcome {
    let t = Instant::now();
    let p = two_mode([[0.0, 0.0], [0.1, 0.0]], NoiseSpec::Zero);
    let oracle = linear_manifold_oracle(
        &DMatrix::from_element(1, 1, 1.0),
        &DMatrix::from_element(1, 1, -1.0),
        &DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.1, 0.0]),
    )
    .unwrap()
    .slope[(0, 0)];
    let cfg = LpConfig {
        n_samples: 1,
        dt: 1e-3,
        tol: 1e-8,
        ..LpConfig::default()
    };
    let g = unstable_graph(&p, &Anchor::Deterministic(vec![0.5, 0.0]), &cfg).unwrap();
    let slope = g.h.row(0)[1] / 0.5;
    let secs = t.elapsed().as_secs_f64();
    let err = (slope - oracle).abs();
    outcome(
        err <= 1e-3 && secs < 10.0,
        format!("slope {slope:.6} vs oracle {oracle:.6} (err {err:.1e}), {secs:.2}s"),
    )
}

fn contraction() -> Outcome {
    let p = two_mode([[0.0, 0.1], [0.1, 0.0]], NoiseSpec::Zero);
    let cfg = LpConfig {
        n_samples: 1,
        dt: 1e-3,
        tol: 1e-10,
        ..LpConfig::default()
    };
    let sol = lp_backward_solve(&p, &Anchor::Deterministic(vec![1.0, 0.0]), &cfg).unwrap();
    let n = sol.trace.ratios.len();
    let max = sol.trace.max_ratio();
    outcome(
        n >= 5 && max <= 1.2 * sol.gap.eta,
        format!("{n} ratios, max {max:.4} vs 1.2 eta = {:.4}", 1.2 * sol.gap.eta),
    )
}

/// Invariance refinement and the martingale checks of its solver runs.
fn invariance() -> (Outcome, Vec<bool>) {
    let t = Instant::now();
    let p = diagonal_noise_problem();
    let mut residuals = Vec::new();
    let mut martingale = Vec::new();
    for (dt, n) in [(4e-3, 625), (2e-3, 2500), (1e-3, 10_000)] {
        let cfg = LpConfig {
            dt,
            n_samples: n,
            tol: 1e-3,
            seed: 7,
            ..LpConfig::default()
        };
        let r = invariance_residual(&p, &[0.5, 0.0], &cfg, 0.1, Side::Unstable).unwrap();
        residuals.push(r.residual);
        martingale.push(r.before.martingale_pass);
        martingale.push(r.after.martingale_pass);
    }
    let secs = t.elapsed().as_secs_f64();
    let last = *residuals.last().unwrap();
    let monotone = residuals.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = residuals.iter().map(|r| format!("{r:.3e}")).collect();
    (
        outcome(
            last <= 5e-2 && monotone && secs < 300.0,
            format!("residuals [{}], monotone {monotone}, {secs:.0}s", shown.join(", ")),
        ),
        martingale,
    )
}

fn lipschitz() -> Outcome {
    let p = build_problem(&ProblemSpec {
        eigenvalues: vec![1.0, -1.0],
        unstable_modes: None,
        alpha: 1.0,
        beta: -1.0,
        gamma: 0.0,
        zeta: -0.5,
        bound_k: 1.0,
        nonlinearity: NonlinearitySpec::SaturatedPolynomial {
            coefficients: vec![0.0, 0.1, 0.05],
            radius: 1.0,
            coupling: Some(vec![vec![0.0, 0.5], vec![0.5, 0.0]]),
        },
        noise: NoiseSpec::Zero,
        ladder: DEFAULT_LADDER.to_vec(),
    })
    .unwrap();
    let cfg = LpConfig {
        n_samples: 1,
        dt: 1e-2,
        tol: 1e-8,
        ..LpConfig::default()
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for side in [Side::Unstable, Side::Stable] {
        let pairs = anchor_pairs(&p, side, 20, 1.0);
        let c = lipschitz_certify(&p, &cfg, side, &pairs, 0.25).unwrap();
        pass &= c.pass && c.ratios.len() >= 20;
        parts.push(format!(
            "{} {:.4} <= {:.4} x 1.25 ({} pairs)",
            side.as_str(),
            c.empirical,
            c.theoretical,
            c.ratios.len()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn regularization() -> Outcome {
    let p = build_problem(&example_pde_spec(4, 0.0, 0.0, 0.0).unwrap()).unwrap();
    let g: Vec<f64> = (0..4).map(|k| 0.5f64.powi(k)).collect();
    let lambdas = [1e2, 1e3, 1e4];
    let rows = regularization_study(&p, &g, &lambdas).unwrap();
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let slope = loglog_slope(&lambdas, &errors);
    outcome(
        (slope + 1.0).abs() <= 0.2,
        format!("log-log slope {slope:.4}"),
    )
}

fn example_spectrum(tmp: &Path) -> Outcome {
    let out = tmp.join("example");
    let status = Command::new(env!("CARGO_BIN_EXE_msinv"))
        .args(["example-pde", "--modes", "4", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    let got: Vec<f64> = report["eigenvalues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let pi2 = PI * PI;
    let want = [pi2 / 2.0, -pi2 / 2.0, -7.0 * pi2 / 2.0, -17.0 * pi2 / 2.0];
    outcome(
        status.success() && got == want,
        format!("eigenvalues {got:?}"),
    )
}

fn brownian_condexp() -> Outcome {
    let [a, b] = brownian_condexp_oracle(100_000, 0.5, 1.0, 17).unwrap();
    let gap = |r: &msinv_core::validate::OracleResult| {
        r.reference
            .iter()
            .zip(&r.value)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    outcome(
        a.pass && b.pass,
        format!(
            "first moment gap {:.2e} (band {:.2e}), second moment gap {:.2e} (band {:.2e})",
            gap(&a),
            a.tolerance,
            gap(&b),
            b.tolerance
        ),
    )
}

fn martingale(checks: &[bool]) -> Outcome {
    let ok = checks.iter().filter(|c| **c).count();
    outcome(
        !checks.is_empty() && ok == checks.len(),
        format!("{ok}/{} stochastic solver runs pass", checks.len()),
    )
}

fn refinement_orders() -> Outcome {
    let strong = strong_order_study(-1.0, 1.0, 1.0, &[3, 4, 5, 6, 7], 2000, 11).unwrap();
    let mc = mc_order_study(-1.0, 0.5, 1.0, 50, &[100, 400, 1600, 6400], 40, 5).unwrap();
    outcome(
        (strong.slope - 0.5).abs() <= 0.2 && (mc.slope + 0.5).abs() <= 0.2,
        format!("strong order {:.3}, MC order {:.3}", strong.slope, mc.slope),
    )
}

fn reproducibility(tmp: &Path) -> Outcome {
    let cfg = tmp.join("repro.toml");
    std::fs::write(
        &cfg,
        r#"
[problem]
eigenvalues = [2.0, -4.0]
alpha = 2.0
beta = -4.0
gamma = 0.5
zeta = -2.5

[problem.nonlinearity]
kind = "linear"
matrix = [[0.0, 0.0], [0.1, 0.0]]

[problem.noise]
kind = "diagonal-linear"
slopes = [0.3, 0.1]

[solver]
n_samples = 500
dt = 1e-2
tol = 1e-3
seed = 42

[run]
anchor = [0.5, 0.0]
lipschitz_pairs = 2
"#,
    )
    .unwrap();
    let files = ["report.json", "graph.csv", "trace.csv"];
    let run = |workers: &str| -> Vec<Vec<u8>> {
        let out = tmp.join(format!("repro-{workers}"));
        let status = Command::new(env!("CARGO_BIN_EXE_msinv"))
            .args(["solve-unstable", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .env("MSINV_WORKERS", workers)
            .status()
            .unwrap();
        assert!(status.success());
        files.iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect()
    };
    let (one, four) = (run("1"), run("4"));
    let same = one == four;
    outcome(same, format!("{} identical across 1 and 4 workers: {same}", files.join(", ")))
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let (inv, mart_checks) = invariance();
    let results = [
        ("1 gap arithmetic", gap_arithmetic()),
        ("2 trivial manifold", trivial_manifold()),
        ("3 linear slope", linear_slope()),
        ("4 contraction", contraction()),
        ("5 invariance", inv),
        ("6 lipschitz", lipschitz()),
        ("7 regularization", regularization()),
        ("8 example spectrum", example_spectrum(tmp.path())),
        ("9 brownian condexp", brownian_condexp()),
        ("10 martingale", martingale(&mart_checks)),
        ("11 refinement orders", refinement_orders()),
        ("12 reproducibility", reproducibility(tmp.path())),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

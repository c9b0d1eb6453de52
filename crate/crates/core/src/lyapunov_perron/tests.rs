use super::*;
use crate::spectral_problem::{
    build_problem, semigroup_apply, Block, NoiseSpec, NonlinearitySpec, ProblemSpec,
    DEFAULT_LADDER,
};
use crate::validate::{deterministic_lp_oracle, linear_manifold_oracle, DeterministicLpParams};
use nalgebra::DMatrix;

fn two_mode(b: [[f64; 2]; 2], slopes: Option<[f64; 2]>) -> SpectralProblem {
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
        noise: match slopes {
            None => NoiseSpec::Zero,
            Some(s) => NoiseSpec::DiagonalLinear {
                slopes: s.to_vec(),
                weights: None,
            },
        },
        ladder: DEFAULT_LADDER.to_vec(),
    })
    .unwrap()
}

fn det_cfg() -> LpConfig {
    LpConfig {
        n_samples: 1,
        tol: 1e-12,
        dt: 1e-3,
        t_back: Some(12.0),
        t_fwd: Some(12.0),
        force: true,
        ..LpConfig::default()
    }
}

#[test]
fn zero_dynamics_give_flat_graph_in_one_iteration() {
    let p = two_mode([[0.0; 2]; 2], None);
    let cfg = LpConfig {
        n_samples: 3,
        ..det_cfg()
    };
    let x = [0.6, 0.0];
    let g = unstable_graph(&p, &Anchor::Deterministic(x.to_vec()), &cfg).unwrap();
    assert_eq!(g.solution.trace.iterations, 1);
    assert!(g.h.as_slice().iter().all(|v| *v == 0.0));
    let xi = &g.solution.process;
    for j in 0..xi.grid().n_steps() {
        let t = xi.grid().time(j) - cfg.tau;
        let exact = semigroup_apply(&p, t, &x, Block::Unstable).unwrap();
        assert_eq!(xi.state(2, j), exact.as_slice());
    }

    let s = stable_graph(&p, &Anchor::Deterministic(vec![0.0, 0.4]), &cfg).unwrap();
    assert_eq!(s.solution.trace.iterations, 1);
    assert!(s.h.as_slice().iter().all(|v| *v == 0.0));
}

#[test]
fn zero_anchor_is_a_fixed_point() {
    let p = two_mode([[0.02, 0.03], [0.1, -0.01]], Some([0.05, 0.03]));
    let cfg = LpConfig {
        n_samples: 50,
        tol: 1e-6,
        ..LpConfig::default()
    };
    let sol = lp_backward_solve(&p, &Anchor::Deterministic(vec![0.0, 0.0]), &cfg).unwrap();
    assert_eq!(sol.trace.iterations, 1);
    assert!(sol.process.as_slice().iter().all(|v| *v == 0.0));
    let out = lp_forward_solve(&p, &Anchor::Deterministic(vec![0.0, 0.0]), &cfg).unwrap();
    assert!(out.membership);
    assert!(out.solution.unwrap().process.as_slice().iter().all(|v| *v == 0.0));
}

#[test]
fn single_map_matches_dense_quadrature() {
    let p = two_mode([[0.05, 0.08], [0.1, -0.03]], None);
    let cfg = LpConfig {
        t_back: Some(4.0),
        ..det_cfg()
    };
    let x = Anchor::Deterministic(vec![0.9, 0.0]);
    let xi0 = lp_backward_initial(&p, &x, &cfg).unwrap();
    let once = lp_backward_map(&p, &xi0, &x, &cfg).unwrap().process;
    let params = DeterministicLpParams {
        tau: 0.0,
        horizon: 4.0,
        dt: cfg.dt,
        gamma: p.gamma(),
        tol: f64::INFINITY,
        max_iter: 1,
    };
    let dense = deterministic_lp_oracle(&p, &[0.9, 0.0], &params, Side::Unstable).unwrap();
    for (j, v) in dense.path.iter().enumerate() {
        for k in 0..2 {
            assert!((once.get(0, j, k) - v[k]).abs() < 1e-8, "node {j} mode {k}");
        }
    }
}

#[test]
fn fixed_point_matches_dense_oracle() {
    let p = two_mode([[0.05, 0.08], [0.1, -0.03]], None);
    let cfg = det_cfg();
    for side in [Side::Unstable, Side::Stable] {
        let x = match side {
            Side::Unstable => vec![0.7, 0.0],
            Side::Stable => vec![0.0, 0.7],
        };
        let g = match side {
            Side::Unstable => unstable_graph(&p, &Anchor::Deterministic(x.clone()), &cfg),
            Side::Stable => stable_graph(&p, &Anchor::Deterministic(x.clone()), &cfg),
        }
        .unwrap();
        let params = DeterministicLpParams {
            tau: 0.0,
            horizon: 12.0,
            dt: cfg.dt,
            gamma: p.gamma(),
            tol: 1e-13,
            max_iter: 200,
        };
        let dense = deterministic_lp_oracle(&p, &x, &params, side).unwrap();
        for k in 0..2 {
            assert!((g.h.row(0)[k] - dense.h[k]).abs() < 1e-8, "{side:?} {k}");
        }
    }
}

#[test]
fn linear_slopes_match_invariance_algebra() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let minus = DMatrix::from_element(1, 1, -1.0);
    let cfg = det_cfg();

    let p = two_mode([[0.0, 0.0], [0.1, 0.0]], None);
    let oracle = linear_manifold_oracle(&one, &minus, &DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.1, 0.0]))
        .unwrap()
        .slope[(0, 0)];
    let g = unstable_graph(&p, &Anchor::Deterministic(vec![0.5, 0.0]), &cfg).unwrap();
    assert!((g.h.row(0)[1] / 0.5 - oracle).abs() < 1e-3);
    assert_eq!(g.h.row(0)[0], 0.0);

    let p = two_mode([[0.0, 0.1], [0.0, 0.0]], None);
    let oracle = linear_manifold_oracle(&minus, &one, &DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.1, 0.0]))
        .unwrap()
        .slope[(0, 0)];
    let g = stable_graph(&p, &Anchor::Deterministic(vec![0.0, 0.5]), &cfg).unwrap();
    assert!((g.h.row(0)[0] / 0.5 - oracle).abs() < 1e-3);
}

#[test]
fn measured_contraction_below_gap_constant() {
    let p = two_mode([[0.0, 0.1], [0.1, 0.0]], None);
    let cfg = LpConfig {
        tol: 1e-10,
        ..det_cfg()
    };
    let sol = lp_backward_solve(&p, &Anchor::Deterministic(vec![1.0, 0.0]), &cfg).unwrap();
    assert!(sol.trace.ratios.len() >= 5, "{:?}", sol.trace);
    assert!(sol.trace.max_ratio() <= 1.2 * sol.gap.eta);
    assert!(sol.residual <= 2.0 * cfg.tol);
}

#[test]
fn graph_identity_holds_per_sample() {
    let p = two_mode([[0.0, 0.0], [0.1, 0.0]], Some([0.05, 0.03]));
    let cfg = LpConfig {
        n_samples: 400,
        tol: 1e-4,
        dt: 1e-2,
        ..LpConfig::default()
    };
    let g = unstable_graph(&p, &Anchor::Deterministic(vec![0.5, 0.0]), &cfg).unwrap();
    let at = g.solution.process.snapshot(g.solution.anchor_node);
    for i in 0..400 {
        assert_eq!(g.h.row(i)[0], 0.0);
        assert_eq!(g.anchor.row(i)[0], 0.5);
        for k in 0..2 {
            assert_eq!(at.row(i)[k] - g.h.row(i)[k] - g.anchor.row(i)[k], 0.0);
        }
    }
    assert!(g.solution.martingale_pass());
}

#[test]
fn graph_equals_direct_stochastic_quadrature() {
    let p = two_mode([[0.0, 0.0], [0.1, 0.0]], Some([0.05, 0.04]));
    let cfg = LpConfig {
        n_samples: 200,
        tol: 1e-6,
        dt: 1e-2,
        seed: 5,
        ..LpConfig::default()
    };
    let g = unstable_graph(&p, &Anchor::Deterministic(vec![0.5, 0.0]), &cfg).unwrap();
    let xi = &g.solution.process;
    let grid = *xi.grid();
    let w = crate::stochastic::sample_wiener(cfg.seed, &grid, p.noise(), cfg.n_samples).unwrap();
    let mut scratch = p.scratch();
    let (mut f, mut s) = (vec![0.0; 2], vec![0.0; 2]);
    let n = grid.n_steps();
    for i in 0..cfg.n_samples {
        let mut h = 0.0;
        for j in 0..n {
            let u = xi.state(i, j);
            p.drift(u, &mut scratch, &mut f);
            p.diffusion(u, &[w.increment(i, j, 0), w.increment(i, j, 1)], &mut s);
            h += (-1.0 * (n - j) as f64 * cfg.dt).exp() * (cfg.dt * f[1] + s[1]);
        }
        assert!((h - g.h.row(i)[1]).abs() < 2.0 * cfg.tol, "sample {i}");
    }
}

#[test]
fn pure_noise_leaves_stable_block_at_rest() {
    let p = two_mode([[0.0; 2]; 2], Some([0.1, 0.05]));
    let cfg = LpConfig {
        n_samples: 100,
        dt: 1e-2,
        ..LpConfig::default()
    };
    let g = unstable_graph(&p, &Anchor::Deterministic(vec![0.5, 0.0]), &cfg).unwrap();
    assert!(g.h.as_slice().iter().all(|v| *v == 0.0));
}

#[test]
fn anchor_outside_block_rejected() {
    let p = two_mode([[0.0; 2]; 2], None);
    assert!(matches!(
        lp_backward_solve(&p, &Anchor::Deterministic(vec![0.5, 0.1]), &det_cfg()),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn failing_gap_needs_force() {
    let p = two_mode([[0.0, 0.9], [0.9, 0.0]], None);
    let x = Anchor::Deterministic(vec![0.1, 0.0]);
    assert!(matches!(
        lp_backward_solve(&p, &x, &LpConfig { force: false, ..det_cfg() }),
        Err(Error::GapViolation { side: "unstable", .. })
    ));
    let forced = LpConfig {
        force: true,
        tol: 1e-6,
        max_iter: 200,
        ..det_cfg()
    };
    let r = lp_backward_solve(&p, &x, &forced);
    assert!(r.is_ok(), "{r:?}");
}

#[test]
fn short_horizon_rejected() {
    let p = two_mode([[0.0, 0.0], [0.1, 0.0]], None);
    let cfg = LpConfig {
        t_back: Some(0.5),
        tol: 1e-6,
        force: false,
        ..det_cfg()
    };
    assert!(matches!(
        lp_backward_solve(&p, &Anchor::Deterministic(vec![1.0, 0.0]), &cfg),
        Err(Error::TruncationTooShort { .. })
    ));
}

#[test]
fn all_stable_problem_reduces_to_mild_solution() {
    let p = build_problem(&ProblemSpec {
        eigenvalues: vec![-1.0, -2.0],
        unstable_modes: None,
        alpha: 1.0,
        beta: -1.0,
        gamma: 0.0,
        zeta: -0.5,
        bound_k: 1.0,
        nonlinearity: NonlinearitySpec::Linear {
            matrix: vec![vec![0.0, 0.1], vec![0.05, 0.0]],
        },
        noise: NoiseSpec::Zero,
        ladder: DEFAULT_LADDER.to_vec(),
    })
    .unwrap();
    let cfg = LpConfig {
        t_fwd: Some(3.0),
        ..det_cfg()
    };
    let out = lp_forward_solve(&p, &Anchor::Deterministic(vec![0.3, -0.2]), &cfg).unwrap();
    assert!(out.membership);
    let sol = out.solution.unwrap();
    let grid = *sol.process.grid();
    let w = crate::stochastic::WienerEnsemble::zeros(&grid, 1, 2);
    let mild = crate::stochastic::integrate_mild(
        &p,
        &SampleMatrix::broadcast(&[0.3, -0.2], 1),
        &grid,
        &w,
    )
    .unwrap();
    for (a, b) in mild.as_slice().iter().zip(sol.process.as_slice()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn lipschitz_identical_pair_is_zero() {
    let p = two_mode([[0.0, 0.0], [0.1, 0.0]], None);
    let cert = lipschitz_certify(
        &p,
        &det_cfg(),
        Side::Unstable,
        &[(vec![0.3, 0.0], vec![0.3, 0.0])],
        0.25,
    )
    .unwrap();
    assert_eq!(cert.empirical, 0.0);
    assert!(cert.pass);
}

#[test]
fn deterministic_invariance_residual_small() {
    let p = two_mode([[0.0, 0.0], [0.1, 0.0]], None);
    let cfg = LpConfig {
        tol: 1e-9,
        ..det_cfg()
    };
    let r = invariance_residual(&p, &[0.5, 0.0], &cfg, 0.5, Side::Unstable).unwrap();
    assert!(r.residual <= 1e-3, "{}", r.residual);
    let p = two_mode([[0.0; 2]; 2], None);
    let r = invariance_residual(&p, &[0.5, 0.0], &cfg, 0.5, Side::Unstable).unwrap();
    assert!(r.residual < 1e-15);
}

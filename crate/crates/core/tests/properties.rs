use msinv_core::condexp::{condexp_ito_zero, condexp_lsmc, RegressionBasis};
use msinv_core::spectral_problem::{
    build_problem, project, semigroup_apply, Block, GapReport, NoiseSpec, NonlinearitySpec,
    ProblemSpec, Side, SpectralProblem, DEFAULT_LADDER,
};
use msinv_core::stochastic::{integrate_mild, sample_wiener, SampleMatrix, TimeGrid};
use msinv_core::Error;
use proptest::prelude::*;

fn problem(eig: Vec<f64>, b: f64, s: f64) -> SpectralProblem {
    let m = eig.len();
    let mut matrix = vec![vec![0.0; m]; m];
    for (i, row) in matrix.iter_mut().enumerate() {
        row[(i + 1) % m] = b;
    }
    build_problem(&ProblemSpec {
        eigenvalues: eig,
        unstable_modes: None,
        alpha: 1.0,
        beta: -1.0,
        gamma: 0.0,
        zeta: -0.5,
        bound_k: 1.0,
        nonlinearity: NonlinearitySpec::Linear { matrix },
        noise: NoiseSpec::DiagonalLinear {
            slopes: vec![s; m],
            weights: None,
        },
        ladder: DEFAULT_LADDER.to_vec(),
    })
    .unwrap()
}

fn spectrum() -> impl Strategy<Value = Vec<f64>> {
    (
        prop::collection::vec(1.0f64..5.0, 1..3),
        prop::collection::vec(-8.0f64..-1.0, 1..4),
    )
        .prop_map(|(mut u, s)| {
            u.extend(s);
            u
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projectors_split_and_are_idempotent(eig in spectrum(), seed in prop::collection::vec(-3.0f64..3.0, 6)) {
        let p = problem(eig, 0.0, 0.0);
        let v: Vec<f64> = seed[..p.n_modes()].to_vec();
        let pu = project(&p, &v, Side::Unstable);
        let ps = project(&p, &v, Side::Stable);
        for k in 0..v.len() {
            prop_assert_eq!(pu[k] + ps[k], v[k]);
            prop_assert!(pu[k] == 0.0 || ps[k] == 0.0);
        }
        prop_assert_eq!(project(&p, &pu, Side::Unstable), pu.clone());
        prop_assert!(project(&p, &pu, Side::Stable).iter().all(|c| *c == 0.0));
    }

    #[test]
    fn semigroup_composes(eig in spectrum(), t in 0.0f64..1.0, s in 0.0f64..1.0, v0 in -2.0f64..2.0) {
        let p = problem(eig, 0.0, 0.0);
        let v = vec![v0; p.n_modes()];
        let once = semigroup_apply(&p, t + s, &v, Block::Full).unwrap();
        let twice = semigroup_apply(&p, t, &semigroup_apply(&p, s, &v, Block::Full).unwrap(), Block::Full).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn gap_constants_monotone(
        l1 in 0.0f64..0.2, l2 in 0.0f64..0.2, c in 0.0f64..2.0,
        gap in 0.5f64..4.0, bump in 0.001f64..0.1,
    ) {
        let base = GapReport::from_constants(1.0, l1, l2, gap, c).unwrap();
        for other in [
            GapReport::from_constants(1.0, l1 + bump, l2, gap, c).unwrap(),
            GapReport::from_constants(1.0, l1, l2 + bump, gap, c).unwrap(),
            GapReport::from_constants(1.0, l1, l2, gap, c + bump).unwrap(),
            GapReport::from_constants(1.0, l1, l2, gap / (1.0 + bump), c).unwrap(),
        ] {
            prop_assert!(other.eta >= base.eta);
            prop_assert!(other.delta >= base.delta);
        }
        prop_assert!(base.delta >= base.eta);
    }

    #[test]
    fn lipschitz_bounds_finite_exactly_when_passing(
        l1 in 0.0f64..1.0, l2 in 0.0f64..1.0, c in 0.0f64..2.0,
    ) {
        let g = GapReport::from_constants(1.0, l1, l2, 1.0, c).unwrap();
        for side in [Side::Unstable, Side::Stable] {
            let b = g.lipschitz_bound(side);
            prop_assert_eq!(b.is_finite(), g.passes(side));
            if b.is_finite() {
                prop_assert!(b >= 0.0);
            }
        }
    }

    #[test]
    fn overlapping_windows_share_increments(seed in any::<u64>(), start in -40i64..0, len in 5usize..30, shift in 1usize..5) {
        let p = problem(vec![1.0, -2.0], 0.0, 0.2);
        let a = TimeGrid::from_origin(start, 0.01, len);
        let b = TimeGrid::from_origin(start + shift as i64, 0.01, len);
        let wa = sample_wiener(seed, &a, p.noise(), 3).unwrap();
        let wb = sample_wiener(seed, &b, p.noise(), 3).unwrap();
        for j in shift..len {
            prop_assert_eq!(wa.step(j), wb.step(j - shift));
        }
    }

    #[test]
    fn flow_property_holds_exactly(seed in any::<u64>(), u0 in -1.0f64..1.0, b in -0.3f64..0.3, half in 2usize..20) {
        let p = problem(vec![1.0, -2.0], b, 0.3);
        let n = 4;
        let full = TimeGrid::from_origin(0, 0.01, 2 * half);
        let w = sample_wiener(seed, &full, p.noise(), n).unwrap();
        let start = SampleMatrix::broadcast(&[u0, -u0], n);
        let path = integrate_mild(&p, &start, &full, &w).unwrap();

        let first = TimeGrid::from_origin(0, 0.01, half);
        let second = TimeGrid::from_origin(half as i64, 0.01, half);
        let leg1 = integrate_mild(&p, &start, &first, &sample_wiener(seed, &first, p.noise(), n).unwrap()).unwrap();
        let leg2 = integrate_mild(&p, &leg1.snapshot(half), &second, &sample_wiener(seed, &second, p.noise(), n).unwrap()).unwrap();
        let (a, b) = (path.snapshot(2 * half), leg2.snapshot(half));
        prop_assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn regression_reproduces_targets_in_span(c in prop::collection::vec(-2.0f64..2.0, 3), seed in 0u64..1000) {
        let n = 200;
        let mut x = SampleMatrix::zeros(n, 1);
        for i in 0..n {
            x.row_mut(i)[0] = (((i as u64 * 2654435761 + seed) % 1000) as f64) / 500.0 - 1.0;
        }
        let mut y = SampleMatrix::zeros(n, 1);
        for i in 0..n {
            let v = x.row(i)[0];
            y.row_mut(i)[0] = c[0] + c[1] * v + c[2] * v * v;
        }
        let est = condexp_lsmc(&y, &x, &RegressionBasis::polynomial(1, 2)).unwrap();
        for i in 0..n {
            prop_assert!((est.fitted.row(i)[0] - y.row(i)[0]).abs() < 1e-8);
        }
    }
}

#[test]
fn non_adapted_integrand_rejected() {
    let r = SampleMatrix::zeros(10, 1);
    assert!(matches!(
        condexp_ito_zero(&r, 1.0, false),
        Err(Error::AdaptednessViolation)
    ));
}

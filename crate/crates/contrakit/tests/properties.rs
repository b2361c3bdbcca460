//! Generative checks of the algebraic invariants the library leans on:
//! matrix-measure calculus, the lower-estimate contract of pair sampling,
//! the Milstein operator's time-scaling identity, and determinism of the
//! counter-based noise plans.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use contrakit::detlip::{
    lipschitz_estimate, LipschitzMode, PairSamplingConfig, DEFAULT_PAIR_LADDER,
};
use contrakit::models::{builtin, BuiltinParams, DomainBox, VectorField};
use contrakit::norms::{
    matrix_measure, matrix_measure_limit, operator_norm, NormKind, NormSpec,
    DEFAULT_MEASURE_LADDER,
};
use contrakit::rng::{counter_rng, fill_standard_normals, purpose};
use contrakit::sde::{
    levy_terms, milstein_step, simulate_shared, LevyMode, MilsteinTerms, SimOptions, WienerPlan,
};

fn matrices(max_n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (2..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(-1.5f64..1.5, n * n)
            .prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
    })
}

fn matrix_pairs(max_n: usize) -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (2..=max_n).prop_flat_map(|n| {
        let entries = || proptest::collection::vec(-1.5f64..1.5, n * n);
        (entries(), entries()).prop_map(move |(u, v)| {
            (
                DMatrix::from_row_slice(n, n, &u),
                DMatrix::from_row_slice(n, n, &v),
            )
        })
    })
}

fn base_norms() -> impl Strategy<Value = NormSpec> {
    prop_oneof![
        Just(NormSpec::l1()),
        Just(NormSpec::l2()),
        Just(NormSpec::linf()),
    ]
}

fn linear_field(a: &DMatrix<f64>) -> VectorField {
    let n = a.nrows();
    let a_eval = a.clone();
    let a_jac = a.clone();
    VectorField::new(n, "linear", move |x| &a_eval * x).with_jacobian(move |_| a_jac.clone())
}

fn rows_of(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    /// mu(A + cI) = mu(A) + c and mu(cA) = c mu(A) for c >= 0.
    #[test]
    fn measure_translation_and_homogeneity(
        a in matrices(5),
        spec in base_norms(),
        c in -3.0f64..3.0,
    ) {
        let n = a.nrows();
        let mu = matrix_measure(&spec, &a).unwrap();
        let shifted = matrix_measure(&spec, &(&a + DMatrix::identity(n, n) * c)).unwrap();
        prop_assert!((shifted - (mu + c)).abs() < 1e-9 * (1.0 + mu.abs() + c.abs()));

        let scale = c.abs();
        let scaled = matrix_measure(&spec, &(&a * scale)).unwrap();
        prop_assert!((scaled - scale * mu).abs() < 1e-9 * (1.0 + scale * mu.abs()));
    }

    /// mu(A + B) <= mu(A) + mu(B), and -||A|| <= mu(A) <= ||A||.
    #[test]
    fn measure_subadditivity_and_norm_bound(
        (a, b) in matrix_pairs(5),
        spec in base_norms(),
    ) {
        let mu_a = matrix_measure(&spec, &a).unwrap();
        let mu_b = matrix_measure(&spec, &b).unwrap();
        let mu_ab = matrix_measure(&spec, &(&a + &b)).unwrap();
        prop_assert!(mu_ab <= mu_a + mu_b + 1e-9);

        let op = operator_norm(&spec, &a).unwrap();
        prop_assert!(mu_a <= op + 1e-9 && -op - 1e-9 <= mu_a);
    }

    /// Every eigenvalue's real part sits in [-mu(-A), mu(A)].
    #[test]
    fn measure_dominates_spectrum(a in matrices(5), spec in base_norms()) {
        let upper = matrix_measure(&spec, &a).unwrap();
        let lower = -matrix_measure(&spec, &(-&a)).unwrap();
        for lambda in a.complex_eigenvalues().iter() {
            prop_assert!(lambda.re <= upper + 1e-9);
            prop_assert!(lambda.re >= lower - 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// The finite-h operator-norm quotient extrapolates to the closed form,
    /// including under a weighted norm (a separate code path).
    #[test]
    fn measure_limit_matches_closed_form(a in matrices(4), spec in base_norms()) {
        let closed = matrix_measure(&spec, &a).unwrap();
        let limit = matrix_measure_limit(&spec, &a, &DEFAULT_MEASURE_LADDER).unwrap();
        prop_assert!((closed - limit.value).abs() < 1e-5, "{closed} vs {}", limit.value);

        let n = a.nrows();
        let mut entries = vec![0.0; n * n];
        let mut rng = counter_rng(0xBEEF, purpose::TEST, n as u64, 0);
        fill_standard_normals(&mut rng, &mut entries);
        let p = DMatrix::identity(n, n) + DMatrix::from_row_slice(n, n, &entries) * 0.2;
        if let Ok(wspec) = NormSpec::weighted(NormKind::L2, p) {
            let wclosed = matrix_measure(&wspec, &a).unwrap();
            let wlimit = matrix_measure_limit(&wspec, &a, &DEFAULT_MEASURE_LADDER).unwrap();
            prop_assert!((wclosed - wlimit.value).abs() < 1e-5);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Pair sampling reports a lower estimate: for a linear field it can
    /// trail mu but never materially exceed it (the h->0 extrapolation is
    /// allowed O(h^2) curvature slack), in either mode, and the confidence
    /// interval brackets the point estimate.
    #[test]
    fn pair_estimates_stay_below_the_measure(
        a in matrices(3),
        spec in base_norms(),
        seed in 0u64..1000,
        sup_then_limit in proptest::bool::ANY,
    ) {
        let n = a.nrows();
        let mu = matrix_measure(&spec, &a).unwrap();
        let field = linear_field(&a);
        let domain = DomainBox::cube(n, -1.0, 1.0).unwrap();
        let cfg = PairSamplingConfig::with_diameter_fractions(
            64,
            &[1e-1, 1e-3],
            &domain,
            seed,
        );
        let mode = if sup_then_limit {
            LipschitzMode::SupThenLimit
        } else {
            LipschitzMode::LimitThenSup
        };
        let report = lipschitz_estimate(&field, &domain, &spec, &cfg, &DEFAULT_PAIR_LADDER, mode)
            .unwrap();
        prop_assert!(report.point_estimate.is_finite());
        prop_assert!(report.point_estimate <= mu + 5e-4, "{} vs mu {mu}", report.point_estimate);
        prop_assert!(report.ci95.0 <= report.point_estimate + 1e-12);
        prop_assert!(report.point_estimate <= report.ci95.1 + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Doubling the drift and scaling the diffusion by sqrt(2) compresses
    /// time by half: one Milstein step of (2F, sqrt(2) G) over h with noise
    /// xi/sqrt(2) equals one step of (F, G) over 2h with noise xi.
    #[test]
    fn milstein_step_time_scaling(
        a in matrices(3),
        x_seed in proptest::collection::vec(-1.0f64..1.0, 3),
        xi in -2.5f64..2.5,
        h in 1e-4f64..1e-2,
    ) {
        let n = a.nrows();
        let b = &a * 0.3 + DMatrix::identity(n, n) * 0.1;
        let base = BuiltinParams {
            a_matrix: Some(rows_of(&a)),
            b_matrices: Some(vec![rows_of(&b)]),
            ..Default::default()
        };
        let sped = BuiltinParams {
            a_matrix: Some(rows_of(&(&a * 2.0))),
            b_matrices: Some(vec![rows_of(&(&b * 2.0f64.sqrt()))]),
            ..Default::default()
        };
        let slow = builtin("linear", &base).unwrap();
        let fast = builtin("linear", &sped).unwrap();
        let x = DVector::from_column_slice(&x_seed[..n]);

        let dw = DVector::from_column_slice(&[xi]);
        let slow_terms = MilsteinTerms {
            dw2: levy_terms(&dw, 2.0 * h, LevyMode::Exact1d).unwrap(),
            dw,
        };
        let dz = DVector::from_column_slice(&[xi / 2.0f64.sqrt()]);
        let fast_terms = MilsteinTerms {
            dw2: levy_terms(&dz, h, LevyMode::Exact1d).unwrap(),
            dw: dz,
        };
        let one = milstein_step(&slow, &x, 2.0 * h, &slow_terms).unwrap();
        let two = milstein_step(&fast, &x, h, &fast_terms).unwrap();
        let gap = (&one - &two).amax();
        prop_assert!(gap < 1e-12 * (1.0 + one.amax()), "gap {gap}");
    }

    /// Same identity with two commuting diffusion channels.
    #[test]
    fn milstein_scaling_holds_for_commuting_channels(
        a in matrices(3),
        x_seed in proptest::collection::vec(-1.0f64..1.0, 3),
        xi in proptest::collection::vec(-2.5f64..2.5, 2),
        c1 in 0.05f64..0.5,
        c2 in 0.05f64..0.5,
    ) {
        let n = a.nrows();
        let eye = DMatrix::<f64>::identity(n, n);
        let base = BuiltinParams {
            a_matrix: Some(rows_of(&a)),
            b_matrices: Some(vec![rows_of(&(&eye * c1)), rows_of(&(&eye * c2))]),
            ..Default::default()
        };
        let root2 = 2.0f64.sqrt();
        let sped = BuiltinParams {
            a_matrix: Some(rows_of(&(&a * 2.0))),
            b_matrices: Some(vec![
                rows_of(&(&eye * (c1 * root2))),
                rows_of(&(&eye * (c2 * root2))),
            ]),
            ..Default::default()
        };
        let slow = builtin("linear", &base).unwrap();
        let fast = builtin("linear", &sped).unwrap();
        let x = DVector::from_column_slice(&x_seed[..n]);
        let h = 1e-3;

        let dw = DVector::from_column_slice(&xi);
        let slow_terms = MilsteinTerms {
            dw2: levy_terms(&dw, 2.0 * h, LevyMode::Commutative).unwrap(),
            dw: dw.clone(),
        };
        let dz = &dw / root2;
        let fast_terms = MilsteinTerms {
            dw2: levy_terms(&dz, h, LevyMode::Commutative).unwrap(),
            dw: dz,
        };
        let one = milstein_step(&slow, &x, 2.0 * h, &slow_terms).unwrap();
        let two = milstein_step(&fast, &x, h, &fast_terms).unwrap();
        prop_assert!((&one - &two).amax() < 1e-12 * (1.0 + one.amax()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Noise plans are pure functions of (seed, realization): regenerating
    /// one replays identical increments, and indexed access agrees with
    /// iteration.
    #[test]
    fn wiener_plans_replay_exactly(
        seed in proptest::num::u64::ANY,
        realization in 0u64..1_000_000,
        d in 1usize..4,
        steps in 1usize..48,
    ) {
        let a = WienerPlan::new(seed, realization, d, 1e-3, steps).unwrap();
        let b = WienerPlan::new(seed, realization, d, 1e-3, steps).unwrap();
        for (s, inc) in a.increments().enumerate() {
            prop_assert_eq!(&inc, &b.increment_at(s));
            prop_assert_eq!(&inc, &a.increment_at(s));
        }
    }

    /// Distinct purposes yield unrelated byte streams from the same key.
    #[test]
    fn rng_purposes_are_disjoint(seed in proptest::num::u64::ANY, hi in proptest::num::u64::ANY) {
        let mut draws = Vec::new();
        for p in [purpose::WIENER, purpose::PAIRS, purpose::SLLC, purpose::CHECK, purpose::TEST] {
            let mut rng = counter_rng(seed, p, hi, 0);
            let mut buf = [0.0; 4];
            fill_standard_normals(&mut rng, &mut buf);
            draws.push(buf);
        }
        for i in 0..draws.len() {
            for j in (i + 1)..draws.len() {
                prop_assert_ne!(draws[i], draws[j]);
            }
        }
    }

    /// Grids stay inside their box and have the advertised cardinality.
    #[test]
    fn domain_grids_are_contained(
        n in 1usize..4,
        lo in -5.0f64..0.0,
        width in 0.1f64..10.0,
        resolution in 2usize..6,
    ) {
        let hi = lo + width;
        let domain = DomainBox::cube(n, lo, hi).unwrap();
        let points: Vec<DVector<f64>> = domain.grid(resolution).collect();
        prop_assert_eq!(points.len(), resolution.pow(n as u32));
        for p in &points {
            for i in 0..n {
                prop_assert!(lo - 1e-12 <= p[i] && p[i] <= hi + 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Shared-noise simulation is bitwise deterministic in (seed,
    /// realization) and distinct realizations consume distinct noise.
    #[test]
    fn shared_simulation_replays_exactly(
        a in -2.0f64..-0.1,
        sigma in 0.1f64..1.0,
        seed in proptest::num::u64::ANY,
        realization in 0u64..1000,
    ) {
        let model = builtin("scalar-linear", &BuiltinParams::scalar_linear(a, sigma)).unwrap();
        let initials = vec![
            DVector::from_column_slice(&[1.0]),
            DVector::from_column_slice(&[0.5]),
        ];
        let opts = SimOptions::default();
        let once = simulate_shared(&model, &initials, 0.05, 1e-3, seed, realization, &opts).unwrap();
        let twice = simulate_shared(&model, &initials, 0.05, 1e-3, seed, realization, &opts).unwrap();
        for (t1, t2) in once.iter().zip(&twice) {
            prop_assert_eq!(t1.increments_hash, t2.increments_hash);
            prop_assert_eq!(t1.terminal_state(), t2.terminal_state());
        }
        // Both trajectories of one realization see the same noise; the
        // next realization sees different noise.
        prop_assert_eq!(once[0].increments_hash, once[1].increments_hash);
        let other =
            simulate_shared(&model, &initials, 0.05, 1e-3, seed, realization + 1, &opts).unwrap();
        prop_assert_ne!(once[0].increments_hash, other[0].increments_hash);
    }
}

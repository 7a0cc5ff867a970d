use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;

use qjet::dynamics::{rhs, ClosurePolicy};
use qjet::ensemble::gibbs_entropy;
use qjet::measurement::{collapse_select, DEFAULT_MATCH_TOLERANCE};
use qjet::reference::{AnalyticState, FreeGaussian};
use qjet::series::SeriesSpace;
use qjet::spin::{coherent_overlap, evolve_state, precess, SpinState, Spinor};
use qjet::symjet::{random_tree, total_diff, JetExpr};
use qjet::{JetLayout, JetState, MultiIndex, PotentialSpec, Units};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn counts(n: usize, max: u32) -> impl Strategy<Value = MultiIndex> {
    prop::collection::vec(0..=max, n).prop_map(MultiIndex::new)
}

fn jet_state(n: usize, order: u32) -> impl Strategy<Value = JetState> {
    let layout = JetLayout::new(n, order);
    let len = layout.n_state();
    (
        prop::collection::vec(-1.0..1.0f64, n),
        prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), len),
        (-1.0..1.0f64, -1.0..1.0f64),
        0.5..2.0f64,
        prop::collection::vec(0.5..2.0f64, n),
    )
        .prop_map(move |(q, p, p0, hbar, masses)| {
            let mut s = JetState::zeros(layout.clone(), Units { hbar, masses }, 0.0, q);
            s.p = p.into_iter().map(|(a, b)| c(a, b)).collect();
            s.p0 = c(p0.0, p0.1);
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn subindices_are_symmetric(sigma in counts(3, 3)) {
        let subs = sigma.subindices();
        for s in &subs {
            let mirror = subs.iter().find(|t| t.sub == s.complement).expect("complement listed");
            prop_assert_eq!(&mirror.complement, &s.sub);
            prop_assert_eq!(mirror.count, s.count);
        }
        let total: u64 = subs.iter().map(|s| s.count).sum();
        prop_assert_eq!(total, 1u64 << sigma.order());
    }

    #[test]
    fn extend_raises_order(sigma in counts(3, 4), i in 0usize..3) {
        prop_assert_eq!(sigma.extend(i).order(), sigma.order() + 1);
    }

    #[test]
    fn taylor_at_base_point(s in jet_state(2, 3)) {
        let expected = (Complex64::i() * s.p0 / s.units.hbar).exp();
        prop_assert!((s.taylor_eval(&s.q.clone()) - expected).norm() <= 1e-14 * expected.norm());
    }

    #[test]
    fn velocity_is_action_gradient(s in jet_state(2, 2)) {
        let sr = s.to_sr();
        let v = s.velocity();
        for j in 0..2 {
            let grad = sr[&MultiIndex::unit(2, j)].s;
            prop_assert!((v[j] - grad / s.units.masses[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn conjugate_state_gives_conjugate_rates(s in jet_state(1, 4)) {
        let pot = PotentialSpec::poly1d(&[0.0, 0.3, 0.5, 0.2]);
        let r = rhs(&s, &pot, &ClosurePolicy::Zero).unwrap();
        let mut mirror = s.conjugated();
        mirror.units.hbar = -mirror.units.hbar;
        let m = rhs(&mirror, &pot, &ClosurePolicy::Zero).unwrap();
        for (a, b) in r.p.iter().zip(&m.p) {
            prop_assert!((a.conj() - b).norm() < 1e-12);
        }
    }

    #[test]
    fn series_log_inverts_exp(coeffs in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 10)) {
        let space = SeriesSpace::new(2, 3);
        let f: Vec<Complex64> = coeffs.iter().map(|(a, b)| c(*a, *b)).collect();
        let back = space.ln(&space.exp(&f));
        for (x, y) in f.iter().zip(&back).skip(1) {
            prop_assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn total_derivatives_commute(seed in any::<u64>()) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let e = random_tree(&mut rng, 2, 3);
        let a = total_diff(&total_diff(&e, 0), 1);
        let b = total_diff(&total_diff(&e, 1), 0);
        prop_assert!(a.equivalent(&b));
    }

    #[test]
    fn total_derivative_is_linear(seed in any::<u64>(), k in -5i64..5) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (e1, e2) = (random_tree(&mut rng, 1, 3), random_tree(&mut rng, 1, 3));
        let lhs = total_diff(&(JetExpr::int(k) * e1.clone() + e2.clone()), 0);
        let rhs = JetExpr::int(k) * total_diff(&e1, 0) + total_diff(&e2, 0);
        prop_assert!(lhs.equivalent(&rhs));
    }

    #[test]
    fn gibbs_entropy_never_positive(weights in prop::collection::vec(0.0..1.0f64, 200), width in 0.5..3.0f64) {
        prop_assume!(weights.iter().sum::<f64>() > 0.0);
        let psi: Vec<f64> = (0..200).map(|k| (-((k as f64 - 100.0) / (20.0 * width)).powi(2)).exp()).collect();
        prop_assert!(gibbs_entropy(&weights, &psi).unwrap() <= 1e-15);
    }

    #[test]
    fn spinor_norm_conserved(b in prop::array::uniform3(-2.0..2.0f64), angles in prop::array::uniform3(0.0..3.0f64)) {
        let start = Spinor::from_angles(angles[0], angles[1], angles[2]);
        let traj = precess(start, |_| b, 1.0, 1.0, 1e-3, 1.0, false).unwrap();
        prop_assert!(traj.max_step_drift < 1e-12);
    }

    #[test]
    fn coherent_overlap_constant(
        b in prop::array::uniform3(-1.0..1.0f64),
        amps in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 3),
        angles in prop::array::uniform3(0.0..3.0f64),
    ) {
        let state = SpinState::new(2, amps.iter().map(|(x, y)| c(*x, *y)).collect());
        prop_assume!(state.is_ok());
        let state = state.unwrap();
        let omega = Spinor::from_angles(angles[0], angles[1], angles[2]);
        let path = precess(omega, |_| b, 0.8, 1.0, 1e-3, 2.0, false).unwrap();
        let states = evolve_state(&state, |_| b, 0.8, 1.0, 1e-3, 2.0).unwrap();
        let first = coherent_overlap(&states[0], &path.spinors[0]);
        for (s, o) in states.iter().zip(&path.spinors) {
            prop_assert!((coherent_overlap(s, o) - first).norm() < 1e-8);
        }
    }

    #[test]
    fn selection_is_stable(gap in 14.0..20.0f64, offset in -0.3..0.3f64, later in 0.2..1.0f64) {
        let units = Units::natural(1);
        let branches = vec![
            (c(1.0, 0.0), AnalyticState::FreeGaussian(FreeGaussian { a: 0.5, k0: -1.0, x0: -gap / 2.0 })),
            (c(1.0, 0.0), AnalyticState::FreeGaussian(FreeGaussian { a: 0.5, k0: 1.0, x0: gap / 2.0 })),
        ];
        let x = gap / 2.0 + offset;
        let first = collapse_select(&branches, &[x], 0.0, &units, DEFAULT_MATCH_TOLERANCE).unwrap();
        let moved = collapse_select(&branches, &[x + later], later, &units, DEFAULT_MATCH_TOLERANCE).unwrap();
        prop_assert_eq!(first.label, 1);
        prop_assert_eq!(moved.label, first.label);
    }
}

//! Invariants of kernel sequences, the Feshbach map and Wick term counting.

use oprg::feshbach::{feshbach_map, isospectrality_report, validate_pair};
use oprg::kernels::{kernel_symmetric, operator_symmetric, reconstruct};
use oprg::linalg::{op_norm, re};
use oprg::testkit;
use oprg::wick::{closed_form_count, enumerate_terms};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reconstruct_inverts_assemble(seed in 0u64..10_000, modes in 1usize..4, n_max in 2usize..4) {
        let mut rng = testkit::rng(seed);
        let frame = testkit::random_frame(&mut rng, modes, n_max);
        let w = testkit::random_sequence(&mut rng, &frame, 4);
        let back = reconstruct(&w.assemble().unwrap(), frame, w.z, w.xi).unwrap();
        prop_assert!(back.distance(&w) <= 1e-12);
    }

    #[test]
    fn tail_operators_obey_the_weighted_norm(seed in 0u64..10_000, modes in 1usize..4, r in 0usize..4) {
        let mut rng = testkit::rng(seed);
        let frame = testkit::random_frame(&mut rng, modes, 3);
        let w = testkit::random_sequence(&mut rng, &frame, 4);
        let lhs = op_norm(&w.assemble_from(r));
        prop_assert!(lhs <= w.xi.powi(r as i32) * w.norm_from(r) * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn adjoint_sequences_are_symmetric_partners(seed in 0u64..10_000, modes in 1usize..3) {
        let mut rng = testkit::rng(seed);
        let frame = testkit::random_frame(&mut rng, modes, 3);
        let w = testkit::random_sequence(&mut rng, &frame, 4);
        let other = testkit::random_sequence(&mut rng, &frame, 4);
        let good = vec![(w.clone(), w.adjoint())];
        prop_assert!(kernel_symmetric(&good, 1e-14));
        prop_assert!(operator_symmetric(&good, 1e-12).unwrap());
        let bad = vec![(w, other)];
        prop_assert_eq!(kernel_symmetric(&bad, 1e-14), operator_symmetric(&bad, 1e-12).unwrap());
    }

    #[test]
    fn operator_difference_bounded_by_kernel_difference(seed in 0u64..10_000, modes in 1usize..4) {
        let mut rng = testkit::rng(seed);
        let frame = testkit::random_frame(&mut rng, modes, 3);
        let a = testkit::random_sequence(&mut rng, &frame, 4);
        let b = testkit::random_sequence(&mut rng, &frame, 4);
        let lhs = op_norm(&(a.assemble().unwrap() - b.assemble().unwrap()));
        let mut rhs = 0.0;
        for m in 0..=4 {
            for n in 0..=4 - m {
                let (ka, kb) = (a.component(m, n), b.component(m, n));
                let delta = match (ka, kb) {
                    (Some(x), Some(y)) => {
                        let mut d = x.clone();
                        let mut neg = y.clone();
                        neg.scale(re(-1.0));
                        d.add_assign(&neg);
                        d.norm_l2()
                    }
                    (Some(x), None) | (None, Some(x)) => x.norm_l2(),
                    (None, None) => 0.0,
                };
                rhs += delta;
            }
        }
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn feshbach_invertibility_equivalence(seed in 0u64..10_000, dim in 2usize..14, singular: bool) {
        let mut rng = testkit::rng(seed);
        let (h, t, chi, chibar) = testkit::random_pair(&mut rng, dim, singular);
        let pair = validate_pair(&h, &t, &chi, &chibar).unwrap();
        let report = isospectrality_report(&pair).unwrap();
        prop_assert!(report.pass);
        prop_assert_eq!(report.h_invertible, !singular);
        let f = feshbach_map(&pair).unwrap();
        prop_assert_eq!(f.nrows(), h.nrows());
    }

    #[test]
    fn neumann_series_within_tail(seed in 0u64..10_000, dim in 2usize..12, l in 1usize..12) {
        let mut rng = testkit::rng(seed);
        let (h, t, chi, chibar) = testkit::random_pair(&mut rng, dim, false);
        let pair = validate_pair(&h, &t, &chi, &chibar).unwrap();
        let exact = pair.h_chibar_inverse().unwrap();
        let result = pair.neumann_inverse(l);
        prop_assume!(result.is_ok());
        let (approx, tail) = result.unwrap();
        prop_assert!(op_norm(&(exact - approx)) <= tail * (1.0 + 1e-9) + 1e-13);
    }

    #[test]
    fn term_counts(l in 1usize..5, m in 0usize..5, n in 0usize..5) {
        let all = enumerate_terms(l, m, n, false);
        prop_assert_eq!(all.len() as u64, closed_form_count(l, m, n));
        let pruned = enumerate_terms(l, m, n, true);
        prop_assert!(pruned.iter().all(|t| all.contains(t)));
        prop_assert!(all.iter().all(|t| t.legs() >= m + n && t.legs() <= 2 * l));
    }
}

#[test]
fn total_term_count_is_fourteen_to_the_l() {
    for l in 1..=4 {
        let total: u64 = (0..=2 * l).flat_map(|m| (0..=2 * l - m).map(move |n| closed_form_count(l, m, n))).sum();
        assert_eq!(total, 14u64.pow(l as u32));
    }
}


//! Property tests for the structural invariants the audits rely on.

use proptest::prelude::*;

use mechaudit::domain::{neighbors, vector_count, vector_rank, vector_unrank, ObjectiveFunction};
use mechaudit::mechanisms::{
    exponential_distribution, poll_distribution_from_counts, DiscreteDistribution,
};
use mechaudit::privacy::measure_dp;

proptest! {
    #[test]
    fn rank_unrank_roundtrip(
        alphabet in 2usize..5,
        rank in 0usize..200,
        n in 1usize..6,
    ) {
        let count = vector_count(alphabet, n).unwrap() as usize;
        let rank = rank % count;
        let t = vector_unrank(rank, alphabet, n);
        prop_assert_eq!(t.len(), n);
        prop_assert_eq!(vector_rank(&t, alphabet), rank);
    }

    #[test]
    fn neighbor_count_and_symmetry(
        t in proptest::collection::vec(0usize..3, 1..5),
    ) {
        let alphabet = 3;
        let nbrs: Vec<Vec<usize>> = neighbors(&t, alphabet).collect();
        prop_assert_eq!(nbrs.len(), t.len() * (alphabet - 1));
        for t2 in &nbrs {
            // Hamming distance exactly one, and the relation is symmetric.
            let dist = t.iter().zip(t2).filter(|(a, b)| a != b).count();
            prop_assert_eq!(dist, 1);
            prop_assert!(neighbors(t2, alphabet).any(|back| back == t));
        }
    }

    #[test]
    fn log_weights_normalize(
        w in proptest::collection::vec(-50.0f64..50.0, 1..8),
    ) {
        let d = DiscreteDistribution::from_log_weights(w);
        let total: f64 = d.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(d.probs().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn mixing_preserves_normalization_and_tv(
        w in proptest::collection::vec(-5.0f64..5.0, 2..6),
        delta in 0.0f64..=1.0,
    ) {
        let d = DiscreteDistribution::from_log_weights(w.clone());
        let u = DiscreteDistribution::uniform(w.len());
        let mixed = d.mix(&u, delta).unwrap();
        let total: f64 = mixed.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        // Mixing toward uniform never moves further from uniform.
        prop_assert!(mixed.total_variation(&u) <= d.total_variation(&u) + 1e-12);
        let tv = d.total_variation(&mixed);
        prop_assert!((0.0..=1.0).contains(&tv));
        prop_assert!((tv - mixed.total_variation(&d)).abs() < 1e-12);
    }

    #[test]
    fn exponential_mechanism_is_eps_dp(
        table in proptest::collection::vec(0.0f64..1.0, 18),
        eps in 0.05f64..2.0,
    ) {
        // n = 2, |T| = 3, |S| = 2: 9 type vectors x 2 alternatives.
        let f = ObjectiveFunction::from_table(2, 3, 2, 1.0, table).unwrap();
        let sensitivity = f.verify_sensitivity(1_000).unwrap().measured;
        prop_assume!(sensitivity > 1e-6);
        let scale = eps / (2.0 * sensitivity);
        let measured = measure_dp(
            |t: &[usize]| exponential_distribution(&f, scale, t),
            3,
            2,
            1_000,
        )
        .unwrap();
        prop_assert!(measured <= eps + 1e-9);
    }

    #[test]
    fn poll_favors_larger_counts(
        counts in proptest::collection::vec(0u64..30, 2..5),
        eps in 0.05f64..2.0,
    ) {
        let d = poll_distribution_from_counts(&counts, eps);
        let total: f64 = d.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        for i in 0..counts.len() {
            for j in 0..counts.len() {
                if counts[i] > counts[j] {
                    prop_assert!(d.prob(i) >= d.prob(j));
                }
            }
        }
    }
}

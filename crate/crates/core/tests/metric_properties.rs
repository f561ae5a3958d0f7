use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use tutorbench::eval::{mean_over_ks, pass_at_k, recall_at_k, truncate_cognitive_load};

proptest! {
    #[test]
    fn pass_grows_with_c_and_k(n in 1usize..40, c in 0usize..40, k in 1usize..40) {
        prop_assume!(c <= n && k <= n);
        let p = pass_at_k(n, c, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        if c < n {
            prop_assert!(pass_at_k(n, c + 1, k).unwrap() >= p);
        }
        if k < n {
            prop_assert!(pass_at_k(n, c, k + 1).unwrap() >= p - 1e-15);
        }
        prop_assert!((pass_at_k(n, c, 1).unwrap() - c as f64 / n as f64).abs() < 1e-12);
        prop_assert_eq!(pass_at_k(n, c, n).unwrap(), if c > 0 { 1.0 } else { 0.0 });
    }

    #[test]
    fn large_n_stays_in_range(n in 60usize..400, c in 0usize..400, k in 1usize..60) {
        prop_assume!(c <= n && k <= n);
        let p = pass_at_k(n, c, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn recall_grows_with_k(
        reference in proptest::collection::btree_set(0u8..12, 1..6),
        programs in proptest::collection::vec(proptest::collection::btree_set(0u8..12, 0..8), 1..10),
    ) {
        let name = |i: &u8| format!("pkg.f{i}");
        let reference: BTreeSet<String> = reference.iter().map(name).collect();
        let programs: Vec<BTreeSet<String>> =
            programs.iter().map(|p| p.iter().map(name).collect()).collect();
        let mut prev = 0.0;
        for k in 1..=programs.len() {
            let r = recall_at_k(&programs, &reference, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!(r >= prev);
            prev = r;
        }
    }

    #[test]
    fn truncation_is_idempotent(words in proptest::collection::vec("[a-z]{1,6}", 0..150), m in 1usize..80) {
        let text = words.join(" ");
        let once = truncate_cognitive_load(&text, m);
        prop_assert!(once.split_whitespace().count() <= m);
        prop_assert_eq!(truncate_cognitive_load(&once, m), once.clone());
        prop_assert!(text.ends_with(&once));
    }

    #[test]
    fn outcome_is_the_plain_mean(values in proptest::collection::vec(0.0f64..1.0, 1..6)) {
        let ks: Vec<usize> = (1..=values.len()).collect();
        let per_k: BTreeMap<usize, f64> = ks.iter().copied().zip(values.iter().copied()).collect();
        let want = values.iter().sum::<f64>() / values.len() as f64;
        prop_assert!((mean_over_ks(&per_k, &ks).unwrap() - want).abs() < 1e-12);
    }
}

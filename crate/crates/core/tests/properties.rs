//! Property tests for the structural and analytic invariants.

use proptest::prelude::*;

use patree_core::fenwick::FenwickTree;
use patree_core::malthus::{degree_dist, eval_rho_hat, solve_malthus};
use patree_core::tree::OrderedTree;
use patree_core::weight::{Tail, WeightFunction};

fn weight_strategy() -> impl Strategy<Value = WeightFunction> {
    let prefix = prop::collection::vec(0.05f64..8.0, 0..6);
    let tail = prop_oneof![
        (0.1f64..5.0).prop_map(Tail::Constant),
        (0.1f64..3.0, 0.1f64..4.0)
            .prop_map(|(slope, intercept)| Tail::Linear { slope, intercept }),
    ];
    (prefix, tail).prop_map(|(p, t)| WeightFunction::with_prefix(p, t).unwrap())
}

fn parents_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(any::<prop::sample::Index>(), 0..40).prop_map(|choices| {
        let mut parents = vec![0usize];
        for (i, c) in choices.iter().enumerate() {
            parents.push(c.index(i + 1));
        }
        parents
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn canonical_code_round_trips(parents in parents_strategy()) {
        let tree = OrderedTree::from_parents(&parents);
        let back = OrderedTree::decode(&tree.code()).unwrap();
        prop_assert_eq!(back, tree);
    }

    #[test]
    fn rho_hat_is_strictly_decreasing(
        w in weight_strategy(),
        lo in 0.05f64..4.0,
        gap in 0.1f64..4.0,
    ) {
        let threshold = match w.tail() {
            Tail::Constant(_) => 0.0,
            Tail::Linear { slope, .. } => *slope,
            Tail::DominatedLinear { slope, .. } => *slope,
        };
        let l1 = threshold + lo;
        let l2 = l1 + gap;
        let r1 = eval_rho_hat(&w, l1, 1e-12).unwrap();
        let r2 = eval_rho_hat(&w, l2, 1e-12).unwrap();
        prop_assert!(r1.value > r2.value - r1.error_bound - r2.error_bound);
    }

    #[test]
    fn degree_law_telescopes(w in weight_strategy(), kmax in 1usize..200) {
        let d = degree_dist(&w, kmax, 1e-12).unwrap();
        prop_assert!((d.total() - 1.0).abs() < 1e-12);
        prop_assert!(d.masses.iter().all(|&p| (0.0..=1.0).contains(&p)));
        prop_assert!(d.tail_mass >= 0.0);
    }

    #[test]
    fn malthus_root_scales_with_time(w in weight_strategy(), c in 0.2f64..5.0) {
        let base = solve_malthus(&w, 1e-12).unwrap();
        let scaled = solve_malthus(&w.scaled(c).unwrap(), 1e-12).unwrap();
        prop_assert!(
            (scaled.lambda_star - c * base.lambda_star).abs() < 1e-8 * (1.0 + c),
            "{} vs {}", scaled.lambda_star, c * base.lambda_star
        );
    }

    #[test]
    fn fenwick_matches_naive(
        ws in prop::collection::vec(0.0f64..10.0, 1..80),
        target_frac in 0.0f64..1.0,
    ) {
        let mut f = FenwickTree::new();
        for &w in &ws {
            f.push(w);
        }
        let mut cum = 0.0;
        for (i, &w) in ws.iter().enumerate() {
            cum += w;
            prop_assert!((f.prefix_sum(i) - cum).abs() < 1e-9);
        }
        let total: f64 = ws.iter().sum();
        let target = target_frac * total;
        let idx = f.search(target);
        // idx is the first element whose cumulative sum exceeds the target
        // (up to float noise at cell boundaries).
        let before: f64 = ws[..idx].iter().sum();
        let after = before + ws[idx];
        prop_assert!(before <= target + 1e-9, "prefix {before} vs target {target}");
        prop_assert!(after >= target - 1e-9 || idx == ws.len() - 1);
    }
}

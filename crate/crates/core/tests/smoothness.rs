use hosl_core::attacks::{attack, heterophily_ops, AttackKind, AttackSpec};
use hosl_core::datasets::{generate_sbm, label_features, SbmConfig};
use hosl_core::graph::{
    feature_smoothness, feature_smoothness_trace_form, local_smoothness, local_smoothness_all,
    Graph,
};
use hosl_core::numerics::DenseMatrix;
use hosl_core::rng::seeded;
use proptest::prelude::*;
use rand::Rng;

fn random_weighted(n: usize, f: usize, seed: u64) -> Graph {
    let mut rng = seeded(seed, 0);
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < 0.4 {
                let w = rng.gen_range(0.01..=1.0);
                a.set(i, j, w);
                a.set(j, i, w);
            }
        }
    }
    let x = DenseMatrix::from_fn(n, f, |_, _| rng.gen_range(-2.0..2.0));
    Graph::new(a, Some(x), None).unwrap()
}

fn sbm(seed: u64) -> Graph {
    generate_sbm(&SbmConfig {
        n: 200,
        classes: 2,
        p_in: 0.05,
        p_out: 0.01,
        noise_p: 0.9,
        self_loop_homophily: false,
        seed,
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn double_sum_equals_trace_form(n in 1usize..25, f in 1usize..6, seed: u64) {
        let g = random_weighted(n, f, seed);
        let a = feature_smoothness(&g, None).unwrap();
        let b = feature_smoothness_trace_form(&g, None).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn degree_weighted_local_mean_is_global(n in 1usize..25, f in 1usize..6, seed: u64) {
        let g = random_weighted(n, f, seed);
        let local = local_smoothness_all(&g).unwrap();
        let d_tilde: Vec<f64> = g.degrees().iter().map(|d| d + 1.0).collect();
        let weighted: f64 = local.iter().zip(&d_tilde).map(|(s, d)| s * d).sum::<f64>() / d_tilde.iter().sum::<f64>();
        let global = feature_smoothness(&g, None).unwrap();
        prop_assert!((weighted - global).abs() <= 1e-10 * global.max(1.0));
    }

    #[test]
    fn smoothness_is_nonnegative_and_translation_invariant(n in 1usize..20, seed: u64, shift in -3.0f64..3.0) {
        let g = random_weighted(n, 3, seed);
        let s = feature_smoothness(&g, None).unwrap();
        prop_assert!(s >= 0.0);
        let shifted = g.features().unwrap().map(|v| v + shift);
        let s2 = feature_smoothness(&g.clone().with_features(Some(shifted)).unwrap(), None).unwrap();
        prop_assert!((s - s2).abs() <= 1e-9 * s.max(1.0));
    }

    /// Every single heterophily operation leaves global smoothness no lower.
    #[test]
    fn heterophily_operations_never_smooth_the_graph(seed in 0u64..1000, ops in 1usize..40) {
        let g = generate_sbm(&SbmConfig {
            n: 40,
            classes: 3,
            p_in: 0.3,
            p_out: 0.02,
            noise_p: 0.7,
            self_loop_homophily: false,
            seed,
        }).unwrap();
        let mut prev = feature_smoothness(&g, None).unwrap();
        for k in 1..=ops {
            let (h, _) = heterophily_ops(&g, k, seed).unwrap();
            let s = feature_smoothness(&h, None).unwrap();
            prop_assert!(s >= prev - 1e-15, "op {k}: {s} < {prev}");
            prev = s;
        }
    }
}

/// Star around node 0 with `same` neighbours of its class and `other` of a
/// different one, plus a spare node of each class for insertions.
fn star(same: usize, other: usize, p: f64) -> (Graph, usize, usize) {
    let n = 1 + same + other + 2;
    let mut labels = vec![0; n];
    for l in labels.iter_mut().skip(1 + same).take(other) {
        *l = 1;
    }
    let spare_other = n - 1;
    labels[spare_other] = 1;
    let edges: Vec<_> = (1..=same + other).map(|j| (0, j)).collect();
    let a = Graph::from_edges(n, &edges).unwrap().adjacency().clone();
    let x = label_features(&labels, 2, p);
    (
        Graph::new(a, Some(x), Some(labels)).unwrap(),
        spare_other,
        1,
    )
}

fn toggled(g: &Graph, i: usize, j: usize, w: f64) -> Graph {
    let mut a = g.adjacency().clone();
    a.set(i, j, w);
    a.set(j, i, w);
    g.with_adjacency(a).unwrap()
}

#[test]
fn single_heterophilous_insertion_matches_closed_form() {
    for same in 0..6 {
        for other in 0..6 {
            for p in [0.2, 0.55, 1.0] {
                let (g, spare_other, _) = star(same, other, p);
                let d_tilde = (same + other + 1) as f64;
                let h = (same + 1) as f64 / d_tilde;
                let before = local_smoothness(&g, 0).unwrap();
                assert!((before - (1.0 - h) * 2.0 * p * p).abs() < 1e-12);
                let after = local_smoothness(&toggled(&g, 0, spare_other, 1.0), 0).unwrap();
                let expected = (1.0 - d_tilde / (d_tilde + 1.0) * h) * 2.0 * p * p;
                assert!(
                    (after - expected).abs() < 1e-10,
                    "same={same} other={other} p={p}"
                );
                assert!(after > before);
            }
        }
    }
}

#[test]
fn single_homophilous_deletion_matches_closed_form() {
    for same in 1..6 {
        for other in 0..6 {
            for p in [0.2, 0.55, 1.0] {
                let (g, _, homophilous_neighbour) = star(same, other, p);
                let d_tilde = (same + other + 1) as f64;
                let h = (same + 1) as f64 / d_tilde;
                let after =
                    local_smoothness(&toggled(&g, 0, homophilous_neighbour, 0.0), 0).unwrap();
                let expected = d_tilde / (d_tilde - 1.0) * (1.0 - h) * 2.0 * p * p;
                assert!(
                    (after - expected).abs() < 1e-10,
                    "same={same} other={other} p={p}"
                );
            }
        }
    }
}

#[test]
fn heterophily_attack_raises_smoothness_across_the_rate_grid() {
    for seed in 0..10 {
        let g = sbm(seed);
        let mut prev = f64::NEG_INFINITY;
        for step in 0..=5 {
            let rate = step as f64 * 0.05;
            let (h, _) =
                attack(&g, &AttackSpec::rate(AttackKind::Heterophily, rate, seed)).unwrap();
            let s = feature_smoothness(&h, None).unwrap();
            assert!(s > prev, "seed {seed} rate {rate}: {s} <= {prev}");
            prev = s;
        }
    }
}

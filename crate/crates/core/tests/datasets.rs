use std::fs;

use hosl_core::datasets::{
    generate_sbm, largest_connected_component, load_dataset, load_edge_list, load_graph,
    make_split, save_graph, SbmConfig, SplitRatios,
};
use hosl_core::graph::Graph;
use hosl_core::numerics::DenseMatrix;
use hosl_core::rng::seeded;
use proptest::prelude::*;
use rand::Rng;

fn random_graph(n: usize, seed: u64, weighted: bool) -> Graph {
    let mut rng = seeded(seed, 0);
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < 0.3 {
                let w = if weighted {
                    rng.gen_range(1e-9..=1.0)
                } else {
                    1.0
                };
                a.set(i, j, w);
                a.set(j, i, w);
            }
        }
    }
    let x = DenseMatrix::from_fn(n, 3, |_, _| {
        rng.gen_range(-1e6..1e6) * rng.gen::<f64>().powi(7)
    });
    let labels = (0..n).map(|_| rng.gen_range(0..4)).collect();
    Graph::new(a, Some(x), Some(labels)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn save_load_round_trip_is_bit_exact(n in 1usize..30, seed: u64, weighted: bool) {
        let g = random_graph(n, seed, weighted);
        let dir = tempfile::tempdir().unwrap();
        save_graph(&g, dir.path()).unwrap();
        let back = load_graph(dir.path()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn splits_are_disjoint_and_proportional(n in 0usize..3000, seed: u64) {
        let s = make_split(n, SplitRatios::default(), seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), n);
        prop_assert!((s.train.len() as f64 - 0.1 * n as f64).abs() <= 1.0);
        prop_assert!((s.val.len() as f64 - 0.1 * n as f64).abs() <= 1.0);
    }
}

#[test]
fn sbm_edge_homophily_matches_expectation() {
    let cfg = SbmConfig {
        n: 2000,
        classes: 4,
        p_in: 0.02,
        p_out: 0.003,
        noise_p: 0.5,
        self_loop_homophily: false,
        seed: 3,
    };
    let (mean, sd) = cfg.expected_edge_homophily();
    let g = generate_sbm(&cfg).unwrap();
    let h = g.edge_homophily().unwrap();
    assert!((h - mean).abs() <= 3.0 * sd, "{h} vs {mean} ± {sd}");
}

#[test]
fn edge_list_with_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("g.edges"), "# comment\n0 1\n1 0\n2 3\n3 3\n").unwrap();
    fs::write(p.join("g.x"), "1,0\n0,1\n1,1\n0,0\n").unwrap();
    fs::write(p.join("g.y"), "0\n1\n0\n1\n").unwrap();
    let (g, stats) = load_dataset(
        &p.join("g.edges"),
        Some(&p.join("g.x")),
        Some(&p.join("g.y")),
    )
    .unwrap();
    assert_eq!((g.n(), g.edge_count(), g.class_count()), (4, 2, 2));
    assert_eq!((stats.self_loops_dropped, stats.duplicate_edges), (1, 1));

    let err = load_dataset(&p.join("g.edges"), None, Some(&p.join("missing.y"))).unwrap_err();
    assert!(err.is_usage());
    assert!(err.to_string().contains("missing.y"));

    fs::write(p.join("bad.edges"), "0 1\n1 x\n").unwrap();
    let err = load_edge_list(&p.join("bad.edges"), None).unwrap_err();
    assert!(err.to_string().contains(":2:"), "{err}");
}

#[test]
fn largest_component_keeps_the_biggest_piece() {
    let g = Graph::from_edges(7, &[(0, 1), (2, 3), (3, 4), (4, 2), (5, 6)]).unwrap();
    let (lcc, kept) = largest_connected_component(&g).unwrap();
    assert_eq!(kept, vec![2, 3, 4]);
    assert_eq!(lcc.edge_count(), 3);
}

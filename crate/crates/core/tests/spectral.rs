use hosl_core::graph::{normalized_power, spectral_check, trace_gap, Graph};
use hosl_core::numerics::tolerances::SPECTRAL_TOL;
use hosl_core::numerics::{sym_eigen, DenseMatrix};
use hosl_core::rng::seeded;
use proptest::prelude::*;
use rand::Rng;

fn random_graph(n: usize, density: f64, seed: u64) -> Graph {
    let mut rng = seeded(seed, 0);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < density {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

/// Cycle plus chords, so no node is isolated.
fn connected_graph(n: usize, density: f64, seed: u64) -> Graph {
    let mut rng = seeded(seed, 1);
    let mut edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for i in 0..n {
        for j in (i + 2)..n {
            if rng.gen::<f64>() < density {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalized_spectrum_lies_in_unit_interval(n in 1usize..60, density in 0.0f64..1.0, seed: u64) {
        let g = random_graph(n, density, seed);
        let r = spectral_check(&g.normalized()).unwrap();
        prop_assert!(r.eigenvalues.iter().all(|&l| (-1.0 - SPECTRAL_TOL..=1.0 + SPECTRAL_TOL).contains(&l)));
        prop_assert!((r.max_eigenvalue - 1.0).abs() <= SPECTRAL_TOL);
        prop_assert!(r.power_contraction);
        prop_assert!(r.mapping_holds(), "{:?}", r.power_mapping_error);
    }

    /// `tr(Xᵀ(I − Â²)X) − tr(Xᵀ(I − Â)X) = Σₗ (λₗ − λₗ²)‖uₗᵀX‖²`: the
    /// second-order filter is rougher on features concentrated on nonnegative
    /// eigenvalues and smoother only on the negative part of the spectrum.
    #[test]
    fn second_order_quadratic_form_splits_over_the_spectrum(n in 2usize..40, density in 0.05f64..0.8, seed: u64) {
        let g = random_graph(n, density, seed);
        let na = g.normalized();
        let mut rng = seeded(seed, 2);
        let x = DenseMatrix::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0));
        let form = |m: &DenseMatrix| -> f64 {
            let mx = m.matmul(&x).unwrap();
            x.data().iter().zip(mx.data()).map(|(a, b)| a * a - a * b).sum()
        };
        let gap = form(&normalized_power(&na, 2).unwrap()) - form(&na.matrix);
        let eig = sym_eigen(&na.matrix).unwrap();
        let projected = eig.eigenvectors.t_matmul(&x).unwrap();
        let expected: f64 = eig.eigenvalues.iter().enumerate()
            .map(|(l, lam)| (lam - lam * lam) * projected.row(l).iter().map(|v| v * v).sum::<f64>())
            .sum();
        prop_assert!((gap - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
    }

    #[test]
    fn trace_gap_matches_inverse_degree_sum(n in 3usize..50, density in 0.0f64..0.6, seed: u64) {
        let g = connected_graph(n, density, seed);
        let r = trace_gap(&g).unwrap();
        prop_assert_eq!(r.isolated_nodes, 0);
        prop_assert!(r.positive());
        prop_assert!(r.closed_form_error().unwrap() <= 1e-8);
        // with self-loop degrees inside the inverse the gap vanishes
        prop_assert!(r.direct_self_loop.abs() <= 1e-8);
    }
}

#[test]
fn single_edge_spectrum() {
    // Â of K₂ is ½·ones, spectrum {1, 0}; −1 is never reached because of the
    // self-loops
    let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
    let r = spectral_check(&g.normalized()).unwrap();
    assert!((r.eigenvalues[0] - 1.0).abs() < 1e-12);
    assert!(r.eigenvalues[1].abs() < 1e-12);
}

#[test]
fn disconnected_graph_has_repeated_unit_eigenvalue() {
    let g = Graph::from_edges(5, &[(0, 1), (2, 3), (3, 4)]).unwrap();
    let r = spectral_check(&g.normalized()).unwrap();
    let ones = r
        .eigenvalues
        .iter()
        .filter(|&&l| (l - 1.0).abs() < 1e-10)
        .count();
    assert_eq!(ones, 2);
    r.verify().unwrap();
}

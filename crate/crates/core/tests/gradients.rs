use hosl_core::datasets::{generate_sbm, SbmConfig};
use hosl_core::gcn::{gcn_backward, gcn_forward, GcnParams};
use hosl_core::gradcheck::{check_gcn_gradients, check_structure_gradient};
use hosl_core::learner::{grad_structure_smooth, LearnerConfig, Problem};
use hosl_core::numerics::DenseMatrix;
use hosl_core::rng::seeded;

#[test]
fn gcn_gradients_match_finite_differences() {
    for seed in 0..10 {
        let r = check_gcn_gradients(6, seed).unwrap();
        assert!(r.max() <= 1e-4, "seed {seed}: {r:?}");
    }
}

#[test]
fn structure_gradient_matches_finite_differences() {
    for seed in 0..10 {
        let e = check_structure_gradient(6, seed).unwrap();
        assert!(e <= 1e-4, "seed {seed}: {e}");
    }
}

#[test]
fn confident_correct_predictions_have_vanishing_gradients() {
    let x = DenseMatrix::identity(3);
    let params = GcnParams::new(
        DenseMatrix::identity(3).scale(10.0),
        DenseMatrix::identity(3).scale(10.0),
    )
    .unwrap();
    let s = DenseMatrix::identity(3);
    let out = gcn_forward(&s, &x, &params).unwrap();
    let g = gcn_backward(
        &out.cache,
        &params,
        &out.probabilities,
        &[0, 1, 2],
        &[0, 1, 2],
        true,
    )
    .unwrap();
    assert!(g.w1.max_abs() < 1e-8);
    assert!(g.w2.max_abs() < 1e-8);
    assert!(g.s_hat.unwrap().max_abs() < 1e-8);
}

#[test]
fn structure_gradient_is_symmetric_and_zero_at_the_fidelity_minimiser() {
    let g = generate_sbm(&SbmConfig {
        n: 30,
        classes: 3,
        p_in: 0.3,
        p_out: 0.05,
        noise_p: 0.8,
        self_loop_homophily: false,
        seed: 5,
    })
    .unwrap();
    let problem = Problem::new(&g, 1, &[0, 10, 20]).unwrap();
    let params = GcnParams::glorot(3, 8, 3, &mut seeded(1, 0));

    let full = LearnerConfig::default();
    let problem3 = Problem::new(&g, 3, &[0, 10, 20]).unwrap();
    let grad = grad_structure_smooth(g.adjacency(), &problem3, &params, &full).unwrap();
    assert!(grad.asymmetry() <= 1e-12);

    let fidelity_only = LearnerConfig {
        eta: vec![1.0],
        lambda: 0.0,
        gnn_weight: 0.0,
        ..LearnerConfig::default()
    };
    let grad = grad_structure_smooth(g.adjacency(), &problem, &params, &fidelity_only).unwrap();
    assert!(grad.max_abs() <= 1e-12);
}

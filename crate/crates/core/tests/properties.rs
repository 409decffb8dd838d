use proptest::prelude::*;

use nhsvm::alpha::{path_sums, solve_maximin, solve_rho, validate_alpha, AlphaConfig};
use nhsvm::data::{generate_unbalanced, Dataset};
use nhsvm::inference::{argmax_multilabel_tree, brute_force_multilabel, DagMode};
use nhsvm::shared_norm::{frobenius_norm, shared_norm_lower_bound, shared_structured_estimate, trace_norm};
use nhsvm::ssvm::{alpha_objective_norms, optimal_alpha_from_norms, optimal_alpha_numeric};
use nhsvm::training::{evaluate, train, Model, Objective, TrainConfig, TrainingProblem};
use nhsvm::Taxonomy;

/// Parent of node `c` is `parents[c - 1] % c`.
fn tree_from(parents: &[usize]) -> Taxonomy {
    let edges: Vec<(usize, usize)> = parents.iter().enumerate().map(|(i, &p)| (p % (i + 1), i + 1)).collect();
    Taxonomy::from_dense(parents.len() + 1, &edges).unwrap()
}

fn tree_strategy(max_nodes: usize) -> impl Strategy<Value = Taxonomy> {
    prop::collection::vec(0usize..1000, 1..max_nodes).prop_map(|p| tree_from(&p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn topo_order_and_closures_are_consistent(t in tree_strategy(30)) {
        let mut pos = vec![0; t.node_count()];
        for (i, &n) in t.topo_order().iter().enumerate() {
            pos[n] = i;
        }
        for (p, c) in t.edges() {
            prop_assert!(pos[p] < pos[c]);
        }
        for n in 0..t.node_count() {
            let anc = t.ancestors_closure(n);
            prop_assert!(anc.contains(&n));
            for &a in anc {
                for &q in t.parents(a) {
                    prop_assert!(anc.contains(&q));
                }
            }
        }
    }

    #[test]
    fn weight_programs_are_feasible(t in tree_strategy(25), rho in 1.2f64..4.0) {
        for w in [solve_rho(&t, rho, 1.0).unwrap(), solve_maximin(&t, false, 1.0).unwrap()] {
            prop_assert!(validate_alpha(&t, &w).max_violation <= 1e-6);
            prop_assert!(w.alpha.iter().all(|&a| a >= 0.0));
            for s in path_sums(&t, &w.alpha) {
                prop_assert!(s <= 1.0 + 1e-6);
            }
        }
    }

    #[test]
    fn tree_inference_matches_enumeration(
        t in tree_strategy(16),
        seed in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        prop_assume!(t.leaves().len() <= 12);
        let r = &seed[..t.node_count()];
        let (y, v) = argmax_multilabel_tree(r, &t).unwrap();
        let (yb, vb) = brute_force_multilabel(r, &t).unwrap();
        prop_assert_eq!(y, yb);
        prop_assert_eq!(v, vb);
    }

    #[test]
    fn closed_form_weights_are_optimal(
        t in tree_strategy(20),
        b in prop::collection::vec(0.0f64..2.0, 20),
    ) {
        let b: Vec<f64> = b[..t.node_count()].iter().map(|v| v * v).collect();
        let closed = optimal_alpha_from_norms(&b, &t).unwrap();
        let (_, numeric) = optimal_alpha_numeric(&b, &t).unwrap();
        let f = alpha_objective_norms(&b, &closed.alpha);
        prop_assert!(f <= numeric * (1.0 + 1e-4) + 1e-12, "{} vs {}", f, numeric);
    }

    #[test]
    fn shared_norm_sits_between_its_bounds(
        t in tree_strategy(8),
        vals in prop::collection::vec(-1.0f64..1.0, 40),
        cols in 1usize..5,
    ) {
        let rows = t.leaves().len();
        let u = nalgebra::DMatrix::from_fn(rows, cols, |i, j| vals[(i * cols + j) % vals.len()]);
        let est = shared_structured_estimate(&u, &t, 0, 0).unwrap();
        prop_assert!(est.value <= frobenius_norm(&u) + 1e-6);
        prop_assert!(est.value + 1e-9 >= shared_norm_lower_bound(&u));
        prop_assert!(trace_norm(&u) / ((rows * cols) as f64).sqrt() <= est.value / (cols as f64).sqrt() + 1e-6);
        prop_assert!(est.certificate.unwrap().is_valid_for(&u));
    }
}

fn small_problem(seed: u64) -> (Taxonomy, Dataset, Dataset) {
    let (t, data, _) = generate_unbalanced(20, 5, 800, seed).unwrap();
    let parts = data.split(&[0.75, 0.25], seed);
    (t, parts[0].clone(), parts[1].clone())
}

#[test]
fn trained_models_beat_the_majority_class() {
    let (t, train_set, test_set) = small_problem(1);
    let counts = test_set.leaf_counts(&t);
    let majority = *counts.iter().max().unwrap() as f64 / test_set.len() as f64;
    for obj in [Objective::Flat, Objective::Hsvm, Objective::Nhsvm, Objective::NhsvmMargin, Objective::Ssvm] {
        let mut cfg = TrainConfig::new(obj, 1e-3);
        cfg.epochs = 10;
        cfg.inner_epochs = 5;
        cfg.outer_rounds = 2;
        let m = train(&train_set, &t, &cfg).unwrap();
        let acc = evaluate(&m, &t, &test_set).unwrap().accuracy;
        assert!(acc > majority + 0.05, "{obj}: accuracy {acc}, majority {majority}");
    }
}

#[test]
fn saved_model_predicts_identically() {
    let (t, train_set, test_set) = small_problem(2);
    let mut cfg = TrainConfig::new(Objective::Nhsvm, 1e-3);
    cfg.alpha = AlphaConfig::maximin(true);
    cfg.epochs = 5;
    let m = train(&train_set, &t, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    m.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.predict_all(&t, &test_set).unwrap(), m.predict_all(&t, &test_set).unwrap());
}

#[test]
fn loss_is_nonnegative_and_bounded_at_zero() {
    let (t, train_set, _) = small_problem(3);
    let cfg = TrainConfig::new(Objective::Nhsvm, 1e-3);
    let spec = cfg.loss_spec(&t, false).unwrap();
    let p = TrainingProblem::new(&t, spec, false, DagMode::default()).unwrap();
    let m = train(&train_set, &t, &cfg).unwrap();
    let zero = nhsvm::model::WeightMatrix::zeros(t.node_count(), train_set.dim);
    for inst in train_set.instances.iter().take(100) {
        assert!(p.loss(&m.weights, inst).unwrap() >= 0.0);
        // the normalized error is a distance between unit vectors
        assert!(p.loss(&zero, inst).unwrap() <= 2.0 + 1e-12);
    }
}

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use jesp_core::fsc::{evaluate_fsc_at_start, simulate};
use jesp_core::{evaluate_fsc, evaluate_joint, random_fsc, Fsc};

fn permuted(f: &Fsc, perm: &[usize]) -> Fsc {
    // perm[old] = new, with perm[0] = 0.
    let mut nodes = vec![None; f.len()];
    for (old, node) in f.nodes.iter().enumerate() {
        let mut n = node.clone();
        for row in &mut n.transitions {
            for e in row.iter_mut() {
                e.0 = perm[e.0];
            }
            row.sort_by_key(|e| e.0);
        }
        nodes[perm[old]] = Some(n);
    }
    Fsc { nodes: nodes.into_iter().map(Option::unwrap).collect(), ..f.clone() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn iteration_matches_dense_solve(seed in any::<u64>(), nodes in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = common::random_pomdp(&mut rng, 3, 2, 2, 0.9);
        let f = common::random_stochastic_fsc(&mut rng, &m.actions, &m.observations, nodes);
        let eps = 1e-6;
        let t = evaluate_fsc(&m, &f, eps).unwrap();
        let exact = common::dense_fsc_values(&m, &f);
        for n in 0..f.len() {
            for s in 0..3 {
                prop_assert!((t.alpha[n][s] - exact[n][s]).abs() <= eps / (1.0 - m.discount));
            }
        }
    }

    #[test]
    fn residuals_contract(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = common::random_pomdp(&mut rng, 4, 3, 2, 0.95);
        let f = common::random_stochastic_fsc(&mut rng, &m.actions, &m.observations, 3);
        let t = evaluate_fsc(&m, &f, 1e-8).unwrap();
        for w in t.residuals.windows(2) {
            prop_assert!(w[1] <= m.discount * w[0] + 1e-12);
        }
    }

    #[test]
    fn joint_value_is_invariant_under_relabeling(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = common::random_dec_pomdp(&mut rng, 3, &[2, 2], &[2, 2], 0.9);
        let f0 = random_fsc(&d.agents[0].actions, &d.agents[0].observations, 4, &mut rng);
        let f1 = common::random_stochastic_fsc(&mut rng, &d.agents[1].actions, &d.agents[1].observations, 4);
        let mut perm: Vec<usize> = (1..f1.len()).collect();
        for k in (1..perm.len()).rev() {
            perm.swap(k, rng.gen_range(0..=k));
        }
        perm.insert(0, 0);
        let g1 = permuted(&f1, &perm);
        let a = evaluate_joint(&d, &[f0.clone(), f1], 1e-10).unwrap();
        let b = evaluate_joint(&d, &[f0, g1], 1e-10).unwrap();
        prop_assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn json_round_trip(seed in any::<u64>(), stochastic in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actions: Vec<String> = vec!["x".into(), "y".into(), "z".into()];
        let observations: Vec<String> = vec!["p".into(), "q".into()];
        let f = if stochastic {
            common::random_stochastic_fsc(&mut rng, &actions, &observations, 3)
        } else {
            random_fsc(&actions, &observations, 5, &mut rng)
        };
        prop_assert_eq!(Fsc::from_json(&f.to_json()).unwrap(), f);
    }

    #[test]
    fn joint_evaluation_matches_dense_solve(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = common::random_dec_pomdp(&mut rng, 3, &[2, 3], &[2, 2], 0.85);
        let f0 = common::random_stochastic_fsc(&mut rng, &d.agents[0].actions, &d.agents[0].observations, 2);
        let f1 = random_fsc(&d.agents[1].actions, &d.agents[1].observations, 3, &mut rng);
        let eps = 1e-7;
        let v = evaluate_joint(&d, &[f0.clone(), f1.clone()], eps).unwrap();
        let exact = common::dense_joint_value(&d, &[f0, f1]);
        prop_assert!((v - exact).abs() <= eps / (1.0 - d.discount));
    }
}

#[test]
fn deterministic_and_distribution_encodings_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = common::random_pomdp(&mut rng, 4, 3, 2, 0.9);
    let f = random_fsc(&m.actions, &m.observations, 4, &mut rng);
    // Rewrite every rule in the distribution form of the file format.
    let mut doc: serde_json::Value = serde_json::from_str(&f.to_json()).unwrap();
    for node in doc["nodes"].as_array_mut().unwrap() {
        let a = node["action"].take();
        node.as_object_mut().unwrap().remove("action");
        node["action_dist"] = serde_json::json!([{ "action": a, "p": 1.0 }]);
        for (_, t) in node["transitions"].as_object_mut().unwrap() {
            *t = serde_json::json!([{ "to": t.take(), "p": 1.0 }]);
        }
    }
    let g = Fsc::from_json(&doc.to_string()).unwrap();
    let a = evaluate_fsc(&m, &f, 1e-9).unwrap();
    let b = evaluate_fsc(&m, &g, 1e-9).unwrap();
    assert_eq!(a.alpha, b.alpha);
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn simulation_agrees_with_exact_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let d = common::load("dectiger.dpomdp");
    let f0 = random_fsc(&d.agents[0].actions, &d.agents[0].observations, 3, &mut rng);
    let f1 = random_fsc(&d.agents[1].actions, &d.agents[1].observations, 3, &mut rng);
    let exact = evaluate_joint(&d, &[f0.clone(), f1.clone()], 1e-10).unwrap();
    let est = simulate(&d, &[f0.clone(), f1.clone()], 20_000, 200, 5).unwrap();
    assert!((est.mean - exact).abs() <= 4.0 * est.std_error, "{exact} vs {est:?}");
    // Same seed, same estimate.
    assert_eq!(simulate(&d, &[f0, f1], 20_000, 200, 5).unwrap(), est);
}

/// Pearson statistic against a uniform distribution.
fn chi_square(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

#[test]
fn random_fsc_draws_are_uniform() {
    let actions: Vec<String> = (0..3).map(|k| format!("a{k}")).collect();
    let observations: Vec<String> = (0..2).map(|k| format!("o{k}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut sizes = [0usize; 4];
    let mut acts = [0usize; 3];
    let mut succ4 = [0usize; 4];
    for _ in 0..8000 {
        let f = random_fsc(&actions, &observations, 4, &mut rng);
        assert!(f.is_deterministic());
        sizes[f.len() - 1] += 1;
        for node in &f.nodes {
            acts[node.main_action()] += 1;
            if f.len() == 4 {
                for t in &node.transitions {
                    succ4[t[0].0] += 1;
                }
            }
        }
    }
    // 0.999 quantiles of χ² with 3 and 2 degrees of freedom.
    assert!(chi_square(&sizes) < 16.27, "{sizes:?}");
    assert!(chi_square(&acts) < 13.82, "{acts:?}");
    assert!(chi_square(&succ4) < 16.27, "{succ4:?}");
}

#[test]
fn listening_forever_in_dectiger() {
    let d = common::load("dectiger.dpomdp");
    let listen: Vec<Fsc> = (0..2)
        .map(|i| Fsc::constant(&d.agents[i].actions, &d.agents[i].observations, 0))
        .collect();
    let v = evaluate_joint(&d, &listen, 1e-10).unwrap();
    assert!((v + 2.0 / (1.0 - 0.9)).abs() < 1e-8);
}

#[test]
fn start_value_uses_node_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = common::random_pomdp(&mut rng, 3, 2, 2, 0.9);
    let f = Fsc::from_tables(&m.actions, &m.observations, &[0, 1], &[vec![1, 1], vec![0, 0]]).unwrap();
    let exact = common::dense_fsc_values(&m, &f);
    let v = evaluate_fsc_at_start(&m, &f, 1e-10).unwrap();
    let expected: f64 = m.initial.entries().iter().map(|&(s, p)| p * exact[0][s]).sum();
    assert!((v - expected).abs() < 1e-8);
}

mod common;

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use jesp_core::{backup, flatten_mpomdp, solve, AlphaVector, AlphaVectorSet, Belief, Pomdp, SolverConfig};

fn config(trials: usize) -> SolverConfig {
    SolverConfig {
        timeout: Duration::from_secs(120),
        max_trials: Some(trials),
        ..Default::default()
    }
}

#[test]
fn tiger_matches_grid_oracle() {
    let m = common::load_pomdp("tiger.pomdp");
    assert_eq!(m.discount, 0.95);
    let oracle = common::grid_value_iteration(&m, 1e-3);
    let r = solve(&m, &config(2000)).unwrap();
    assert!((r.lb_at_b0 - oracle).abs() <= 0.05, "lb {} oracle {oracle}", r.lb_at_b0);
    assert!(r.ub_at_b0 >= oracle - 0.05);
}

#[test]
fn dectiger_mpomdp_matches_grid_oracle() {
    let mp = flatten_mpomdp(&common::load("dectiger.dpomdp")).unwrap();
    let oracle = common::grid_value_iteration(&mp, 1e-3);
    let r = solve(&mp, &config(2000)).unwrap();
    assert!((r.lb_at_b0 - oracle).abs() <= 0.1, "lb {} oracle {oracle}", r.lb_at_b0);
    assert!(r.ub_at_b0 >= oracle - 0.1);
}

fn sample_beliefs(rng: &mut ChaCha8Rng, m: &Pomdp, n: usize) -> Vec<Belief> {
    let mut out = vec![m.initial.clone()];
    let mut b = m.initial.clone();
    while out.len() < n {
        if rng.gen_bool(0.3) {
            out.push(Belief::from_entries(common::random_row(rng, m.n_states(), true)).unwrap());
            continue;
        }
        let succ = m.successors(&b, rng.gen_range(0..m.n_actions()));
        b = succ[rng.gen_range(0..succ.len())].belief.clone();
        out.push(b.clone());
    }
    out
}

#[test]
fn bounds_are_anytime_and_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..6 {
        let m = common::random_pomdp(&mut rng, 5, 3, 3, 0.9);
        let r = solve(&m, &config(60)).unwrap();
        for w in r.lb_trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for w in r.ub_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(r.lb_at_b0 <= r.ub_at_b0 + 1e-9);
        for b in sample_beliefs(&mut rng, &m, 200) {
            let ub = r.upper.value(&b);
            for alpha in &r.gamma_set.vectors {
                assert!(alpha.dot(&b) <= ub + 1e-6, "{} > {ub}", alpha.dot(&b));
            }
        }
    }
}

#[test]
fn solves_are_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let m = common::random_pomdp(&mut rng, 6, 3, 2, 0.9);
    let a = solve(&m, &config(40)).unwrap();
    let b = solve(&m, &config(40)).unwrap();
    assert_eq!(a.gamma_set.vectors, b.gamma_set.vectors);
    assert_eq!(a.lb_trace, b.lb_trace);
    assert_eq!(a.ub_trace, b.ub_trace);
    assert_eq!((a.iterations, a.backups), (b.iterations, b.backups));
}

#[test]
fn backup_is_the_best_one_step_lookahead() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..30 {
        let m = common::random_pomdp(&mut rng, 2, 2, 2, 0.9);
        let set = AlphaVectorSet::from_vectors(
            (0..3)
                .map(|k| AlphaVector {
                    action: k % 2,
                    values: vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
                })
                .collect(),
        );
        let x: f64 = rng.gen_range(0.0..1.0);
        let b = Belief::from_dense(&[x, 1.0 - x]).unwrap();
        // Exhaustive: for each action, each observation picks its best vector.
        let mut best = f64::NEG_INFINITY;
        for a in 0..2 {
            let mut v = m.expected_reward(&b, a);
            for o in 0..2 {
                let p = m.observation_prob(&b, a, o).unwrap();
                if p > 0.0 {
                    let post = m.belief_update(&b, a, o).unwrap();
                    v += m.discount * p * set.vectors.iter().map(|al| al.dot(&post)).fold(f64::NEG_INFINITY, f64::max);
                }
            }
            best = best.max(v);
        }
        let alpha = backup(&m, &b, &set);
        assert!((alpha.dot(&b) - best).abs() < 1e-9, "{} vs {best}", alpha.dot(&b));
    }
}

#[test]
fn timeout_and_budget_stop_the_solver() {
    let mp = flatten_mpomdp(&common::load("dectiger.dpomdp")).unwrap();
    let cfg = SolverConfig { epsilon: 1e-9, max_trials: Some(3), ..Default::default() };
    let r = solve(&mp, &cfg).unwrap();
    assert_eq!(r.iterations, 3);
    assert!(!r.converged);
    assert!(solve(&mp, &SolverConfig { epsilon: 0.0, ..Default::default() }).is_err());
}

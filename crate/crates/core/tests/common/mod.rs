//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use jesp_core::model::SparseRow;
use jesp_core::{parse_dpomdp, parse_pomdp, AgentSpec, Belief, DecPomdp, Fsc, JointSpace, Pomdp, Provenance};

pub fn problem_text(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn load(name: &str) -> DecPomdp {
    parse_dpomdp(&problem_text(name)).unwrap().0
}

pub fn load_pomdp(name: &str) -> Pomdp {
    parse_pomdp(&problem_text(name)).unwrap().0
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|k| format!("{prefix}{k}")).collect()
}

/// Random distribution over `0..n` with support of at least one entry.
pub fn random_row<R: Rng>(rng: &mut R, n: usize, sparse: bool) -> SparseRow {
    let mut w: Vec<f64> = (0..n)
        .map(|_| if sparse && rng.gen_bool(0.4) { 0.0 } else { rng.gen_range(0.05..1.0) })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.gen_range(0..n)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter().enumerate().filter(|e| *e.1 > 0.0).map(|(i, &x)| (i, x / total)).collect()
}

/// Random Dec-POMDP with the given per-agent action and observation counts.
pub fn random_dec_pomdp<R: Rng>(rng: &mut R, n_states: usize, actions: &[usize], observations: &[usize], gamma: f64) -> DecPomdp {
    let agents: Vec<AgentSpec> = actions
        .iter()
        .zip(observations)
        .enumerate()
        .map(|(i, (&na, &no))| AgentSpec {
            name: format!("agent{i}"),
            actions: labels("a", na),
            observations: labels("o", no),
        })
        .collect();
    let ja = JointSpace::new(actions.to_vec());
    let jo = JointSpace::new(observations.to_vec());
    let transition = (0..ja.len()).map(|_| (0..n_states).map(|_| random_row(rng, n_states, true)).collect()).collect();
    let observation = (0..ja.len()).map(|_| (0..n_states).map(|_| random_row(rng, jo.len(), true)).collect()).collect();
    let reward = (0..ja.len()).map(|_| (0..n_states).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
    let initial = Belief::from_entries(random_row(rng, n_states, false)).unwrap();
    DecPomdp {
        agents,
        states: labels("s", n_states),
        joint_actions: ja,
        joint_observations: jo,
        transition,
        observation,
        reward,
        initial,
        discount: gamma,
    }
}

pub fn random_pomdp<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize, n_obs: usize, gamma: f64) -> Pomdp {
    let transition = (0..n_actions).map(|_| (0..n_states).map(|_| random_row(rng, n_states, true)).collect()).collect();
    let observation = (0..n_actions).map(|_| (0..n_states).map(|_| random_row(rng, n_obs, true)).collect()).collect();
    let reward = (0..n_actions).map(|_| (0..n_states).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
    Pomdp {
        states: labels("s", n_states),
        actions: labels("a", n_actions),
        observations: labels("o", n_obs),
        transition,
        observation,
        reward,
        initial: Belief::from_entries(random_row(rng, n_states, false)).unwrap(),
        discount: gamma,
        provenance: Provenance::Native,
    }
}

/// Random controller with stochastic action and successor rules.
pub fn random_stochastic_fsc<R: Rng>(rng: &mut R, actions: &[String], observations: &[String], nodes: usize) -> Fsc {
    let mut f = Fsc::constant(actions, observations, 0);
    f.nodes = (0..nodes)
        .map(|_| {
            let mut node = jesp_core::FscNode::deterministic(0, vec![0; observations.len()]);
            node.action = random_row(rng, actions.len(), true);
            node.transitions = (0..observations.len()).map(|_| random_row(rng, nodes, true)).collect();
            node
        })
        .collect();
    f
}

fn dense(row: &SparseRow, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    for &(i, p) in row {
        v[i] += p;
    }
    v
}

/// Exact joint value by a dense linear solve of `(I - γP) v = r` over
/// `(s, n_1, …, n_k)`, built from the model tables without the crate's
/// chain builders.
pub fn dense_joint_value(d: &DecPomdp, fscs: &[Fsc]) -> f64 {
    let ns = d.n_states();
    let nodes = JointSpace::new(fscs.iter().map(Fsc::len).collect());
    let dim = ns * nodes.len();
    let idx = |s: usize, jn: usize| s * nodes.len() + jn;
    let mut p = DMatrix::<f64>::zeros(dim, dim);
    let mut r = DVector::<f64>::zeros(dim);
    let k = fscs.len();
    for s in 0..ns {
        for jn in 0..nodes.len() {
            let n = nodes.decode(jn);
            let row = idx(s, jn);
            for ja in 0..d.joint_actions.len() {
                let acts = d.joint_actions.decode(ja);
                let pa: f64 = (0..k).map(|j| dense(&fscs[j].nodes[n[j]].action, fscs[j].actions.len())[acts[j]]).product();
                if pa == 0.0 {
                    continue;
                }
                r[row] += pa * d.reward[ja][s];
                let t = dense(&d.transition[ja][s], ns);
                for s2 in 0..ns {
                    if t[s2] == 0.0 {
                        continue;
                    }
                    let o = dense(&d.observation[ja][s2], d.joint_observations.len());
                    for jo in 0..d.joint_observations.len() {
                        if o[jo] == 0.0 {
                            continue;
                        }
                        let obs = d.joint_observations.decode(jo);
                        for jn2 in 0..nodes.len() {
                            let n2 = nodes.decode(jn2);
                            let pn: f64 = (0..k)
                                .map(|j| dense(&fscs[j].nodes[n[j]].transitions[obs[j]], fscs[j].len())[n2[j]])
                                .product();
                            p[(row, idx(s2, jn2))] += pa * t[s2] * o[jo] * pn;
                        }
                    }
                }
            }
        }
    }
    let a = DMatrix::<f64>::identity(dim, dim) - p * d.discount;
    let v = a.lu().solve(&r).expect("I - γP is nonsingular");
    d.initial.entries().iter().map(|&(s, q)| q * v[idx(s, 0)]).sum()
}

/// Exact node values of a controller in a POMDP by dense linear solve;
/// `result[n][s]`.
pub fn dense_fsc_values(m: &Pomdp, f: &Fsc) -> Vec<Vec<f64>> {
    let ns = m.n_states();
    let dim = ns * f.len();
    let mut p = DMatrix::<f64>::zeros(dim, dim);
    let mut r = DVector::<f64>::zeros(dim);
    for (n, node) in f.nodes.iter().enumerate() {
        let pa = dense(&node.action, m.n_actions());
        for s in 0..ns {
            let row = n * ns + s;
            for a in 0..m.n_actions() {
                if pa[a] == 0.0 {
                    continue;
                }
                r[row] += pa[a] * m.reward[a][s];
                let t = dense(&m.transition[a][s], ns);
                for s2 in 0..ns {
                    let o = dense(&m.observation[a][s2], m.n_observations());
                    for ob in 0..m.n_observations() {
                        let eta = dense(&node.transitions[ob], f.len());
                        for n2 in 0..f.len() {
                            p[(row, n2 * ns + s2)] += pa[a] * t[s2] * o[ob] * eta[n2];
                        }
                    }
                }
            }
        }
    }
    let a = DMatrix::<f64>::identity(dim, dim) - p * m.discount;
    let v = a.lu().solve(&r).expect("I - γP is nonsingular");
    (0..f.len()).map(|n| (0..ns).map(|s| v[n * ns + s]).collect()).collect()
}

/// Optimal value at `b0` of a two-state POMDP by value iteration on a
/// uniform grid over `Pr(s = 0)` with linear interpolation.
pub fn grid_value_iteration(m: &Pomdp, step: f64) -> f64 {
    assert_eq!(m.n_states(), 2, "grid oracle covers the 2-state simplex only");
    let k = (1.0 / step).round() as usize;
    let grid: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
    let interp = |v: &[f64], x: f64| -> f64 {
        let pos = (x * k as f64).clamp(0.0, k as f64);
        let i = (pos.floor() as usize).min(k - 1);
        let w = pos - i as f64;
        v[i] * (1.0 - w) + v[i + 1] * w
    };
    let tr = |a: usize, s: usize, s2: usize| m.transition[a][s].iter().find(|e| e.0 == s2).map_or(0.0, |e| e.1);
    let ob = |a: usize, s2: usize, o: usize| m.observation[a][s2].iter().find(|e| e.0 == o).map_or(0.0, |e| e.1);
    // Per grid point and action: reward and (probability, posterior) per observation.
    let table: Vec<Vec<(f64, Vec<(f64, f64)>)>> = grid
        .iter()
        .map(|&x| {
            let b = [x, 1.0 - x];
            (0..m.n_actions())
                .map(|a| {
                    let r = b[0] * m.reward[a][0] + b[1] * m.reward[a][1];
                    let pred = [
                        b[0] * tr(a, 0, 0) + b[1] * tr(a, 1, 0),
                        b[0] * tr(a, 0, 1) + b[1] * tr(a, 1, 1),
                    ];
                    let succ = (0..m.n_observations())
                        .filter_map(|o| {
                            let u0 = pred[0] * ob(a, 0, o);
                            let u1 = pred[1] * ob(a, 1, o);
                            let z = u0 + u1;
                            (z > 0.0).then(|| (z, u0 / z))
                        })
                        .collect();
                    (r, succ)
                })
                .collect()
        })
        .collect();
    let mut v = vec![0.0; grid.len()];
    loop {
        let next: Vec<f64> = table
            .iter()
            .map(|acts| {
                acts.iter()
                    .map(|(r, succ)| r + m.discount * succ.iter().map(|&(z, x)| z * interp(&v, x)).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let delta = next.iter().zip(&v).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        v = next;
        if delta < 1e-9 {
            break;
        }
    }
    interp(&v, m.initial.prob(0))
}

//! Controller synthesis from α-vector sets.
//!
//! Nodes are keyed by the index of the α-vector that is best at the belief
//! they were reached with; the node's action is that vector's action. A FIFO
//! frontier expands nodes in creation order. Beliefs that land on an
//! existing node are folded into its representative belief as a
//! probability-weighted average. Observations that cannot occur from a
//! node's representative belief loop back to the node itself.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::fsc::{Fsc, FscNode};
use crate::model::{merge_sorted, Belief, DecPomdp, Pomdp, Provenance};
use crate::solver::AlphaVectorSet;

/// Per-agent initialization variant for controllers read off a centralized
/// solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitVariant {
    /// Stochastic: spread over every partner observation.
    Stochastic,
    /// Deterministic: follow the most probable partner observation.
    Deterministic,
}

struct Builder {
    nodes: Vec<FscNode>,
    /// Representative belief and weight per node.
    beliefs: Vec<(Belief, f64)>,
    /// Weight contributions per node, creation weight first.
    contributions: Vec<Vec<f64>>,
    by_alpha: HashMap<usize, usize>,
    frontier: VecDeque<usize>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            nodes: Vec::new(),
            beliefs: Vec::new(),
            contributions: Vec::new(),
            by_alpha: HashMap::new(),
            frontier: VecDeque::new(),
        }
    }

    /// Node for α-vector `k`, created with `(b, w)` or merged with it.
    fn visit(&mut self, k: usize, action: usize, n_obs: usize, b: Belief, w: f64) -> usize {
        if let Some(&n) = self.by_alpha.get(&k) {
            let (old_b, old_w) = &self.beliefs[n];
            let merged = old_b.mix(*old_w, &b, w);
            self.beliefs[n] = (merged, old_w + w);
            self.contributions[n].push(w);
            return n;
        }
        let n = self.nodes.len();
        self.by_alpha.insert(k, n);
        self.nodes.push(FscNode {
            action: vec![(action, 1.0)],
            transitions: vec![Vec::new(); n_obs],
            belief: None,
            weight: 0.0,
            alpha_index: Some(k),
        });
        self.beliefs.push((b, w));
        self.contributions.push(vec![w]);
        self.frontier.push_back(n);
        n
    }

    fn finish(mut self, actions: &[String], observations: &[String], states: &[String]) -> (Fsc, Vec<Vec<f64>>) {
        for (node, (b, w)) in self.nodes.iter_mut().zip(self.beliefs) {
            node.belief = Some(b);
            node.weight = w;
        }
        (
            Fsc {
                agent: 0,
                actions: actions.to_vec(),
                observations: observations.to_vec(),
                belief_states: states.to_vec(),
                nodes: self.nodes,
            },
            self.contributions,
        )
    }
}

/// Deterministic controller for the POMDP `m` read off `gamma_set` from `b0`.
pub fn extract_fsc(gamma_set: &AlphaVectorSet, m: &Pomdp, b0: &Belief) -> Fsc {
    extract_fsc_traced(gamma_set, m, b0).0
}

/// As [`extract_fsc`], also returning each node's weight contributions in
/// arrival order (creation weight first).
pub fn extract_fsc_traced(gamma_set: &AlphaVectorSet, m: &Pomdp, b0: &Belief) -> (Fsc, Vec<Vec<f64>>) {
    assert!(!gamma_set.is_empty(), "extraction needs a non-empty vector set");
    let no = m.n_observations();
    let mut bld = Builder::new();
    let k0 = gamma_set.best(b0).0;
    bld.visit(k0, gamma_set.vectors[k0].action, no, b0.clone(), 1.0);
    while let Some(n) = bld.frontier.pop_front() {
        let a = bld.nodes[n].action[0].0;
        let (b, w) = bld.beliefs[n].clone();
        let mut successors = m.successors(&b, a).into_iter().peekable();
        for o in 0..no {
            let next = match successors.peek() {
                Some(s) if s.observation == o => {
                    let s = successors.next().unwrap();
                    let k = gamma_set.best(&s.belief).0;
                    bld.visit(k, gamma_set.vectors[k].action, no, s.belief, w * s.probability)
                }
                _ => n,
            };
            bld.nodes[n].transitions[o] = vec![(next, 1.0)];
        }
    }
    bld.finish(&m.actions, &m.observations, &m.states)
}

/// Controller for agent `agent` read off a solution `gamma_set` of the
/// centralized POMDP `mp = flatten_mpomdp(d)`.
///
/// The node's action is the agent's component of the vector's joint action.
/// For each own observation `o_i` with positive probability, every
/// compatible joint observation is considered with its conditional
/// probability `Pr(o_≠i | b, a, o_i)`; the stochastic variant spreads the
/// transition over all of them, the deterministic one follows the most
/// probable (lowest joint index on ties).
pub fn extract_initial_fsc(
    gamma_set: &AlphaVectorSet,
    mp: &Pomdp,
    d: &DecPomdp,
    agent: usize,
    variant: InitVariant,
) -> Result<Fsc> {
    extract_initial_fsc_traced(gamma_set, mp, d, agent, variant).map(|x| x.0)
}

pub fn extract_initial_fsc_traced(
    gamma_set: &AlphaVectorSet,
    mp: &Pomdp,
    d: &DecPomdp,
    agent: usize,
    variant: InitVariant,
) -> Result<(Fsc, Vec<Vec<f64>>)> {
    if gamma_set.is_empty() {
        return Err(Error::InvalidModel("empty α-vector set".into()));
    }
    if agent >= d.n_agents() {
        return Err(Error::IndexOutOfRange {
            what: "agent",
            index: agent,
            len: d.n_agents(),
        });
    }
    let (ja_space, jo_space) = match &mp.provenance {
        Provenance::Mpomdp {
            joint_actions,
            joint_observations,
        } => (joint_actions.clone(), joint_observations.clone()),
        Provenance::Native if d.n_agents() == 1 => (d.joint_actions.clone(), d.joint_observations.clone()),
        _ => {
            return Err(Error::InvalidModel(
                "centralized model without joint index maps".into(),
            ))
        }
    };
    if ja_space != d.joint_actions || jo_space != d.joint_observations {
        return Err(Error::AlphabetMismatch("centralized model does not match the Dec-POMDP".into()));
    }
    let spec = &d.agents[agent];
    let n_own = spec.observations.len();
    let own_action = |k: usize| ja_space.component(gamma_set.vectors[k].action, agent);

    let mut bld = Builder::new();
    let k0 = gamma_set.best(&mp.initial).0;
    bld.visit(k0, own_action(k0), n_own, mp.initial.clone(), 1.0);
    while let Some(n) = bld.frontier.pop_front() {
        let k = bld.nodes[n].alpha_index.expect("extracted nodes carry a key");
        let ja = gamma_set.vectors[k].action;
        let (b, w) = bld.beliefs[n].clone();
        let mut by_own: Vec<Vec<(usize, f64, Belief)>> = vec![Vec::new(); n_own];
        for s in mp.successors(&b, ja) {
            let oi = jo_space.component(s.observation, agent);
            by_own[oi].push((s.observation, s.probability, s.belief));
        }
        for (oi, branches) in by_own.into_iter().enumerate() {
            let p_own: f64 = branches.iter().map(|x| x.1).sum();
            if branches.is_empty() {
                bld.nodes[n].transitions[oi] = vec![(n, 1.0)];
                continue;
            }
            let row = match variant {
                InitVariant::Stochastic => {
                    let mut row = Vec::with_capacity(branches.len());
                    for (_, p, post) in branches {
                        let k2 = gamma_set.best(&post).0;
                        let to = bld.visit(k2, own_action(k2), n_own, post, w * p);
                        row.push((to, p / p_own));
                    }
                    merge_sorted(row)
                }
                InitVariant::Deterministic => {
                    let mut best = 0;
                    for (j, br) in branches.iter().enumerate() {
                        if br.1 > branches[best].1 {
                            best = j;
                        }
                    }
                    let (_, _, post) = branches.into_iter().nth(best).unwrap();
                    let k2 = gamma_set.best(&post).0;
                    let to = bld.visit(k2, own_action(k2), n_own, post, w * p_own);
                    vec![(to, 1.0)]
                }
            };
            bld.nodes[n].transitions[oi] = row;
        }
    }
    let (mut f, contributions) = bld.finish(&spec.actions, &spec.observations, &d.states);
    f.agent = agent;
    Ok((f, contributions))
}

//! Compilation of one agent's best-response problem into a flat POMDP.
//!
//! With every other agent's controller fixed, agent `i` faces a POMDP whose
//! hidden state extends the environment state with the partners' controller
//! nodes. Two encodings are provided:
//!
//! * [`BestResponseForm::Momdp`] (default): `⟨s, n_≠i, õ_i⟩`, where `õ_i` is
//!   agent `i`'s latest observation, making the observation function
//!   deterministic. `õ_i = NULL` marks the initial layer only.
//! * [`BestResponseForm::Lagged`]: `⟨s, n^{t-1}_≠i, õ_≠i⟩`, carrying the
//!   partners' previous nodes and latest observations. Requires
//!   deterministic partner action rules.
//!
//! Extended states are addressed by a mixed-radix key
//! `(s, partner nodes, observation component)`; full builds enumerate every
//! key, reachable builds only those reachable from the initial belief.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fsc::{for_each_product, Fsc};
use crate::model::{merge_sorted, Belief, DecPomdp, Pomdp, Provenance, SparseRow};

/// Default cap on the pre-elimination extended state count.
pub const DEFAULT_STATE_CAP: u128 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BestResponseForm {
    #[default]
    Momdp,
    Lagged,
}

/// Hidden state of a best-response POMDP.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExtendedState {
    pub state: usize,
    /// One node per partner, in agent order. Lagged form: previous nodes.
    pub partner_nodes: Vec<usize>,
    /// MOMDP form: `[o_i]`. Lagged form: the partners' observations.
    /// `None` is the initial sentinel.
    pub observation: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestResponsePomdp {
    pub pomdp: Pomdp,
    pub agent: usize,
    pub form: BestResponseForm,
    /// Dense index → extended state.
    pub states: Vec<ExtendedState>,
    pub states_before_elimination: u128,
    /// Sentinel states are excluded from this count.
    pub non_sentinel_before_elimination: u128,
    /// Per environment state: observation components some joint action
    /// can emit on entering it.
    pub emittable: Vec<u128>,
}

impl BestResponsePomdp {
    pub fn states_after_elimination(&self) -> usize {
        self.states.len()
    }

    /// Reachable part of the non-sentinel subspace. A reachable sentinel
    /// `(s, n, NULL)` covers every `(s, n, o)` with `o` emittable at `s`:
    /// a formalization without the sentinel would start from any of them.
    pub fn non_sentinel_after_elimination(&self) -> u128 {
        let started: HashSet<(usize, &[usize])> = self
            .states
            .iter()
            .filter(|e| e.observation.is_none())
            .map(|e| (e.state, e.partner_nodes.as_slice()))
            .collect();
        let later = self
            .states
            .iter()
            .filter(|e| e.observation.is_some() && !started.contains(&(e.state, e.partner_nodes.as_slice())))
            .count() as u128;
        later + started.iter().map(|&(st, _)| self.emittable[st]).sum::<u128>()
    }

    pub fn elimination_ratio(&self) -> f64 {
        self.states_before_elimination as f64 / self.states.len() as f64
    }

    pub fn non_sentinel_elimination_ratio(&self) -> f64 {
        self.non_sentinel_before_elimination as f64 / self.non_sentinel_after_elimination() as f64
    }

    pub fn index_of(&self, e: &ExtendedState) -> Option<usize> {
        self.states.iter().position(|x| x == e)
    }

    /// Tab-separated table: index, environment state, partner nodes,
    /// observation component.
    pub fn legend(&self, d: &DecPomdp) -> String {
        let others: Vec<usize> = (0..d.n_agents()).filter(|&j| j != self.agent).collect();
        let mut out = String::from("index\tstate\tpartner_nodes\tobservation\n");
        for (k, e) in self.states.iter().enumerate() {
            let nodes: Vec<String> = e.partner_nodes.iter().map(|n| n.to_string()).collect();
            let obs = match &e.observation {
                None => "NULL".to_string(),
                Some(o) => match self.form {
                    BestResponseForm::Momdp => d.agents[self.agent].observations[o[0]].clone(),
                    BestResponseForm::Lagged => o
                        .iter()
                        .zip(&others)
                        .map(|(&x, &j)| d.agents[j].observations[x].as_str())
                        .collect::<Vec<_>>()
                        .join(","),
                },
            };
            let _ = writeln!(out, "{k}\t{}\t{}\t{obs}", d.states[e.state], nodes.join(","));
        }
        out
    }
}

/// Shared key arithmetic and one-step dynamics for both encodings.
struct Compiler<'a> {
    d: &'a DecPomdp,
    agent: usize,
    form: BestResponseForm,
    others: Vec<usize>,
    partners: &'a [Fsc],
    node_space: Vec<u64>,
    obs_space: Vec<u64>,
    n_node_tuples: u64,
    n_obs_codes: u64,
    /// Lagged form: `[ja][s'] → (partner observation code, Σ_{o_i} O)`.
    marginals: Vec<Vec<Vec<(u64, f64)>>>,
}

impl<'a> Compiler<'a> {
    fn new(d: &'a DecPomdp, partners: &'a [Fsc], agent: usize, form: BestResponseForm) -> Result<Self> {
        let n = d.n_agents();
        if agent >= n {
            return Err(Error::IndexOutOfRange {
                what: "agent",
                index: agent,
                len: n,
            });
        }
        if partners.len() + 1 != n {
            return Err(Error::AlphabetMismatch(format!(
                "{} partner controllers for {} agents",
                partners.len(),
                n
            )));
        }
        let others: Vec<usize> = (0..n).filter(|&j| j != agent).collect();
        for (f, &j) in partners.iter().zip(&others) {
            if f.actions != d.agents[j].actions || f.observations != d.agents[j].observations {
                return Err(Error::AlphabetMismatch(format!(
                    "controller for agent {j} does not match its alphabets"
                )));
            }
            f.validate()?;
        }
        if form == BestResponseForm::Lagged {
            for (f, &j) in partners.iter().zip(&others) {
                if let Some(node) = f.nodes.iter().position(|x| x.action.len() != 1) {
                    return Err(Error::StochasticActionRuleUnsupported { agent: j, node });
                }
            }
        }
        let node_space: Vec<u64> = partners.iter().map(|f| f.len() as u64).collect();
        let obs_space: Vec<u64> = match form {
            BestResponseForm::Momdp => vec![d.agents[agent].observations.len() as u64 + 1],
            BestResponseForm::Lagged => others
                .iter()
                .map(|&j| d.agents[j].observations.len() as u64 + 1)
                .collect(),
        };
        let mut c = Compiler {
            d,
            agent,
            form,
            others,
            partners,
            n_node_tuples: node_space.iter().product(),
            n_obs_codes: obs_space.iter().product(),
            node_space,
            obs_space,
            marginals: Vec::new(),
        };
        if form == BestResponseForm::Lagged {
            c.marginals = c.partner_observation_marginals();
        }
        Ok(c)
    }

    fn n_keys(&self) -> u128 {
        self.d.n_states() as u128 * self.n_node_tuples as u128 * self.n_obs_codes as u128
    }

    fn n_non_sentinel(&self) -> u128 {
        let real: u128 = self.obs_space.iter().map(|&x| (x - 1) as u128).product();
        self.d.n_states() as u128 * self.n_node_tuples as u128 * real
    }

    fn emittable(&self) -> Vec<u128> {
        let d = self.d;
        (0..d.n_states())
            .map(|s2| {
                let codes: HashSet<u64> = d
                    .observation
                    .iter()
                    .flat_map(|rows| rows[s2].iter().filter(|e| e.1 > 0.0))
                    .map(|&(jo, _)| match self.form {
                        BestResponseForm::Momdp => d.joint_observations.component(jo, self.agent) as u64,
                        BestResponseForm::Lagged => self.partner_obs_code(jo),
                    })
                    .collect();
                codes.len() as u128
            })
            .collect()
    }

    fn key(&self, s: usize, nodes: &[usize], obs: Option<&[usize]>) -> u64 {
        let mut node_code = 0u64;
        for (j, &n) in nodes.iter().enumerate() {
            node_code = node_code * self.node_space[j] + n as u64;
        }
        let mut obs_code = 0u64;
        if let Some(o) = obs {
            for (j, &x) in o.iter().enumerate() {
                obs_code = obs_code * self.obs_space[j] + x as u64 + 1;
            }
        }
        (s as u64 * self.n_node_tuples + node_code) * self.n_obs_codes + obs_code
    }

    fn decode(&self, key: u64) -> ExtendedState {
        let mut obs_code = key % self.n_obs_codes;
        let rest = key / self.n_obs_codes;
        let mut node_code = rest % self.n_node_tuples;
        let state = (rest / self.n_node_tuples) as usize;
        let mut partner_nodes = vec![0usize; self.node_space.len()];
        for j in (0..partner_nodes.len()).rev() {
            partner_nodes[j] = (node_code % self.node_space[j]) as usize;
            node_code /= self.node_space[j];
        }
        let observation = if obs_code == 0 {
            None
        } else {
            let mut o = vec![0usize; self.obs_space.len()];
            for j in (0..o.len()).rev() {
                o[j] = (obs_code % self.obs_space[j]) as usize;
                obs_code /= self.obs_space[j];
            }
            // A partially-null code is never produced by `key`.
            Some(o.into_iter().map(|x| x.wrapping_sub(1)).collect())
        };
        ExtendedState {
            state,
            partner_nodes,
            observation,
        }
    }

    fn is_valid_key(e: &ExtendedState) -> bool {
        e.observation
            .as_ref()
            .is_none_or(|o| o.iter().all(|&x| x != usize::MAX))
    }

    fn label(&self, e: &ExtendedState) -> String {
        let nodes: Vec<String> = e.partner_nodes.iter().map(|n| format!("n{n}")).collect();
        let obs = match &e.observation {
            None => "null".to_string(),
            Some(o) => match self.form {
                BestResponseForm::Momdp => self.d.agents[self.agent].observations[o[0]].clone(),
                BestResponseForm::Lagged => o
                    .iter()
                    .zip(&self.others)
                    .map(|(&x, &j)| self.d.agents[j].observations[x].as_str())
                    .collect::<Vec<_>>()
                    .join(","),
            },
        };
        format!("{}|{}|{}", self.d.states[e.state], nodes.join(","), obs)
    }

    fn joint_action(&self, partner_actions: &[usize], own: usize) -> usize {
        let mut parts = vec![0usize; self.d.n_agents()];
        parts[self.agent] = own;
        for (k, &j) in self.others.iter().enumerate() {
            parts[j] = partner_actions[k];
        }
        self.d.joint_actions.encode(&parts)
    }

    fn partner_obs(&self, jo: usize) -> Vec<usize> {
        self.others
            .iter()
            .map(|&j| self.d.joint_observations.component(jo, j))
            .collect()
    }

    fn partner_obs_code(&self, jo: usize) -> u64 {
        let mut code = 0u64;
        for (k, &j) in self.others.iter().enumerate() {
            code = code * self.obs_space[k] + self.d.joint_observations.component(jo, j) as u64 + 1;
        }
        code
    }

    fn partner_observation_marginals(&self) -> Vec<Vec<Vec<(u64, f64)>>> {
        self.d
            .observation
            .iter()
            .map(|rows| {
                rows.iter()
                    .map(|row| {
                        let acc: Vec<(u64, f64)> = row
                            .iter()
                            .map(|&(jo, q)| (self.partner_obs_code(jo), q))
                            .collect();
                        let mut acc = acc;
                        acc.sort_by_key(|e| e.0);
                        let mut out: Vec<(u64, f64)> = Vec::new();
                        for (c, q) in acc {
                            match out.last_mut() {
                                Some(l) if l.0 == c => l.1 += q,
                                _ => out.push((c, q)),
                            }
                        }
                        out
                    })
                    .collect()
            })
            .collect()
    }

    fn initial(&self) -> Vec<(u64, f64)> {
        let start = vec![0usize; self.partners.len()];
        self.d
            .initial
            .entries()
            .iter()
            .map(|&(s, p)| (self.key(s, &start, None), p))
            .collect()
    }

    /// Expected reward and successor distribution (by key) of `key` under
    /// agent `i`'s action `own`.
    fn expand(&self, key: u64, own: usize) -> (f64, Vec<(u64, f64)>) {
        let e = self.decode(key);
        let s = e.state;
        let d = self.d;
        let mut reward = 0.0;
        let mut acc: Vec<(u64, f64)> = Vec::new();
        match self.form {
            BestResponseForm::Momdp => {
                let psi: Vec<&SparseRow> = self
                    .partners
                    .iter()
                    .zip(&e.partner_nodes)
                    .map(|(f, &n)| &f.nodes[n].action)
                    .collect();
                for_each_product(&psi, |acts, pa| {
                    let ja = self.joint_action(acts, own);
                    reward += pa * d.reward[ja][s];
                    for &(s2, t) in &d.transition[ja][s] {
                        for &(jo, q) in &d.observation[ja][s2] {
                            let oi = d.joint_observations.component(jo, self.agent);
                            let po = self.partner_obs(jo);
                            let eta: Vec<&SparseRow> = self
                                .partners
                                .iter()
                                .zip(&e.partner_nodes)
                                .zip(&po)
                                .map(|((f, &n), &o)| &f.nodes[n].transitions[o])
                                .collect();
                            for_each_product(&eta, |next, pn| {
                                acc.push((self.key(s2, next, Some(&[oi])), pa * t * q * pn));
                            });
                        }
                    }
                });
            }
            BestResponseForm::Lagged => {
                let current: Vec<SparseRow> = match &e.observation {
                    None => vec![vec![(0, 1.0)]; self.partners.len()],
                    Some(po) => self
                        .partners
                        .iter()
                        .zip(&e.partner_nodes)
                        .zip(po)
                        .map(|((f, &m), &o)| f.nodes[m].transitions[o].clone())
                        .collect(),
                };
                let refs: Vec<&SparseRow> = current.iter().collect();
                for_each_product(&refs, |nodes, w| {
                    let acts: Vec<usize> = self
                        .partners
                        .iter()
                        .zip(nodes)
                        .map(|(f, &n)| f.nodes[n].action[0].0)
                        .collect();
                    let ja = self.joint_action(&acts, own);
                    reward += w * d.reward[ja][s];
                    let mut node_code = 0u64;
                    for (j, &n) in nodes.iter().enumerate() {
                        node_code = node_code * self.node_space[j] + n as u64;
                    }
                    for &(s2, t) in &d.transition[ja][s] {
                        for &(oc, marg) in &self.marginals[ja][s2] {
                            let k = (s2 as u64 * self.n_node_tuples + node_code) * self.n_obs_codes + oc;
                            acc.push((k, w * t * marg));
                        }
                    }
                });
            }
        }
        acc.sort_by_key(|x| x.0);
        let mut row: Vec<(u64, f64)> = Vec::new();
        for (k, p) in acc {
            match row.last_mut() {
                Some(l) if l.0 == k => l.1 += p,
                _ => row.push((k, p)),
            }
        }
        row.retain(|x| x.1 > 0.0);
        (reward, row)
    }

    /// Observation distribution on arrival in `key` after action `own`.
    fn observation_row(&self, key: u64, own: usize) -> SparseRow {
        let e = self.decode(key);
        let Some(obs) = &e.observation else {
            return vec![(0, 1.0)];
        };
        match self.form {
            BestResponseForm::Momdp => vec![(obs[0], 1.0)],
            BestResponseForm::Lagged => {
                let acts: Vec<usize> = self
                    .partners
                    .iter()
                    .zip(&e.partner_nodes)
                    .map(|(f, &n)| f.nodes[n].action[0].0)
                    .collect();
                let ja = self.joint_action(&acts, own);
                let oc = key % self.n_obs_codes;
                let denom = self.marginals[ja][e.state]
                    .iter()
                    .find(|x| x.0 == oc)
                    .map(|x| x.1)
                    .unwrap_or(0.0);
                let n_own = self.d.agents[self.agent].observations.len();
                if denom <= 0.0 {
                    let p = 1.0 / n_own as f64;
                    return (0..n_own).map(|o| (o, p)).collect();
                }
                let mut row: SparseRow = self.d.observation[ja][e.state]
                    .iter()
                    .filter(|&&(jo, _)| self.partner_obs_code(jo) == oc)
                    .map(|&(jo, q)| (self.d.joint_observations.component(jo, self.agent), q / denom))
                    .collect();
                row = merge_sorted(row);
                row
            }
        }
    }

    /// Builds the POMDP over the given sorted keys, which must be closed
    /// under transitions.
    fn assemble(&self, keys: Vec<u64>) -> BestResponsePomdp {
        let d = self.d;
        let index: HashMap<u64, usize> = keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        let spec = &d.agents[self.agent];
        let na = spec.actions.len();
        let mut transition = vec![Vec::with_capacity(keys.len()); na];
        let mut observation = vec![Vec::with_capacity(keys.len()); na];
        let mut reward = vec![Vec::with_capacity(keys.len()); na];
        for a in 0..na {
            for &k in &keys {
                let (r, row) = self.expand(k, a);
                reward[a].push(r);
                transition[a].push(row.into_iter().map(|(k2, p)| (index[&k2], p)).collect());
                observation[a].push(self.observation_row(k, a));
            }
        }
        let states: Vec<ExtendedState> = keys.iter().map(|&k| self.decode(k)).collect();
        let initial = Belief::from_entries(
            self.initial()
                .into_iter()
                .map(|(k, p)| (index[&k], p))
                .collect(),
        )
        .expect("initial belief of a valid model");
        BestResponsePomdp {
            pomdp: Pomdp {
                states: states.iter().map(|e| self.label(e)).collect(),
                actions: spec.actions.clone(),
                observations: spec.observations.clone(),
                transition,
                observation,
                reward,
                initial,
                discount: d.discount,
                provenance: Provenance::BestResponse { agent: self.agent },
            },
            agent: self.agent,
            form: self.form,
            states,
            states_before_elimination: self.n_keys(),
            non_sentinel_before_elimination: self.n_non_sentinel(),
            emittable: self.emittable(),
        }
    }

    fn check_cap(&self, cap: u128) -> Result<()> {
        if self.n_keys() > cap {
            return Err(Error::CapacityExceeded {
                states: self.n_keys(),
                cap,
            });
        }
        Ok(())
    }

    fn reachable_keys(&self) -> Vec<u64> {
        let na = self.d.agents[self.agent].actions.len();
        let mut seen: HashMap<u64, ()> = HashMap::new();
        let mut queue: VecDeque<u64> = VecDeque::new();
        for (k, _) in self.initial() {
            if seen.insert(k, ()).is_none() {
                queue.push_back(k);
            }
        }
        while let Some(k) = queue.pop_front() {
            for a in 0..na {
                for (k2, _) in self.expand(k, a).1 {
                    if seen.insert(k2, ()).is_none() {
                        queue.push_back(k2);
                    }
                }
            }
        }
        let mut keys: Vec<u64> = seen.into_keys().collect();
        keys.sort_unstable();
        keys
    }
}

/// Full extended-state POMDP, unreachable states included.
pub fn build_best_response(d: &DecPomdp, partners: &[Fsc], agent: usize) -> Result<BestResponsePomdp> {
    build_full(d, partners, agent, BestResponseForm::Momdp, DEFAULT_STATE_CAP)
}

/// Lagged-encoding counterpart of [`build_best_response`].
pub fn build_best_response_lagged(
    d: &DecPomdp,
    partners: &[Fsc],
    agent: usize,
) -> Result<BestResponsePomdp> {
    build_full(d, partners, agent, BestResponseForm::Lagged, DEFAULT_STATE_CAP)
}

pub fn build_full(
    d: &DecPomdp,
    partners: &[Fsc],
    agent: usize,
    form: BestResponseForm,
    cap: u128,
) -> Result<BestResponsePomdp> {
    let c = Compiler::new(d, partners, agent, form)?;
    c.check_cap(cap)?;
    let keys: Vec<u64> = (0..c.n_keys() as u64)
        .filter(|&k| Compiler::is_valid_key(&c.decode(k)))
        .collect();
    Ok(c.assemble(keys))
}

/// Builds only the extended states reachable from the initial belief.
/// Equal to `eliminate_unreachable(build_full(..))` without materializing
/// the full space.
pub fn build_best_response_reachable(
    d: &DecPomdp,
    partners: &[Fsc],
    agent: usize,
    form: BestResponseForm,
    cap: u128,
) -> Result<BestResponsePomdp> {
    let c = Compiler::new(d, partners, agent, form)?;
    c.check_cap(cap)?;
    let keys = c.reachable_keys();
    Ok(c.assemble(keys))
}

/// Restricts to states reachable from the initial support under any action,
/// keeping the original relative order.
pub fn eliminate_unreachable(brp: &BestResponsePomdp) -> BestResponsePomdp {
    let m = &brp.pomdp;
    let n = m.n_states();
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &(s, _) in m.initial.entries() {
        if !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(s) = queue.pop_front() {
        for a in 0..m.n_actions() {
            for &(s2, _) in &m.transition[a][s] {
                if !seen[s2] {
                    seen[s2] = true;
                    queue.push_back(s2);
                }
            }
        }
    }
    let kept: Vec<usize> = (0..n).filter(|&s| seen[s]).collect();
    let mut remap = vec![usize::MAX; n];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new;
    }
    let restrict_rows = |rows: &Vec<SparseRow>, reindex: bool| -> Vec<SparseRow> {
        kept.iter()
            .map(|&s| {
                if reindex {
                    rows[s].iter().map(|&(j, p)| (remap[j], p)).collect()
                } else {
                    rows[s].clone()
                }
            })
            .collect()
    };
    let pomdp = Pomdp {
        states: kept.iter().map(|&s| m.states[s].clone()).collect(),
        actions: m.actions.clone(),
        observations: m.observations.clone(),
        transition: m.transition.iter().map(|r| restrict_rows(r, true)).collect(),
        observation: m.observation.iter().map(|r| restrict_rows(r, false)).collect(),
        reward: m
            .reward
            .iter()
            .map(|r| kept.iter().map(|&s| r[s]).collect())
            .collect(),
        initial: Belief::from_entries(
            m.initial
                .entries()
                .iter()
                .map(|&(s, p)| (remap[s], p))
                .collect(),
        )
        .expect("restriction keeps the initial support"),
        discount: m.discount,
        provenance: m.provenance.clone(),
    };
    BestResponsePomdp {
        pomdp,
        agent: brp.agent,
        form: brp.form,
        states: kept.iter().map(|&s| brp.states[s].clone()).collect(),
        states_before_elimination: brp.states_before_elimination,
        non_sentinel_before_elimination: brp.non_sentinel_before_elimination,
        emittable: brp.emittable.clone(),
    }
}

/// Partners of `agent` in agent order, taken from a full profile.
pub fn partners_of(profile: &[Fsc], agent: usize) -> Vec<Fsc> {
    profile
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != agent)
        .map(|(_, f)| f.clone())
        .collect()
}

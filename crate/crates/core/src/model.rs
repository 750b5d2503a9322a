//! Probabilistic model types: Dec-POMDPs, flat POMDPs and sparse beliefs.
//!
//! States, actions and observations are dense indices; labels live in side
//! tables. Transition and observation functions are stored as sparse rows
//! keyed by `[action][state]`, rewards as a dense `[action][state]` table
//! with the state-action signature `R(s, a)`.

use crate::error::{Error, Result};

/// Sparse probability row: `(index, probability)` pairs sorted by index,
/// zero entries omitted.
pub type SparseRow = Vec<(usize, f64)>;

/// Tolerance for probability rows held by a valid model.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;
/// Largest deviation the loader silently repairs (with a warning).
pub const RENORMALIZATION_LIMIT: f64 = 1e-6;
/// Belief entries below this are dropped after normalization.
pub const BELIEF_DROP_THRESHOLD: f64 = 1e-12;
/// Default cap on `|joint actions| * |joint observations|` when flattening.
pub const DEFAULT_FLATTEN_CAP: u128 = 100_000_000;

/// A probability distribution over state indices, stored sparsely.
#[derive(Clone, Debug, PartialEq)]
pub struct Belief {
    entries: Vec<(usize, f64)>,
}

impl Belief {
    pub fn point(state: usize) -> Self {
        Belief {
            entries: vec![(state, 1.0)],
        }
    }

    pub fn uniform(n: usize) -> Self {
        let p = 1.0 / n as f64;
        Belief {
            entries: (0..n).map(|s| (s, p)).collect(),
        }
    }

    /// Builds a belief from a dense vector; zeros are dropped.
    pub fn from_dense(probs: &[f64]) -> Result<Self> {
        let entries = probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(s, &p)| (s, p))
            .collect();
        Self::from_entries(entries)
    }

    /// Builds a belief from `(state, probability)` pairs. Duplicate states are
    /// summed. The sum must already be 1 within [`NORMALIZATION_TOLERANCE`].
    pub fn from_entries(mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (s, p) in entries {
            if !(0.0..=1.0 + NORMALIZATION_TOLERANCE).contains(&p) || !p.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "belief entry for state {s} is {p}"
                )));
            }
            match merged.last_mut() {
                Some(last) if last.0 == s => last.1 += p,
                _ => merged.push((s, p)),
            }
        }
        merged.retain(|e| e.1 > 0.0);
        let sum: f64 = merged.iter().map(|e| e.1).sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Normalization {
                what: "belief".into(),
                sum,
            });
        }
        Ok(Belief { entries: merged })
    }

    /// Normalizes nonnegative weights, drops negligible entries.
    /// Returns `None` when the total mass is zero.
    pub fn normalized(mut entries: Vec<(usize, f64)>) -> Option<Self> {
        entries.sort_by_key(|e| e.0);
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if total <= 0.0 {
            return None;
        }
        for e in &mut entries {
            e.1 /= total;
        }
        let before = entries.len();
        entries.retain(|e| e.1 >= BELIEF_DROP_THRESHOLD);
        if entries.len() != before {
            let total: f64 = entries.iter().map(|e| e.1).sum();
            for e in &mut entries {
                e.1 /= total;
            }
        }
        Some(Belief { entries })
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn prob(&self, state: usize) -> f64 {
        self.entries
            .binary_search_by_key(&state, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn dot(&self, values: &[f64]) -> f64 {
        self.entries.iter().map(|&(s, p)| p * values[s]).sum()
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for &(s, p) in &self.entries {
            v[s] = p;
        }
        v
    }

    /// Weighted average `(w_self * self + w_other * other) / (w_self + w_other)`.
    pub fn mix(&self, w_self: f64, other: &Belief, w_other: f64) -> Belief {
        let total = w_self + w_other;
        let (a, b) = (w_self / total, w_other / total);
        let mut out = Vec::with_capacity(self.entries.len() + other.entries.len());
        let (mut i, mut j) = (0, 0);
        while i < self.entries.len() || j < other.entries.len() {
            let si = self.entries.get(i).map(|e| e.0).unwrap_or(usize::MAX);
            let sj = other.entries.get(j).map(|e| e.0).unwrap_or(usize::MAX);
            if si == sj {
                out.push((si, a * self.entries[i].1 + b * other.entries[j].1));
                i += 1;
                j += 1;
            } else if si < sj {
                out.push((si, a * self.entries[i].1));
                i += 1;
            } else {
                out.push((sj, b * other.entries[j].1));
                j += 1;
            }
        }
        Belief { entries: out }
    }

    pub fn max_abs_diff(&self, other: &Belief) -> f64 {
        let mut m: f64 = 0.0;
        for &(s, p) in &self.entries {
            m = m.max((p - other.prob(s)).abs());
        }
        for &(s, p) in &other.entries {
            m = m.max((p - self.prob(s)).abs());
        }
        m
    }
}

/// Mixed-radix encoding of per-agent tuples into joint indices.
/// Agent 0 is the most significant digit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointSpace {
    sizes: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl JointSpace {
    pub fn new(sizes: Vec<usize>) -> Self {
        let mut strides = vec![1; sizes.len()];
        for i in (0..sizes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * sizes[i + 1];
        }
        let total = sizes.iter().product();
        JointSpace {
            sizes,
            strides,
            total,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn encode(&self, parts: &[usize]) -> usize {
        debug_assert_eq!(parts.len(), self.sizes.len());
        parts.iter().zip(&self.strides).map(|(p, s)| p * s).sum()
    }

    pub fn decode(&self, joint: usize) -> Vec<usize> {
        (0..self.sizes.len())
            .map(|i| self.component(joint, i))
            .collect()
    }

    pub fn component(&self, joint: usize, agent: usize) -> usize {
        (joint / self.strides[agent]) % self.sizes[agent]
    }
}

/// Per-agent alphabet of a Dec-POMDP.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentSpec {
    pub name: String,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
}

/// Where a flat POMDP came from.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum Provenance {
    #[default]
    Native,
    /// Centralized flattening; joint indices decode with these spaces.
    Mpomdp {
        joint_actions: JointSpace,
        joint_observations: JointSpace,
    },
    BestResponse {
        agent: usize,
    },
}

/// A multi-agent decentralized POMDP with infinite horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct DecPomdp {
    pub agents: Vec<AgentSpec>,
    pub states: Vec<String>,
    pub joint_actions: JointSpace,
    pub joint_observations: JointSpace,
    /// `transition[ja][s]` → sparse distribution over next states.
    pub transition: Vec<Vec<SparseRow>>,
    /// `observation[ja][s']` → sparse distribution over joint observations.
    pub observation: Vec<Vec<SparseRow>>,
    /// `reward[ja][s]`.
    pub reward: Vec<Vec<f64>>,
    pub initial: Belief,
    pub discount: f64,
}

/// A single-agent POMDP.
#[derive(Clone, Debug, PartialEq)]
pub struct Pomdp {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    /// `transition[a][s]` → sparse distribution over next states.
    pub transition: Vec<Vec<SparseRow>>,
    /// `observation[a][s']` → sparse distribution over observations.
    pub observation: Vec<Vec<SparseRow>>,
    /// `reward[a][s]`.
    pub reward: Vec<Vec<f64>>,
    pub initial: Belief,
    pub discount: f64,
    pub provenance: Provenance,
}

/// One branch of a belief expansion: an observation, its probability, and
/// the posterior it leads to.
#[derive(Clone, Debug)]
pub struct Successor {
    pub observation: usize,
    pub probability: f64,
    pub belief: Belief,
}

fn check_row(row: &[(usize, f64)], width: usize, what: impl Fn() -> String) -> Result<()> {
    let mut sum = 0.0;
    let mut prev = None;
    for &(i, p) in row {
        if i >= width {
            return Err(Error::InvalidModel(format!("{}: index {i} >= {width}", what())));
        }
        if prev.is_some_and(|q| q >= i) {
            return Err(Error::InvalidModel(format!("{}: unsorted row", what())));
        }
        if !(0.0..=1.0 + NORMALIZATION_TOLERANCE).contains(&p) {
            return Err(Error::InvalidModel(format!("{}: probability {p}", what())));
        }
        prev = Some(i);
        sum += p;
    }
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::Normalization { what: what(), sum });
    }
    Ok(())
}

fn validate_tables(
    n_states: usize,
    n_actions: usize,
    n_obs: usize,
    transition: &[Vec<SparseRow>],
    observation: &[Vec<SparseRow>],
    reward: &[Vec<f64>],
    initial: &Belief,
    discount: f64,
) -> Result<()> {
    if n_states == 0 || n_actions == 0 || n_obs == 0 {
        return Err(Error::InvalidModel("empty state, action or observation set".into()));
    }
    if !(discount > 0.0 && discount < 1.0) {
        return Err(Error::InvalidModel(format!("discount {discount} not in (0,1)")));
    }
    if transition.len() != n_actions || observation.len() != n_actions || reward.len() != n_actions
    {
        return Err(Error::InvalidModel("table action dimension mismatch".into()));
    }
    for a in 0..n_actions {
        if transition[a].len() != n_states
            || observation[a].len() != n_states
            || reward[a].len() != n_states
        {
            return Err(Error::InvalidModel("table state dimension mismatch".into()));
        }
        for s in 0..n_states {
            check_row(&transition[a][s], n_states, || format!("T(a={a}, s={s}, ·)"))?;
            check_row(&observation[a][s], n_obs, || format!("O(a={a}, s'={s}, ·)"))?;
            if !reward[a][s].is_finite() {
                return Err(Error::InvalidModel(format!("R(s={s}, a={a}) not finite")));
            }
        }
    }
    if initial.entries().iter().any(|e| e.0 >= n_states) {
        return Err(Error::InvalidModel("initial belief outside state set".into()));
    }
    Ok(())
}

impl DecPomdp {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(Error::InvalidModel("no agents".into()));
        }
        let a_sizes: Vec<usize> = self.agents.iter().map(|a| a.actions.len()).collect();
        let o_sizes: Vec<usize> = self.agents.iter().map(|a| a.observations.len()).collect();
        if self.joint_actions.sizes() != a_sizes || self.joint_observations.sizes() != o_sizes {
            return Err(Error::InvalidModel("joint spaces disagree with agent alphabets".into()));
        }
        validate_tables(
            self.states.len(),
            self.joint_actions.len(),
            self.joint_observations.len(),
            &self.transition,
            &self.observation,
            &self.reward,
            &self.initial,
            self.discount,
        )
    }

    pub fn joint_action_label(&self, ja: usize) -> String {
        let parts = self.joint_actions.decode(ja);
        parts
            .iter()
            .enumerate()
            .map(|(i, &a)| self.agents[i].actions[a].as_str())
            .collect::<Vec<_>>()
            .join("_")
    }

    pub fn joint_observation_label(&self, jo: usize) -> String {
        let parts = self.joint_observations.decode(jo);
        parts
            .iter()
            .enumerate()
            .map(|(i, &o)| self.agents[i].observations[o].as_str())
            .collect::<Vec<_>>()
            .join("_")
    }

    /// Largest absolute reward, used for tail bounds.
    pub fn max_abs_reward(&self) -> f64 {
        self.reward
            .iter()
            .flatten()
            .fold(0.0f64, |m, r| m.max(r.abs()))
    }
}

/// Centralized relaxation: one controller picks joint actions and sees joint
/// observations. Joint index maps travel in the result's provenance.
pub fn flatten_mpomdp(d: &DecPomdp) -> Result<Pomdp> {
    flatten_mpomdp_capped(d, DEFAULT_FLATTEN_CAP)
}

pub fn flatten_mpomdp_capped(d: &DecPomdp, cap: u128) -> Result<Pomdp> {
    let entries = d.joint_actions.len() as u128 * d.joint_observations.len() as u128;
    if entries > cap {
        return Err(Error::Overflow { entries, cap });
    }
    let (actions, observations, provenance) = if d.n_agents() == 1 {
        (
            d.agents[0].actions.clone(),
            d.agents[0].observations.clone(),
            Provenance::Native,
        )
    } else {
        (
            (0..d.joint_actions.len())
                .map(|ja| d.joint_action_label(ja))
                .collect(),
            (0..d.joint_observations.len())
                .map(|jo| d.joint_observation_label(jo))
                .collect(),
            Provenance::Mpomdp {
                joint_actions: d.joint_actions.clone(),
                joint_observations: d.joint_observations.clone(),
            },
        )
    };
    Ok(Pomdp {
        states: d.states.clone(),
        actions,
        observations,
        transition: d.transition.clone(),
        observation: d.observation.clone(),
        reward: d.reward.clone(),
        initial: d.initial.clone(),
        discount: d.discount,
        provenance,
    })
}

impl Pomdp {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn n_observations(&self) -> usize {
        self.observations.len()
    }

    pub fn validate(&self) -> Result<()> {
        validate_tables(
            self.states.len(),
            self.actions.len(),
            self.observations.len(),
            &self.transition,
            &self.observation,
            &self.reward,
            &self.initial,
            self.discount,
        )
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.n_actions() {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: a,
                len: self.n_actions(),
            });
        }
        Ok(())
    }

    fn check_observation(&self, o: usize) -> Result<()> {
        if o >= self.n_observations() {
            return Err(Error::IndexOutOfRange {
                what: "observation",
                index: o,
                len: self.n_observations(),
            });
        }
        Ok(())
    }

    pub fn expected_reward(&self, b: &Belief, a: usize) -> f64 {
        b.dot(&self.reward[a])
    }

    /// Next-state distribution `Σ_s b(s) T(s,a,·)`, sparse and sorted.
    pub fn predict(&self, b: &Belief, a: usize) -> Vec<(usize, f64)> {
        let mut acc: Vec<(usize, f64)> = Vec::new();
        for &(s, p) in b.entries() {
            for &(s2, t) in &self.transition[a][s] {
                acc.push((s2, p * t));
            }
        }
        merge_sorted(acc)
    }

    /// Unnormalized posterior `O(a,s',o) Σ_s T(s,a,s') b(s)`; its mass is
    /// `Pr(o | b, a)`.
    pub fn unnormalized_posterior(&self, b: &Belief, a: usize, o: usize) -> Vec<(usize, f64)> {
        self.predict(b, a)
            .into_iter()
            .filter_map(|(s2, p)| {
                let q = row_prob(&self.observation[a][s2], o);
                (q > 0.0).then_some((s2, p * q))
            })
            .collect()
    }

    pub fn observation_prob(&self, b: &Belief, a: usize, o: usize) -> Result<f64> {
        self.check_action(a)?;
        self.check_observation(o)?;
        Ok(self
            .unnormalized_posterior(b, a, o)
            .iter()
            .map(|e| e.1)
            .sum())
    }

    pub fn belief_update(&self, b: &Belief, a: usize, o: usize) -> Result<Belief> {
        self.check_action(a)?;
        self.check_observation(o)?;
        Belief::normalized(self.unnormalized_posterior(b, a, o))
            .ok_or(Error::ZeroProbabilityObservation {
                action: a,
                observation: o,
            })
    }

    /// All positive-probability observations after `a` from `b`, in
    /// observation order, with their posteriors.
    pub fn successors(&self, b: &Belief, a: usize) -> Vec<Successor> {
        let predicted = self.predict(b, a);
        let mut per_obs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n_observations()];
        for &(s2, p) in &predicted {
            for &(o, q) in &self.observation[a][s2] {
                per_obs[o].push((s2, p * q));
            }
        }
        per_obs
            .into_iter()
            .enumerate()
            .filter_map(|(o, post)| {
                let mass: f64 = post.iter().map(|e| e.1).sum();
                if mass <= 0.0 {
                    return None;
                }
                Belief::normalized(post).map(|belief| Successor {
                    observation: o,
                    probability: mass,
                    belief,
                })
            })
            .collect()
    }

    pub fn max_abs_reward(&self) -> f64 {
        self.reward
            .iter()
            .flatten()
            .fold(0.0f64, |m, r| m.max(r.abs()))
    }

    pub fn min_reward(&self) -> f64 {
        self.reward.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_reward(&self) -> f64 {
        self.reward
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Sorts by index and sums duplicates.
pub fn merge_sorted(mut acc: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    acc.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(acc.len());
    for (i, p) in acc {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += p,
            _ => out.push((i, p)),
        }
    }
    out
}

pub fn row_prob(row: &[(usize, f64)], index: usize) -> f64 {
    row.binary_search_by_key(&index, |e| e.0)
        .map(|i| row[i].1)
        .unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Pomdp {
        // s0 -> s1 deterministically, s1 absorbing; observation reveals state.
        Pomdp {
            states: vec!["s0".into(), "s1".into()],
            actions: vec!["go".into()],
            observations: vec!["o0".into(), "o1".into()],
            transition: vec![vec![vec![(1, 1.0)], vec![(1, 1.0)]]],
            observation: vec![vec![vec![(0, 1.0)], vec![(1, 1.0)]]],
            reward: vec![vec![0.0, 1.0]],
            initial: Belief::point(0),
            discount: 0.9,
            provenance: Provenance::Native,
        }
    }

    #[test]
    fn deterministic_chain_observation() {
        let m = chain();
        m.validate().unwrap();
        let b = Belief::point(0);
        assert_eq!(m.observation_prob(&b, 0, 1).unwrap(), 1.0);
        assert_eq!(m.observation_prob(&b, 0, 0).unwrap(), 0.0);
        assert!(matches!(
            m.belief_update(&b, 0, 0),
            Err(Error::ZeroProbabilityObservation { .. })
        ));
        assert!(matches!(
            m.observation_prob(&b, 3, 0),
            Err(Error::IndexOutOfRange { what: "action", .. })
        ));
    }

    #[test]
    fn state_independent_observation_is_half() {
        let mut m = chain();
        m.observation = vec![vec![vec![(0, 0.5), (1, 0.5)], vec![(0, 0.5), (1, 0.5)]]];
        let b = Belief::uniform(2);
        assert_eq!(m.observation_prob(&b, 0, 0).unwrap(), 0.5);
    }

    #[test]
    fn identity_dynamics_concentrate_posterior() {
        let mut m = chain();
        m.transition = vec![vec![vec![(0, 1.0)], vec![(1, 1.0)]]];
        let post = m.belief_update(&Belief::uniform(2), 0, 1).unwrap();
        assert_eq!(post, Belief::point(1));
    }

    #[test]
    fn joint_space_round_trip() {
        let js = JointSpace::new(vec![3, 2, 4]);
        assert_eq!(js.len(), 24);
        for j in 0..js.len() {
            let parts = js.decode(j);
            assert_eq!(js.encode(&parts), j);
        }
        assert_eq!(js.encode(&[1, 0, 0]), 8);
        assert_eq!(js.component(8, 0), 1);
    }

    #[test]
    fn belief_mix_is_weighted_average() {
        let a = Belief::point(0);
        let b = Belief::from_dense(&[0.0, 0.5, 0.5]).unwrap();
        let m = a.mix(1.0, &b, 3.0);
        assert_eq!(m.entries(), &[(0, 0.25), (1, 0.375), (2, 0.375)]);
    }

    #[test]
    fn belief_rejects_unnormalized() {
        assert!(Belief::from_dense(&[0.5, 0.4]).is_err());
        let b = Belief::normalized(vec![(2, 2.0), (0, 2.0)]).unwrap();
        assert_eq!(b.entries(), &[(0, 0.5), (2, 0.5)]);
        assert!(Belief::normalized(vec![(0, 0.0)]).is_none());
    }

    #[test]
    fn flatten_overflow_guard() {
        let d = DecPomdp {
            agents: vec![AgentSpec {
                name: "a".into(),
                actions: vec!["x".into()],
                observations: vec!["o".into()],
            }],
            states: vec!["s".into()],
            joint_actions: JointSpace::new(vec![1]),
            joint_observations: JointSpace::new(vec![1]),
            transition: vec![vec![vec![(0, 1.0)]]],
            observation: vec![vec![vec![(0, 1.0)]]],
            reward: vec![vec![1.0]],
            initial: Belief::point(0),
            discount: 0.5,
        };
        d.validate().unwrap();
        let p = flatten_mpomdp(&d).unwrap();
        assert_eq!(p.actions, vec!["x".to_string()]);
        assert_eq!(p.provenance, Provenance::Native);
        assert!(matches!(
            flatten_mpomdp_capped(&d, 0),
            Err(Error::Overflow { .. })
        ));
    }
}

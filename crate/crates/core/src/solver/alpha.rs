use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Belief, Pomdp, Successor};

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaVector {
    pub action: usize,
    pub values: Vec<f64>,
}

impl AlphaVector {
    pub fn dot(&self, b: &Belief) -> f64 {
        b.dot(&self.values)
    }

    /// `self ≥ other` in every state.
    pub fn dominates(&self, other: &AlphaVector) -> bool {
        self.values.iter().zip(&other.values).all(|(a, b)| a >= b)
    }
}

/// A piecewise-linear convex lower bound `V(b) = max_α α·b`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AlphaVectorSet {
    pub vectors: Vec<AlphaVector>,
    /// Belief each vector was backed up at; `None` for seed vectors.
    witnesses: Vec<Option<Belief>>,
}

#[derive(Serialize, Deserialize)]
struct DumpVector {
    action: String,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Dump {
    states: Vec<String>,
    vectors: Vec<DumpVector>,
}

impl AlphaVectorSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_vectors(vectors: Vec<AlphaVector>) -> Self {
        let witnesses = vec![None; vectors.len()];
        AlphaVectorSet { vectors, witnesses }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Index and value of the best vector at `b`; lowest index on ties.
    pub fn best(&self, b: &Belief) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, a) in self.vectors.iter().enumerate() {
            let v = a.dot(b);
            if v > best.1 {
                best = (k, v);
            }
        }
        best
    }

    pub fn value(&self, b: &Belief) -> f64 {
        self.best(b).1
    }

    /// Adds `alpha` unless some vector dominates it, then drops vectors it
    /// dominates. Returns whether it was added.
    pub fn insert(&mut self, alpha: AlphaVector, witness: Option<Belief>) -> bool {
        if self.vectors.iter().any(|v| v.dominates(&alpha)) {
            return false;
        }
        let mut k = 0;
        while k < self.vectors.len() {
            if alpha.dominates(&self.vectors[k]) {
                self.vectors.remove(k);
                self.witnesses.remove(k);
            } else {
                k += 1;
            }
        }
        self.vectors.push(alpha);
        self.witnesses.push(witness);
        true
    }

    /// Evicts vectors until at most `cap` remain. The victim is the vector
    /// with the smallest advantage at its witness belief (`b0` for seed
    /// vectors) over the rest of the set; the best vector at `b0` is kept.
    pub fn enforce_cap(&mut self, cap: usize, b0: &Belief) {
        let cap = cap.max(1);
        while self.vectors.len() > cap {
            let keep = self.best(b0).0;
            let mut victim = None;
            let mut lowest = f64::INFINITY;
            for k in 0..self.vectors.len() {
                if k == keep {
                    continue;
                }
                let w = self.witnesses[k].as_ref().unwrap_or(b0);
                let own = self.vectors[k].dot(w);
                let rival = self
                    .vectors
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != k)
                    .map(|(_, v)| v.dot(w))
                    .fold(f64::NEG_INFINITY, f64::max);
                let margin = own - rival;
                if margin < lowest {
                    lowest = margin;
                    victim = Some(k);
                }
            }
            let k = victim.expect("cap < len implies a candidate");
            self.vectors.remove(k);
            self.witnesses.remove(k);
        }
    }

    /// JSON dump: `{"states": [...], "vectors": [{"action", "values"}]}`.
    pub fn to_json(&self, m: &Pomdp) -> String {
        let dump = Dump {
            states: m.states.clone(),
            vectors: self
                .vectors
                .iter()
                .map(|a| DumpVector {
                    action: m.actions[a.action].clone(),
                    values: a.values.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&dump).expect("serializable")
    }

    pub fn from_json(text: &str, m: &Pomdp) -> Result<Self> {
        let dump: Dump = serde_json::from_str(text)?;
        if dump.states != m.states {
            return Err(Error::AlphabetMismatch("α-vector dump states differ from model".into()));
        }
        let vectors = dump
            .vectors
            .into_iter()
            .map(|v| {
                let action = m.actions.iter().position(|a| *a == v.action).ok_or_else(|| {
                    Error::AlphabetMismatch(format!("unknown action `{}` in α-vector dump", v.action))
                })?;
                if v.values.len() != m.n_states() {
                    return Err(Error::InvalidModel("α-vector length differs from |S|".into()));
                }
                Ok(AlphaVector {
                    action,
                    values: v.values,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_vectors(vectors))
    }
}

/// Lower-bound vectors of the blind policies "always play `a`", iterated
/// upward from `R_min / (1 - γ)` so every iterate stays a lower bound.
pub fn blind_lower_bound(m: &Pomdp, tolerance: f64, max_iterations: usize) -> Vec<AlphaVector> {
    let ns = m.n_states();
    let gamma = m.discount;
    let floor = m.min_reward() / (1.0 - gamma);
    (0..m.n_actions())
        .map(|a| {
            let mut v = vec![floor; ns];
            for _ in 0..max_iterations {
                let mut change: f64 = 0.0;
                let next: Vec<f64> = (0..ns)
                    .map(|s| {
                        let cont: f64 = m.transition[a][s].iter().map(|&(s2, p)| p * v[s2]).sum();
                        let x = m.reward[a][s] + gamma * cont;
                        change = change.max((x - v[s]).abs());
                        x
                    })
                    .collect();
                v = next;
                if change < tolerance {
                    break;
                }
            }
            AlphaVector { action: a, values: v }
        })
        .collect()
}

/// Point-based Bellman backup of `gamma_set` at `b`.
///
/// For every action the best vector at each posterior is selected; an
/// observation with zero probability uses the best vector at the normalized
/// prediction. Returns the composite vector of the action with the highest
/// value at `b` (lowest index on ties).
pub fn backup(m: &Pomdp, b: &Belief, gamma_set: &AlphaVectorSet) -> AlphaVector {
    let successors: Vec<Vec<Successor>> = (0..m.n_actions()).map(|a| m.successors(b, a)).collect();
    backup_with(m, b, gamma_set, &successors)
}

/// [`backup`] with `successors[a] = m.successors(b, a)` precomputed.
pub(crate) fn backup_with(
    m: &Pomdp,
    b: &Belief,
    gamma_set: &AlphaVectorSet,
    successors: &[Vec<Successor>],
) -> AlphaVector {
    assert!(!gamma_set.is_empty(), "backup needs a non-empty vector set");
    let no = m.n_observations();
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for (a, succ) in successors.iter().enumerate() {
        let mut choice = vec![usize::MAX; no];
        let mut cont = 0.0;
        for s in succ {
            let (k, v) = gamma_set.best(&s.belief);
            choice[s.observation] = k;
            cont += s.probability * v;
        }
        if choice.contains(&usize::MAX) {
            let fallback = Belief::normalized(m.predict(b, a))
                .map(|p| gamma_set.best(&p).0)
                .unwrap_or(0);
            for c in choice.iter_mut().filter(|c| **c == usize::MAX) {
                *c = fallback;
            }
        }
        let value = m.expected_reward(b, a) + m.discount * cont;
        if best.as_ref().is_none_or(|x| value > x.0) {
            best = Some((value, a, choice));
        }
    }
    let (_, a, choice) = best.expect("at least one action");
    compose(m, a, &choice, gamma_set)
}

/// `α(s) = R(s,a) + γ Σ_{s',o} T(s,a,s') O(a,s',o) Γ[choice[o]](s')`.
pub(crate) fn compose(m: &Pomdp, a: usize, choice: &[usize], gamma_set: &AlphaVectorSet) -> AlphaVector {
    let ns = m.n_states();
    let values = (0..ns)
        .map(|s| {
            let mut cont = 0.0;
            for &(s2, t) in &m.transition[a][s] {
                let mut inner = 0.0;
                for &(o, q) in &m.observation[a][s2] {
                    inner += q * gamma_set.vectors[choice[o]].values[s2];
                }
                cont += t * inner;
            }
            m.reward[a][s] + m.discount * cont
        })
        .collect();
    AlphaVector { action: a, values }
}

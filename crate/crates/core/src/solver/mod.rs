//! Point-based heuristic-search POMDP solver.
//!
//! The lower bound is a set of α-vectors seeded with blind-policy values and
//! grown by point-based backups; the upper bound combines the fast informed
//! bound with a sawtooth point set. Trials descend from the initial belief
//! along the upper-bound greedy action and the observation with the largest
//! weighted excess gap, then back up both bounds on the way back.

mod alpha;
mod upper;

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::model::{Belief, Pomdp, Successor};

use alpha::backup_with;
pub use alpha::{backup, blind_lower_bound, AlphaVector, AlphaVectorSet};
pub use upper::{fast_informed_bound, UpperBound};

/// Trials stop descending below this depth.
pub const MAX_TRIAL_DEPTH: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Target gap between the bounds at the initial belief.
    pub epsilon: f64,
    pub timeout: Duration,
    /// Optional cap on the α-vector count.
    pub max_alpha_vectors: Option<usize>,
    /// Optional trial budget. Unlike the timeout, it makes truncated runs
    /// reproducible.
    pub max_trials: Option<usize>,
    /// Size of the breadth-first belief set from `b0` that is swept with
    /// backups before the first trial; 0 disables the warm-up.
    pub warmup_beliefs: usize,
    /// Sweeps over the warm-up set.
    pub warmup_sweeps: usize,
    /// Recorded for replay; ties are broken by lowest index, so the solver
    /// draws no random numbers.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 1e-3,
            timeout: Duration::from_secs(5),
            max_alpha_vectors: None,
            max_trials: None,
            warmup_beliefs: 256,
            warmup_sweeps: 4,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "solver epsilon {} must be positive",
                self.epsilon
            )));
        }
        if self.timeout.is_zero() {
            return Err(Error::InvalidConfig("solver timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub gamma_set: AlphaVectorSet,
    pub lb_at_b0: f64,
    pub ub_at_b0: f64,
    /// Completed trials.
    pub iterations: usize,
    pub backups: usize,
    pub elapsed: Duration,
    pub converged: bool,
    /// Upper bound at exit.
    pub upper: UpperBound,
    /// Bounds at the initial belief after setup and after every trial.
    pub lb_trace: Vec<f64>,
    pub ub_trace: Vec<f64>,
}

struct Search<'a> {
    m: &'a Pomdp,
    lower: AlphaVectorSet,
    upper: UpperBound,
    cfg: &'a SolverConfig,
    backups: usize,
}

impl Search<'_> {
    /// Upper-bound Q-values and successors for every action.
    fn expand(&self, b: &Belief) -> (Vec<f64>, Vec<Vec<Successor>>) {
        let successors: Vec<Vec<Successor>> = (0..self.m.n_actions()).map(|a| self.m.successors(b, a)).collect();
        let q = successors
            .iter()
            .enumerate()
            .map(|(a, succ)| {
                let cont: f64 = succ.iter().map(|s| s.probability * self.upper.value(&s.belief)).sum();
                self.m.expected_reward(b, a) + self.m.discount * cont
            })
            .collect();
        (q, successors)
    }

    /// Backs up both bounds at `b`. The new α-vector is kept only if it
    /// raises the lower bound at `b`.
    fn update(&mut self, b: &Belief) {
        let (q, successors) = self.expand(b);
        let alpha = backup_with(self.m, b, &self.lower, &successors);
        let current = self.lower.value(b);
        if alpha.dot(b) > current + 1e-12 * (1.0 + current.abs()) {
            self.lower.insert(alpha, Some(b.clone()));
            if let Some(cap) = self.cfg.max_alpha_vectors {
                self.lower.enforce_cap(cap, &self.m.initial);
            }
        }
        let q_max = q.into_iter().fold(f64::NEG_INFINITY, f64::max);
        self.upper.update(b, q_max);
        self.backups += 1;
    }

    /// Breadth-first beliefs reachable from `b0`, at most `limit`, without
    /// exact duplicates.
    fn reachable(&self, limit: usize) -> Vec<Belief> {
        let mut seen = std::collections::HashSet::new();
        let key = |b: &Belief| -> Vec<(usize, u64)> { b.entries().iter().map(|&(s, p)| (s, p.to_bits())).collect() };
        let mut out = vec![self.m.initial.clone()];
        seen.insert(key(&self.m.initial));
        let mut head = 0;
        while head < out.len() && out.len() < limit {
            let b = out[head].clone();
            head += 1;
            for a in 0..self.m.n_actions() {
                for s in self.m.successors(&b, a) {
                    if out.len() >= limit {
                        break;
                    }
                    if seen.insert(key(&s.belief)) {
                        out.push(s.belief);
                    }
                }
            }
        }
        out
    }

    /// One descent from `b0` followed by backups on the reverse path.
    ///
    /// Besides the excess-gap test, a node also stops the descent once its
    /// upper bound meets the target that would close the gap at `b0` given
    /// the current bounds of its siblings along the path.
    fn trial(&mut self) {
        let eps = self.cfg.epsilon;
        let gamma = self.m.discount;
        let mut path = vec![self.m.initial.clone()];
        let mut threshold = eps;
        let mut lower_target = self.lower.value(&self.m.initial);
        let mut upper_target = lower_target + eps;
        loop {
            let b = path.last().unwrap();
            if path.len() > MAX_TRIAL_DEPTH {
                break;
            }
            let (ub, lb) = (self.upper.value(b), self.lower.value(b));
            if ub <= upper_target.max(lb + threshold) {
                break;
            }
            let (q, mut successors) = self.expand(b);
            let mut a_star = 0;
            for a in 1..q.len() {
                if q[a] > q[a_star] {
                    a_star = a;
                }
            }
            let succ = successors.swap_remove(a_star);
            let bounds: Vec<(f64, f64)> = succ
                .iter()
                .map(|s| (self.lower.value(&s.belief), self.upper.value(&s.belief)))
                .collect();
            let reward = self.m.expected_reward(b, a_star);
            let q_lower = reward + gamma * succ.iter().zip(&bounds).map(|(s, x)| s.probability * x.0).sum::<f64>();
            lower_target = lower_target.max(q_lower);
            upper_target = upper_target.max(q_lower + threshold);
            threshold /= gamma;
            let mut chosen: Option<(f64, usize)> = None;
            for (j, (s, x)) in succ.iter().zip(&bounds).enumerate() {
                let score = s.probability * (x.1 - x.0 - threshold);
                if chosen.is_none_or(|c| score > c.0) {
                    chosen = Some((score, j));
                }
            }
            let Some((_, j)) = chosen else { break };
            let p = succ[j].probability;
            let (mut rest_lower, mut rest_upper) = (0.0, 0.0);
            for (k, (s, x)) in succ.iter().zip(&bounds).enumerate() {
                if k != j {
                    rest_lower += s.probability * x.0;
                    rest_upper += s.probability * x.1;
                }
            }
            lower_target = (lower_target - reward - gamma * rest_lower) / (gamma * p);
            upper_target = (upper_target - reward - gamma * rest_upper) / (gamma * p);
            path.push(succ.into_iter().nth(j).unwrap().belief);
        }
        for b in path.iter().rev() {
            self.update(b);
        }
    }
}

/// Solves `m` from its initial belief until the bound gap at the initial
/// belief reaches `cfg.epsilon`, the timeout, or the trial budget.
pub fn solve(m: &Pomdp, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    m.validate()?;
    let start = Instant::now();
    let tol = cfg.epsilon * (1.0 - m.discount) * 1e-3;
    let blind = blind_lower_bound(m, tol.min(1e-10), 100_000);
    let mut lower = AlphaVectorSet::new();
    for a in blind {
        lower.insert(a, None);
    }
    let fib = fast_informed_bound(m, tol, 10_000);
    let mut s = Search {
        m,
        lower,
        upper: UpperBound::new(fib, m.n_states()),
        cfg,
        backups: 0,
    };
    if cfg.warmup_beliefs > 0 && cfg.warmup_sweeps > 0 {
        let beliefs = s.reachable(cfg.warmup_beliefs);
        'sweeps: for _ in 0..cfg.warmup_sweeps {
            for b in beliefs.iter().rev() {
                if start.elapsed() >= cfg.timeout {
                    break 'sweeps;
                }
                s.update(b);
            }
        }
    }
    let b0 = &m.initial;
    let mut lb_trace = vec![s.lower.value(b0)];
    let mut ub_trace = vec![s.upper.value(b0)];
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let (lb, ub) = (*lb_trace.last().unwrap(), *ub_trace.last().unwrap());
        if ub - lb <= cfg.epsilon {
            converged = true;
            break;
        }
        if start.elapsed() >= cfg.timeout || cfg.max_trials.is_some_and(|t| iterations >= t) {
            break;
        }
        s.trial();
        iterations += 1;
        lb_trace.push(s.lower.value(b0));
        ub_trace.push(s.upper.value(b0));
    }
    Ok(SolveResult {
        lb_at_b0: *lb_trace.last().unwrap(),
        ub_at_b0: *ub_trace.last().unwrap(),
        gamma_set: s.lower,
        iterations,
        backups: s.backups,
        elapsed: start.elapsed(),
        converged,
        upper: s.upper,
        lb_trace,
        ub_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Provenance;

    fn one_state(r: f64) -> Pomdp {
        Pomdp {
            states: vec!["s".into()],
            actions: vec!["a".into()],
            observations: vec!["o".into()],
            transition: vec![vec![vec![(0, 1.0)]]],
            observation: vec![vec![vec![(0, 1.0)]]],
            reward: vec![vec![r]],
            initial: Belief::point(0),
            discount: 0.9,
            provenance: Provenance::Native,
        }
    }

    #[test]
    fn scalar_backup_recursion() {
        let m = one_state(1.0);
        let mut set = AlphaVectorSet::from_vectors(vec![AlphaVector {
            action: 0,
            values: vec![0.0],
        }]);
        let b = Belief::point(0);
        let first = backup(&m, &b, &set);
        assert_eq!(first.values, vec![1.0]);
        for k in 1..=20 {
            let next = backup(&m, &b, &set);
            set = AlphaVectorSet::from_vectors(vec![next]);
            let expected = 10.0 * (1.0 - 0.9f64.powi(k));
            assert!((set.vectors[0].values[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn dominated_vectors_are_pruned() {
        let mut set = AlphaVectorSet::new();
        assert!(set.insert(AlphaVector { action: 0, values: vec![1.0, 1.0] }, None));
        assert!(!set.insert(AlphaVector { action: 1, values: vec![0.5, 1.0] }, None));
        assert!(set.insert(AlphaVector { action: 1, values: vec![2.0, 2.0] }, None));
        assert_eq!(set.len(), 1);
        assert_eq!(set.vectors[0].action, 1);
    }

    #[test]
    fn cap_keeps_best_at_initial_belief() {
        let mut set = AlphaVectorSet::new();
        set.insert(AlphaVector { action: 0, values: vec![3.0, 0.0] }, None);
        set.insert(AlphaVector { action: 1, values: vec![0.0, 3.0] }, None);
        set.insert(AlphaVector { action: 2, values: vec![1.6, 1.6] }, None);
        let b0 = Belief::uniform(2);
        set.enforce_cap(1, &b0);
        assert_eq!(set.len(), 1);
        assert_eq!(set.vectors[0].action, 2);
    }

    #[test]
    fn single_action_value_is_exact() {
        let m = one_state(2.0);
        let r = solve(&m, &SolverConfig::default()).unwrap();
        assert!((r.lb_at_b0 - 20.0).abs() < 1e-6);
        assert!(r.converged);
    }
}

//! Upper bound: fast-informed-bound vectors combined with a sawtooth point
//! set over corner values.

use crate::model::{Belief, Pomdp};

#[derive(Clone, Debug)]
pub struct UpperBound {
    /// Fast-informed-bound vector per action.
    fib: Vec<Vec<f64>>,
    /// Upper bound at each point-mass belief.
    corner: Vec<f64>,
    /// `(b, v, b·corner)`; the last term is refreshed when corners move.
    points: Vec<(Belief, f64, f64)>,
    pruned_at: usize,
}

/// Iterates the fast informed bound downward from `R_max / (1 - γ)`.
pub fn fast_informed_bound(m: &Pomdp, tolerance: f64, max_iterations: usize) -> Vec<Vec<f64>> {
    let (ns, na, no) = (m.n_states(), m.n_actions(), m.n_observations());
    let gamma = m.discount;
    let ceiling = m.max_reward() / (1.0 - gamma);
    let mut q = vec![vec![ceiling; ns]; na];
    let mut per_obs = vec![vec![0.0; na]; no];
    let mut seen = vec![false; no];
    let mut touched: Vec<usize> = Vec::new();
    for _ in 0..max_iterations {
        let mut change: f64 = 0.0;
        let mut next = vec![vec![0.0; ns]; na];
        for a in 0..na {
            for s in 0..ns {
                for &(s2, t) in &m.transition[a][s] {
                    for &(o, p) in &m.observation[a][s2] {
                        if !seen[o] {
                            seen[o] = true;
                            touched.push(o);
                        }
                        let w = t * p;
                        for (a2, acc) in per_obs[o].iter_mut().enumerate() {
                            *acc += w * q[a2][s2];
                        }
                    }
                }
                touched.sort_unstable();
                let mut cont = 0.0;
                for &o in &touched {
                    seen[o] = false;
                    cont += per_obs[o].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    per_obs[o].iter_mut().for_each(|x| *x = 0.0);
                }
                touched.clear();
                let x = m.reward[a][s] + gamma * cont;
                change = change.max((x - q[a][s]).abs());
                next[a][s] = x;
            }
        }
        q = next;
        if change < tolerance {
            break;
        }
    }
    q
}

impl UpperBound {
    pub fn new(fib: Vec<Vec<f64>>, n_states: usize) -> Self {
        let corner = (0..n_states)
            .map(|s| fib.iter().map(|q| q[s]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        UpperBound {
            fib,
            corner,
            points: Vec::new(),
            pruned_at: 64,
        }
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    fn sawtooth(&self, b: &Belief, skip: Option<usize>) -> f64 {
        let dense = b.to_dense(self.corner.len());
        let base = b.dot(&self.corner);
        let mut best = base;
        for (k, (p, v, pc)) in self.points.iter().enumerate() {
            if Some(k) == skip {
                continue;
            }
            let mut phi = f64::INFINITY;
            for &(s, q) in p.entries() {
                let r = dense[s] / q;
                if r < phi {
                    phi = r;
                    if phi == 0.0 {
                        break;
                    }
                }
            }
            if phi == 0.0 {
                continue;
            }
            let cand = base + phi * (v - pc);
            if cand < best {
                best = cand;
            }
        }
        best
    }

    fn fib_value(&self, b: &Belief) -> f64 {
        self.fib
            .iter()
            .map(|q| b.dot(q))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn value(&self, b: &Belief) -> f64 {
        self.sawtooth(b, None).min(self.fib_value(b))
    }

    /// Records `value` as an upper bound at `b` if it improves the current one.
    pub fn update(&mut self, b: &Belief, value: f64) {
        if b.len() == 1 {
            let s = b.entries()[0].0;
            if value < self.corner[s] {
                self.corner[s] = value;
                for (p, _, pc) in &mut self.points {
                    *pc = p.dot(&self.corner);
                }
            }
            return;
        }
        let current = self.value(b);
        if value < current - 1e-12 * (1.0 + current.abs()) {
            let pc = b.dot(&self.corner);
            self.points.push((b.clone(), value, pc));
            if self.points.len() >= 2 * self.pruned_at {
                self.prune();
            }
        }
    }

    /// Drops points that the rest of the bound already implies.
    fn prune(&mut self) {
        let mut k = 0;
        while k < self.points.len() {
            let (b, v, _) = &self.points[k];
            let without = self.sawtooth(b, Some(k)).min(self.fib_value(b));
            if *v >= without - 1e-12 * (1.0 + without.abs()) {
                self.points.remove(k);
            } else {
                k += 1;
            }
        }
        self.pruned_at = self.points.len().max(64);
    }
}

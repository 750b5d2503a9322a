//! Finite-state controllers: representation, exact evaluation, random
//! generation, Monte-Carlo simulation and JSON/DOT serialization.
//!
//! Action rules and node transitions are stored as sparse distributions, so
//! deterministic controllers are simply point masses and share one
//! evaluation path with stochastic ones.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::model::{merge_sorted, Belief, DecPomdp, Pomdp, SparseRow, NORMALIZATION_TOLERANCE};

/// Default evaluation residual.
pub const DEFAULT_EVAL_EPSILON: f64 = 1e-3;
/// Sweep cap for fixed-point evaluation.
pub const MAX_EVAL_ITERATIONS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct FscNode {
    /// ψ(n, ·), sorted by action.
    pub action: SparseRow,
    /// η(n, o, ·) for every observation o.
    pub transitions: Vec<SparseRow>,
    /// Representative belief, over `Fsc::belief_states`.
    pub belief: Option<Belief>,
    pub weight: f64,
    pub alpha_index: Option<usize>,
}

impl FscNode {
    pub fn deterministic(action: usize, next: Vec<usize>) -> Self {
        FscNode {
            action: vec![(action, 1.0)],
            transitions: next.into_iter().map(|n| vec![(n, 1.0)]).collect(),
            belief: None,
            weight: 0.0,
            alpha_index: None,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.action.len() == 1 && self.transitions.iter().all(|t| t.len() == 1)
    }

    /// The most likely action, lowest index on ties.
    pub fn main_action(&self) -> usize {
        argmax_entry(&self.action)
    }
}

fn argmax_entry(row: &[(usize, f64)]) -> usize {
    let mut best = row[0];
    for &e in &row[1..] {
        if e.1 > best.1 {
            best = e;
        }
    }
    best.0
}

/// A policy automaton for one agent. Node 0 is the start node.
#[derive(Clone, Debug, PartialEq)]
pub struct Fsc {
    pub agent: usize,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    /// Labels of the states node beliefs range over; empty if no beliefs.
    pub belief_states: Vec<String>,
    pub nodes: Vec<FscNode>,
}

impl Fsc {
    /// Single node repeating `action` forever.
    pub fn constant(actions: &[String], observations: &[String], action: usize) -> Self {
        Fsc {
            agent: 0,
            actions: actions.to_vec(),
            observations: observations.to_vec(),
            belief_states: Vec::new(),
            nodes: vec![FscNode::deterministic(action, vec![0; observations.len()])],
        }
    }

    /// Deterministic controller from per-node actions and successor tables.
    pub fn from_tables(
        actions: &[String],
        observations: &[String],
        node_actions: &[usize],
        next: &[Vec<usize>],
    ) -> Result<Self> {
        let f = Fsc {
            agent: 0,
            actions: actions.to_vec(),
            observations: observations.to_vec(),
            belief_states: Vec::new(),
            nodes: node_actions
                .iter()
                .zip(next)
                .map(|(&a, n)| FscNode::deterministic(a, n.clone()))
                .collect(),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_deterministic(&self) -> bool {
        self.nodes.iter().all(FscNode::is_deterministic)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidFsc("no nodes".into()));
        }
        let check = |row: &[(usize, f64)], width: usize, what: String| -> Result<()> {
            if row.is_empty() {
                return Err(Error::InvalidFsc(format!("{what}: empty distribution")));
            }
            let mut sum = 0.0;
            for (k, &(i, p)) in row.iter().enumerate() {
                if i >= width || (k > 0 && row[k - 1].0 >= i) {
                    return Err(Error::InvalidFsc(format!("{what}: bad index {i}")));
                }
                if !(p > 0.0 && p <= 1.0 + NORMALIZATION_TOLERANCE) {
                    return Err(Error::InvalidFsc(format!("{what}: probability {p}")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(Error::InvalidFsc(format!("{what}: sums to {sum}")));
            }
            Ok(())
        };
        for (n, node) in self.nodes.iter().enumerate() {
            check(&node.action, self.actions.len(), format!("ψ({n})"))?;
            if node.transitions.len() != self.observations.len() {
                return Err(Error::InvalidFsc(format!(
                    "node {n} has {} transition rows for {} observations",
                    node.transitions.len(),
                    self.observations.len()
                )));
            }
            for (o, row) in node.transitions.iter().enumerate() {
                check(row, self.nodes.len(), format!("η({n}, {o})"))?;
            }
            if !(node.weight >= 0.0 && node.weight.is_finite()) {
                return Err(Error::InvalidFsc(format!("node {n} weight {}", node.weight)));
            }
            if let Some(b) = &node.belief {
                if b.entries().iter().any(|e| e.0 >= self.belief_states.len()) {
                    return Err(Error::InvalidFsc(format!("node {n} belief outside state labels")));
                }
            }
        }
        Ok(())
    }

    /// Errors unless the controller's alphabets have the given sizes.
    pub fn check_alphabet(&self, n_actions: usize, n_observations: usize) -> Result<()> {
        if self.actions.len() != n_actions || self.observations.len() != n_observations {
            return Err(Error::AlphabetMismatch(format!(
                "controller has {} actions / {} observations, model has {} / {}",
                self.actions.len(),
                self.observations.len(),
                n_actions,
                n_observations
            )));
        }
        Ok(())
    }

    pub fn to_json_value(&self) -> Value {
        let nodes: Vec<Value> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, node)| {
                let mut obj = Map::new();
                obj.insert("id".into(), json!(id));
                if node.action.len() == 1 && node.action[0].1 == 1.0 {
                    obj.insert("action".into(), json!(self.actions[node.action[0].0]));
                } else {
                    let dist: Vec<Value> = node
                        .action
                        .iter()
                        .map(|&(a, p)| json!({"action": self.actions[a], "p": p}))
                        .collect();
                    obj.insert("action_dist".into(), Value::Array(dist));
                }
                let mut trans = Map::new();
                for (o, row) in node.transitions.iter().enumerate() {
                    let v = if row.len() == 1 && row[0].1 == 1.0 {
                        json!(row[0].0)
                    } else {
                        Value::Array(row.iter().map(|&(to, p)| json!({"to": to, "p": p})).collect())
                    };
                    trans.insert(self.observations[o].clone(), v);
                }
                obj.insert("transitions".into(), Value::Object(trans));
                obj.insert("weight".into(), json!(node.weight));
                if let Some(b) = &node.belief {
                    let mut bm = Map::new();
                    for &(s, p) in b.entries() {
                        bm.insert(self.belief_states[s].clone(), json!(p));
                    }
                    obj.insert("belief".into(), Value::Object(bm));
                }
                if let Some(k) = node.alpha_index {
                    obj.insert("alpha".into(), json!(k));
                }
                Value::Object(obj)
            })
            .collect();
        let mut root = Map::new();
        root.insert("agent".into(), json!(self.agent));
        root.insert("start".into(), json!(0));
        root.insert("deterministic".into(), json!(self.is_deterministic()));
        root.insert("actions".into(), json!(self.actions));
        root.insert("observations".into(), json!(self.observations));
        if !self.belief_states.is_empty() {
            root.insert("states".into(), json!(self.belief_states));
        }
        root.insert("nodes".into(), Value::Array(nodes));
        Value::Object(root)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("serializable")
    }

    /// Reads a controller whose file lists its own alphabets.
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_value(&serde_json::from_str(text)?, None)
    }

    /// Reads a controller for a known alphabet. Alphabets present in the
    /// file must equal the given ones.
    pub fn from_json_with(
        text: &str,
        actions: &[String],
        observations: &[String],
        states: &[String],
    ) -> Result<Self> {
        Self::from_json_value(&serde_json::from_str(text)?, Some((actions, observations, states)))
    }

    fn from_json_value(v: &Value, ctx: Option<(&[String], &[String], &[String])>) -> Result<Self> {
        let bad = |m: &str| Error::InvalidFsc(m.to_string());
        let obj = v.as_object().ok_or_else(|| bad("expected an object"))?;
        let strings = |key: &str| -> Result<Option<Vec<String>>> {
            match obj.get(key) {
                None => Ok(None),
                Some(Value::Array(a)) => a
                    .iter()
                    .map(|x| {
                        x.as_str()
                            .map(str::to_string)
                            .ok_or_else(|| bad(&format!("`{key}` must hold strings")))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(Some),
                Some(_) => Err(bad(&format!("`{key}` must be an array"))),
            }
        };
        let pick = |key: &str, given: Option<&[String]>| -> Result<Vec<String>> {
            match (strings(key)?, given) {
                (Some(f), Some(g)) if f != g => Err(Error::AlphabetMismatch(format!(
                    "`{key}` in controller file {:?} differs from model {:?}",
                    f, g
                ))),
                (Some(f), _) => Ok(f),
                (None, Some(g)) => Ok(g.to_vec()),
                (None, None) => Err(bad(&format!("missing `{key}`"))),
            }
        };
        let actions = pick("actions", ctx.map(|c| c.0))?;
        let observations = pick("observations", ctx.map(|c| c.1))?;
        let belief_states = match (strings("states")?, ctx) {
            (Some(s), _) => s,
            (None, Some(c)) => c.2.to_vec(),
            (None, None) => Vec::new(),
        };
        let agent = obj.get("agent").and_then(Value::as_u64).unwrap_or(0) as usize;
        if obj.get("start").and_then(Value::as_u64).unwrap_or(0) != 0 {
            return Err(bad("start node must be 0"));
        }
        let declared_det = obj.get("deterministic").and_then(Value::as_bool);
        let raw_nodes = obj
            .get("nodes")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing `nodes`"))?;

        let lookup = |labels: &[String], name: &str, what: &str| -> Result<usize> {
            labels.iter().position(|l| l == name).ok_or_else(|| {
                Error::AlphabetMismatch(format!("unknown {what} label `{name}`"))
            })
        };
        let num = |v: &Value, what: &str| v.as_f64().ok_or_else(|| bad(&format!("{what} must be a number")));

        let mut nodes: Vec<Option<FscNode>> = vec![None; raw_nodes.len()];
        for raw in raw_nodes {
            let nobj = raw.as_object().ok_or_else(|| bad("node must be an object"))?;
            let id = nobj
                .get("id")
                .and_then(Value::as_u64)
                .ok_or_else(|| bad("node without integer `id`"))? as usize;
            if id >= nodes.len() || nodes[id].is_some() {
                return Err(bad(&format!("node id {id} out of range or repeated")));
            }
            let action = if let Some(a) = nobj.get("action") {
                let name = a.as_str().ok_or_else(|| bad("`action` must be a label"))?;
                vec![(lookup(&actions, name, "action")?, 1.0)]
            } else if let Some(Value::Array(dist)) = nobj.get("action_dist") {
                let mut row = Vec::new();
                for e in dist {
                    let name = e
                        .get("action")
                        .and_then(Value::as_str)
                        .ok_or_else(|| bad("action_dist entry needs `action`"))?;
                    row.push((lookup(&actions, name, "action")?, num(&e["p"], "p")?));
                }
                merge_sorted(row)
            } else {
                return Err(bad(&format!("node {id} has no action rule")));
            };
            let tobj = nobj
                .get("transitions")
                .and_then(Value::as_object)
                .ok_or_else(|| bad(&format!("node {id} has no transitions")))?;
            let mut transitions: Vec<Option<SparseRow>> = vec![None; observations.len()];
            for (label, t) in tobj {
                let o = lookup(&observations, label, "observation")?;
                let row = match t {
                    Value::Array(list) => {
                        let mut row = Vec::new();
                        for e in list {
                            let to = e
                                .get("to")
                                .and_then(Value::as_u64)
                                .ok_or_else(|| bad("transition entry needs `to`"))?;
                            row.push((to as usize, num(&e["p"], "p")?));
                        }
                        merge_sorted(row)
                    }
                    other => vec![(
                        other.as_u64().ok_or_else(|| bad("transition target must be a node id"))?
                            as usize,
                        1.0,
                    )],
                };
                transitions[o] = Some(row);
            }
            let transitions = transitions
                .into_iter()
                .enumerate()
                .map(|(o, r)| {
                    r.ok_or_else(|| {
                        bad(&format!("node {id} lacks a transition for `{}`", observations[o]))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let weight = match nobj.get("weight") {
                Some(w) => num(w, "weight")?,
                None => 0.0,
            };
            let belief = match nobj.get("belief") {
                None => None,
                Some(Value::Object(bm)) => {
                    let mut entries = Vec::with_capacity(bm.len());
                    for (label, p) in bm {
                        entries.push((lookup(&belief_states, label, "state")?, num(p, "belief")?));
                    }
                    entries.sort_by_key(|e| e.0);
                    Some(Belief::from_entries(entries)?)
                }
                Some(_) => return Err(bad("`belief` must be an object")),
            };
            let alpha_index = nobj.get("alpha").and_then(Value::as_u64).map(|k| k as usize);
            nodes[id] = Some(FscNode {
                action,
                transitions,
                belief,
                weight,
                alpha_index,
            });
        }
        let f = Fsc {
            agent,
            actions,
            observations,
            belief_states,
            nodes: nodes
                .into_iter()
                .map(|n| n.ok_or_else(|| bad("missing node id")))
                .collect::<Result<_>>()?,
        };
        f.validate()?;
        if declared_det == Some(true) && !f.is_deterministic() {
            return Err(bad("declared deterministic but has stochastic rules"));
        }
        Ok(f)
    }

    /// Graphviz rendering of the controller graph.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph fsc {\n  rankdir=LR;\n");
        for (n, node) in self.nodes.iter().enumerate() {
            let label: Vec<String> = node
                .action
                .iter()
                .map(|&(a, p)| {
                    if p == 1.0 {
                        self.actions[a].clone()
                    } else {
                        format!("{}:{:.3}", self.actions[a], p)
                    }
                })
                .collect();
            let shape = if n == 0 { "doublecircle" } else { "circle" };
            let _ = writeln!(
                out,
                "  n{n} [shape={shape}, label=\"n{n}\\n{}\"];",
                label.join("\\n")
            );
        }
        for (n, node) in self.nodes.iter().enumerate() {
            let mut edges: Vec<(usize, Vec<String>)> = Vec::new();
            for (o, row) in node.transitions.iter().enumerate() {
                for &(to, p) in row {
                    let l = if p == 1.0 {
                        self.observations[o].clone()
                    } else {
                        format!("{}:{:.3}", self.observations[o], p)
                    };
                    match edges.iter_mut().find(|e| e.0 == to) {
                        Some(e) => e.1.push(l),
                        None => edges.push((to, vec![l])),
                    }
                }
            }
            for (to, labels) in edges {
                let _ = writeln!(out, "  n{n} -> n{to} [label=\"{}\"];", labels.join(", "));
            }
        }
        out.push_str("}\n");
        out
    }
}

/// One value vector per controller node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeValueTable {
    pub alpha: Vec<Vec<f64>>,
    /// Max-norm change of the last sweep.
    pub residual: f64,
    pub iterations: usize,
    /// Max-norm change of every sweep, in order.
    pub residuals: Vec<f64>,
}

impl NodeValueTable {
    pub fn value_at(&self, b: &Belief, node: usize) -> f64 {
        b.dot(&self.alpha[node])
    }
}

/// A finite Markov reward process in sparse form.
pub(crate) struct Chain {
    pub reward: Vec<f64>,
    pub rows: Vec<SparseRow>,
}

/// Jacobi iteration from zero until the max-norm change drops below `eps`.
/// Returns values and the residual of every sweep.
pub(crate) fn iterate_chain(chain: &Chain, gamma: f64, eps: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("evaluation epsilon {eps} must be positive")));
    }
    let n = chain.reward.len();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residuals = Vec::new();
    for _ in 0..MAX_EVAL_ITERATIONS {
        let mut residual: f64 = 0.0;
        for i in 0..n {
            let cont: f64 = chain.rows[i].iter().map(|&(j, p)| p * v[j]).sum();
            let x = chain.reward[i] + gamma * cont;
            residual = residual.max((x - v[i]).abs());
            next[i] = x;
        }
        std::mem::swap(&mut v, &mut next);
        residuals.push(residual);
        if residual < eps {
            return Ok((v, residuals));
        }
    }
    let residual = v
        .iter()
        .zip(&next)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Err(Error::NonConvergence {
        iterations: MAX_EVAL_ITERATIONS,
        residual,
    })
}

/// Node-state chain of a controller acting in a POMDP; index `n * |S| + s`.
pub(crate) fn fsc_chain(m: &Pomdp, f: &Fsc) -> Chain {
    let ns = m.n_states();
    let mut reward = Vec::with_capacity(f.len() * ns);
    let mut rows = Vec::with_capacity(f.len() * ns);
    for node in &f.nodes {
        for s in 0..ns {
            let mut r = 0.0;
            let mut acc = Vec::new();
            for &(a, pa) in &node.action {
                r += pa * m.reward[a][s];
                for &(s2, t) in &m.transition[a][s] {
                    for &(o, q) in &m.observation[a][s2] {
                        for &(n2, pn) in &node.transitions[o] {
                            acc.push((n2 * ns + s2, pa * t * q * pn));
                        }
                    }
                }
            }
            reward.push(r);
            rows.push(merge_sorted(acc));
        }
    }
    Chain { reward, rows }
}

/// Value of every controller node from every state, iterated to residual
/// `eps`. The result is within `eps / (1 - γ)` of the exact fixed point.
pub fn evaluate_fsc(m: &Pomdp, f: &Fsc, eps: f64) -> Result<NodeValueTable> {
    f.check_alphabet(m.n_actions(), m.n_observations())?;
    f.validate()?;
    let ns = m.n_states();
    let (v, residuals) = iterate_chain(&fsc_chain(m, f), m.discount, eps)?;
    Ok(NodeValueTable {
        alpha: v.chunks(ns).map(<[f64]>::to_vec).collect(),
        residual: *residuals.last().expect("at least one sweep"),
        iterations: residuals.len(),
        residuals,
    })
}

/// Value of the start node at the model's initial belief.
pub fn evaluate_fsc_at_start(m: &Pomdp, f: &Fsc, eps: f64) -> Result<f64> {
    Ok(evaluate_fsc(m, f, eps)?.value_at(&m.initial, 0))
}

pub(crate) fn check_joint(d: &DecPomdp, fscs: &[Fsc]) -> Result<()> {
    if fscs.len() != d.n_agents() {
        return Err(Error::AlphabetMismatch(format!(
            "{} controllers for {} agents",
            fscs.len(),
            d.n_agents()
        )));
    }
    for (i, f) in fscs.iter().enumerate() {
        let spec = &d.agents[i];
        if f.actions != spec.actions || f.observations != spec.observations {
            return Err(Error::AlphabetMismatch(format!(
                "controller {i} alphabets do not match agent `{}`",
                spec.name
            )));
        }
        f.validate()?;
    }
    Ok(())
}

/// Calls `visit` for every joint outcome of independent per-agent sparse
/// distributions, with the product probability.
pub(crate) fn for_each_product(rows: &[&SparseRow], mut visit: impl FnMut(&[usize], f64)) {
    let k = rows.len();
    let mut idx = vec![0usize; k];
    let mut choice = vec![0usize; k];
    loop {
        let mut p = 1.0;
        for j in 0..k {
            let (c, q) = rows[j][idx[j]];
            choice[j] = c;
            p *= q;
        }
        visit(&choice, p);
        let mut j = k;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < rows[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
}

/// Joint Markov chain over `(s, n_1, …, n_k)` restricted to configurations
/// reachable from the initial belief and start nodes. Entry 0.. are the
/// initial support states in belief order.
pub(crate) fn joint_chain(d: &DecPomdp, fscs: &[Fsc]) -> (Chain, Vec<(usize, f64)>) {
    let k = fscs.len();
    let sizes: Vec<u64> = fscs.iter().map(|f| f.len() as u64).collect();
    let encode = |s: usize, nodes: &[usize]| -> u64 {
        let mut key = s as u64;
        for j in 0..k {
            key = key * sizes[j] + nodes[j] as u64;
        }
        key
    };
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut configs: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut initial = Vec::new();
    let start = vec![0usize; k];
    for &(s, p) in d.initial.entries() {
        let key = encode(s, &start);
        index.insert(key, configs.len());
        initial.push((configs.len(), p));
        configs.push((s, start.clone()));
    }
    let mut reward = Vec::new();
    let mut rows = Vec::new();
    let mut cursor = 0;
    while cursor < configs.len() {
        let (s, nodes) = configs[cursor].clone();
        let psi: Vec<&SparseRow> = (0..k).map(|j| &fscs[j].nodes[nodes[j]].action).collect();
        let mut r = 0.0;
        let mut acc: Vec<(u64, f64)> = Vec::new();
        for_each_product(&psi, |acts, pa| {
            let ja = d.joint_actions.encode(acts);
            r += pa * d.reward[ja][s];
            for &(s2, t) in &d.transition[ja][s] {
                for &(jo, q) in &d.observation[ja][s2] {
                    let eta: Vec<&SparseRow> = (0..k)
                        .map(|j| {
                            let oj = d.joint_observations.component(jo, j);
                            &fscs[j].nodes[nodes[j]].transitions[oj]
                        })
                        .collect();
                    for_each_product(&eta, |next, pn| {
                        acc.push((encode(s2, next), pa * t * q * pn));
                    });
                }
            }
        });
        acc.sort_by_key(|e| e.0);
        let mut row: SparseRow = Vec::new();
        let mut last_key = None;
        for (key, p) in acc {
            if last_key == Some(key) {
                row.last_mut().unwrap().1 += p;
                continue;
            }
            last_key = Some(key);
            let id = *index.entry(key).or_insert_with(|| {
                let mut rest = key;
                let mut nodes = vec![0usize; k];
                for j in (0..k).rev() {
                    nodes[j] = (rest % sizes[j]) as usize;
                    rest /= sizes[j];
                }
                configs.push((rest as usize, nodes));
                configs.len() - 1
            });
            row.push((id, p));
        }
        reward.push(r);
        rows.push(row);
        cursor += 1;
    }
    (Chain { reward, rows }, initial)
}

/// Value of a joint controller profile at the initial belief, computed as the
/// fixed point of the cross-product chain over states and all agents' nodes.
pub fn evaluate_joint(d: &DecPomdp, fscs: &[Fsc], eps: f64) -> Result<f64> {
    check_joint(d, fscs)?;
    let (chain, initial) = joint_chain(d, fscs);
    let (v, _) = iterate_chain(&chain, d.discount, eps)?;
    Ok(initial.iter().map(|&(i, p)| p * v[i]).sum())
}

/// A deterministic controller with a uniformly drawn node count in
/// `1..=max_nodes`, uniform actions and uniform successors.
pub fn random_fsc<R: Rng + ?Sized>(
    actions: &[String],
    observations: &[String],
    max_nodes: usize,
    rng: &mut R,
) -> Fsc {
    assert!(max_nodes >= 1, "max_nodes must be at least 1");
    let n = rng.gen_range(1..=max_nodes);
    let nodes = (0..n)
        .map(|_| {
            let a = rng.gen_range(0..actions.len());
            let next = (0..observations.len()).map(|_| rng.gen_range(0..n)).collect();
            FscNode::deterministic(a, next)
        })
        .collect();
    Fsc {
        agent: 0,
        actions: actions.to_vec(),
        observations: observations.to_vec(),
        belief_states: Vec::new(),
        nodes,
    }
}

/// Mean discounted return over simulated episodes with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulationEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub episodes: usize,
}

fn sample(row: &[(usize, f64)], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(i, p) in row {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row[row.len() - 1].0
}

/// Monte-Carlo rollouts truncated at `horizon`. Episode `e` draws from its
/// own ChaCha8 stream, so results do not depend on thread scheduling.
pub fn simulate(
    d: &DecPomdp,
    fscs: &[Fsc],
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<SimulationEstimate> {
    check_joint(d, fscs)?;
    if episodes == 0 {
        return Err(Error::InvalidConfig("episodes must be positive".into()));
    }
    let k = fscs.len();
    let initial = d.initial.entries().to_vec();
    let returns: Vec<f64> = (0..episodes)
        .into_par_iter()
        .with_min_len(256)
        .map(|e| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(e as u64);
            let mut s = sample(&initial, &mut rng);
            let mut nodes = vec![0usize; k];
            let mut acts = vec![0usize; k];
            let mut total = 0.0;
            let mut disc = 1.0;
            for _ in 0..horizon {
                for j in 0..k {
                    acts[j] = sample(&fscs[j].nodes[nodes[j]].action, &mut rng);
                }
                let ja = d.joint_actions.encode(&acts);
                total += disc * d.reward[ja][s];
                disc *= d.discount;
                let s2 = sample(&d.transition[ja][s], &mut rng);
                let jo = sample(&d.observation[ja][s2], &mut rng);
                for j in 0..k {
                    let oj = d.joint_observations.component(jo, j);
                    nodes[j] = sample(&fscs[j].nodes[nodes[j]].transitions[oj], &mut rng);
                }
                s = s2;
            }
            total
        })
        .collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = if returns.len() > 1 {
        returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(SimulationEstimate {
        mean,
        std_error: (var / n).sqrt(),
        episodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Provenance;

    fn labels(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn constant_reward(r: f64) -> Pomdp {
        Pomdp {
            states: labels("s", 2),
            actions: labels("a", 2),
            observations: labels("o", 2),
            transition: vec![vec![vec![(0, 0.5), (1, 0.5)]; 2]; 2],
            observation: vec![vec![vec![(0, 0.3), (1, 0.7)]; 2]; 2],
            reward: vec![vec![r; 2]; 2],
            initial: Belief::uniform(2),
            discount: 0.9,
            provenance: Provenance::Native,
        }
    }

    #[test]
    fn constant_reward_is_geometric_series() {
        let m = constant_reward(1.0);
        let f = Fsc::from_tables(&m.actions, &m.observations, &[0, 1], &[vec![1, 0], vec![1, 1]])
            .unwrap();
        let eps = 1e-3;
        let t = evaluate_fsc(&m, &f, eps).unwrap();
        for row in &t.alpha {
            for &v in row {
                assert!((v - 10.0).abs() <= eps / (1.0 - 0.9));
            }
        }
        assert!(t.residual < eps);
    }

    #[test]
    fn single_node_random_fsc_self_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_fsc(&labels("a", 3), &labels("o", 4), 1, &mut rng);
        assert_eq!(f.len(), 1);
        assert!(f.nodes[0].transitions.iter().all(|t| t == &vec![(0, 1.0)]));
        assert!(f.is_deterministic());
    }

    #[test]
    fn random_fsc_is_reproducible() {
        let a = random_fsc(&labels("a", 3), &labels("o", 2), 5, &mut ChaCha8Rng::seed_from_u64(9));
        let b = random_fsc(&labels("a", 3), &labels("o", 2), 5, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn json_round_trip_stochastic_with_metadata() {
        let mut f = Fsc::from_tables(&labels("a", 2), &labels("o", 2), &[0, 1], &[vec![1, 0], vec![0, 1]])
            .unwrap();
        f.agent = 1;
        f.belief_states = labels("s", 3);
        f.nodes[0].action = vec![(0, 0.25), (1, 0.75)];
        f.nodes[1].transitions[0] = vec![(0, 0.1), (1, 0.9)];
        f.nodes[0].belief = Some(Belief::from_dense(&[0.2, 0.0, 0.8]).unwrap());
        f.nodes[0].weight = 1.0 / 3.0;
        f.nodes[1].alpha_index = Some(7);
        let back = Fsc::from_json(&f.to_json()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn json_rejects_unknown_observation() {
        let f = Fsc::constant(&labels("a", 1), &labels("o", 1), 0);
        let text = f.to_json();
        let err = Fsc::from_json_with(&text, &labels("a", 1), &labels("x", 1), &[]).unwrap_err();
        assert!(matches!(err, Error::AlphabetMismatch(_)));
    }

    #[test]
    fn dot_mentions_every_node() {
        let f = Fsc::from_tables(&labels("a", 2), &labels("o", 2), &[0, 1], &[vec![1, 0], vec![0, 1]])
            .unwrap();
        let dot = f.to_dot();
        assert!(dot.contains("n0 ->") && dot.contains("n1 ->"));
    }
}

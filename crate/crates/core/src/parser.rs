//! Reader for the `.dpomdp` text format and its single-agent `.pomdp`
//! sibling, plus a `.pomdp` writer.
//!
//! Both dialects are handled by one grammar. Statements start with a
//! keyword followed by `:`; matrix statements (`T`, `O`, `R`) are split on
//! `:` into specifier segments followed by values. The `.dpomdp` dialect puts
//! a colon before the values (`O: a1 a2 : s : o1 o2 : 0.5`), the `.pomdp`
//! dialect does not (`O: a : s : o 0.5`); both are accepted. Later entries
//! overwrite earlier ones.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{
    AgentSpec, Belief, DecPomdp, JointSpace, Pomdp, Provenance, SparseRow, NORMALIZATION_TOLERANCE,
    RENORMALIZATION_LIMIT,
};

/// Dense tables larger than this are refused.
const DENSE_TABLE_CAP: usize = 200_000_000;

const KEYWORDS: &[&str] = &[
    "agents",
    "discount",
    "values",
    "states",
    "start",
    "actions",
    "observations",
    "T",
    "O",
    "R",
];

/// Non-fatal findings while loading a model file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParseDiagnostics {
    pub warnings: Vec<(usize, String)>,
    pub renormalized_rows: usize,
}

impl ParseDiagnostics {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty() && self.renormalized_rows == 0
    }
}

#[derive(Clone, Debug)]
struct Tok {
    text: String,
    line: usize,
}

#[derive(Debug)]
struct Statement {
    keyword: String,
    line: usize,
    tokens: Vec<Tok>,
}

fn tokenize(text: &str) -> Vec<Tok> {
    let mut toks = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        for word in line.split_whitespace() {
            let mut rest = word;
            while let Some(pos) = rest.find(':') {
                if pos > 0 {
                    toks.push(Tok {
                        text: rest[..pos].to_string(),
                        line: i + 1,
                    });
                }
                toks.push(Tok {
                    text: ":".into(),
                    line: i + 1,
                });
                rest = &rest[pos + 1..];
            }
            if !rest.is_empty() {
                toks.push(Tok {
                    text: rest.to_string(),
                    line: i + 1,
                });
            }
        }
    }
    toks
}

fn split_statements(toks: Vec<Tok>) -> Result<Vec<Statement>> {
    let is_kw = |i: usize| -> Option<usize> {
        let t = &toks[i];
        if !KEYWORDS.contains(&t.text.as_str()) {
            return None;
        }
        if toks.get(i + 1).is_some_and(|n| n.text == ":") {
            return Some(2);
        }
        if t.text == "start"
            && toks
                .get(i + 1)
                .is_some_and(|n| n.text == "include" || n.text == "exclude")
            && toks.get(i + 2).is_some_and(|n| n.text == ":")
        {
            return Some(3);
        }
        None
    };
    let mut out: Vec<Statement> = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if let Some(width) = is_kw(i) {
            let keyword = if width == 3 {
                format!("start {}", toks[i + 1].text)
            } else {
                toks[i].text.clone()
            };
            out.push(Statement {
                keyword,
                line: toks[i].line,
                tokens: Vec::new(),
            });
            i += width;
        } else {
            match out.last_mut() {
                Some(st) => st.tokens.push(toks[i].clone()),
                None => {
                    return Err(Error::Syntax {
                        line: toks[i].line,
                        expected: "a keyword such as `states:`".into(),
                    })
                }
            }
            i += 1;
        }
    }
    Ok(out)
}

fn parse_f64(t: &Tok) -> Result<f64> {
    t.text.parse::<f64>().map_err(|_| Error::Syntax {
        line: t.line,
        expected: format!("a number, found `{}`", t.text),
    })
}

/// Labels from either a count (`3`) or a list of names.
fn labels_from(tokens: &[Tok], line: usize, what: &str) -> Result<Vec<String>> {
    match tokens {
        [] => Err(Error::Syntax {
            line,
            expected: format!("{what} count or names"),
        }),
        [single] => match single.text.parse::<usize>() {
            Ok(0) => Err(Error::DimensionMismatch {
                line,
                message: format!("{what} count must be positive"),
            }),
            Ok(n) => Ok((0..n).map(|i| i.to_string()).collect()),
            Err(_) => Ok(vec![single.text.clone()]),
        },
        many => Ok(many.iter().map(|t| t.text.clone()).collect()),
    }
}

fn resolve(labels: &[String], t: &Tok) -> Result<usize> {
    if let Some(i) = labels.iter().position(|l| *l == t.text) {
        return Ok(i);
    }
    match t.text.parse::<usize>() {
        Ok(i) if i < labels.len() => Ok(i),
        _ => Err(Error::UnknownIdentifier {
            line: t.line,
            name: t.text.clone(),
        }),
    }
}

/// A single state slot: one identifier or `*`.
fn state_set(labels: &[String], t: &Tok) -> Result<Vec<usize>> {
    if t.text == "*" {
        Ok((0..labels.len()).collect())
    } else {
        Ok(vec![resolve(labels, t)?])
    }
}

/// A joint slot: either one token per agent, or a single joint index / `*`.
fn joint_set(alphabets: &[Vec<String>], space: &JointSpace, toks: &[Tok]) -> Result<Vec<usize>> {
    let n = alphabets.len();
    if toks.len() == n {
        let mut per_agent: Vec<Vec<usize>> = Vec::with_capacity(n);
        for (i, t) in toks.iter().enumerate() {
            per_agent.push(if t.text == "*" {
                (0..alphabets[i].len()).collect()
            } else {
                vec![resolve(&alphabets[i], t)?]
            });
        }
        let mut out = Vec::new();
        let mut idx = vec![0usize; n];
        loop {
            let parts: Vec<usize> = (0..n).map(|i| per_agent[i][idx[i]]).collect();
            out.push(space.encode(&parts));
            let mut k = n;
            loop {
                if k == 0 {
                    out.sort_unstable();
                    return Ok(out);
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < per_agent[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    } else if toks.len() == 1 {
        let t = &toks[0];
        if t.text == "*" {
            return Ok((0..space.len()).collect());
        }
        match t.text.parse::<usize>() {
            Ok(j) if j < space.len() => Ok(vec![j]),
            _ => Err(Error::UnknownIdentifier {
                line: t.line,
                name: t.text.clone(),
            }),
        }
    } else {
        Err(Error::Syntax {
            line: toks.first().map(|t| t.line).unwrap_or(0),
            expected: format!("{n} per-agent identifiers or one joint index"),
        })
    }
}

#[derive(Clone, Debug)]
enum Values {
    Uniform,
    Identity,
    Numbers(Vec<f64>),
}

fn parse_values(toks: &[Tok], line: usize) -> Result<Values> {
    match toks {
        [] => Err(Error::Syntax {
            line,
            expected: "values".into(),
        }),
        [t] if t.text == "uniform" => Ok(Values::Uniform),
        [t] if t.text == "identity" => Ok(Values::Identity),
        _ => Ok(Values::Numbers(
            toks.iter().map(parse_f64).collect::<Result<_>>()?,
        )),
    }
}

#[derive(Clone, Debug)]
struct RewardEntry {
    actions: Vec<bool>,
    states: Vec<usize>,
    next: Option<usize>,
    obs: Option<usize>,
    values: RewardValues,
}

#[derive(Clone, Debug)]
enum RewardValues {
    Scalar(f64),
    /// Over joint observations.
    Row(Vec<f64>),
    /// `[s' * |Ω| + o]`.
    Matrix(Vec<f64>),
}

impl RewardEntry {
    fn lookup(&self, s2: usize, o: usize, n_obs: usize) -> Option<f64> {
        if self.next.is_some_and(|x| x != s2) || self.obs.is_some_and(|x| x != o) {
            return None;
        }
        Some(match &self.values {
            RewardValues::Scalar(v) => *v,
            RewardValues::Row(r) => r[o],
            RewardValues::Matrix(m) => m[s2 * n_obs + o],
        })
    }

    fn is_flat(&self) -> bool {
        self.next.is_none() && self.obs.is_none() && matches!(self.values, RewardValues::Scalar(_))
    }
}

/// Which segment layout a matrix statement uses.
#[derive(Clone, Copy, PartialEq)]
enum Dialect {
    /// Colon before the values.
    Colon,
    /// Last specifier shares its segment with the values.
    Inline,
}

struct Builder {
    cassandra: bool,
    agents: Vec<AgentSpec>,
    states: Vec<String>,
    joint_actions: JointSpace,
    joint_obs: JointSpace,
    transition: Vec<f64>,
    observation: Vec<f64>,
    rewards: Vec<RewardEntry>,
}

/// Slot kinds for matrix statements.
#[derive(Clone, Copy)]
enum Slot {
    Action,
    State,
    Obs,
}

impl Builder {
    fn ns(&self) -> usize {
        self.states.len()
    }
    fn na(&self) -> usize {
        self.joint_actions.len()
    }
    fn no(&self) -> usize {
        self.joint_obs.len()
    }

    fn action_alphabets(&self) -> Vec<Vec<String>> {
        self.agents.iter().map(|a| a.actions.clone()).collect()
    }
    fn obs_alphabets(&self) -> Vec<Vec<String>> {
        self.agents.iter().map(|a| a.observations.clone()).collect()
    }

    fn slot_set(&self, slot: Slot, toks: &[Tok]) -> Result<Vec<usize>> {
        match slot {
            Slot::Action => joint_set(&self.action_alphabets(), &self.joint_actions, toks),
            Slot::Obs => joint_set(&self.obs_alphabets(), &self.joint_obs, toks),
            Slot::State => {
                if toks.len() != 1 {
                    return Err(Error::Syntax {
                        line: toks.first().map(|t| t.line).unwrap_or(0),
                        expected: "a single state identifier".into(),
                    });
                }
                state_set(&self.states, &toks[0])
            }
        }
    }

    /// Splits a matrix statement into resolved specifier sets and values.
    /// `slots` lists the full specifier sequence; the statement may fill a
    /// prefix of it.
    fn layout(
        &self,
        st: &Statement,
        slots: &[Slot],
        dialect: Dialect,
    ) -> Result<(Vec<Vec<usize>>, Values)> {
        let mut groups: Vec<Vec<Tok>> = vec![Vec::new()];
        for t in &st.tokens {
            if t.text == ":" {
                groups.push(Vec::new());
            } else {
                groups.last_mut().unwrap().push(t.clone());
            }
        }
        let syntax = |expected: &str| Error::Syntax {
            line: st.line,
            expected: expected.to_string(),
        };
        match dialect {
            Dialect::Colon => {
                let values = groups.pop().unwrap();
                if groups.is_empty() || groups.len() > slots.len() {
                    return Err(syntax("specifier segments"));
                }
                let sets = groups
                    .iter()
                    .zip(slots)
                    .map(|(g, &slot)| self.slot_set(slot, g))
                    .collect::<Result<Vec<_>>>()?;
                Ok((sets, parse_values(&values, st.line)?))
            }
            Dialect::Inline => {
                let mut last = groups.pop().unwrap();
                if groups.len() >= slots.len() {
                    return Err(syntax("specifier segments"));
                }
                let mut sets = groups
                    .iter()
                    .zip(slots)
                    .map(|(g, &slot)| self.slot_set(slot, g))
                    .collect::<Result<Vec<_>>>()?;
                let slot = slots[groups.len()];
                let width = match slot {
                    Slot::State => 1,
                    Slot::Action | Slot::Obs => {
                        let n = self.agents.len();
                        let alph = match slot {
                            Slot::Action => self.action_alphabets(),
                            _ => self.obs_alphabets(),
                        };
                        let space = match slot {
                            Slot::Action => &self.joint_actions,
                            _ => &self.joint_obs,
                        };
                        if n > 1 && last.len() > n && joint_set(&alph, space, &last[..n]).is_ok() {
                            n
                        } else {
                            1
                        }
                    }
                };
                if last.len() <= width {
                    return Err(syntax("values after the last specifier"));
                }
                let rest = last.split_off(width);
                sets.push(self.slot_set(slot, &last)?);
                Ok((sets, parse_values(&rest, st.line)?))
            }
        }
    }

    fn layout_any(&self, st: &Statement, slots: &[Slot], expect: impl Fn(usize, &Values) -> bool) -> Result<(Vec<Vec<usize>>, Values)> {
        let order = if self.cassandra {
            [Dialect::Inline, Dialect::Colon]
        } else {
            [Dialect::Colon, Dialect::Inline]
        };
        let mut first_err = None;
        for d in order {
            match self.layout(st, slots, d) {
                Ok((sets, v)) if expect(sets.len(), &v) => return Ok((sets, v)),
                Ok((sets, v)) => {
                    first_err.get_or_insert(Error::DimensionMismatch {
                        line: st.line,
                        message: format!(
                            "{} specifiers with {} values",
                            sets.len(),
                            match &v {
                                Values::Numbers(n) => n.len().to_string(),
                                _ => "keyword".into(),
                            }
                        ),
                    });
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        Err(first_err.unwrap())
    }

    fn apply_transition(&mut self, st: &Statement) -> Result<()> {
        let ns = self.ns();
        let (sets, values) = self.layout_any(
            st,
            &[Slot::Action, Slot::State, Slot::State],
            |k, v| match (k, v) {
                (1, Values::Uniform | Values::Identity) => true,
                (1, Values::Numbers(n)) => n.len() == ns * ns,
                (2, Values::Uniform) => true,
                (2, Values::Numbers(n)) => n.len() == ns,
                (3, Values::Numbers(n)) => n.len() == 1,
                _ => false,
            },
        )?;
        for &a in &sets[0] {
            let base = a * ns * ns;
            match sets.len() {
                1 => {
                    for s in 0..ns {
                        for s2 in 0..ns {
                            self.transition[base + s * ns + s2] = match &values {
                                Values::Uniform => 1.0 / ns as f64,
                                Values::Identity => (s == s2) as u8 as f64,
                                Values::Numbers(n) => n[s * ns + s2],
                            };
                        }
                    }
                }
                2 => {
                    for &s in &sets[1] {
                        for s2 in 0..ns {
                            self.transition[base + s * ns + s2] = match &values {
                                Values::Numbers(n) => n[s2],
                                _ => 1.0 / ns as f64,
                            };
                        }
                    }
                }
                _ => {
                    let Values::Numbers(n) = &values else { unreachable!() };
                    for &s in &sets[1] {
                        for &s2 in &sets[2] {
                            self.transition[base + s * ns + s2] = n[0];
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn apply_observation(&mut self, st: &Statement) -> Result<()> {
        let (ns, no) = (self.ns(), self.no());
        let (sets, values) = self.layout_any(
            st,
            &[Slot::Action, Slot::State, Slot::Obs],
            |k, v| match (k, v) {
                (1, Values::Uniform) => true,
                (1, Values::Identity) => ns == no,
                (1, Values::Numbers(n)) => n.len() == ns * no,
                (2, Values::Uniform) => true,
                (2, Values::Numbers(n)) => n.len() == no,
                (3, Values::Numbers(n)) => n.len() == 1,
                _ => false,
            },
        )?;
        for &a in &sets[0] {
            let base = a * ns * no;
            match sets.len() {
                1 => {
                    for s2 in 0..ns {
                        for o in 0..no {
                            self.observation[base + s2 * no + o] = match &values {
                                Values::Uniform => 1.0 / no as f64,
                                Values::Identity => (s2 == o) as u8 as f64,
                                Values::Numbers(n) => n[s2 * no + o],
                            };
                        }
                    }
                }
                2 => {
                    for &s2 in &sets[1] {
                        for o in 0..no {
                            self.observation[base + s2 * no + o] = match &values {
                                Values::Numbers(n) => n[o],
                                _ => 1.0 / no as f64,
                            };
                        }
                    }
                }
                _ => {
                    let Values::Numbers(n) = &values else { unreachable!() };
                    for &s2 in &sets[1] {
                        for &o in &sets[2] {
                            self.observation[base + s2 * no + o] = n[0];
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn apply_reward(&mut self, st: &Statement) -> Result<()> {
        let (ns, no) = (self.ns(), self.no());
        let (sets, values) = self.layout_any(
            st,
            &[Slot::Action, Slot::State, Slot::State, Slot::Obs],
            |k, v| match (k, v) {
                (2, Values::Numbers(n)) => n.len() == ns * no,
                (3, Values::Numbers(n)) => n.len() == no,
                (4, Values::Numbers(n)) => n.len() == 1,
                _ => false,
            },
        )?;
        let Values::Numbers(n) = values else { unreachable!() };
        let mut actions = vec![false; self.na()];
        for &a in &sets[0] {
            actions[a] = true;
        }
        let single = |set: &Vec<usize>, len: usize| -> Vec<Option<usize>> {
            if set.len() == len && len > 1 {
                vec![None]
            } else {
                set.iter().map(|&x| Some(x)).collect()
            }
        };
        let (vals, nexts, obss) = match sets.len() {
            2 => (RewardValues::Matrix(n), vec![None], vec![None]),
            3 => (RewardValues::Row(n), single(&sets[2], ns), vec![None]),
            _ => (
                RewardValues::Scalar(n[0]),
                single(&sets[2], ns),
                single(&sets[3], no),
            ),
        };
        for next in &nexts {
            for obs in &obss {
                self.rewards.push(RewardEntry {
                    actions: actions.clone(),
                    states: sets[1].clone(),
                    next: *next,
                    obs: *obs,
                    values: vals.clone(),
                });
            }
        }
        Ok(())
    }

    /// Checks row sums, repairing tiny deviations.
    fn sparse_rows(
        table: &[f64],
        n_a: usize,
        n_rows: usize,
        width: usize,
        name: &str,
        diag: &mut ParseDiagnostics,
    ) -> Result<Vec<Vec<SparseRow>>> {
        let mut out = Vec::with_capacity(n_a);
        for a in 0..n_a {
            let mut rows = Vec::with_capacity(n_rows);
            for r in 0..n_rows {
                let dense = &table[(a * n_rows + r) * width..(a * n_rows + r + 1) * width];
                if let Some(bad) = dense.iter().find(|p| !(0.0..=1.0).contains(*p) || p.is_nan()) {
                    return Err(Error::InvalidModel(format!(
                        "{name}(a={a}, {r}, ·) has probability {bad}"
                    )));
                }
                let sum: f64 = dense.iter().sum();
                let dev = (sum - 1.0).abs();
                let scale = if dev <= NORMALIZATION_TOLERANCE {
                    1.0
                } else if dev <= RENORMALIZATION_LIMIT && sum > 0.0 {
                    diag.renormalized_rows += 1;
                    diag.warnings.push((
                        0,
                        format!("{name}(a={a}, {r}, ·) sums to {sum}; renormalized"),
                    ));
                    1.0 / sum
                } else {
                    return Err(Error::Normalization {
                        what: format!("{name}(a={a}, {r}, ·)"),
                        sum,
                    });
                };
                rows.push(
                    dense
                        .iter()
                        .enumerate()
                        .filter(|(_, &p)| p > 0.0)
                        .map(|(i, &p)| (i, if scale == 1.0 { p } else { p * scale }))
                        .collect(),
                );
            }
            out.push(rows);
        }
        Ok(out)
    }

    /// Expected immediate reward `R(s,a)` from possibly higher-arity entries.
    fn reduce_rewards(
        &self,
        transition: &[Vec<SparseRow>],
        observation: &[Vec<SparseRow>],
    ) -> Vec<Vec<f64>> {
        let (ns, na, no) = (self.ns(), self.na(), self.no());
        let mut out = vec![vec![0.0; ns]; na];
        let mut by_state: Vec<Vec<usize>> = vec![Vec::new(); ns];
        for (k, e) in self.rewards.iter().enumerate() {
            for &s in &e.states {
                by_state[s].push(k);
            }
        }
        for a in 0..na {
            for s in 0..ns {
                let matching: Vec<&RewardEntry> = by_state[s]
                    .iter()
                    .map(|&k| &self.rewards[k])
                    .filter(|e| e.actions[a])
                    .collect();
                let start = matching.iter().rposition(|e| e.is_flat());
                let base = start.map(|k| match matching[k].values {
                    RewardValues::Scalar(v) => v,
                    _ => unreachable!(),
                });
                let tail = &matching[start.map(|k| k + 1).unwrap_or(0)..];
                out[a][s] = if tail.is_empty() {
                    base.unwrap_or(0.0)
                } else {
                    let mut total = 0.0;
                    for &(s2, t) in &transition[a][s] {
                        for &(o, q) in &observation[a][s2] {
                            let v = tail
                                .iter()
                                .rev()
                                .find_map(|e| e.lookup(s2, o, no))
                                .or(base)
                                .unwrap_or(0.0);
                            total += t * q * v;
                        }
                    }
                    total
                };
            }
        }
        out
    }
}

fn line_groups(tokens: &[Tok], keyword_line: usize) -> Vec<Vec<Tok>> {
    let mut groups: Vec<Vec<Tok>> = Vec::new();
    let mut current_line = keyword_line;
    for t in tokens {
        if groups.is_empty() || t.line != current_line {
            groups.push(Vec::new());
            current_line = t.line;
        }
        groups.last_mut().unwrap().push(t.clone());
    }
    groups
}

/// Parses `.dpomdp` (or `.pomdp`) text into a Dec-POMDP. Files without an
/// `agents:` directive describe a single agent.
pub fn parse_dpomdp(text: &str) -> Result<(DecPomdp, ParseDiagnostics)> {
    let statements = split_statements(tokenize(text))?;
    let mut diag = ParseDiagnostics::default();

    let last = |kw: &str| statements.iter().rev().find(|s| s.keyword == kw);
    let require = |kw: &str| {
        last(kw).ok_or(Error::Syntax {
            line: 1,
            expected: format!("`{kw}:` directive"),
        })
    };

    let (agent_names, cassandra) = match last("agents") {
        Some(st) => (labels_from(&st.tokens, st.line, "agents")?, false),
        None => (vec!["0".to_string()], true),
    };
    let n_agents = agent_names.len();

    let discount = {
        let st = require("discount")?;
        match st.tokens.as_slice() {
            [t] => parse_f64(t)?,
            _ => {
                return Err(Error::Syntax {
                    line: st.line,
                    expected: "one discount value".into(),
                })
            }
        }
    };
    let cost = match last("values") {
        None => false,
        Some(st) => match st.tokens.first().map(|t| t.text.as_str()) {
            Some("reward") => false,
            Some("cost") => true,
            _ => {
                return Err(Error::Syntax {
                    line: st.line,
                    expected: "`reward` or `cost`".into(),
                })
            }
        },
    };
    let states = {
        let st = require("states")?;
        labels_from(&st.tokens, st.line, "states")?
    };

    let per_agent = |kw: &str| -> Result<Vec<Vec<String>>> {
        let st = require(kw)?;
        let groups = if n_agents == 1 {
            vec![st.tokens.clone()]
        } else {
            line_groups(&st.tokens, st.line)
        };
        if groups.len() != n_agents {
            return Err(Error::DimensionMismatch {
                line: st.line,
                message: format!("{kw}: {} lines for {n_agents} agents", groups.len()),
            });
        }
        groups
            .iter()
            .map(|g| labels_from(g, st.line, kw))
            .collect()
    };
    let actions = per_agent("actions")?;
    let observations = per_agent("observations")?;
    let agents: Vec<AgentSpec> = agent_names
        .into_iter()
        .zip(actions)
        .zip(observations)
        .map(|((name, actions), observations)| AgentSpec {
            name,
            actions,
            observations,
        })
        .collect();

    let ns = states.len();
    let initial = {
        let start = statements.iter().rev().find(|s| s.keyword.starts_with("start"));
        match start {
            None => Belief::uniform(ns),
            Some(st) if st.keyword == "start include" || st.keyword == "start exclude" => {
                let mut mask = vec![st.keyword == "start exclude"; ns];
                for t in &st.tokens {
                    let i = resolve(&states, t)?;
                    mask[i] = st.keyword == "start include";
                }
                let chosen: Vec<usize> = (0..ns).filter(|&i| mask[i]).collect();
                if chosen.is_empty() {
                    return Err(Error::InvalidModel("empty start set".into()));
                }
                let p = 1.0 / chosen.len() as f64;
                Belief::from_entries(chosen.into_iter().map(|s| (s, p)).collect())?
            }
            Some(st) => match st.tokens.as_slice() {
                [t] if t.text == "uniform" => Belief::uniform(ns),
                toks if toks.len() == ns && toks.iter().all(|t| t.text.parse::<f64>().is_ok()) => {
                    let probs: Vec<f64> = toks.iter().map(parse_f64).collect::<Result<_>>()?;
                    let sum: f64 = probs.iter().sum();
                    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                        if (sum - 1.0).abs() <= RENORMALIZATION_LIMIT {
                            diag.renormalized_rows += 1;
                            diag.warnings
                                .push((st.line, format!("start sums to {sum}; renormalized")));
                            Belief::normalized(probs.iter().copied().enumerate().collect())
                                .expect("positive mass")
                        } else {
                            return Err(Error::Normalization {
                                what: "start".into(),
                                sum,
                            });
                        }
                    } else {
                        Belief::from_dense(&probs)?
                    }
                }
                [t] => Belief::point(resolve(&states, t)?),
                _ => {
                    return Err(Error::DimensionMismatch {
                        line: st.line,
                        message: format!("start: expected {ns} probabilities"),
                    })
                }
            },
        }
    };

    let joint_actions = JointSpace::new(agents.iter().map(|a| a.actions.len()).collect());
    let joint_obs = JointSpace::new(agents.iter().map(|a| a.observations.len()).collect());
    let (na, no) = (joint_actions.len(), joint_obs.len());
    if na.saturating_mul(ns).saturating_mul(ns.max(no)) > DENSE_TABLE_CAP {
        return Err(Error::Overflow {
            entries: na as u128 * ns as u128 * ns.max(no) as u128,
            cap: DENSE_TABLE_CAP as u128,
        });
    }

    let mut b = Builder {
        cassandra,
        agents,
        states,
        joint_actions,
        joint_obs,
        transition: vec![0.0; na * ns * ns],
        observation: vec![0.0; na * ns * no],
        rewards: Vec::new(),
    };
    for st in &statements {
        match st.keyword.as_str() {
            "T" => b.apply_transition(st)?,
            "O" => b.apply_observation(st)?,
            "R" => b.apply_reward(st)?,
            _ => {}
        }
    }

    let transition = Builder::sparse_rows(&b.transition, na, ns, ns, "T", &mut diag)?;
    let observation = Builder::sparse_rows(&b.observation, na, ns, no, "O", &mut diag)?;
    let mut reward = b.reduce_rewards(&transition, &observation);
    if cost {
        for r in reward.iter_mut().flatten() {
            *r = -*r;
        }
    }
    let model = DecPomdp {
        agents: b.agents,
        states: b.states,
        joint_actions: b.joint_actions,
        joint_observations: b.joint_obs,
        transition,
        observation,
        reward,
        initial,
        discount,
    };
    model.validate()?;
    Ok((model, diag))
}

/// Parses single-agent text (either dialect) into a flat POMDP.
pub fn parse_pomdp(text: &str) -> Result<(Pomdp, ParseDiagnostics)> {
    let (d, diag) = parse_dpomdp(text)?;
    if d.n_agents() != 1 {
        return Err(Error::InvalidModel(format!(
            "expected a single-agent model, found {} agents",
            d.n_agents()
        )));
    }
    let agent = d.agents.into_iter().next().unwrap();
    Ok((
        Pomdp {
            states: d.states,
            actions: agent.actions,
            observations: agent.observations,
            transition: d.transition,
            observation: d.observation,
            reward: d.reward,
            initial: d.initial,
            discount: d.discount,
            provenance: Provenance::Native,
        },
        diag,
    ))
}

fn label_list(labels: &[String]) -> String {
    let counted = labels.iter().enumerate().all(|(i, l)| *l == i.to_string());
    if counted {
        labels.len().to_string()
    } else {
        labels.join(" ")
    }
}

/// Writes a POMDP in `.pomdp` syntax. Probabilities and rewards use the
/// shortest decimal form that parses back to the same `f64`.
pub fn emit_pomdp(m: &Pomdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "discount: {}", m.discount);
    let _ = writeln!(out, "values: reward");
    let _ = writeln!(out, "states: {}", label_list(&m.states));
    let _ = writeln!(out, "actions: {}", label_list(&m.actions));
    let _ = writeln!(out, "observations: {}", label_list(&m.observations));
    let start: Vec<String> = m
        .initial
        .to_dense(m.n_states())
        .iter()
        .map(|p| p.to_string())
        .collect();
    let _ = writeln!(out, "start: {}", start.join(" "));
    out.push('\n');
    for (a, rows) in m.transition.iter().enumerate() {
        for (s, row) in rows.iter().enumerate() {
            for &(s2, p) in row {
                let _ = writeln!(out, "T: {} : {} : {} {}", a, s, s2, p);
            }
        }
    }
    out.push('\n');
    for (a, rows) in m.observation.iter().enumerate() {
        for (s2, row) in rows.iter().enumerate() {
            for &(o, p) in row {
                let _ = writeln!(out, "O: {} : {} : {} {}", a, s2, o, p);
            }
        }
    }
    out.push('\n');
    for (a, rs) in m.reward.iter().enumerate() {
        for (s, &r) in rs.iter().enumerate() {
            if r != 0.0 {
                let _ = writeln!(out, "R: {} : {} : * : * {}", a, s, r);
            }
        }
    }
    out
}

//! Benchmark problem generators.
//!
//! Each generator returns `.dpomdp` text. The files under `problems/` are
//! produced by the `gen-problems` binary and checked against these
//! functions by the crate's tests.

use std::fmt::Write;

/// Joint action / observation / state indices are mixed-radix with agent 0
/// most significant, matching the parser's enumeration order.
fn decode(mut k: usize, sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for (slot, &n) in out.iter_mut().zip(sizes).rev() {
        *slot = k % n;
        k /= n;
    }
    out
}

fn encode(parts: &[usize], sizes: &[usize]) -> usize {
    parts.iter().zip(sizes).fold(0, |acc, (&p, &n)| acc * n + p)
}

/// A sparse model description rendered by [`Model::render`].
struct Model<'a> {
    comment: &'a str,
    states: Vec<String>,
    actions: Vec<Vec<String>>,
    observations: Vec<Vec<String>>,
    start: Vec<f64>,
    /// `transition(joint action parts, s)` as `(s', p)` pairs.
    transition: &'a dyn Fn(&[usize], usize) -> Vec<(usize, f64)>,
    /// `observation(joint action parts, s')` as `(per-agent obs, p)` pairs.
    observation: &'a dyn Fn(&[usize], usize) -> Vec<(Vec<usize>, f64)>,
    reward: &'a dyn Fn(&[usize], usize) -> f64,
}

impl Model<'_> {
    fn render(&self) -> String {
        let mut out = String::new();
        for line in self.comment.lines() {
            writeln!(out, "# {line}").unwrap();
        }
        let n_agents = self.actions.len();
        writeln!(out, "\nagents: {n_agents}\ndiscount: 0.9\nvalues: reward").unwrap();
        writeln!(out, "states: {}", self.states.join(" ")).unwrap();
        let start: Vec<String> = self.start.iter().map(|p| format!("{p}")).collect();
        writeln!(out, "start:\n{}", start.join(" ")).unwrap();
        writeln!(out, "actions:").unwrap();
        for a in &self.actions {
            writeln!(out, "{}", a.join(" ")).unwrap();
        }
        writeln!(out, "observations:").unwrap();
        for o in &self.observations {
            writeln!(out, "{}", o.join(" ")).unwrap();
        }
        let sizes: Vec<usize> = self.actions.iter().map(Vec::len).collect();
        let n_joint: usize = sizes.iter().product();
        let label = |parts: &[usize], names: &[Vec<String>]| -> String {
            parts.iter().zip(names).map(|(&k, n)| n[k].as_str()).collect::<Vec<_>>().join(" ")
        };
        out.push('\n');
        for ja in 0..n_joint {
            let parts = decode(ja, &sizes);
            let al = label(&parts, &self.actions);
            for s in 0..self.states.len() {
                for (s2, p) in (self.transition)(&parts, s) {
                    writeln!(out, "T: {al} : {} : {} : {}", self.states[s], self.states[s2], num(p)).unwrap();
                }
            }
        }
        out.push('\n');
        for ja in 0..n_joint {
            let parts = decode(ja, &sizes);
            let al = label(&parts, &self.actions);
            for s2 in 0..self.states.len() {
                for (o, p) in (self.observation)(&parts, s2) {
                    let ol = label(&o, &self.observations);
                    writeln!(out, "O: {al} : {} : {ol} : {}", self.states[s2], num(p)).unwrap();
                }
            }
        }
        out.push('\n');
        writeln!(out, "R: {} : * : * : * : 0", vec!["*"; n_agents].join(" ")).unwrap();
        for ja in 0..n_joint {
            let parts = decode(ja, &sizes);
            let al = label(&parts, &self.actions);
            for s in 0..self.states.len() {
                let r = (self.reward)(&parts, s);
                if r != 0.0 {
                    writeln!(out, "R: {al} : {} : * : * : {}", self.states[s], num(r)).unwrap();
                }
            }
        }
        out
    }
}

/// Probabilities are products of short decimals; rounding hides the binary
/// representation noise without moving any row sum off 1 by more than 1e-12.
fn num(p: f64) -> f64 {
    (p * 1e12).round() / 1e12
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|x| x.to_string()).collect()
}

/// Merges duplicate `(key, p)` pairs and drops zeros, keeping first-seen order.
fn merge<K: PartialEq>(pairs: Vec<(K, f64)>) -> Vec<(K, f64)> {
    let mut out: Vec<(K, f64)> = Vec::new();
    for (k, p) in pairs {
        match out.iter_mut().find(|x| x.0 == k) {
            Some(x) => x.1 += p,
            None => out.push((k, p)),
        }
    }
    out.retain(|x| x.1 > 0.0);
    out
}

/// Product of independent per-agent distributions, indexed mixed-radix.
fn product(dists: &[Vec<(usize, f64)>], sizes: &[usize]) -> Vec<(usize, f64)> {
    let mut acc: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
    for d in dists {
        acc = acc
            .into_iter()
            .flat_map(|(parts, p)| {
                d.iter().map(move |&(x, q)| {
                    let mut v = parts.clone();
                    v.push(x);
                    (v, p * q)
                })
            })
            .collect();
    }
    let mut out: Vec<(usize, f64)> = acc.into_iter().map(|(v, p)| (encode(&v, sizes), p)).collect();
    out.sort_by_key(|x| x.0);
    merge(out)
}

const GRID_MOVES: [&str; 5] = ["up", "down", "left", "right", "stay"];

/// Meeting in a 3×3 grid: two robots start in uniformly random cells and
/// are rewarded while they share the top-left or bottom-right corner. The
/// chosen move happens with probability 0.85 and each other move (including
/// staying) with 0.0375; moves into walls leave the robot in place. Each
/// robot observes its own cell.
pub fn grid3x3() -> String {
    let cell = |r: usize, c: usize| r * 3 + c;
    let step = |pos: usize, mv: usize| -> usize {
        let (r, c) = (pos / 3, pos % 3);
        match mv {
            0 if r > 0 => cell(r - 1, c),
            1 if r < 2 => cell(r + 1, c),
            2 if c > 0 => cell(r, c - 1),
            3 if c < 2 => cell(r, c + 1),
            _ => pos,
        }
    };
    let local = move |pos: usize, a: usize| -> Vec<(usize, f64)> {
        let pairs = (0..5).map(|mv| (step(pos, mv), if mv == a { 0.85 } else { 0.0375 })).collect();
        merge(pairs)
    };
    let cells: Vec<String> = (0..9).map(|k| format!("r{}c{}", k / 3, k % 3)).collect();
    let states: Vec<String> = (0..81).map(|s| format!("{}_{}", cells[s / 9], cells[s % 9])).collect();
    let start = vec![1.0 / 81.0; 81];
    let transition = move |a: &[usize], s: usize| product(&[local(s / 9, a[0]), local(s % 9, a[1])], &[9, 9]);
    let observation = |_: &[usize], s2: usize| vec![(vec![s2 / 9, s2 % 9], 1.0)];
    let reward = |_: &[usize], s: usize| {
        let (p, q) = (s / 9, s % 9);
        if p == q && (p == 0 || p == 8) {
            1.0
        } else {
            0.0
        }
    };
    Model {
        comment: "Meeting in a 3x3 grid (corners variant).\nGenerated by jesp-bench; edit the generator, not this file.",
        states,
        actions: vec![names(&GRID_MOVES), names(&GRID_MOVES)],
        observations: vec![cells.clone(), cells],
        start,
        transition: &transition,
        observation: &observation,
        reward: &reward,
    }
    .render()
}

/// Parameters of the two-robot recycling model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecyclingParams {
    /// Probability that a high battery stays high while searching for the
    /// large can / a small can.
    pub stay_high_big: f64,
    pub stay_high_small: f64,
    /// Probability that a low battery survives a large / small search.
    pub stay_low_big: f64,
    pub stay_low_small: f64,
    /// Reward when both robots search for the large can.
    pub big_reward: f64,
    /// Reward per robot searching for a small can.
    pub small_reward: f64,
    /// Reward per robot whose battery runs out; it is recharged to high.
    pub depletion_penalty: f64,
}

/// Two robots collect cans. Each battery is high or low and each robot
/// observes its own. The large can pays only if both search for it;
/// searching on a low battery may deplete it, which is penalized and
/// followed by a rescue that leaves the battery high. Recharging always
/// yields a high battery.
pub fn recycling(p: RecyclingParams) -> String {
    // Per robot: 0 high, 1 low. Actions: 0 search-big, 1 search-small, 2 recharge.
    let local = move |b: usize, a: usize| -> (Vec<(usize, f64)>, f64) {
        match (b, a) {
            (_, 2) => (vec![(0, 1.0)], 0.0),
            (0, 0) => (merge(vec![(0, p.stay_high_big), (1, 1.0 - p.stay_high_big)]), 0.0),
            (0, _) => (merge(vec![(0, p.stay_high_small), (1, 1.0 - p.stay_high_small)]), p.small_reward),
            (_, 0) => (
                merge(vec![(0, 1.0 - p.stay_low_big), (1, p.stay_low_big)]),
                (1.0 - p.stay_low_big) * p.depletion_penalty,
            ),
            _ => (
                merge(vec![(0, 1.0 - p.stay_low_small), (1, p.stay_low_small)]),
                p.small_reward + (1.0 - p.stay_low_small) * p.depletion_penalty,
            ),
        }
    };
    let states = names(&["high-high", "high-low", "low-high", "low-low"]);
    let transition = move |a: &[usize], s: usize| product(&[local(s / 2, a[0]).0, local(s % 2, a[1]).0], &[2, 2]);
    let observation = |_: &[usize], s2: usize| vec![(vec![s2 / 2, s2 % 2], 1.0)];
    let reward = move |a: &[usize], s: usize| {
        let big = if a[0] == 0 && a[1] == 0 { p.big_reward } else { 0.0 };
        big + local(s / 2, a[0]).1 + local(s % 2, a[1]).1
    };
    let actions = names(&["search-big", "search-small", "recharge"]);
    let observations = names(&["high", "low"]);
    Model {
        comment: "Recycling robots.\nGenerated by jesp-bench; edit the generator, not this file.",
        states,
        actions: vec![actions.clone(), actions],
        observations: vec![observations.clone(), observations],
        start: vec![1.0, 0.0, 0.0, 0.0],
        transition: &transition,
        observation: &observation,
        reward: &reward,
    }
    .render()
}

/// Cooperative box pushing in a five-cell corridor. Each robot has a
/// column and a heading (west or east). Small boxes sit above the end
/// columns and a large box above the middle one. `push` on a small box
/// pays 10, both robots pushing the large box together pays 100, and a
/// lone push on the large box costs 5; any successful push returns both
/// robots to their start. Robots observe what lies ahead: empty, wall, the
/// other robot, a small box or the large box.
pub fn box_pushing() -> String {
    const COLS: usize = 5;
    let actions = names(&["turn", "move", "push", "stay"]);
    let observations = names(&["empty", "wall", "agent", "small-box", "large-box"]);
    let start_local = [2, 3 * 2 + 1];
    let states: Vec<String> = (0..100)
        .map(|s| {
            let l = |x: usize| format!("c{}{}", x / 2, if x % 2 == 0 { "w" } else { "e" });
            format!("{}_{}", l(s / 10), l(s % 10))
        })
        .collect();
    // Local state x = col * 2 + heading (0 west, 1 east).
    let moved = |x: usize, a: usize| -> Vec<(usize, f64)> {
        let (col, h) = (x / 2, x % 2);
        match a {
            0 => vec![(col * 2 + 1 - h, 1.0)],
            1 => {
                let target = if h == 0 { col.checked_sub(1) } else { Some(col + 1).filter(|&c| c < COLS) };
                match target {
                    Some(c) => vec![(c * 2 + h, 0.9), (x, 0.1)],
                    None => vec![(x, 1.0)],
                }
            }
            _ => vec![(x, 1.0)],
        }
    };
    let small = |x: usize| x / 2 == 0 || x / 2 == COLS - 1;
    let large = |x: usize| x / 2 == COLS / 2;
    let pushed = move |a: &[usize], s: usize| {
        let (x, y) = (s / 10, s % 10);
        let small_push = (a[0] == 2 && small(x)) || (a[1] == 2 && small(y));
        let large_push = a[0] == 2 && a[1] == 2 && large(x) && large(y);
        (small_push, large_push)
    };
    let transition = move |a: &[usize], s: usize| {
        let (sp, lp) = pushed(a, s);
        if sp || lp {
            return vec![(start_local[0] * 10 + start_local[1], 1.0)];
        }
        product(&[moved(s / 10, a[0]), moved(s % 10, a[1])], &[10, 10])
    };
    let sees = |me: usize, other: usize| -> usize {
        let (col, h) = (me / 2, me % 2);
        if small(me) {
            return 3;
        }
        if large(me) {
            return 4;
        }
        let ahead = if h == 0 { col.checked_sub(1) } else { Some(col + 1).filter(|&c| c < COLS) };
        match ahead {
            None => 1,
            Some(c) if c == other / 2 => 2,
            Some(_) => 0,
        }
    };
    let observation = move |_: &[usize], s2: usize| {
        let (x, y) = (s2 / 10, s2 % 10);
        vec![(vec![sees(x, y), sees(y, x)], 1.0)]
    };
    let reward = move |a: &[usize], s: usize| {
        let (x, y) = (s / 10, s % 10);
        let (sp, lp) = pushed(a, s);
        let mut r = -0.1;
        if lp {
            r += 100.0;
        } else {
            if sp {
                r += 10.0;
            }
            if (a[0] == 2 && large(x)) != (a[1] == 2 && large(y)) {
                r -= 5.0;
            }
        }
        r
    };
    let mut start = vec![0.0; 100];
    start[start_local[0] * 10 + start_local[1]] = 1.0;
    Model {
        comment: "Cooperative box pushing (corridor variant).\nGenerated by jesp-bench; edit the generator, not this file.",
        states,
        actions: vec![actions.clone(), actions],
        observations: vec![observations.clone(), observations],
        start,
        transition: &transition,
        observation: &observation,
        reward: &reward,
    }
    .render()
}

/// Two rovers on a 2×2 grid with one science site per cell. Sites 0 and 3
/// need both rovers drilling together (reward 6); sites 1 and 2 can be
/// sampled by one rover (reward 2). Each finished site is marked done and
/// all marks are cleared once every site is done. Redundant work costs 0.1.
/// Moves succeed with probability 0.95. A rover observes its cell and
/// whether the site there is done.
pub fn mars_rover() -> String {
    let actions = names(&["up", "down", "left", "right", "sample", "drill"]);
    let observations: Vec<String> = (0..8)
        .map(|k| format!("c{}{}", k / 2, if k % 2 == 1 { "-done" } else { "" }))
        .collect();
    // State: (p0, p1, mask) with s = (p0 * 4 + p1) * 16 + mask.
    let states: Vec<String> = (0..256)
        .map(|s| format!("c{}_c{}_m{:04b}", s / 64, (s / 16) % 4, s % 16))
        .collect();
    let step = |p: usize, a: usize| -> usize {
        let (r, c) = (p / 2, p % 2);
        match a {
            0 if r == 1 => c,
            1 if r == 0 => 2 + c,
            2 if c == 1 => r * 2,
            3 if c == 0 => r * 2 + 1,
            _ => p,
        }
    };
    let moved = move |p: usize, a: usize| -> Vec<(usize, f64)> {
        let q = step(p, a);
        if q == p {
            vec![(p, 1.0)]
        } else {
            vec![(q, 0.95), (p, 0.05)]
        }
    };
    let drill_site = |p: usize| p == 0 || p == 3;
    // Sites completed by joint action `a` in state `s`.
    let completed = move |a: &[usize], s: usize| -> u32 {
        let (p0, p1, mask) = (s / 64, (s / 16) % 4, (s % 16) as u32);
        let mut done = 0u32;
        for (p, act) in [(p0, a[0]), (p1, a[1])] {
            if act == 4 && !drill_site(p) && mask & (1 << p) == 0 {
                done |= 1 << p;
            }
        }
        if a[0] == 5 && a[1] == 5 && p0 == p1 && drill_site(p0) && mask & (1 << p0) == 0 {
            done |= 1 << p0;
        }
        done
    };
    let transition = move |a: &[usize], s: usize| {
        let (p0, p1, mask) = (s / 64, (s / 16) % 4, s % 16);
        let mut next = mask as u32 | completed(a, s);
        if next == 0b1111 {
            next = 0;
        }
        let pos = product(&[moved(p0, a[0]), moved(p1, a[1])], &[4, 4]);
        pos.into_iter().map(|(pp, q)| (pp * 16 + next as usize, q)).collect()
    };
    let observation = |_: &[usize], s2: usize| {
        let (p0, p1, mask) = (s2 / 64, (s2 / 16) % 4, s2 % 16);
        let o = |p: usize| p * 2 + ((mask >> p) & 1);
        vec![(vec![o(p0), o(p1)], 1.0)]
    };
    let reward = move |a: &[usize], s: usize| {
        let (p0, p1, mask) = (s / 64, (s / 16) % 4, s % 16);
        let done = completed(a, s);
        let mut r = 0.0;
        for p in 0..4 {
            if done & (1 << p) != 0 {
                r += if drill_site(p) { 6.0 } else { 2.0 };
            }
        }
        for (p, act) in [(p0, a[0]), (p1, a[1])] {
            if act >= 4 && done & (1 << p) == 0 && (mask >> p) & 1 == 1 {
                r -= 0.1;
            }
        }
        r
    };
    let mut start = vec![0.0; 256];
    // Rover 0 in cell 0, rover 1 in cell 3, nothing done.
    start[3 * 16] = 1.0;
    Model {
        comment: "Mars rovers on a 2x2 grid.\nGenerated by jesp-bench; edit the generator, not this file.",
        states,
        actions: vec![actions.clone(), actions],
        observations: vec![observations.clone(), observations],
        start,
        transition: &transition,
        observation: &observation,
        reward: &reward,
    }
    .render()
}

/// Recycling parameters used for the shipped problem file. Chosen so the
/// optimal two-step decentralized value from the start state is 7 and the
/// discounted centralized value at 0.9 is about 32.07.
pub const RECYCLING: RecyclingParams = RecyclingParams {
    stay_high_big: 0.05,
    stay_high_small: 0.5,
    stay_low_big: 0.4,
    stay_low_small: 0.3,
    big_reward: 6.0,
    small_reward: 2.0,
    depletion_penalty: -5.0,
};

/// Every generated problem as `(file name, text)`.
pub fn generated() -> Vec<(&'static str, String)> {
    vec![
        ("recycling.dpomdp", recycling(RECYCLING)),
        ("grid3x3corners.dpomdp", grid3x3()),
        ("boxpushing.dpomdp", box_pushing()),
        ("mars.dpomdp", mars_rover()),
    ]
}

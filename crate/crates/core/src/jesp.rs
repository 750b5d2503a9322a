//! Iterated best-response search over finite-state controllers.
//!
//! Agents take turns: the current agent's best-response POMDP is compiled
//! against its partners' controllers, solved, and turned back into a
//! controller. The candidate replaces the agent's controller only if the
//! joint value strictly improves by more than the acceptance margin. The
//! search stops once every agent in a row failed to improve, which is a
//! Nash equilibrium up to solver accuracy.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::best_response::{build_best_response_reachable, partners_of, BestResponseForm, DEFAULT_STATE_CAP};
use crate::error::{Error, Result};
use crate::extraction::{extract_fsc, extract_initial_fsc, InitVariant};
use crate::fsc::{evaluate_joint, random_fsc, Fsc, DEFAULT_EVAL_EPSILON};
use crate::model::{flatten_mpomdp, DecPomdp};
use crate::solver::{solve, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    Random,
    MpomdpDeterministic,
    MpomdpStochastic,
}

impl InitMode {
    pub fn name(self) -> &'static str {
        match self {
            InitMode::Random => "random",
            InitMode::MpomdpDeterministic => "mpomdp-d",
            InitMode::MpomdpStochastic => "mpomdp-s",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub init: InitMode,
    pub restarts: usize,
    pub seed: u64,
    pub restart_timeout: Duration,
    pub solver: SolverConfig,
    pub eval_epsilon: f64,
    pub acceptance_margin: f64,
    /// Node bound for random initial controllers.
    pub max_init_nodes: usize,
    pub br_form: BestResponseForm,
    pub br_state_cap: u128,
    /// Agent visiting order; `None` is `0, 1, …`.
    pub agent_order: Option<Vec<usize>>,
    /// Solve the centralized relaxation to report its upper bound.
    pub mpomdp_bound: bool,
    /// Stop each local search after this many best-response iterations.
    pub max_iterations: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            init: InitMode::MpomdpDeterministic,
            restarts: 1,
            seed: 0,
            restart_timeout: Duration::from_secs(7200),
            solver: SolverConfig::default(),
            eval_epsilon: DEFAULT_EVAL_EPSILON,
            acceptance_margin: 1e-9,
            max_init_nodes: 5,
            br_form: BestResponseForm::Momdp,
            br_state_cap: DEFAULT_STATE_CAP,
            agent_order: None,
            mpomdp_bound: true,
            max_iterations: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self, n_agents: usize) -> Result<()> {
        self.solver.validate()?;
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        if self.max_init_nodes == 0 {
            return Err(Error::InvalidConfig("max initial nodes must be at least 1".into()));
        }
        if !(self.eval_epsilon > 0.0) {
            return Err(Error::InvalidConfig("evaluation epsilon must be positive".into()));
        }
        if !(self.acceptance_margin >= 0.0) {
            return Err(Error::InvalidConfig("acceptance margin must be nonnegative".into()));
        }
        if let Some(order) = &self.agent_order {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != (0..n_agents).collect::<Vec<_>>() {
                return Err(Error::InvalidConfig("agent order must be a permutation".into()));
            }
        }
        Ok(())
    }

    /// Restart count actually used: centralized initializations are
    /// deterministic, so they run once.
    pub fn effective_restarts(&self) -> usize {
        match self.init {
            InitMode::Random => self.restarts,
            _ => 1,
        }
    }
}

/// One best-response step.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub agent: usize,
    pub candidate_value: f64,
    pub accepted: bool,
    /// Joint value after this step.
    pub value: f64,
    pub fsc_sizes: Vec<usize>,
    pub elapsed: Duration,
    pub solver_lb: f64,
    pub solver_ub: f64,
    pub solver_converged: bool,
    pub solver_trials: usize,
    pub br_states_before: u128,
    pub br_states_after: usize,
    pub br_non_sentinel_ratio: f64,
}

/// Evidence that no agent can improve much by deviating alone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NashSlack {
    pub agent: usize,
    /// Candidate value minus the final joint value.
    pub candidate_gain: f64,
    /// Best-response upper bound minus the final joint value, widened by the
    /// evaluation error; bounds the gain of any unilateral deviation.
    pub certified_gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchState {
    pub fscs: Vec<Fsc>,
    pub value: f64,
    /// Consecutive non-improving iterations.
    pub non_improving: usize,
    pub agent: usize,
    pub trace: Vec<IterationRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalSearchResult {
    pub fscs: Vec<Fsc>,
    pub value: f64,
    pub initial_value: f64,
    pub trace: Vec<IterationRecord>,
    /// Stopped because every agent failed to improve in a row.
    pub converged: bool,
    pub timed_out: bool,
    /// Per agent, from the final round of non-improving iterations.
    pub slack: Vec<NashSlack>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestartResult {
    pub restart: usize,
    pub seed: Option<u64>,
    pub initial_sizes: Vec<usize>,
    pub search: LocalSearchResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub fscs: Vec<Fsc>,
    pub value: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartResult>,
    pub mpomdp_lb: Option<f64>,
    pub mpomdp_ub: Option<f64>,
    pub init_elapsed: Duration,
    pub elapsed: Duration,
}

fn order(cfg: &RunConfig, n: usize) -> Vec<usize> {
    cfg.agent_order.clone().unwrap_or_else(|| (0..n).collect())
}

/// Runs best-response rounds from `initial` until `|I|` consecutive
/// iterations fail to improve or the restart timeout passes.
pub fn local_search(d: &DecPomdp, initial: Vec<Fsc>, cfg: &RunConfig) -> Result<LocalSearchResult> {
    cfg.validate(d.n_agents())?;
    let start = Instant::now();
    let n = d.n_agents();
    let order = order(cfg, n);
    let initial_value = evaluate_joint(d, &initial, cfg.eval_epsilon)?;
    let mut state = SearchState {
        fscs: initial,
        value: initial_value,
        non_improving: 0,
        agent: order[0],
        trace: Vec::new(),
    };
    let mut slot = 0;
    let mut timed_out = false;
    let mut last_round: Vec<Option<(f64, f64)>> = vec![None; n];
    while state.non_improving < n {
        if cfg.max_iterations.is_some_and(|k| state.trace.len() >= k) {
            break;
        }
        if start.elapsed() >= cfg.restart_timeout {
            timed_out = true;
            break;
        }
        let i = state.agent;
        let partners = partners_of(&state.fscs, i);
        let brp = build_best_response_reachable(d, &partners, i, cfg.br_form, cfg.br_state_cap)?;
        let solved = solve(&brp.pomdp, &cfg.solver)?;
        let mut candidate = extract_fsc(&solved.gamma_set, &brp.pomdp, &brp.pomdp.initial);
        candidate.agent = i;
        let mut trial = state.fscs.clone();
        trial[i] = candidate;
        let v = evaluate_joint(d, &trial, cfg.eval_epsilon)?;
        let accepted = v > state.value + cfg.acceptance_margin;
        if accepted {
            state.fscs = trial;
            state.value = v;
            state.non_improving = 0;
            last_round = vec![None; n];
        } else {
            state.non_improving += 1;
            last_round[i] = Some((v, solved.ub_at_b0));
        }
        state.trace.push(IterationRecord {
            agent: i,
            candidate_value: v,
            accepted,
            value: state.value,
            fsc_sizes: state.fscs.iter().map(Fsc::len).collect(),
            elapsed: start.elapsed(),
            solver_lb: solved.lb_at_b0,
            solver_ub: solved.ub_at_b0,
            solver_converged: solved.converged,
            solver_trials: solved.iterations,
            br_states_before: brp.states_before_elimination,
            br_states_after: brp.states_after_elimination(),
            br_non_sentinel_ratio: brp.non_sentinel_elimination_ratio(),
        });
        slot = (slot + 1) % n;
        state.agent = order[slot];
    }
    let converged = state.non_improving >= n;
    // The evaluated joint value may overshoot the true one by this much.
    let eval_error = cfg.eval_epsilon * d.discount / (1.0 - d.discount);
    let slack = if converged {
        (0..n)
            .map(|i| {
                let (v, ub) = last_round[i].expect("every agent ran in the final round");
                NashSlack {
                    agent: i,
                    candidate_gain: v - state.value,
                    certified_gap: ub - state.value + eval_error,
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(LocalSearchResult {
        fscs: state.fscs,
        value: state.value,
        initial_value,
        trace: state.trace,
        converged,
        timed_out,
        slack,
    })
}

/// Seed of restart `r`, derived from the master seed.
pub fn restart_seed(master: u64, restart: usize) -> u64 {
    use rand::RngCore;
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(restart as u64 + 1);
    rng.next_u64()
}

/// Random initial controllers for restart `r`.
pub fn random_profile(d: &DecPomdp, master: u64, restart: usize, max_nodes: usize) -> Vec<Fsc> {
    let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(master, restart));
    d.agents
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut f = random_fsc(&spec.actions, &spec.observations, max_nodes, &mut rng);
            f.agent = i;
            f
        })
        .collect()
}

/// Full search: initialization, restarts (in parallel), best result.
pub fn run(d: &DecPomdp, cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate(d.n_agents())?;
    let start = Instant::now();
    let needs_mpomdp = cfg.mpomdp_bound || cfg.init != InitMode::Random;
    let (mpomdp_lb, mpomdp_ub, central_init) = if needs_mpomdp {
        let mp = flatten_mpomdp(d)?;
        let solved = solve(&mp, &cfg.solver)?;
        let init = match cfg.init {
            InitMode::Random => None,
            mode => {
                let variant = if mode == InitMode::MpomdpDeterministic {
                    InitVariant::Deterministic
                } else {
                    InitVariant::Stochastic
                };
                Some(
                    (0..d.n_agents())
                        .map(|i| extract_initial_fsc(&solved.gamma_set, &mp, d, i, variant))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
        };
        (Some(solved.lb_at_b0), Some(solved.ub_at_b0), init)
    } else {
        (None, None, None)
    };
    let init_elapsed = start.elapsed();

    let restarts: Vec<RestartResult> = match central_init {
        Some(initial) => {
            let sizes = initial.iter().map(Fsc::len).collect();
            vec![RestartResult {
                restart: 0,
                seed: None,
                initial_sizes: sizes,
                search: local_search(d, initial, cfg)?,
            }]
        }
        None => (0..cfg.effective_restarts())
            .into_par_iter()
            .map(|r| {
                let initial = random_profile(d, cfg.seed, r, cfg.max_init_nodes);
                let sizes = initial.iter().map(Fsc::len).collect();
                Ok(RestartResult {
                    restart: r,
                    seed: Some(restart_seed(cfg.seed, r)),
                    initial_sizes: sizes,
                    search: local_search(d, initial, cfg)?,
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let mut best = 0;
    for (k, r) in restarts.iter().enumerate() {
        if r.search.value > restarts[best].search.value {
            best = k;
        }
    }
    Ok(RunResult {
        fscs: restarts[best].search.fscs.clone(),
        value: restarts[best].search.value,
        best_restart: best,
        restarts,
        mpomdp_lb,
        mpomdp_ub,
        init_elapsed,
        elapsed: start.elapsed(),
    })
}

impl IterationRecord {
    pub fn to_json_value(&self) -> Value {
        json!({
            "agent": self.agent,
            "candidate_value": self.candidate_value,
            "accepted": self.accepted,
            "value": self.value,
            "fsc_sizes": self.fsc_sizes,
            "elapsed_s": self.elapsed.as_secs_f64(),
            "solver_lb": self.solver_lb,
            "solver_ub": self.solver_ub,
            "solver_converged": self.solver_converged,
            "solver_trials": self.solver_trials,
            "br_states_before": self.br_states_before as f64,
            "br_states_after": self.br_states_after,
            "br_non_sentinel_ratio": self.br_non_sentinel_ratio,
        })
    }
}

impl RunResult {
    /// Mean non-sentinel elimination ratio over every best-response POMDP
    /// built during the run; `None` if none was built.
    pub fn mean_elimination_ratio(&self) -> Option<f64> {
        let ratios: Vec<f64> = self
            .restarts
            .iter()
            .flat_map(|r| r.search.trace.iter().map(|t| t.br_non_sentinel_ratio))
            .collect();
        (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
    }

    /// Everything except the run configuration, which callers echo.
    pub fn to_json_value(&self) -> Value {
        let restarts: Vec<Value> = self
            .restarts
            .iter()
            .map(|r| {
                json!({
                    "restart": r.restart,
                    "seed": r.seed,
                    "initial_sizes": r.initial_sizes,
                    "initial_value": r.search.initial_value,
                    "value": r.search.value,
                    "converged": r.search.converged,
                    "timed_out": r.search.timed_out,
                    "iterations": r.search.trace.len(),
                    "fsc_sizes": r.search.fscs.iter().map(Fsc::len).collect::<Vec<_>>(),
                    "slack": r.search.slack.iter().map(|s| json!({
                        "agent": s.agent,
                        "candidate_gain": s.candidate_gain,
                        "certified_gap": s.certified_gap,
                    })).collect::<Vec<_>>(),
                    "trace": r.search.trace.iter().map(IterationRecord::to_json_value).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({
            "value": self.value,
            "best_restart": self.best_restart,
            "mpomdp_lb": self.mpomdp_lb,
            "mpomdp_ub": self.mpomdp_ub,
            "timing": {
                "init_s": self.init_elapsed.as_secs_f64(),
                "total_s": self.elapsed.as_secs_f64(),
            },
            "fscs": self.fscs.iter().map(Fsc::to_json_value).collect::<Vec<_>>(),
            "restarts": restarts,
        })
    }
}

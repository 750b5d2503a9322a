use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, ValueEnum};
use serde_json::{json, Value};

use jesp_core::fsc::simulate;
use jesp_core::{
    build_best_response_reachable, emit_pomdp, evaluate_joint, run, BestResponseForm, DecPomdp, Fsc, InitMode,
    RunConfig, RunResult, SolverConfig,
};

use crate::io::{load_problem, read, sibling, write_atomic};
use crate::Failure;

/// Problems with at least this many states get the longer default budget.
const LARGE_PROBLEM_STATES: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Init {
    Random,
    MpomdpD,
    MpomdpS,
}

impl From<Init> for InitMode {
    fn from(i: Init) -> Self {
        match i {
            Init::Random => InitMode::Random,
            Init::MpomdpD => InitMode::MpomdpDeterministic,
            Init::MpomdpS => InitMode::MpomdpStochastic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BrForm {
    Momdp,
    Lagged,
}

impl From<BrForm> for BestResponseForm {
    fn from(f: BrForm) -> Self {
        match f {
            BrForm::Momdp => BestResponseForm::Momdp,
            BrForm::Lagged => BestResponseForm::Lagged,
        }
    }
}

fn form_name(f: BestResponseForm) -> &'static str {
    match f {
        BestResponseForm::Momdp => "momdp",
        BestResponseForm::Lagged => "lagged",
    }
}

/// Search options shared by `solve` and `bench`.
#[derive(Args, Debug, Clone)]
pub struct SearchArgs {
    #[arg(long, value_enum, default_value = "mpomdp-d")]
    pub init: Init,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Discount override; the problem file's value is used otherwise.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Wall-clock budget per POMDP solve (default 5 s, 30 s for 50+ states).
    #[arg(long)]
    pub solver_timeout_s: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub solver_eps: f64,
    /// Trial budget per POMDP solve; makes truncated solves reproducible.
    #[arg(long)]
    pub solver_trials: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub eval_eps: f64,
    #[arg(long, default_value_t = 7200.0)]
    pub restart_timeout_s: f64,
    #[arg(long, default_value_t = 5)]
    pub max_init_nodes: usize,
    #[arg(long, value_enum, default_value = "momdp")]
    pub br_form: BrForm,
    /// Stop each local search after this many best-response iterations.
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

fn seconds(s: f64, what: &str) -> Result<Duration, Failure> {
    Duration::try_from_secs_f64(s)
        .ok()
        .filter(|d| !d.is_zero())
        .ok_or_else(|| Failure::Config(format!("{what} must be a positive number of seconds")))
}

impl SearchArgs {
    pub fn run_config(&self, d: &DecPomdp) -> Result<RunConfig, Failure> {
        let default_timeout = if d.n_states() >= LARGE_PROBLEM_STATES { 30.0 } else { 5.0 };
        let cfg = RunConfig {
            init: self.init.into(),
            restarts: self.restarts,
            seed: self.seed,
            restart_timeout: seconds(self.restart_timeout_s, "--restart-timeout-s")?,
            solver: SolverConfig {
                epsilon: self.solver_eps,
                timeout: seconds(self.solver_timeout_s.unwrap_or(default_timeout), "--solver-timeout-s")?,
                max_trials: self.solver_trials,
                seed: self.seed,
                ..SolverConfig::default()
            },
            eval_epsilon: self.eval_eps,
            max_init_nodes: self.max_init_nodes,
            br_form: self.br_form.into(),
            max_iterations: self.max_iterations,
            ..RunConfig::default()
        };
        cfg.validate(d.n_agents())?;
        Ok(cfg)
    }
}

/// Everything needed to replay a run.
pub fn config_echo(problem: &Path, d: &DecPomdp, gamma_source: &str, cfg: &RunConfig, jobs: Option<usize>) -> Value {
    json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "problem": problem.display().to_string(),
        "gamma": d.discount,
        "gamma_source": gamma_source,
        "init": cfg.init.name(),
        "restarts": cfg.restarts,
        "seed": cfg.seed,
        "restart_timeout_s": cfg.restart_timeout.as_secs_f64(),
        "solver": {
            "epsilon": cfg.solver.epsilon,
            "timeout_s": cfg.solver.timeout.as_secs_f64(),
            "max_trials": cfg.solver.max_trials,
            "max_alpha_vectors": cfg.solver.max_alpha_vectors,
            "warmup_beliefs": cfg.solver.warmup_beliefs,
            "warmup_sweeps": cfg.solver.warmup_sweeps,
        },
        "eval_epsilon": cfg.eval_epsilon,
        "acceptance_margin": cfg.acceptance_margin,
        "max_init_nodes": cfg.max_init_nodes,
        "br_form": form_name(cfg.br_form),
        "br_state_cap": cfg.br_state_cap as f64,
        "max_iterations": cfg.max_iterations,
        "jobs": jobs,
    })
}

/// True when no restart got past its initial controllers before the
/// restart timeout.
pub fn no_result(r: &RunResult) -> bool {
    r.restarts.iter().all(|x| x.search.timed_out && x.search.trace.is_empty())
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long)]
    pub problem: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Run-result file; controllers go next to it as `<stem>.agent<i>.fsc.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn solve(a: &SolveArgs, jobs: Option<usize>) -> Result<(), Failure> {
    let d = load_problem(&a.problem, a.search.gamma)?;
    let cfg = a.search.run_config(&d)?;
    let gamma_source = if a.search.gamma.is_some() { "flag" } else { "file" };
    let out = a.out.clone().unwrap_or_else(|| {
        let stem = a.problem.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        PathBuf::from(format!("{stem}.result.json"))
    });
    let result = run(&d, &cfg)?;
    if no_result(&result) {
        return Err(Failure::Timeout(format!(
            "restart timeout of {} s passed before any best-response iteration completed",
            cfg.restart_timeout.as_secs_f64()
        )));
    }
    let mut doc = json!({ "config": config_echo(&a.problem, &d, gamma_source, &cfg, jobs) });
    let body = result.to_json_value();
    if let (Value::Object(dst), Value::Object(src)) = (&mut doc, body) {
        dst.extend(src);
    }
    let mut fsc_paths = Vec::new();
    for (i, f) in result.fscs.iter().enumerate() {
        let p = sibling(&out, &format!(".agent{i}.fsc.json"));
        write_atomic(&p, f.to_json().as_bytes())?;
        fsc_paths.push(p);
    }
    doc["fsc_files"] = json!(fsc_paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>());
    let text = serde_json::to_string_pretty(&doc).expect("serializable");
    write_atomic(&out, text.as_bytes())?;

    let best = &result.restarts[result.best_restart];
    println!("value {:.6}", result.value);
    println!(
        "fsc sizes {:?}, iterations {}, converged {}, best restart {} of {}",
        result.fscs.iter().map(Fsc::len).collect::<Vec<_>>(),
        best.search.trace.len(),
        best.search.converged,
        result.best_restart,
        result.restarts.len()
    );
    if let Some(ub) = result.mpomdp_ub {
        println!("centralized upper bound {ub:.6}");
    }
    for s in &best.search.slack {
        println!(
            "agent {} slack: candidate gain {:.2e}, certified gap {:.2e}",
            s.agent, s.candidate_gain, s.certified_gap
        );
    }
    println!("wall time {:.2} s", result.elapsed.as_secs_f64());
    println!("wrote {}", out.display());
    Ok(())
}

fn load_fscs(d: &DecPomdp, paths: &[PathBuf], agents: &[usize]) -> Result<Vec<Fsc>, Failure> {
    if paths.len() != agents.len() {
        return Err(Failure::Config(format!(
            "expected {} controller files, got {}",
            agents.len(),
            paths.len()
        )));
    }
    paths
        .iter()
        .zip(agents)
        .map(|(p, &i)| {
            let spec = &d.agents[i];
            let mut f = Fsc::from_json_with(&read(p)?, &spec.actions, &spec.observations, &d.states)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            f.agent = i;
            Ok(f)
        })
        .collect()
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// Controller file, once per agent in agent order.
    #[arg(long = "fsc", required = true)]
    pub fscs: Vec<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    pub eval_eps: f64,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Also estimate the value from this many simulated episodes.
    #[arg(long)]
    pub simulate: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn eval(a: &EvalArgs) -> Result<(), Failure> {
    let d = load_problem(&a.problem, a.gamma)?;
    if !(a.eval_eps > 0.0) {
        return Err(Failure::Config("--eval-eps must be positive".into()));
    }
    let agents: Vec<usize> = (0..d.n_agents()).collect();
    let fscs = load_fscs(&d, &a.fscs, &agents)?;
    let v = evaluate_joint(&d, &fscs, a.eval_eps)?;
    println!("value {v:.6}");
    if let Some(n) = a.simulate {
        let est = simulate(&d, &fscs, n, a.horizon, a.seed)?;
        println!(
            "simulated {:.6} ± {:.6} ({} episodes, horizon {})",
            est.mean, est.std_error, est.episodes, a.horizon
        );
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct CompileBrArgs {
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long)]
    pub agent: usize,
    /// Controller file, once per partner in agent order.
    #[arg(long = "fsc", required = true)]
    pub fscs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "momdp")]
    pub br_form: BrForm,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Largest admissible pre-elimination state count.
    #[arg(long, default_value_t = jesp_core::best_response::DEFAULT_STATE_CAP)]
    pub state_cap: u128,
    /// Output `.pomdp` file; the state legend goes to `<stem>.legend.tsv`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn compile_br(a: &CompileBrArgs) -> Result<(), Failure> {
    let d = load_problem(&a.problem, a.gamma)?;
    if a.agent >= d.n_agents() {
        return Err(Failure::Config(format!(
            "agent {} out of range ({} agents)",
            a.agent,
            d.n_agents()
        )));
    }
    let partners: Vec<usize> = (0..d.n_agents()).filter(|&j| j != a.agent).collect();
    let fscs = load_fscs(&d, &a.fscs, &partners)?;
    let brp = build_best_response_reachable(&d, &fscs, a.agent, a.br_form.into(), a.state_cap)?;
    write_atomic(&a.out, emit_pomdp(&brp.pomdp).as_bytes())?;
    let legend = sibling(&a.out, ".legend.tsv");
    write_atomic(&legend, brp.legend(&d).as_bytes())?;
    println!("states before elimination {}", brp.states_before_elimination);
    println!("states after elimination {}", brp.states_after_elimination());
    println!("elimination ratio {:.4}", brp.elimination_ratio());
    println!("non-sentinel elimination ratio {:.4}", brp.non_sentinel_elimination_ratio());
    println!("wrote {} and {}", a.out.display(), legend.display());
    Ok(())
}

//! Infinite-horizon JESP for decentralized POMDPs.
//!
//! Agents' policies are finite-state controllers. Each agent in turn gets a
//! best-response POMDP compiled against its partners' controllers, which is
//! solved point-based and turned back into a controller; the loop stops at a
//! Nash equilibrium of the team game.

pub mod best_response;
pub mod error;
pub mod extraction;
pub mod fsc;
pub mod jesp;
pub mod model;
pub mod parser;
pub mod solver;

pub use best_response::{
    build_best_response, build_best_response_lagged, build_best_response_reachable,
    eliminate_unreachable, BestResponseForm, BestResponsePomdp, ExtendedState,
};
pub use error::{Error, Result};
pub use extraction::{extract_fsc, extract_initial_fsc, InitVariant};
pub use fsc::{evaluate_fsc, evaluate_joint, random_fsc, simulate, Fsc, FscNode, NodeValueTable};
pub use jesp::{local_search, run, InitMode, RunConfig, RunResult, SearchState};
pub use model::{flatten_mpomdp, AgentSpec, Belief, DecPomdp, JointSpace, Pomdp, Provenance};
pub use parser::{emit_pomdp, parse_dpomdp, parse_pomdp, ParseDiagnostics};
pub use solver::{backup, solve, AlphaVector, AlphaVectorSet, SolveResult, SolverConfig};

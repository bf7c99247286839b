//! Bayes-adaptive MDPs with Dirichlet transition beliefs: belief updates,
//! posterior sampling, Monte-Carlo tree search for static CVaR, and an
//! exhaustive oracle over the unrolled hyper-state tree.

mod belief;
mod exact;
mod mcts;

pub use belief::{BamdpFile, BamdpProblem, DirichletBelief, PriorEntry, PriorOutcome, PriorRow};
pub use exact::{exact_bamdp_cvar, unroll, BamdpExact, Unrolled, DEFAULT_HYPERSTATE_CAP};
pub use mcts::{solve_bamdp_cvar_mcts, SearchConfig, SearchResult};

//! CVaR planning on a known MDP: static CVaR through the budget-augmented
//! game, dynamic (nested) CVaR, and lexicographic refinement of expected cost
//! under optimal static CVaR.

mod dynamic;
mod grid;
mod lexicographic;
pub mod oracle;
mod static_cvar;

pub use dynamic::{dynamic_cvar_evaluation, one_step_cvar, solve_dynamic_cvar, DynamicCvarSolution};
pub use grid::{ConcaveEnvelope, YGrid};
pub use lexicographic::{
    constrained_ev_dp, solve_lexicographic, ConstrainedEv, ConstrainedEvSolution, LexPolicy, LexSolution,
    SwitchEntry, Trajectory, FEASIBILITY_EPS,
};
pub use static_cvar::{
    adversary_best_response, adversary_response, solve_static_cvar, AdversaryResponse, AugmentedPolicy, Decision,
    StaticCvarSolution,
};

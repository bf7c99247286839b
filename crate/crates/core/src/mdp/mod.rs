//! Tabular MDP model, expected-value solvers and the exact return-distribution
//! oracle every other module verifies against.
//!
//! Costs are attached to transitions `(s, a, s')`. Terminal states self-loop
//! with zero cost under every action. A finite horizon counts decision steps;
//! solvers index their per-stage tables by *steps to go*.

mod distribution;
mod model;
mod policy;
mod random;
mod schema;
pub(crate) mod solve;

pub use distribution::{return_distribution, return_distribution_capped, CostDistribution, DEFAULT_ATOM_CAP, MERGE_EPS};
pub use model::{Mdp, MdpBuilder, Outcome};
pub use policy::{MarkovPolicy, PolicyView, StationaryPolicy};
pub use random::{random_mdp, random_samples, RandomMdpConfig};
pub use schema::{MdpFile, TransitionEntry, TransitionRow};
pub use solve::{
    policy_evaluation, policy_evaluation_stages, q_value, value_iteration, worst_case_cost,
    worst_case_stages, Stages, ValueSolution, MAX_SWEEPS,
};

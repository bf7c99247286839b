//! Risk-sensitive and robust planning for tabular Markov decision processes.
//!
//! All solvers use the cost convention: lower is better. Reward-maximizing
//! formulations map onto this crate by negating rewards.
//!
//! Modules:
//! - [`mdp`]: the tabular model, expected-value solvers and the exact
//!   return-distribution oracle.
//! - [`risk`]: CVaR, VaR, mean-variance and the CVaR dual.
//! - [`cvar`]: static CVaR (budget-augmented game), dynamic CVaR and the
//!   lexicographic CVaR/expected-value refinement.
//! - [`uncertain`]: robust DP, regret-based minimax-regret approximation,
//!   n-step options and exact enumeration oracles.
//! - [`bamdp`]: Dirichlet beliefs and risk-averse two-player MCTS.
//! - [`domains`]: canonical problem builders.

pub mod bamdp;
pub mod cvar;
pub mod domains;
pub mod error;
pub mod mdp;
pub mod risk;
pub mod uncertain;

pub use error::{Error, Result};

/// Values closer than this are treated as ties; ties go to the lowest index.
pub const TIE_EPS: f64 = 1e-10;

/// Probability-mass tolerance used by every invariant check.
pub const PROB_EPS: f64 = 1e-9;

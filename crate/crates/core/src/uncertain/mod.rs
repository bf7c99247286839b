//! Planning against a finite set of sampled MDPs: rectangular robust DP,
//! minimax-regret approximations (per-state and over `n`-step options), and
//! an exhaustive stationary-policy oracle.

mod approx;
mod exact;
mod game;
mod model;
mod options;
mod regret;
mod robust;

pub use approx::{regret_game_evaluation, solve_minimax_regret_approx, MinimaxRegretSolution};
pub use exact::{exact_minimax_regret, ExactRegret, PolicyClass, DEFAULT_POLICY_CAP};
pub use game::{solve_matrix_game, MatrixGameSolution, CERTIFY_EPS, MAX_GAME_DIM};
pub use model::{SampleBlock, SampleUncertainMdp, SharedHeader, UncertainFile};
pub use options::{
    evaluate_option_regret, option_policy_evaluation, option_regret_game_evaluation, solve_minimax_regret_options,
    OptionPolicy, OptionRegretSolution, PlanNode, DEFAULT_PLAN_CAP,
};
pub use regret::{evaluate_regret, regret_cost, RegretCostTable, RegretEvaluation};
pub use robust::{robust_policy_evaluation, robust_value_iteration, RobustSolution};

use serde::{Deserialize, Serialize};

use crate::mdp::solve::{argmin, max_abs_diff};
use crate::mdp::{MarkovPolicy, PolicyView, Stages, StationaryPolicy};
use crate::Result;

use super::game::solve_matrix_game;
use super::model::SampleUncertainMdp;
use super::regret::{regret_cost, RegretCostTable};

/// Rectangular minimax-regret values `W` and the policy attaining them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimaxRegretSolution {
    pub stages: Stages,
    pub policy: MarkovPolicy,
    pub regret: RegretCostTable,
}

impl MinimaxRegretSolution {
    pub fn values(&self) -> &[f64] {
        self.stages.root()
    }

    pub fn root_value(&self, u: &SampleUncertainMdp) -> f64 {
        self.values()[u.header().initial_state()]
    }
}

/// `M[a][i] = A_i(s, a) + γ Σ T_i(s'|s,a) W(s')`.
fn payoff(u: &SampleUncertainMdp, regret: &RegretCostTable, s: usize, k: usize, w: &[f64]) -> Vec<Vec<f64>> {
    let gamma = u.header().gamma();
    (0..u.header().num_actions())
        .map(|a| {
            u.samples()
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let future: f64 = m.outcomes(s, a).iter().map(|o| o.prob * w[o.next]).sum();
                    regret.cost(k, s, a, i) + gamma * future
                })
                .collect()
        })
        .collect()
}

fn state_game(u: &SampleUncertainMdp, regret: &RegretCostTable, s: usize, k: usize, w: &[f64], stochastic: bool) -> Result<(Vec<f64>, f64)> {
    let na = u.header().num_actions();
    if u.header().is_terminal(s) {
        let mut row = vec![0.0; na];
        row[0] = 1.0;
        return Ok((row, 0.0));
    }
    let m = payoff(u, regret, s, k, w);
    if stochastic {
        let sol = solve_matrix_game(&m)?;
        Ok((sol.strategy, sol.value))
    } else {
        let (a, v) = argmin(m.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
        let mut row = vec![0.0; na];
        row[a] = 1.0;
        Ok((row, v))
    }
}

/// Dynamic program over the rectangularized regret game: the adversary may
/// pick a different sample at every visited state.
///
/// `stochastic` lets the agent mix actions via a per-state matrix game;
/// otherwise it picks the action with the smallest worst-case entry. The
/// values upper-bound the true minimax regret of the returned policy.
pub fn solve_minimax_regret_approx(u: &SampleUncertainMdp, tol: f64, stochastic: bool) -> Result<MinimaxRegretSolution> {
    let regret = regret_cost(u, tol)?;
    let h = u.header();
    let ns = h.num_states();
    let mut failure = None;
    let stages = Stages::iterate(
        h.horizon(),
        tol,
        vec![0.0; ns],
        |w, k| {
            (0..ns)
                .map(|s| match state_game(u, &regret, s, k, w, stochastic) {
                    Ok((_, v)) => v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                })
                .collect()
        },
        |a, b| max_abs_diff(a, b),
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let stage_policy = |k: usize, w: &[f64]| -> Result<StationaryPolicy> {
        let rows = (0..ns).map(|s| state_game(u, &regret, s, k, w, stochastic).map(|r| r.0)).collect::<Result<Vec<_>>>()?;
        StationaryPolicy::new(rows)
    };
    let policy = if stages.is_finite() {
        MarkovPolicy::from_stages((1..=stages.horizon()).map(|k| stage_policy(k, stages.at(k - 1))).collect::<Result<Vec<_>>>()?)
    } else {
        MarkovPolicy::stationary(stage_policy(1, stages.root())?)
    };
    Ok(MinimaxRegretSolution { stages, policy, regret })
}

/// Value of a fixed policy in the rectangularized regret game, with the
/// adversary choosing the worst sample at every visited state. Reproduces
/// the values of [`solve_minimax_regret_approx`] for its own policy.
pub fn regret_game_evaluation(u: &SampleUncertainMdp, policy: &impl PolicyView, tol: f64) -> Result<Vec<f64>> {
    let regret = regret_cost(u, tol)?;
    let h = u.header();
    let ns = h.num_states();
    let stages = Stages::iterate(
        h.horizon(),
        tol,
        vec![0.0; ns],
        |w, k| {
            (0..ns)
                .map(|s| {
                    if h.is_terminal(s) {
                        return 0.0;
                    }
                    let m = payoff(u, &regret, s, k, w);
                    let pi = policy.action_probs(s, k);
                    (0..u.num_samples())
                        .map(|i| m.iter().zip(pi).map(|(row, p)| p * row[i]).sum::<f64>())
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect()
        },
        |a, b| max_abs_diff(a, b),
    )?;
    Ok(stages.root().to_vec())
}

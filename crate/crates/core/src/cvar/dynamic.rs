//! Dynamic (nested) CVaR: the one-step CVaR replaces the expectation in the
//! Bellman operator, giving a time-consistent objective with Markov optimal
//! policies.

use crate::mdp::{CostDistribution, MarkovPolicy, Mdp, PolicyView, Stages, StationaryPolicy};
use crate::risk::cvar;
use crate::{Error, Result, TIE_EPS};

#[derive(Debug, Clone)]
pub struct DynamicCvarSolution {
    pub stages: Stages,
    pub policy: MarkovPolicy,
}

impl DynamicCvarSolution {
    pub fn values(&self) -> &[f64] {
        self.stages.root()
    }
}

/// CVaR of the one-step mixture `c(s,a,s') + γ V(s')`.
pub fn one_step_cvar(mdp: &Mdp, s: usize, a: usize, next: &[f64], alpha: f64) -> f64 {
    let gamma = mdp.gamma();
    let dist = CostDistribution::from_atoms(
        mdp.outcomes(s, a).iter().map(|o| (o.cost + gamma * next[o.next], o.prob)),
    )
    .expect("validated rows");
    cvar(&dist, alpha)
}

fn best_action(mdp: &Mdp, s: usize, next: &[f64], alpha: f64) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for a in 0..mdp.num_actions() {
        let v = one_step_cvar(mdp, s, a, next, alpha);
        if v < best.1 - TIE_EPS {
            best = (a, v);
        }
    }
    best
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("alpha {alpha} outside (0, 1]")))
    }
}

pub fn solve_dynamic_cvar(mdp: &Mdp, alpha: f64, tol: f64) -> Result<DynamicCvarSolution> {
    check_alpha(alpha)?;
    let stages = Stages::iterate(
        mdp.horizon(),
        tol,
        vec![0.0; mdp.num_states()],
        |v, _| (0..mdp.num_states()).map(|s| best_action(mdp, s, v, alpha).1).collect(),
        |a, b| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
    )?;
    let greedy = |next: &[f64]| {
        let actions: Vec<usize> = (0..mdp.num_states()).map(|s| best_action(mdp, s, next, alpha).0).collect();
        StationaryPolicy::deterministic(&actions, mdp.num_actions())
    };
    let policy = if stages.is_finite() {
        MarkovPolicy::from_stages((1..=stages.horizon()).map(|k| greedy(stages.at(k - 1))).collect())
    } else {
        MarkovPolicy::stationary(greedy(stages.root()))
    };
    Ok(DynamicCvarSolution { stages, policy })
}

/// Nested-CVaR value of a fixed deterministic policy (mode of each row for
/// stochastic ones).
pub fn dynamic_cvar_evaluation(mdp: &Mdp, policy: &impl PolicyView, alpha: f64, tol: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let stages = Stages::iterate(
        mdp.horizon(),
        tol,
        vec![0.0; mdp.num_states()],
        |v, k| {
            (0..mdp.num_states())
                .map(|s| {
                    let row = policy.action_probs(s, k);
                    let a = (0..row.len()).fold(0, |best, a| if row[a] > row[best] + TIE_EPS { a } else { best });
                    one_step_cvar(mdp, s, a, v, alpha)
                })
                .collect()
        },
        |a, b| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
    )?;
    Ok(stages.root().clone())
}

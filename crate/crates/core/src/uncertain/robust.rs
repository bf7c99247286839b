use crate::mdp::solve::{argmin, max_abs_diff};
use crate::mdp::{q_value, MarkovPolicy, PolicyView, Stages, StationaryPolicy};
use crate::Result;

use super::model::SampleUncertainMdp;

/// Robust values and the greedy robust policy.
#[derive(Debug, Clone)]
pub struct RobustSolution {
    pub stages: Stages,
    pub policy: MarkovPolicy,
}

impl RobustSolution {
    pub fn values(&self) -> &[f64] {
        self.stages.root()
    }
}

fn worst_sample_q(u: &SampleUncertainMdp, s: usize, a: usize, v: &[f64]) -> f64 {
    u.samples().iter().map(|m| q_value(m, s, a, v)).fold(f64::NEG_INFINITY, f64::max)
}

fn robust_backup(u: &SampleUncertainMdp, s: usize, v: &[f64]) -> (usize, f64) {
    argmin((0..u.header().num_actions()).map(|a| worst_sample_q(u, s, a, v)))
}

/// Robust DP over the `(s, a)`-rectangular hull of the sample set:
/// `V(s) = min_a max_i Σ T_i [c_i + γ V(s')]`.
pub fn robust_value_iteration(u: &SampleUncertainMdp, tol: f64) -> Result<RobustSolution> {
    let h = u.header();
    let stages = Stages::iterate(
        h.horizon(),
        tol,
        vec![0.0; h.num_states()],
        |v, _| (0..h.num_states()).map(|s| robust_backup(u, s, v).1).collect(),
        |a, b| max_abs_diff(a, b),
    )?;
    let greedy = |v: &[f64]| {
        let actions: Vec<usize> = (0..h.num_states()).map(|s| robust_backup(u, s, v).0).collect();
        StationaryPolicy::deterministic(&actions, h.num_actions())
    };
    let policy = if stages.is_finite() {
        MarkovPolicy::from_stages((1..=stages.horizon()).map(|k| greedy(stages.at(k - 1))).collect())
    } else {
        MarkovPolicy::stationary(greedy(stages.root()))
    };
    Ok(RobustSolution { stages, policy })
}

/// Rectangular worst-case value of a fixed policy.
pub fn robust_policy_evaluation(u: &SampleUncertainMdp, policy: &impl PolicyView, tol: f64) -> Result<Vec<f64>> {
    let h = u.header();
    let stages = Stages::iterate(
        h.horizon(),
        tol,
        vec![0.0; h.num_states()],
        |v, k| {
            (0..h.num_states())
                .map(|s| {
                    let row = policy.action_probs(s, k);
                    u.samples()
                        .iter()
                        .map(|m| (0..row.len()).filter(|&a| row[a] > 0.0).map(|a| row[a] * q_value(m, s, a, v)).sum::<f64>())
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect()
        },
        |a, b| max_abs_diff(a, b),
    )?;
    Ok(stages.root().clone())
}

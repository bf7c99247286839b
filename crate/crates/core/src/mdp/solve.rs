use serde::{Deserialize, Serialize};

use super::model::Mdp;
use super::policy::{MarkovPolicy, PolicyView, StationaryPolicy};
use crate::{Error, Result, TIE_EPS};

/// Sweep limit for infinite-horizon iteration.
pub const MAX_SWEEPS: usize = 1_000_000;

/// Per-stage value tables.
///
/// Finite horizon `H`: `tables[k]` holds values with `k` steps to go, for
/// `k = 0..=H`. Unbounded horizon: a single converged table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stages<T = Vec<f64>> {
    finite: bool,
    tables: Vec<T>,
}

impl<T> Stages<T> {
    pub fn is_finite(&self) -> bool {
        self.finite
    }

    /// Table with `steps_to_go` steps left (clamped to the horizon).
    pub fn at(&self, steps_to_go: usize) -> &T {
        if self.finite {
            &self.tables[steps_to_go.min(self.tables.len() - 1)]
        } else {
            &self.tables[0]
        }
    }

    /// Table for the first decision of an episode.
    pub fn root(&self) -> &T {
        self.tables.last().expect("nonempty")
    }

    /// Number of decision stages (1 for the unbounded case).
    pub fn horizon(&self) -> usize {
        if self.finite {
            self.tables.len() - 1
        } else {
            1
        }
    }

    pub fn tables(&self) -> &[T] {
        &self.tables
    }

    pub(crate) fn from_parts(finite: bool, tables: Vec<T>) -> Self {
        assert!(!tables.is_empty());
        Stages { finite, tables }
    }

    /// Runs `backup` as backward induction over a finite horizon, or as a
    /// fixed-point iteration until `distance(next, prev) <= tol`.
    pub(crate) fn iterate<B, D>(horizon: Option<usize>, tol: f64, init: T, mut backup: B, distance: D) -> Result<Self>
    where
        B: FnMut(&T, usize) -> T,
        D: Fn(&T, &T) -> f64,
    {
        if !(tol > 0.0) {
            return Err(Error::arg(format!("tolerance must be positive, got {tol}")));
        }
        match horizon {
            Some(h) => {
                let mut tables = Vec::with_capacity(h + 1);
                tables.push(init);
                for k in 1..=h {
                    let next = backup(&tables[k - 1], k);
                    tables.push(next);
                }
                Ok(Stages { finite: true, tables })
            }
            None => {
                let mut current = init;
                for _ in 0..MAX_SWEEPS {
                    let next = backup(&current, 1);
                    let done = distance(&next, &current) <= tol;
                    current = next;
                    if done {
                        return Ok(Stages { finite: false, tables: vec![current] });
                    }
                }
                Err(Error::arg(format!("no convergence within {MAX_SWEEPS} sweeps")))
            }
        }
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `Σ T(s'|s,a) [c(s,a,s') + γ V(s')]`.
pub fn q_value(mdp: &Mdp, s: usize, a: usize, next_values: &[f64]) -> f64 {
    let gamma = mdp.gamma();
    mdp.outcomes(s, a)
        .iter()
        .map(|o| o.prob * (o.cost + gamma * next_values[o.next]))
        .sum()
}

/// Index of the smallest value; ties within [`TIE_EPS`] go to the lowest index.
pub(crate) fn argmin(values: impl IntoIterator<Item = f64>) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if best.0 == usize::MAX || v < best.1 - TIE_EPS {
            best = (i, v);
        }
    }
    best
}

fn greedy(mdp: &Mdp, next_values: &[f64]) -> StationaryPolicy {
    let actions: Vec<usize> = (0..mdp.num_states())
        .map(|s| argmin((0..mdp.num_actions()).map(|a| q_value(mdp, s, a, next_values))).0)
        .collect();
    StationaryPolicy::deterministic(&actions, mdp.num_actions())
}

/// Optimal expected-cost values and a greedy policy.
#[derive(Debug, Clone)]
pub struct ValueSolution {
    pub stages: Stages,
    /// Greedy with respect to `stages`; stage-dependent for finite horizons.
    pub policy: MarkovPolicy,
}

impl ValueSolution {
    /// Values at the first decision of an episode.
    pub fn values(&self) -> &[f64] {
        self.stages.root()
    }
}

/// Expected-cost value iteration (backward induction for finite horizons).
///
/// Ties between actions go to the lowest action index.
pub fn value_iteration(mdp: &Mdp, tol: f64) -> Result<ValueSolution> {
    let stages = Stages::iterate(
        mdp.horizon(),
        tol,
        vec![0.0; mdp.num_states()],
        |v, _| {
            (0..mdp.num_states())
                .map(|s| {
                    (0..mdp.num_actions())
                        .map(|a| q_value(mdp, s, a, v))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect()
        },
        |a, b| max_abs_diff(a, b),
    )?;
    let policy = greedy_policy(mdp, &stages);
    Ok(ValueSolution { stages, policy })
}

fn greedy_policy(mdp: &Mdp, stages: &Stages) -> MarkovPolicy {
    if stages.is_finite() {
        MarkovPolicy::from_stages((1..=stages.horizon()).map(|k| greedy(mdp, stages.at(k - 1))).collect())
    } else {
        MarkovPolicy::stationary(greedy(mdp, stages.root()))
    }
}

/// Per-stage values of a fixed policy.
pub fn policy_evaluation_stages(mdp: &Mdp, policy: &impl PolicyView, tol: f64) -> Result<Stages> {
    Stages::iterate(
        mdp.horizon(),
        tol,
        vec![0.0; mdp.num_states()],
        |v, k| {
            (0..mdp.num_states())
                .map(|s| {
                    policy
                        .action_probs(s, k)
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| **p > 0.0)
                        .map(|(a, p)| p * q_value(mdp, s, a, v))
                        .sum()
                })
                .collect()
        },
        |a, b| max_abs_diff(a, b),
    )
}

/// Expected discounted cost of a fixed policy from each state.
pub fn policy_evaluation(mdp: &Mdp, policy: &impl PolicyView, tol: f64) -> Result<Vec<f64>> {
    Ok(policy_evaluation_stages(mdp, policy, tol)?.root().clone())
}

/// Minimax cost-to-go over transition supports, with its minimizing policy.
///
/// `W_k(s) = min_a max_{s': T>0} [c + γ W_{k-1}(s')]`. Finite horizon only.
pub fn worst_case_stages(mdp: &Mdp) -> Result<(Stages, MarkovPolicy)> {
    let Some(horizon) = mdp.horizon() else {
        return Err(Error::arg("worst-case cost requires a finite horizon"));
    };
    let worst_q = |s: usize, a: usize, w: &[f64]| {
        mdp.outcomes(s, a)
            .iter()
            .filter(|o| o.prob > 0.0)
            .map(|o| o.cost + mdp.gamma() * w[o.next])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let stages = Stages::iterate(
        Some(horizon),
        1.0,
        vec![0.0; mdp.num_states()],
        |w, _| {
            (0..mdp.num_states())
                .map(|s| (0..mdp.num_actions()).map(|a| worst_q(s, a, w)).fold(f64::INFINITY, f64::min))
                .collect()
        },
        |a, b| max_abs_diff(a, b),
    )?;
    let policy = MarkovPolicy::from_stages(
        (1..=horizon)
            .map(|k| {
                let w = stages.at(k - 1);
                let actions: Vec<usize> = (0..mdp.num_states())
                    .map(|s| argmin((0..mdp.num_actions()).map(|a| worst_q(s, a, w))).0)
                    .collect();
                StationaryPolicy::deterministic(&actions, mdp.num_actions())
            })
            .collect(),
    );
    Ok((stages, policy))
}

/// Smallest cost that some policy guarantees not to exceed from `start`.
pub fn worst_case_cost(mdp: &Mdp, start: usize) -> Result<f64> {
    Ok(worst_case_stages(mdp)?.0.root()[start])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MdpBuilder;

    fn four_leaf() -> Mdp {
        // s0 -> {sA, sB}; sA -> {AA=4, AB=2}; sB -> {BA=2, BB=0}
        MdpBuilder::new(7, 1)
            .horizon(Some(2))
            .terminal(3)
            .terminal(4)
            .terminal(5)
            .terminal(6)
            .outcome(0, 0, 1, 0.5, 0.0)
            .outcome(0, 0, 2, 0.5, 0.0)
            .outcome(1, 0, 3, 0.5, 4.0)
            .outcome(1, 0, 4, 0.5, 2.0)
            .outcome(2, 0, 5, 0.5, 2.0)
            .outcome(2, 0, 6, 0.5, 0.0)
            .build()
            .unwrap()
    }

    #[test]
    fn absorbing_state_has_zero_value() {
        let mdp = MdpBuilder::new(1, 1).gamma(0.9).outcome(0, 0, 0, 1.0, 0.0).build().unwrap();
        assert_eq!(value_iteration(&mdp, 1e-9).unwrap().values(), &[0.0]);
    }

    #[test]
    fn geometric_self_loop() {
        let mdp = MdpBuilder::new(1, 1).gamma(0.5).outcome(0, 0, 0, 1.0, 1.0).build().unwrap();
        let sol = value_iteration(&mdp, 1e-10).unwrap();
        assert!((sol.values()[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn four_leaf_chain_expected_cost() {
        let mdp = four_leaf();
        let sol = value_iteration(&mdp, 1e-9).unwrap();
        assert!((sol.values()[0] - 2.0).abs() < 1e-12);
        let v = policy_evaluation(&mdp, &sol.policy, 1e-9).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12);
        assert_eq!(worst_case_cost(&mdp, 0).unwrap(), 4.0);
    }

    #[test]
    fn uniform_policy_averages() {
        let mdp = MdpBuilder::new(2, 2)
            .horizon(Some(1))
            .terminal(1)
            .outcome(0, 0, 1, 1.0, 0.0)
            .outcome(0, 1, 1, 1.0, 2.0)
            .build()
            .unwrap();
        let v = policy_evaluation(&mdp, &StationaryPolicy::uniform(2, 2), 1e-9).unwrap();
        assert_eq!(v[0], 1.0);
    }

    #[test]
    fn worst_case_prefers_certain_action() {
        // a0: det cost 2; a1: 0 w.p. .9, 3 w.p. .1
        let mdp = MdpBuilder::new(3, 2)
            .horizon(Some(1))
            .terminal(1)
            .terminal(2)
            .outcome(0, 0, 1, 1.0, 2.0)
            .outcome(0, 1, 1, 0.9, 0.0)
            .outcome(0, 1, 2, 0.1, 3.0)
            .build()
            .unwrap();
        assert_eq!(worst_case_cost(&mdp, 0).unwrap(), 2.0);
        let (_, policy) = worst_case_stages(&mdp).unwrap();
        assert_eq!(policy.root().action(0), Some(0));
    }

    #[test]
    fn ties_go_to_lowest_action() {
        let mdp = MdpBuilder::new(2, 3)
            .horizon(Some(1))
            .terminal(1)
            .outcome(0, 0, 1, 1.0, 1.0)
            .outcome(0, 1, 1, 1.0, 0.5)
            .outcome(0, 2, 1, 1.0, 0.5)
            .build()
            .unwrap();
        let sol = value_iteration(&mdp, 1e-9).unwrap();
        assert_eq!(sol.policy.root().action(0), Some(1));
    }

    #[test]
    fn sweeps_contract_by_gamma() {
        let mdp = MdpBuilder::new(2, 2)
            .gamma(0.8)
            .outcome(0, 0, 0, 0.5, 1.0)
            .outcome(0, 0, 1, 0.5, 3.0)
            .outcome(0, 1, 1, 1.0, 2.0)
            .outcome(1, 0, 0, 1.0, 1.0)
            .outcome(1, 1, 1, 1.0, 0.5)
            .build()
            .unwrap();
        let backup = |v: &[f64]| -> Vec<f64> {
            (0..2)
                .map(|s| (0..2).map(|a| q_value(&mdp, s, a, v)).fold(f64::INFINITY, f64::min))
                .collect()
        };
        let mut prev = vec![0.0, 0.0];
        let mut cur = backup(&prev);
        for _ in 0..30 {
            let next = backup(&cur);
            assert!(max_abs_diff(&next, &cur) <= 0.8 * max_abs_diff(&cur, &prev) + 1e-15);
            prev = cur;
            cur = next;
        }
    }
}

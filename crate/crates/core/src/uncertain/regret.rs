use serde::{Deserialize, Serialize};

use crate::mdp::{policy_evaluation, q_value, value_iteration, PolicyView, Stages};
use crate::Result;

use super::model::SampleUncertainMdp;

/// Per-sample advantage `A_i(s, a) = Q*_i(s, a) - V*_i(s)`, stage-dependent
/// under a finite horizon. Indexed `[s][a][i]` inside each stage table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCostTable {
    pub stages: Stages<Vec<Vec<Vec<f64>>>>,
    /// Optimal root values `V*_i` per sample, indexed `[i][s]`.
    pub optimal_values: Vec<Vec<f64>>,
}

impl RegretCostTable {
    pub fn cost(&self, steps_to_go: usize, s: usize, a: usize, i: usize) -> f64 {
        self.stages.at(steps_to_go)[s][a][i]
    }

    /// Costs of `(s, a)` across samples at a stage.
    pub fn column(&self, steps_to_go: usize, s: usize, a: usize) -> &[f64] {
        &self.stages.at(steps_to_go)[s][a]
    }
}

/// Builds the regret-cost table from each sample's optimal values.
pub fn regret_cost(u: &SampleUncertainMdp, tol: f64) -> Result<RegretCostTable> {
    let h = u.header();
    let (ns, na, n) = (h.num_states(), h.num_actions(), u.num_samples());
    let solutions = u.samples().iter().map(|m| value_iteration(m, tol)).collect::<Result<Vec<_>>>()?;
    let table_at = |k: usize| -> Vec<Vec<Vec<f64>>> {
        (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| {
                        (0..n)
                            .map(|i| {
                                let st = &solutions[i].stages;
                                let (next, here) = if st.is_finite() { (st.at(k - 1), st.at(k)) } else { (st.root(), st.root()) };
                                (q_value(&u.samples()[i], s, a, next) - here[s]).max(0.0)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    };
    let stages = match h.horizon() {
        Some(horizon) => {
            let mut tables = vec![vec![vec![vec![0.0; n]; na]; ns]];
            tables.extend((1..=horizon).map(table_at));
            Stages::from_parts(true, tables)
        }
        None => Stages::from_parts(false, vec![table_at(1)]),
    };
    let optimal_values = solutions.iter().map(|s| s.values().to_vec()).collect();
    Ok(RegretCostTable { stages, optimal_values })
}

/// True regret of a policy in each sample, from the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretEvaluation {
    pub per_sample: Vec<f64>,
    pub max: f64,
}

impl RegretEvaluation {
    pub(crate) fn from_costs(policy_values: &[f64], optimal: &[f64]) -> Self {
        let per_sample: Vec<f64> = policy_values.iter().zip(optimal).map(|(v, o)| v - o).collect();
        let max = per_sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        RegretEvaluation { per_sample, max }
    }
}

/// `max_i [V^π_i(s0) - V*_i(s0)]`, computed from scratch per sample.
pub fn evaluate_regret(u: &SampleUncertainMdp, policy: &impl PolicyView, tol: f64) -> Result<RegretEvaluation> {
    let s0 = u.header().initial_state();
    let mut values = Vec::new();
    let mut optimal = Vec::new();
    for m in u.samples() {
        values.push(policy_evaluation(m, policy, tol)?[s0]);
        optimal.push(value_iteration(m, tol)?.values()[s0]);
    }
    Ok(RegretEvaluation::from_costs(&values, &optimal))
}

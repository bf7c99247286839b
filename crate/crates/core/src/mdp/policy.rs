use serde::{Deserialize, Serialize};

use crate::{Error, Result, PROB_EPS};

/// Read access to a (possibly stage-dependent) Markov policy.
pub trait PolicyView {
    /// Action distribution at state `s` with `steps_to_go` decisions left.
    fn action_probs(&self, s: usize, steps_to_go: usize) -> &[f64];
}

/// State → distribution over actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPolicy {
    rows: Vec<Vec<f64>>,
}

impl StationaryPolicy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != width || width == 0 {
                return Err(Error::arg(format!("policy row {s} has wrong width")));
            }
            if row.iter().any(|p| !(0.0..=1.0 + PROB_EPS).contains(p)) {
                return Err(Error::arg(format!("policy row {s} has a probability outside [0, 1]")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > PROB_EPS {
                return Err(Error::arg(format!("policy row {s} sums to {total}")));
            }
        }
        Ok(StationaryPolicy { rows })
    }

    pub fn deterministic(actions: &[usize], num_actions: usize) -> Self {
        let rows = actions
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; num_actions];
                row[a] = 1.0;
                row
            })
            .collect();
        StationaryPolicy { rows }
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        StationaryPolicy {
            rows: vec![vec![1.0 / num_actions as f64; num_actions]; num_states],
        }
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.rows[s]
    }

    /// The single action at `s` if the row is deterministic.
    pub fn action(&self, s: usize) -> Option<usize> {
        let row = &self.rows[s];
        let a = row.iter().position(|&p| p > 0.0)?;
        (row[a] >= 1.0 - PROB_EPS).then_some(a)
    }

    /// Most probable action at `s`, lowest index on ties.
    pub fn mode(&self, s: usize) -> usize {
        let row = &self.rows[s];
        let mut best = 0;
        for a in 1..row.len() {
            if row[a] > row[best] + crate::TIE_EPS {
                best = a;
            }
        }
        best
    }
}

impl PolicyView for StationaryPolicy {
    fn action_probs(&self, s: usize, _steps_to_go: usize) -> &[f64] {
        &self.rows[s]
    }
}

/// One [`StationaryPolicy`] per stage.
///
/// Finite-horizon solvers produce `stages[k - 1]` for `k` steps to go; the
/// infinite-horizon case stores a single stage used at every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovPolicy {
    stages: Vec<StationaryPolicy>,
}

impl MarkovPolicy {
    pub fn stationary(policy: StationaryPolicy) -> Self {
        MarkovPolicy { stages: vec![policy] }
    }

    /// `stages[k - 1]` is used with `k` steps to go.
    pub fn from_stages(stages: Vec<StationaryPolicy>) -> Self {
        assert!(!stages.is_empty(), "a Markov policy needs at least one stage");
        MarkovPolicy { stages }
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, steps_to_go: usize) -> &StationaryPolicy {
        let k = steps_to_go.clamp(1, self.stages.len());
        &self.stages[k - 1]
    }

    /// Policy for the first decision of an episode.
    pub fn root(&self) -> &StationaryPolicy {
        self.stages.last().expect("nonempty")
    }
}

impl PolicyView for MarkovPolicy {
    fn action_probs(&self, s: usize, steps_to_go: usize) -> &[f64] {
        self.stage(steps_to_go).row(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_must_be_distributions() {
        assert!(StationaryPolicy::new(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).is_ok());
        assert!(StationaryPolicy::new(vec![vec![0.5, 0.4]]).is_err());
        assert!(StationaryPolicy::new(vec![vec![1.5, -0.5]]).is_err());
    }

    #[test]
    fn markov_stage_lookup() {
        let a = StationaryPolicy::deterministic(&[0], 2);
        let b = StationaryPolicy::deterministic(&[1], 2);
        let p = MarkovPolicy::from_stages(vec![a, b]);
        assert_eq!(p.action_probs(0, 1), &[1.0, 0.0]);
        assert_eq!(p.action_probs(0, 2), &[0.0, 1.0]);
        assert_eq!(p.root().action(0), Some(1));
    }
}

use serde::{Deserialize, Serialize};

use crate::mdp::{policy_evaluation, value_iteration, StationaryPolicy};
use crate::{Error, Result, TIE_EPS};

use super::model::SampleUncertainMdp;

/// Default limit on enumerated policies.
pub const DEFAULT_POLICY_CAP: u128 = 100_000;

/// Stationary policy families searched by [`exact_minimax_regret`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyClass {
    Deterministic,
    /// Action probabilities restricted to multiples of `step`.
    GridStochastic { step: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactRegret {
    pub value: f64,
    pub policy: StationaryPolicy,
    pub per_sample: Vec<f64>,
    pub policies_checked: u128,
}

/// Probability rows over `num_actions` with entries in multiples of `1/units`.
fn grid_rows(num_actions: usize, units: usize) -> Vec<Vec<f64>> {
    fn fill(prefix: &mut Vec<usize>, left: usize, slots: usize, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for take in (0..=left).rev() {
            prefix.push(take);
            fill(prefix, left - take, slots - 1, out);
            prefix.pop();
        }
    }
    let mut counts = Vec::new();
    fill(&mut Vec::new(), units, num_actions, &mut counts);
    counts.into_iter().map(|c| c.into_iter().map(|x| x as f64 / units as f64).collect()).collect()
}

/// Minimax regret over an enumerated class of stationary policies, each
/// evaluated from scratch in every sample. Terminal states are fixed to
/// action 0. Ties keep the first policy in enumeration order.
pub fn exact_minimax_regret(u: &SampleUncertainMdp, class: PolicyClass, tol: f64, cap: u128) -> Result<ExactRegret> {
    let h = u.header();
    let na = h.num_actions();
    let choices: Vec<Vec<f64>> = match class {
        PolicyClass::Deterministic => (0..na)
            .map(|a| {
                let mut r = vec![0.0; na];
                r[a] = 1.0;
                r
            })
            .collect(),
        PolicyClass::GridStochastic { step } => {
            let units = (1.0 / step).round();
            if !(step > 0.0 && step <= 1.0) || ((1.0 / step) - units).abs() > 1e-9 {
                return Err(Error::arg(format!("grid step must divide 1, got {step}")));
            }
            grid_rows(na, units as usize)
        }
    };
    let free: Vec<usize> = (0..h.num_states()).filter(|&s| !h.is_terminal(s)).collect();
    let total = (choices.len() as u128).checked_pow(free.len() as u32);
    match total {
        Some(t) if t <= cap => {}
        _ => {
            return Err(Error::CapExceeded {
                what: "stationary policy",
                count: total.unwrap_or(u128::MAX),
                cap,
            })
        }
    }
    let s0 = h.initial_state();
    let optimal = u.samples().iter().map(|m| Ok(value_iteration(m, tol)?.values()[s0])).collect::<Result<Vec<_>>>()?;
    let mut fixed = vec![0.0; na];
    fixed[0] = 1.0;
    let mut pick = vec![0usize; free.len()];
    let mut best: Option<ExactRegret> = None;
    let mut checked = 0u128;
    loop {
        let mut rows = vec![fixed.clone(); h.num_states()];
        for (j, &s) in free.iter().enumerate() {
            rows[s] = choices[pick[j]].clone();
        }
        let policy = StationaryPolicy::new(rows)?;
        let per_sample = u
            .samples()
            .iter()
            .zip(&optimal)
            .map(|(m, o)| Ok(policy_evaluation(m, &policy, tol)?[s0] - o))
            .collect::<Result<Vec<f64>>>()?;
        let value = per_sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        checked += 1;
        if best.as_ref().is_none_or(|b| value < b.value - TIE_EPS) {
            best = Some(ExactRegret { value, policy, per_sample, policies_checked: 0 });
        }
        let mut j = free.len();
        loop {
            if j == 0 {
                let mut b = best.expect("at least one policy");
                b.policies_checked = checked;
                return Ok(b);
            }
            j -= 1;
            pick[j] += 1;
            if pick[j] < choices.len() {
                break;
            }
            pick[j] = 0;
        }
    }
}

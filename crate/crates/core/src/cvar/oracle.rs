//! Brute-force static-CVaR oracle over deterministic history-dependent
//! policies.
//!
//! The set of return distributions reachable from `(s, k)` does not depend on
//! the history that led there, so it is built bottom-up: at each `(s, k)` an
//! action is chosen and every successor independently picks any of its own
//! reachable continuations.

use std::collections::HashMap;

use crate::mdp::{CostDistribution, Mdp};
use crate::risk::cvar;
use crate::{Error, Result, TIE_EPS};

pub const DEFAULT_POLICY_CAP: usize = 100_000;

/// Every return distribution achievable by a deterministic history-dependent
/// policy from the initial state, tagged with its first action.
pub fn achievable_distributions(mdp: &Mdp, cap: usize) -> Result<Vec<(usize, CostDistribution)>> {
    let horizon = mdp.horizon().ok_or_else(|| Error::arg("policy enumeration needs a finite horizon"))?;
    let mut memo: HashMap<(usize, usize), Vec<(usize, CostDistribution)>> = HashMap::new();
    reach(mdp, mdp.initial_state(), horizon, cap, &mut memo)
}

fn reach(
    mdp: &Mdp,
    s: usize,
    k: usize,
    cap: usize,
    memo: &mut HashMap<(usize, usize), Vec<(usize, CostDistribution)>>,
) -> Result<Vec<(usize, CostDistribution)>> {
    if k == 0 || mdp.is_terminal(s) {
        return Ok(vec![(0, CostDistribution::point(0.0))]);
    }
    if let Some(hit) = memo.get(&(s, k)) {
        return Ok(hit.clone());
    }
    let gamma = mdp.gamma();
    let mut result = Vec::new();
    for a in 0..mdp.num_actions() {
        let outcomes: Vec<_> = mdp.outcomes(s, a).iter().filter(|o| o.prob > 0.0).copied().collect();
        let mut options = Vec::with_capacity(outcomes.len());
        let mut count: u128 = 1;
        for o in &outcomes {
            let sub = reach(mdp, o.next, k - 1, cap, memo)?;
            count = count.saturating_mul(sub.len() as u128);
            options.push(sub);
        }
        if result.len() as u128 + count > cap as u128 {
            return Err(Error::CapExceeded { what: "history-dependent policy", count: result.len() as u128 + count, cap: cap as u128 });
        }
        // odometer over successor choices
        let mut idx = vec![0usize; outcomes.len()];
        loop {
            let atoms = outcomes.iter().zip(&idx).zip(&options).flat_map(|((o, &i), opts)| {
                opts[i].1.atoms().iter().map(move |&(z, p)| (o.cost + gamma * z, o.prob * p))
            });
            result.push((a, CostDistribution::from_atoms(atoms)?));
            let mut pos = 0;
            while pos < idx.len() {
                idx[pos] += 1;
                if idx[pos] < options[pos].len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == idx.len() {
                break;
            }
        }
    }
    memo.insert((s, k), result.clone());
    Ok(result)
}

/// Optimal static CVaR over deterministic history-dependent policies and the
/// first action of a minimizer (lowest index on ties).
pub fn exact_static_cvar(mdp: &Mdp, alpha: f64, cap: usize) -> Result<(f64, usize)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg(format!("alpha {alpha} outside (0, 1]")));
    }
    let mut best = (f64::INFINITY, 0);
    for (a, dist) in achievable_distributions(mdp, cap)? {
        let v = cvar(&dist, alpha);
        if v < best.0 - TIE_EPS {
            best = (v, a);
        }
    }
    Ok(best)
}

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cvar::oracle::achievable_distributions;
use crate::mdp::{Mdp, MdpBuilder};
use crate::risk::cvar;
use crate::{Error, Result, TIE_EPS};

use super::belief::{BamdpProblem, DirichletBelief};

/// Default limit on distinct hyper-states when unrolling.
pub const DEFAULT_HYPERSTATE_CAP: usize = 100_000;

type HyperKey = (usize, Vec<((usize, usize), u32)>);

/// The reachable hyper-state MDP of a BAMDP over its horizon.
///
/// State `i` of `mdp` is the pair `states[i]`; transitions use posterior
/// means. Hyper-states with no steps left are terminal.
#[derive(Debug, Clone)]
pub struct Unrolled {
    pub mdp: Mdp,
    pub states: Vec<(usize, DirichletBelief)>,
}

pub fn unroll(problem: &BamdpProblem, cap: usize) -> Result<Unrolled> {
    let na = problem.belief.num_actions();
    let key = |s: usize, b: &DirichletBelief| -> HyperKey {
        if problem.is_terminal(s) {
            (s, Vec::new())
        } else {
            (s, b.observed().map(|(k, v)| (*k, *v)).collect())
        }
    };
    let mut index: HashMap<HyperKey, usize> = HashMap::new();
    let mut states: Vec<(usize, DirichletBelief)> = Vec::new();
    let mut edges: Vec<(usize, usize, usize, f64, f64)> = Vec::new();
    let root = (problem.initial_state, problem.belief.clone());
    index.insert(key(root.0, &root.1), 0);
    states.push(root);
    let mut frontier = vec![0usize];
    for _depth in 0..problem.horizon {
        let mut next_frontier = Vec::new();
        for &i in &frontier {
            let (s, belief) = states[i].clone();
            if problem.is_terminal(s) {
                continue;
            }
            for a in 0..na {
                for o in belief.predictive(s, a) {
                    let b2 = belief.updated(s, a, o.next)?;
                    let k = key(o.next, &b2);
                    let j = match index.get(&k) {
                        Some(&j) => j,
                        None => {
                            if states.len() >= cap {
                                return Err(Error::CapExceeded { what: "hyper-state", count: states.len() as u128 + 1, cap: cap as u128 });
                            }
                            let j = states.len();
                            index.insert(k, j);
                            states.push((o.next, b2));
                            next_frontier.push(j);
                            j
                        }
                    };
                    edges.push((i, a, j, o.prob, o.cost));
                }
            }
        }
        frontier = next_frontier;
    }
    let mut builder = MdpBuilder::new(states.len(), na)
        .gamma(problem.gamma)
        .horizon(Some(problem.horizon))
        .initial_state(0);
    let expanded: Vec<bool> = {
        let mut e = vec![false; states.len()];
        for &(i, ..) in &edges {
            e[i] = true;
        }
        e
    };
    for (i, done) in expanded.iter().enumerate() {
        if !done {
            builder = builder.terminal(i);
        }
    }
    for (i, a, j, p, c) in edges {
        builder.add(i, a, j, p, c);
    }
    Ok(Unrolled { mdp: builder.build()?, states })
}

/// Exact static CVaR of a BAMDP by enumerating deterministic
/// history-dependent policies on the unrolled hyper-state tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BamdpExact {
    pub value: f64,
    /// Lowest-index optimal first action.
    pub action: usize,
    /// All first actions within `TIE_EPS` of the optimum.
    pub tied_actions: Vec<usize>,
    /// Best value for each first action.
    pub per_action: Vec<f64>,
    pub hyperstates: usize,
}

pub fn exact_bamdp_cvar(problem: &BamdpProblem, alpha: f64, cap: usize) -> Result<BamdpExact> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg(format!("alpha {alpha} outside (0, 1]")));
    }
    let unrolled = unroll(problem, cap)?;
    let na = problem.belief.num_actions();
    let mut per_action = vec![f64::INFINITY; na];
    if problem.is_terminal(problem.initial_state) {
        per_action = vec![0.0; na];
    } else {
        for (a, dist) in achievable_distributions(&unrolled.mdp, cap)? {
            per_action[a] = per_action[a].min(cvar(&dist, alpha));
        }
    }
    let value = per_action.iter().copied().fold(f64::INFINITY, f64::min);
    let tied_actions: Vec<usize> = (0..na).filter(|&a| per_action[a] <= value + TIE_EPS).collect();
    Ok(BamdpExact { value, action: tied_actions[0], tied_actions, per_action, hyperstates: unrolled.states.len() })
}

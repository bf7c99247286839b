use serde::{Deserialize, Serialize};

use crate::mdp::solve::{argmin, max_abs_diff};
use crate::mdp::{value_iteration, Mdp, Stages, MAX_SWEEPS};
use crate::{Error, Result};

use super::model::SampleUncertainMdp;
use super::regret::{regret_cost, RegretCostTable, RegretEvaluation};

/// Limit on contingency plans enumerated from one state.
pub const DEFAULT_PLAN_CAP: usize = 100_000;

/// A deterministic contingency plan: an action, then a sub-plan for every
/// non-terminal successor reached before the option ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub action: usize,
    pub children: Vec<(usize, PlanNode)>,
}

impl PlanNode {
    fn child(&self, next: usize) -> Option<&PlanNode> {
        self.children.iter().find(|(s, _)| *s == next).map(|(_, p)| p)
    }
}

/// Policy that commits to an `n`-step plan at each option boundary.
///
/// `plans.at(k)[s]` is the plan started in `s` with `k` steps to go; it runs
/// for `min(n, k)` steps. Terminal states carry no plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionPolicy {
    pub n: usize,
    pub plans: Stages<Vec<Option<PlanNode>>>,
}

impl OptionPolicy {
    fn length(&self, steps_to_go: usize) -> usize {
        if self.plans.is_finite() {
            self.n.min(steps_to_go)
        } else {
            self.n
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptionRegretSolution {
    pub stages: Stages,
    pub policy: OptionPolicy,
    pub regret: RegretCostTable,
}

impl OptionRegretSolution {
    pub fn values(&self) -> &[f64] {
        self.stages.root()
    }

    pub fn root_value(&self, u: &SampleUncertainMdp) -> f64 {
        self.values()[u.header().initial_state()]
    }
}

struct Candidate {
    node: Option<PlanNode>,
    /// Regret cost per sample, boundary values included.
    value: Vec<f64>,
}

struct Enumerator<'a> {
    u: &'a SampleUncertainMdp,
    regret: &'a RegretCostTable,
    cap: usize,
}

impl Enumerator<'_> {
    fn successors(&self, s: usize, a: usize) -> Vec<usize> {
        let mut next: Vec<usize> = self
            .u
            .samples()
            .iter()
            .flat_map(|m| m.outcomes(s, a).iter().filter(|o| o.prob > 0.0).map(|o| o.next))
            .collect();
        next.sort_unstable();
        next.dedup();
        next
    }

    /// Plans from `s` with `remaining` option steps left and `k` steps to go
    /// in the episode; `boundary` holds the values where the option ends.
    fn plans(&self, s: usize, remaining: usize, k: usize, boundary: &[f64]) -> Result<Vec<Candidate>> {
        let h = self.u.header();
        let n = self.u.num_samples();
        if h.is_terminal(s) {
            return Ok(vec![Candidate { node: None, value: vec![0.0; n] }]);
        }
        if remaining == 0 {
            return Ok(vec![Candidate { node: None, value: vec![boundary[s]; n] }]);
        }
        let gamma = h.gamma();
        let mut out = Vec::new();
        for a in 0..h.num_actions() {
            let next = self.successors(s, a);
            let subplans = next
                .iter()
                .map(|&sp| self.plans(sp, remaining - 1, k.saturating_sub(1), boundary))
                .collect::<Result<Vec<_>>>()?;
            let combos = subplans.iter().try_fold(1usize, |acc, c| acc.checked_mul(c.len()));
            match combos {
                Some(c) if out.len() + c <= self.cap => {}
                _ => {
                    return Err(Error::CapExceeded {
                        what: "contingency plan",
                        count: subplans.iter().map(|c| c.len() as u128).product::<u128>() + out.len() as u128,
                        cap: self.cap as u128,
                    })
                }
            }
            let mut pick = vec![0usize; next.len()];
            loop {
                let value = (0..n)
                    .map(|i| {
                        let future: f64 = self.u.samples()[i]
                            .outcomes(s, a)
                            .iter()
                            .map(|o| {
                                let j = next.binary_search(&o.next).expect("successor in union");
                                o.prob * subplans[j][pick[j]].value[i]
                            })
                            .sum();
                        self.regret.cost(k, s, a, i) + gamma * future
                    })
                    .collect();
                let children = next
                    .iter()
                    .enumerate()
                    .filter_map(|(j, &sp)| subplans[j][pick[j]].node.clone().map(|p| (sp, p)))
                    .collect();
                out.push(Candidate { node: Some(PlanNode { action: a, children }), value });
                if !advance(&mut pick, &subplans) {
                    break;
                }
            }
        }
        Ok(out)
    }

    fn best(&self, s: usize, m: usize, k: usize, boundary: &[f64]) -> Result<(Option<PlanNode>, f64)> {
        let mut candidates = self.plans(s, m, k, boundary)?;
        let worst = |c: &Candidate| c.value.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (i, v) = argmin(candidates.iter().map(worst));
        Ok((candidates.swap_remove(i).node, v))
    }
}

/// Odometer step over the cartesian product; false once it wraps.
fn advance<T>(pick: &mut [usize], lists: &[Vec<T>]) -> bool {
    for j in (0..pick.len()).rev() {
        pick[j] += 1;
        if pick[j] < lists[j].len() {
            return true;
        }
        pick[j] = 0;
    }
    false
}

/// Minimax regret over `n`-step contingency plans: the adversary commits to
/// one sample for the duration of each option. `n = 1` reduces to the
/// deterministic rectangular approximation.
pub fn solve_minimax_regret_options(u: &SampleUncertainMdp, n: usize, tol: f64, cap: usize) -> Result<OptionRegretSolution> {
    if n == 0 {
        return Err(Error::arg("option length must be at least 1"));
    }
    let regret = regret_cost(u, tol)?;
    let h = u.header();
    let ns = h.num_states();
    let e = Enumerator { u, regret: &regret, cap };
    let solve_stage = |k: usize, m: usize, boundary: &[f64]| -> Result<(Vec<Option<PlanNode>>, Vec<f64>)> {
        let mut plans = Vec::with_capacity(ns);
        let mut values = Vec::with_capacity(ns);
        for s in 0..ns {
            let (p, v) = e.best(s, m, k, boundary)?;
            plans.push(p);
            values.push(v);
        }
        Ok((plans, values))
    };
    let (stages, plans) = match h.horizon() {
        Some(horizon) => {
            let mut values = vec![vec![0.0; ns]];
            let mut plans = vec![vec![None; ns]];
            for k in 1..=horizon {
                let m = n.min(k);
                let (p, v) = solve_stage(k, m, &values[k - m])?;
                plans.push(p);
                values.push(v);
            }
            (Stages::from_parts(true, values), Stages::from_parts(true, plans))
        }
        None => {
            if !(tol > 0.0) {
                return Err(Error::arg(format!("tolerance must be positive, got {tol}")));
            }
            let mut w = vec![0.0; ns];
            let mut result = None;
            for _ in 0..MAX_SWEEPS {
                let (p, next) = solve_stage(1, n, &w)?;
                let done = max_abs_diff(&next, &w) <= tol;
                w = next;
                if done {
                    result = Some(p);
                    break;
                }
            }
            let Some(p) = result else {
                return Err(Error::arg(format!("no convergence within {MAX_SWEEPS} sweeps")));
            };
            (Stages::from_parts(false, vec![w]), Stages::from_parts(false, vec![p]))
        }
    };
    Ok(OptionRegretSolution { stages, policy: OptionPolicy { n, plans }, regret })
}

/// Expected true cost of following `plan` from `s` for `remaining` steps,
/// then `boundary`.
fn plan_cost(m: &Mdp, plan: Option<&PlanNode>, s: usize, remaining: usize, boundary: &[f64]) -> f64 {
    if m.is_terminal(s) {
        return 0.0;
    }
    if remaining == 0 {
        return boundary[s];
    }
    let plan = plan.expect("non-terminal state inside an option has a plan");
    m.outcomes(s, plan.action)
        .iter()
        .map(|o| o.prob * (o.cost + m.gamma() * plan_cost(m, plan.child(o.next), o.next, remaining - 1, boundary)))
        .sum()
}

/// Expected cost of an option policy in one MDP, from every state.
pub fn option_policy_evaluation(m: &Mdp, policy: &OptionPolicy, tol: f64) -> Result<Vec<f64>> {
    let ns = m.num_states();
    let stage = |k: usize, len: usize, boundary: &[f64]| -> Vec<f64> {
        (0..ns).map(|s| plan_cost(m, policy.plans.at(k)[s].as_ref(), s, len, boundary)).collect()
    };
    match m.horizon() {
        Some(horizon) => {
            let mut values = vec![vec![0.0; ns]];
            for k in 1..=horizon {
                let len = policy.length(k);
                let next = stage(k, len, &values[k - len]);
                values.push(next);
            }
            Ok(values.pop().expect("nonempty"))
        }
        None => {
            let mut v = vec![0.0; ns];
            for _ in 0..MAX_SWEEPS {
                let next = stage(1, policy.n, &v);
                let done = max_abs_diff(&next, &v) <= tol;
                v = next;
                if done {
                    return Ok(v);
                }
            }
            Err(Error::arg(format!("no convergence within {MAX_SWEEPS} sweeps")))
        }
    }
}

/// Regret cost of following `plan` in sample `i` for `remaining` steps, then
/// `boundary`.
#[allow(clippy::too_many_arguments)]
fn plan_regret(
    u: &SampleUncertainMdp,
    regret: &RegretCostTable,
    i: usize,
    plan: Option<&PlanNode>,
    s: usize,
    remaining: usize,
    k: usize,
    boundary: &[f64],
) -> f64 {
    let m = &u.samples()[i];
    if m.is_terminal(s) {
        return 0.0;
    }
    if remaining == 0 {
        return boundary[s];
    }
    let plan = plan.expect("non-terminal state inside an option has a plan");
    let future: f64 = m
        .outcomes(s, plan.action)
        .iter()
        .map(|o| o.prob * plan_regret(u, regret, i, plan.child(o.next), o.next, remaining - 1, k.saturating_sub(1), boundary))
        .sum();
    regret.cost(k, s, plan.action, i) + m.gamma() * future
}

/// Value of a fixed option policy in the option regret game, where the
/// adversary picks the worst sample for each option. Reproduces the values
/// of [`solve_minimax_regret_options`] for its own policy.
pub fn option_regret_game_evaluation(u: &SampleUncertainMdp, policy: &OptionPolicy, tol: f64) -> Result<Vec<f64>> {
    let regret = regret_cost(u, tol)?;
    let ns = u.header().num_states();
    let stage = |k: usize, len: usize, boundary: &[f64]| -> Vec<f64> {
        (0..ns)
            .map(|s| {
                (0..u.num_samples())
                    .map(|i| plan_regret(u, &regret, i, policy.plans.at(k)[s].as_ref(), s, len, k, boundary))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    };
    match u.header().horizon() {
        Some(horizon) => {
            let mut values = vec![vec![0.0; ns]];
            for k in 1..=horizon {
                let len = policy.length(k);
                let next = stage(k, len, &values[k - len]);
                values.push(next);
            }
            Ok(values.pop().expect("nonempty"))
        }
        None => {
            let mut v = vec![0.0; ns];
            for _ in 0..MAX_SWEEPS {
                let next = stage(1, policy.n, &v);
                let done = max_abs_diff(&next, &v) <= tol;
                v = next;
                if done {
                    return Ok(v);
                }
            }
            Err(Error::arg(format!("no convergence within {MAX_SWEEPS} sweeps")))
        }
    }
}

/// True per-sample regret of an option policy from the initial state.
pub fn evaluate_option_regret(u: &SampleUncertainMdp, policy: &OptionPolicy, tol: f64) -> Result<RegretEvaluation> {
    let s0 = u.header().initial_state();
    let mut values = Vec::new();
    let mut optimal = Vec::new();
    for m in u.samples() {
        values.push(option_policy_evaluation(m, policy, tol)?[s0]);
        optimal.push(value_iteration(m, tol)?.values()[s0]);
    }
    Ok(RegretEvaluation::from_costs(&values, &optimal))
}

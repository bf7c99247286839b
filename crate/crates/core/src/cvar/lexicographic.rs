//! Best expected cost subject to optimal static CVaR.
//!
//! The base policy is CVaR-optimal. While executing it, every step checks
//! whether some continuation is *guaranteed* to keep the episode's total cost
//! at or below the base policy's VaR. The first time one exists, execution
//! switches to the expected-cost-optimal continuation among those, and keeps
//! it to the end. Only outcomes at or below the VaR change, so the tail (and
//! the CVaR) is untouched.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::grid::YGrid;
use super::static_cvar::{solve_static_cvar, AugmentedPolicy};
use crate::mdp::{worst_case_stages, CostDistribution, Mdp, Stages};
use crate::risk::{cvar, var};
use crate::{Error, Result, TIE_EPS};

/// Slack on the worst-case budget comparison.
pub const FEASIBILITY_EPS: f64 = 1e-9;

/// One post-switch decision: at `state` with `steps_to_go` left and
/// `budget` of undiscounted-from-here cost remaining, take `action`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchEntry {
    pub state: usize,
    pub steps_to_go: usize,
    pub budget: f64,
    pub action: usize,
}

/// Expected-cost DP over `(state, steps to go, remaining budget)`, restricted
/// to actions whose every positive-probability continuation can still be
/// held within budget.
pub struct ConstrainedEv<'a> {
    mdp: &'a Mdp,
    worst: Stages,
    memo: HashMap<(usize, usize, u64), Option<(f64, usize)>>,
}

impl<'a> ConstrainedEv<'a> {
    pub fn new(mdp: &'a Mdp) -> Result<Self> {
        let (worst, _) = worst_case_stages(mdp)?;
        Ok(ConstrainedEv { mdp, worst, memo: HashMap::new() })
    }

    /// Guaranteed-achievable worst-case cost from `(s, k)`.
    pub fn worst_case(&self, s: usize, k: usize) -> f64 {
        self.worst.at(k)[s]
    }

    fn action_feasible(&self, s: usize, a: usize, k: usize, budget: f64) -> bool {
        let gamma = self.mdp.gamma();
        self.mdp
            .outcomes(s, a)
            .iter()
            .filter(|o| o.prob > 0.0)
            .all(|o| o.cost + gamma * self.worst.at(k - 1)[o.next] <= budget + FEASIBILITY_EPS)
    }

    /// Minimum expected cost and its action, or `None` if infeasible.
    pub fn solve(&mut self, s: usize, k: usize, budget: f64) -> Option<(f64, usize)> {
        if k == 0 || self.mdp.is_terminal(s) {
            return (budget >= -FEASIBILITY_EPS).then_some((0.0, 0));
        }
        let key = (s, k, budget.to_bits());
        if let Some(&hit) = self.memo.get(&key) {
            return hit;
        }
        let mdp = self.mdp;
        let gamma = mdp.gamma();
        let mut best: Option<(f64, usize)> = None;
        for a in 0..mdp.num_actions() {
            if !self.action_feasible(s, a, k, budget) {
                continue;
            }
            let mut ev = 0.0;
            for o in mdp.outcomes(s, a).iter().filter(|o| o.prob > 0.0) {
                let (cont, _) = self
                    .solve(o.next, k - 1, (budget - o.cost) / gamma)
                    .expect("feasible action has feasible successors");
                ev += o.prob * (o.cost + gamma * cont);
            }
            if best.is_none_or(|(b, _)| ev < b - TIE_EPS) {
                best = Some((ev, a));
            }
        }
        self.memo.insert(key, best);
        best
    }

    /// Decisions reachable from `(s, k, budget)` under the constrained policy.
    pub fn fragment(&mut self, s: usize, k: usize, budget: f64) -> Vec<SwitchEntry> {
        let mut out = Vec::new();
        self.collect(s, k, budget, &mut out);
        out
    }

    fn collect(&mut self, s: usize, k: usize, budget: f64, out: &mut Vec<SwitchEntry>) {
        if k == 0 || self.mdp.is_terminal(s) {
            return;
        }
        let Some((_, action)) = self.solve(s, k, budget) else { return };
        let entry = SwitchEntry { state: s, steps_to_go: k, budget, action };
        if out.contains(&entry) {
            return;
        }
        out.push(entry);
        let gamma = self.mdp.gamma();
        for o in self.mdp.outcomes(s, action).iter().filter(|o| o.prob > 0.0) {
            self.collect(o.next, k - 1, (budget - o.cost) / gamma, out);
        }
    }
}

/// Result of [`constrained_ev_dp`].
#[derive(Debug, Clone)]
pub struct ConstrainedEvSolution {
    pub expected_cost: f64,
    /// The constrained policy on every reachable `(state, steps, budget)`.
    pub fragment: Vec<SwitchEntry>,
}

/// Minimum expected cost from `start` among continuations whose maximum
/// possible cost is at most `budget`. Finite horizon only.
pub fn constrained_ev_dp(mdp: &Mdp, start: usize, budget: f64) -> Result<ConstrainedEvSolution> {
    let horizon = mdp.horizon().ok_or_else(|| Error::arg("constrained DP needs a finite horizon"))?;
    let mut dp = ConstrainedEv::new(mdp)?;
    match dp.solve(start, horizon, budget) {
        Some((expected_cost, _)) => Ok(ConstrainedEvSolution {
            expected_cost,
            fragment: dp.fragment(start, horizon, budget),
        }),
        None => Err(Error::InfeasibleBudget { state: start, budget }),
    }
}

/// CVaR-optimal base policy plus the switch rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexPolicy {
    pub alpha: f64,
    pub base: AugmentedPolicy,
    /// VaR of the base policy's return distribution at `alpha`.
    pub var_star: f64,
    /// Every post-switch decision reachable during execution.
    pub switch_table: Vec<SwitchEntry>,
}

/// Where post-switch decisions come from during execution.
enum Switcher<'a, 'm> {
    Solver(ConstrainedEv<'m>),
    Table(&'a [SwitchEntry]),
}

impl Switcher<'_, '_> {
    fn decide(&mut self, s: usize, k: usize, budget: f64) -> Option<usize> {
        match self {
            Switcher::Solver(dp) => dp.solve(s, k, budget).map(|(_, a)| a),
            Switcher::Table(table) => table
                .iter()
                .find(|e| e.state == s && e.steps_to_go == k && (e.budget - budget).abs() <= FEASIBILITY_EPS)
                .map(|e| e.action),
        }
    }
}

/// Per-trajectory record from exact execution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub cost: f64,
    pub prob: f64,
    /// Depth of the switch, if one happened.
    pub switched_at: Option<usize>,
}

struct Walker<'a, 'm> {
    mdp: &'m Mdp,
    policy: &'a AugmentedPolicy,
    var_star: f64,
    horizon: usize,
    switcher: Switcher<'a, 'm>,
    trajectories: Vec<Trajectory>,
    entries: Vec<SwitchEntry>,
}

impl Walker<'_, '_> {
    #[allow(clippy::too_many_arguments)]
    fn walk(&mut self, s: usize, y: f64, k: usize, acc: f64, discount: f64, prob: f64, switched: Option<(usize, f64)>) {
        let mdp = self.mdp;
        if k == 0 || mdp.is_terminal(s) {
            self.trajectories.push(Trajectory { cost: acc, prob, switched_at: switched.map(|x| x.0) });
            return;
        }
        let gamma = mdp.gamma();
        let budget = match switched {
            Some((_, b)) => b,
            None => (self.var_star - acc) / discount,
        };
        if let Some(action) = self.switcher.decide(s, k, budget) {
            let entry = SwitchEntry { state: s, steps_to_go: k, budget, action };
            if !self.entries.contains(&entry) {
                self.entries.push(entry);
            }
            let depth = switched.map_or(self.horizon - k, |x| x.0);
            for o in mdp.outcomes(s, action).iter().filter(|o| o.prob > 0.0) {
                let next_budget = (budget - o.cost) / gamma;
                self.walk(o.next, y, k - 1, acc + discount * o.cost, discount * gamma, prob * o.prob, Some((depth, next_budget)));
            }
            return;
        }
        debug_assert!(switched.is_none(), "post-switch state left without a feasible action");
        let d = self.policy.act(mdp, s, y, k);
        for (o, delta) in mdp.outcomes(s, d.action).iter().zip(&d.delta) {
            if o.prob > 0.0 {
                self.walk(o.next, d.y * delta, k - 1, acc + discount * o.cost, discount * gamma, prob * o.prob, None);
            }
        }
    }
}

impl LexPolicy {
    /// Exact execution from the initial state, reading switch decisions from
    /// `switch_table`.
    pub fn trajectories(&self, mdp: &Mdp) -> Result<Vec<Trajectory>> {
        let horizon = mdp.horizon().ok_or_else(|| Error::arg("lexicographic execution needs a finite horizon"))?;
        let mut walker = Walker {
            mdp,
            policy: &self.base,
            var_star: self.var_star,
            horizon,
            switcher: Switcher::Table(&self.switch_table),
            trajectories: Vec::new(),
            entries: Vec::new(),
        };
        walker.walk(mdp.initial_state(), self.alpha, horizon, 0.0, 1.0, 1.0, None);
        Ok(walker.trajectories)
    }

    pub fn return_distribution(&self, mdp: &Mdp) -> Result<CostDistribution> {
        CostDistribution::from_atoms(self.trajectories(mdp)?.into_iter().map(|t| (t.cost, t.prob)))
    }
}

/// Result of [`solve_lexicographic`].
#[derive(Debug, Clone)]
pub struct LexSolution {
    pub policy: LexPolicy,
    pub base_distribution: CostDistribution,
    pub distribution: CostDistribution,
}

impl LexSolution {
    pub fn base_cvar(&self) -> f64 {
        cvar(&self.base_distribution, self.policy.alpha)
    }

    pub fn cvar(&self) -> f64 {
        cvar(&self.distribution, self.policy.alpha)
    }
}

pub fn solve_lexicographic(mdp: &Mdp, alpha: f64, grid: &YGrid, tol: f64) -> Result<LexSolution> {
    let horizon = mdp.horizon().ok_or_else(|| Error::arg("lexicographic refinement needs a finite horizon"))?;
    let base = solve_static_cvar(mdp, alpha, grid, tol)?.policy;
    let base_distribution = base.executed_distribution(mdp, alpha)?;
    let var_star = var(&base_distribution, alpha);

    let mut walker = Walker {
        mdp,
        policy: &base,
        var_star,
        horizon,
        switcher: Switcher::Solver(ConstrainedEv::new(mdp)?),
        trajectories: Vec::new(),
        entries: Vec::new(),
    };
    walker.walk(mdp.initial_state(), alpha, horizon, 0.0, 1.0, 1.0, None);
    let distribution = CostDistribution::from_atoms(walker.trajectories.iter().map(|t| (t.cost, t.prob)))?;
    let switch_table = walker.entries;
    Ok(LexSolution {
        policy: LexPolicy { alpha, base, var_star, switch_table },
        base_distribution,
        distribution,
    })
}

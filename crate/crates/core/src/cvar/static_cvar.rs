//! Static CVaR through the budget-augmented adversarial game.
//!
//! The augmented value satisfies
//!
//! ```text
//! V(s, y) = min_a max_δ Σ T(s'|s,a) δ(s') [c(s,a,s') + γ V(s', y δ(s'))]
//!           s.t. 0 <= δ <= 1/y,  Σ T δ = 1
//! ```
//!
//! Substituting `y' = y δ(s')` and `g(s, y) = y V(s, y)` turns the inner
//! problem into a separable concave allocation: maximize
//! `Σ T [y' c + γ g(s', y')]` subject to `Σ T y' = y`, `0 <= y' <= 1`.
//! With `g` piecewise-linear and concave, the allocation is solved exactly
//! by saturating segments in order of decreasing slope, and the resulting
//! `g` is again piecewise-linear and concave. The solver carries these
//! functions exactly from stage to stage; only when one exceeds
//! [`BREAKPOINT_CAP`] breakpoints (or under an unbounded horizon) is it
//! replaced by its chords through the budget grid, which can only lower it.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use super::grid::{ConcaveEnvelope, YGrid};
use crate::mdp::{CostDistribution, Mdp, Stages, DEFAULT_ATOM_CAP};
use crate::{Error, Result, TIE_EPS};

/// Breakpoint limit for one stored `y ↦ y V(s, y)` function.
pub const BREAKPOINT_CAP: usize = 4096;

/// Outcome of the adversary's inner maximization at one `(s, a, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryResponse {
    /// Multipliers aligned with `mdp.outcomes(s, a)`.
    pub delta: Vec<f64>,
    /// `V_a(s, y)`: the re-weighted expected cost-to-go.
    pub value: f64,
}

/// Inner maximization with interpolated continuations `next[s'] = g(s', ·)`.
pub fn adversary_response(mdp: &Mdp, s: usize, a: usize, y: f64, next: &[ConcaveEnvelope]) -> AdversaryResponse {
    let outcomes = mdp.outcomes(s, a);
    let gamma = mdp.gamma();
    // (slope, outcome index, segment order, length)
    let mut pieces: Vec<(f64, usize, usize, f64)> = Vec::new();
    for (i, o) in outcomes.iter().enumerate().filter(|(_, o)| o.prob > 0.0) {
        for (k, (len, slope)) in next[o.next].segments().enumerate() {
            pieces.push((o.cost + gamma * slope, i, k, len));
        }
    }
    pieces.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    // Pieces of equal slope share the marginal budget in proportion to their
    // lengths, so successor budgets land inside linear pieces.
    let mut alloc = vec![0.0; outcomes.len()];
    let mut remaining = y;
    let mut total = 0.0;
    let mut start = 0;
    while start < pieces.len() && remaining > 0.0 {
        let slope = pieces[start].0;
        let end = start + pieces[start..].iter().take_while(|p| (p.0 - slope).abs() <= TIE_EPS).count();
        let group = &pieces[start..end];
        let mass: f64 = group.iter().map(|p| outcomes[p.1].prob * p.3).sum();
        let share = (remaining / mass).min(1.0);
        for &(slope, i, _, len) in group {
            let m = outcomes[i].prob * len * share;
            alloc[i] += m / outcomes[i].prob;
            total += m * slope;
        }
        remaining -= mass * share;
        start = end;
    }
    let delta = alloc.into_iter().map(|ya| (ya / y).min(1.0 / y)).collect();
    AdversaryResponse { delta, value: total / y }
}

/// One agent decision in the augmented game.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: usize,
    /// Budget the decision was made at (after clamping to the grid).
    pub y: f64,
    pub delta: Vec<f64>,
    pub value: f64,
}

/// `y ↦ y V_a(s, y)`: the adversary's best allocation for every budget.
fn action_envelope(mdp: &Mdp, s: usize, a: usize, next: &[ConcaveEnvelope]) -> ConcaveEnvelope {
    let gamma = mdp.gamma();
    let mut pieces: Vec<(f64, usize, usize, f64)> = Vec::new();
    for (i, o) in mdp.outcomes(s, a).iter().enumerate().filter(|(_, o)| o.prob > 0.0) {
        for (k, (len, slope)) in next[o.next].segments().enumerate() {
            pieces.push((o.cost + gamma * slope, i, k, o.prob * len));
        }
    }
    pieces.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let total: f64 = pieces.iter().map(|p| p.3).sum();
    let (mut x, mut g) = (0.0, 0.0);
    let mut points = Vec::with_capacity(pieces.len());
    for (slope, _, _, len) in pieces {
        // rescale so the allocation spans exactly [0, 1]
        let len = len / total;
        x += len;
        g += slope * len;
        points.push((x.min(1.0), g));
    }
    if let Some(last) = points.last_mut() {
        last.0 = 1.0;
    }
    points.dedup_by(|b, a| b.0 <= a.0);
    ConcaveEnvelope::from_points(points)
}

/// Exact backup of one state, capped at [`BREAKPOINT_CAP`] breakpoints.
fn state_envelope(mdp: &Mdp, s: usize, next: &[ConcaveEnvelope], grid: &YGrid, exact: bool) -> ConcaveEnvelope {
    if mdp.is_terminal(s) {
        return ConcaveEnvelope::zero();
    }
    let per_action: Vec<ConcaveEnvelope> = (0..mdp.num_actions()).map(|a| action_envelope(mdp, s, a, next)).collect();
    let g = ConcaveEnvelope::lower(&per_action);
    if exact && g.len() <= BREAKPOINT_CAP {
        g
    } else {
        g.resample(grid.points())
    }
}

fn grid_values(grid: &YGrid, envelopes: &[ConcaveEnvelope]) -> Vec<Vec<f64>> {
    envelopes.iter().map(|g| grid.points().iter().map(|&y| g.eval(y) / y).collect()).collect()
}

fn decide(mdp: &Mdp, s: usize, y: f64, next: &[ConcaveEnvelope]) -> Decision {
    if mdp.is_terminal(s) {
        let delta = vec![1.0; mdp.outcomes(s, 0).len()];
        return Decision { action: 0, y, delta, value: 0.0 };
    }
    let mut best: Option<(usize, AdversaryResponse)> = None;
    for a in 0..mdp.num_actions() {
        let r = adversary_response(mdp, s, a, y, next);
        if best.as_ref().is_none_or(|(_, b)| r.value < b.value - TIE_EPS) {
            best = Some((a, r));
        }
    }
    let (action, r) = best.expect("at least one action");
    Decision { action, y, delta: r.delta, value: r.value }
}

static UNDERFLOW_WARNED: AtomicBool = AtomicBool::new(false);

/// Policy for the augmented game: acts on `(state, budget, steps to go)` and
/// tells the executor how the budget moves (`y ← y δ(s')`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedPolicy {
    pub grid: YGrid,
    /// `envelopes.at(k)[s]` is `y ↦ y V_k(s, y)`.
    envelopes: Stages<Vec<ConcaveEnvelope>>,
    /// `actions.at(k)[s][j]`: action at grid point `j` with `k` steps to go.
    pub actions: Stages<Vec<Vec<usize>>>,
    /// `budget_rule.at(k)[s][j][a]`: the adversary's `δ` per successor.
    pub budget_rule: Stages<Vec<Vec<Vec<Vec<f64>>>>>,
}

impl AugmentedPolicy {
    fn build(mdp: &Mdp, grid: &YGrid, envelopes: Stages<Vec<ConcaveEnvelope>>) -> Self {
        let finite = envelopes.is_finite();
        let decision_stages: Vec<usize> = if finite { (0..=envelopes.horizon()).collect() } else { vec![1] };
        let mut actions = Vec::new();
        let mut rules = Vec::new();
        for &k in &decision_stages {
            if finite && k == 0 {
                actions.push(Vec::new());
                rules.push(Vec::new());
                continue;
            }
            let next = envelopes.at(k - 1);
            let mut act_k = Vec::with_capacity(mdp.num_states());
            let mut rule_k = Vec::with_capacity(mdp.num_states());
            for s in 0..mdp.num_states() {
                let mut act_row = Vec::with_capacity(grid.len());
                let mut rule_row = Vec::with_capacity(grid.len());
                for &y in grid.points() {
                    act_row.push(decide(mdp, s, y, next).action);
                    rule_row.push(
                        (0..mdp.num_actions())
                            .map(|a| adversary_response(mdp, s, a, y, next).delta)
                            .collect(),
                    );
                }
                act_k.push(act_row);
                rule_k.push(rule_row);
            }
            actions.push(act_k);
            rules.push(rule_k);
        }
        AugmentedPolicy {
            grid: grid.clone(),
            envelopes,
            actions: Stages::from_parts(finite, actions),
            budget_rule: Stages::from_parts(finite, rules),
        }
    }

    /// Clamps `y` into the grid range.
    pub fn clamp_budget(&self, y: f64) -> f64 {
        let lo = self.grid.min();
        if y < lo {
            if y > 0.0 && !UNDERFLOW_WARNED.swap(true, Ordering::Relaxed) {
                log::warn!("risk budget {y:e} below grid minimum {lo:e}; clamping");
            }
            lo
        } else {
            y.min(1.0)
        }
    }

    /// Decision at an arbitrary budget, re-solving the one-step game against
    /// the stored continuation. Agrees with `actions` on grid points.
    pub fn act(&self, mdp: &Mdp, s: usize, y: f64, steps_to_go: usize) -> Decision {
        let y = self.clamp_budget(y);
        let k = if self.envelopes.is_finite() { steps_to_go.max(1) } else { 1 };
        decide(mdp, s, y, self.envelopes.at(k - 1))
    }

    /// `V_k(s, y)` from the stored continuation functions.
    pub fn value(&self, s: usize, y: f64, steps_to_go: usize) -> f64 {
        let y = self.clamp_budget(y);
        self.envelopes.at(steps_to_go)[s].eval(y) / y
    }

    /// Exact return distribution of executing the policy from the initial
    /// state with budget `alpha`. Finite horizon only.
    pub fn executed_distribution(&self, mdp: &Mdp, alpha: f64) -> Result<CostDistribution> {
        let horizon = mdp
            .horizon()
            .ok_or_else(|| Error::arg("executing an augmented policy exactly needs a finite horizon"))?;
        let mut atoms = Vec::new();
        self.walk(mdp, mdp.initial_state(), alpha, horizon, 0.0, 1.0, 1.0, &mut atoms)?;
        CostDistribution::from_atoms(atoms)
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(
        &self,
        mdp: &Mdp,
        s: usize,
        y: f64,
        k: usize,
        acc: f64,
        discount: f64,
        prob: f64,
        out: &mut Vec<(f64, f64)>,
    ) -> Result<()> {
        if k == 0 || mdp.is_terminal(s) {
            out.push((acc, prob));
            if out.len() > DEFAULT_ATOM_CAP {
                return Err(Error::CapExceeded {
                    what: "trajectory",
                    count: out.len() as u128,
                    cap: DEFAULT_ATOM_CAP as u128,
                });
            }
            return Ok(());
        }
        let d = self.act(mdp, s, y, k);
        for (o, delta) in mdp.outcomes(s, d.action).iter().zip(&d.delta) {
            if o.prob > 0.0 {
                self.walk(mdp, o.next, d.y * delta, k - 1, acc + discount * o.cost, discount * mdp.gamma(), prob * o.prob, out)?;
            }
        }
        Ok(())
    }
}

/// Result of [`solve_static_cvar`].
#[derive(Debug, Clone)]
pub struct StaticCvarSolution {
    pub alpha: f64,
    /// `values.at(k)[s][j]` = `V_k(s, y_j)`.
    pub values: Stages<Vec<Vec<f64>>>,
    pub policy: AugmentedPolicy,
}

impl StaticCvarSolution {
    /// `V(s0, alpha)`.
    pub fn root_value(&self, mdp: &Mdp) -> f64 {
        let j = self.policy.grid.index_of(self.alpha).expect("alpha on grid");
        self.values.root()[mdp.initial_state()][j]
    }

    /// `V(s, y_j)` at the first decision.
    pub fn value_at(&self, s: usize, j: usize) -> f64 {
        self.values.root()[s][j]
    }

    /// CVaR of the executed policy's exact return distribution and its gap
    /// to the solver value.
    pub fn execution_slack(&self, mdp: &Mdp) -> Result<(f64, f64)> {
        let dist = self.policy.executed_distribution(mdp, self.alpha)?;
        let executed = crate::risk::cvar(&dist, self.alpha);
        Ok((executed, (executed - self.root_value(mdp)).abs()))
    }
}

/// Budget-augmented value iteration for static CVaR at confidence `alpha`.
pub fn solve_static_cvar(mdp: &Mdp, alpha: f64, grid: &YGrid, tol: f64) -> Result<StaticCvarSolution> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg(format!("alpha {alpha} outside (0, 1]")));
    }
    if grid.index_of(alpha).is_none() {
        return Err(Error::arg(format!("alpha {alpha} is not a grid point")));
    }
    let exact = mdp.horizon().is_some();
    let envelopes = Stages::iterate(
        mdp.horizon(),
        tol,
        vec![ConcaveEnvelope::zero(); mdp.num_states()],
        |next, _| (0..mdp.num_states()).map(|s| state_envelope(mdp, s, next, grid, exact)).collect(),
        |a, b| {
            let (va, vb) = (grid_values(grid, a), grid_values(grid, b));
            va.iter()
                .zip(&vb)
                .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
                .fold(0.0, f64::max)
        },
    )?;
    let values = Stages::from_parts(
        envelopes.is_finite(),
        envelopes.tables().iter().map(|t| grid_values(grid, t)).collect(),
    );
    let policy = AugmentedPolicy::build(mdp, grid, envelopes);
    Ok(StaticCvarSolution { alpha, values, policy })
}

/// The adversary's best response against fixed successor values:
/// maximize `Σ p δ v` over `0 <= δ <= 1/y`, `Σ p δ = 1`.
pub fn adversary_best_response(values: &[f64], probs: &[f64], y: f64) -> Result<(Vec<f64>, f64)> {
    if !(y > 0.0 && y <= 1.0) {
        return Err(Error::arg(format!("budget {y} outside (0, 1]")));
    }
    let total: f64 = probs.iter().sum();
    if values.len() != probs.len() || probs.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > crate::PROB_EPS {
        return Err(Error::arg("probabilities must form a distribution aligned with values"));
    }
    Ok(crate::risk::greedy_saturation(values, probs, y))
}

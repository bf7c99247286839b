use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::mdp::Outcome;
use crate::risk::greedy_saturation;
use crate::{Error, Result, TIE_EPS};

use super::belief::{BamdpProblem, DirichletBelief};

/// Budgets this close to 1 leave the adversary no room to reweight.
const SINGLETON_EPS: f64 = 1e-12;
const DUPLICATE_EPS: f64 = 1e-9;
/// Weight of the random direction when jittering the incumbent perturbation.
const JITTER: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub iterations: usize,
    /// Wall-clock limit; the search stops early and reports truncation.
    pub time_budget_ms: Option<u64>,
    /// UCT constant, in units of the largest possible episode cost.
    pub exploration: f64,
    /// Progressive widening: at most `ceil(c · visits^exponent)` perturbations.
    pub widening_c: f64,
    pub widening_exponent: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { iterations: 10_000, time_budget_ms: None, exploration: 0.2, widening_c: 1.0, widening_exponent: 0.5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Root estimate backed up along most-visited actions and perturbations.
    pub value: f64,
    /// Mean simulated return of the most-visited root action.
    pub mean_value: f64,
    pub action: usize,
    pub root_q: Vec<f64>,
    pub root_visits: Vec<u64>,
    /// Perturbations expanded under each root action.
    pub root_adversary_children: Vec<usize>,
    /// Largest perturbation pool anywhere in the tree.
    pub max_adversary_children: usize,
    pub iterations: usize,
    pub truncated: bool,
    pub nodes: usize,
    pub seed: u64,
}

struct DeltaEdge {
    delta: Vec<f64>,
    /// Cumulative distorted probabilities for sampling successors.
    cumulative: Vec<f64>,
    visits: u64,
    total: f64,
    children: Vec<Option<usize>>,
}

impl DeltaEdge {
    fn mean(&self) -> f64 {
        self.total / self.visits as f64
    }
}

struct AdversaryNode {
    outcomes: Vec<Outcome>,
    beliefs: Vec<Option<DirichletBelief>>,
    succ_total: Vec<f64>,
    succ_visits: Vec<u64>,
    deltas: Vec<DeltaEdge>,
    singleton: bool,
    attempts: u64,
    visits: u64,
}

struct ActionEdge {
    visits: u64,
    total: f64,
    adversary: Option<AdversaryNode>,
}

struct DecisionNode {
    s: usize,
    steps_to_go: usize,
    y: f64,
    belief: DirichletBelief,
    visits: u64,
    actions: Vec<ActionEdge>,
}

struct Search<'a> {
    problem: &'a BamdpProblem,
    config: &'a SearchConfig,
    nodes: Vec<DecisionNode>,
    rng: ChaCha8Rng,
    max_cost: f64,
    exploration: f64,
}

/// Index drawn by inverting `cumulative` at the uniform `u`.
fn sample_index(u: f64, cumulative: &[f64]) -> usize {
    let target = u * cumulative.last().copied().unwrap_or(1.0);
    cumulative.iter().position(|&c| target < c).unwrap_or_else(|| {
        // rounding: fall back to the last entry with positive mass
        (0..cumulative.len()).rev().find(|&j| j == 0 || cumulative[j] > cumulative[j - 1]).unwrap_or(0)
    })
}

fn cumulative(probs: impl IntoIterator<Item = f64>) -> Vec<f64> {
    probs
        .into_iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// Distorts `p` toward `weights` as far as the cap `p / y` allows, then
/// renormalizes: `q_j = min(p_j / y, λ p_j w_j)` with `Σ q = 1`.
fn water_fill(p: &[f64], weights: &[f64], y: f64) -> Vec<f64> {
    let n = p.len();
    let mut capped = vec![false; n];
    loop {
        let fixed: f64 = (0..n).filter(|&j| capped[j]).map(|j| p[j] / y).sum();
        let free: f64 = (0..n).filter(|&j| !capped[j]).map(|j| p[j] * weights[j]).sum();
        if free <= 0.0 {
            return vec![1.0; n];
        }
        let lambda = (1.0 - fixed) / free;
        let mut changed = false;
        for j in 0..n {
            if !capped[j] && lambda * weights[j] > 1.0 / y {
                capped[j] = true;
                changed = true;
            }
        }
        if !changed {
            return (0..n).map(|j| if capped[j] { 1.0 / y } else { lambda * weights[j] }).collect();
        }
    }
}

/// Index of the largest positive count, lowest index on ties.
fn most_visited(visits: impl Iterator<Item = u64>) -> Option<usize> {
    let mut best: Option<(usize, u64)> = None;
    for (i, v) in visits.enumerate() {
        if v > 0 && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

fn is_feasible(p: &[f64], delta: &[f64], y: f64) -> bool {
    let mass: f64 = p.iter().zip(delta).map(|(p, d)| p * d).sum();
    (mass - 1.0).abs() <= 1e-9 && delta.iter().all(|&d| d >= -1e-12 && d <= 1.0 / y + 1e-9)
}

impl Search<'_> {
    fn new_node(&mut self, s: usize, steps_to_go: usize, y: f64, belief: DirichletBelief) -> usize {
        let na = if self.problem.is_terminal(s) || steps_to_go == 0 { 0 } else { belief.num_actions() };
        let actions = (0..na).map(|_| ActionEdge { visits: 0, total: 0.0, adversary: None }).collect();
        self.nodes.push(DecisionNode { s, steps_to_go, y, belief, visits: 0, actions });
        self.nodes.len() - 1
    }

    fn cost_bound(&self, steps: usize) -> f64 {
        let g = self.problem.gamma;
        (0..steps).map(|t| g.powi(t as i32)).sum::<f64>() * self.max_cost
    }

    fn rollout(&mut self, mut s: usize, mut k: usize, mut belief: DirichletBelief) -> Result<f64> {
        let (mut ret, mut disc) = (0.0, 1.0);
        while k > 0 && !self.problem.is_terminal(s) {
            let a = self.rng.random_range(0..belief.num_actions());
            let outcomes = belief.predictive(s, a);
            let j = sample_index(self.rng.random(), &cumulative(outcomes.iter().map(|o| o.prob)));
            let o = outcomes[j];
            ret += disc * o.cost;
            disc *= self.problem.gamma;
            belief = belief.updated(s, a, o.next)?;
            s = o.next;
            k -= 1;
        }
        Ok(ret)
    }

    fn select_action(&self, node: &DecisionNode) -> usize {
        if let Some(a) = node.actions.iter().position(|e| e.visits == 0) {
            return a;
        }
        let ln = (node.visits as f64).ln();
        let mut best = (0, f64::INFINITY);
        for (a, e) in node.actions.iter().enumerate() {
            let score = e.total / e.visits as f64 - self.exploration * (ln / e.visits as f64).sqrt();
            if score < best.1 - TIE_EPS {
                best = (a, score);
            }
        }
        best.0
    }

    /// Proposes the next perturbation: identity first, then greedy best
    /// responses to the current successor estimates alternating with
    /// randomized water-filled distortions.
    fn propose(&mut self, adv: &AdversaryNode, y: f64, steps_left: usize) -> Vec<f64> {
        let p: Vec<f64> = adv.outcomes.iter().map(|o| o.prob).collect();
        if adv.attempts == 0 {
            return vec![1.0; p.len()];
        }
        if adv.attempts % 2 == 1 {
            let bound = self.cost_bound(steps_left);
            let estimates: Vec<f64> = (0..p.len())
                .map(|j| {
                    if adv.succ_visits[j] > 0 {
                        adv.succ_total[j] / adv.succ_visits[j] as f64
                    } else {
                        adv.outcomes[j].cost + self.problem.gamma * bound
                    }
                })
                .collect();
            greedy_saturation(&estimates, &p, y).0
        } else {
            let weights: Vec<f64> = (0..p.len()).map(|_| Exp1.sample(&mut self.rng)).collect();
            let random = water_fill(&p, &weights, y);
            let incumbent = (0..adv.deltas.len())
                .filter(|&d| adv.deltas[d].visits > 0)
                .max_by(|&a, &b| adv.deltas[a].mean().total_cmp(&adv.deltas[b].mean()));
            match incumbent {
                Some(d) => adv.deltas[d].delta.iter().zip(&random).map(|(b, r)| (1.0 - JITTER) * b + JITTER * r).collect(),
                None => random,
            }
        }
    }

    fn ensure_adversary(&mut self, idx: usize, a: usize) {
        let node = &self.nodes[idx];
        if node.actions[a].adversary.is_some() {
            return;
        }
        let outcomes: Vec<Outcome> = node.belief.predictive(node.s, a).into_iter().filter(|o| o.prob > 0.0).collect();
        let n = outcomes.len();
        let singleton = n == 1 || node.y >= 1.0 - SINGLETON_EPS;
        self.nodes[idx].actions[a].adversary = Some(AdversaryNode {
            outcomes,
            beliefs: vec![None; n],
            succ_total: vec![0.0; n],
            succ_visits: vec![0; n],
            deltas: Vec::new(),
            singleton,
            attempts: 0,
            visits: 0,
        });
    }

    fn widen(&mut self, idx: usize, a: usize) {
        let (y, k) = (self.nodes[idx].y, self.nodes[idx].steps_to_go);
        let mut adv = self.nodes[idx].actions[a].adversary.take().expect("adversary node exists");
        let allowed = if adv.singleton {
            1
        } else {
            ((self.config.widening_c * ((adv.visits + 1) as f64).powf(self.config.widening_exponent)).ceil() as usize).max(1)
        };
        if adv.deltas.len() < allowed && (adv.attempts == 0 || !adv.singleton) {
            let delta = self.propose(&adv, y, k - 1);
            adv.attempts += 1;
            let p: Vec<f64> = adv.outcomes.iter().map(|o| o.prob).collect();
            debug_assert!(is_feasible(&p, &delta, y), "infeasible perturbation {delta:?} at y = {y}");
            let duplicate = adv
                .deltas
                .iter()
                .any(|e| e.delta.iter().zip(&delta).all(|(u, v)| (u - v).abs() <= DUPLICATE_EPS));
            if !duplicate {
                let cum = cumulative(p.iter().zip(&delta).map(|(p, d)| p * d));
                let n = delta.len();
                adv.deltas.push(DeltaEdge { delta, cumulative: cum, visits: 0, total: 0.0, children: vec![None; n] });
            }
        }
        self.nodes[idx].actions[a].adversary = Some(adv);
    }

    fn select_delta(&self, adv: &AdversaryNode) -> usize {
        if let Some(d) = adv.deltas.iter().position(|e| e.visits == 0) {
            return d;
        }
        let ln = (adv.visits as f64).ln();
        let mut best = (0, f64::NEG_INFINITY);
        for (d, e) in adv.deltas.iter().enumerate() {
            let score = e.total / e.visits as f64 + self.exploration * (ln / e.visits as f64).sqrt();
            if score > best.1 + TIE_EPS {
                best = (d, score);
            }
        }
        best.0
    }

    /// Robust-child backup: follow the most-visited action and perturbation
    /// and take the exact expectation over successors, falling back to the
    /// edge mean where the subtree is unexpanded.
    fn backed_up(&self, idx: usize) -> Option<f64> {
        let node = &self.nodes[idx];
        if node.actions.is_empty() {
            return Some(0.0);
        }
        let a = most_visited(node.actions.iter().map(|e| e.visits))?;
        let adv = node.actions[a].adversary.as_ref()?;
        let d = most_visited(adv.deltas.iter().map(|e| e.visits))?;
        let edge = &adv.deltas[d];
        let mut total = 0.0;
        for (j, o) in adv.outcomes.iter().enumerate() {
            let q = o.prob * edge.delta[j];
            if q <= 0.0 {
                continue;
            }
            let v = edge.children[j].and_then(|c| self.backed_up(c));
            match v {
                Some(v) => total += q * (o.cost + self.problem.gamma * v),
                None => return Some(edge.mean()),
            }
        }
        Some(total)
    }

    fn simulate(&mut self, idx: usize, is_root: bool) -> Result<f64> {
        if self.nodes[idx].actions.is_empty() {
            self.nodes[idx].visits += 1;
            return Ok(0.0);
        }
        if self.nodes[idx].visits == 0 && !is_root {
            let node = &self.nodes[idx];
            let (s, k, belief) = (node.s, node.steps_to_go, node.belief.clone());
            let g = self.rollout(s, k, belief)?;
            self.nodes[idx].visits += 1;
            return Ok(g);
        }
        let a = self.select_action(&self.nodes[idx]);
        self.ensure_adversary(idx, a);
        self.widen(idx, a);
        let u: f64 = self.rng.random();
        let (d, j, child, cost) = {
            let adv = self.nodes[idx].actions[a].adversary.as_ref().expect("adversary node exists");
            let d = self.select_delta(adv);
            let j = sample_index(u, &adv.deltas[d].cumulative);
            (d, j, adv.deltas[d].children[j], adv.outcomes[j].cost)
        };
        let child = match child {
            Some(c) => c,
            None => {
                let node = &self.nodes[idx];
                let (s, k, y) = (node.s, node.steps_to_go, node.y);
                let adv = node.actions[a].adversary.as_ref().expect("adversary node exists");
                let next = adv.outcomes[j].next;
                let y_next = (y * adv.deltas[d].delta[j]).min(1.0);
                let belief = match &adv.beliefs[j] {
                    Some(b) => b.clone(),
                    None => node.belief.updated(s, a, next)?,
                };
                let c = self.new_node(next, k - 1, y_next, belief.clone());
                let adv = self.nodes[idx].actions[a].adversary.as_mut().expect("adversary node exists");
                adv.beliefs[j] = Some(belief);
                adv.deltas[d].children[j] = Some(c);
                c
            }
        };
        let g = cost + self.problem.gamma * self.simulate(child, false)?;
        let node = &mut self.nodes[idx];
        node.visits += 1;
        let edge = &mut node.actions[a];
        edge.visits += 1;
        edge.total += g;
        let adv = edge.adversary.as_mut().expect("adversary node exists");
        adv.visits += 1;
        adv.succ_visits[j] += 1;
        adv.succ_total[j] += g;
        adv.deltas[d].visits += 1;
        adv.deltas[d].total += g;
        Ok(g)
    }
}

/// Monte-Carlo tree search for the static CVaR of a BAMDP at level `alpha`.
///
/// The agent minimizes with UCT over actions. The adversary maximizes over a
/// progressively widened pool of feasible perturbations `δ` of the
/// posterior-predictive successor distribution (`0 ≤ δ ≤ 1/y`,
/// `Σ p δ = 1`); successors are sampled from `p · δ` and the child budget is
/// `y · δ(s')`. Leaves are valued by uniform-random rollouts with belief
/// updates.
pub fn solve_bamdp_cvar_mcts(problem: &BamdpProblem, alpha: f64, config: &SearchConfig) -> Result<SearchResult> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg(format!("alpha {alpha} outside (0, 1]")));
    }
    if config.iterations == 0 {
        return Err(Error::arg("search needs at least one iteration"));
    }
    if !(config.exploration >= 0.0 && config.widening_c > 0.0 && config.widening_exponent >= 0.0) {
        return Err(Error::arg("exploration and widening parameters must be nonnegative"));
    }
    let b = &problem.belief;
    let max_cost = (0..b.num_states())
        .flat_map(|s| (0..b.num_actions()).flat_map(move |a| b.support(s, a).iter().map(|o| o.cost.abs())))
        .fold(0.0, f64::max);
    let mut search = Search {
        problem,
        config,
        nodes: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        max_cost,
        exploration: 0.0,
    };
    let scale = search.cost_bound(problem.horizon);
    search.exploration = config.exploration * if scale > 0.0 { scale } else { 1.0 };
    let root = search.new_node(problem.initial_state, problem.horizon, alpha, problem.belief.clone());
    let start = Instant::now();
    let limit = config.time_budget_ms.map(Duration::from_millis);
    let mut done = 0;
    let mut truncated = false;
    while done < config.iterations {
        if limit.is_some_and(|l| start.elapsed() >= l) {
            truncated = true;
            break;
        }
        search.simulate(root, true)?;
        done += 1;
    }
    let node = &search.nodes[root];
    let root_visits: Vec<u64> = node.actions.iter().map(|e| e.visits).collect();
    let root_q: Vec<f64> = node.actions.iter().map(|e| if e.visits > 0 { e.total / e.visits as f64 } else { f64::NAN }).collect();
    let root_adversary_children = node.actions.iter().map(|e| e.adversary.as_ref().map_or(0, |a| a.deltas.len())).collect();
    let max_adversary_children = search
        .nodes
        .iter()
        .flat_map(|n| n.actions.iter().filter_map(|e| e.adversary.as_ref().map(|a| a.deltas.len())))
        .max()
        .unwrap_or(0);
    let (action, mean_value) = match most_visited(root_visits.iter().copied()) {
        Some(a) => (a, root_q[a]),
        None => (0, 0.0),
    };
    let value = search.backed_up(root).unwrap_or(mean_value);
    Ok(SearchResult {
        value,
        mean_value,
        action,
        root_q,
        root_visits,
        root_adversary_children,
        max_adversary_children,
        iterations: done,
        truncated,
        nodes: search.nodes.len(),
        seed: config.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn water_fill_respects_caps() {
        let p = [0.5, 0.3, 0.2];
        let d = water_fill(&p, &[5.0, 1.0, 0.1], 0.6);
        assert!(is_feasible(&p, &d, 0.6));
        assert!((d[0] - 1.0 / 0.6).abs() < 1e-12);
    }

    #[test]
    fn greedy_response_is_feasible() {
        let p = [0.25, 0.25, 0.5];
        let (d, _) = greedy_saturation(&[3.0, 1.0, 2.0], &p, 0.3);
        assert!(is_feasible(&p, &d, 0.3));
    }
}

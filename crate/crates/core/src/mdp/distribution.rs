use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::Mdp;
use super::policy::PolicyView;
use crate::{Error, Result, PROB_EPS};

/// Atoms closer than this are merged.
pub const MERGE_EPS: f64 = 1e-12;

/// Default cap on live atoms in [`return_distribution`].
pub const DEFAULT_ATOM_CAP: usize = 1_000_000;

/// Finite discrete distribution over cumulative cost.
///
/// Atoms are sorted by strictly increasing cost, carry positive mass, and
/// sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostDistribution {
    atoms: Vec<(f64, f64)>,
}

impl CostDistribution {
    /// Builds a distribution from `(cost, probability)` pairs in any order.
    /// Zero-mass pairs are dropped and near-equal costs merged.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut raw: Vec<(f64, f64)> = Vec::new();
        for (z, p) in atoms {
            if !z.is_finite() || !(p >= 0.0) {
                return Err(Error::arg(format!("bad atom ({z}, {p})")));
            }
            if p > 0.0 {
                raw.push((z, p));
            }
        }
        let atoms = merge_sorted(raw);
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > PROB_EPS {
            return Err(Error::arg(format!("atom probabilities sum to {total}")));
        }
        Ok(CostDistribution { atoms })
    }

    pub fn point(z: f64) -> Self {
        CostDistribution { atoms: vec![(z, 1.0)] }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.atoms[0].0
    }

    pub fn max(&self) -> f64 {
        self.atoms[self.atoms.len() - 1].0
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(z, p)| z * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms.iter().map(|(z, p)| p * (z - m) * (z - m)).sum()
    }

    /// Pushforward through `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_atoms(self.atoms.iter().map(|&(z, p)| (f(z), p)))
    }

    /// Finite mixture `Σ w_i D_i`; weights must sum to one.
    pub fn mixture<'a>(parts: impl IntoIterator<Item = (f64, &'a CostDistribution)>) -> Result<Self> {
        let mut atoms = Vec::new();
        for (w, d) in parts {
            atoms.extend(d.atoms.iter().map(|&(z, p)| (z, w * p)));
        }
        Self::from_atoms(atoms)
    }
}

fn merge_sorted(mut raw: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
    for (z, p) in raw {
        match merged.last_mut() {
            Some(last) if z - last.0 <= MERGE_EPS => last.1 += p,
            _ => merged.push((z, p)),
        }
    }
    merged
}

/// Exact distribution of the discounted cumulative cost over `horizon` steps
/// from the initial state, with the default atom cap.
pub fn return_distribution(mdp: &Mdp, policy: &impl PolicyView, horizon: usize) -> Result<CostDistribution> {
    return_distribution_capped(mdp, policy, horizon, DEFAULT_ATOM_CAP)
}

/// As [`return_distribution`] with an explicit cap on live atoms.
///
/// Distributional DP: each step pushes `(accumulated cost, mass)` atoms one
/// transition forward, applying `γ^t` to the step cost, and merges atoms per
/// state. Episodes stop at terminal states.
pub fn return_distribution_capped(
    mdp: &Mdp,
    policy: &impl PolicyView,
    horizon: usize,
    cap: usize,
) -> Result<CostDistribution> {
    let mut frontier: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    frontier.insert(mdp.initial_state(), vec![(0.0, 1.0)]);
    let mut finished: Vec<(f64, f64)> = Vec::new();
    let mut discount = 1.0;

    for t in 0..horizon {
        let mut next: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
        for (s, atoms) in frontier {
            if mdp.is_terminal(s) {
                finished.extend(atoms);
                continue;
            }
            let probs = policy.action_probs(s, horizon - t);
            for (a, &pa) in probs.iter().enumerate().filter(|(_, p)| **p > 0.0) {
                for o in mdp.outcomes(s, a).iter().filter(|o| o.prob > 0.0) {
                    let bucket = next.entry(o.next).or_default();
                    bucket.extend(atoms.iter().map(|&(z, p)| (z + discount * o.cost, p * pa * o.prob)));
                }
            }
        }
        let mut live = finished.len();
        for atoms in next.values_mut() {
            *atoms = merge_sorted(std::mem::take(atoms));
            live += atoms.len();
        }
        if live > cap {
            return Err(Error::CapExceeded { what: "return-distribution atom", count: live as u128, cap: cap as u128 });
        }
        frontier = next;
        discount *= mdp.gamma();
    }
    for atoms in frontier.into_values() {
        finished.extend(atoms);
    }
    CostDistribution::from_atoms(finished)
}

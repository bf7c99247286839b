//! Randomized checks of the coherent-risk axioms.
//!
//! Distributions have at most [`MAX_ATOMS`] atoms with costs in
//! `[-COST_RANGE, COST_RANGE]`. Each trial also draws a level in `(0, 1]`
//! (every tenth trial uses exactly 1) which is passed to the measure, so a
//! single run covers a spread of CVaR confidence levels.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mdp::CostDistribution;

pub const MAX_ATOMS: usize = 8;
pub const COST_RANGE: f64 = 10.0;
pub const DEFAULT_SEED: u64 = 0x5eed_c0de;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axiom {
    /// `Z1 <= Z2` pointwise implies `ρ(Z1) <= ρ(Z2)`.
    Monotonicity,
    /// `ρ(Z + c) = ρ(Z) + c`.
    TranslationInvariance,
    /// `ρ(βZ) = βρ(Z)` for `β >= 0`.
    PositiveHomogeneity,
    /// `ρ(Z1 + Z2) <= ρ(Z1) + ρ(Z2)`.
    Subadditivity,
}

impl Axiom {
    pub const ALL: [Axiom; 4] = [
        Axiom::Monotonicity,
        Axiom::TranslationInvariance,
        Axiom::PositiveHomogeneity,
        Axiom::Subadditivity,
    ];
}

#[derive(Debug, Clone)]
pub struct AxiomReport {
    pub axiom: Axiom,
    pub seed: u64,
    pub trials: usize,
    pub tolerance: f64,
    /// Largest violation observed (0 when none).
    pub worst_violation: f64,
    pub failures: usize,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl fmt::Display for AxiomReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?}: {} trials, seed {:#x}, tol {:e}, failures {}, worst violation {:e}",
            self.axiom, self.trials, self.seed, self.tolerance, self.failures, self.worst_violation
        )
    }
}

fn random_probs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn random_costs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-COST_RANGE..=COST_RANGE)).collect()
}

fn dist(costs: &[f64], probs: &[f64]) -> CostDistribution {
    CostDistribution::from_atoms(costs.iter().copied().zip(probs.iter().copied())).expect("valid by construction")
}

/// Random distribution with up to [`MAX_ATOMS`] atoms.
pub fn random_distribution(rng: &mut ChaCha8Rng) -> CostDistribution {
    let n = rng.random_range(1..=MAX_ATOMS);
    dist(&random_costs(rng, n), &random_probs(rng, n))
}

/// A pointwise-ordered pair `(Z1, Z2)` with `Z1 <= Z2` on a shared outcome space.
pub fn random_dominated_pair(rng: &mut ChaCha8Rng) -> (CostDistribution, CostDistribution) {
    let n = rng.random_range(1..=MAX_ATOMS);
    let probs = random_probs(rng, n);
    let low = random_costs(rng, n);
    let high: Vec<f64> = low
        .iter()
        .map(|&z| if rng.random_bool(0.3) { z } else { z + rng.random_range(0.0..COST_RANGE) })
        .collect();
    (dist(&low, &probs), dist(&high, &probs))
}

/// Marginals `Z1`, `Z2` and the sum `Z1 + Z2` of a random joint table.
pub fn random_joint(rng: &mut ChaCha8Rng) -> (CostDistribution, CostDistribution, CostDistribution) {
    let n1 = rng.random_range(1..=MAX_ATOMS);
    let n2 = rng.random_range(1..=MAX_ATOMS);
    let z1 = random_costs(rng, n1);
    let z2 = random_costs(rng, n2);
    let joint = random_probs(rng, n1 * n2);
    let p1: Vec<f64> = (0..n1).map(|i| (0..n2).map(|j| joint[i * n2 + j]).sum()).collect();
    let p2: Vec<f64> = (0..n2).map(|j| (0..n1).map(|i| joint[i * n2 + j]).sum()).collect();
    let sum = CostDistribution::from_atoms(
        (0..n1).flat_map(|i| (0..n2).map(move |j| (i, j))).map(|(i, j)| (z1[i] + z2[j], joint[i * n2 + j])),
    )
    .expect("valid by construction");
    (dist(&z1, &p1), dist(&z2, &p2), sum)
}

fn random_level(rng: &mut ChaCha8Rng, trial: usize) -> f64 {
    if trial % 10 == 0 {
        1.0
    } else {
        rng.random_range(0.01..=1.0)
    }
}

/// Runs `trials` seeded checks of `axiom` against `measure(dist, level)`.
pub fn check_axiom<F>(axiom: Axiom, measure: F, trials: usize, seed: u64, tolerance: f64) -> AxiomReport
where
    F: Fn(&CostDistribution, f64) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ axiom as u64);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for trial in 0..trials {
        let level = random_level(&mut rng, trial);
        let violation = match axiom {
            Axiom::Monotonicity => {
                let (low, high) = random_dominated_pair(&mut rng);
                measure(&low, level) - measure(&high, level)
            }
            Axiom::TranslationInvariance => {
                let z = random_distribution(&mut rng);
                let c = rng.random_range(-COST_RANGE..=COST_RANGE);
                let shifted = z.map(|x| x + c).expect("finite");
                (measure(&shifted, level) - (measure(&z, level) + c)).abs()
            }
            Axiom::PositiveHomogeneity => {
                let z = random_distribution(&mut rng);
                let beta = if trial % 17 == 0 { 0.0 } else { rng.random_range(0.0..5.0) };
                let scaled = z.map(|x| beta * x).expect("finite");
                (measure(&scaled, level) - beta * measure(&z, level)).abs()
            }
            Axiom::Subadditivity => {
                let (z1, z2, sum) = random_joint(&mut rng);
                measure(&sum, level) - (measure(&z1, level) + measure(&z2, level))
            }
        };
        if violation > tolerance {
            failures += 1;
        }
        worst = worst.max(violation);
    }
    AxiomReport {
        axiom,
        seed,
        trials,
        tolerance,
        worst_violation: worst,
        failures,
    }
}

/// Searches for `Z1 <= Z2` (pointwise) with `ρ(Z1) > ρ(Z2) + margin`.
pub fn find_monotonicity_witness<F>(
    measure: F,
    max_tries: usize,
    seed: u64,
    margin: f64,
) -> Option<(CostDistribution, CostDistribution)>
where
    F: Fn(&CostDistribution) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..max_tries)
        .map(|_| random_dominated_pair(&mut rng))
        .find(|(low, high)| measure(low) > measure(high) + margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::{cvar, mean_variance, var};

    #[test]
    fn cvar_is_coherent_on_a_short_run() {
        for axiom in Axiom::ALL {
            let report = check_axiom(axiom, cvar, 200, 11, 1e-9);
            assert!(report.passed(), "{report}");
        }
    }

    #[test]
    fn var_fails_subadditivity_somewhere() {
        let report = check_axiom(Axiom::Subadditivity, var, 2000, 3, 1e-9);
        assert!(!report.passed(), "{report}");
    }

    #[test]
    fn mean_variance_has_a_witness() {
        let mv = |d: &CostDistribution| mean_variance(d, 1.0);
        let (low, high) = find_monotonicity_witness(mv, 10_000, 5, 1e-9).expect("witness");
        assert!(mv(&low) > mv(&high));
        let report = check_axiom(Axiom::TranslationInvariance, |d, _| mean_variance(d, 1.0), 200, 5, 1e-9);
        assert!(report.passed(), "{report}");
    }
}

//! Risk measures on [`CostDistribution`] values.
//!
//! Everything here uses the cost convention: larger is worse. `alpha` is the
//! tail mass, so CVaR at `alpha = 1` is the mean and CVaR at small `alpha`
//! looks only at the worst outcomes.

pub mod coherence;

use serde::{Deserialize, Serialize};

use crate::mdp::CostDistribution;
use crate::{Error, Result, PROB_EPS};

fn check_alpha(alpha: f64) {
    assert!(alpha > 0.0 && alpha <= 1.0, "confidence level {alpha} outside (0, 1]");
}

/// Conditional value at risk: mean of the worst `alpha` probability mass.
///
/// Computed as `min_w { w + E[(Z - w)+] / alpha }`, scanning candidate `w`
/// over the atoms (the minimizer is always an atom for discrete `Z`).
///
/// # Panics
/// If `alpha` is outside `(0, 1]`.
pub fn cvar(dist: &CostDistribution, alpha: f64) -> f64 {
    check_alpha(alpha);
    let atoms = dist.atoms();
    // suffix sums over atoms strictly above index j
    let mut tail_p = 0.0;
    let mut tail_pz = 0.0;
    let mut best = f64::INFINITY;
    for &(w, p) in atoms.iter().rev() {
        let candidate = w + (tail_pz - w * tail_p) / alpha;
        best = best.min(candidate);
        tail_p += p;
        tail_pz += p * w;
    }
    best
}

/// Value at risk `inf { z : P(Z > z) <= alpha }`; always an atom.
///
/// # Panics
/// If `alpha` is outside `(0, 1]`.
pub fn var(dist: &CostDistribution, alpha: f64) -> f64 {
    check_alpha(alpha);
    let atoms = dist.atoms();
    let mut above: f64 = atoms.iter().map(|a| a.1).sum();
    for &(z, p) in atoms {
        above -= p;
        if above <= alpha + 1e-12 {
            return z;
        }
    }
    dist.max()
}

/// `mean + lambda * variance`.
pub fn mean_variance(dist: &CostDistribution, lambda: f64) -> f64 {
    dist.mean() + lambda * dist.variance()
}

/// Adversarial re-weighting of a distribution's atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualWeights {
    /// `δ(i)`, aligned with the distribution's atoms.
    pub weights: Vec<f64>,
    pub alpha: f64,
}

impl DualWeights {
    /// `0 <= δ <= 1/alpha` and `Σ p δ = 1`.
    pub fn is_feasible(&self, dist: &CostDistribution) -> bool {
        let cap = 1.0 / self.alpha;
        let in_box = self.weights.iter().all(|&d| d >= -PROB_EPS && d <= cap + PROB_EPS);
        let mass: f64 = dist.atoms().iter().zip(&self.weights).map(|((_, p), d)| p * d).sum();
        self.weights.len() == dist.len() && in_box && (mass - 1.0).abs() <= PROB_EPS
    }

    /// `Σ p δ z`.
    pub fn reweighted_mean(&self, dist: &CostDistribution) -> f64 {
        dist.atoms().iter().zip(&self.weights).map(|((z, p), d)| p * d * z).sum()
    }
}

/// Greedy fractional saturation: the multipliers `δ` maximizing `Σ p δ v`
/// subject to `0 <= δ <= 1/budget` and `Σ p δ = 1`.
///
/// Values are visited from largest to smallest (lowest index first on ties)
/// and saturated at `1/budget` until the unit of mass is spent. Zero-mass
/// entries get `δ = 0`. Returns `(δ, Σ p δ v)`.
pub fn greedy_saturation(values: &[f64], probs: &[f64], budget: f64) -> (Vec<f64>, f64) {
    check_alpha(budget);
    assert_eq!(values.len(), probs.len());
    let mut order: Vec<usize> = (0..values.len()).filter(|&i| probs[i] > 0.0).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let cap = 1.0 / budget;
    let mut delta = vec![0.0; values.len()];
    let mut remaining = 1.0;
    let mut total = 0.0;
    for i in order {
        if remaining <= 0.0 {
            break;
        }
        let mass = (probs[i] * cap).min(remaining);
        delta[i] = mass / probs[i];
        remaining -= mass;
        total += mass * values[i];
    }
    (delta, total)
}

/// CVaR dual: the feasible re-weighting attaining the CVaR.
///
/// # Panics
/// If `alpha` is outside `(0, 1]`.
pub fn cvar_dual_weights(dist: &CostDistribution, alpha: f64) -> DualWeights {
    let (values, probs): (Vec<f64>, Vec<f64>) = dist.atoms().iter().copied().unzip();
    let (weights, _) = greedy_saturation(&values, &probs, alpha);
    DualWeights { weights, alpha }
}

/// A risk measure selectable from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RiskSpec {
    Expectation,
    Var { alpha: f64 },
    Cvar { alpha: f64 },
    MeanVariance { lambda: f64 },
}

impl RiskSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RiskSpec::Var { alpha } | RiskSpec::Cvar { alpha } if !(alpha > 0.0 && alpha <= 1.0) => {
                Err(Error::arg(format!("alpha {alpha} outside (0, 1]")))
            }
            RiskSpec::MeanVariance { lambda } if !(lambda >= 0.0) => {
                Err(Error::arg(format!("lambda {lambda} must be nonnegative")))
            }
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, dist: &CostDistribution) -> f64 {
        match *self {
            RiskSpec::Expectation => dist.mean(),
            RiskSpec::Var { alpha } => var(dist, alpha),
            RiskSpec::Cvar { alpha } => cvar(dist, alpha),
            RiskSpec::MeanVariance { lambda } => mean_variance(dist, lambda),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(atoms: &[(f64, f64)]) -> CostDistribution {
        CostDistribution::from_atoms(atoms.iter().copied()).unwrap()
    }

    #[test]
    fn cvar_examples() {
        let fig = d(&[(0.0, 0.25), (2.0, 0.5), (4.0, 0.25)]);
        assert!((cvar(&fig, 0.5) - 3.0).abs() < 1e-12);
        assert!((cvar(&fig, 1.0) - fig.mean()).abs() < 1e-12);
        let quarters = d(&[(1.0, 0.25), (2.0, 0.25), (3.0, 0.25), (4.0, 0.25)]);
        assert!((cvar(&quarters, 0.25) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn var_examples() {
        assert_eq!(var(&d(&[(0.0, 0.25), (2.0, 0.5), (4.0, 0.25)]), 0.5), 2.0);
        assert_eq!(var(&CostDistribution::point(5.0), 0.3), 5.0);
        assert_eq!(var(&d(&[(1.0, 0.5), (3.0, 0.5)]), 0.5), 1.0);
    }

    #[test]
    fn mean_variance_examples() {
        assert_eq!(mean_variance(&CostDistribution::point(3.0), 7.0), 3.0);
        assert_eq!(mean_variance(&d(&[(0.0, 0.5), (2.0, 0.5)]), 1.0), 2.0);
    }

    #[test]
    fn dual_weight_examples() {
        let two = d(&[(2.0, 0.5), (4.0, 0.5)]);
        let w = cvar_dual_weights(&two, 0.5);
        assert_eq!(w.weights, vec![0.0, 2.0]);
        assert!((w.reweighted_mean(&two) - 4.0).abs() < 1e-12);

        let fig = d(&[(0.0, 0.25), (2.0, 0.5), (4.0, 0.25)]);
        let w = cvar_dual_weights(&fig, 0.5);
        assert!(w.is_feasible(&fig));
        for (got, want) in w.weights.iter().zip([0.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((w.reweighted_mean(&fig) - 3.0).abs() < 1e-12);

        let w = cvar_dual_weights(&fig, 1.0);
        assert_eq!(w.weights, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn risk_spec_validation() {
        assert!(RiskSpec::Cvar { alpha: 0.0 }.validate().is_err());
        assert!(RiskSpec::MeanVariance { lambda: -1.0 }.validate().is_err());
        let spec: RiskSpec = serde_json::from_str(r#"{"kind":"cvar","alpha":0.5}"#).unwrap();
        assert_eq!(spec.evaluate(&d(&[(2.0, 0.5), (4.0, 0.5)])), 4.0);
    }

    /// Vertex enumeration of the dual polytope: at a vertex at most one
    /// weight is strictly between its bounds.
    fn dual_by_vertices(dist: &CostDistribution, alpha: f64) -> f64 {
        let n = dist.len();
        let cap = 1.0 / alpha;
        let atoms = dist.atoms();
        let mut best = f64::NEG_INFINITY;
        for mask in 0..3usize.pow(n as u32) {
            // digit 0: δ=0, 1: δ=cap, 2: free
            let mut digits = vec![0; n];
            let mut m = mask;
            for dg in digits.iter_mut() {
                *dg = m % 3;
                m /= 3;
            }
            let free: Vec<usize> = (0..n).filter(|&i| digits[i] == 2).collect();
            if free.len() > 1 {
                continue;
            }
            let mut w: Vec<f64> = digits.iter().map(|&dg| if dg == 1 { cap } else { 0.0 }).collect();
            let used: f64 = (0..n).map(|i| atoms[i].1 * w[i]).sum();
            if let Some(&f) = free.first() {
                w[f] = (1.0 - used) / atoms[f].1;
            }
            let dw = DualWeights { weights: w, alpha };
            if dw.is_feasible(dist) {
                best = best.max(dw.reweighted_mean(dist));
            }
        }
        best
    }

    proptest::proptest! {
        #[test]
        fn cvar_matches_dual_and_vertex_oracle(
            raw in proptest::collection::vec((-10.0f64..10.0, 0.05f64..1.0), 1..=5),
            alpha in 0.01f64..=1.0,
        ) {
            let total: f64 = raw.iter().map(|a| a.1).sum();
            let dist = CostDistribution::from_atoms(raw.iter().map(|&(z, p)| (z, p / total))).unwrap();
            let c = cvar(&dist, alpha);
            let w = cvar_dual_weights(&dist, alpha);
            proptest::prop_assert!(w.is_feasible(&dist));
            proptest::prop_assert!((w.reweighted_mean(&dist) - c).abs() < 1e-9);
            proptest::prop_assert!((dual_by_vertices(&dist, alpha) - c).abs() < 1e-9);
            let v = var(&dist, alpha);
            proptest::prop_assert!(c >= v - 1e-9);
            proptest::prop_assert!(v <= dist.max());
        }

        #[test]
        fn cvar_nonincreasing_in_alpha(
            raw in proptest::collection::vec((-10.0f64..10.0, 0.05f64..1.0), 1..=8),
            a1 in 0.01f64..=1.0,
            a2 in 0.01f64..=1.0,
        ) {
            let total: f64 = raw.iter().map(|a| a.1).sum();
            let dist = CostDistribution::from_atoms(raw.iter().map(|&(z, p)| (z, p / total))).unwrap();
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            proptest::prop_assert!(cvar(&dist, lo) >= cvar(&dist, hi) - 1e-9);
        }
    }
}

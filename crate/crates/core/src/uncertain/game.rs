use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, TIE_EPS};

/// Largest row or column count accepted by [`solve_matrix_game`].
pub const MAX_GAME_DIM: usize = 8;

/// Gap allowed between the minimax and maximin values of a solution.
pub const CERTIFY_EPS: f64 = 1e-9;

const SUPPORT_EPS: f64 = 1e-12;

/// Mixed-strategy solution of a zero-sum cost matrix game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixGameSolution {
    /// Minimizing row mixture.
    pub strategy: Vec<f64>,
    /// Worst-case cost of `strategy` over columns.
    pub value: f64,
    /// Maximizing column mixture.
    pub scenario_mix: Vec<f64>,
    /// Guaranteed cost of `scenario_mix` over rows.
    pub lower_bound: f64,
}

/// Equalizing strategy over a square support, if one exists and is a
/// probability vector. `m[r][c]` is indexed by the chosen rows and columns.
fn equalize(m: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> Option<Vec<f64>> {
    let k = rows.len();
    let mut a = DMatrix::<f64>::zeros(k + 1, k + 1);
    let mut b = DVector::<f64>::zeros(k + 1);
    for (e, &c) in cols.iter().enumerate() {
        for (j, &r) in rows.iter().enumerate() {
            a[(e, j)] = m[r][c];
        }
        a[(e, k)] = -1.0;
    }
    for j in 0..k {
        a[(k, j)] = 1.0;
    }
    b[k] = 1.0;
    let x = a.lu().solve(&b)?;
    if x.iter().any(|v| !v.is_finite()) || (0..k).any(|j| x[j] < -SUPPORT_EPS) {
        return None;
    }
    let mut weights: Vec<f64> = (0..k).map(|j| x[j].max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Some(weights)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == k {
            out.push((0..n).filter(|i| mask & (1 << i) != 0).collect());
        }
    }
    out
}

/// Best minimizing mixture of the rows of `m` and its guaranteed cost.
fn minimize_rows(m: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let (nr, nc) = (m.len(), m[0].len());
    let worst = |x: &[f64]| (0..nc).map(|c| (0..nr).map(|r| x[r] * m[r][c]).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for k in 1..=nr.min(nc) {
        for rows in subsets(nr, k) {
            for cols in subsets(nc, k) {
                let Some(w) = equalize(m, &rows, &cols) else { continue };
                let mut x = vec![0.0; nr];
                for (j, &r) in rows.iter().enumerate() {
                    x[r] = w[j];
                }
                let v = worst(&x);
                if best.as_ref().is_none_or(|b| v < b.1 - TIE_EPS) {
                    best = Some((x, v));
                }
            }
        }
    }
    best.expect("pure strategies are always equalizing over a 1x1 support")
}

/// Solves `min_x max_q xᵀ M q` by support enumeration over both players.
///
/// The returned value is certified against the maximizer's guarantee.
pub fn solve_matrix_game(m: &[Vec<f64>]) -> Result<MatrixGameSolution> {
    let nr = m.len();
    let nc = m.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 || m.iter().any(|row| row.len() != nc) {
        return Err(Error::arg("matrix game needs a nonempty rectangular matrix"));
    }
    if nr > MAX_GAME_DIM || nc > MAX_GAME_DIM {
        return Err(Error::CapExceeded { what: "matrix game dimension", count: nr.max(nc) as u128, cap: MAX_GAME_DIM as u128 });
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::arg("matrix game entries must be finite"));
    }
    let (strategy, value) = minimize_rows(m);
    let negated: Vec<Vec<f64>> = (0..nc).map(|c| (0..nr).map(|r| -m[r][c]).collect()).collect();
    let (scenario_mix, neg_lower) = minimize_rows(&negated);
    let lower_bound = -neg_lower;
    let scale = 1.0 + value.abs();
    if (value - lower_bound).abs() > CERTIFY_EPS * scale {
        return Err(Error::InvalidArgument(format!(
            "matrix game certification failed: minimax {value} vs maximin {lower_bound}"
        )));
    }
    Ok(MatrixGameSolution { strategy, value, scenario_mix, lower_bound })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force grid over the simplex for two-row games.
    fn grid_value(m: &[Vec<f64>]) -> f64 {
        (0..=10_000)
            .map(|i| {
                let p = i as f64 / 10_000.0;
                (0..m[0].len()).map(|c| p * m[0][c] + (1.0 - p) * m[1][c]).fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn regret_bandit_game() {
        let sol = solve_matrix_game(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
        assert!((sol.strategy[0] - 0.5).abs() < 1e-12);
        assert!((sol.lower_bound - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matching_pennies_like() {
        let m = vec![vec![1.0, 4.0, 2.0], vec![3.0, 0.5, 2.5]];
        let sol = solve_matrix_game(&m).unwrap();
        assert!((sol.value - grid_value(&m)).abs() < 1e-3);
    }

    #[test]
    fn dominated_row_gets_no_weight() {
        let sol = solve_matrix_game(&[vec![1.0, 1.0], vec![2.0, 3.0]]).unwrap();
        assert_eq!(sol.strategy, vec![1.0, 0.0]);
        assert_eq!(sol.value, 1.0);
    }

    #[test]
    fn rejects_large_games() {
        let m = vec![vec![0.0; 9]; 2];
        assert!(matches!(solve_matrix_game(&m), Err(Error::CapExceeded { .. })));
    }
}

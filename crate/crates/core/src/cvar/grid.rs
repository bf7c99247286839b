use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Budget grid for the static-CVaR game: strictly increasing points in
/// `(0, 1]` ending at exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YGrid {
    points: Vec<f64>,
}

impl YGrid {
    pub const DEFAULT_POINTS: usize = 21;
    pub const DEFAULT_MIN: f64 = 1e-3;

    pub fn new(mut points: Vec<f64>) -> Result<Self> {
        points.sort_by(f64::total_cmp);
        points.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        match (points.first(), points.last()) {
            (Some(&lo), Some(&hi)) if lo > 0.0 && hi == 1.0 => Ok(YGrid { points }),
            _ => Err(Error::arg("budget grid must lie in (0, 1] and contain 1")),
        }
    }

    /// `n` log-spaced points from `min` to 1, plus `extra` points.
    pub fn log_spaced(n: usize, min: f64, extra: &[f64]) -> Result<Self> {
        if n < 2 || !(min > 0.0 && min < 1.0) {
            return Err(Error::arg("log-spaced grid needs n >= 2 and min in (0, 1)"));
        }
        let (lo, hi) = (min.ln(), 0.0f64);
        let mut points: Vec<f64> = (0..n)
            .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())
            .collect();
        points[n - 1] = 1.0;
        points.extend_from_slice(extra);
        Self::new(points)
    }

    /// Default grid containing `alpha`.
    pub fn for_alpha(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::arg(format!("alpha {alpha} outside (0, 1]")));
        }
        Self::log_spaced(Self::DEFAULT_POINTS, Self::DEFAULT_MIN.min(alpha), &[alpha, 1.0])
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn index_of(&self, y: f64) -> Option<usize> {
        self.points.iter().position(|&p| (p - y).abs() <= 1e-12)
    }
}

/// Upper concave envelope of `(0, 0)` and a set of points on `(0, 1]`.
///
/// Represents `y ↦ y·V(s, y)`, which is concave and piecewise linear for
/// exact CVaR values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcaveEnvelope {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

/// Vertical slack below which a breakpoint counts as collinear.
const COLLINEAR_EPS: f64 = 1e-13;

impl ConcaveEnvelope {
    /// Points must have strictly increasing `x > 0`.
    pub fn from_points(points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut hull: Vec<(f64, f64)> = vec![(0.0, 0.0)];
        for (x, y) in points {
            debug_assert!(x > hull[hull.len() - 1].0);
            while hull.len() >= 2 {
                let (ax, ay) = hull[hull.len() - 2];
                let (bx, by) = hull[hull.len() - 1];
                // drop b when it lies on or below the chord a -> (x, y)
                let chord = ay + (y - ay) * (bx - ax) / (x - ax);
                if by <= chord + COLLINEAR_EPS {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push((x, y));
        }
        let (xs, ys) = hull.into_iter().unzip();
        ConcaveEnvelope { xs, ys }
    }

    /// Identically zero on `[0, 1]`.
    pub fn zero() -> Self {
        ConcaveEnvelope { xs: vec![0.0, 1.0], ys: vec![0.0, 0.0] }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&b| b <= x).max(1);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let t = (x - x0) / (x1 - x0);
        self.ys[i - 1] + t * (self.ys[i] - self.ys[i - 1])
    }

    /// Breakpoints, starting at `(0, 0)`.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    /// Number of breakpoints, including the origin.
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(length, slope)` of each linear piece, left to right; slopes are
    /// nonincreasing.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.windows(2).zip(self.ys.windows(2)).map(|(x, y)| {
            let len = x[1] - x[0];
            (len, (y[1] - y[0]) / len)
        })
    }

    /// Envelope of the values at `xs` (chords, so never above `self`).
    pub fn resample(&self, xs: &[f64]) -> Self {
        Self::from_points(xs.iter().filter(|&&x| x > 0.0).map(|&x| (x, self.eval(x))))
    }

    /// Pointwise minimum of envelopes on `[0, 1]`, exact: breakpoints are
    /// the union of the inputs' plus every crossing in between.
    pub fn lower(fns: &[ConcaveEnvelope]) -> Self {
        assert!(!fns.is_empty());
        if fns.len() == 1 {
            return fns[0].clone();
        }
        let mut cuts: Vec<f64> = fns.iter().flat_map(|f| f.xs.iter().copied()).filter(|&x| x <= 1.0).collect();
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);
        let mut points = Vec::new();
        for w in cuts.windows(2) {
            let (u, v) = (w[0], w[1]);
            let at_u: Vec<f64> = fns.iter().map(|f| f.eval(u)).collect();
            let at_v: Vec<f64> = fns.iter().map(|f| f.eval(v)).collect();
            // walk the lower envelope of the lines on [u, v]
            let lowest = |vals: &[f64], tie: &[f64]| {
                (0..vals.len()).fold(0, |b, i| {
                    if vals[i] < vals[b] || (vals[i] == vals[b] && tie[i] < tie[b]) {
                        i
                    } else {
                        b
                    }
                })
            };
            let mut cur = lowest(&at_u, &at_v);
            let mut t0 = 0.0;
            loop {
                let line = |i: usize, t: f64| at_u[i] + t * (at_v[i] - at_u[i]);
                let mut next: Option<(f64, usize)> = None;
                for i in 0..fns.len() {
                    let drop = (at_v[i] - at_u[i]) - (at_v[cur] - at_u[cur]);
                    if i == cur || drop >= 0.0 {
                        continue;
                    }
                    let t = (at_u[cur] - at_u[i]) / drop;
                    if t > t0 && t < 1.0 && next.is_none_or(|(bt, _)| t < bt) {
                        next = Some((t, i));
                    }
                }
                match next {
                    Some((t, i)) => {
                        let x = u + t * (v - u);
                        if x > u && x < v {
                            points.push((x, line(cur, t).min(line(i, t))));
                        }
                        cur = i;
                        t0 = t;
                    }
                    None => break,
                }
            }
            points.push((v, at_v.iter().copied().fold(f64::INFINITY, f64::min)));
        }
        points.retain(|p| p.0 > 0.0);
        Self::from_points(points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_contains_alpha_and_one() {
        let g = YGrid::for_alpha(0.37).unwrap();
        assert!(g.index_of(0.37).is_some());
        assert_eq!(*g.points().last().unwrap(), 1.0);
        assert!(g.points().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.len(), YGrid::DEFAULT_POINTS + 1);
        assert!(YGrid::new(vec![0.5]).is_err());
        assert!(YGrid::new(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn envelope_is_concave_and_interpolates() {
        // y*CVaR_y of {4: .5, 2: .5}: 4y up to .5, then 1 + 2y
        let g = ConcaveEnvelope::from_points([(0.25, 1.0), (0.5, 2.0), (0.75, 2.5), (1.0, 3.0)]);
        assert_eq!(g.eval(0.1), 0.4);
        assert!((g.eval(0.6) - 2.2).abs() < 1e-12);
        let slopes: Vec<f64> = g.segments().map(|s| s.1).collect();
        assert_eq!(slopes, vec![4.0, 2.0]);

        // a dent below the chord is lifted
        let h = ConcaveEnvelope::from_points([(0.5, 0.1), (1.0, 1.0)]);
        assert!((h.eval(0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lower_envelope_adds_crossings() {
        // 2y against the tent min(4y, 1 + 0.5y): they cross at y = 2/3
        let line = ConcaveEnvelope::from_points([(1.0, 2.0)]);
        let tent = ConcaveEnvelope::from_points([(0.4, 1.6), (1.0, 1.5)]);
        let low = ConcaveEnvelope::lower(&[line.clone(), tent.clone()]);
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            assert!((low.eval(x) - line.eval(x).min(tent.eval(x))).abs() < 1e-12, "at {x}");
        }
        assert_eq!(low.len(), 3);
    }
}

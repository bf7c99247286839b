use crate::{Error, Result, PROB_EPS};

/// One successor of a state-action pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub cost: f64,
}

/// A validated tabular MDP.
///
/// Construct through [`MdpBuilder`] or the JSON loader; both enforce the
/// row-sum, terminal self-loop and horizon/discount invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    rows: Vec<Vec<Outcome>>,
    gamma: f64,
    horizon: Option<usize>,
    initial_state: usize,
    terminal: Vec<bool>,
}

impl Mdp {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `None` means unbounded (then `gamma < 1`).
    pub fn horizon(&self) -> Option<usize> {
        self.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminals(&self) -> impl Iterator<Item = usize> + '_ {
        self.terminal.iter().enumerate().filter(|(_, t)| **t).map(|(s, _)| s)
    }

    /// Successors of `(s, a)`, sorted by successor index.
    pub fn outcomes(&self, s: usize, a: usize) -> &[Outcome] {
        &self.rows[s * self.num_actions + a]
    }

    /// Same model with a different horizon; fails if that breaks the
    /// horizon/discount invariant.
    pub fn with_horizon(&self, horizon: Option<usize>) -> Result<Mdp> {
        check_horizon(self.gamma, horizon)?;
        Ok(Mdp { horizon, ..self.clone() })
    }

    pub fn with_initial_state(&self, s: usize) -> Result<Mdp> {
        if s >= self.num_states {
            return Err(Error::model(format!("initial state {s} out of range")));
        }
        Ok(Mdp { initial_state: s, ..self.clone() })
    }

    /// True when every positive-probability row has a single successor.
    pub fn is_deterministic(&self) -> bool {
        self.rows
            .iter()
            .all(|row| row.iter().filter(|o| o.prob > 0.0).count() == 1)
    }

    /// Distinct cost values on positive-probability transitions.
    pub fn cost_atoms(&self) -> Vec<f64> {
        let mut costs: Vec<f64> = self
            .rows
            .iter()
            .flatten()
            .filter(|o| o.prob > 0.0)
            .map(|o| o.cost)
            .collect();
        costs.sort_by(f64::total_cmp);
        costs.dedup();
        costs
    }
}

fn check_horizon(gamma: f64, horizon: Option<usize>) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::model(format!("gamma {gamma} outside (0, 1]")));
    }
    match horizon {
        Some(0) => Err(Error::model("horizon must be positive")),
        None if gamma >= 1.0 => Err(Error::model("unbounded horizon requires gamma < 1")),
        _ => Ok(()),
    }
}

/// Incremental constructor for [`Mdp`].
///
/// Rows for terminal states may be omitted; they are filled with zero-cost
/// self-loops. Every non-terminal `(s, a)` must be given explicitly.
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    num_states: usize,
    num_actions: usize,
    rows: Vec<Vec<Outcome>>,
    gamma: f64,
    horizon: Option<usize>,
    initial_state: usize,
    terminal: Vec<bool>,
    deferred: Vec<String>,
}

impl MdpBuilder {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        MdpBuilder {
            num_states,
            num_actions,
            rows: vec![Vec::new(); num_states * num_actions],
            gamma: 1.0,
            horizon: None,
            initial_state: 0,
            terminal: vec![false; num_states],
            deferred: Vec::new(),
        }
    }

    pub fn gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn horizon(mut self, horizon: Option<usize>) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn initial_state(mut self, s: usize) -> Self {
        self.initial_state = s;
        self
    }

    pub fn terminal(mut self, s: usize) -> Self {
        if s < self.num_states {
            self.terminal[s] = true;
        } else {
            self.deferred.push(format!("terminal state {s} out of range"));
        }
        self
    }

    /// Adds `(s, a) -> next` with probability `prob` and cost `cost`.
    pub fn outcome(mut self, s: usize, a: usize, next: usize, prob: f64, cost: f64) -> Self {
        self.add(s, a, next, prob, cost);
        self
    }

    /// Same outcome on every action of `s`.
    pub fn outcome_all_actions(mut self, s: usize, next: usize, prob: f64, cost: f64) -> Self {
        for a in 0..self.num_actions {
            self.add(s, a, next, prob, cost);
        }
        self
    }

    pub fn add(&mut self, s: usize, a: usize, next: usize, prob: f64, cost: f64) {
        if s < self.num_states && a < self.num_actions {
            self.rows[s * self.num_actions + a].push(Outcome { next, prob, cost });
        } else {
            self.deferred.push(format!("row (s={s}, a={a}) out of range"));
        }
    }

    pub fn build(self) -> Result<Mdp> {
        let MdpBuilder {
            num_states,
            num_actions,
            mut rows,
            gamma,
            horizon,
            initial_state,
            terminal,
            deferred,
        } = self;
        if num_states == 0 || num_actions == 0 {
            return Err(Error::model("num_states and num_actions must be positive"));
        }
        if let Some(first) = deferred.into_iter().next() {
            return Err(Error::model(first));
        }
        if initial_state >= num_states {
            return Err(Error::model(format!("initial state {initial_state} out of range")));
        }
        check_horizon(gamma, horizon)?;

        for s in 0..num_states {
            for a in 0..num_actions {
                let row = &mut rows[s * num_actions + a];
                if terminal[s] {
                    if row.is_empty() {
                        row.push(Outcome { next: s, prob: 1.0, cost: 0.0 });
                    }
                    let ok = row
                        .iter()
                        .all(|o| (o.next == s && o.cost == 0.0) || o.prob == 0.0);
                    if !ok {
                        return Err(Error::model(format!(
                            "terminal state {s} must self-loop with cost 0 (action {a})"
                        )));
                    }
                }
                validate_row(s, a, row, num_states)?;
                row.sort_by_key(|o| o.next);
                if row.windows(2).any(|w| w[0].next == w[1].next) {
                    return Err(Error::model(format!("duplicate successor in row (s={s}, a={a})")));
                }
            }
        }

        Ok(Mdp {
            num_states,
            num_actions,
            rows,
            gamma,
            horizon,
            initial_state,
            terminal,
        })
    }
}

pub(crate) fn validate_row(s: usize, a: usize, row: &[Outcome], num_states: usize) -> Result<()> {
    if row.is_empty() {
        return Err(Error::model(format!("missing transition row (s={s}, a={a})")));
    }
    let mut total = 0.0;
    for o in row {
        if o.next >= num_states {
            return Err(Error::model(format!(
                "successor {} out of range in row (s={s}, a={a})",
                o.next
            )));
        }
        if !(0.0..=1.0).contains(&o.prob) {
            return Err(Error::model(format!(
                "probability {} outside [0, 1] in row (s={s}, a={a})",
                o.prob
            )));
        }
        if !o.cost.is_finite() {
            return Err(Error::model(format!("non-finite cost in row (s={s}, a={a})")));
        }
        total += o.prob;
    }
    if (total - 1.0).abs() > PROB_EPS {
        return Err(Error::model(format!(
            "row (s={s}, a={a}) sums to {total}, expected 1"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminal_rows_are_filled() {
        let mdp = MdpBuilder::new(2, 2)
            .horizon(Some(1))
            .terminal(1)
            .outcome_all_actions(0, 1, 1.0, 3.0)
            .build()
            .unwrap();
        assert_eq!(mdp.outcomes(1, 1), &[Outcome { next: 1, prob: 1.0, cost: 0.0 }]);
    }

    #[test]
    fn rejects_bad_rows() {
        let short = MdpBuilder::new(2, 1)
            .horizon(Some(1))
            .terminal(1)
            .outcome(0, 0, 1, 0.5, 1.0)
            .build();
        assert!(matches!(short, Err(Error::InvalidModel(m)) if m.contains("sums to")));

        let missing = MdpBuilder::new(2, 2).horizon(Some(1)).terminal(1).outcome(0, 0, 1, 1.0, 0.0).build();
        assert!(matches!(missing, Err(Error::InvalidModel(m)) if m.contains("missing")));

        let bad_terminal = MdpBuilder::new(2, 1)
            .horizon(Some(1))
            .terminal(1)
            .outcome(0, 0, 1, 1.0, 0.0)
            .outcome(1, 0, 1, 1.0, 5.0)
            .build();
        assert!(bad_terminal.is_err());
    }

    #[test]
    fn unbounded_horizon_needs_discount() {
        let b = MdpBuilder::new(1, 1).outcome(0, 0, 0, 1.0, 1.0);
        assert!(b.clone().gamma(1.0).build().is_err());
        assert!(b.gamma(0.5).build().is_ok());
    }
}

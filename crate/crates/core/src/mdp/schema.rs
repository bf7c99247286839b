//! JSON file schema for [`Mdp`].
//!
//! ```json
//! { "num_states": 3, "num_actions": 1, "gamma": 1.0, "horizon": 1,
//!   "initial_state": 0, "terminals": [1, 2],
//!   "transitions": [ {"s": 0, "a": 0, "next": [{"sp": 1, "p": 0.5, "cost": 0.0},
//!                                               {"sp": 2, "p": 0.5, "cost": 1.0}]} ] }
//! ```

use serde::{Deserialize, Serialize};

use super::model::{validate_row, Mdp, MdpBuilder, Outcome};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub sp: usize,
    pub p: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionRow {
    pub s: usize,
    pub a: usize,
    pub next: Vec<TransitionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub horizon: Option<usize>,
    pub initial_state: usize,
    pub terminals: Vec<usize>,
    pub transitions: Vec<TransitionRow>,
}

impl MdpFile {
    /// Validates and converts. Row errors are addressed as `transitions[i]`.
    pub fn into_mdp(self) -> Result<Mdp> {
        let mut builder = MdpBuilder::new(self.num_states, self.num_actions)
            .gamma(self.gamma)
            .horizon(self.horizon)
            .initial_state(self.initial_state);
        for &t in &self.terminals {
            builder = builder.terminal(t);
        }
        let mut seen = std::collections::HashSet::new();
        for (i, row) in self.transitions.iter().enumerate() {
            let at = |msg: String| Error::model(format!("transitions[{i}]: {msg}"));
            if row.s >= self.num_states || row.a >= self.num_actions {
                return Err(at(format!("(s={}, a={}) out of range", row.s, row.a)));
            }
            if !seen.insert((row.s, row.a)) {
                return Err(at(format!("duplicate row (s={}, a={})", row.s, row.a)));
            }
            let outcomes: Vec<Outcome> = row
                .next
                .iter()
                .map(|e| Outcome { next: e.sp, prob: e.p, cost: e.cost })
                .collect();
            validate_row(row.s, row.a, &outcomes, self.num_states).map_err(|e| at(e.to_string()))?;
            for o in outcomes {
                builder.add(row.s, row.a, o.next, o.prob, o.cost);
            }
        }
        builder.build()
    }

    pub fn from_mdp(mdp: &Mdp) -> Self {
        MdpFile {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            gamma: mdp.gamma(),
            horizon: mdp.horizon(),
            initial_state: mdp.initial_state(),
            terminals: mdp.terminals().collect(),
            transitions: rows_of(mdp),
        }
    }
}

/// Non-terminal rows of `mdp` in `(s, a)` order.
pub(crate) fn rows_of(mdp: &Mdp) -> Vec<TransitionRow> {
    let mut rows = Vec::new();
    for s in (0..mdp.num_states()).filter(|&s| !mdp.is_terminal(s)) {
        for a in 0..mdp.num_actions() {
            rows.push(TransitionRow {
                s,
                a,
                next: mdp
                    .outcomes(s, a)
                    .iter()
                    .map(|o| TransitionEntry { sp: o.next, p: o.prob, cost: o.cost })
                    .collect(),
            });
        }
    }
    rows
}

impl Mdp {
    pub fn from_json_str(text: &str) -> Result<Mdp> {
        let file: MdpFile = serde_json::from_str(text)?;
        file.into_mdp()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&MdpFile::from_mdp(self)).expect("plain data serializes")
    }
}

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::mdp::{Mdp, MdpBuilder, Outcome};
use crate::{Error, Result};

/// One prior successor of `(s, a)`: Dirichlet pseudo-count and the known cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorOutcome {
    pub next: usize,
    pub count: f64,
    pub cost: f64,
}

/// Dirichlet beliefs over `(s, a)` successor distributions.
///
/// Each row belongs to a parameter group. Rows in one group share a single
/// Dirichlet: their outcomes correspond by position, and observing any of
/// them updates all. By default every row is its own group.
///
/// The prior table is shared; observations are stored as sparse count
/// increments, so cloning a belief along a search path is cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletBelief {
    num_states: usize,
    num_actions: usize,
    prior: Arc<Vec<Vec<PriorOutcome>>>,
    group: Arc<Vec<usize>>,
    observed: BTreeMap<(usize, usize), u32>,
}

impl DirichletBelief {
    /// `rows[s * num_actions + a]` lists the support of `(s, a)`; terminal
    /// rows may be empty. `group[row]` is the lowest row index of its group.
    pub(crate) fn new(num_states: usize, num_actions: usize, rows: Vec<Vec<PriorOutcome>>, group: Vec<usize>) -> Self {
        debug_assert_eq!(rows.len(), num_states * num_actions);
        debug_assert_eq!(group.len(), rows.len());
        DirichletBelief { num_states, num_actions, prior: Arc::new(rows), group: Arc::new(group), observed: BTreeMap::new() }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn support(&self, s: usize, a: usize) -> &[PriorOutcome] {
        &self.prior[s * self.num_actions + a]
    }

    /// Parameter group of `(s, a)`, named by its lowest row `s * A + a`.
    pub fn group(&self, s: usize, a: usize) -> usize {
        self.group[s * self.num_actions + a]
    }

    /// Posterior pseudo-counts of `(s, a)`, aligned with [`Self::support`].
    pub fn counts(&self, s: usize, a: usize) -> Vec<f64> {
        let row = s * self.num_actions + a;
        let g = self.group[row];
        self.prior[row]
            .iter()
            .enumerate()
            .map(|(j, o)| o.count + self.observed.get(&(g, j)).copied().unwrap_or(0) as f64)
            .collect()
    }

    /// Number of observed transitions folded into this belief.
    pub fn observations(&self) -> u32 {
        self.observed.values().sum()
    }

    /// Sparse observation counts `((group, outcome index), n)`.
    pub fn observed(&self) -> impl Iterator<Item = (&(usize, usize), &u32)> {
        self.observed.iter()
    }

    /// Posterior-mean successor distribution of `(s, a)`.
    pub fn predictive(&self, s: usize, a: usize) -> Vec<Outcome> {
        let counts = self.counts(s, a);
        let total: f64 = counts.iter().sum();
        self.support(s, a)
            .iter()
            .zip(&counts)
            .map(|(o, c)| Outcome { next: o.next, prob: c / total, cost: o.cost })
            .collect()
    }

    /// Posterior after observing `s -a-> next`.
    pub fn updated(&self, s: usize, a: usize, next: usize) -> Result<DirichletBelief> {
        if s >= self.num_states || a >= self.num_actions {
            return Err(Error::arg(format!("belief update ({s}, {a}) out of range")));
        }
        let row = s * self.num_actions + a;
        let Some(j) = self.prior[row].iter().position(|o| o.next == next) else {
            return Err(Error::arg(format!("successor {next} of ({s}, {a}) is outside the prior support")));
        };
        let mut out = self.clone();
        *out.observed.entry((self.group[row], j)).or_insert(0) += 1;
        Ok(out)
    }
}

/// A Bayes-adaptive MDP: known costs, Dirichlet-uncertain transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct BamdpProblem {
    pub belief: DirichletBelief,
    pub gamma: f64,
    pub horizon: usize,
    pub initial_state: usize,
    terminal: Vec<bool>,
}

impl BamdpProblem {
    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminals(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.terminal.len()).filter(|&s| self.terminal[s])
    }

    /// Wraps a known MDP: each successor gets pseudo-count `strength · p`.
    pub fn from_known_mdp(mdp: &Mdp, strength: f64) -> Result<Self> {
        let Some(horizon) = mdp.horizon() else {
            return Err(Error::arg("Bayes-adaptive problems need a finite horizon"));
        };
        if !(strength > 0.0 && strength.is_finite()) {
            return Err(Error::arg(format!("prior strength must be positive, got {strength}")));
        }
        let mut file = BamdpFile {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            gamma: mdp.gamma(),
            horizon,
            initial_state: mdp.initial_state(),
            terminals: mdp.terminals().collect(),
            prior: Vec::new(),
        };
        for s in (0..mdp.num_states()).filter(|&s| !mdp.is_terminal(s)) {
            for a in 0..mdp.num_actions() {
                let next = mdp
                    .outcomes(s, a)
                    .iter()
                    .filter(|o| o.prob > 0.0)
                    .map(|o| PriorEntry { sp: o.next, count: strength * o.prob, cost: o.cost })
                    .collect();
                file.prior.push(PriorRow { s, a, group: None, next });
            }
        }
        file.into_problem()
    }

    /// The MDP whose transitions are the posterior means.
    pub fn mean_mdp(&self) -> Result<Mdp> {
        self.build_mdp(|s, a| self.belief.predictive(s, a).into_iter().map(|o| o.prob).collect())
    }

    /// Draws one MDP from the Dirichlet prior, reproducibly from `seed`.
    pub fn root_sample(&self, seed: u64) -> Result<Mdp> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut drawn: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        self.build_mdp(|s, a| {
            if let Some(p) = drawn.get(&self.belief.group(s, a)) {
                return p.clone();
            }
            let counts = self.belief.counts(s, a);
            let draws: Vec<f64> = counts
                .iter()
                .map(|&c| Gamma::new(c, 1.0).expect("positive shape").sample(&mut rng))
                .collect();
            let total: f64 = draws.iter().sum();
            let p: Vec<f64> = if total > 0.0 && total.is_finite() {
                draws.iter().map(|d| d / total).collect()
            } else {
                let best = (0..counts.len()).fold(0, |b, j| if counts[j] > counts[b] { j } else { b });
                (0..counts.len()).map(|j| if j == best { 1.0 } else { 0.0 }).collect()
            };
            drawn.insert(self.belief.group(s, a), p.clone());
            p
        })
    }

    fn build_mdp(&self, mut probs: impl FnMut(usize, usize) -> Vec<f64>) -> Result<Mdp> {
        let b = &self.belief;
        let mut builder = MdpBuilder::new(b.num_states(), b.num_actions())
            .gamma(self.gamma)
            .horizon(Some(self.horizon))
            .initial_state(self.initial_state);
        for s in self.terminals() {
            builder = builder.terminal(s);
        }
        for s in (0..b.num_states()).filter(|&s| !self.is_terminal(s)) {
            for a in 0..b.num_actions() {
                let p = probs(s, a);
                for (o, q) in b.support(s, a).iter().zip(p) {
                    builder.add(s, a, o.next, q, o.cost);
                }
            }
        }
        builder.build()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: BamdpFile = serde_json::from_str(text)?;
        file.into_problem()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&BamdpFile::from_problem(self)).expect("plain data serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorEntry {
    pub sp: usize,
    pub count: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorRow {
    pub s: usize,
    pub a: usize,
    /// Rows with the same label share one Dirichlet; they must list the same
    /// number of outcomes with the same counts, matched by position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub next: Vec<PriorEntry>,
}

/// JSON form of a [`BamdpProblem`]: the MDP header plus Dirichlet prior rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BamdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub horizon: usize,
    pub initial_state: usize,
    pub terminals: Vec<usize>,
    pub prior: Vec<PriorRow>,
}

impl BamdpFile {
    pub fn into_problem(self) -> Result<BamdpProblem> {
        let (ns, na) = (self.num_states, self.num_actions);
        if ns == 0 || na == 0 {
            return Err(Error::model("need at least one state and one action"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::model(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if self.horizon == 0 {
            return Err(Error::model("horizon must be at least 1"));
        }
        if self.initial_state >= ns {
            return Err(Error::model(format!("initial state {} out of range", self.initial_state)));
        }
        let mut terminal = vec![false; ns];
        for &t in &self.terminals {
            if t >= ns {
                return Err(Error::model(format!("terminal {t} out of range")));
            }
            terminal[t] = true;
        }
        let mut rows: Vec<Option<Vec<PriorOutcome>>> = vec![None; ns * na];
        let mut labels: Vec<Option<String>> = vec![None; ns * na];
        let mut entry_of_row = vec![0; ns * na];
        for (i, row) in self.prior.into_iter().enumerate() {
            let at = |msg: String| Error::model(format!("prior[{i}] (s={}, a={}): {msg}", row.s, row.a));
            if row.s >= ns || row.a >= na {
                return Err(at("state or action out of range".into()));
            }
            if terminal[row.s] {
                return Err(at("terminal states take no prior".into()));
            }
            let slot = &mut rows[row.s * na + row.a];
            if slot.is_some() {
                return Err(at("duplicate row".into()));
            }
            let mut outcomes: Vec<PriorOutcome> = Vec::new();
            for e in &row.next {
                if e.sp >= ns {
                    return Err(at(format!("successor {} out of range", e.sp)));
                }
                if !(e.count > 0.0 && e.count.is_finite()) {
                    return Err(at(format!("count must be positive, got {}", e.count)));
                }
                if !e.cost.is_finite() {
                    return Err(at("cost must be finite".into()));
                }
                if outcomes.iter().any(|o| o.next == e.sp) {
                    return Err(at(format!("duplicate successor {}", e.sp)));
                }
                outcomes.push(PriorOutcome { next: e.sp, count: e.count, cost: e.cost });
            }
            if outcomes.is_empty() {
                return Err(at("empty support".into()));
            }
            if row.group.is_none() {
                outcomes.sort_by_key(|o| o.next);
            }
            *slot = Some(outcomes);
            labels[row.s * na + row.a] = row.group;
            entry_of_row[row.s * na + row.a] = i;
        }
        let mut table = Vec::with_capacity(ns * na);
        for (idx, slot) in rows.into_iter().enumerate() {
            let (s, a) = (idx / na, idx % na);
            match slot {
                Some(r) => table.push(r),
                None if terminal[s] => table.push(Vec::new()),
                None => return Err(Error::model(format!("missing prior row for (s={s}, a={a})"))),
            }
        }
        let mut group: Vec<usize> = (0..ns * na).collect();
        let mut first: BTreeMap<&str, usize> = BTreeMap::new();
        for (idx, label) in labels.iter().enumerate() {
            let Some(label) = label else { continue };
            let head = *first.entry(label.as_str()).or_insert(idx);
            let (a, b) = (&table[head], &table[idx]);
            if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.count != y.count) {
                return Err(Error::model(format!(
                    "prior[{}] (s={}, a={}): group {label:?} rows disagree on outcome counts",
                    entry_of_row[idx],
                    idx / na,
                    idx % na
                )));
            }
            group[idx] = head;
        }
        Ok(BamdpProblem {
            belief: DirichletBelief::new(ns, na, table, group),
            gamma: self.gamma,
            horizon: self.horizon,
            initial_state: self.initial_state,
            terminal,
        })
    }

    pub fn from_problem(p: &BamdpProblem) -> Self {
        let b = &p.belief;
        let mut prior = Vec::new();
        for s in (0..b.num_states()).filter(|&s| !p.is_terminal(s)) {
            for a in 0..b.num_actions() {
                let counts = b.counts(s, a);
                let next = b
                    .support(s, a)
                    .iter()
                    .zip(counts)
                    .map(|(o, count)| PriorEntry { sp: o.next, count, cost: o.cost })
                    .collect();
                let g = b.group(s, a);
                let shared = (0..b.num_states() * b.num_actions()).any(|r| r != g && b.group(r / b.num_actions(), r % b.num_actions()) == g);
                let group = (g != s * b.num_actions() + a || shared).then(|| format!("g{g}"));
                prior.push(PriorRow { s, a, group, next });
            }
        }
        BamdpFile {
            num_states: b.num_states(),
            num_actions: b.num_actions(),
            gamma: p.gamma,
            horizon: p.horizon,
            initial_state: p.initial_state,
            terminals: p.terminals().collect(),
            prior,
        }
    }
}

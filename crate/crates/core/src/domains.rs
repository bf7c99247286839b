//! Named, parameterized problem builders shared by tests and the CLI.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bamdp::{BamdpFile, BamdpProblem, PriorEntry, PriorRow};
use crate::mdp::{random_mdp, random_samples, Mdp, MdpBuilder, RandomMdpConfig};
use crate::uncertain::SampleUncertainMdp;
use crate::{Error, Result};

/// A builder name plus numeric parameters; missing parameters take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl DomainSpec {
    pub fn new(name: &str) -> Self {
        DomainSpec { name: name.to_string(), params: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }
}

/// Output of a domain builder.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Mdp(Mdp),
    Uncertain(SampleUncertainMdp),
    Bamdp(BamdpProblem),
}

impl Problem {
    pub fn kind(&self) -> &'static str {
        match self {
            Problem::Mdp(_) => "mdp",
            Problem::Uncertain(_) => "uncertain",
            Problem::Bamdp(_) => "bamdp",
        }
    }
}

/// Registered builders: name, parameters with defaults, and a summary.
pub struct DomainInfo {
    pub name: &'static str,
    pub params: &'static [(&'static str, f64)],
    pub summary: &'static str,
}

pub const DOMAINS: &[DomainInfo] = &[
    DomainInfo { name: "four-leaf-chain", params: &[], summary: "two-step chain with equally likely leaves {4, 2, 2, 0}" },
    DomainInfo { name: "tie-bandit", params: &[], summary: "one step; a certain cost 2 against a fair coin over {0, 2}" },
    DomainInfo { name: "two-step-switch", params: &[], summary: "two steps; a risky second-stage action fits under the tail budget" },
    DomainInfo { name: "regret-bandit", params: &[], summary: "two-sample bandit with costs (0, 2) and (3, 1)" },
    DomainInfo {
        name: "current-field",
        params: &[("width", 7.0), ("length", 4.0), ("cost_against", 2.0)],
        summary: "two-sample corridor; the current pushes left in one sample and right in the other",
    },
    DomainInfo {
        name: "grid-nav",
        params: &[("w", 4.0), ("h", 3.0), ("slip", 0.1), ("pit_cost", 10.0), ("horizon", 0.0)],
        summary: "slippery grid from the lower-left to the upper-right corner past a row of pits (horizon 0 = 2(w + h))",
    },
    DomainInfo {
        name: "two-arm-bamdp",
        params: &[("count_win", 1.0), ("count_loss", 1.0), ("horizon", 1.0)],
        summary: "arm 0 costs 1 surely; arm 1 costs 0 or 2 under a Dirichlet prior",
    },
    DomainInfo {
        name: "random-mdp",
        params: &[("seed", 0.0), ("max_states", 3.0), ("actions", 2.0), ("max_horizon", 3.0), ("cost_levels", 2.0), ("gamma", 1.0)],
        summary: "seeded random finite-horizon MDP with costs drawn from {0, .., cost_levels - 1}",
    },
    DomainInfo {
        name: "random-uncertain",
        params: &[
            ("seed", 0.0),
            ("samples", 2.0),
            ("max_states", 3.0),
            ("actions", 2.0),
            ("max_horizon", 3.0),
            ("cost_levels", 3.0),
            ("gamma", 1.0),
        ],
        summary: "seeded random sample-based uncertain MDP over one shared random header",
    },
    DomainInfo {
        name: "four-leaf-bamdp",
        params: &[("strength", 1e6)],
        summary: "four-leaf-chain with transitions known up to a Dirichlet prior of the given strength",
    },
];

struct Params<'a> {
    spec: &'a DomainSpec,
    info: &'a DomainInfo,
}

impl Params<'_> {
    fn bad(&self, name: &str, reason: impl Into<String>) -> Error {
        Error::BadParameter { name: format!("{}.{name}", self.info.name), reason: reason.into() }
    }

    fn check_known(&self) -> Result<()> {
        for key in self.spec.params.keys() {
            if !self.info.params.iter().any(|(k, _)| k == key) {
                return Err(self.bad(key, "unknown parameter"));
            }
        }
        Ok(())
    }

    fn real(&self, name: &str) -> Result<f64> {
        let default = self.info.params.iter().find(|(k, _)| *k == name).map(|(_, v)| *v).expect("declared parameter");
        let v = self.spec.params.get(name).copied().unwrap_or(default);
        if !v.is_finite() {
            return Err(self.bad(name, "must be finite"));
        }
        Ok(v)
    }

    fn int(&self, name: &str, min: usize) -> Result<usize> {
        let v = self.real(name)?;
        if v.fract() != 0.0 || v < min as f64 || v > u32::MAX as f64 {
            return Err(self.bad(name, format!("must be an integer >= {min}, got {v}")));
        }
        Ok(v as usize)
    }
}

/// Builds the named domain.
pub fn build(spec: &DomainSpec) -> Result<Problem> {
    let info = DOMAINS.iter().find(|d| d.name == spec.name).ok_or_else(|| Error::UnknownDomain(spec.name.clone()))?;
    let p = Params { spec, info };
    p.check_known()?;
    match info.name {
        "four-leaf-chain" => Ok(Problem::Mdp(four_leaf_chain())),
        "tie-bandit" => Ok(Problem::Mdp(tie_bandit())),
        "two-step-switch" => Ok(Problem::Mdp(two_step_switch())),
        "regret-bandit" => Ok(Problem::Uncertain(regret_bandit())),
        "current-field" => {
            let cost = p.real("cost_against")?;
            if cost <= 0.0 {
                return Err(p.bad("cost_against", "must be positive"));
            }
            Ok(Problem::Uncertain(current_field(p.int("width", 1)?, p.int("length", 1)?, cost)?))
        }
        "grid-nav" => {
            let slip = p.real("slip")?;
            if !(0.0..1.0).contains(&slip) {
                return Err(p.bad("slip", format!("must lie in [0, 1), got {slip}")));
            }
            let pit = p.real("pit_cost")?;
            if pit < 0.0 {
                return Err(p.bad("pit_cost", "must be nonnegative"));
            }
            let (w, h) = (p.int("w", 2)?, p.int("h", 2)?);
            let horizon = match p.int("horizon", 0)? {
                0 => 2 * (w + h),
                k => k,
            };
            Ok(Problem::Mdp(grid_nav(w, h, slip, pit, horizon)?))
        }
        "two-arm-bamdp" => {
            let (win, loss) = (p.real("count_win")?, p.real("count_loss")?);
            for (name, v) in [("count_win", win), ("count_loss", loss)] {
                if v <= 0.0 {
                    return Err(p.bad(name, "must be positive"));
                }
            }
            Ok(Problem::Bamdp(two_arm_bamdp(win, loss, p.int("horizon", 1)?)?))
        }
        "four-leaf-bamdp" => {
            let strength = p.real("strength")?;
            if strength <= 0.0 {
                return Err(p.bad("strength", "must be positive"));
            }
            Ok(Problem::Bamdp(BamdpProblem::from_known_mdp(&four_leaf_chain(), strength)?))
        }
        "random-mdp" => {
            let (cfg, seed) = random_config(&p)?;
            Ok(Problem::Mdp(random_mdp(&mut ChaCha8Rng::seed_from_u64(seed), &cfg)?))
        }
        "random-uncertain" => {
            let (cfg, seed) = random_config(&p)?;
            let samples = p.int("samples", 1)?;
            let drawn = random_samples(&mut ChaCha8Rng::seed_from_u64(seed), &cfg, samples)?;
            Ok(Problem::Uncertain(SampleUncertainMdp::new(drawn)?))
        }
        _ => unreachable!("registered domain without a builder"),
    }
}

fn random_config(p: &Params) -> Result<(RandomMdpConfig, u64)> {
    let gamma = p.real("gamma")?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(p.bad("gamma", format!("must lie in (0, 1], got {gamma}")));
    }
    let cfg = RandomMdpConfig {
        max_states: p.int("max_states", 1)?,
        num_actions: p.int("actions", 1)?,
        max_horizon: p.int("max_horizon", 1)?,
        costs: (0..p.int("cost_levels", 1)?).map(|c| c as f64).collect(),
        gamma,
    };
    Ok((cfg, p.int("seed", 0)? as u64))
}

/// Two-step chain: `s0` moves to `sA` or `sB` with probability 1/2 each, and
/// each of those to one of two leaves. Leaf costs `AA = 4, AB = 2, BA = 2,
/// BB = 0`; the `BB = 0` leaf is a reconstruction chosen so that static and
/// dynamic CVaR at 0.5 come out at 3 and 4.
pub fn four_leaf_chain() -> Mdp {
    MdpBuilder::new(7, 1)
        .horizon(Some(2))
        .terminal(3)
        .terminal(4)
        .terminal(5)
        .terminal(6)
        .outcome(0, 0, 1, 0.5, 0.0)
        .outcome(0, 0, 2, 0.5, 0.0)
        .outcome(1, 0, 3, 0.5, 4.0)
        .outcome(1, 0, 4, 0.5, 2.0)
        .outcome(2, 0, 5, 0.5, 2.0)
        .outcome(2, 0, 6, 0.5, 0.0)
        .build()
        .expect("fixed model is valid")
}

/// One step: action 0 costs 2 surely, action 1 costs 0 or 2 with equal odds.
pub fn tie_bandit() -> Mdp {
    MdpBuilder::new(3, 2)
        .horizon(Some(1))
        .terminal(1)
        .terminal(2)
        .outcome(0, 0, 1, 1.0, 2.0)
        .outcome(0, 1, 1, 0.5, 0.0)
        .outcome(0, 1, 2, 0.5, 2.0)
        .build()
        .expect("fixed model is valid")
}

/// `s0` reaches `s1` at cost 0 or `s2` at cost 2 (1/2 each). In `s2` every
/// action costs 2; in `s1` action 0 costs 2 surely and action 1 costs 0
/// w.p. 0.9 and 2 w.p. 0.1.
pub fn two_step_switch() -> Mdp {
    MdpBuilder::new(5, 2)
        .horizon(Some(2))
        .terminal(3)
        .terminal(4)
        .outcome_all_actions(0, 1, 0.5, 0.0)
        .outcome_all_actions(0, 2, 0.5, 2.0)
        .outcome_all_actions(2, 3, 1.0, 2.0)
        .outcome(1, 0, 3, 1.0, 2.0)
        .outcome(1, 1, 3, 0.9, 0.0)
        .outcome(1, 1, 4, 0.1, 2.0)
        .build()
        .expect("fixed model is valid")
}

/// Two one-step samples: action costs `(0, 2)` in the first, `(3, 1)` in the
/// second.
pub fn regret_bandit() -> SampleUncertainMdp {
    let sample = |c0: f64, c1: f64| {
        MdpBuilder::new(2, 2)
            .horizon(Some(1))
            .terminal(1)
            .outcome(0, 0, 1, 1.0, c0)
            .outcome(0, 1, 1, 1.0, c1)
            .build()
            .expect("fixed model is valid")
    };
    SampleUncertainMdp::new(vec![sample(0.0, 2.0), sample(3.0, 1.0)]).expect("samples share a header")
}

/// A corridor `length` rows long and `width` columns wide. Every step
/// advances one row; the agent steers left (action 0) or right (action 1).
/// Sample 0 has a leftward current and sample 1 a rightward one: steering
/// with the current shifts one column for free, steering against it holds
/// the column at cost `cost_against`. The episode starts in the middle
/// column and ends after the last row.
pub fn current_field(width: usize, length: usize, cost_against: f64) -> Result<SampleUncertainMdp> {
    let goal = width * length;
    let sample = |left_current: bool| {
        let mut b = MdpBuilder::new(goal + 1, 2)
            .horizon(Some(length))
            .initial_state(width / 2)
            .terminal(goal);
        for row in 0..length {
            for col in 0..width {
                let s = row * width + col;
                let cell = |c: usize| if row + 1 == length { goal } else { (row + 1) * width + c };
                let (with, against) = if left_current { (0, 1) } else { (1, 0) };
                let shifted = if left_current { col.saturating_sub(1) } else { (col + 1).min(width - 1) };
                b.add(s, with, cell(shifted), 1.0, 0.0);
                b.add(s, against, cell(col), 1.0, cost_against);
            }
        }
        b.build()
    };
    SampleUncertainMdp::new(vec![sample(true)?, sample(false)?])
}

/// A `w × h` grid, start at `(0, 0)`, goal at `(w - 1, h - 1)`, pits on the
/// interior of the bottom row. Actions move up, right, down, left; the move
/// slips to each perpendicular direction with probability `slip / 2`, and
/// moves into a wall stay put. Each step costs 1, falling into a pit costs
/// `pit_cost`. Goal and pits are terminal.
pub fn grid_nav(w: usize, h: usize, slip: f64, pit_cost: f64, horizon: usize) -> Result<Mdp> {
    let index = |x: usize, y: usize| y * w + x;
    let is_pit = |x: usize, y: usize| y == 0 && x > 0 && x + 1 < w;
    let goal = index(w - 1, h - 1);
    let mut b = MdpBuilder::new(w * h, 4).horizon(Some(horizon)).initial_state(0).terminal(goal);
    for x in 1..w.saturating_sub(1) {
        b = b.terminal(index(x, 0));
    }
    const MOVES: [(i64, i64); 4] = [(0, 1), (1, 0), (0, -1), (-1, 0)];
    for y in 0..h {
        for x in 0..w {
            let s = index(x, y);
            if s == goal || is_pit(x, y) {
                continue;
            }
            for a in 0..4 {
                let mut outcomes: BTreeMap<usize, f64> = BTreeMap::new();
                for (dir, p) in [(a, 1.0 - slip), ((a + 1) % 4, slip / 2.0), ((a + 3) % 4, slip / 2.0)] {
                    if p == 0.0 {
                        continue;
                    }
                    let (dx, dy) = MOVES[dir];
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    let next = if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 { s } else { index(nx as usize, ny as usize) };
                    *outcomes.entry(next).or_insert(0.0) += p;
                }
                for (next, p) in outcomes {
                    let cost = if is_pit(next % w, next / w) { pit_cost } else { 1.0 };
                    b.add(s, a, next, p, cost);
                }
            }
        }
    }
    b.build()
}

/// States `{0, 1}`, both decision states. Arm 0 returns to state 0 at cost
/// 1. Arm 1 reaches state 0 at cost 0 or state 1 at cost 2, with Dirichlet
/// prior counts `(count_win, count_loss)`. Each arm has one set of
/// parameters shared by both states, so every pull informs the next.
pub fn two_arm_bamdp(count_win: f64, count_loss: f64, horizon: usize) -> Result<BamdpProblem> {
    let mut prior = Vec::new();
    for s in 0..2 {
        prior.push(PriorRow { s, a: 0, group: Some("arm0".into()), next: vec![PriorEntry { sp: 0, count: 1.0, cost: 1.0 }] });
        prior.push(PriorRow {
            s,
            a: 1,
            group: Some("arm1".into()),
            next: vec![PriorEntry { sp: 0, count: count_win, cost: 0.0 }, PriorEntry { sp: 1, count: count_loss, cost: 2.0 }],
        });
    }
    BamdpFile { num_states: 2, num_actions: 2, gamma: 1.0, horizon, initial_state: 0, terminals: Vec::new(), prior }.into_problem()
}

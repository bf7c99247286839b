use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use riskplan::bamdp::{exact_bamdp_cvar, solve_bamdp_cvar_mcts, BamdpProblem, SearchConfig, SearchResult};
use riskplan::cvar::{
    dynamic_cvar_evaluation, solve_dynamic_cvar, solve_lexicographic, solve_static_cvar,
    AugmentedPolicy, LexPolicy, YGrid,
};
use riskplan::cvar::oracle::exact_static_cvar;
use riskplan::domains::Problem;
use riskplan::mdp::{policy_evaluation, return_distribution, value_iteration, MarkovPolicy, Mdp};
use riskplan::risk::cvar;
use riskplan::uncertain::{
    evaluate_option_regret, evaluate_regret, exact_minimax_regret, option_regret_game_evaluation,
    regret_game_evaluation, robust_policy_evaluation, robust_value_iteration, solve_minimax_regret_approx,
    solve_minimax_regret_options, ExactRegret, OptionPolicy, PolicyClass, SampleUncertainMdp,
};

use crate::config::{ExperimentConfig, Solver, SolverParams, VerifyMode, VerifySpec};
use crate::error::{CliError, Result};

/// Tolerance for `eval-policy` round trips.
pub const ROUND_TRIP_TOL: f64 = 1e-9;

/// Solver output: the reported value and the exported policy payload.
#[derive(Debug, Clone)]
pub struct Solved {
    pub value: f64,
    pub payload: Value,
    policy: Policy,
}

#[derive(Debug, Clone)]
enum Policy {
    Markov(MarkovPolicy),
    Augmented(AugmentedPolicy),
    Options(OptionPolicy),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verification {
    pub oracle_value: f64,
    pub gap: f64,
    pub passed: bool,
}

/// Policy export written by `solve` and `sweep`, read by `eval-policy`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub config: ExperimentConfig,
    pub solver: Solver,
    pub value: f64,
    pub payload: Value,
}

/// Everything produced for one config cell.
#[derive(Debug)]
pub struct CellOutcome {
    pub config: ExperimentConfig,
    pub wall_ms: u128,
    pub result: Result<(Solved, Option<Verification>)>,
}

impl CellOutcome {
    pub fn value(&self) -> Option<f64> {
        self.result.as_ref().ok().map(|(s, _)| s.value)
    }

    pub fn verification(&self) -> Option<Verification> {
        self.result.as_ref().ok().and_then(|(_, v)| *v)
    }

    /// Error for the exit status: the run failure, or a failed verification.
    pub fn failure(&self) -> Option<CliError> {
        match &self.result {
            Err(e) => Some(e.clone()),
            Ok((s, Some(v))) if !v.passed => Some(CliError::Mismatch(format!(
                "{} on {}: value {:?} vs oracle {:?} (gap {:?})",
                self.config.solver.name(),
                self.config.problem.label(),
                s.value,
                v.oracle_value,
                v.gap
            ))),
            _ => None,
        }
    }

    pub fn policy_file(&self) -> Option<PolicyFile> {
        let (solved, _) = self.result.as_ref().ok()?;
        Some(PolicyFile {
            config: self.config.clone(),
            solver: self.config.solver,
            value: solved.value,
            payload: solved.payload.clone(),
        })
    }
}

/// Runs one resolved cell: load, solve, and verify if requested.
pub fn run_cell(config: &ExperimentConfig) -> CellOutcome {
    let start = Instant::now();
    let result = (|| {
        config.validate()?;
        let problem = config.problem.load()?;
        let solved = solve(config, &problem)?;
        let verification = match &config.verify {
            Some(spec) => Some(verify(config, &problem, &solved, spec)?),
            None => None,
        };
        Ok((solved, verification))
    })();
    log::info!("{} on {}: {:?}", config.solver.name(), config.problem.label(), result.as_ref().map(|r| r.0.value));
    CellOutcome { config: config.clone(), wall_ms: start.elapsed().as_millis(), result }
}

fn expect_mdp<'a>(solver: Solver, problem: &'a Problem) -> Result<&'a Mdp> {
    match problem {
        Problem::Mdp(m) => Ok(m),
        other => Err(kind_mismatch(solver, other)),
    }
}

fn expect_uncertain<'a>(solver: Solver, problem: &'a Problem) -> Result<&'a SampleUncertainMdp> {
    match problem {
        Problem::Uncertain(u) => Ok(u),
        other => Err(kind_mismatch(solver, other)),
    }
}

fn expect_bamdp<'a>(solver: Solver, problem: &'a Problem) -> Result<&'a BamdpProblem> {
    match problem {
        Problem::Bamdp(b) => Ok(b),
        other => Err(kind_mismatch(solver, other)),
    }
}

fn kind_mismatch(solver: Solver, problem: &Problem) -> CliError {
    CliError::Config(format!("{} needs a {} problem, got {}", solver.name(), solver.problem_kind(), problem.kind()))
}

fn alpha(params: &SolverParams) -> f64 {
    params.alpha.expect("validated")
}

fn grid(params: &SolverParams) -> Result<YGrid> {
    let a = alpha(params);
    Ok(YGrid::log_spaced(params.grid_points, params.grid_min.min(a), &[a, 1.0])?)
}

fn search_config(params: &SolverParams, seed: u64) -> SearchConfig {
    SearchConfig {
        iterations: params.iterations,
        time_budget_ms: params.time_budget_ms,
        exploration: params.exploration,
        widening_c: params.widening_c,
        widening_exponent: params.widening_exponent,
        seed,
    }
}

fn regret_class(params: &SolverParams) -> PolicyClass {
    if params.stochastic {
        PolicyClass::GridStochastic { step: params.step }
    } else {
        PolicyClass::Deterministic
    }
}

fn risk_of(mdp: &Mdp, policy: &MarkovPolicy, params: &SolverParams) -> Result<Value> {
    let Some(risk) = params.risk else { return Ok(Value::Null) };
    let horizon = mdp
        .horizon()
        .ok_or_else(|| CliError::Config("`risk` needs a finite-horizon problem".into()))?;
    let dist = return_distribution(mdp, policy, horizon)?;
    Ok(json!({ "spec": risk, "value": risk.evaluate(&dist) }))
}

/// Dispatches the configured solver.
pub fn solve(config: &ExperimentConfig, problem: &Problem) -> Result<Solved> {
    let p = &config.params;
    let solver = config.solver;
    let seed = config.seed.unwrap_or(0);
    let cap = p.cap as usize;
    let solved = match solver {
        Solver::Ev => {
            let m = expect_mdp(solver, problem)?;
            let sol = value_iteration(m, p.tol)?;
            let risk = risk_of(m, &sol.policy, p)?;
            Solved {
                value: sol.values()[m.initial_state()],
                payload: json!({ "policy": sol.policy, "risk": risk }),
                policy: Policy::Markov(sol.policy),
            }
        }
        Solver::StaticCvar => {
            let m = expect_mdp(solver, problem)?;
            let sol = solve_static_cvar(m, alpha(p), &grid(p)?, p.tol)?;
            let executed = match m.horizon() {
                Some(_) => Some(sol.execution_slack(m)?.0),
                None => None,
            };
            Solved {
                value: sol.root_value(m),
                payload: json!({ "alpha": alpha(p), "policy": sol.policy, "executed_cvar": executed }),
                policy: Policy::Augmented(sol.policy),
            }
        }
        Solver::DynamicCvar => {
            let m = expect_mdp(solver, problem)?;
            let sol = solve_dynamic_cvar(m, alpha(p), p.tol)?;
            let risk = risk_of(m, &sol.policy, p)?;
            Solved {
                value: sol.values()[m.initial_state()],
                payload: json!({ "policy": sol.policy, "risk": risk }),
                policy: Policy::Markov(sol.policy),
            }
        }
        Solver::Lexicographic => {
            let m = expect_mdp(solver, problem)?;
            let sol = solve_lexicographic(m, alpha(p), &grid(p)?, p.tol)?;
            Solved {
                value: sol.cvar(),
                payload: json!({
                    "policy": sol.policy,
                    "base_cvar": sol.base_cvar(),
                    "expected_cost": sol.distribution.mean(),
                    "base_expected_cost": sol.base_distribution.mean(),
                }),
                policy: Policy::None,
            }
        }
        Solver::Robust => {
            let u = expect_uncertain(solver, problem)?;
            let sol = robust_value_iteration(u, p.tol)?;
            Solved {
                value: sol.values()[u.header().initial_state()],
                payload: json!({ "policy": sol.policy }),
                policy: Policy::Markov(sol.policy),
            }
        }
        Solver::MinimaxRegret => {
            let u = expect_uncertain(solver, problem)?;
            let sol = solve_minimax_regret_approx(u, p.tol, p.stochastic)?;
            Solved {
                value: sol.root_value(u),
                payload: json!({ "stochastic": p.stochastic, "policy": sol.policy }),
                policy: Policy::Markov(sol.policy),
            }
        }
        Solver::MinimaxRegretOptions => {
            let u = expect_uncertain(solver, problem)?;
            let sol = solve_minimax_regret_options(u, p.n.expect("validated"), p.tol, cap)?;
            Solved { value: sol.root_value(u), payload: json!({ "policy": sol.policy }), policy: Policy::Options(sol.policy) }
        }
        Solver::BamdpCvar => {
            let b = expect_bamdp(solver, problem)?;
            let search = search_config(p, seed);
            let found = solve_bamdp_cvar_mcts(b, alpha(p), &search)?;
            Solved { value: found.value, payload: json!({ "search": search, "result": found }), policy: Policy::None }
        }
        Solver::OracleStaticCvar => {
            let m = expect_mdp(solver, problem)?;
            let (value, action) = exact_static_cvar(m, alpha(p), cap)?;
            Solved { value, payload: json!({ "first_action": action }), policy: Policy::None }
        }
        Solver::OracleMinimaxRegret => {
            let u = expect_uncertain(solver, problem)?;
            let sol = exact_minimax_regret(u, regret_class(p), p.tol, p.cap as u128)?;
            Solved { value: sol.value, payload: json!({ "result": sol }), policy: Policy::None }
        }
        Solver::OracleBamdpCvar => {
            let b = expect_bamdp(solver, problem)?;
            let sol = exact_bamdp_cvar(b, alpha(p), cap)?;
            Solved { value: sol.value, payload: json!({ "result": sol }), policy: Policy::None }
        }
    };
    Ok(solved)
}

/// Default tolerance per solver and verification mode.
fn default_tol(solver: Solver, mode: VerifyMode, spec: &VerifySpec, params: &SolverParams) -> f64 {
    match (solver, mode) {
        (Solver::StaticCvar | Solver::Lexicographic, VerifyMode::Oracle) => 0.02,
        (Solver::MinimaxRegret | Solver::MinimaxRegretOptions, VerifyMode::Bound) => 1e-6,
        (Solver::MinimaxRegret, VerifyMode::Oracle) => match oracle_class(spec, params) {
            PolicyClass::Deterministic => 1e-6,
            PolicyClass::GridStochastic { step } => step,
        },
        (Solver::BamdpCvar, _) => 0.1,
        _ => 1e-9,
    }
}

fn oracle_class(spec: &VerifySpec, params: &SolverParams) -> PolicyClass {
    match (spec.deterministic, spec.grid) {
        (true, _) => PolicyClass::Deterministic,
        (false, Some(step)) => PolicyClass::GridStochastic { step },
        (false, None) => regret_class(params),
    }
}

/// Checks a solver result against its oracle.
///
/// `oracle` mode: exact enumeration where one exists (ev, static-cvar,
/// lexicographic, minimax-regret, bamdp-cvar), otherwise an independent
/// re-evaluation of the returned policy (dynamic-cvar, robust). `bound` mode:
/// the evaluated value of the returned policy must not exceed the reported
/// value (minimax-regret, minimax-regret-options, static-cvar).
pub fn verify(config: &ExperimentConfig, problem: &Problem, solved: &Solved, spec: &VerifySpec) -> Result<Verification> {
    let solver = config.solver;
    let p = &config.params;
    let default_mode = if solver == Solver::MinimaxRegretOptions { VerifyMode::Bound } else { VerifyMode::Oracle };
    let mode = spec.mode.unwrap_or(default_mode);
    let tol = spec.tol.unwrap_or_else(|| default_tol(solver, mode, spec, p));
    let cap = spec.cap.unwrap_or(p.cap);
    let unsupported = || CliError::Config(format!("{} does not support `{mode:?}` verification", solver.name()));

    let oracle = match (mode, &solved.policy) {
        (VerifyMode::Oracle, _) => match solver {
            Solver::Ev => {
                let m = expect_mdp(solver, problem)?;
                match (m.horizon(), &solved.policy) {
                    (Some(_), _) => exact_static_cvar(m, 1.0, cap as usize)?.0,
                    (None, Policy::Markov(pi)) => policy_evaluation(m, pi, p.tol)?[m.initial_state()],
                    _ => unreachable!("ev returns a Markov policy"),
                }
            }
            Solver::StaticCvar | Solver::Lexicographic => {
                let m = expect_mdp(solver, problem)?;
                exact_static_cvar(m, alpha(p), cap as usize)?.0
            }
            Solver::DynamicCvar => {
                let (m, Policy::Markov(pi)) = (expect_mdp(solver, problem)?, &solved.policy) else { unreachable!() };
                dynamic_cvar_evaluation(m, pi, alpha(p), p.tol)?[m.initial_state()]
            }
            Solver::Robust => {
                let (u, Policy::Markov(pi)) = (expect_uncertain(solver, problem)?, &solved.policy) else { unreachable!() };
                robust_policy_evaluation(u, pi, p.tol)?[u.header().initial_state()]
            }
            Solver::MinimaxRegret => {
                let u = expect_uncertain(solver, problem)?;
                exact_minimax_regret(u, oracle_class(spec, p), p.tol, cap as u128)?.value
            }
            Solver::BamdpCvar => exact_bamdp_cvar(expect_bamdp(solver, problem)?, alpha(p), cap as usize)?.value,
            _ => return Err(unsupported()),
        },
        (VerifyMode::Bound, Policy::Markov(pi)) if solver == Solver::MinimaxRegret => {
            evaluate_regret(expect_uncertain(solver, problem)?, pi, p.tol)?.max
        }
        (VerifyMode::Bound, Policy::Options(pi)) => evaluate_option_regret(expect_uncertain(solver, problem)?, pi, p.tol)?.max,
        (VerifyMode::Bound, Policy::Augmented(pi)) => {
            let m = expect_mdp(solver, problem)?;
            cvar(&pi.executed_distribution(m, alpha(p))?, alpha(p))
        }
        (VerifyMode::Bound, _) => return Err(unsupported()),
    };
    let gap = (solved.value - oracle).abs();
    let passed = match mode {
        VerifyMode::Oracle => gap <= tol,
        VerifyMode::Bound if solver == Solver::StaticCvar => solved.value <= oracle + tol,
        VerifyMode::Bound => oracle <= solved.value + tol,
    };
    Ok(Verification { oracle_value: oracle, gap, passed })
}

/// Result of re-evaluating an exported policy.
#[derive(Debug, Clone, Serialize)]
pub struct Reevaluation {
    pub solver: Solver,
    pub stored: f64,
    pub recomputed: f64,
    pub diff: f64,
    pub passed: bool,
}

fn field<T: serde::de::DeserializeOwned>(payload: &Value, key: &str) -> Result<T> {
    let v = payload.get(key).ok_or_else(|| CliError::Problem(format!("policy payload lacks `{key}`")))?;
    serde_json::from_value(v.clone()).map_err(|e| CliError::Problem(format!("policy payload `{key}`: {e}")))
}

/// Recomputes the stored value from the exported policy alone, without
/// re-running the solver (searches and oracles are re-run from their seed).
pub fn reevaluate(file: &PolicyFile) -> Result<Reevaluation> {
    let config = &file.config;
    let p = &config.params;
    let solver = file.solver;
    let problem = config.problem.load()?;
    let payload = &file.payload;
    let recomputed = match solver {
        Solver::Ev => {
            let m = expect_mdp(solver, &problem)?;
            policy_evaluation(m, &field::<MarkovPolicy>(payload, "policy")?, p.tol)?[m.initial_state()]
        }
        Solver::StaticCvar => {
            let m = expect_mdp(solver, &problem)?;
            let pi: AugmentedPolicy = field(payload, "policy")?;
            let a: f64 = field(payload, "alpha")?;
            let value = pi.value(m.initial_state(), a, m.horizon().unwrap_or(1));
            if let Some(stored) = field::<Option<f64>>(payload, "executed_cvar")? {
                let executed = cvar(&pi.executed_distribution(m, a)?, a);
                if (executed - stored).abs() > ROUND_TRIP_TOL {
                    return Err(CliError::Mismatch(format!("executed CVaR {executed:?} vs stored {stored:?}")));
                }
            }
            value
        }
        Solver::DynamicCvar => {
            let m = expect_mdp(solver, &problem)?;
            dynamic_cvar_evaluation(m, &field::<MarkovPolicy>(payload, "policy")?, alpha(p), p.tol)?[m.initial_state()]
        }
        Solver::Lexicographic => {
            let m = expect_mdp(solver, &problem)?;
            let pi: LexPolicy = field(payload, "policy")?;
            cvar(&pi.return_distribution(m)?, pi.alpha)
        }
        Solver::Robust => {
            let u = expect_uncertain(solver, &problem)?;
            robust_policy_evaluation(u, &field::<MarkovPolicy>(payload, "policy")?, p.tol)?[u.header().initial_state()]
        }
        Solver::MinimaxRegret => {
            let u = expect_uncertain(solver, &problem)?;
            regret_game_evaluation(u, &field::<MarkovPolicy>(payload, "policy")?, p.tol)?[u.header().initial_state()]
        }
        Solver::MinimaxRegretOptions => {
            let u = expect_uncertain(solver, &problem)?;
            option_regret_game_evaluation(u, &field::<OptionPolicy>(payload, "policy")?, p.tol)?[u.header().initial_state()]
        }
        Solver::BamdpCvar => {
            let b = expect_bamdp(solver, &problem)?;
            let search: SearchConfig = field(payload, "search")?;
            let stored: SearchResult = field(payload, "result")?;
            let found = solve_bamdp_cvar_mcts(b, alpha(p), &search)?;
            if found.action != stored.action {
                return Err(CliError::Mismatch(format!("search picked action {} vs stored {}", found.action, stored.action)));
            }
            found.value
        }
        Solver::OracleStaticCvar => exact_static_cvar(expect_mdp(solver, &problem)?, alpha(p), p.cap as usize)?.0,
        Solver::OracleMinimaxRegret => {
            let u = expect_uncertain(solver, &problem)?;
            let stored: ExactRegret = field(payload, "result")?;
            evaluate_regret(u, &stored.policy, p.tol)?.max
        }
        Solver::OracleBamdpCvar => exact_bamdp_cvar(expect_bamdp(solver, &problem)?, alpha(p), p.cap as usize)?.value,
    };
    let diff = (recomputed - file.value).abs();
    Ok(Reevaluation { solver, stored: file.value, recomputed, diff, passed: diff <= ROUND_TRIP_TOL })
}

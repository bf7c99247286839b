//! Acceptance run: one pass/fail line per criterion, each checked through the
//! library and, where the criterion is expressible as a config, through the
//! `riskplan` binary at `--jobs 1` and `--jobs 4`.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use tempfile::TempDir;

use riskplan::bamdp::{exact_bamdp_cvar, solve_bamdp_cvar_mcts, SearchConfig, DEFAULT_HYPERSTATE_CAP};
use riskplan::cvar::oracle::{exact_static_cvar, DEFAULT_POLICY_CAP};
use riskplan::cvar::{solve_dynamic_cvar, solve_lexicographic, solve_static_cvar, YGrid};
use riskplan::domains::{build, current_field, four_leaf_chain, regret_bandit, two_arm_bamdp, DomainSpec, Problem};
use riskplan::mdp::{value_iteration, CostDistribution, Mdp};
use riskplan::risk::coherence::{check_axiom, find_monotonicity_witness, Axiom};
use riskplan::risk::{cvar, mean_variance};
use riskplan::uncertain::{
    evaluate_option_regret, evaluate_regret, exact_minimax_regret, solve_minimax_regret_approx,
    solve_minimax_regret_options, PolicyClass, SampleUncertainMdp, DEFAULT_PLAN_CAP, DEFAULT_POLICY_CAP as REGRET_CAP,
};

const TOL: f64 = 1e-10;

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// CSV rows of one CLI sweep, run at both parallelism levels.
struct CliRun {
    rows: Vec<Vec<String>>,
    out: std::path::PathBuf,
}

impl CliRun {
    fn col(&self, i: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect()
    }

    fn statuses(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r[9].as_str()).collect()
    }

    fn policy(&self, cell: usize) -> Value {
        let text = std::fs::read_to_string(self.out.join(format!("policies/cell-{cell:04}.json"))).unwrap();
        serde_json::from_str(&text).unwrap()
    }
}

struct Harness {
    dir: TempDir,
    /// (label, identical at --jobs 1 and --jobs 4)
    determinism: Vec<(String, bool)>,
}

impl Harness {
    fn sweep(&mut self, name: &str, config: Value, verify: &[&str]) -> std::result::Result<CliRun, String> {
        let path = self.dir.path().join(format!("{name}.json"));
        std::fs::write(&path, config.to_string()).map_err(|e| e.to_string())?;
        let mut outputs = Vec::new();
        for jobs in ["1", "4"] {
            let out = self.dir.path().join(format!("{name}-jobs{jobs}"));
            let mut args = vec!["sweep", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", jobs];
            if !verify.is_empty() {
                args.push("--verify");
                args.extend_from_slice(verify);
            }
            let o = Command::new(env!("CARGO_BIN_EXE_riskplan")).args(&args).output().map_err(|e| e.to_string())?;
            let stdout = String::from_utf8_lossy(&o.stdout).into_owned();
            ensure(o.status.success(), || {
                format!("{name}: exit {:?}: {}\n{stdout}", o.status.code(), String::from_utf8_lossy(&o.stderr))
            })?;
            let file = std::fs::read(out.join("results.csv")).map_err(|e| e.to_string())?;
            outputs.push((stdout, file, out));
        }
        let same = outputs[0].0 == outputs[1].0 && outputs[0].1 == outputs[1].1;
        self.determinism.push((name.to_string(), same));
        let (stdout, _, out) = outputs.swap_remove(0);
        let mut reader = csv::Reader::from_reader(stdout.as_bytes());
        let rows = reader.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
        Ok(CliRun { rows, out })
    }
}

fn domain(name: &str) -> Value {
    json!({ "domain": { "name": name } })
}

fn random_mdp(seed: u64) -> Mdp {
    match build(&DomainSpec::new("random-mdp").with("seed", seed as f64)).unwrap() {
        Problem::Mdp(m) => m,
        _ => unreachable!(),
    }
}

fn random_uncertain(seed: u64) -> SampleUncertainMdp {
    match build(&DomainSpec::new("random-uncertain").with("seed", seed as f64)).unwrap() {
        Problem::Uncertain(u) => u,
        _ => unreachable!(),
    }
}

fn criterion_1(h: &mut Harness) -> Check {
    let m = four_leaf_chain();
    let s = solve_static_cvar(&m, 0.5, &YGrid::for_alpha(0.5).unwrap(), TOL).unwrap().root_value(&m);
    let d = solve_dynamic_cvar(&m, 0.5, TOL).unwrap().values()[m.initial_state()];
    ensure((s - 3.0).abs() <= 1e-9 && (d - 4.0).abs() <= 1e-9, || format!("static {s:?}, dynamic {d:?}"))?;

    let run = h.sweep(
        "c1",
        json!({ "problem": domain("four-leaf-chain"), "solver": "static-cvar", "params": { "alpha": 0.5 },
                "sweep": { "solver": ["static-cvar", "dynamic-cvar"] } }),
        &[],
    )?;
    let v = run.col(5);
    ensure((v[0] - 3.0).abs() <= 1e-9 && (v[1] - 4.0).abs() <= 1e-9, || format!("CLI rows {v:?}"))?;
    Ok(format!("static {s:?}, dynamic {d:?}; CLI rows {v:?}"))
}

fn criterion_2(_: &mut Harness) -> Check {
    let mut worst = 0.0f64;
    for axiom in Axiom::ALL {
        let report = check_axiom(axiom, cvar, 1000, 2, 1e-9);
        ensure(report.passed(), || format!("CVaR: {report}"))?;
        worst = worst.max(report.worst_violation);
    }
    let mv = |d: &CostDistribution| mean_variance(d, 1.0);
    let ti = check_axiom(Axiom::TranslationInvariance, |d, _| mv(d), 1000, 2, 1e-9);
    ensure(ti.passed(), || format!("mean-variance: {ti}"))?;
    let (low, high) = find_monotonicity_witness(mv, 10_000, 2, 1e-9).ok_or("no mean-variance monotonicity witness")?;
    Ok(format!(
        "4 axioms x 1000 trials, worst violation {worst:.1e}; mean-variance witness {:.3} > {:.3}",
        mv(&low),
        mv(&high)
    ))
}

fn criterion_3(h: &mut Harness) -> Check {
    const INSTANCES: u64 = 200;
    let alphas = [0.1, 0.25, 0.5, 0.75];
    let mut worst = 0.0f64;
    for seed in 0..INSTANCES {
        let m = random_mdp(seed);
        for alpha in alphas {
            let dp = solve_static_cvar(&m, alpha, &YGrid::for_alpha(alpha).unwrap(), TOL).unwrap().root_value(&m);
            let (oracle, _) = exact_static_cvar(&m, alpha, DEFAULT_POLICY_CAP).unwrap();
            worst = worst.max((dp - oracle).abs());
            ensure((dp - oracle).abs() <= 0.02, || format!("seed {seed} alpha {alpha}: {dp} vs oracle {oracle}"))?;
        }
        let one = solve_static_cvar(&m, 1.0, &YGrid::for_alpha(1.0).unwrap(), TOL).unwrap().root_value(&m);
        let vi = value_iteration(&m, TOL).unwrap().values()[m.initial_state()];
        ensure((one - vi).abs() <= 1e-6, || format!("seed {seed}: CVaR_1 {one} vs VI {vi}"))?;
    }

    let seeds = json!({ "range": [0, INSTANCES] });
    let run = h.sweep(
        "c3",
        json!({ "problem": domain("random-mdp"), "solver": "static-cvar", "params": { "alpha": 0.5 },
                "sweep": { "domain.seed": seeds, "alpha": [0.25, 0.5] } }),
        &["oracle", "tol", "0.02"],
    )?;
    ensure(run.rows.len() == 2 * INSTANCES as usize && run.statuses().iter().all(|s| *s == "pass"), || {
        format!("CLI static-cvar rows: {:?}", run.statuses().iter().filter(|s| **s != "pass").collect::<Vec<_>>())
    })?;
    let run = h.sweep(
        "c3-alpha1",
        json!({ "problem": domain("random-mdp"), "solver": "static-cvar", "params": { "alpha": 1.0 },
                "sweep": { "domain.seed": seeds, "solver": ["static-cvar", "ev"] } }),
        &[],
    )?;
    let v = run.col(5);
    let gap = v.chunks(2).map(|p| (p[0] - p[1]).abs()).fold(0.0, f64::max);
    ensure(gap <= 1e-6, || format!("CLI CVaR_1 vs ev gap {gap}"))?;
    Ok(format!("{INSTANCES} MDPs x alpha {alphas:?}: worst oracle gap {worst:.2e}; CVaR_1 = VI within {gap:.1e}"))
}

fn criterion_4(h: &mut Harness) -> Check {
    let mut detail = Vec::new();
    for (name, m, base_ev, lex_ev) in [
        ("tie-bandit", riskplan::domains::tie_bandit(), 2.0, 1.0),
        ("two-step-switch", riskplan::domains::two_step_switch(), 3.0, 2.1),
    ] {
        let sol = solve_lexicographic(&m, 0.5, &YGrid::for_alpha(0.5).unwrap(), TOL).unwrap();
        let (b, e) = (sol.base_distribution.mean(), sol.distribution.mean());
        ensure((sol.cvar() - sol.base_cvar()).abs() <= 1e-9, || format!("{name}: CVaR {} vs base {}", sol.cvar(), sol.base_cvar()))?;
        ensure((b - base_ev).abs() <= 1e-9 && (e - lex_ev).abs() <= 1e-9 && e < b, || format!("{name}: expected cost {b} -> {e}"))?;
        detail.push(format!("{name} {b:?}->{e:?}"));
    }

    let run = h.sweep(
        "c4",
        json!({ "problem": domain("tie-bandit"), "solver": "lexicographic", "params": { "alpha": 0.5 },
                "sweep": { "domain": ["tie-bandit", "two-step-switch"] } }),
        &[],
    )?;
    for (cell, want) in [(0, 1.0), (1, 2.1)] {
        let p = &run.policy(cell)["payload"];
        let (base, ev) = (p["base_cvar"].as_f64().unwrap(), p["expected_cost"].as_f64().unwrap());
        ensure((run.col(5)[cell] - base).abs() <= 1e-9 && (ev - want).abs() <= 1e-9, || format!("CLI cell {cell}: {p}"))?;
    }
    Ok(detail.join(", "))
}

fn criterion_5(h: &mut Harness) -> Check {
    let u = regret_bandit();
    let det = solve_minimax_regret_approx(&u, TOL, false).unwrap().root_value(&u);
    let stoch = solve_minimax_regret_approx(&u, TOL, true).unwrap().root_value(&u);
    let det_oracle = exact_minimax_regret(&u, PolicyClass::Deterministic, TOL, REGRET_CAP).unwrap().value;
    let grid_oracle = exact_minimax_regret(&u, PolicyClass::GridStochastic { step: 0.01 }, TOL, REGRET_CAP).unwrap().value;
    ensure((det - 2.0).abs() <= 1e-9 && (det_oracle - det).abs() <= 1e-9, || format!("deterministic {det} vs oracle {det_oracle}"))?;
    ensure((stoch - 1.0).abs() <= 1e-6 && (grid_oracle - stoch).abs() <= 1e-6, || format!("stochastic {stoch} vs oracle {grid_oracle}"))?;

    const INSTANCES: u64 = 120;
    let mut slack = f64::INFINITY;
    for seed in 0..INSTANCES {
        let u = random_uncertain(seed);
        for stochastic in [false, true] {
            let sol = solve_minimax_regret_approx(&u, TOL, stochastic).unwrap();
            let eval = evaluate_regret(&u, &sol.policy, TOL).unwrap();
            ensure(eval.max <= sol.root_value(&u) + 1e-6, || format!("seed {seed}: regret {} > value {}", eval.max, sol.root_value(&u)))?;
            slack = slack.min(sol.root_value(&u) - eval.max);
        }
    }

    let bandit = |stochastic: bool| json!({ "problem": domain("regret-bandit"), "solver": "minimax-regret",
                                            "params": { "stochastic": stochastic }, "sweep": { "stochastic": [stochastic] } });
    let d = h.sweep("c5-det", bandit(false), &["oracle", "deterministic"])?;
    let s = h.sweep("c5-stoch", bandit(true), &["oracle", "grid", ".01"])?;
    ensure(d.statuses() == ["pass"] && s.statuses() == ["pass"], || format!("CLI bandit {:?} {:?}", d.rows, s.rows))?;
    let r = h.sweep(
        "c5-random",
        json!({ "problem": domain("random-uncertain"), "solver": "minimax-regret",
                "sweep": { "domain.seed": { "range": [0, INSTANCES] }, "stochastic": [false, true] } }),
        &["bound", "tol", "1e-6"],
    )?;
    ensure(r.rows.len() == 2 * INSTANCES as usize && r.statuses().iter().all(|s| *s == "pass"), || "CLI bound rows failed".into())?;
    Ok(format!("bandit {det:?}/{stoch:.9}; {INSTANCES} instances x 2 variants, min slack {slack:.2e}"))
}

fn criterion_6(h: &mut Harness) -> Check {
    let u = current_field(7, 4, 2.0).unwrap();
    let approx = solve_minimax_regret_approx(&u, TOL, false).unwrap();
    let one = solve_minimax_regret_options(&u, 1, TOL, DEFAULT_PLAN_CAP).unwrap();
    let two = solve_minimax_regret_options(&u, 2, TOL, DEFAULT_PLAN_CAP).unwrap();
    let diff = approx.values().iter().zip(one.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(diff <= 1e-9, || format!("n=1 differs from the approximation by {diff}"))?;
    let r1 = evaluate_option_regret(&u, &one.policy, TOL).unwrap().max;
    let r2 = evaluate_option_regret(&u, &two.policy, TOL).unwrap().max;
    ensure(r2 <= r1 + 1e-9, || format!("n=2 regret {r2} > n=1 regret {r1}"))?;

    let field = json!({ "domain": { "name": "current-field", "params": { "width": 7, "length": 4, "cost_against": 2 } } });
    let same = h.sweep(
        "c6-n1",
        json!({ "problem": field, "solver": "minimax-regret", "params": { "n": 1 },
                "sweep": { "solver": ["minimax-regret", "minimax-regret-options"] } }),
        &[],
    )?;
    let v = same.col(5);
    ensure((v[0] - v[1]).abs() <= 1e-9, || format!("CLI n=1 {} vs approx {}", v[1], v[0]))?;
    let ns = h.sweep(
        "c6-n",
        json!({ "problem": field, "solver": "minimax-regret-options", "sweep": { "n": [1, 2] } }),
        &["bound"],
    )?;
    let regret = ns.col(6);
    ensure(regret[1] <= regret[0] + 1e-9 && ns.statuses() == ["pass", "pass"], || format!("CLI evaluated regret {regret:?}"))?;
    Ok(format!("evaluated max regret n=1 {r1:.4}, n=2 {r2:.4}; n=1 vs approximation {diff:.1e}"))
}

fn criterion_7(h: &mut Harness) -> Check {
    let q = two_arm_bamdp(1.0, 1.0, 1).unwrap();
    let config = SearchConfig { iterations: 50_000, seed: 1, ..SearchConfig::default() };
    let mut detail = Vec::new();
    for alpha in [0.5, 1.0] {
        let oracle = exact_bamdp_cvar(&q, alpha, DEFAULT_HYPERSTATE_CAP).unwrap();
        let found = solve_bamdp_cvar_mcts(&q, alpha, &config).unwrap();
        ensure((found.value - oracle.value).abs() <= 0.1, || format!("alpha {alpha}: {} vs oracle {}", found.value, oracle.value))?;
        if alpha == 0.5 {
            ensure(found.action == oracle.action, || format!("action {} vs oracle {}", found.action, oracle.action))?;
        }
        detail.push(format!("alpha {alpha}: {:.4} vs {:.4}", found.value, oracle.value));
    }

    let run = h.sweep(
        "c7",
        json!({ "problem": domain("two-arm-bamdp"), "solver": "bamdp-cvar", "params": { "iterations": 50000 }, "seed": 1,
                "sweep": { "alpha": [0.5, 1.0] } }),
        &["oracle", "tol", "0.1"],
    )?;
    ensure(run.statuses() == ["pass", "pass"], || format!("CLI rows {:?}", run.rows))?;
    let action = run.policy(0)["payload"]["result"]["action"].as_u64();
    ensure(action == Some(0), || format!("CLI action at 0.5: {action:?}"))?;
    Ok(detail.join(", "))
}

fn criterion_8(h: &mut Harness) -> Check {
    ensure(!h.determinism.is_empty(), || "no CLI runs recorded".into())?;
    let differing: Vec<&str> = h.determinism.iter().filter(|(_, same)| !same).map(|(n, _)| n.as_str()).collect();
    ensure(differing.is_empty(), || format!("CSV differs between --jobs 1 and --jobs 4 for {differing:?}"))?;
    Ok(format!("{} CLI sweeps byte-identical at --jobs 1 and --jobs 4", h.determinism.len()))
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut h = Harness { dir: TempDir::new().unwrap(), determinism: Vec::new() };
    let criteria: [(&str, fn(&mut Harness) -> Check, Duration); 8] = [
        ("four-leaf chain exactness", criterion_1, Duration::from_secs(1)),
        ("coherence suite", criterion_2, Duration::from_secs(10)),
        ("static-CVaR oracle equivalence", criterion_3, Duration::from_secs(120)),
        ("lexicographic dominance", criterion_4, Duration::from_secs(1)),
        ("minimax-regret suite", criterion_5, Duration::from_secs(60)),
        ("options improvement", criterion_6, Duration::from_secs(30)),
        ("BAMDP convergence", criterion_7, Duration::from_secs(60)),
        ("determinism", criterion_8, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = check(&mut h).and_then(|detail| {
            let elapsed = start.elapsed();
            ensure(elapsed <= limit, || format!("took {elapsed:.2?}, limit {limit:?}"))?;
            Ok(detail)
        });
        let elapsed = start.elapsed();
        match result {
            Ok(detail) => println!("criterion {} PASS {name} ({elapsed:.2?}): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL {name} ({elapsed:.2?}): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

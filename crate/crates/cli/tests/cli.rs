use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};
use tempfile::TempDir;

use riskplan_cli::config::ExperimentConfig;
use riskplan_cli::{execute, Mode, RunOptions};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
    out: PathBuf,
}

impl Run {
    fn rows(&self) -> Vec<Vec<String>> {
        let mut r = csv::Reader::from_reader(self.stdout.as_bytes());
        r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
    }

    fn values(&self) -> Vec<f64> {
        self.rows().iter().map(|r| r[5].parse().unwrap()).collect()
    }

    fn statuses(&self) -> Vec<String> {
        self.rows().iter().map(|r| r[9].clone()).collect()
    }
}

fn riskplan(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_riskplan")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn run_config(dir: &Path, name: &str, config: &Value, command: &str, extra: &[&str]) -> Run {
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, config.to_string()).unwrap();
    let out = dir.join(name);
    let mut args = vec![command, "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let (code, stdout, stderr) = riskplan(&args);
    Run { code, stdout, stderr, out }
}

fn domain(name: &str) -> Value {
    json!({ "domain": { "name": name } })
}

#[test]
fn four_leaf_static_and_dynamic_rows() {
    let dir = TempDir::new().unwrap();
    for (solver, want) in [("static-cvar", 3.0), ("dynamic-cvar", 4.0)] {
        let cfg = json!({ "problem": domain("four-leaf-chain"), "solver": solver, "params": { "alpha": 0.5 } });
        let run = run_config(dir.path(), solver, &cfg, "solve", &[]);
        assert_eq!(run.code, 0, "{}", run.stderr);
        assert_eq!(run.rows(), vec![vec!["four-leaf-chain", solver, "0.5", "", "0", &format!("{want:?}"), "", "", "0", "ok"]]);
        assert!(run.out.join("policy.json").exists());
        assert_eq!(std::fs::read_to_string(run.out.join("results.csv")).unwrap(), run.stdout);
    }
}

#[test]
fn regret_bandit_passes_the_grid_oracle() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({ "problem": domain("regret-bandit"), "solver": "minimax-regret", "params": { "stochastic": true } });
    let run = run_config(dir.path(), "bandit", &cfg, "solve", &["--verify", "oracle", "grid", ".01"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let row = &run.rows()[0];
    assert!((row[5].parse::<f64>().unwrap() - 1.0).abs() < 1e-6);
    assert!((row[6].parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(row[9], "pass");
}

#[test]
fn alpha_sweep_is_nonincreasing() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "problem": domain("four-leaf-chain"),
        "solver": "static-cvar",
        "sweep": { "alpha": [0.1, 0.25, 0.5, 1.0] }
    });
    let run = run_config(dir.path(), "alphas", &cfg, "sweep", &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let v = run.values();
    assert_eq!(v.len(), 4);
    assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{v:?}");
    assert_eq!(v[3], 2.0);
    let seeds: Vec<String> = run.rows().iter().map(|r| r[4].clone()).collect();
    assert_eq!(seeds, ["0", "1", "2", "3"]);
}

#[test]
fn empty_grid_gives_a_header_only_csv() {
    let dir = TempDir::new().unwrap();
    for sweep in [json!({}), json!({ "alpha": [] })] {
        let cfg = json!({ "problem": domain("four-leaf-chain"), "solver": "static-cvar", "sweep": sweep });
        let run = run_config(dir.path(), "empty", &cfg, "sweep", &[]);
        assert_eq!(run.code, 0);
        assert_eq!(run.stdout, "problem,solver,alpha,n,seed,value,oracle_value,gap,wall_ms,status\n");
    }
}

#[test]
fn rows_do_not_depend_on_execution_order_or_jobs() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "problem": domain("two-arm-bamdp"),
        "solver": "bamdp-cvar",
        "params": { "alpha": 0.5, "iterations": 2000 },
        "seed": 7,
        "sweep": { "domain.horizon": [1, 2], "alpha": [0.5, 1.0] }
    });
    let config: ExperimentConfig = serde_json::from_value(cfg.clone()).unwrap();
    let report = |reverse: bool, jobs: usize| {
        let opts = RunOptions { out: Some(dir.path().join(format!("lib-{reverse}-{jobs}"))), jobs, reverse, ..Default::default() };
        execute(config.clone(), Mode::Sweep, &opts).unwrap().csv
    };
    let forward = report(false, 1);
    assert_eq!(forward.lines().count(), 5);
    assert_eq!(forward, report(true, 1));
    assert_eq!(forward, report(true, 3));

    let one = run_config(dir.path(), "jobs1", &cfg, "sweep", &["--jobs", "1"]);
    let four = run_config(dir.path(), "jobs4", &cfg, "sweep", &["--jobs", "4"]);
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.stdout, forward);
}

#[test]
fn every_policy_file_round_trips() {
    let dir = TempDir::new().unwrap();
    let sweeps = [
        json!({ "problem": domain("two-step-switch"), "solver": "ev", "params": { "alpha": 0.5 },
                "sweep": { "solver": ["ev", "static-cvar", "dynamic-cvar", "lexicographic", "oracle-static-cvar"] } }),
        json!({ "problem": { "domain": { "name": "current-field", "params": { "width": 3, "length": 3 } } },
                "solver": "robust", "params": { "n": 2 },
                "sweep": { "solver": ["robust", "minimax-regret", "minimax-regret-options", "oracle-minimax-regret"] } }),
        json!({ "problem": domain("random-uncertain"), "solver": "minimax-regret", "params": { "stochastic": true },
                "sweep": { "domain.seed": { "range": [0, 5] } } }),
        json!({ "problem": domain("two-arm-bamdp"), "solver": "bamdp-cvar", "params": { "alpha": 0.5, "iterations": 500 },
                "sweep": { "solver": ["bamdp-cvar", "oracle-bamdp-cvar"] } }),
        json!({ "problem": { "domain": { "name": "grid-nav", "params": { "w": 3, "h": 2, "horizon": 5 } } },
                "solver": "static-cvar", "params": { "alpha": 0.3 },
                "sweep": { "solver": ["static-cvar", "dynamic-cvar"] } }),
    ];
    let mut checked = 0;
    for (i, cfg) in sweeps.iter().enumerate() {
        let run = run_config(dir.path(), &format!("s{i}"), cfg, "sweep", &[]);
        assert_eq!(run.code, 0, "{}", run.stderr);
        assert!(run.statuses().iter().all(|s| s == "ok"));
        let mut files: Vec<PathBuf> = std::fs::read_dir(run.out.join("policies")).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        assert_eq!(files.len(), run.rows().len());
        for f in files {
            let (code, stdout, stderr) = riskplan(&["eval-policy", f.to_str().unwrap()]);
            assert_eq!(code, 0, "{}: {stdout} {stderr}", f.display());
            let r: Value = serde_json::from_str(&stdout).unwrap();
            assert!(r["diff"].as_f64().unwrap() <= 1e-9);
            checked += 1;
        }
    }
    assert_eq!(checked, 18);
}

#[test]
fn tampered_policy_fails_the_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({ "problem": domain("four-leaf-chain"), "solver": "dynamic-cvar", "params": { "alpha": 0.5 } });
    let run = run_config(dir.path(), "dyn", &cfg, "solve", &[]);
    let path = run.out.join("policy.json");
    let mut file: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    file["value"] = json!(3.5);
    std::fs::write(&path, file.to_string()).unwrap();
    let (code, _, stderr) = riskplan(&["eval-policy", path.to_str().unwrap()]);
    assert_eq!(code, 5, "{stderr}");
}

#[test]
fn exit_codes_follow_the_error_category() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();

    std::fs::write(d.join("broken.json"), "{ not json").unwrap();
    let (code, _, stderr) = riskplan(&["solve", "--config", d.join("broken.json").to_str().unwrap()]);
    assert_eq!(code, 2, "{stderr}");

    let run = run_config(d, "unknown", &json!({ "problem": domain("nowhere"), "solver": "ev" }), "solve", &[]);
    assert_eq!(run.code, 2);
    assert!(run.statuses()[0].starts_with("error: config: unknown domain"), "{:?}", run.statuses());

    let no_alpha = run_config(d, "noalpha", &json!({ "problem": domain("four-leaf-chain"), "solver": "static-cvar" }), "solve", &[]);
    assert_eq!(no_alpha.code, 2);
    assert!(no_alpha.statuses()[0].contains("alpha"));

    let wrong_kind = run_config(d, "kind", &json!({ "problem": domain("four-leaf-chain"), "solver": "robust" }), "solve", &[]);
    assert_eq!(wrong_kind.code, 2);

    let bad_model = json!({ "problem": { "inline": {
        "num_states": 2, "num_actions": 1, "horizon": 1, "initial_state": 0, "terminals": [1],
        "transitions": [{ "s": 0, "a": 0, "next": [{ "sp": 1, "p": 0.5, "cost": 1.0 }] }]
    } }, "solver": "ev" });
    let run = run_config(d, "model", &bad_model, "solve", &[]);
    assert_eq!(run.code, 3, "{}", run.stdout);

    let cap = json!({ "problem": { "domain": { "name": "current-field", "params": { "length": 6 } } },
                      "solver": "minimax-regret-options", "params": { "n": 6, "cap": 1000 } });
    assert_eq!(run_config(d, "cap", &cap, "solve", &[]).code, 4);

    let det = json!({ "problem": domain("regret-bandit"), "solver": "minimax-regret" });
    let run = run_config(d, "mismatch", &det, "solve", &["--verify", "grid", "0.5"]);
    assert_eq!(run.code, 5);
    assert_eq!(run.statuses(), ["mismatch"]);
    assert_eq!(run.rows()[0][6], "1.0");

    std::fs::write(d.join("blocker"), "").unwrap();
    let cfg = d.join("ok.json");
    std::fs::write(&cfg, json!({ "problem": domain("tie-bandit"), "solver": "ev" }).to_string()).unwrap();
    let (code, _, _) = riskplan(&["solve", "--config", cfg.to_str().unwrap(), "--out", d.join("blocker").to_str().unwrap()]);
    assert_eq!(code, 6);
    let (code, _, _) = riskplan(&["solve", "--config", d.join("missing.json").to_str().unwrap()]);
    assert_eq!(code, 6);
}

#[test]
fn sweep_records_cell_errors_and_continues() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({ "problem": domain("grid-nav"), "solver": "ev", "sweep": { "domain.slip": [0.0, 1.5, 0.2] } });
    let run = run_config(dir.path(), "slips", &cfg, "sweep", &[]);
    assert_eq!(run.code, 2);
    let statuses = run.statuses();
    assert_eq!(statuses[0], "ok");
    assert!(statuses[1].starts_with("error: config: bad parameter `grid-nav.slip`"), "{}", statuses[1]);
    assert_eq!(statuses[2], "ok");
    assert_eq!(run.rows()[0][5], "5.0");
}

#[test]
fn solve_and_sweep_reject_the_wrong_shape() {
    let dir = TempDir::new().unwrap();
    let plain = json!({ "problem": domain("four-leaf-chain"), "solver": "ev" });
    assert_eq!(run_config(dir.path(), "plain", &plain, "sweep", &[]).code, 2);
    let swept = json!({ "problem": domain("four-leaf-chain"), "solver": "ev", "sweep": { "tol": [1e-9] } });
    assert_eq!(run_config(dir.path(), "swept", &swept, "solve", &[]).code, 2);
}

#[test]
fn problem_files_resolve_next_to_the_config() {
    let dir = TempDir::new().unwrap();
    let sub = dir.path().join("cfg");
    std::fs::create_dir(&sub).unwrap();
    let u = riskplan::domains::regret_bandit();
    std::fs::write(sub.join("bandit.json"), u.to_json_string()).unwrap();
    let cfg = json!({ "problem": { "file": "bandit.json" }, "solver": "minimax-regret" });
    std::fs::write(sub.join("run.json"), cfg.to_string()).unwrap();
    let out = dir.path().join("out");
    let (code, stdout, stderr) =
        riskplan(&["verify", "--config", sub.join("run.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains(",2.0,2.0,0.0,0,pass"), "{stdout}");

    let bamdp = riskplan::domains::two_arm_bamdp(1.0, 1.0, 1).unwrap();
    let inline: Value = serde_json::from_str(&bamdp.to_json_string()).unwrap();
    let cfg = json!({ "problem": { "inline": inline }, "solver": "oracle-bamdp-cvar", "params": { "alpha": 0.5 } });
    let run = run_config(dir.path(), "inline", &cfg, "solve", &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(run.rows()[0][0], "inline");
    assert_eq!(run.values(), [1.0]);
}

#[test]
fn resolved_config_echoes_an_explicit_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({ "problem": domain("tie-bandit"), "solver": "ev" });
    let run = run_config(dir.path(), "seed", &cfg, "solve", &["--seed", "42"]);
    let echo: Value = serde_json::from_str(&std::fs::read_to_string(run.out.join("resolved_config.json")).unwrap()).unwrap();
    assert_eq!(echo["seed"], 42);
    assert_eq!(echo["params"]["tol"], 1e-10);
    assert_eq!(run.rows()[0][4], "42");

    let run = run_config(dir.path(), "default", &cfg, "solve", &[]);
    let echo: Value = serde_json::from_str(&std::fs::read_to_string(run.out.join("resolved_config.json")).unwrap()).unwrap();
    assert_eq!(echo["seed"], 0);
}

#[test]
fn risk_measures_are_reported_with_the_policy() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({ "problem": domain("four-leaf-chain"), "solver": "ev",
                      "params": { "risk": { "kind": "cvar", "alpha": 0.25 } } });
    let run = run_config(dir.path(), "risk", &cfg, "solve", &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let file: Value = serde_json::from_str(&std::fs::read_to_string(run.out.join("policy.json")).unwrap()).unwrap();
    assert_eq!(file["payload"]["risk"]["value"], 4.0);
}

#[test]
fn timings_are_opt_in() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({ "problem": domain("current-field"), "solver": "minimax-regret-options", "params": { "n": 3 } });
    let run = run_config(dir.path(), "t", &cfg, "solve", &["--timings"]);
    assert_eq!(run.code, 0);
    assert!(run.rows()[0][8].parse::<u64>().is_ok());
    assert_eq!(run.rows()[0][3], "3");
}

#[test]
fn lists_every_domain() {
    let (code, stdout, _) = riskplan(&["list-domains"]);
    assert_eq!(code, 0);
    for d in riskplan::domains::DOMAINS {
        assert!(stdout.lines().any(|l| l == d.name), "{}", d.name);
    }
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use riskplan::bamdp::{BamdpProblem, DEFAULT_HYPERSTATE_CAP};
use riskplan::domains::{build, DomainSpec, Problem};
use riskplan::mdp::Mdp;
use riskplan::risk::RiskSpec;
use riskplan::uncertain::SampleUncertainMdp;

use crate::error::{CliError, Result};

pub const DEFAULT_OUT_DIR: &str = "riskplan-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Ev,
    StaticCvar,
    DynamicCvar,
    Lexicographic,
    Robust,
    MinimaxRegret,
    MinimaxRegretOptions,
    BamdpCvar,
    OracleStaticCvar,
    OracleMinimaxRegret,
    OracleBamdpCvar,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Ev => "ev",
            Solver::StaticCvar => "static-cvar",
            Solver::DynamicCvar => "dynamic-cvar",
            Solver::Lexicographic => "lexicographic",
            Solver::Robust => "robust",
            Solver::MinimaxRegret => "minimax-regret",
            Solver::MinimaxRegretOptions => "minimax-regret-options",
            Solver::BamdpCvar => "bamdp-cvar",
            Solver::OracleStaticCvar => "oracle-static-cvar",
            Solver::OracleMinimaxRegret => "oracle-minimax-regret",
            Solver::OracleBamdpCvar => "oracle-bamdp-cvar",
        }
    }

    /// Problem kind the solver consumes.
    pub fn problem_kind(self) -> &'static str {
        match self {
            Solver::Ev | Solver::StaticCvar | Solver::DynamicCvar | Solver::Lexicographic | Solver::OracleStaticCvar => "mdp",
            Solver::Robust | Solver::MinimaxRegret | Solver::MinimaxRegretOptions | Solver::OracleMinimaxRegret => "uncertain",
            Solver::BamdpCvar | Solver::OracleBamdpCvar => "bamdp",
        }
    }

    pub fn needs_alpha(self) -> bool {
        matches!(
            self,
            Solver::StaticCvar
                | Solver::DynamicCvar
                | Solver::Lexicographic
                | Solver::BamdpCvar
                | Solver::OracleStaticCvar
                | Solver::OracleBamdpCvar
        )
    }

    pub fn is_oracle(self) -> bool {
        matches!(self, Solver::OracleStaticCvar | Solver::OracleMinimaxRegret | Solver::OracleBamdpCvar)
    }
}

/// Where the problem comes from: `{"domain": {...}}`, `{"file": "path"}` or
/// `{"inline": {...}}`. Files and inline documents are detected by their top
/// level keys: `samples` for uncertain MDPs, `prior` for BAMDPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSource {
    Domain(DomainSpec),
    File(PathBuf),
    Inline(Value),
}

impl ProblemSource {
    /// Short label for the `problem` CSV column.
    pub fn label(&self) -> String {
        match self {
            ProblemSource::Domain(spec) if spec.params.is_empty() => spec.name.clone(),
            ProblemSource::Domain(spec) => {
                let params: Vec<String> = spec.params.iter().map(|(k, v)| format!("{k}={v:?}")).collect();
                format!("{}[{}]", spec.name, params.join(";"))
            }
            ProblemSource::File(path) => path.display().to_string(),
            ProblemSource::Inline(_) => "inline".to_string(),
        }
    }

    pub fn load(&self) -> Result<Problem> {
        match self {
            ProblemSource::Domain(spec) => Ok(build(spec)?),
            ProblemSource::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
                let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Problem(format!("{}: {e}", path.display())))?;
                parse_problem(&value, &text)
            }
            ProblemSource::Inline(value) => parse_problem(value, &value.to_string()),
        }
    }
}

fn parse_problem(value: &Value, text: &str) -> Result<Problem> {
    let obj = value.as_object().ok_or_else(|| CliError::Problem("problem document must be a JSON object".into()))?;
    if obj.contains_key("samples") {
        Ok(Problem::Uncertain(SampleUncertainMdp::from_json_str(text)?))
    } else if obj.contains_key("prior") {
        Ok(Problem::Bamdp(BamdpProblem::from_json_str(text)?))
    } else {
        Ok(Problem::Mdp(Mdp::from_json_str(text)?))
    }
}

/// Solver parameters; fields a solver does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub tol: f64,
    /// Log-spaced budget grid for static CVaR; alpha and 1 are always added.
    pub grid_points: usize,
    pub grid_min: f64,
    /// Option length for `minimax-regret-options`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Mixed strategies for `minimax-regret` and its oracle.
    pub stochastic: bool,
    /// Probability step of the stochastic minimax-regret oracle.
    pub step: f64,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_budget_ms: Option<u64>,
    pub exploration: f64,
    pub widening_c: f64,
    pub widening_exponent: f64,
    /// Enumeration cap for oracles, option plans and hyper-states.
    pub cap: u64,
    /// Extra risk measure reported for `ev` and `dynamic-cvar` policies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub risk: Option<RiskSpec>,
}

impl Default for SolverParams {
    fn default() -> Self {
        let search = riskplan::bamdp::SearchConfig::default();
        SolverParams {
            alpha: None,
            tol: 1e-10,
            grid_points: riskplan::cvar::YGrid::DEFAULT_POINTS,
            grid_min: riskplan::cvar::YGrid::DEFAULT_MIN,
            n: None,
            stochastic: false,
            step: 0.1,
            iterations: search.iterations,
            time_budget_ms: None,
            exploration: search.exploration,
            widening_c: search.widening_c,
            widening_exponent: search.widening_exponent,
            cap: DEFAULT_HYPERSTATE_CAP as u64,
            risk: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyMode {
    /// Compare against an exact or re-evaluation oracle.
    Oracle,
    /// Check that the reported value bounds the evaluated value of the
    /// solver's own policy.
    Bound,
}

/// Verification request; unset fields take per-solver defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<VerifyMode>,
    /// Grid step of the stochastic minimax-regret oracle.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<f64>,
    /// Force the deterministic minimax-regret oracle.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub deterministic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
}

impl VerifySpec {
    /// Parses `--verify` arguments such as `oracle grid .01` or `bound tol 1e-6`.
    pub fn from_tokens(tokens: &[String]) -> Result<Self> {
        let mut spec = VerifySpec::default();
        let mut it = tokens.iter();
        let bad = |msg: String| CliError::Config(format!("--verify: {msg}"));
        while let Some(token) = it.next() {
            let mut number = |name: &str| -> Result<f64> {
                let raw = it.next().ok_or_else(|| bad(format!("`{name}` needs a value")))?;
                raw.parse::<f64>().map_err(|_| bad(format!("`{name}` value `{raw}` is not a number")))
            };
            match token.as_str() {
                "oracle" => spec.mode = Some(VerifyMode::Oracle),
                "bound" => spec.mode = Some(VerifyMode::Bound),
                "deterministic" => spec.deterministic = true,
                "grid" => spec.grid = Some(number("grid")?),
                "tol" => spec.tol = Some(number("tol")?),
                "cap" => {
                    let v = number("cap")?;
                    if v.fract() != 0.0 || v < 1.0 {
                        return Err(bad(format!("`cap` must be a positive integer, got {v}")));
                    }
                    spec.cap = Some(v as u64);
                }
                other => return Err(bad(format!("unknown argument `{other}`"))),
            }
        }
        Ok(spec)
    }
}

/// Values of one sweep axis: an explicit list or an integer range `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<Value>),
    Range { range: [i64; 2] },
}

impl Axis {
    fn values(&self) -> Vec<Value> {
        match self {
            Axis::Values(v) => v.clone(),
            Axis::Range { range: [a, b] } => (*a..*b).map(Value::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    pub solver: Solver,
    #[serde(default)]
    pub params: SolverParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub outputs: Outputs,
    /// Axis key → values. Keys: `solver`, `domain`, `domain.<param>` or any
    /// solver parameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<BTreeMap<String, Axis>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySpec>,
}

impl ExperimentConfig {
    /// Reads a config file; relative problem paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        let mut cfg = Self::from_json_str(&text)?;
        if let ProblemSource::File(file) = &mut cfg.problem {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    *file = dir.join(&*file);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks that the chosen solver has everything it needs.
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let bad = |msg: String| Err(CliError::Config(format!("{}: {msg}", self.solver.name())));
        if self.solver.needs_alpha() {
            match p.alpha {
                None => return bad("missing parameter `alpha`".into()),
                Some(a) if !(a > 0.0 && a <= 1.0) => return bad(format!("alpha {a} outside (0, 1]")),
                _ => {}
            }
        }
        if self.solver == Solver::MinimaxRegretOptions {
            match p.n {
                None => return bad("missing parameter `n`".into()),
                Some(0) => return bad("option length `n` must be at least 1".into()),
                _ => {}
            }
        }
        if !(p.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", p.tol));
        }
        if p.risk.is_some() && !matches!(self.solver, Solver::Ev | Solver::DynamicCvar) {
            return bad("`risk` is reported only for ev and dynamic-cvar".into());
        }
        if let Some(risk) = &p.risk {
            risk.validate()?;
        }
        if self.verify.is_some() && self.solver.is_oracle() {
            return bad("oracle solvers have no reference to verify against".into());
        }
        Ok(())
    }

    /// Expands the sweep into cell configs in lexicographic cell order; the
    /// first axis varies slowest. Cell `i` gets seed `base + i`.
    pub fn cells(&self, base_seed: u64) -> Result<Vec<ExperimentConfig>> {
        let axes: Vec<(String, Vec<Value>)> = match &self.sweep {
            Some(sweep) => sweep.iter().map(|(k, a)| (k.clone(), a.values())).collect(),
            None => Vec::new(),
        };
        if axes.is_empty() || axes.iter().any(|(_, v)| v.is_empty()) {
            return Ok(Vec::new());
        }
        let mut template = self.clone();
        template.sweep = None;
        let template = serde_json::to_value(&template).expect("config serializes");

        let mut cells = Vec::new();
        let mut idx = vec![0usize; axes.len()];
        loop {
            let mut doc = template.clone();
            for ((key, values), &i) in axes.iter().zip(&idx) {
                set_axis(&mut doc, key, values[i].clone())?;
            }
            let mut cell: ExperimentConfig = serde_json::from_value(doc)
                .map_err(|e| CliError::Config(format!("sweep cell {}: {e}", cells.len())))?;
            cell.seed = Some(base_seed.wrapping_add(cells.len() as u64));
            cells.push(cell);
            let mut pos = axes.len();
            loop {
                if pos == 0 {
                    return Ok(cells);
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < axes[pos].1.len() {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }
}

fn set_axis(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let bad = |msg: &str| CliError::Config(format!("sweep key `{key}`: {msg}"));
    let domain = || bad("needs a domain problem");
    match key.split_once('.') {
        _ if key == "solver" => doc["solver"] = value,
        _ if key == "domain" => {
            let spec = doc["problem"].get_mut("domain").ok_or_else(domain)?;
            spec["name"] = value;
        }
        Some(("domain", param)) => {
            let spec = doc["problem"].get_mut("domain").ok_or_else(domain)?;
            if spec.get("params").is_none() {
                spec["params"] = Value::Object(Default::default());
            }
            spec["params"][param] = value;
        }
        Some(_) => return Err(bad("unknown key")),
        None if key == "seed" => return Err(bad("cell seeds derive from the base seed")),
        None => {
            if doc.get("params").is_none() {
                doc["params"] = Value::Object(Default::default());
            }
            doc["params"][key] = value;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_leaf(extra: &str) -> String {
        format!(r#"{{"problem": {{"domain": {{"name": "four-leaf-chain"}}}}, "solver": "static-cvar", "params": {{"alpha": 0.5}}{extra}}}"#)
    }

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_json_str(&four_leaf("")).unwrap();
        assert_eq!(cfg.solver, Solver::StaticCvar);
        cfg.validate().unwrap();
        let mut no_alpha = cfg.clone();
        no_alpha.params.alpha = None;
        assert!(matches!(no_alpha.validate(), Err(CliError::Config(_))));
        assert!(ExperimentConfig::from_json_str(&four_leaf(r#", "bogus": 1"#)).is_err());
    }

    #[test]
    fn cells_are_in_lexicographic_order() {
        let cfg = ExperimentConfig::from_json_str(&four_leaf(r#", "sweep": {"alpha": [0.25, 0.5], "solver": ["static-cvar", "dynamic-cvar"]}"#))
            .unwrap();
        let cells = cfg.cells(10).unwrap();
        let got: Vec<(f64, Solver, u64)> =
            cells.iter().map(|c| (c.params.alpha.unwrap(), c.solver, c.seed.unwrap())).collect();
        assert_eq!(
            got,
            vec![
                (0.25, Solver::StaticCvar, 10),
                (0.25, Solver::DynamicCvar, 11),
                (0.5, Solver::StaticCvar, 12),
                (0.5, Solver::DynamicCvar, 13)
            ]
        );
        assert!(cells.iter().all(|c| c.sweep.is_none()));
    }

    #[test]
    fn ranges_domains_and_empty_axes() {
        let cfg = ExperimentConfig::from_json_str(
            r#"{"problem": {"domain": {"name": "random-mdp"}}, "solver": "ev", "sweep": {"domain.seed": {"range": [3, 6]}}}"#,
        )
        .unwrap();
        let cells = cfg.cells(0).unwrap();
        assert_eq!(cells.len(), 3);
        assert_eq!(cells[2].problem.label(), "random-mdp[seed=5.0]");
        let empty = ExperimentConfig::from_json_str(&four_leaf(r#", "sweep": {"alpha": []}"#)).unwrap();
        assert!(empty.cells(0).unwrap().is_empty());
        let bad = ExperimentConfig::from_json_str(&four_leaf(r#", "sweep": {"seed": [1]}"#)).unwrap();
        assert!(bad.cells(0).is_err());
    }

    #[test]
    fn verify_tokens() {
        let toks = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
        let spec = VerifySpec::from_tokens(&toks("oracle grid .01")).unwrap();
        assert_eq!(spec.mode, Some(VerifyMode::Oracle));
        assert_eq!(spec.grid, Some(0.01));
        let spec = VerifySpec::from_tokens(&toks("bound tol 1e-6 cap 500")).unwrap();
        assert_eq!((spec.mode, spec.tol, spec.cap), (Some(VerifyMode::Bound), Some(1e-6), Some(500)));
        assert!(VerifySpec::from_tokens(&toks("grid")).is_err());
        assert!(VerifySpec::from_tokens(&toks("sideways")).is_err());
    }
}

//! Run configuration: a JSON object whose keys are dotted paths. Nested
//! objects are flattened first, so `{"problem": {"name": "x"}}` and
//! `{"problem.name": "x"}` are the same config.

use std::collections::BTreeMap;
use std::path::PathBuf;

use conmm_core::InstanceOptions;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Scc,
    Ncc,
    Alm,
}

impl Solver {
    pub fn as_str(self) -> &'static str {
        match self {
            Solver::Scc => "scc",
            Solver::Ncc => "ncc",
            Solver::Alm => "alm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StartSpec {
    /// The instance's default start.
    Default,
    Given { x: Vec<f64>, y: Vec<f64> },
    /// Uniform on the domain box, drawn from `seed`.
    Random,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: String,
    pub instance: InstanceOptions,
    pub solver: Solver,
    pub epsilon: Option<f64>,
    pub epsilon_bar: Option<f64>,
    pub epsilon_hat_0: Option<f64>,
    pub epsilon_0: f64,
    pub tau: f64,
    pub lambda_cap: Option<f64>,
    pub start: StartSpec,
    pub max_outer: Option<usize>,
    pub max_inner: Option<usize>,
    pub max_ncc_outer: Option<usize>,
    pub verify_subproblems: bool,
    pub out_dir: Option<PathBuf>,
    pub report_bounds: bool,
    pub emit_plot_data: bool,
    pub seed: u64,
    /// The flattened input, echoed into the report.
    pub raw: BTreeMap<String, Value>,
}

/// A config problem, always tied to the key that caused it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        message: message.into(),
    }
}

pub const KNOWN_KEYS: [&str; 22] = [
    "problem.name",
    "problem.box_radius",
    "problem.coupling",
    "problem.dim",
    "solver",
    "tolerance.epsilon",
    "tolerance.epsilon_bar",
    "tolerance.epsilon_hat_0",
    "tolerance.epsilon_0",
    "tolerance.tau",
    "tolerance.lambda_cap",
    "start.x",
    "start.y",
    "start.random",
    "safeguard.max_outer",
    "safeguard.max_inner",
    "safeguard.max_ncc_outer",
    "ncc.verify_subproblems",
    "output.dir",
    "output.report_bounds",
    "output.emit_plot_data",
    "seed",
];

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) -> Result<(), ConfigError> {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out)?;
            }
            Ok(())
        }
        _ if prefix.is_empty() => Err(err("<root>", "config must be a JSON object")),
        _ => {
            if out.insert(prefix.to_string(), v.clone()).is_some() {
                return Err(err(prefix, "given twice"));
            }
            Ok(())
        }
    }
}

struct Keys(BTreeMap<String, Value>);

impl Keys {
    fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }

    fn str(&self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(err(key, format!("expected a string, got {v}"))),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Number(n)) => n
                .as_f64()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| err(key, "expected a finite number")),
            Some(v) => Err(err(key, format!("expected a number, got {v}"))),
        }
    }

    fn positive(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.f64(key)? {
            Some(v) if v <= 0.0 => Err(err(key, format!("must be positive, got {v}"))),
            v => Ok(v),
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Number(n)) => n
                .as_u64()
                .and_then(|v| usize::try_from(v).ok())
                .map(Some)
                .ok_or_else(|| err(key, format!("expected a nonnegative integer, got {n}"))),
            Some(v) => Err(err(key, format!("expected a nonnegative integer, got {v}"))),
        }
    }

    fn bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(*b)),
            Some(v) => Err(err(key, format!("expected true or false, got {v}"))),
        }
    }

    fn vector(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_f64().filter(|v| v.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .map(Some)
                .ok_or_else(|| err(key, "expected an array of finite numbers")),
            Some(v) => Err(err(key, format!("expected an array of numbers, got {v}"))),
        }
    }
}

fn open_unit(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(err(key, format!("must lie in (0, 1), got {v}")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| err("<root>", format!("malformed JSON: {e}")))?;
        let mut flat = BTreeMap::new();
        flatten("", &value, &mut flat)?;
        if let Some(k) = flat.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(err(k, "unknown key"));
        }
        let keys = Keys(flat);

        let problem = keys.str("problem.name")?.ok_or_else(|| err("problem.name", "required"))?;
        let instance = InstanceOptions {
            box_radius: keys.f64("problem.box_radius")?,
            coupling: keys.f64("problem.coupling")?,
            dim: keys.usize("problem.dim")?,
        };
        let solver = match keys.str("solver")?.as_deref() {
            Some("scc") => Solver::Scc,
            Some("ncc") => Solver::Ncc,
            Some("alm") => Solver::Alm,
            Some(other) => return Err(err("solver", format!("expected scc, ncc or alm, got `{other}`"))),
            None => return Err(err("solver", "required")),
        };

        let epsilon = keys.positive("tolerance.epsilon")?;
        let epsilon_bar = keys.positive("tolerance.epsilon_bar")?;
        let epsilon_hat_0 = keys.positive("tolerance.epsilon_hat_0")?;
        let epsilon_0 = keys.positive("tolerance.epsilon_0")?.unwrap_or(1.0);
        let tau = open_unit("tolerance.tau", keys.f64("tolerance.tau")?.unwrap_or(0.5))?;
        let lambda_cap = keys.positive("tolerance.lambda_cap")?;

        match solver {
            Solver::Scc => {
                epsilon_bar.ok_or_else(|| err("tolerance.epsilon_bar", "required by solver scc"))?;
            }
            Solver::Ncc => {
                let eps = epsilon.ok_or_else(|| err("tolerance.epsilon", "required by solver ncc"))?;
                if let Some(e0) = epsilon_hat_0 {
                    if e0 > eps / 2.0 {
                        return Err(err(
                            "tolerance.epsilon_hat_0",
                            format!("epsilon_hat_0 = {e0} must lie in (0, epsilon/2] = (0, {}]", eps / 2.0),
                        ));
                    }
                }
            }
            Solver::Alm => {
                let eps = open_unit(
                    "tolerance.epsilon",
                    epsilon.ok_or_else(|| err("tolerance.epsilon", "required by solver alm"))?,
                )?;
                if !(epsilon_0 > tau * eps && epsilon_0 <= 1.0) {
                    return Err(err(
                        "tolerance.epsilon_0",
                        format!("epsilon_0 = {epsilon_0} must lie in (tau*epsilon, 1] = ({}, 1]", tau * eps),
                    ));
                }
            }
        }

        let random = keys.bool("start.random")?.unwrap_or(false);
        let start = match (keys.vector("start.x")?, keys.vector("start.y")?) {
            (Some(_), Some(_)) if random => return Err(err("start.random", "conflicts with start.x and start.y")),
            (Some(x), Some(y)) => StartSpec::Given { x, y },
            (Some(_), None) => return Err(err("start.y", "required when start.x is given")),
            (None, Some(_)) => return Err(err("start.x", "required when start.y is given")),
            (None, None) if random => StartSpec::Random,
            (None, None) => StartSpec::Default,
        };

        let seed = match keys.get("seed") {
            None => 0,
            Some(v) => v.as_u64().ok_or_else(|| err("seed", format!("expected a nonnegative integer, got {v}")))?,
        };

        Ok(RunConfig {
            problem,
            instance,
            solver,
            epsilon,
            epsilon_bar,
            epsilon_hat_0,
            epsilon_0,
            tau,
            lambda_cap,
            start,
            max_outer: keys.usize("safeguard.max_outer")?,
            max_inner: keys.usize("safeguard.max_inner")?,
            max_ncc_outer: keys.usize("safeguard.max_ncc_outer")?,
            verify_subproblems: keys.bool("ncc.verify_subproblems")?.unwrap_or(false),
            out_dir: keys.str("output.dir")?.map(PathBuf::from),
            report_bounds: keys.bool("output.report_bounds")?.unwrap_or(false),
            emit_plot_data: keys.bool("output.emit_plot_data")?.unwrap_or(false),
            seed,
            raw: keys.0,
        })
    }

    /// The NCC initial tolerance, defaulting to the largest admissible value.
    pub fn ncc_eps_hat_0(&self) -> Option<f64> {
        self.epsilon_hat_0.or(self.epsilon.map(|e| e / 2.0))
    }
}

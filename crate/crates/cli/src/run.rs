//! Executes one run configuration and writes its output files.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use conmm_core::bounds::{alm_bounds, alm_thresholds, check_eps_condition, ncc_bounds, scc_bounds};
use conmm_core::model::{eval_objective, Instrumented};
use conmm_core::oracle::ObjectiveOracle;
use conmm_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{ConfigError, RunConfig, Solver, StartSpec};

pub const EXIT_CERTIFIED: i32 = 0;
pub const EXIT_INVALID_CONFIG: i32 = 1;
pub const EXIT_ITERATION_LIMIT: i32 = 2;
pub const EXIT_NOT_CERTIFIED: i32 = 3;

pub const TRACE_COLUMNS: [&str; 16] = [
    "phase",
    "outer_iter",
    "inner_iter",
    "eps_k",
    "rho_k",
    "residual_cert",
    "feas_c",
    "feas_d",
    "comp_c",
    "comp_d",
    "n_grad_f",
    "n_grad_c",
    "n_grad_d",
    "n_prox_p",
    "n_prox_q",
    "wall_ms",
];

pub const ADVISORY: &str = "advisory: ALM output guarantee constants not guaranteed for this epsilon";

fn cfg_err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Shortest decimal that parses back to the same double.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_trace(path: &Path, trace: &SolveTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(TRACE_COLUMNS)?;
    for r in &trace.rows {
        let c = r.counters;
        w.write_record([
            r.phase.as_str().to_string(),
            r.outer_iter.to_string(),
            r.inner_iter.to_string(),
            num(r.eps_k),
            opt(r.rho_k),
            num(r.residual_cert),
            opt(r.feas_c),
            opt(r.feas_d),
            opt(r.comp_c),
            opt(r.comp_d),
            c.n_grad_f.to_string(),
            c.n_grad_c.to_string(),
            c.n_grad_d.to_string(),
            c.n_prox_p.to_string(),
            c.n_prox_q.to_string(),
            num(r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Residual against total oracle calls, one row per trace row.
pub fn write_plot_data(path: &Path, trace: &SolveTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["phase", "outer_iter", "operations", "residual_cert"])?;
    for r in &trace.rows {
        let c = r.counters;
        let ops = c.n_grad_f + c.n_grad_c + c.n_grad_d + c.n_prox_p + c.n_prox_q;
        w.write_record([
            r.phase.as_str().to_string(),
            r.outer_iter.to_string(),
            ops.to_string(),
            num(r.residual_cert),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn build_instance(cfg: &RunConfig) -> std::result::Result<BuiltinInstance, ConfigError> {
    registry_with(&cfg.problem, &cfg.instance).map_err(|e| match e {
        Error::NotFound(n) => cfg_err(
            "problem.name",
            format!("unknown instance `{n}`; known: {}", problems::INSTANCE_NAMES.join(", ")),
        ),
        other => {
            let key = if cfg.instance.coupling.is_some() && other.to_string().contains("coupling") {
                "problem.coupling"
            } else if cfg.instance.dim.is_some() && other.to_string().contains("dim") {
                "problem.dim"
            } else {
                "problem.box_radius"
            };
            cfg_err(key, other.to_string())
        }
    })
}

/// Half-widths of the centred domain boxes implied by the diameters.
fn half_widths(prob: &ConstrainedMinimaxProblem) -> (f64, f64) {
    let k = &prob.constants;
    let d_x = k.d_x.or(prob.prox_p.diameter()).unwrap_or(2.0);
    let d_y = k.d_y.or(prob.prox_q.diameter()).unwrap_or(2.0);
    (
        d_x / (2.0 * (prob.dims.n as f64).sqrt()),
        d_y / (2.0 * (prob.dims.m as f64).sqrt()),
    )
}

pub fn resolve_start(cfg: &RunConfig, inst: &BuiltinInstance) -> std::result::Result<(Vec<f64>, Vec<f64>), ConfigError> {
    let prob = &inst.problem;
    match &cfg.start {
        StartSpec::Default => Ok(inst.default_start.clone()),
        StartSpec::Given { x, y } => {
            if x.len() != prob.dims.n {
                return Err(cfg_err("start.x", format!("expected {} entries, got {}", prob.dims.n, x.len())));
            }
            if y.len() != prob.dims.m {
                return Err(cfg_err("start.y", format!("expected {} entries, got {}", prob.dims.m, y.len())));
            }
            if !prob.prox_p.contains(x, 1e-9) {
                return Err(cfg_err("start.x", "not in dom p"));
            }
            if !prob.prox_q.contains(y, 1e-9) {
                return Err(cfg_err("start.y", "not in dom q"));
            }
            Ok((x.clone(), y.clone()))
        }
        StartSpec::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (hx, hy) = half_widths(prob);
            let draw = |rng: &mut ChaCha8Rng, n: usize, h: f64| -> Vec<f64> {
                (0..n).map(|_| if h > 0.0 { rng.gen_range(-h..=h) } else { 0.0 }).collect()
            };
            let x = draw(&mut rng, prob.dims.n, hx);
            let y = draw(&mut rng, prob.dims.m, hy);
            Ok((prob.prox_p.apply(1.0, &x), prob.prox_q.apply(1.0, &y)))
        }
    }
}

fn section<T: serde::Serialize>(r: conmm_core::Result<T>, missing: &mut Vec<String>) -> Value {
    match r {
        Ok(v) => serde_json::to_value(v).unwrap_or(Value::Null),
        Err(Error::MissingConstant(s)) => {
            missing.push(s.to_string());
            json!({ "missing": s })
        }
        Err(e) => json!({ "error": e.to_string() }),
    }
}

/// Bound report for every layer the instance supports. Missing constants
/// are listed and the affected section is left partial.
pub fn bounds_report(cfg: &RunConfig, inst: &BuiltinInstance, start: &(Vec<f64>, Vec<f64>)) -> Value {
    let consts = inst.problem.constants.clone();
    let mut missing = Vec::new();
    let mut out = serde_json::Map::new();
    let lambda_cap = cfg.lambda_cap.unwrap_or(inst.default_lambda_cap);

    let scc = match inst.scc {
        Some(d) => section(
            scc_bounds(&BoundInputs {
                constants: consts.clone(),
                sigma_x: Some(d.sigma_x),
                sigma_y: Some(d.sigma_y),
                l_grad_bar: Some(d.l_grad),
                eps_bar: cfg.epsilon_bar.or(cfg.epsilon),
                h_bar_star: Some(d.h_star),
                h_bar_low: Some(d.h_low),
                ..Default::default()
            }),
            &mut missing,
        ),
        None => json!({ "unavailable": "instance has no strong convexity-concavity data" }),
    };
    out.insert("scc".into(), scc);

    let ncc = match inst.ncc {
        Some(d) => section(
            ncc_bounds(&BoundInputs {
                constants: consts.clone(),
                l_grad_h: Some(d.l_grad),
                eps: cfg.epsilon,
                eps_hat_0: cfg.ncc_eps_hat_0(),
                h_star: Some(d.h_star),
                h_low: Some(d.h_low),
                max_h_at_start: Some((d.max_y)(&start.0)),
                ..Default::default()
            }),
            &mut missing,
        ),
        None => json!({ "unavailable": "instance has no nonconvex-concave data" }),
    };
    out.insert("ncc".into(), ncc);

    let alm_in = BoundInputs {
        constants: consts,
        eps: cfg.epsilon,
        eps_0: Some(cfg.epsilon_0),
        tau: Some(cfg.tau),
        lambda_cap: Some(lambda_cap),
        ..Default::default()
    };
    out.insert("alm".into(), section(alm_bounds(&alm_in), &mut missing));
    out.insert("alm_thresholds".into(), section(alm_thresholds(&alm_in), &mut missing));
    let cond = check_eps_condition(&alm_in);
    let verdict = section(cond.as_ref().map(|b| *b).map_err(clone_err), &mut missing);
    out.insert("eps_condition".into(), verdict);
    if matches!(cond, Ok(false)) {
        out.insert("advisory".into(), Value::String(ADVISORY.into()));
    }
    missing.sort();
    missing.dedup();
    out.insert("missing_constants".into(), json!(missing));
    Value::Object(out)
}

fn clone_err(e: &Error) -> Error {
    match e {
        Error::MissingConstant(s) => Error::MissingConstant(s),
        other => Error::InvalidInput(other.to_string()),
    }
}

struct Check {
    name: &'static str,
    value: f64,
    limit: f64,
}

impl Check {
    fn json(&self) -> Value {
        json!({ "name": self.name, "value": self.value, "limit": self.limit, "pass": self.value <= self.limit })
    }
}

/// What one solver layer hands back to the report writer.
struct Solved {
    x: Vec<f64>,
    y: Vec<f64>,
    trace: SolveTrace,
    counters: OracleCounters,
    outer_iterations: usize,
    layer_residual: f64,
    k_final: Option<usize>,
    /// `(λ_x, λ_y, λ̃_x)` of an ALM run.
    multipliers: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    checks: Vec<Check>,
}

enum Failure {
    Config(ConfigError),
    Core(Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn limits(cfg: &RunConfig) -> SafeguardLimits {
    let mut l = SafeguardLimits::default();
    if let Some(m) = cfg.max_outer {
        l.max_outer = m;
    }
    if cfg.max_inner.is_some() {
        l.max_inner = cfg.max_inner;
    }
    l
}

fn solve_scc_layer(cfg: &RunConfig, inst: &BuiltinInstance, start: &(Vec<f64>, Vec<f64>)) -> Result<Solved, Failure> {
    let data = inst
        .scc
        .ok_or_else(|| cfg_err("solver", format!("scc needs a strongly convex-strongly concave instance; `{}` is not", inst.name)))?;
    let eps_bar = cfg.epsilon_bar.expect("validated");
    let counted = Instrumented::new(&inst.problem);
    let prob = SccProblem::new(ObjectiveOracle::new(&counted), data.sigma_x, data.sigma_y, data.l_grad)?;
    let mut opts = SccOptions::new(eps_bar);
    opts.start = Some((start.0.iter().map(|v| -data.sigma_x * v).collect(), start.1.clone()));
    opts.limits = limits(cfg);
    let out = solve_scc(&prob, &opts)?;
    Ok(Solved {
        trace: out.trace(eps_bar),
        counters: counted.counters(),
        outer_iterations: out.outer_iterations(),
        layer_residual: out.residual,
        k_final: None,
        multipliers: None,
        checks: vec![Check {
            name: "scc_certificate",
            value: out.residual,
            limit: eps_bar,
        }],
        x: out.x,
        y: out.y,
    })
}

fn solve_ncc_layer(cfg: &RunConfig, inst: &BuiltinInstance, start: &(Vec<f64>, Vec<f64>)) -> Result<Solved, Failure> {
    let p = &inst.problem;
    if p.dims.n_c > 0 || p.dims.n_d > 0 {
        return Err(cfg_err("solver", format!("ncc ignores constraints; `{}` has some, use alm", inst.name)).into());
    }
    let eps = cfg.epsilon.expect("validated");
    let l = p.constants.l_grad_f.ok_or(Error::MissingConstant("L_grad_f"))?;
    let d_y = p.constants.d_y.or(p.prox_q.diameter()).ok_or(Error::MissingConstant("D_y"))?;
    let counted = Instrumented::new(p);
    let prob = NccProblem::new(ObjectiveOracle::new(&counted), l, d_y)?;
    let mut ncc_cfg = NccConfig::new(eps, cfg.ncc_eps_hat_0().expect("validated"));
    ncc_cfg.scc_limits = limits(cfg);
    if let Some(m) = cfg.max_ncc_outer {
        ncc_cfg.max_outer = m;
    }
    ncc_cfg.verify_subproblems = cfg.verify_subproblems;
    let out = solve_ncc(&prob, &ncc_cfg, (&start.0, &start.1))?;
    let last = out.last();
    let res = kkt_residuals(p, &out.x, &out.y, &[], &[])?;
    Ok(Solved {
        trace: out.trace(),
        counters: counted.counters(),
        outer_iterations: out.outer_iterations(),
        layer_residual: last.res_x_bound.max(last.res_y_bound),
        k_final: None,
        multipliers: None,
        checks: vec![
            Check {
                name: "stationarity_x",
                value: res.r_stat_x,
                limit: 3.0 * eps,
            },
            Check {
                name: "stationarity_y",
                value: res.r_stat_y,
                limit: 3.0 * eps,
            },
            Check {
                name: "last_step",
                value: last.displacement,
                limit: eps / (4.0 * l),
            },
        ],
        x: out.x,
        y: out.y,
    })
}

fn solve_alm_layer(cfg: &RunConfig, inst: &BuiltinInstance, start: &(Vec<f64>, Vec<f64>)) -> Result<Solved, Failure> {
    let eps = cfg.epsilon.expect("validated");
    let cap = cfg.lambda_cap.unwrap_or(inst.default_lambda_cap);
    let mut alm_cfg = AlmConfig::new(eps, cfg.tau, cfg.epsilon_0, cap, start.clone());
    alm_cfg.scc_limits = limits(cfg);
    if let Some(m) = cfg.max_ncc_outer {
        alm_cfg.max_ncc_outer = m;
    }
    let out = solve_alm(&inst.problem, &alm_cfg)?;
    let r = &out.residuals;
    let mut checks = vec![
        Check {
            name: "stationarity_x",
            value: r.r_stat_x,
            limit: 3.0 * eps,
        },
        Check {
            name: "stationarity_y",
            value: r.r_stat_y,
            limit: 3.0 * eps,
        },
    ];
    if let Ok(t) = alm_thresholds(&BoundInputs {
        constants: inst.problem.constants.clone(),
        eps: Some(eps),
        eps_0: Some(cfg.epsilon_0),
        tau: Some(cfg.tau),
        lambda_cap: Some(cap),
        ..Default::default()
    }) {
        checks.extend([
            Check {
                name: "feasibility_c",
                value: r.r_feas_c,
                limit: t.feas_c,
            },
            Check {
                name: "feasibility_d",
                value: r.r_feas_d,
                limit: t.feas_d,
            },
            Check {
                name: "complementarity_c",
                value: r.r_comp_c,
                limit: t.comp_c,
            },
            Check {
                name: "complementarity_d",
                value: r.r_comp_d,
                limit: t.comp_d,
            },
        ]);
    }
    let layer_residual = out.iterations.last().map_or(f64::INFINITY, |i| i.subproblem_residual);
    Ok(Solved {
        outer_iterations: out.outer_iterations(),
        k_final: Some(out.k_final),
        counters: out.counters,
        layer_residual,
        multipliers: Some((
            out.multipliers.lambda_x.clone(),
            out.multipliers.lambda_y.clone(),
            out.lambda_x_tilde.clone(),
        )),
        checks,
        x: out.x,
        y: out.y,
        trace: out.trace,
    })
}

/// Runs `cfg`, writing `trace.csv`, `report.json` and optionally
/// `plot_data.csv` into `out_dir`. Returns the process exit code.
pub fn execute(cfg: &RunConfig, out_dir: &Path, emit_plot_data: bool, report_bounds: bool) -> Result<i32> {
    let clock = Instant::now();
    let prepared = build_instance(cfg).and_then(|inst| resolve_start(cfg, &inst).map(|s| (inst, s)));
    let (inst, start) = match prepared {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_INVALID_CONFIG);
        }
    };
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let solved = match cfg.solver {
        Solver::Scc => solve_scc_layer(cfg, &inst, &start),
        Solver::Ncc => solve_ncc_layer(cfg, &inst, &start),
        Solver::Alm => solve_alm_layer(cfg, &inst, &start),
    };

    let mut report = serde_json::Map::new();
    report.insert("problem".into(), json!(inst.name));
    report.insert("solver".into(), json!(cfg.solver.as_str()));
    report.insert("config".into(), json!(cfg.raw));
    report.insert("start".into(), json!({ "x": start.0, "y": start.1 }));
    if report_bounds {
        let b = bounds_report(cfg, &inst, &start);
        if b.get("advisory").is_some() {
            eprintln!("{ADVISORY}");
        }
        report.insert("bounds".into(), b);
    }

    let code = match solved {
        Ok(s) => {
            let (lx, ly) = match &s.multipliers {
                Some((_, ly, lxt)) => (lxt.clone(), ly.clone()),
                None => (vec![], vec![]),
            };
            let residuals = kkt_residuals(&inst.problem, &s.x, &s.y, &lx, &ly)?;
            let objective = eval_objective(&inst.problem, &s.x, &s.y)?;
            let checks: Vec<Value> = s.checks.iter().map(Check::json).collect();
            let certified = s.checks.iter().all(|c| c.value <= c.limit);
            let code = if certified { EXIT_CERTIFIED } else { EXIT_NOT_CERTIFIED };
            report.insert("status".into(), json!(if certified { "certified" } else { "not_certified" }));
            report.insert("x".into(), json!(s.x));
            report.insert("y".into(), json!(s.y));
            if let Some((lam_x, lam_y, lam_xt)) = &s.multipliers {
                report.insert(
                    "multipliers".into(),
                    json!({ "lambda_x": lam_x, "lambda_y": lam_y, "lambda_x_tilde": lam_xt }),
                );
            }
            report.insert("residual_multipliers".into(), json!({ "lambda_x": lx, "lambda_y": ly }));
            report.insert("residuals".into(), serde_json::to_value(residuals)?);
            report.insert("layer_residual".into(), json!(s.layer_residual));
            report.insert("outer_iterations".into(), json!(s.outer_iterations));
            if let Some(k) = s.k_final {
                report.insert("k_final".into(), json!(k));
            }
            report.insert("counters".into(), serde_json::to_value(s.counters)?);
            report.insert(
                "objective".into(),
                json!({ "value": objective.value, "smooth_part_only": objective.smooth_only }),
            );
            report.insert("checks".into(), json!(checks));
            write_trace(&out_dir.join("trace.csv"), &s.trace)?;
            if emit_plot_data {
                write_plot_data(&out_dir.join("plot_data.csv"), &s.trace)?;
            }
            if !certified {
                eprintln!("warning: certificate checks failed, see report.json");
            }
            code
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            return Ok(EXIT_INVALID_CONFIG);
        }
        Err(Failure::Core(Error::IterationLimitExceeded { layer, best })) => {
            eprintln!("error: {layer}: iteration limit exceeded; best point written to report.json");
            report.insert("status".into(), json!("iteration_limit"));
            report.insert("layer".into(), json!(layer));
            report.insert("x".into(), json!(best.x));
            report.insert("y".into(), json!(best.y));
            report.insert("best_residual".into(), json!(best.residual));
            report.insert("outer_iterations".into(), json!(best.iterations));
            write_trace(&out_dir.join("trace.csv"), &best.trace)?;
            if emit_plot_data {
                write_plot_data(&out_dir.join("plot_data.csv"), &best.trace)?;
            }
            EXIT_ITERATION_LIMIT
        }
        Err(Failure::Core(e @ (Error::InvalidParameter(_) | Error::InvalidInput(_)))) => {
            eprintln!("error: invalid configuration: {e}");
            return Ok(EXIT_INVALID_CONFIG);
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            report.insert("status".into(), json!("error"));
            report.insert("message".into(), json!(e.to_string()));
            EXIT_NOT_CERTIFIED
        }
    };
    report.insert("exit_code".into(), json!(code));
    report.insert("wall_ms".into(), json!(clock.elapsed().as_secs_f64() * 1e3));
    let text = serde_json::to_string_pretty(&Value::Object(report))?;
    fs::write(out_dir.join("report.json"), text + "\n")?;
    Ok(code)
}

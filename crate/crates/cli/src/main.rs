//! `conmm`: config-driven runner for the constrained minimax solvers.

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use conmm_core::problems::INSTANCE_NAMES;
use conmm_core::registry;

use config::RunConfig;
use run::{EXIT_INVALID_CONFIG, EXIT_NOT_CERTIFIED};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "CONMM_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "conmm_out";

#[derive(Parser)]
#[command(name = "conmm", version, about = "First-order solvers for constrained minimax problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one config, or several with --batch.
    Solve {
        #[arg(long, required_unless_present = "batch", conflicts_with = "batch")]
        config: Option<PathBuf>,
        /// Run several configs concurrently; each writes to <out>/<config stem>/.
        #[arg(long, num_args = 1..)]
        batch: Vec<PathBuf>,
        /// Output directory. Defaults to `output.dir`, then $CONMM_OUT_DIR, then ./conmm_out.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write plot_data.csv (residual against oracle calls).
        #[arg(long)]
        emit_plot_data: bool,
        /// Embed the complexity bound report in report.json.
        #[arg(long)]
        report_bounds: bool,
    },
    /// Print the complexity bound report of a config as JSON.
    Bounds {
        #[arg(long)]
        config: PathBuf,
    },
    /// Built-in problem instances.
    Problems {
        #[command(subcommand)]
        action: ProblemsAction,
    },
}

#[derive(Subcommand)]
enum ProblemsAction {
    /// List the built-in instances.
    List,
}

fn load(path: &Path) -> std::result::Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    RunConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn out_dir(flag: &Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.clone()
        .or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
}

fn solve_one(path: &Path, dir: Option<PathBuf>, out: &Option<PathBuf>, plot: bool, bounds: bool) -> i32 {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID_CONFIG;
        }
    };
    let dir = dir.unwrap_or_else(|| out_dir(out, &cfg));
    match run::execute(&cfg, &dir, plot || cfg.emit_plot_data, bounds || cfg.report_bounds) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_NOT_CERTIFIED
        }
    }
}

fn solve_batch(paths: &[PathBuf], out: &Option<PathBuf>, plot: bool, bounds: bool) -> i32 {
    let base = out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR));
    let mut stems: Vec<String> = Vec::new();
    for p in paths {
        let stem = p.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
        let mut name = stem.clone();
        let mut i = 1;
        while stems.contains(&name) {
            i += 1;
            name = format!("{stem}_{i}");
        }
        stems.push(name);
    }
    let codes: Vec<i32> = std::thread::scope(|s| {
        let handles: Vec<_> = paths
            .iter()
            .zip(&stems)
            .map(|(p, stem)| {
                let dir = base.join(stem);
                s.spawn(move || solve_one(p, Some(dir), &None, plot, bounds))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or(EXIT_NOT_CERTIFIED)).collect()
    });
    for (p, c) in paths.iter().zip(&codes) {
        println!("{}: exit {c}", p.display());
    }
    codes.into_iter().max().unwrap_or(0)
}

fn list_problems() -> Result<()> {
    for name in INSTANCE_NAMES {
        let inst = registry(name).with_context(|| format!("building {name}"))?;
        let d = inst.problem.dims;
        let layers = match (inst.scc.is_some(), inst.ncc.is_some()) {
            (true, _) => "scc, ncc, alm",
            (false, true) => "ncc, alm",
            (false, false) => "alm",
        };
        println!(
            "{name}\tn={} m={} n_c={} n_d={}\tsolvers: {layers}\t{}",
            d.n, d.m, d.n_c, d.n_d, inst.references[0].note
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve {
            config,
            batch,
            out,
            emit_plot_data,
            report_bounds,
        } => match config {
            Some(path) => solve_one(&path, None, &out, emit_plot_data, report_bounds),
            None => solve_batch(&batch, &out, emit_plot_data, report_bounds),
        },
        Command::Bounds { config } => match load(&config) {
            Ok(cfg) => match run::build_instance(&cfg).and_then(|i| run::resolve_start(&cfg, &i).map(|s| (i, s))) {
                Ok((inst, start)) => {
                    let report = run::bounds_report(&cfg, &inst, &start);
                    if report.get("advisory").is_some() {
                        eprintln!("{}", run::ADVISORY);
                    }
                    println!("{}", serde_json::to_string_pretty(&report).expect("bounds serialize"));
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_INVALID_CONFIG
                }
            },
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_INVALID_CONFIG
            }
        },
        Command::Problems {
            action: ProblemsAction::List,
        } => match list_problems() {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e:#}");
                EXIT_NOT_CERTIFIED
            }
        },
    };
    ExitCode::from(code as u8)
}

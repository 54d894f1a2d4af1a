//! Command-line front end: argument parsing, run orchestration and output files.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::{load_config, to_toml, RunConfig, Scenario};
use crate::diagnostics::{diagnose, DiagnosticsReport, Outcome};
use crate::error::{ConfigError, DiagnosticsError, OracleError, SolverError, TrajectoryIoError, Violation};
use crate::oracle::{refinement_ladder, ConvergenceTable};
use crate::solver::{run, RunError};
use crate::trajectory::Trajectory;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

pub const TRAJECTORY_FILE: &str = "trajectory.bin";
pub const REPORT_FILE: &str = "report.json";
pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const CONFIG_ECHO_FILE: &str = "config.toml";

#[derive(Debug, Parser)]
#[command(name = "combustion1d", version, about = "Lagrangian 1D reacting gas solver with trajectory diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Output directory; falls back to `output.dir` from the config.
    #[arg(long, env = "COMBUSTION1D_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel work (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Suppress the human-readable summary.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args, Clone)]
pub struct Source {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "scenario")]
    pub config: Option<PathBuf>,
    /// Built-in scenario with default settings.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Override `time.snapshot_every`; 0 records every step.
    #[arg(long)]
    pub snapshot_every: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a configuration, write the trajectory and the diagnostics report.
    Run {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        common: Common,
    },
    /// Re-run every diagnostic on a stored trajectory.
    Verify {
        trajectory: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Refinement ladder of the main solver against the explicit reference.
    Convergence {
        #[command(flatten)]
        source: Source,
        /// Cell counts, coarsest first.
        #[arg(long, value_delimiter = ',', default_value = "256,512,1024")]
        ladder: Vec<usize>,
        /// Reference refinement over the finest rung.
        #[arg(long, default_value_t = 4)]
        refine: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run the cartesian product of parameter overrides.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// `dotted.key=v1,v2,...`; may be repeated.
        #[arg(long = "set", required = true)]
        sets: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// List the built-in initial-data scenarios.
    Scenarios,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryIoError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => CliError::Config(c),
            RunError::Solver(s) => CliError::Solver(s),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Solver(s) => CliError::Solver(s),
            OracleError::Config(c) => CliError::Config(c),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(_) => EXIT_SOLVER,
            _ => EXIT_CONFIG,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_error",
            CliError::Solver(_) => "solver_abort",
            CliError::Trajectory(_) => "trajectory_error",
            CliError::Diagnostics(_) => "diagnostics_error",
            CliError::Io { .. } => "io_error",
            CliError::Usage(_) => "usage_error",
        }
    }

    /// Machine-readable failure summary.
    pub fn summary(&self) -> serde_json::Value {
        let mut v = json!({
            "status": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Config(ConfigError::Invalid(list)) = self {
            v["violations"] = list
                .iter()
                .map(|x| json!({ "key": x.key, "message": x.message }))
                .collect();
        }
        v
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

/// Result of a subcommand: exit code plus the summary printed on failure.
#[derive(Debug)]
pub struct Finished {
    pub code: i32,
    pub summary: Option<serde_json::Value>,
}

impl Finished {
    fn pass() -> Self {
        Self {
            code: EXIT_PASS,
            summary: None,
        }
    }
}

fn verdict_summary(report: &DiagnosticsReport) -> Finished {
    let failures: Vec<_> = report
        .failures()
        .into_iter()
        .map(|v| json!({ "name": v.name, "value": v.value, "bound": v.bound, "tolerance": v.tolerance, "note": v.note }))
        .collect();
    if failures.is_empty() {
        Finished::pass()
    } else {
        Finished {
            code: EXIT_VERDICT,
            summary: Some(json!({ "status": "verdict_failure", "exit_code": EXIT_VERDICT, "failures": failures })),
        }
    }
}

fn load_source(source: &Source) -> Result<RunConfig, CliError> {
    let mut cfg = match (&source.config, &source.scenario) {
        (Some(path), _) => load_config(path)?,
        (None, Some(name)) => {
            let s = Scenario::ALL
                .into_iter()
                .find(|s| s.name() == name)
                .ok_or_else(|| CliError::Usage(format!("unknown scenario `{name}`; see `combustion1d scenarios`")))?;
            RunConfig::scenario(s)
        }
        (None, None) => return Err(CliError::Usage("one of --config or --scenario is required".into())),
    };
    if let Some(dt) = source.snapshot_every {
        cfg.time.snapshot_every = dt;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: Option<&RunConfig>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.map(|c| PathBuf::from(&c.output.dir)))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(contents))
        .map_err(io_err(format!("writing {}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_vec_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    write_file(path, &text)
}

fn print_report(report: &DiagnosticsReport) {
    for v in &report.verdicts {
        let tag = match v.verdict {
            Outcome::Pass => "pass",
            Outcome::Fail => "FAIL",
            Outcome::Inconclusive => "inconclusive",
        };
        println!(
            "{tag:>12}  {:<22} value {:>12.5e}  bound {:>12.5e}  slack {:>12.5e}",
            v.name, v.value, v.bound, v.slack
        );
    }
}

/// Write the trajectory, its index, the report, the CSV time series and the
/// config echo into `dir`.
pub fn write_outputs(dir: &Path, traj: &Trajectory, report: &DiagnosticsReport) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
    traj.write(&dir.join(TRAJECTORY_FILE))?;
    write_json(&dir.join(REPORT_FILE), report)?;
    write_file(&dir.join(TIMESERIES_FILE), report.to_csv().as_bytes())?;
    write_file(&dir.join(CONFIG_ECHO_FILE), to_toml(&traj.config).as_bytes())
}

fn cmd_run(source: &Source, common: &Common) -> Result<Finished, CliError> {
    let cfg = load_source(source)?;
    let traj = run(&cfg)?;
    let report = diagnose(&traj)?;
    let dir = out_dir(common, Some(&cfg));
    write_outputs(&dir, &traj, &report)?;
    if !common.quiet {
        println!(
            "{} snapshots to t = {} written to {}",
            traj.snapshots.len(),
            traj.final_state().t,
            dir.display()
        );
        print_report(&report);
    }
    Ok(verdict_summary(&report))
}

fn cmd_verify(path: &Path, common: &Common) -> Result<Finished, CliError> {
    let traj = Trajectory::read(path)?;
    let report = diagnose(&traj)?;
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
        write_json(&dir.join(REPORT_FILE), &report)?;
        write_file(&dir.join(TIMESERIES_FILE), report.to_csv().as_bytes())?;
    }
    if !common.quiet {
        print_report(&report);
    }
    Ok(verdict_summary(&report))
}

fn cmd_convergence(source: &Source, ladder: &[usize], refine: usize, common: &Common) -> Result<Finished, CliError> {
    let cfg = load_source(source)?;
    let table: ConvergenceTable = refinement_ladder(&cfg, ladder, refine)?;
    let dir = out_dir(common, Some(&cfg));
    std::fs::create_dir_all(&dir).map_err(io_err(format!("creating {}", dir.display())))?;
    write_json(&dir.join("convergence.json"), &table)?;
    if !common.quiet {
        println!("{:>8} {:>12} {:>12} {:>14}", "n", "dx", "dt_max", "l2_error");
        for r in &table.rungs {
            println!("{:>8} {:>12.5e} {:>12.5e} {:>14.6e}", r.n, r.dx, r.dt_max, r.l2_error);
        }
        println!("reference cells {}, observed order {:.4}", table.reference_cells, table.order);
    }
    let min_order = cfg.tolerance.min_order;
    if table.order >= min_order && table.monotone {
        Ok(Finished::pass())
    } else {
        Ok(Finished {
            code: EXIT_VERDICT,
            summary: Some(json!({
                "status": "verdict_failure",
                "exit_code": EXIT_VERDICT,
                "failures": [{ "name": "observed_order", "value": table.order, "bound": min_order, "monotone": table.monotone }],
            })),
        })
    }
}

/// A parsed `--set key=v1,v2` argument.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub key: String,
    pub values: Vec<toml::Value>,
}

fn parse_scalar(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("x = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

pub fn parse_override(arg: &str) -> Result<Override, CliError> {
    let (key, rest) = arg
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("expected key=v1,v2,... in `{arg}`")))?;
    let values: Vec<toml::Value> = rest.split(',').map(|v| parse_scalar(v.trim())).collect();
    if key.trim().is_empty() || rest.trim().is_empty() {
        return Err(CliError::Usage(format!("empty key or value list in `{arg}`")));
    }
    Ok(Override {
        key: key.trim().to_string(),
        values,
    })
}

/// Set a dotted key of `cfg` and re-validate.
pub fn apply_override(cfg: &RunConfig, key: &str, value: &toml::Value) -> Result<RunConfig, ConfigError> {
    let mut root = toml::Value::try_from(cfg).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let mut node = &mut root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| ConfigError::Invalid(vec![Violation::new(key, "not a table path")]))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value.clone());
            break;
        }
        node = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let out: RunConfig = root.try_into().map_err(|e: toml::de::Error| ConfigError::Syntax(format!("{key}: {e}")))?;
    out.validate()?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub settings: Vec<(String, String)>,
    pub status: String,
    pub failed: Vec<String>,
}

fn cmd_sweep(source: &Source, sets: &[String], common: &Common) -> Result<Finished, CliError> {
    let base = load_source(source)?;
    let overrides = sets.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
    let mut points: Vec<Vec<(String, toml::Value)>> = vec![vec![]];
    for o in &overrides {
        points = points
            .into_iter()
            .flat_map(|p| {
                o.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((o.key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    let configs = points
        .iter()
        .map(|p| p.iter().try_fold(base.clone(), |c, (k, v)| apply_override(&c, k, v)))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<SweepRow> = points
        .par_iter()
        .zip(configs.par_iter())
        .map(|(p, cfg)| {
            let settings = p.iter().map(|(k, v)| (k.clone(), v.to_string())).collect();
            match run(cfg).map_err(CliError::from).and_then(|t| Ok(diagnose(&t)?)) {
                Ok(report) => SweepRow {
                    settings,
                    status: if report.passed() { "pass" } else { "fail" }.into(),
                    failed: report.failures().iter().map(|v| v.name.clone()).collect(),
                },
                Err(e) => SweepRow {
                    settings,
                    status: e.kind().into(),
                    failed: vec![e.to_string()],
                },
            }
        })
        .collect();
    let dir = out_dir(common, Some(&base));
    std::fs::create_dir_all(&dir).map_err(io_err(format!("creating {}", dir.display())))?;
    write_json(&dir.join("sweep.json"), &rows)?;
    let mut csv = String::new();
    for o in &overrides {
        csv.push_str(&o.key);
        csv.push(',');
    }
    csv.push_str("status,failed\n");
    for r in &rows {
        for (_, v) in &r.settings {
            csv.push_str(&v.replace(',', ";"));
            csv.push(',');
        }
        csv.push_str(&format!("{},{}\n", r.status, r.failed.join(";").replace(',', ";")));
    }
    write_file(&dir.join("sweep.csv"), csv.as_bytes())?;
    if !common.quiet {
        print!("{csv}");
    }
    let bad: Vec<&SweepRow> = rows.iter().filter(|r| r.status != "pass").collect();
    if bad.is_empty() {
        return Ok(Finished::pass());
    }
    let code = if bad.iter().any(|r| r.status == "solver_abort") {
        EXIT_SOLVER
    } else if bad.iter().any(|r| r.status == "fail") {
        EXIT_VERDICT
    } else {
        EXIT_CONFIG
    };
    Ok(Finished {
        code,
        summary: Some(json!({ "status": "sweep_failure", "exit_code": code, "failures": bad })),
    })
}

fn cmd_scenarios() -> Finished {
    for s in Scenario::ALL {
        println!("{:<26} {}", s.name(), s.description());
    }
    Finished::pass()
}

fn workers(cmd: &Command) -> Option<usize> {
    match cmd {
        Command::Run { common, .. }
        | Command::Verify { common, .. }
        | Command::Convergence { common, .. }
        | Command::Sweep { common, .. } => common.workers,
        Command::Scenarios => None,
    }
}

pub fn execute(cli: &Cli) -> Result<Finished, CliError> {
    let go = || match &cli.command {
        Command::Run { source, common } => cmd_run(source, common),
        Command::Verify { trajectory, common } => cmd_verify(trajectory, common),
        Command::Convergence {
            source,
            ladder,
            refine,
            common,
        } => cmd_convergence(source, ladder, *refine, common),
        Command::Sweep { source, sets, common } => cmd_sweep(source, sets, common),
        Command::Scenarios => Ok(cmd_scenarios()),
    };
    match workers(&cli.command) {
        Some(0) => Err(CliError::Usage("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(go),
        None => go(),
    }
}

/// Run the parsed command line, print any failure summary as JSON on stdout
/// and return the process exit code.
pub fn main_with(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(f) => {
            if let Some(s) = f.summary {
                println!("{s}");
            }
            f.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            println!("{}", e.summary());
            e.exit_code()
        }
    }
}

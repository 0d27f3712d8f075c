//! The `domino` command line: `run` one scenario or `sweep` a parameter.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::{export, export_run, AnalysisError, Summary};
use crate::simnet::{simulate, ConfigError, Scenario};
use crate::wire::Timestamp;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DOMINO_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "domino-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

pub const SWEEP_PARAMS: [&str; 4] = ["wireless_loss_prob", "fup_records_max", "t_fup", "freq_error_ppm"];

#[derive(Debug, Parser)]
#[command(name = "domino", version, about = "Simulate multi-hop Wi-Fi clock synchronization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write CSV tables plus summary.txt.
    Run(RunArgs),
    /// Run a scenario once per value of a parameter and aggregate sweep.csv.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub scenario: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated duration in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Output directory (default: $DOMINO_OUT_DIR or ./domino-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
    /// Test only: accept FUPs regardless of source quality, which can form
    /// parent loops.
    #[arg(long)]
    pub debug_disable_sq_gate: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub scenario: PathBuf,
    /// One of wireless_loss_prob, fup_records_max, t_fup, freq_error_ppm.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values.
    #[arg(long, allow_hyphen_values = true)]
    pub values: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Concurrent runs (default: available cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<String>,
}

/// Everything one invocation needs, resolved from flags and environment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub scenario: PathBuf,
    pub seed: Option<u64>,
    pub duration: Option<f64>,
    pub out: PathBuf,
    pub force: bool,
    pub debug_disable_sq_gate: bool,
    pub sweep: Option<SweepSpec>,
    pub jobs: Option<usize>,
}

fn default_out() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

impl From<RunArgs> for RunManifest {
    fn from(a: RunArgs) -> Self {
        RunManifest {
            scenario: a.scenario,
            seed: a.seed,
            duration: a.duration,
            out: a.out.unwrap_or_else(default_out),
            force: a.force,
            debug_disable_sq_gate: a.debug_disable_sq_gate,
            sweep: None,
            jobs: None,
        }
    }
}

impl From<SweepArgs> for RunManifest {
    fn from(a: SweepArgs) -> Self {
        let values = a
            .values
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(String::from)
            .collect();
        RunManifest {
            scenario: a.scenario,
            seed: a.seed,
            duration: a.duration,
            out: a.out.unwrap_or_else(default_out),
            force: a.force,
            debug_disable_sq_gate: false,
            sweep: Some(SweepSpec { param: a.param, values }),
            jobs: a.jobs,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Violation(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        Failure::Input(e.to_string())
    }
}

fn load(m: &RunManifest) -> Result<Scenario, Failure> {
    let mut sc =
        Scenario::from_file(&m.scenario).map_err(|e| Failure::Input(format!("{}: {e}", m.scenario.display())))?;
    if let Some(seed) = m.seed {
        sc.reseed(seed);
    }
    if let Some(d) = m.duration {
        if !(d.is_finite() && d >= 0.0) {
            return Err(Failure::Input(format!("--duration: invalid value {d}")));
        }
        sc.duration = Timestamp::from_secs_f64(d);
    }
    sc.sim.debug_disable_sq_gate |= m.debug_disable_sq_gate;
    sc.validate()?;
    Ok(sc)
}

fn run_into(sc: &Scenario, dir: &Path, force: bool) -> Result<Summary, Failure> {
    let trace = simulate(sc)?;
    Ok(export_run(&trace, dir, force)?)
}

pub fn cmd_run(m: &RunManifest) -> i32 {
    let result = load(m).and_then(|sc| {
        let summary = run_into(&sc, &m.out, m.force)?;
        if summary.violations.is_empty() {
            Ok(summary)
        } else {
            Err(Failure::Violation(summary.violations.join("\n")))
        }
    });
    finish(result.map(|s| {
        print!("{}", s.render());
    }))
}

fn finish(r: Result<(), Failure>) -> i32 {
    match r {
        Ok(()) => EXIT_OK,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
        Err(Failure::Violation(msg)) => {
            eprintln!("protocol violation detected:\n{msg}");
            EXIT_VIOLATION
        }
    }
}

/// Applies one sweep value to a scenario.
pub fn apply_param(sc: &mut Scenario, param: &str, value: &str) -> Result<(), String> {
    let f = || {
        value
            .parse::<f64>()
            .map_err(|_| format!("{param}: not a number: {value:?}"))
    };
    match param {
        "wireless_loss_prob" => sc.loss.wireless_loss_prob = f()?,
        "fup_records_max" => {
            let k: usize = value
                .parse()
                .map_err(|_| format!("{param}: not a positive integer: {value:?}"))?;
            for s in &mut sc.topology.stas {
                s.engine_config.fup_records_max = k;
            }
        }
        "t_fup" => {
            let t = Timestamp::from_secs_f64(f()?);
            for s in &mut sc.topology.stas {
                s.engine_config.t_fup = t;
            }
        }
        // Same magnitude everywhere, alternating sign in station order, so
        // neighbours drift apart.
        "freq_error_ppm" => {
            let v = f()?;
            for (i, s) in sc.topology.stas.iter_mut().enumerate() {
                s.freq_error_ppm = if i % 2 == 0 { v } else { -v };
            }
        }
        _ => {
            return Err(format!(
                "unknown sweep parameter {param:?}; expected one of {}",
                SWEEP_PARAMS.join(", ")
            ))
        }
    }
    sc.validate().map_err(|e| format!("{param}={value}: {e}"))
}

pub const SWEEP_CSV: &str = "sweep.csv";

pub const SWEEP_HEADER: [&str; 11] = [
    "param",
    "value",
    "violations",
    "settled_at_s",
    "mean_abs_error_ns",
    "max_abs_error_ns",
    "pairing_success",
    "fups_emitted",
    "fups_delivered",
    "beacons_delivered",
    "converged_nodes",
];

/// One sweep.csv row.
pub fn summary_row(param: &str, value: &str, s: &Summary) -> Vec<String> {
    vec![
        param.to_string(),
        value.to_string(),
        s.violations.len().to_string(),
        s.settle_time.map_or_else(String::new, export::format_secs),
        format!("{:.1}", s.error.mean_abs_ns),
        s.error.max_abs_ns.to_string(),
        s.pairing_success.map_or_else(String::new, |p| format!("{p:.6}")),
        s.messages.fups.emitted.to_string(),
        s.messages.fups.delivered.to_string(),
        s.messages.beacons.delivered.to_string(),
        s.nodes.iter().filter(|n| n.convergence.is_some()).count().to_string(),
    ]
}

fn subdir_name(param: &str, value: &str) -> String {
    let v: String = value
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{param}={v}")
}

pub fn cmd_sweep(m: &RunManifest) -> i32 {
    finish(sweep(m))
}

fn sweep(m: &RunManifest) -> Result<(), Failure> {
    let spec = m
        .sweep
        .as_ref()
        .ok_or_else(|| Failure::Input("no sweep specification".into()))?;
    if !SWEEP_PARAMS.contains(&spec.param.as_str()) {
        return Err(Failure::Input(format!(
            "unknown sweep parameter {:?}; expected one of {}",
            spec.param,
            SWEEP_PARAMS.join(", ")
        )));
    }
    if spec.values.is_empty() {
        return Err(Failure::Input("--values: empty value list".into()));
    }
    let base = load(m)?;
    let mut runs = Vec::new();
    for v in &spec.values {
        let mut sc = base.clone();
        apply_param(&mut sc, &spec.param, v).map_err(Failure::Input)?;
        let dir = m.out.join(subdir_name(&spec.param, v));
        export::prepare_output_dir(&dir, &export::OUTPUT_FILES, m.force)?;
        runs.push((v.clone(), sc, dir));
    }
    let csv_path = export::prepare_output_dir(&m.out, &[SWEEP_CSV], m.force)?.remove(0);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(m.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Input(format!("--jobs: {e}")))?;
    let results: Vec<Result<Summary, Failure>> =
        pool.install(|| runs.par_iter().map(|(_, sc, dir)| run_into(sc, dir, true)).collect());

    let mut rows = Vec::new();
    let mut violations = String::new();
    for ((value, _, _), r) in runs.iter().zip(results) {
        let s = r?;
        for v in &s.violations {
            let _ = writeln!(violations, "{}={value}: {v}", spec.param);
        }
        rows.push(summary_row(&spec.param, value, &s));
    }
    let mut w =
        csv::Writer::from_path(&csv_path).map_err(|e| Failure::Input(format!("{}: {e}", csv_path.display())))?;
    w.write_record(SWEEP_HEADER)
        .map_err(|e| Failure::Input(format!("{}: {e}", csv_path.display())))?;
    for r in &rows {
        w.write_record(r)
            .map_err(|e| Failure::Input(format!("{}: {e}", csv_path.display())))?;
    }
    w.flush()
        .map_err(|e| Failure::Input(format!("{}: {e}", csv_path.display())))?;
    println!("{} runs written to {}", rows.len(), m.out.display());
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Violation(violations))
    }
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run(a) => cmd_run(&a.into()),
        Command::Sweep(a) => cmd_sweep(&a.into()),
    }
}

//! Command-line scenario runner.

mod scenario;
mod tasks;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

pub use scenario::{
    builtin, ClosureKind, EnsembleSettings, FieldKind, GridSettings, IntegratorSettings, JetSettings,
    MeasurementSettings, OneStepKind, OneStepSettings, Physics, Scenario, SpinSettings, Task, VerifySettings, BUILTIN,
};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "qjet", version, about = "Quantum trajectories from truncated momentum hierarchies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario file or a built-in scenario by name.
    Run(RunArgs),
    /// List the built-in scenarios.
    List,
    /// Show a built-in scenario and its configuration.
    Describe { name: String },
}

/// Command-line overrides of scenario settings.
#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct RunArgs {
    /// Path to a TOML scenario, or the name of a built-in one.
    pub scenario: String,
    /// Output directory, output/<name> by default.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Highest momentum order kept.
    #[arg(long)]
    pub truncation: Option<u32>,
    /// Step size.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Final time.
    #[arg(long)]
    pub t_final: Option<f64>,
    /// How the highest order is closed.
    #[arg(long, value_enum)]
    pub closure: Option<ClosureKind>,
    /// Worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Switch the double-slit detectors on.
    #[arg(long, conflicts_with = "no_detectors")]
    pub detectors: bool,
    /// Switch the double-slit detectors off.
    #[arg(long)]
    pub no_detectors: bool,
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub files: Vec<String>,
    pub diagnostics: Value,
    pub exit_code: i32,
}

/// Exit code for an error raised while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_OTHER,
    }
}

/// Read a scenario from a path, falling back to the built-in catalog by name or file stem.
pub fn load_scenario(spec: &str) -> Result<(Scenario, String, String)> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        return Ok((Scenario::from_toml(&text)?, path.display().to_string(), text));
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(spec);
    let text =
        builtin(stem).ok_or_else(|| Error::Config(format!("no scenario file or built-in scenario named {spec}")))?;
    Ok((Scenario::from_toml(text)?, format!("builtin:{stem}"), text.to_string()))
}

/// Apply the command-line overrides; returns the ones that were set.
pub fn apply_overrides(s: &mut Scenario, args: &RunArgs) -> Result<BTreeMap<String, Value>> {
    let mut set = BTreeMap::new();
    if let Some(seed) = args.seed {
        s.seed = seed;
        set.insert("seed".into(), json!(seed));
    }
    if let Some(n) = args.truncation {
        s.jet.truncation = n;
        set.insert("truncation".into(), json!(n));
    }
    if let Some(dt) = args.dt {
        s.integrator.dt = dt;
        set.insert("dt".into(), json!(dt));
    }
    if let Some(t) = args.t_final {
        s.integrator.t_final = t;
        set.insert("t_final".into(), json!(t));
    }
    if let Some(c) = args.closure {
        s.jet.closure = c;
        set.insert("closure".into(), json!(c));
    }
    if let Some(n) = args.threads {
        set.insert("threads".into(), json!(n));
    }
    if args.detectors || args.no_detectors {
        match &mut s.measurement {
            Some(MeasurementSettings::DoubleSlit { detectors, .. }) => *detectors = args.detectors,
            _ => return Err(Error::Config("detector flags apply to double-slit scenarios only".into())),
        }
        set.insert("detectors".into(), json!(args.detectors));
    }
    s.validate()?;
    Ok(set)
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Run a scenario into `dir` and write its manifest.
pub fn run_scenario(
    s: &Scenario,
    source: &str,
    text: &str,
    overrides: &BTreeMap<String, Value>,
    dir: &Path,
) -> Result<RunSummary> {
    std::fs::create_dir_all(dir)?;
    let started = unix_seconds();
    let clock = Instant::now();
    let result = tasks::run_task(s, dir);
    let seconds = clock.elapsed().as_secs_f64();
    let (files, diagnostics, exit_code, error) = match &result {
        Ok(out) => (
            out.files.clone(),
            out.diagnostics.clone(),
            if out.failed_checks { EXIT_CHECK_FAILED } else { EXIT_OK },
            None,
        ),
        Err(e) => (Vec::new(), Value::Null, exit_code(e), Some(e.to_string())),
    };
    let manifest = json!({
        "tool": "qjet",
        "version": env!("CARGO_PKG_VERSION"),
        "source": source,
        "config_text": text,
        "scenario": s,
        "overrides": overrides,
        "seed": s.seed,
        "started_unix": started,
        "finished_unix": unix_seconds(),
        "seconds": seconds,
        "exit_code": exit_code,
        "error": error,
        "outputs": files,
        "diagnostics": diagnostics,
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    result.map(|out| RunSummary {
        output_dir: dir.to_path_buf(),
        files: out.files,
        diagnostics: out.diagnostics,
        exit_code,
    })
}

fn run(args: &RunArgs) -> Result<i32> {
    let (mut s, source, text) = load_scenario(&args.scenario)?;
    let overrides = apply_overrides(&mut s, args)?;
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let dir = args.output_dir.clone().unwrap_or_else(|| PathBuf::from("output").join(&s.name));
    let summary = run_scenario(&s, &source, &text, &overrides, &dir)?;
    eprintln!("{}: wrote {} to {}", s.name, summary.files.join(", "), dir.display());
    Ok(summary.exit_code)
}

fn list() {
    let mut out = std::io::stdout().lock();
    for (name, text) in BUILTIN {
        let s = Scenario::from_toml(text).expect("built-in scenarios parse");
        let task = format!("{:?}", s.task).to_lowercase();
        if writeln!(out, "{name:<24} {task:<12} {}", s.description).is_err() {
            return;
        }
    }
}

fn describe(name: &str) -> Result<()> {
    let text = builtin(name).ok_or_else(|| Error::Config(format!("unknown scenario {name}")))?;
    let s = Scenario::from_toml(text)?;
    // a closed pipe is not an error worth reporting here
    let _ = write!(std::io::stdout().lock(), "{}: {}\nchecks: {}\n\n{text}", s.name, s.description, s.target);
    Ok(())
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => run(&args),
        Command::List => {
            list();
            Ok(EXIT_OK)
        }
        Command::Describe { name } => describe(&name).map(|_| EXIT_OK),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

//! Command-line front end for the dynamic-gain disturbance observer.
//!
//! Verbs:
//!
//! * `validate` checks a scenario's certificates (clock constants, gain
//!   condition, plant bound constants) without simulating;
//! * `run` simulates one scenario and writes its artifacts (canonical
//!   scenario, trajectory CSV, envelope plot data, JSON summary);
//! * `batch` runs several scenarios in parallel, one output directory each;
//! * `presets list` shows the built-in scenario library.
//!
//! Exit codes are a stable contract: 0 success, 2 validation failure,
//! 3 simulation abort, 4 certified envelope violated. Code 1 is reserved
//! for I/O failures while writing artifacts.

mod batch;
mod run;
mod summary;
mod validate;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dynobs_core::{presets, Scenario};

pub(crate) const EXIT_IO: u8 = 1;
pub(crate) const EXIT_VALIDATION: u8 = 2;
pub(crate) const EXIT_ABORT: u8 = 3;
pub(crate) const EXIT_BOUND: u8 = 4;

/// Environment variable naming the default root for run outputs.
pub(crate) const OUT_ROOT_ENV: &str = "DYNOBS_OUT_ROOT";

#[derive(Parser)]
#[command(
    name = "dynobs",
    version,
    about = "Dynamic-gain disturbance observer: certificate checks and co-simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario's certificates without simulating
    Validate(ValidateArgs),
    /// Simulate one scenario and write its artifacts
    Run(RunArgs),
    /// Run several scenarios in parallel, one output subdirectory each
    Batch(BatchArgs),
    /// Inspect the built-in scenario library
    Presets {
        #[command(subcommand)]
        action: PresetsAction,
    },
}

#[derive(Subcommand)]
enum PresetsAction {
    /// List built-in scenarios with their key settings
    List,
}

/// Scenario parameter overrides shared by all simulating verbs.
#[derive(Args, Debug, Clone, Default)]
pub(crate) struct Overrides {
    /// Integration step in seconds (overrides the scenario's value)
    #[arg(long, value_name = "S")]
    step: Option<f64>,
    /// Run length in seconds (overrides the scenario's value)
    #[arg(long, value_name = "S")]
    horizon: Option<f64>,
    /// Relative slack for the envelope check (overrides the scenario's value)
    #[arg(long, value_name = "REL")]
    tolerance: Option<f64>,
}

#[derive(Args, Debug)]
pub(crate) struct ValidateArgs {
    /// Scenario file path or built-in preset name
    #[arg(long, value_name = "PATH|NAME")]
    scenario: String,
    #[command(flatten)]
    overrides: Overrides,
    /// Seed for the random-state spot checks
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Number of random states sampled per spot check
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

#[derive(Args, Debug)]
pub(crate) struct RunArgs {
    /// Scenario file path or built-in preset name
    #[arg(long, value_name = "PATH|NAME")]
    scenario: String,
    /// Output directory (default: <out root>/<scenario name>)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    /// Also run a constant-gain comparison observer with this gain
    #[arg(long, value_name = "GAIN")]
    baseline: Option<f64>,
    /// Suppress the human-readable report on stdout
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
pub(crate) struct BatchArgs {
    /// Scenario file paths or preset names (repeat the flag per scenario)
    #[arg(long = "scenario", value_name = "PATH|NAME", required = true)]
    scenarios: Vec<String>,
    /// Output root; every scenario writes into <root>/<name>
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    /// Constant-gain comparison observer applied to every scenario
    #[arg(long, value_name = "GAIN")]
    baseline: Option<f64>,
}

/// Command failure carrying the exit code it maps to.
#[derive(Debug)]
pub(crate) struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn validation(msg: impl fmt::Display) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: msg.to_string(),
        }
    }

    pub fn abort(msg: impl fmt::Display) -> Self {
        Self {
            code: EXIT_ABORT,
            message: msg.to_string(),
        }
    }

    pub fn io(context: &str, err: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{context}: {err}"),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<dynobs_core::Error> for Failure {
    fn from(err: dynobs_core::Error) -> Self {
        Failure::validation(err)
    }
}

pub(crate) type CmdResult = Result<u8, Failure>;

/// Loads a scenario from a file path or, when the argument names no file and
/// looks like a bare name, from the built-in preset library.
pub(crate) fn load_scenario(source: &str) -> Result<Scenario, Failure> {
    let looks_like_path = source.contains(std::path::MAIN_SEPARATOR)
        || source.contains('/')
        || Path::new(source).extension().is_some();
    let path = Path::new(source);
    if path.is_file() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::validation(format!("reading {}: {e}", path.display())))?;
        Scenario::from_toml_str(&text)
            .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
    } else if looks_like_path {
        Err(Failure::validation(format!(
            "scenario file {} does not exist",
            path.display()
        )))
    } else {
        presets::load(source).map_err(Failure::from)
    }
}

/// Applies command-line overrides, then re-checks cross-field consistency.
pub(crate) fn apply_overrides(scenario: &mut Scenario, o: &Overrides) -> Result<(), Failure> {
    if let Some(h) = o.horizon {
        scenario.sim.horizon = h;
    }
    if let Some(s) = o.step {
        scenario.sim.step = s;
    }
    if let Some(t) = o.tolerance {
        scenario.sim.bound_tolerance = t;
    }
    scenario.validate().map_err(Failure::from)
}

/// Output root for runs that did not pass `--out`: the environment override
/// or `./runs`.
pub(crate) fn default_out_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn dispatch(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Validate(args) => validate::cmd_validate(&args),
        Command::Run(args) => run::cmd_run(&args),
        Command::Batch(args) => batch::cmd_batch(&args),
        Command::Presets {
            action: PresetsAction::List,
        } => cmd_presets_list(),
    }
}

fn cmd_presets_list() -> CmdResult {
    let scenarios = presets::load_all()?;
    let width = scenarios.iter().map(|s| s.name.len()).max().unwrap_or(0);
    for sc in &scenarios {
        let kf = sc.kf_function()?;
        let report = sc
            .gain
            .verify_condition(kf.b_tilde(), &dynobs_core::condition_grid(&kf))?;
        let status = if report.holds {
            "certified"
        } else {
            "advisory "
        };
        println!(
            "{:width$}  {}  plant {}, clock {}, gain {}, horizon {} s",
            sc.name,
            status,
            plant_family(sc),
            clock_family(sc),
            gain_family(sc),
            sc.sim.horizon,
        );
        if !sc.description.is_empty() {
            println!("{:width$}  {}", "", sc.description);
        }
    }
    Ok(0)
}

pub(crate) fn plant_family(sc: &Scenario) -> &'static str {
    match sc.plant.kind {
        dynobs_core::PlantKind::FloatingTrunk { .. } => "floating_trunk",
        dynobs_core::PlantKind::TwoLink { .. } => "two_link",
    }
}

pub(crate) fn clock_family(sc: &Scenario) -> &'static str {
    match sc.clock {
        dynobs_core::KfKind::Linear { .. } => "linear",
        dynobs_core::KfKind::Exponential { .. } => "exponential",
        dynobs_core::KfKind::Logistic { .. } => "logistic",
        dynobs_core::KfKind::Tabulated { .. } => "tabulated",
    }
}

pub(crate) fn gain_family(sc: &Scenario) -> &'static str {
    match sc.gain.kind {
        dynobs_core::GainKind::Linear { .. } => "linear",
        dynobs_core::GainKind::Exp { .. } => "exp",
        dynobs_core::GainKind::Tabulated { .. } => "tabulated",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code)
        }
    }
}

//! `hcalloc`: hybrid Coulomb/thruster force allocation from scenario files.
//!
//! Exit codes: 0 success, 2 invalid input, 3 solver failure (a fallback
//! result is still written).

mod output;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use hybrid_coulomb::allocator::{AllocatorOptions, AllocatorRegistry, HybridAllocator};
use hybrid_coulomb::scenario::{EpsilonMode, EpsilonSetSpec, ScenarioFile};
use hybrid_coulomb::sdp::{SdpStatus, SolverRegistry, SolverSettings, DEFAULT_TOLERANCE};
use hybrid_coulomb::sim;

const EXIT_INVALID: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "hcalloc", version, about = "Hybrid Coulomb/thruster force allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Allocate charges and thrusts for the scenario's formation and command.
    Allocate(Common),
    /// Solve the trace program at every ε and print one CSV row per ε.
    Sweep(Common),
    /// Run the scenario's maneuver and write trajectory.csv and summary.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario JSON file.
    scenario: PathBuf,

    /// Use a linear ε grid with this many points.
    #[arg(long, conflicts_with = "epsilon_list")]
    epsilon_count: Option<usize>,

    /// Use these ε values (N, comma separated).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    epsilon_list: Option<Vec<f64>>,

    /// Relative solver tolerance.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tol: f64,

    /// Print the normalized scenario, flags applied, and exit.
    #[arg(long)]
    dump_normalized: bool,

    /// Allocation strategy.
    #[arg(long, default_value = "hybrid")]
    allocator: String,

    /// Trace program backend.
    #[arg(long, default_value = "admm")]
    solver: String,
}

enum Failure {
    Invalid(String),
    Io(String),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Invalid(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(warning)) => {
            eprintln!("warning: {warning}");
            ExitCode::from(EXIT_SOLVER)
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

/// A returned warning means the solver failed and a fallback was written.
fn run(cli: Cli) -> Result<Option<String>, Failure> {
    let common = match &cli.command {
        Command::Allocate(c) | Command::Sweep(c) | Command::Simulate { common: c, .. } => c,
    };
    let scenario = load(common)?;
    if common.dump_normalized {
        println!("{}", scenario.normalized().to_json());
        return Ok(None);
    }
    if !(common.tol > 0.0 && common.tol.is_finite()) {
        return Err(invalid(format!("--tol must be positive, got {}", common.tol)));
    }
    let settings = SolverSettings { tol: common.tol, ..SolverSettings::default() };
    let options = AllocatorOptions::from_registry(&SolverRegistry::default(), &common.solver, settings)
        .map_err(invalid)?;

    match &cli.command {
        Command::Allocate(_) => allocate(&scenario, common, &options),
        Command::Sweep(_) => sweep(&scenario, &options),
        Command::Simulate { out, .. } => simulate(&scenario, common, &options, out),
    }
}

fn load(common: &Common) -> Result<ScenarioFile, Failure> {
    let text = fs::read_to_string(&common.scenario)
        .map_err(|e| invalid(format!("cannot read {}: {e}", common.scenario.display())))?;
    let mut scenario = ScenarioFile::parse(&text).map_err(invalid)?;
    if let Some(count) = common.epsilon_count {
        scenario.epsilon_set = Some(EpsilonSetSpec { mode: EpsilonMode::Linear, count: Some(count), values: None });
    }
    if let Some(values) = &common.epsilon_list {
        scenario.epsilon_set =
            Some(EpsilonSetSpec { mode: EpsilonMode::Explicit, count: None, values: Some(values.clone()) });
    }
    scenario.validate().map_err(|e| invalid(format!("{e} (after applying flags)")))?;
    Ok(scenario)
}

fn allocate(
    scenario: &ScenarioFile,
    common: &Common,
    options: &AllocatorOptions,
) -> Result<Option<String>, Failure> {
    let state = scenario.formation_state().map_err(invalid)?;
    let f_cmd = scenario.command().map_err(invalid)?;
    let allocator = AllocatorRegistry::default().build(&common.allocator, options).map_err(invalid)?;
    let result = allocator.allocate(&state, &f_cmd, &scenario.epsilon_grid()).map_err(invalid)?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "{}", output::allocation_json(allocator.name(), &result))?;
    Ok(result
        .degraded
        .then(|| "solver failed at every tolerance; thrusters-only result printed".to_string()))
}

fn sweep(scenario: &ScenarioFile, options: &AllocatorOptions) -> Result<Option<String>, Failure> {
    let state = scenario.formation_state().map_err(invalid)?;
    let f_cmd = scenario.command().map_err(invalid)?;
    let set = scenario
        .epsilon_grid()
        .resolve(f_cmd.norm())
        .map_err(|e| invalid(format!("no usable ε for command norm {}: {e}", f_cmd.norm())))?;
    let hybrid = HybridAllocator::new(Arc::clone(&options.solver), options.settings);
    let rows = hybrid.sweep(&state, &f_cmd, &set).map_err(invalid)?;
    output::sweep_csv(io::stdout().lock(), state.count(), &rows)?;
    let failed = rows.iter().filter(|d| d.status == SdpStatus::NumericalFailure).count();
    Ok((failed > 0).then(|| format!("solver failed on {failed} of {} tolerances", rows.len())))
}

fn simulate(
    scenario: &ScenarioFile,
    common: &Common,
    options: &AllocatorOptions,
    out: &Path,
) -> Result<Option<String>, Failure> {
    let cfg = scenario.maneuver_config().map_err(invalid)?;
    let allocator = AllocatorRegistry::default().build(&common.allocator, options).map_err(invalid)?;
    let run = sim::run_maneuver(&cfg, allocator.as_ref()).map_err(invalid)?;
    fs::create_dir_all(out)?;
    output::trajectory_csv(fs::File::create(out.join("trajectory.csv"))?, &run.log)?;
    fs::write(out.join("summary.json"), output::summary_json(&run.summary) + "\n")?;
    let failed = run.summary.fallback_steps;
    Ok((failed > 0).then(|| format!("{failed} of {} steps fell back to thrusters only", run.summary.steps)))
}

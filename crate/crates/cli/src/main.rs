use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pmu_fdl::noise::NoiseParams;
use pmu_fdl::placement::CostOption;
use pmu_fdl::simulation::{
    FaultType, DEFAULT_FAULT_RESISTANCE, DEFAULT_FAULT_TIME, DEFAULT_POST_FAULT_DURATION,
};

mod commands;

/// PMU placement, unlocalizable fault clusters and fault detection,
/// localization and characterization on radial three-phase grids.
///
/// Exit codes: 0 success, 1 malformed input, 2 infeasible placement,
/// violated observability condition or mismatched monitoring.
#[derive(Parser)]
#[command(name = "pmu-fdl", version)]
struct Cli {
    /// Grid description file (TOML). Defaults to the built-in 17-node benchmark.
    #[arg(long, global = true)]
    grid: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Directory for reports, streams and traces.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Where the monitored set comes from.
    #[arg(long, global = true, value_enum, default_value_t = PlacementSource::File)]
    placement: PlacementSource,

    /// Fork node that must split clusters when a placement is solved (repeatable).
    #[arg(long = "split", global = true, value_name = "NODE")]
    splits: Vec<usize>,

    /// Cross-check the clusters against the empirical residual oracle.
    #[arg(long, global = true)]
    verify: bool,

    #[command(flatten)]
    noise: NoiseArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PlacementSource {
    /// Monitored flags of the grid file.
    File,
    /// Optimal placement with unit costs.
    Uniform,
    /// Optimal placement penalizing monitored forks.
    Resolution,
}

#[derive(Args)]
struct NoiseArgs {
    /// Relative voltage magnitude standard deviation.
    #[arg(long, global = true)]
    noise_v_mag: Option<f64>,
    /// Relative current magnitude standard deviation.
    #[arg(long, global = true)]
    noise_i_mag: Option<f64>,
    /// Voltage phase standard deviation, rad.
    #[arg(long, global = true)]
    noise_v_phase: Option<f64>,
    /// Current phase standard deviation, rad.
    #[arg(long, global = true)]
    noise_i_phase: Option<f64>,
    /// Reporting period, s.
    #[arg(long, global = true)]
    noise_period: Option<f64>,
    /// Exact measurements (overrides the other noise flags).
    #[arg(long, global = true)]
    noise_free: bool,
}

impl NoiseArgs {
    fn params(&self) -> NoiseParams {
        let d = NoiseParams::default();
        let period = self.noise_period.unwrap_or(d.sample_period);
        if self.noise_free {
            return NoiseParams {
                sample_period: period,
                ..NoiseParams::noise_free()
            };
        }
        NoiseParams {
            v_mag: self.noise_v_mag.unwrap_or(d.v_mag),
            i_mag: self.noise_i_mag.unwrap_or(d.i_mag),
            v_phase: self.noise_v_phase.unwrap_or(d.v_phase),
            i_phase: self.noise_i_phase.unwrap_or(d.i_phase),
            sample_period: period,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the optimal PMU placement.
    Place {
        #[arg(long, default_value = "resolution")]
        cost: CostOption,
    },
    /// Unlocalizable fault clusters of the monitored grid.
    Clusters,
    /// Observability conditions and the rank test of the monitored grid.
    CheckObservability,
    /// Simulate one fault, synthesize PMU measurements and run the detector.
    Simulate(ScenarioArgs),
    /// Run the detector on a measurement stream (CSV).
    RunFdla {
        #[arg(long)]
        stream: PathBuf,
    },
    /// Monte Carlo campaign over a scenario list.
    Campaign {
        /// Scenario file (TOML). Defaults to the nine benchmark scenarios.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        runs: usize,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file; the scenario at `--index` is simulated.
    #[arg(long, conflicts_with_all = ["line", "branch"])]
    scenarios: Option<PathBuf>,
    /// 1-based position in the scenario file.
    #[arg(long, default_value_t = 1)]
    index: usize,
    /// Faulted line by its end nodes, e.g. `4-5`.
    #[arg(long, conflicts_with = "branch")]
    line: Option<String>,
    /// Faulted branch id.
    #[arg(long)]
    branch: Option<usize>,
    /// Fault position as a fraction of the branch from its `from` end.
    #[arg(long, default_value_t = 0.5)]
    position: f64,
    #[arg(long = "type", default_value = "3ph")]
    fault_type: FaultType,
    /// Fault resistance, ohm.
    #[arg(long, default_value_t = DEFAULT_FAULT_RESISTANCE)]
    resistance: f64,
    /// Fault inception, s.
    #[arg(long, default_value_t = DEFAULT_FAULT_TIME)]
    fault_time: f64,
    /// Simulated time after the fault, s.
    #[arg(long, default_value_t = DEFAULT_POST_FAULT_DURATION)]
    duration: f64,
}

pub enum Failure {
    /// Malformed files or arguments.
    Input(String),
    /// Infeasible placement, violated observability or mismatched monitoring.
    Check(String),
}

impl From<pmu_fdl::Error> for Failure {
    fn from(e: pmu_fdl::Error) -> Self {
        use pmu_fdl::Error::*;
        match e {
            Infeasible
            | ObservabilityViolated { .. }
            | Unobservable { .. }
            | MonitoringMismatch(_) => Failure::Check(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

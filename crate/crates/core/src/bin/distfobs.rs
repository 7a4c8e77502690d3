use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use distfobs::random::{feasible_instances, InstanceShape};
use distfobs::simcli::{self, Mode, Overrides, Scenario, SimulationMethod};
use distfobs::{Error, Result, ToleranceConfig};

#[derive(Parser)]
#[command(
    version,
    about = "Distributed functional observer design and simulation"
)]
struct Cli {
    /// Seed for randomized runs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Relative singular-value cutoff for rank decisions.
    #[arg(long = "tol-rank", global = true)]
    tol_rank: Option<f64>,
    /// Relative slack for residual checks.
    #[arg(long = "tol-residual", global = true)]
    tol_residual: Option<f64>,
    /// Target spectral radius of the leader observers.
    #[arg(long, global = true)]
    rho: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Proposed,
    Naive,
}

#[derive(Subcommand)]
enum Command {
    /// Centralized conditions and leader-set feasibility.
    Check { scenario: PathBuf },
    /// Full design report as JSON.
    Analyze { scenario: PathBuf },
    /// Simulate the plant and the observer network, writing a CSV trace.
    Simulate {
        scenario: PathBuf,
        /// Horizon K; overrides the scenario file.
        #[arg(long)]
        steps: Option<usize>,
        /// CSV file to write.
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Step raw estimates with the measurements instead of tracking the error.
        #[arg(long)]
        direct: bool,
    },
    /// Print a random feasible scenario drawn from `--seed`.
    Random,
}

fn overrides(cli: &Cli) -> Overrides {
    Overrides {
        rank_tol: cli.tol_rank,
        residual_tol: cli.tol_residual,
        rho: cli.rho,
        ..Overrides::default()
    }
}

/// Writes a line to stdout; a reader that hung up early is not an error.
fn emit(text: &str) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    emit(&serde_json::to_string_pretty(value)?)
}

fn run(cli: &Cli) -> Result<()> {
    let ov = overrides(cli);
    match &cli.command {
        Command::Check { scenario } => {
            let s = Scenario::load_with(scenario, &ov)?;
            let report = simcli::run_check(&s);
            let d = report.darouach;
            emit(&format!("centralized rank condition: {}", d.rank_cond))?;
            emit(&format!(
                "centralized detectability condition: {}",
                d.detect_cond
            ))?;
            if report.minimal_leader_sets.is_empty() {
                emit("no feasible leader set")?;
                return Err(Error::NoFeasibleLeaderSet);
            }
            for set in &report.minimal_leader_sets {
                let rows: Vec<String> =
                    set.rows.iter().map(|[n, r]| format!("C{n}[{r}]")).collect();
                emit(&format!(
                    "minimal leader set {:?}: rows {}, rank {}",
                    set.nodes,
                    rows.join(" "),
                    set.rank
                ))?;
            }
            Ok(())
        }
        Command::Analyze { scenario } => {
            let s = Scenario::load_with(scenario, &ov)?;
            let report = simcli::run_analyze(&s)?;
            print_json(&report)?;
            if report.design.is_none() {
                return Err(Error::NoFeasibleLeaderSet);
            }
            Ok(())
        }
        Command::Simulate {
            scenario,
            steps,
            output,
            mode,
            direct,
        } => {
            let ov = Overrides {
                horizon: *steps,
                mode: mode.map(|m| match m {
                    ModeArg::Proposed => Mode::Proposed,
                    ModeArg::Naive => Mode::Naive,
                }),
                ..ov
            };
            let s = Scenario::load_with(scenario, &ov)?;
            let method = if *direct {
                SimulationMethod::Direct
            } else {
                SimulationMethod::Deviation
            };
            let trace = simcli::run_simulate(&s, method)?;
            simcli::export_trace(&trace, output)?;
            eprintln!(
                "wrote {} rows to {}; max node error at k = {}: {:.3e}",
                trace.psi.len() * trace.node_count,
                output.display(),
                trace.horizon(),
                trace.final_max_error()
            );
            Ok(())
        }
        Command::Random => {
            let defaults = ToleranceConfig::default();
            let tol = ToleranceConfig {
                rank_tol: cli.tol_rank.unwrap_or(defaults.rank_tol),
                residual_tol: cli.tol_residual.unwrap_or(defaults.residual_tol),
                ..defaults
            };
            tol.validate()?;
            let (model, _) = feasible_instances(cli.seed, 1, &InstanceShape::default(), &tol)
                .pop()
                .expect("one instance requested");
            let mut s = Scenario::new(model);
            s.tolerances = tol;
            if let Some(rho) = cli.rho {
                s.rho = rho;
            }
            emit(&s.to_json())?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, Error::NoFeasibleLeaderSet) {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

mod analysis;
mod error;
mod report;
mod run;
mod simulate;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use euler_null::solver::Scenario;

use crate::error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "euler-null", version, about = "Compressible Euler flows: wave-transport residuals, null structure and shock formation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Scenario selection and the overrides applied to it.
#[derive(Args, Debug, Clone)]
struct ScenarioArgs {
    /// Scenario JSON file (defaults to the scenario stored in the run directory).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory for all outputs.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the mu_* threshold at which runs stop.
    #[arg(long)]
    mu_stop: Option<f64>,
    /// Write a snapshot every n steps (overrides `snapshot_every`).
    #[arg(long)]
    snapshots: Option<usize>,
}

impl ScenarioArgs {
    fn load(&self) -> CliResult<Scenario> {
        let mut sc = run::resolve_scenario(self.config.as_deref(), &self.out)?;
        if let Some(s) = self.seed {
            sc.seed = s;
        }
        if let Some(m) = self.mu_stop {
            sc.mu_stop = m;
        }
        if let Some(n) = self.snapshots {
            sc.snapshot_every = n;
        }
        Ok(sc)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Integrate a scenario and write snapshots, history, checkpoint and manifest.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Stop after this many steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Continue from the checkpoint in the run directory.
        #[arg(long)]
        resume: bool,
    },
    /// Convergence study of the wave-transport residuals.
    Residuals {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Number of refinement levels.
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long)]
        strict: bool,
    },
    /// Strong null condition of the catalogued nonlinearities in random null frames.
    Nullcheck {
        #[arg(long, default_value = "run")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of sampled states.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Null frames per state.
        #[arg(long, default_value_t = 10)]
        frames: usize,
        /// Sample states from this snapshot (requires --config for the equation of state).
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
    },
    /// Geometric diagnostics (mu, blowup signature) of a finished run.
    Eikonal {
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Fit the vanishing time of mu_* and compare with characteristic crossing.
    Shock {
        #[arg(long, default_value = "run")]
        out: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// Exact plane simple wave: shock time and solution slices.
    Riemann {
        #[arg(long)]
        config: PathBuf,
        /// Also write JSON and CSV slices here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bundle the reports of a run directory into report.json with SVG plots.
    Report {
        #[arg(long, default_value = "run")]
        out: PathBuf,
        #[arg(long)]
        strict: bool,
    },
}

fn validate(config: &Path) -> CliResult<()> {
    let sc = run::read_scenario(config)?;
    simulate::check_scenario(&sc)?;
    println!("{}: ok (scenario hash {})", config.display(), run::scenario_hash(&sc));
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Validate { config } => validate(&config),
        Command::Simulate { scenario, steps, resume } => {
            let sc = scenario.load()?;
            simulate::simulate(simulate::SimulateArgs {
                scenario: sc,
                out: &scenario.out,
                max_steps: steps,
                resume,
            })
            .map(|_| ())
        }
        Command::Residuals { scenario, levels, strict } => {
            let sc = scenario.load()?;
            analysis::residuals(&sc, &scenario.out, levels, strict).map(|_| ())
        }
        Command::Nullcheck {
            out,
            seed,
            samples,
            frames,
            snapshot,
            config,
            strict,
        } => {
            let sc = match (&snapshot, &config) {
                (Some(_), Some(c)) => Some(run::read_scenario(c)?),
                (Some(_), None) => Some(run::resolve_scenario(None, &out)?),
                _ => None,
            };
            analysis::nullcheck(analysis::NullcheckArgs {
                out: &out,
                seed,
                states: samples,
                frames_per_state: frames,
                snapshot: snapshot.as_deref().zip(sc.as_ref()),
                strict,
            })
            .map(|_| ())
        }
        Command::Eikonal { out } => analysis::eikonal(&out).map(|_| ()),
        Command::Shock { out, strict } => analysis::shock(&out, strict).map(|_| ()),
        Command::Riemann { config, out } => {
            let sc = run::read_scenario(&config)?;
            analysis::riemann_cmd(&sc, out.as_deref()).map(|_| ())
        }
        Command::Report { out, strict } => report::report(&out, strict).map(|_| ()),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

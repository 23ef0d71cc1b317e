use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use driftlab::reports::TheoremId;
use driftlab::{run, ExperimentConfig, Options, Outcome, RunError, Stage, Target};

#[derive(Parser)]
#[command(name = "driftlab", version, about = "Drift fields in random environments: statics, simulation and checks")]
struct Cli {
    /// Experiment configuration (TOML); built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Switch::On)]
    stage_cache: Switch,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the global constants for every configured epsilon.
    Calibrate,
    /// Check the uniform bounds and structure of the fields.
    Fieldcheck,
    /// Expected local drift, velocity and the static identities.
    Statics,
    /// Brownian baseline, annealed slopes, time averages and step refinement.
    Simulate {
        /// Also write one CSV line per annealed trajectory.
        #[arg(long)]
        trajectories_csv: bool,
    },
    /// Verdict for one statement.
    Theorem {
        #[arg(value_enum)]
        id: TheoremId,
    },
    /// Every stage listed in the configuration.
    Run,
    /// Print the effective configuration.
    Config,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, RunError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn summarize(outcome: &Outcome) {
    for t in &outcome.timings {
        let how = if t.cached { " (cached)" } else { "" };
        eprintln!("{:<12} {:>9.2}s{how}", t.stage, t.seconds);
    }
    if let Some(f) = &outcome.fieldcheck {
        println!(
            "fieldcheck: {} ; largest validated epsilon {:?}",
            if f.report.pass { "all checks pass" } else { "some checks fail" },
            f.largest_validated_epsilon
        );
    }
    for (id, r) in &outcome.theorems {
        println!("theorem {}: {}", id.name(), r.verdict.as_str());
        for c in &r.clauses {
            println!("  {:<34} {:<12} {}", c.name, c.verdict.as_str(), c.detail);
        }
    }
    for p in &outcome.written {
        println!("wrote {}", p.display());
    }
}

fn execute(cli: &Cli) -> Result<(), RunError> {
    let cfg = load(cli)?;
    let mut opts = Options { stage_cache: matches!(cli.stage_cache, Switch::On), ..Options::default() };
    let targets = match &cli.command {
        Command::Calibrate => vec![Target::Stage(Stage::Calibrate)],
        Command::Fieldcheck => vec![Target::Stage(Stage::Fieldcheck)],
        Command::Statics => vec![Target::Stage(Stage::Statics)],
        Command::Simulate { trajectories_csv } => {
            opts.trajectories_csv = *trajectories_csv;
            if *trajectories_csv {
                opts.stage_cache = false;
            }
            vec![Target::Stage(Stage::Simulate)]
        }
        Command::Theorem { id } => vec![Target::Theorem(*id)],
        Command::Run => Target::from_stages(&cfg.stages),
        Command::Config => {
            print!("{}", cfg.to_toml());
            return Ok(());
        }
    };
    let outcome = run(&cfg, &targets, &opts)?;
    summarize(&outcome);
    outcome.check()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abwalk::{
    cmd_compare, cmd_eig, cmd_evolve, cmd_lattice, cmd_simulate, cmd_sweep, run_selftest, Outcome, Result, RunConfig,
    RunError,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "abwalk", version, about = "Annihilating-branching walk simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML configuration, or a run manifest to re-execute.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `dynamics.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `dynamics.max_events`.
    #[arg(long)]
    budget_events: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the lattice and report the reflection-constraint residuals.
    Lattice(Common),
    /// Compute the low Neumann eigenpairs.
    Eig(Common),
    /// Run the particle system and write observables and snapshots.
    Simulate(Common),
    /// Evolve the initial density under the heat flow.
    Evolve(Common),
    /// Compare a finished simulation against the normalized heat flow.
    Compare {
        /// Directory of a finished `simulate` run.
        #[arg(long)]
        run: PathBuf,
        /// Defaults to the configuration recorded in the run's manifest.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to `<run>/compare`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run replicas over the `[sweep]` particle counts and fit the scalings.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Check the exact identities on built-in fixtures.
    Selftest {
        /// Corrupt one boundary site of the first fixture; the run must fail.
        #[arg(long)]
        corrupt_fixture: bool,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.dynamics.seed = seed;
    }
    if let Some(b) = common.budget_events {
        cfg.dynamics.max_events = Some(b);
    }
    Ok(cfg)
}

fn report(outcome: Outcome, out: &Path) {
    for line in outcome.lines {
        println!("{line}");
    }
    println!("manifest {}", out.join(abwalk::manifest::MANIFEST_FILE).display());
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Lattice(c) => report(cmd_lattice(&load(&c)?, &c.out)?, &c.out),
        Command::Eig(c) => report(cmd_eig(&load(&c)?, &c.out)?, &c.out),
        Command::Simulate(c) => report(cmd_simulate(&load(&c)?, &c.out)?, &c.out),
        Command::Evolve(c) => report(cmd_evolve(&load(&c)?, &c.out)?, &c.out),
        Command::Compare { run, config, out } => {
            let cfg = config.as_deref().map(RunConfig::load).transpose()?;
            let out = out.unwrap_or_else(|| run.join("compare"));
            report(cmd_compare(&run, cfg.as_ref(), &out)?, &out)
        }
        Command::Sweep { common, replicas } => {
            report(cmd_sweep(&load(&common)?, replicas, &common.out)?, &common.out)
        }
        Command::Selftest { corrupt_fixture } => {
            let r = run_selftest(corrupt_fixture)?;
            for c in &r.checks {
                println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if !r.passed() {
                return Err(RunError::Threshold("self-test failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

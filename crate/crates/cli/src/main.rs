//! `noc`: run experiments, compare their aggregate files, run the oracle
//! battery, and check environment files.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use natural_option_critic::experiment::{
    self, compare, load_aggregate, CompareOptions, Metric, RunConfig, OUTPUT_DIR_VAR,
};
use natural_option_critic::oracle::{two_state_optimum, BatteryConfig, InstanceSpec};
use natural_option_critic::Error;

#[derive(Parser)]
#[command(name = "noc", version, about = "Natural option-critic experiments and oracle checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train agents over several seeds and write per-run and aggregate CSV files.
    Run {
        /// Config file of key=value lines.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one config key, e.g. --set num_runs=10.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the oracle battery on random instances.
    OracleCheck {
        /// Instance seeds; defaults to 0.
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 3)]
        states: usize,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 2)]
        options: usize,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        /// Replace every tolerance by this value.
        #[arg(long)]
        tolerance: Option<f64>,
        /// Seed of the Monte-Carlo checks.
        #[arg(long, default_value_t = 0)]
        mc_seed: u64,
        /// Also write the report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compare two aggregate files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// return_undisc, return_disc or steps.
        #[arg(long, default_value = "return_undisc")]
        metric: String,
        #[arg(long, default_value_t = 100)]
        window: usize,
        #[arg(long, default_value_t = 50)]
        moving_average: usize,
        #[arg(long)]
        threshold: Option<f64>,
        /// Best achievable metric value, or `two-state` for the oracle
        /// optimum of the two-state chain.
        #[arg(long)]
        optimum: Option<String>,
    },
    /// Build an environment and check its invariants.
    ValidateEnv {
        /// two-state, four-rooms, an .mdp file, or a grid layout file.
        env: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

/// Error kinds that count as validation failures rather than runtime errors.
fn is_validation(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        matches!(
            e.downcast_ref::<Error>(),
            Some(
                Error::Validation(_)
                    | Error::Config(_)
                    | Error::Parse { .. }
                    | Error::Mismatch { .. }
                    | Error::InstanceTooLarge { .. }
            )
        )
    })
}

enum Outcome {
    Ok,
    Failed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_validation(&e) { 1 } else { 2 })
        }
    }
}

fn execute(command: Command) -> anyhow::Result<Outcome> {
    match command {
        Command::Run { config, overrides } => run(config.as_deref(), &overrides),
        Command::OracleCheck { seeds, states, actions, options, gamma, tolerance, mc_seed, report } => {
            let spec = InstanceSpec { num_states: states, num_actions: actions, num_options: options, gamma, ..InstanceSpec::default() };
            let cfg = BatteryConfig { seed: mc_seed, tolerance_override: tolerance, ..BatteryConfig::default() };
            let seeds = if seeds.is_empty() { vec![0] } else { seeds };
            let result = experiment::oracle_check(&spec, &seeds, &cfg)?;
            let text = result.to_text();
            print!("{text}");
            if let Some(path) = report {
                std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(if result.passed() { Outcome::Ok } else { Outcome::Failed })
        }
        Command::Compare { a, b, metric, window, moving_average, threshold, optimum } => {
            let optimum = match optimum.as_deref() {
                None => None,
                Some("two-state") => {
                    let setup = RunConfig::two_state().build()?;
                    let horizon = setup.mdp.max_episode_steps.unwrap_or(30);
                    Some(two_state_optimum(&setup.mdp, &setup.params, &setup.fmap, horizon))
                }
                Some(v) => Some(v.parse::<f64>().map_err(|_| Error::Config(format!("bad optimum {v:?}")))?),
            };
            let options =
                CompareOptions { metric: Metric::parse(&metric)?, window, moving_average, threshold, optimum };
            let cmp = compare(&load_aggregate(&a)?, &load_aggregate(&b)?, &options)?;
            print!("{}", cmp.to_text(&a.display().to_string(), &b.display().to_string()));
            Ok(Outcome::Ok)
        }
        Command::ValidateEnv { env, overrides } => {
            let mut all = vec![format!("env={env}")];
            all.extend(overrides);
            let cfg = RunConfig::from_text("", "validate-env", &all)?;
            let setup = cfg.build()?;
            let m = &setup.mdp;
            println!(
                "{}: {} states, {} actions, {} terminal, gamma {}, step cap {}",
                cfg.env.name(),
                m.num_states,
                m.num_actions,
                m.terminal.iter().filter(|t| **t).count(),
                m.gamma,
                m.max_episode_steps.map_or("none".to_string(), |c| c.to_string())
            );
            Ok(Outcome::Ok)
        }
    }
}

fn run(config: Option<&Path>, overrides: &[String]) -> anyhow::Result<Outcome> {
    let mut cfg = match config {
        Some(path) => RunConfig::load(path, overrides)?,
        None => RunConfig::from_text("", "command line", overrides)?,
    };
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_VAR) {
        cfg.output = PathBuf::from(dir);
    }
    let out = experiment::run(&cfg, &cfg.output)?;
    let last = out.aggregate.last();
    println!(
        "{} on {}: {} runs x {} episodes -> {}",
        cfg.mode.name(),
        cfg.env.name(),
        cfg.num_runs,
        cfg.num_episodes,
        cfg.output.display()
    );
    if let Some(row) = last {
        println!(
            "final episode: mean return {} (undiscounted {}), mean steps {}",
            row.mean_return_disc, row.mean_return_undisc, row.mean_steps
        );
    }
    Ok(Outcome::Ok)
}

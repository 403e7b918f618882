// SPDX-License-Identifier: Apache-2.0

//! `mfvr`: run mean-field sweeps, spectra, classical ensembles and exact
//! small-N oracles from TOML configuration files.
//!
//! Every subcommand writes its CSV outputs and a `manifest.json` into the
//! output directory. The exit status is 0 only when every run succeeded.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use log::error;
use mfvr_core::config::{
    parse_config, to_toml, ClassicalRunConfig, InitialState, ModelConfig, OracleRunConfig,
    RunConfig, SpectrumRunConfig, SweepConfig,
};
use mfvr_core::export::RunManifest;
use mfvr_core::sweep;

#[derive(Parser)]
#[command(name = "mfvr", version, about = "Mean-field relaxation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coupling sweep of the w-model or rotor: trajectories, heatmap,
    /// amplitude and regime tables.
    Sweep(Common),
    /// Rotor coupling sweep with the persistent-oscillation check.
    Rotor(Common),
    /// Bound-state counts and critical depths of the w-model.
    Spectrum(Common),
    /// Classical particle ensemble and pendulum frequency band.
    Classical(Common),
    /// Exact small-N evolution against the mean-field prediction.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; omitted keys take the defaults listed in --help.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core (overrides `workers`).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Random seed (overrides `seed`).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

trait Overridable: RunConfig + Default {
    fn apply(&mut self, out: Option<PathBuf>, workers: Option<usize>, seed: Option<u64>);
}

macro_rules! overridable {
    ($($t:ty),*) => {$(
        impl Overridable for $t {
            fn apply(&mut self, out: Option<PathBuf>, workers: Option<usize>, seed: Option<u64>) {
                if let Some(o) = out {
                    self.output_dir = o;
                }
                if let Some(w) = workers {
                    self.workers = w;
                }
                if let Some(s) = seed {
                    self.seed = s;
                }
            }
        }
    )*};
}

overridable!(
    SweepConfig,
    SpectrumRunConfig,
    ClassicalRunConfig,
    OracleRunConfig
);

fn load<C: Overridable>(args: Common, fallback: C) -> Result<C> {
    let mut cfg: C = match &args.config {
        Some(path) => parse_config(path)?,
        None => fallback,
    };
    cfg.apply(args.out, args.workers, args.seed);
    cfg.check().context("invalid command-line override")?;
    Ok(cfg)
}

fn defaults_help<C: Overridable>() -> String {
    let body = to_toml(&C::default()).unwrap_or_else(|e| e.to_string());
    format!("Defaults:\n\n{body}")
}

/// Rotor model with its standard initial state; used by `rotor` when no
/// config file is given.
fn rotor_defaults() -> SweepConfig {
    SweepConfig {
        model: ModelConfig::Rotor {
            l_max: 16,
            l_max_cap: 256,
        },
        initial_state: InitialState::RotorStandard,
        ..Default::default()
    }
}

fn run(command: Command) -> Result<RunManifest> {
    let manifest = match command {
        Command::Sweep(a) => sweep::run_sweep(&load(a, Default::default())?)?,
        Command::Rotor(a) => sweep::run_rotor_figure(&load(a, rotor_defaults())?)?,
        Command::Spectrum(a) => sweep::run_spectrum(&load(a, Default::default())?)?,
        Command::Classical(a) => sweep::run_classical(&load(a, Default::default())?)?,
        Command::Oracle(a) => sweep::run_oracle(&load(a, Default::default())?)?,
    };
    Ok(manifest)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cmd = Cli::command()
        .mut_subcommand("sweep", |c| c.after_long_help(defaults_help::<SweepConfig>()))
        .mut_subcommand("rotor", |c| {
            c.after_long_help(format!(
                "Without --config the run uses:\n\n{}\nA config file starts from the `sweep` defaults.",
                to_toml(&rotor_defaults()).unwrap_or_else(|e| e.to_string())
            ))
        })
        .mut_subcommand("spectrum", |c| c.after_long_help(defaults_help::<SpectrumRunConfig>()))
        .mut_subcommand("classical", |c| c.after_long_help(defaults_help::<ClassicalRunConfig>()))
        .mut_subcommand("oracle", |c| c.after_long_help(defaults_help::<OracleRunConfig>()));
    let cli = match Cli::from_arg_matches(&cmd.get_matches()) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(m) if m.all_succeeded() => ExitCode::SUCCESS,
        Ok(m) => {
            error!(
                "{} of {} runs failed; see manifest.json",
                m.n_failed(),
                m.runs.len()
            );
            ExitCode::FAILURE
        }
        Err(e) => {
            error!("{e:#}");
            ExitCode::from(2)
        }
    }
}

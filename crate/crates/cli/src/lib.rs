//! Command-line front end: scenario files, stage commands and manifests.

pub mod commands;
pub mod manifest;
pub mod scenario;

use std::path::PathBuf;

use clap::Parser;
use pdrlab::{Error, ErrorClass, Result};

use commands::{run_stage, verify_dir, Command, Context};
use scenario::ScenarioConfig;

#[derive(Debug, Parser)]
#[command(name = "pdrlab", version, about = "Radio/inertial pedestrian dead-reckoning laboratory")]
pub struct Cli {
    /// Scenario file (JSON or TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for experiment cells.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Replay every manifest in the output directory and compare outputs byte for byte.
    #[arg(long)]
    pub verify: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

/// Exit code of an error class: 1 config, 2 IO/artifacts, 3 numeric.
pub fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 1,
        ErrorClass::Io => 2,
        ErrorClass::Numeric => 3,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.workers == Some(0) {
        return Err(Error::config("workers", "must be >= 1"));
    }
    if cli.verify {
        if cli.command.is_some() {
            return Err(Error::config("verify", "takes no subcommand; it replays the manifests in --out"));
        }
        let reports = verify_dir(&cli.out, cli.workers)?;
        let mut failed = 0;
        for r in &reports {
            if r.mismatches.is_empty() {
                println!("OK       {} ({} outputs identical)", r.manifest.display(), r.checked);
            } else {
                failed += 1;
                for m in &r.mismatches {
                    println!("MISMATCH {}: {m}", r.manifest.display());
                }
            }
        }
        if failed > 0 {
            return Err(Error::Numeric(format!("{failed} of {} manifests did not reproduce", reports.len())));
        }
        return Ok(());
    }
    let Some(cmd) = cli.command else {
        return Err(Error::config("command", "no subcommand given (see --help)"));
    };
    let mut config = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Command::Predict { model: None, segment } = &cmd {
        if let Some(m) = config.model.clone() {
            let ctx = Context { config, out: cli.out, workers: cli.workers.unwrap_or(1) };
            run_stage(&ctx, &Command::Predict { model: Some(m), segment: segment.clone() })?;
            return Ok(());
        }
    }
    let ctx = Context { config, out: cli.out, workers: cli.workers.unwrap_or(1) };
    let m = run_stage(&ctx, &cmd)?;
    log::info!("wrote {} ({} outputs, config {})", m.file_name(), m.outputs.len(), &m.config_hash[..12]);
    Ok(())
}

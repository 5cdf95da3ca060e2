//! Experiment runner: reads a JSON configuration, runs one command of the laboratory and writes
//! a CSV or JSON result file with a provenance header.

pub mod config;
pub mod error;
pub mod output;
pub mod run;
pub mod selfcheck;

use std::path::PathBuf;

use clap::Parser;

pub use config::{parse_config, ExperimentConfig, Format};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "iltlab", version, about = "Numerical experiments on intersection local times of Brownian motion")]
pub struct Cli {
    /// One of: mass, ldp-slope, pairing, eta, chaos-norm, rate-min, asymptotic-scan, schilder, selfcheck.
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(config::COMMANDS))]
    pub command: String,
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Turn budget and convergence warnings into exit code 3.
    #[arg(long)]
    pub strict: bool,
}

/// Thread count for the parallel core, from `ILTLAB_THREADS`.
pub fn configure_threads_from_env() -> Result<(), CliError> {
    match std::env::var("ILTLAB_THREADS") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| CliError::Config(format!("ILTLAB_THREADS must be a positive integer, got `{v}`")))?;
            iltlab_core::par::configure_threads(n);
            Ok(())
        }
        Err(_) => Ok(()),
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    configure_threads_from_env()?;
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", cli.config.display())))?;
    let mut cfg = parse_config_with_seed(&text, cli.seed)?;
    if cfg.command.name() != cli.command {
        return Err(CliError::Config(format!(
            "command: the configuration is for `{}` but `{}` was requested",
            cfg.command.name(),
            cli.command
        )));
    }
    let out_cfg = cfg.output.take();
    let format = cli
        .format
        .or(out_cfg.as_ref().and_then(|o| o.format))
        .unwrap_or(Format::Csv);
    let path = cli.out.clone().or(out_cfg.as_ref().and_then(|o| o.path.clone()));
    cfg.output = out_cfg;
    let report = run::execute(&cfg)?;
    let text = output::render(&cfg, &report, format);
    match path {
        Some(p) => std::fs::write(&p, text)?,
        None => print!("{text}"),
    }
    if let Some(name) = report.failed_check {
        return Err(CliError::Selfcheck(format!("selfcheck failed; first violated invariant: {name}")));
    }
    if cli.strict && !report.warnings.is_empty() {
        return Err(CliError::Strict(format!("warnings escalated by --strict: {}", report.warnings.join("; "))));
    }
    Ok(())
}

/// Parse with an optional command-line seed taking precedence over the configured one.
pub fn parse_config_with_seed(text: &str, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    match seed {
        None => parse_config(text),
        Some(s) => {
            let mut v: serde_json::Value =
                serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
            if let serde_json::Value::Object(m) = &mut v {
                m.insert("seed".into(), s.into());
            }
            parse_config(&v.to_string())
        }
    }
}

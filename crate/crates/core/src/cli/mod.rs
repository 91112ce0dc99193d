//! Command-line front end.
//!
//! `run <config>` executes one scenario, `reproduce` runs the quick
//! reproduction suite on the default parameters, `validate <config>` only
//! checks a config. Exit codes: 0 all checks pass, 1 a check failed, 2 a
//! config or IO error.

pub mod config;
pub mod manifest;
pub mod scenario;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::{load_config, parse_config, ConfigError, Scenario, ScenarioConfig};
pub use manifest::{CheckResult, RunManifest};
pub use scenario::{execute, preflight, run_scenario, ScenarioOutput};

/// Environment variable overriding the config's output directory.
pub const OUT_DIR_ENV: &str = "BERRYFORCE_OUT";
pub const DEFAULT_OUT_DIR: &str = "out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "berryforce", version, about = "Hybrid quantum-classical dynamics with Berry curvature forces")]
pub struct Cli {
    /// Output directory; overrides the environment and the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the scenario described by a TOML config.
    Run { config: PathBuf },
    /// Run the reproduction suite with the default parameters.
    Reproduce,
    /// Check a config without running it.
    Validate { config: PathBuf },
}

/// `--out`, then `$BERRYFORCE_OUT`, then the config, then `./out`.
pub fn resolve_out_dir(flag: Option<&Path>, env: Option<&str>, cfg: &ScenarioConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn load_checked(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let cfg = load_config(path)?;
    let errs = preflight(&cfg);
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Validation(errs))
    }
}

fn execute_and_report(cfg: &ScenarioConfig, cli_out: Option<&Path>) -> i32 {
    let env = std::env::var(OUT_DIR_ENV).ok();
    let dir = resolve_out_dir(cli_out, env.as_deref(), cfg);
    match run_scenario(cfg, &dir) {
        Ok(manifest) => {
            for c in &manifest.checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                match c.measured {
                    Some(m) => println!("{status} {} measured={m:e} {}", c.name, c.detail),
                    None => println!("{status} {} {}", c.name, c.detail),
                }
            }
            println!("wrote {} file(s) and {} to {}", manifest.outputs.len(), manifest::MANIFEST_FILE, dir.display());
            if manifest.all_passed {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: cannot write to {}: {e}", dir.display());
            EXIT_CONFIG_ERROR
        }
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG_ERROR } else { EXIT_OK };
        }
    };
    match &cli.command {
        Command::Run { config } => match load_checked(config) {
            Ok(cfg) => execute_and_report(&cfg, cli.out.as_deref()),
            Err(e) => {
                eprintln!("{e}");
                EXIT_CONFIG_ERROR
            }
        },
        Command::Reproduce => execute_and_report(&ScenarioConfig::defaults(Scenario::ReproducePaper), cli.out.as_deref()),
        Command::Validate { config } => match load_checked(config) {
            Ok(cfg) => {
                println!("{}: valid {} config", config.display(), cfg.scenario);
                EXIT_OK
            }
            Err(e) => {
                eprintln!("{e}");
                EXIT_CONFIG_ERROR
            }
        },
    }
}

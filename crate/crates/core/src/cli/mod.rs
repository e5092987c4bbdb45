//! Command-line driver: subcommands over a TOML run configuration, JSON-line
//! logs on stderr and a checksum manifest per command.

pub mod commands;
pub mod config;
pub mod manifest;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use manifest::{sha256_hex, Manifest, ManifestEntry, Outputs};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "epwa",
    version,
    about = "Agricultural workforce share: fit, validate and downscale"
)]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the unit feature table from rasters and zones.
    Features,
    /// Fit the compared model structures and save the selected one.
    Fit,
    /// Run the configured validation strategies.
    Validate,
    /// Predict on the deployment grid, with optional correction.
    Deploy,
    /// Show configuration.
    Config {
        /// Print the built-in defaults.
        #[arg(long)]
        print_defaults: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Features => "features",
            Command::Fit => "fit",
            Command::Validate => "validate",
            Command::Deploy => "deploy",
            Command::Config { .. } => "config",
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_io() {
        EXIT_IO
    } else {
        EXIT_INVALID
    }
}

fn init_logging() {
    let env = env_logger::Env::default().default_filter_or("info");
    let _ = env_logger::Builder::from_env(env)
        .format(|buf, record| {
            let line = serde_json::json!({
                "level": record.level().as_str(),
                "target": record.target(),
                "msg": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        })
        .try_init();
}

/// Loads the config named on the command line, applying overrides. Returns
/// the config and the SHA-256 of its source text.
fn load_config(cli: &Cli) -> Result<(RunConfig, String)> {
    let (mut cfg, digest) = match &cli.config {
        Some(path) => {
            let (cfg, bytes) = RunConfig::load(path)?;
            (cfg, sha256_hex(&bytes))
        }
        None => {
            let cfg = RunConfig::default();
            let digest = sha256_hex(cfg.to_toml().as_bytes());
            (cfg, digest)
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok((cfg, digest))
}

fn execute(cli: &Cli) -> Result<()> {
    if let Command::Config { print_defaults } = &cli.command {
        let text = if *print_defaults || cli.config.is_none() {
            RunConfig::default().to_toml()
        } else {
            load_config(cli)?.0.to_toml()
        };
        print!("{text}");
        return Ok(());
    }
    let (cfg, digest) = load_config(cli)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let mut out = Outputs::new(&cfg.out);
    match cli.command {
        Command::Features => commands::cmd_features(&cfg, &mut out)?,
        Command::Fit => commands::cmd_fit(&cfg, &mut out)?,
        Command::Validate => commands::cmd_validate(&cfg, &mut out)?,
        Command::Deploy => commands::cmd_deploy(&cfg, &mut out)?,
        Command::Config { .. } => unreachable!("handled above"),
    }
    let manifest = out.write_manifest(cli.command.name(), &digest, cfg.seed)?;
    log::info!("wrote {}", manifest.display());
    Ok(())
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    init_logging();
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
        {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(Error::Config(format!("thread pool: {e}"))),
        },
        None => execute(&cli),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            log::error!("{}: {e}", cli.command.name());
            exit_code(&e)
        }
    }
}

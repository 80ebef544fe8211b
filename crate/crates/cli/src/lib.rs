//! Command-line pipeline for gridded earthquake forecasting.
//!
//! `synth` → `ingest` → `features` → `train` → `evaluate`, each a separate
//! process that hands files over through the run's work directory.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod provenance;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "quake", version, about = "Gridded mid-term earthquake forecasting pipeline")]
pub struct Cli {
    /// Worker threads (default: all cores); never changes numerical outputs
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run config file (key = value lines)
    #[arg(short, long)]
    pub config: Option<PathBuf>,

    /// Override one config key, e.g. --set epochs=5
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Work directory for inputs and outputs
    #[arg(long)]
    pub work_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic catalog with planted precursor pairs
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Parse a catalog and rasterize daily heat maps
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Catalog CSV (time,lat,lon,mag)
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Export RTL features and the historical prior
    Features {
        #[command(flatten)]
        common: Common,
    },
    /// Train the forecasting model
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Score the model and the prior baseline on one split
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// train, val or test
        #[arg(long)]
        split: Option<String>,
        /// Comma-separated probability thresholds
        #[arg(long)]
        thresholds: Option<String>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth { common }
            | Command::Ingest { common, .. }
            | Command::Features { common }
            | Command::Train { common }
            | Command::Evaluate { common, .. } => common,
        }
    }
}

/// Builds the effective config: defaults, then the file, then flags.
pub fn resolve_config(command: &Command) -> CliResult<RunConfig> {
    let common = command.common();
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        cfg.apply_text(&text)?;
    }
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(dir) = &common.work_dir {
        cfg.work_dir = dir.clone();
    }
    match command {
        Command::Ingest { catalog: Some(path), .. } => cfg.catalog = path.clone(),
        Command::Evaluate { split, thresholds, .. } => {
            if let Some(s) = split {
                cfg.set("eval_split", s)?;
            }
            if let Some(t) = thresholds {
                cfg.set("thresholds", t)?;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(command: &Command) -> CliResult<()> {
    let cfg = resolve_config(command)?;
    match command {
        Command::Synth { .. } => {
            let path = pipeline::cmd_synth(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Ingest { .. } => {
            let summary = pipeline::cmd_ingest(&cfg)?;
            print!("{}", summary.render());
        }
        Command::Features { .. } => {
            let rows = pipeline::cmd_features(&cfg)?;
            println!("feature rows = {rows}");
        }
        Command::Train { .. } => {
            let log = pipeline::cmd_train(&cfg)?;
            println!("epochs = {}", log.epochs.len());
        }
        Command::Evaluate { .. } => {
            let e = pipeline::cmd_evaluate(&cfg)?;
            println!("days = {}", e.days);
            println!("model roc_auc = {} pr_auc = {}", e.model.roc_auc, e.model.pr_auc);
            println!("prior roc_auc = {} pr_auc = {}", e.prior.roc_auc, e.prior.pr_auc);
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 1;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 2;
        }
    };
    match pool.install(|| execute(&cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

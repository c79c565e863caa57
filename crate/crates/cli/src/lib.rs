//! Command-line front end for the spectral closure laboratory.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;

use config::{CollapseKind, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "edqnm-lab", version, about = "Spectral closure laboratory for isotropic turbulence")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Configuration file (TOML, or a manifest JSON to rerun).
    #[arg(long, global = true, env = "EDQNM_LAB_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "EDQNM_LAB_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, env = "EDQNM_LAB_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "EDQNM_LAB_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long, global = true, env = "EDQNM_LAB_QUIET")]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Free decay from the configured initial spectrum.
    Decay,
    /// Forced run to stationarity.
    Forced {
        /// Also write flux, structure-function and KHE reports.
        #[arg(long)]
        analysis: bool,
    },
    /// Forced runs over a viscosity list.
    Sweep,
    /// Fit the dissipation law to a sweep table.
    Fit {
        /// Sweep CSV; defaults to `sweep.csv` in the output directory.
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[arg(long)]
        quadratic: bool,
    },
    /// Spectral collapse of sweep members.
    Collapse {
        /// Sweep output directory; defaults to the output directory.
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<CollapseKind>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        members: Option<usize>,
        #[arg(long)]
        l_ratio: Option<f64>,
    },
    /// Frequency spectra of the kinematic ensembles.
    Temporal {
        /// Use the built-in ensemble for this decorrelation model.
        #[arg(long, value_enum)]
        mode: Option<TemporalKind>,
        #[arg(long)]
        realizations: Option<usize>,
    },
    /// Band-elimination recursion to the viscosity fixed point.
    Rg,
    /// Closed-form identities.
    Oracle {
        #[command(subcommand)]
        which: Oracle,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TemporalKind {
    Kolmogorov,
    Sweeping,
}

#[derive(Debug, Subcommand)]
pub enum Oracle {
    /// Laminar channel: profile, dissipation and pressure work.
    Poiseuille {
        /// Dynamic viscosity.
        #[arg(long)]
        mu: f64,
        /// Bulk velocity.
        #[arg(long = "U")]
        u: f64,
        /// Half height.
        #[arg(long)]
        h: f64,
    },
    /// Kolmogorov wavenumber along a viscosity list.
    Batchelor {
        #[arg(long)]
        eps: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        nu: Vec<f64>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "io failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<edqnm_lab::Error> for CliError {
    fn from(e: edqnm_lab::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}

/// Resolved settings shared by all subcommands.
pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Context {
    pub fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Oracle { which } = &cli.command {
        return commands::oracle(which, cli.global.quiet);
    }
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    let out = cli
        .global
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    cfg.out = Some(out.clone());
    let ctx = Context {
        cfg,
        out,
        quiet: cli.global.quiet,
    };
    let work = || match &cli.command {
        Command::Decay => commands::decay(&ctx),
        Command::Forced { analysis } => commands::forced(&ctx, *analysis),
        Command::Sweep => commands::sweep(&ctx),
        Command::Fit { sweep, quadratic } => commands::fit(&ctx, sweep.as_deref(), *quadratic),
        Command::Collapse {
            from,
            mode,
            mu,
            members,
            l_ratio,
        } => commands::collapse(&ctx, from.as_deref(), *mode, *mu, *members, *l_ratio),
        Command::Temporal { mode, realizations } => commands::temporal(&ctx, *mode, *realizations),
        Command::Rg => commands::rg(&ctx),
        Command::Oracle { .. } => unreachable!(),
    };
    match cli.global.workers {
        Some(0) => Err(CliError::Config("--workers must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?
            .install(work),
        None => work(),
    }
}

//! Command-line front end: argument parsing, config layering, input
//! loading and the five subcommands.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod load;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "polarwarp", version, about = "Polar-sine distortion augmentation for CT slices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write distorted copies of each input slice.
    Augment(Common),
    /// Write the table-free valid region for each input slice.
    TableMask(Common),
    /// Score every (A, ω) grid cell against the undistorted inputs.
    SimilarityGrid(Common),
    /// Select the top-decile cells and pick the lowest evaluator loss.
    Search(SearchArgs),
    /// Time map generation, resampling and the prefetching pipeline.
    Bench(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Input files or directories (.dcm, .png, .pgm, .raw).
    pub inputs: Vec<PathBuf>,
    /// JSON pipeline config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write float32 rasters.
    #[arg(long)]
    pub lossless: bool,
    /// Label masks matching the inputs.
    #[arg(long = "mask")]
    pub masks: Vec<PathBuf>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub frequency: Option<f64>,
    #[arg(long)]
    pub delta: Option<usize>,
    /// Fixed Ψ instead of random draws.
    #[arg(long)]
    pub psi: Option<f64>,
    /// Outputs per input slice.
    #[arg(long)]
    pub count: Option<usize>,
    /// Remove the scan table before distorting.
    #[arg(long)]
    pub table_removal: bool,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub common: Common,
    /// CSV with columns amplitude,frequency,loss.
    #[arg(long)]
    pub lookup: Option<PathBuf>,
    #[arg(long)]
    pub percentile: Option<f64>,
}

impl Common {
    /// Config file (or defaults) with flags layered on top.
    pub fn resolve(&self) -> CliResult<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::from_file(p)?,
            None => PipelineConfig::default(),
        };
        if !self.inputs.is_empty() {
            cfg.input.paths = self.inputs.clone();
        }
        if !self.masks.is_empty() {
            cfg.input.masks = self.masks.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        cfg.lossless |= self.lossless;
        cfg.table_removal.enabled |= self.table_removal;
        if let Some(v) = self.amplitude {
            cfg.distortion.amplitude = v;
        }
        if let Some(v) = self.frequency {
            cfg.distortion.frequency = v;
        }
        if let Some(v) = self.delta {
            cfg.distortion.delta = v;
        }
        if let Some(v) = self.psi {
            cfg.distortion.psi = Some(v);
        }
        if let Some(v) = self.count {
            cfg.distortion.count_per_slice = v;
        }
        Ok(cfg)
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("POLARWARP_LOG", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn execute(cli: Cli) -> CliResult<()> {
    let (cfg, run): (PipelineConfig, fn(&PipelineConfig) -> CliResult<()>) = match &cli.command {
        Command::Augment(c) => (c.resolve()?, commands::augment),
        Command::TableMask(c) => (c.resolve()?, commands::table_mask),
        Command::SimilarityGrid(c) => (c.resolve()?, commands::similarity_grid),
        Command::Search(s) => {
            let mut cfg = s.common.resolve()?;
            if let Some(p) = &s.lookup {
                cfg.lookup = Some(p.clone());
            }
            if let Some(p) = s.percentile {
                cfg.percentile = p;
            }
            (cfg, commands::search)
        }
        Command::Bench(c) => (c.resolve()?, commands::bench),
    };
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| run(&cfg))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}

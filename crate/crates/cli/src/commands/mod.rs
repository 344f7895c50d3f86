//! Subcommand dispatch and the shared run context.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};
use hamrom::ExecMode;

use crate::config::{Config, ParamSet};
use crate::manifest::RunManifest;

mod analysis;
mod bench;
mod offline;
mod online;

pub use bench::{bench_table, BenchRow, BenchTable};

/// Required input file absent; names the phase that produces it.
#[derive(Debug, thiserror::Error)]
#[error("missing input {path}; run `{producer}` first")]
pub struct MissingInput {
    pub path: PathBuf,
    pub producer: &'static str,
}

#[derive(Debug, Parser)]
#[command(name = "hamrom", version, about = "Hamiltonian reduced-order modeling of 1D-1V particle-in-cell plasma simulations")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "hamrom.toml")]
    pub config: PathBuf,
    /// Directory holding every artifact of the run.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Overrides the training and network initialization seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for data-parallel kernels.
    #[arg(long, global = true, env = "HAMROM_THREADS")]
    pub threads: Option<usize>,
    /// Single-threaded kernels with natural-order accumulation.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Overrides the snapshot stride of stored trajectories.
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full-order runs; stores snapshots and field-energy series.
    Simulate {
        #[arg(long, value_enum, default_value = "train")]
        set: ParamSet,
    },
    /// Builds the symplectic basis from the training snapshots.
    BuildPsd,
    /// Projects every training trajectory onto the basis at every time step.
    Project,
    /// Two-stage training of the autoencoder and the Hamiltonian network.
    Train,
    /// Reduced-model predictions reconstructed in full space.
    Predict {
        #[arg(long, value_enum, default_value = "test")]
        set: ParamSet,
    },
    /// Relative errors of predicted against full-order trajectories.
    Evaluate {
        #[arg(long, value_enum, default_value = "test")]
        set: ParamSet,
    },
    /// Exponential rates of the field-energy series.
    Rates {
        #[arg(long, value_enum, default_value = "test")]
        set: ParamSet,
        /// Series to fit.
        #[arg(long, value_enum, default_value = "fom")]
        source: Source,
    },
    /// Phase-space density of one stored snapshot.
    Hist {
        /// Snapshot file.
        #[arg(long)]
        input: PathBuf,
        /// Snapshot index inside the file; defaults to the last one.
        #[arg(long)]
        column: Option<usize>,
    },
    /// Wall-time table of full-order steps at several N against reduced steps.
    Bench,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Source {
    Fom,
    Rom,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::BuildPsd => "build-psd",
            Command::Project => "project",
            Command::Train => "train",
            Command::Predict { .. } => "predict",
            Command::Evaluate { .. } => "evaluate",
            Command::Rates { .. } => "rates",
            Command::Hist { .. } => "hist",
            Command::Bench => "bench",
        }
    }
}

/// Everything a subcommand needs besides its own arguments.
pub struct RunContext {
    pub cfg: Config,
    pub out_dir: PathBuf,
    pub mode: ExecMode,
    pub manifest: RunManifest,
}

impl RunContext {
    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.out_dir.join(rel)
    }

    /// Existing input file, recorded in the manifest.
    pub fn input(&mut self, rel: impl AsRef<Path>, producer: &'static str) -> anyhow::Result<PathBuf> {
        let path = self.path(rel);
        if !path.is_file() {
            return Err(MissingInput { path, producer }.into());
        }
        self.manifest.input(&self.out_dir, &path)?;
        Ok(path)
    }

    pub fn output(&mut self, path: &Path) -> anyhow::Result<()> {
        self.manifest.output(&self.out_dir, path)
    }

    pub fn ensure_dir(&self, rel: &str) -> anyhow::Result<PathBuf> {
        let dir = self.path(rel);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }
}

/// Name of the file of parameter `i` in `set`, e.g. `fom/test_003.vpsn`.
pub fn trajectory_file(dir: &str, set: ParamSet, i: usize, suffix: &str) -> PathBuf {
    PathBuf::from(dir).join(format!("{}_{i:03}{suffix}", set.name()))
}

pub fn resolve_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut cfg = Config::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.training.seed = seed;
        cfg.network.init_seed = seed;
    }
    if let Some(stride) = cli.stride {
        cfg.output.snapshot_stride = stride;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads(cli: &Cli) -> usize {
    let requested = if cli.deterministic { Some(1) } else { cli.threads };
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = requested {
            // A second initialization in one process keeps the first pool.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = requested;
        1
    }
}

/// Executes one subcommand and writes its manifest; returns the manifest path.
pub fn run(cli: &Cli) -> anyhow::Result<PathBuf> {
    let cfg = resolve_config(cli)?;
    let threads = configure_threads(cli);
    let mode = if cli.deterministic { ExecMode::Sequential } else { ExecMode::Parallel };
    std::fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let manifest = RunManifest::new(cli.command.name(), &cfg, cli.deterministic, threads)?;
    let mut ctx = RunContext { cfg, out_dir: cli.out_dir.clone(), mode, manifest };
    match &cli.command {
        Command::Simulate { set } => offline::simulate(&mut ctx, *set)?,
        Command::BuildPsd => offline::build_psd(&mut ctx)?,
        Command::Project => offline::project(&mut ctx)?,
        Command::Train => online::train(&mut ctx)?,
        Command::Predict { set } => online::predict(&mut ctx, *set)?,
        Command::Evaluate { set } => analysis::evaluate(&mut ctx, *set)?,
        Command::Rates { set, source } => analysis::rates(&mut ctx, *set, *source)?,
        Command::Hist { input, column } => analysis::hist(&mut ctx, input, *column)?,
        Command::Bench => bench::bench(&mut ctx)?,
    }
    ctx.manifest.write(&ctx.out_dir)
}

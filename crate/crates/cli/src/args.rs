//! Command-line flags and their overlay onto file-supplied configs.
//!
//! Precedence is flag > config file > built-in default. Every flag that can
//! also come from a config file is an `Option`, so absence means "keep".

use clap::{Args, Parser, Subcommand, ValueEnum};
use dmdgen::datagen::GridSpec;
use dmdgen::dmd::ModesK;
use dmdgen::grassmann::{DistanceKind, SubspaceField};
use dmdgen::ingest::NormalizationScheme;
use dmdgen::metric::{MetricConfig, SolverChoice, StudySpec};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "dmdgen",
    version,
    about = "Mode-collapse measurement for time-series generators"
)]
pub struct Cli {
    /// Master seed; every random draw is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (outputs do not depend on this).
    #[arg(long, global = true, env = "DMDGEN_THREADS")]
    pub threads: Option<usize>,

    /// JSON config, or a run manifest / report from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset file.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
    /// DMD-GEN between a real and a generated dataset.
    Metric(MetricArgs),
    /// Relative inflation over a sweep of collapse severities.
    Study(StudyArgs),
    /// Pooled DMD eigenvalues of a dataset.
    Eig(EigArgs),
}

#[derive(Debug, Subcommand)]
pub enum SynthKind {
    /// Two-mode sine waves.
    Sines {
        #[arg(long)]
        per_mode: Option<usize>,
        /// Independent-phase copies stacked as features.
        #[arg(long)]
        channels: Option<usize>,
    },
    /// Mixture of a localized and a separable travelling pattern.
    Collapse {
        #[arg(long)]
        n: Option<usize>,
        /// Fraction drawn from the first family.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        lambda_ref: Option<f64>,
        #[command(flatten)]
        grid: GridFlags,
    },
}

#[derive(Debug, Args, Default)]
pub struct GridFlags {
    #[arg(long)]
    pub t_points: Option<usize>,
    #[arg(long)]
    pub x_points: Option<usize>,
}

impl GridFlags {
    pub fn overlay(&self, g: &mut GridSpec) {
        set(&mut g.t_points, self.t_points);
        set(&mut g.x_points, self.x_points);
    }
}

#[derive(Debug, Args, Default)]
pub struct MetricFlags {
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// `auto` or a positive mode count.
    #[arg(long)]
    pub modes_k: Option<ModesK>,
    /// `projection` or `arc-length`.
    #[arg(long)]
    pub distance: Option<DistanceKind>,
    #[arg(long)]
    pub p: Option<f64>,
    /// `auto`, `sinkhorn` or `exact`.
    #[arg(long)]
    pub solver: Option<SolverChoice>,
    #[arg(long)]
    pub epsilon_rel: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub without_replacement: bool,
    /// Use the same indices on both sides of every batch.
    #[arg(long)]
    pub couple_batches: bool,
    /// `complex` or `realified`.
    #[arg(long)]
    pub subspace_field: Option<SubspaceField>,
    #[arg(long)]
    pub max_rank: Option<usize>,
    #[arg(long)]
    pub rank_tol: Option<f64>,
}

impl MetricFlags {
    pub fn overlay(&self, c: &mut MetricConfig) {
        set(&mut c.num_batches, self.batches);
        set(&mut c.batch_size, self.batch_size);
        set(&mut c.modes_k, self.modes_k);
        set(&mut c.distance, self.distance);
        set(&mut c.p, self.p);
        set(&mut c.solver, self.solver);
        set(&mut c.epsilon_rel, self.epsilon_rel);
        if self.epsilon.is_some() {
            c.epsilon = self.epsilon;
        }
        set(&mut c.tol, self.tol);
        set(&mut c.max_iter, self.max_iter);
        if self.without_replacement {
            c.with_replacement = false;
        }
        if self.couple_batches {
            c.couple_batches = true;
        }
        set(&mut c.subspace_field, self.subspace_field);
        if self.max_rank.is_some() {
            c.max_rank = self.max_rank;
        }
        set(&mut c.rank_tol, self.rank_tol);
    }
}

/// Treats inputs as raw tables (rows = time) to be windowed and normalized.
#[derive(Debug, Args, Default)]
pub struct RawFlags {
    /// Window length; enables raw-table input.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Keep an end-aligned final window when the stride grid misses the end.
    #[arg(long)]
    pub keep_partial: bool,
    /// Comma-separated header names or 0-based indices.
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    #[arg(long)]
    pub no_header: bool,
    /// `none`, `minmax-global`, `zscore-global` or `minmax-per-series`.
    #[arg(long)]
    pub normalize: Option<NormalizationScheme>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInput {
    pub window: usize,
    pub stride: usize,
    pub keep_partial: bool,
    pub columns: Option<Vec<String>>,
    pub header: bool,
    pub normalize: NormalizationScheme,
}

impl RawFlags {
    /// Combines flags with a raw-input section recorded in a manifest.
    pub fn resolve(&self, base: Option<RawInput>) -> Option<RawInput> {
        let mut raw = match (self.window, base) {
            (Some(window), Some(b)) => RawInput { window, ..b },
            (Some(window), None) => RawInput {
                window,
                stride: 1,
                keep_partial: false,
                columns: None,
                header: true,
                normalize: NormalizationScheme::default(),
            },
            (None, Some(b)) => b,
            (None, None) => return None,
        };
        set(&mut raw.stride, self.stride);
        if self.keep_partial {
            raw.keep_partial = true;
        }
        if self.columns.is_some() {
            raw.columns = self.columns.clone();
        }
        if self.no_header {
            raw.header = false;
        }
        set(&mut raw.normalize, self.normalize);
        Some(raw)
    }
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub generated: PathBuf,
    #[command(flatten)]
    pub metric: MetricFlags,
    #[command(flatten)]
    pub raw: RawFlags,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Comma-separated collapse severities.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub lambda_ref: Option<f64>,
    #[command(flatten)]
    pub grid: GridFlags,
    #[command(flatten)]
    pub metric: MetricFlags,
}

impl StudyArgs {
    pub fn overlay(&self, s: &mut StudySpec) {
        if let Some(l) = &self.lambdas {
            s.lambdas = l.clone();
        }
        set(&mut s.n_series, self.n);
        set(&mut s.lambda_ref, self.lambda_ref);
        self.grid.overlay(&mut s.grid);
        self.metric.overlay(&mut s.metric);
    }
}

#[derive(Debug, Args)]
pub struct EigArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub max_rank: Option<usize>,
    #[command(flatten)]
    pub raw: RawFlags,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

use crate::args::{Cli, EigArgs, Format, MetricArgs, RawInput, StudyArgs, SynthKind};
use crate::error::CliError;
use crate::manifest::{self, FileDigest, RunManifest, SCHEMA_VERSION};
use dmdgen::datagen::{bimodal_sines_channels, collapse_dataset, CollapseSpec, Dataset, GridSpec};
use dmdgen::error::IngestError;
use dmdgen::exec::Execution;
use dmdgen::ingest::{self, ColumnSelection, NormalizationScheme, WindowSpec};
use dmdgen::metric::{self, BatchResult, MetricConfig, StudyRow, StudySpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

/// Resolved global settings shared by every command.
pub struct Context<'a> {
    pub cli: &'a Cli,
    pub threads: usize,
}

impl Context<'_> {
    fn execution(&self) -> Execution {
        if self.threads == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    fn format(&self, default: Format) -> Format {
        self.cli.format.unwrap_or(default)
    }

    /// Config for `command`: file contents over `T::default()`.
    fn base_config<T: DeserializeOwned + Default>(&self, command: &str) -> Result<(T, Option<RawInput>), CliError> {
        let Some(path) = &self.cli.config else {
            return Ok((T::default(), None));
        };
        let file = manifest::load_config(path, command)?;
        let bad = |e: serde_json::Error| CliError::Usage(format!("{}: {e}", path.display()));
        let config = match file.config {
            Some(v) => serde_json::from_value(v).map_err(bad)?,
            None => T::default(),
        };
        let raw = file.raw_input.map(serde_json::from_value).transpose().map_err(bad)?;
        Ok((config, raw))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SynthSpec {
    Sines {
        per_mode: usize,
        channels: usize,
        seed: u64,
    },
    Collapse {
        n: usize,
        lambda: f64,
        lambda_ref: f64,
        #[serde(default)]
        grid: GridSpec,
        seed: u64,
    },
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self::Sines {
            per_mode: 50,
            channels: 1,
            seed: 0,
        }
    }
}

pub fn synth(ctx: &Context, kind: &SynthKind) -> Result<(), CliError> {
    let out = ctx
        .cli
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("synth needs --out <file.csv>".into()))?;
    if ctx.format(Format::Csv) != Format::Csv {
        return Err(CliError::Usage("synth writes csv datasets only".into()));
    }
    let (base, _) = ctx.base_config::<SynthSpec>("synth")?;
    let seed_flag = ctx.cli.seed;
    let spec = match kind {
        SynthKind::Sines { per_mode, channels } => {
            let (p, c, s) = match base {
                SynthSpec::Sines {
                    per_mode,
                    channels,
                    seed,
                } => (per_mode, channels, seed),
                _ => (50, 1, 0),
            };
            SynthSpec::Sines {
                per_mode: per_mode.unwrap_or(p),
                channels: channels.unwrap_or(c),
                seed: seed_flag.unwrap_or(s),
            }
        }
        SynthKind::Collapse {
            n,
            lambda,
            lambda_ref,
            grid,
        } => {
            let (bn, bl, br, mut g, bs) = match base {
                SynthSpec::Collapse {
                    n,
                    lambda,
                    lambda_ref,
                    grid,
                    seed,
                } => (n, lambda, lambda_ref, grid, seed),
                _ => (1000, 0.5, 0.5, GridSpec::default(), 0),
            };
            grid.overlay(&mut g);
            SynthSpec::Collapse {
                n: n.unwrap_or(bn),
                lambda: lambda.unwrap_or(bl),
                lambda_ref: lambda_ref.unwrap_or(br),
                grid: g,
                seed: seed_flag.unwrap_or(bs),
            }
        }
    };
    let start = Instant::now();
    let (ds, seed) = match &spec {
        SynthSpec::Sines {
            per_mode,
            channels,
            seed,
        } => (bimodal_sines_channels(*per_mode, *channels, *seed)?, *seed),
        SynthSpec::Collapse {
            n,
            lambda,
            lambda_ref,
            grid,
            seed,
        } => {
            let cs = CollapseSpec {
                n_series: *n,
                lambda: *lambda,
                lambda_ref: *lambda_ref,
                grid: *grid,
                seed: *seed,
            };
            (collapse_dataset(&cs, ctx.execution())?, *seed)
        }
    };
    ingest::write_dataset(&ds, out)?;
    let mut m = RunManifest::new("synth", seed, &spec);
    m.threads = Some(ctx.threads);
    m.wall_time_secs = Some(start.elapsed().as_secs_f64());
    m.outputs = vec![FileDigest::of(out)?, FileDigest::of(&ingest::manifest_path(out))?];
    manifest::write_sidecar(out, &m)?;
    log::info!("wrote {} series to {}", ds.len(), out.display());
    Ok(())
}

fn load_input(path: &Path, raw: Option<&RawInput>) -> Result<Dataset, CliError> {
    if !path.exists() {
        return Err(CliError::Core(IngestError::Missing(path.display().to_string()).into()));
    }
    let Some(raw) = raw else {
        return Ok(ingest::read_dataset(path)?);
    };
    let sel = match &raw.columns {
        None => ColumnSelection::All,
        Some(cols) => match cols
            .iter()
            .map(|c| c.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
        {
            Ok(idx) => ColumnSelection::Indices(idx),
            Err(_) => ColumnSelection::Names(cols.iter().map(|c| c.trim().to_string()).collect()),
        },
    };
    let table = ingest::load_csv(path, raw.header, &sel)?;
    let spec = WindowSpec {
        length: raw.window,
        stride: raw.stride,
        drop_partial: !raw.keep_partial,
    };
    Ok(ingest::window(&table, &spec)?)
}

/// Normalizes both sides; global schemes are fitted on the real data only.
fn normalize_pair(
    real: Dataset,
    generated: Dataset,
    scheme: NormalizationScheme,
) -> Result<(Dataset, Dataset), CliError> {
    match scheme {
        NormalizationScheme::None => Ok((real, generated)),
        NormalizationScheme::MinmaxPerSeries => Ok((
            ingest::normalize_fit(&real, scheme)?,
            ingest::normalize_fit(&generated, scheme)?,
        )),
        _ => {
            let params = ingest::fit(&real, scheme)?;
            Ok((
                ingest::normalize(&real, &params)?,
                ingest::normalize(&generated, &params)?,
            ))
        }
    }
}

#[derive(Serialize)]
struct MetricDoc<'a> {
    schema_version: u32,
    value: f64,
    per_batch: &'a [BatchResult],
    skipped_series: &'a [String],
    manifest: &'a RunManifest,
}

pub fn metric(ctx: &Context, args: &MetricArgs) -> Result<(), CliError> {
    let (mut cfg, base_raw) = ctx.base_config::<MetricConfig>("metric")?;
    args.metric.overlay(&mut cfg);
    if let Some(s) = ctx.cli.seed {
        cfg.seed = s;
    }
    cfg.execution = ctx.execution();
    let raw = args.raw.resolve(base_raw);
    let real = load_input(&args.real, raw.as_ref())?;
    let generated = load_input(&args.generated, raw.as_ref())?;
    let (real, generated) = match &raw {
        Some(r) => normalize_pair(real, generated, r.normalize)?,
        None => (real, generated),
    };

    let start = Instant::now();
    let report = metric::dmd_gen(&real, &generated, &cfg)?;
    let wall = start.elapsed().as_secs_f64();
    for b in report.per_batch.iter().filter(|b| !b.converged) {
        log::warn!(
            "batch {} did not reach tolerance (marginal error {:e})",
            b.batch_index,
            b.marginal_error
        );
    }

    let mut m = RunManifest::new("metric", cfg.seed, &cfg);
    m.raw_input = raw
        .as_ref()
        .map(|r| serde_json::to_value(r).expect("raw input serializes"));
    m.inputs = vec![FileDigest::of(&args.real)?, FileDigest::of(&args.generated)?];
    let body = match ctx.format(Format::Json) {
        Format::Json => manifest::to_json(&MetricDoc {
            schema_version: SCHEMA_VERSION,
            value: report.value,
            per_batch: &report.per_batch,
            skipped_series: &report.skipped_series,
            manifest: &m,
        }),
        Format::Csv => {
            let mut s = String::from("batch,cost,solver,converged,iterations,marginal_error\n");
            for b in &report.per_batch {
                let solver = serde_json::to_value(b.solver).expect("solver serializes");
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    b.batch_index,
                    b.cost,
                    solver.as_str().unwrap_or_default(),
                    b.converged,
                    b.iterations,
                    b.marginal_error
                ));
            }
            s.push_str(&format!("mean,{},,,,\n", report.value));
            s
        }
    };
    manifest::emit(&body, ctx.cli.out.as_deref(), m, ctx.threads, wall)
}

#[derive(Serialize)]
struct StudyDoc<'a> {
    schema_version: u32,
    rows: &'a [StudyRow],
    manifest: &'a RunManifest,
}

pub fn study(ctx: &Context, args: &StudyArgs) -> Result<(), CliError> {
    let (mut spec, _) = ctx.base_config::<StudySpec>("study")?;
    args.overlay(&mut spec);
    if let Some(s) = ctx.cli.seed {
        spec.data_seed = s;
        spec.metric.seed = s;
    }
    if spec.lambdas.is_empty() {
        return Err(CliError::Usage("study needs at least one value in --lambdas".into()));
    }
    spec.metric.execution = ctx.execution();
    let start = Instant::now();
    let rows = metric::collapse_study(&spec)?;
    let wall = start.elapsed().as_secs_f64();
    let m = RunManifest::new("study", spec.data_seed, &spec);
    let body = match ctx.format(Format::Csv) {
        Format::Csv => metric::study_csv(&rows),
        Format::Json => manifest::to_json(&StudyDoc {
            schema_version: SCHEMA_VERSION,
            rows: &rows,
            manifest: &m,
        }),
    };
    manifest::emit(&body, ctx.cli.out.as_deref(), m, ctx.threads, wall)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigConfig {
    pub max_rank: Option<usize>,
}

#[derive(Serialize)]
struct EigDoc<'a> {
    schema_version: u32,
    cloud: &'a metric::EigenCloud,
    manifest: &'a RunManifest,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn eig(ctx: &Context, args: &EigArgs) -> Result<(), CliError> {
    let (mut cfg, base_raw) = ctx.base_config::<EigConfig>("eig")?;
    if args.max_rank.is_some() {
        cfg.max_rank = args.max_rank;
    }
    let raw = args.raw.resolve(base_raw);
    let mut ds = load_input(&args.dataset, raw.as_ref())?;
    if let Some(r) = &raw {
        if r.normalize != NormalizationScheme::None && !ds.is_empty() {
            ds = ingest::normalize_fit(&ds, r.normalize)?;
        }
    }
    let start = Instant::now();
    let cloud = metric::eigenvalue_cloud(&ds, cfg.max_rank, ctx.execution())?;
    let wall = start.elapsed().as_secs_f64();
    let mut m = RunManifest::new("eig", 0, &cfg);
    m.raw_input = raw
        .as_ref()
        .map(|r| serde_json::to_value(r).expect("raw input serializes"));
    m.inputs = vec![FileDigest::of(&args.dataset)?];
    let body = match ctx.format(Format::Csv) {
        Format::Csv => {
            let mut s = String::from("series_id,re,im,modulus,unit_circle\n");
            for p in &cloud.points {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    csv_field(&p.series_id),
                    p.re,
                    p.im,
                    p.modulus,
                    p.unit_circle
                ));
            }
            s
        }
        Format::Json => manifest::to_json(&EigDoc {
            schema_version: SCHEMA_VERSION,
            cloud: &cloud,
            manifest: &m,
        }),
    };
    manifest::emit(&body, ctx.cli.out.as_deref(), m, ctx.threads, wall)
}

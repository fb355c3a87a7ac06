//! The DMD-GEN metric: batched optimal transport between temporal-mode
//! subspaces of real and generated series.
//!
//! Each of `B` rounds samples `L` series from both datasets, compares every
//! real/generated pair on the Grassmannian and solves the transport problem
//! over the resulting cost matrix. The metric is the mean of the `B`
//! transport costs. Mode extraction runs once per distinct sampled series.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::time::Instant;

use crate::datagen::{collapse_dataset, CollapseSpec, Dataset, GridSpec};
use crate::dmd::{self, DmdOptions, ModesK};
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::grassmann::{DistanceKind, OrthonormalBasis, SubspaceField};
use crate::numerics::DEFAULT_REL_TOL;
use crate::seed::{self, stream};
use crate::transport::{self, CostMatrix, SolverKind, TransportPlan};

/// Largest `L · L′` for which [`SolverChoice::Auto`] picks the exact solver.
pub const AUTO_EXACT_MAX: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    #[default]
    Auto,
    Sinkhorn,
    Exact,
}

impl std::str::FromStr for SolverChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "auto" => Ok(Self::Auto),
            "sinkhorn" => Ok(Self::Sinkhorn),
            "exact" => Ok(Self::Exact),
            other => Err(format!("unknown solver `{other}` (auto | sinkhorn | exact)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub num_batches: usize,
    pub batch_size: usize,
    pub modes_k: ModesK,
    pub distance: DistanceKind,
    pub p: f64,
    pub solver: SolverChoice,
    /// Sinkhorn regularization relative to the mean batch cost.
    pub epsilon_rel: f64,
    /// Absolute regularization; overrides `epsilon_rel` when set.
    pub epsilon: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub with_replacement: bool,
    /// Draw the generated batch with the real batch's indices.
    pub couple_batches: bool,
    pub subspace_field: SubspaceField,
    pub max_rank: Option<usize>,
    pub rank_tol: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            num_batches: 10,
            batch_size: 64,
            modes_k: ModesK::Auto,
            distance: DistanceKind::Projection,
            p: 1.0,
            solver: SolverChoice::Auto,
            epsilon_rel: 0.05,
            epsilon: None,
            tol: 1e-9,
            max_iter: 10_000,
            seed: 0,
            with_replacement: true,
            couple_batches: false,
            subspace_field: SubspaceField::Complex,
            max_rank: None,
            rank_tol: DEFAULT_REL_TOL,
            execution: Execution::default(),
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_batches == 0 || self.batch_size == 0 {
            return Err(invalid("num_batches and batch_size must be at least 1"));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(invalid(format!("p must be >= 1, got {}", self.p)));
        }
        if !(self.epsilon_rel > 0.0 && self.epsilon_rel.is_finite()) {
            return Err(invalid(format!(
                "epsilon_rel must be positive, got {}",
                self.epsilon_rel
            )));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(invalid(format!("epsilon must be positive, got {e}")));
            }
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(invalid("tol must be positive and max_iter at least 1"));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(invalid(format!("rank_tol must lie in (0, 1), got {}", self.rank_tol)));
        }
        if self.max_rank == Some(0) {
            return Err(invalid("max_rank must be at least 1"));
        }
        if matches!(self.modes_k, ModesK::Fixed(0)) {
            return Err(invalid("modes_k must be `auto` or at least 1"));
        }
        Ok(())
    }
}

/// Row-wise summary of an optimal plan: where each real series sends most
/// of its mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub real: String,
    pub target: String,
    pub mass: f64,
    pub row_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub batch_index: usize,
    pub cost: f64,
    pub solver: SolverKind,
    pub converged: bool,
    pub iterations: usize,
    pub marginal_error: f64,
    pub real_size: usize,
    pub generated_size: usize,
    pub plan: Vec<PlanRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub value: f64,
    pub per_batch: Vec<BatchResult>,
    pub skipped_series: Vec<String>,
    pub config: MetricConfig,
    /// Seconds; excluded from serialized reports so they stay reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
enum Slot {
    Pending,
    Ready(OrthonormalBasis),
    Degenerate,
}

/// Orthonormalized temporal-mode bases for (part of) a dataset.
#[derive(Debug, Clone)]
pub struct PreparedModes {
    ids: Vec<String>,
    slots: Vec<Slot>,
    n_features: usize,
}

impl PreparedModes {
    /// Extracts modes for every series.
    pub fn full(ds: &Dataset, cfg: &MetricConfig) -> Result<Self> {
        let all: Vec<usize> = (0..ds.len()).collect();
        Self::for_indices(ds, cfg, &all)
    }

    /// Extracts modes only for `indices`; other series stay pending.
    pub fn for_indices(ds: &Dataset, cfg: &MetricConfig, indices: &[usize]) -> Result<Self> {
        let n_features = ds.n_features().ok_or_else(|| invalid("dataset is empty"))?;
        let wanted: Vec<usize> = indices.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        if let Some(&bad) = wanted.last().filter(|&&i| i >= ds.len()) {
            return Err(invalid(format!("series index {bad} out of range")));
        }
        let opts = DmdOptions {
            max_rank: cfg.max_rank,
            rel_tol: cfg.rank_tol,
        };
        let computed = cfg.execution.try_map_range(wanted.len(), |w| {
            let s = &ds.series[wanted[w]];
            let d = dmd::exact_dmd_with(s, opts)?;
            if d.rank == 0 {
                return Ok(Slot::Degenerate);
            }
            let modes = dmd::temporal_modes(&d, cfg.modes_k.resolve(d.rank))?;
            let modes = cfg.subspace_field.prepare(&modes);
            Ok::<_, Error>(Slot::Ready(OrthonormalBasis::from_modes(&modes)?))
        })?;
        let mut slots = vec![Slot::Pending; ds.len()];
        for (i, slot) in wanted.into_iter().zip(computed) {
            if matches!(slot, Slot::Degenerate) {
                log::warn!("series `{}` is degenerate (rank 0) and is skipped", ds.series[i].id());
            }
            slots[i] = slot;
        }
        Ok(Self {
            ids: ds.series.iter().map(|s| s.id().to_string()).collect(),
            slots,
            n_features,
        })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Basis of series `i`; `None` for degenerate or unprepared series.
    pub fn basis(&self, i: usize) -> Option<&OrthonormalBasis> {
        match self.slots.get(i)? {
            Slot::Ready(b) => Some(b),
            _ => None,
        }
    }

    fn get(&self, i: usize) -> Option<&OrthonormalBasis> {
        match &self.slots[i] {
            Slot::Ready(b) => Some(b),
            Slot::Degenerate => None,
            Slot::Pending => panic!("modes for series {i} were not prepared"),
        }
    }

    fn degenerate_ids(&self) -> impl Iterator<Item = &str> {
        self.slots
            .iter()
            .zip(&self.ids)
            .filter(|(s, _)| matches!(s, Slot::Degenerate))
            .map(|(_, id)| id.as_str())
    }
}

/// Index draws for every batch, `(real, generated)`.
fn draw_batches(cfg: &MetricConfig, n_real: usize, n_gen: usize) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if cfg.couple_batches && n_real != n_gen {
        return Err(invalid(format!(
            "coupled batches need equal dataset sizes, got {n_real} and {n_gen}"
        )));
    }
    let draw = |stream_id: u64, b: usize, n: usize| -> Result<Vec<usize>> {
        let mut rng = seed::rng(cfg.seed, stream_id, b as u64);
        if cfg.with_replacement {
            Ok((0..cfg.batch_size).map(|_| rng.gen_range(0..n)).collect())
        } else {
            if cfg.batch_size > n {
                return Err(invalid(format!(
                    "batch size {} exceeds dataset size {n} without replacement",
                    cfg.batch_size
                )));
            }
            Ok(rand::seq::index::sample(&mut rng, n, cfg.batch_size).into_vec())
        }
    };
    (0..cfg.num_batches)
        .map(|b| {
            let real = draw(stream::REAL_BATCH, b, n_real)?;
            let gen = if cfg.couple_batches {
                real.clone()
            } else {
                draw(stream::GEN_BATCH, b, n_gen)?
            };
            Ok((real, gen))
        })
        .collect()
}

/// DMD-GEN between two datasets.
pub fn dmd_gen(real: &Dataset, generated: &Dataset, cfg: &MetricConfig) -> Result<MetricReport> {
    cfg.validate()?;
    check_datasets(real, generated)?;
    let draws = draw_batches(cfg, real.len(), generated.len())?;
    let ri: Vec<usize> = draws.iter().flat_map(|d| d.0.iter().copied()).collect();
    let gi: Vec<usize> = draws.iter().flat_map(|d| d.1.iter().copied()).collect();
    let start = Instant::now();
    let rp = PreparedModes::for_indices(real, cfg, &ri)?;
    let gp = PreparedModes::for_indices(generated, cfg, &gi)?;
    let mut report = run_batches(&rp, &gp, &draws, cfg)?;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

/// DMD-GEN over modes extracted ahead of time with the same configuration.
pub fn dmd_gen_prepared(real: &PreparedModes, generated: &PreparedModes, cfg: &MetricConfig) -> Result<MetricReport> {
    cfg.validate()?;
    if real.n_features != generated.n_features {
        return Err(invalid(format!(
            "feature dimension mismatch: real {} vs generated {}",
            real.n_features, generated.n_features
        )));
    }
    let draws = draw_batches(cfg, real.len(), generated.len())?;
    let start = Instant::now();
    let mut report = run_batches(real, generated, &draws, cfg)?;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

fn check_datasets(real: &Dataset, generated: &Dataset) -> Result<()> {
    let (Some(nr), Some(ng)) = (real.n_features(), generated.n_features()) else {
        return Err(invalid("both datasets must be nonempty"));
    };
    if nr != ng {
        return Err(invalid(format!(
            "feature dimension mismatch: real {nr} vs generated {ng}"
        )));
    }
    Ok(())
}

fn run_batches(
    real: &PreparedModes,
    generated: &PreparedModes,
    draws: &[(Vec<usize>, Vec<usize>)],
    cfg: &MetricConfig,
) -> Result<MetricReport> {
    let per_batch = cfg.execution.try_map_range(draws.len(), |b| {
        let (ri, gi) = &draws[b];
        solve_batch(b, real, generated, ri, gi, cfg)
    })?;
    let value = per_batch.iter().map(|r| r.cost).sum::<f64>() / per_batch.len() as f64;
    let mut skipped: Vec<String> = real
        .degenerate_ids()
        .map(|id| format!("real:{id}"))
        .chain(generated.degenerate_ids().map(|id| format!("generated:{id}")))
        .collect();
    skipped.sort();
    Ok(MetricReport {
        value,
        per_batch,
        skipped_series: skipped,
        config: cfg.clone(),
        wall_time: 0.0,
    })
}

fn solve_batch(
    b: usize,
    real: &PreparedModes,
    generated: &PreparedModes,
    ri: &[usize],
    gi: &[usize],
    cfg: &MetricConfig,
) -> Result<BatchResult> {
    let (r_keep, r_bases) = pick(real, ri);
    let (g_keep, g_bases) = pick(generated, gi);
    if r_bases.is_empty() {
        return Err(Error::DegenerateBatch { batch: b, side: "real" });
    }
    if g_bases.is_empty() {
        return Err(Error::DegenerateBatch {
            batch: b,
            side: "generated",
        });
    }
    let row_ids: Vec<String> = r_keep.iter().map(|&i| real.ids[i].clone()).collect();
    let col_ids: Vec<String> = g_keep.iter().map(|&i| generated.ids[i].clone()).collect();
    let c = transport::pairwise_costs(&r_bases, &g_bases, cfg.distance, cfg.execution).map_err(|(i, j, e)| {
        Error::Pair {
            row: row_ids[i].clone(),
            col: col_ids[j].clone(),
            source: Box::new(e),
        }
    })?;
    let cost = CostMatrix::with_ids(c, row_ids, col_ids)?;
    let (plan, value) = solve(&cost, cfg)?;
    Ok(BatchResult {
        batch_index: b,
        cost: value,
        solver: plan.solver,
        converged: plan.converged,
        iterations: plan.iterations,
        marginal_error: plan.marginal_error,
        real_size: cost.row_ids.len(),
        generated_size: cost.col_ids.len(),
        plan: summarize(&plan.gamma, &cost),
    })
}

/// Solves one batch; returns the plan and `⟨γ, C^p⟩^{1/p}`.
pub fn solve(cost: &CostMatrix, cfg: &MetricConfig) -> Result<(TransportPlan, f64)> {
    let (r, k) = cost.shape();
    let mu = transport::uniform(r);
    let nu = transport::uniform(k);
    let powered = if cfg.p == 1.0 { cost.clone() } else { cost.powf(cfg.p) };
    let exact = match cfg.solver {
        SolverChoice::Exact => true,
        SolverChoice::Sinkhorn => false,
        SolverChoice::Auto => r * k <= AUTO_EXACT_MAX,
    };
    let plan = if exact {
        transport::exact_ot(&powered, &mu, &nu)?
    } else {
        let mean = powered.mean();
        let eps = cfg.epsilon.unwrap_or(if mean > 0.0 {
            cfg.epsilon_rel * mean
        } else {
            cfg.epsilon_rel
        });
        transport::sinkhorn(&powered, &mu, &nu, eps, cfg.max_iter, cfg.tol)?
    };
    let value = if cfg.p == 1.0 {
        plan.cost
    } else {
        transport::wasserstein(&plan, cost, cfg.p)?
    };
    Ok((plan, value))
}

fn pick<'a>(p: &'a PreparedModes, idx: &[usize]) -> (Vec<usize>, Vec<&'a OrthonormalBasis>) {
    idx.iter().filter_map(|&i| p.get(i).map(|basis| (i, basis))).unzip()
}

fn summarize(gamma: &DMatrix<f64>, c: &CostMatrix) -> Vec<PlanRow> {
    (0..gamma.nrows())
        .map(|i| {
            let row = gamma.row(i);
            let (j, mass) = row.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |best, (j, &v)| if v > best.1 { (j, v) } else { best },
            );
            PlanRow {
                real: c.row_ids[i].clone(),
                target: c.col_ids[j].clone(),
                mass,
                row_mass: row.sum(),
            }
        })
        .collect()
}

/// Relative inflation `m / m_ref − 1`.
pub fn perf(m_collapse: f64, m_ref: f64) -> Result<f64> {
    if !(m_ref > 0.0) || !m_ref.is_finite() {
        return Err(invalid(format!("reference metric must be positive, got {m_ref}")));
    }
    Ok(m_collapse / m_ref - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub series_id: String,
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
    /// `| |λ| − 1 | ≤ UNIT_CIRCLE_TOL`.
    pub unit_circle: bool,
}

pub const UNIT_CIRCLE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenCloud {
    pub points: Vec<CloudPoint>,
    pub per_series: Vec<(String, usize)>,
}

/// Pools the DMD spectra of every series.
pub fn eigenvalue_cloud(ds: &Dataset, max_rank: Option<usize>, exec: Execution) -> Result<EigenCloud> {
    if ds.is_empty() {
        return Err(invalid("dataset is empty"));
    }
    let spectra = exec.try_map_range(ds.len(), |i| {
        let d = dmd::exact_dmd(&ds.series[i], max_rank)?;
        Ok::<Vec<Complex64>, Error>(d.eigenvalues)
    })?;
    let mut points = Vec::new();
    let mut per_series = Vec::with_capacity(ds.len());
    for (s, eigs) in ds.series.iter().zip(spectra) {
        per_series.push((s.id().to_string(), eigs.len()));
        for l in eigs {
            let modulus = l.norm();
            points.push(CloudPoint {
                series_id: s.id().to_string(),
                re: l.re,
                im: l.im,
                modulus,
                unit_circle: (modulus - 1.0).abs() <= UNIT_CIRCLE_TOL,
            });
        }
    }
    Ok(EigenCloud { points, per_series })
}

/// A λ sweep over the collapse benchmark.
///
/// The reference dataset `D(λ_ref)` is compared with an independently
/// seeded `D′(λ_ref)` for the denominator and with `D′(λ)` for each λ. All
/// `D′` share one seed, so they differ only through λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySpec {
    pub lambdas: Vec<f64>,
    pub n_series: usize,
    pub lambda_ref: f64,
    pub grid: GridSpec,
    pub data_seed: u64,
    pub metric: MetricConfig,
}

impl Default for StudySpec {
    fn default() -> Self {
        Self {
            lambdas: vec![0.1, 0.2, 0.3, 0.4, 0.6, 0.7],
            n_series: 1000,
            lambda_ref: 0.5,
            grid: GridSpec::default(),
            data_seed: 0,
            metric: MetricConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub lambda: f64,
    pub metric: f64,
    pub reference: f64,
    pub perf: f64,
}

fn study_dataset(spec: &StudySpec, lambda: f64, index: u64) -> Result<Dataset> {
    let cs = CollapseSpec {
        n_series: spec.n_series,
        lambda,
        lambda_ref: spec.lambda_ref,
        grid: spec.grid,
        seed: seed::derive(spec.data_seed, stream::STUDY_DATA, index),
    };
    collapse_dataset(&cs, spec.metric.execution)
}

pub fn collapse_study(spec: &StudySpec) -> Result<Vec<StudyRow>> {
    if spec.lambdas.is_empty() {
        return Err(invalid("study needs at least one lambda"));
    }
    if let Some(l) = spec.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(invalid(format!("lambda {l} outside [0, 1]")));
    }
    spec.metric.validate()?;
    let cfg = &spec.metric;
    let reference = PreparedModes::full(&study_dataset(spec, spec.lambda_ref, 0)?, cfg)?;
    let baseline = PreparedModes::full(&study_dataset(spec, spec.lambda_ref, 1)?, cfg)?;
    let m_ref = dmd_gen_prepared(&reference, &baseline, cfg)?.value;
    log::info!("reference metric m(D({0}), D'({0})) = {m_ref}", spec.lambda_ref);
    spec.lambdas
        .iter()
        .map(|&lambda| {
            let other = PreparedModes::full(&study_dataset(spec, lambda, 1)?, cfg)?;
            let m = dmd_gen_prepared(&reference, &other, cfg)?.value;
            log::info!("lambda {lambda}: metric {m}");
            Ok(StudyRow {
                lambda,
                metric: m,
                reference: m_ref,
                perf: perf(m, m_ref)?,
            })
        })
        .collect()
}

/// CSV with header `lambda,metric,reference,perf`; floats in shortest
/// round-trip form.
pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from("lambda,metric,reference,perf\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.lambda, r.metric, r.reference, r.perf));
    }
    out
}

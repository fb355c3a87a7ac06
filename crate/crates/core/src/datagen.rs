//! Synthetic benchmarks: bimodal sine waves and the G1/G2 collapse family.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dmd::TimeSeries;
use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::ingest::NormalizationParams;
use crate::seed::{self, stream};

/// Generator name, parameters and seed behind a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub generator: String,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
}

/// A collection of series sharing `(n, ℓ)`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub series: Vec<TimeSeries>,
    pub labels: Option<Vec<String>>,
    pub provenance: Provenance,
    pub normalization: Option<NormalizationParams>,
}

impl Dataset {
    pub fn new(series: Vec<TimeSeries>, labels: Option<Vec<String>>, provenance: Provenance) -> Result<Self> {
        if let Some(first) = series.first() {
            let shape = (first.n_features(), first.len());
            if let Some(bad) = series.iter().find(|s| (s.n_features(), s.len()) != shape) {
                return Err(invalid(format!(
                    "series `{}` has shape {}x{}, expected {}x{}",
                    bad.id(),
                    bad.n_features(),
                    bad.len(),
                    shape.0,
                    shape.1
                )));
            }
        }
        if let Some(l) = &labels {
            if l.len() != series.len() {
                return Err(invalid(format!("{} labels for {} series", l.len(), series.len())));
            }
        }
        Ok(Self {
            series,
            labels,
            provenance,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// `(n, ℓ)`, or `None` when empty.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.series.first().map(|s| (s.n_features(), s.len()))
    }

    pub fn n_features(&self) -> Option<usize> {
        self.shape().map(|s| s.0)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Ok(Self {
            series: self.series.iter().map(|s| s.scaled(factor)).collect::<Result<_>>()?,
            labels: self.labels.clone(),
            provenance: self.provenance.clone(),
            normalization: self.normalization.clone(),
        })
    }

    pub fn label_count(&self, label: &str) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|x| x.as_str() == label).count())
    }
}

pub const SINE_LEN: usize = 24;
pub const SINE_RATE: f64 = 12.0;

/// `(amplitude, frequency in Hz)` of the two sine modes.
pub const SINE_MODES: [(f64, f64); 2] = [(0.5, 1.0), (5.0, 0.5)];

/// Two-mode sine dataset with one feature per series.
pub fn bimodal_sines(n_per_mode: usize, seed: u64) -> Result<Dataset> {
    bimodal_sines_channels(n_per_mode, 1, seed)
}

/// Two-mode sine dataset; each channel of a series is the series' mode with
/// its own phase.
pub fn bimodal_sines_channels(n_per_mode: usize, channels: usize, seed: u64) -> Result<Dataset> {
    if n_per_mode == 0 {
        return Err(invalid("n_per_mode must be at least 1"));
    }
    if channels == 0 {
        return Err(invalid("channels must be at least 1"));
    }
    let total = 2 * n_per_mode;
    let mut series = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for i in 0..total {
        let mode = i / n_per_mode;
        let (amp, freq) = SINE_MODES[mode];
        let mut rng = seed::rng(seed, stream::SERIES, i as u64);
        let phases: Vec<f64> = (0..channels).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        let values = DMatrix::from_fn(channels, SINE_LEN, |ch, k| {
            let t = k as f64 / SINE_RATE;
            amp * (2.0 * PI * freq * t + phases[ch]).sin()
        });
        series.push(TimeSeries::with_dt(format!("sine-{i}"), values, 1.0 / SINE_RATE)?);
        labels.push(format!("mode{}", mode + 1));
    }
    Dataset::new(
        series,
        Some(labels),
        Provenance {
            generator: "sines".into(),
            params: serde_json::json!({ "per_mode": n_per_mode, "channels": channels }),
            seed: Some(seed),
        },
    )
}

/// Grid sizes for the collapse family: `t_points` over `[0, 4π]` and
/// `x_points` over `[−5, 5]`, both endpoint-inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_points: usize,
    pub x_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            t_points: 129,
            x_points: 65,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        if spec.t_points < 2 || spec.x_points < 1 {
            return Err(invalid(format!(
                "grid needs at least 2 time points and 1 space point, got {}x{}",
                spec.t_points, spec.x_points
            )));
        }
        Ok(Self {
            t: linspace(0.0, 4.0 * PI, spec.t_points),
            x: linspace(-5.0, 5.0, spec.x_points),
        })
    }

    pub fn dt(&self) -> f64 {
        self.t[1] - self.t[0]
    }
}

pub fn g1_value(a: f64, b: f64, c: f64, t: f64, x: f64) -> f64 {
    a / (x + b + 3.0).cosh() * ((c + 2.3) * t).cos()
}

pub fn g2_value(a: f64, b: f64, t: f64, x: f64) -> f64 {
    (2.0 + a) / x.cosh() * x.tanh() * ((2.8 + b) * t).sin()
}

fn evaluate(id: String, grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<TimeSeries> {
    let values = DMatrix::from_fn(grid.x.len(), grid.t.len(), |j, k| f(grid.t[k], grid.x[j]));
    TimeSeries::with_dt(id, values, grid.dt())
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} outside [0, 1]")))
    }
}

/// G1 sampled on `grid`; feature `j` is the trajectory at `x_j`.
pub fn generate_g1(a: f64, b: f64, c: f64, grid: &Grid) -> Result<TimeSeries> {
    for (n, v) in [("a", a), ("b", b), ("c", c)] {
        check_unit(n, v)?;
    }
    evaluate("g1".into(), grid, |t, x| g1_value(a, b, c, t, x))
}

pub fn generate_g2(a: f64, b: f64, grid: &Grid) -> Result<TimeSeries> {
    for (n, v) in [("a", a), ("b", b)] {
        check_unit(n, v)?;
    }
    evaluate("g2".into(), grid, |t, x| g2_value(a, b, t, x))
}

/// `D_N(λ)`: each series comes from G1 with probability λ, else from G2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseSpec {
    pub n_series: usize,
    pub lambda: f64,
    pub lambda_ref: f64,
    #[serde(default)]
    pub grid: GridSpec,
    pub seed: u64,
}

impl CollapseSpec {
    pub fn new(n_series: usize, lambda: f64, seed: u64) -> Self {
        Self {
            n_series,
            lambda,
            lambda_ref: 0.5,
            grid: GridSpec::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(invalid(format!("lambda = {} outside [0, 1]", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.lambda_ref) {
            return Err(invalid(format!("lambda_ref = {} outside [0, 1]", self.lambda_ref)));
        }
        if self.n_series == 0 {
            return Err(invalid("n_series must be at least 1"));
        }
        Grid::new(self.grid).map(|_| ())
    }
}

pub const G1_LABEL: &str = "G1";
pub const G2_LABEL: &str = "G2";

pub fn collapse_dataset(spec: &CollapseSpec, exec: Execution) -> Result<Dataset> {
    spec.validate()?;
    let grid = Grid::new(spec.grid)?;
    let drawn = exec.try_map_range(spec.n_series, |i| {
        let mut rng = seed::rng(spec.seed, stream::SERIES, i as u64);
        let u: f64 = rng.gen();
        // c is drawn for G2 too so every series consumes the same stream.
        let (a, b, c): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
        let (label, series) = if u < spec.lambda {
            (
                G1_LABEL,
                evaluate(format!("c{i}"), &grid, |t, x| g1_value(a, b, c, t, x))?,
            )
        } else {
            (G2_LABEL, evaluate(format!("c{i}"), &grid, |t, x| g2_value(a, b, t, x))?)
        };
        Ok::<_, crate::error::Error>((label.to_string(), series))
    })?;
    let (labels, series): (Vec<_>, Vec<_>) = drawn.into_iter().unzip();
    Dataset::new(
        series,
        Some(labels),
        Provenance {
            generator: "collapse".into(),
            params: serde_json::to_value(spec).expect("spec serializes"),
            seed: Some(spec.seed),
        },
    )
}

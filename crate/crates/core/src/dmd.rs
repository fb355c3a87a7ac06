//! Exact dynamic mode decomposition of a single multivariate series.
//!
//! A series `x_0 … x_{ℓ-1}` (columns of an n×ℓ matrix) is split into the
//! shifted snapshot pair `X = [x_0 … x_{ℓ-2}]`, `X' = [x_1 … x_{ℓ-1}]`. The
//! best-fit operator `A = X' X⁺` is never formed: it is projected onto the
//! leading left singular vectors of `X`, diagonalized there, and lifted back
//! to full-space modes `Φ = X' V Σ⁻¹ W`. With amplitudes `b = Φ⁺ x_0` the
//! series is approximated by `x_k = Φ Λᵏ b`.
//!
//! The discrete eigenvalues relate to continuous-time rates through
//! `λ = exp(ω Δt)`; see [`DmdDecomposition::continuous_rates`].

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{self, CMatrix, CVector, DEFAULT_REL_TOL};

/// One real multivariate series stored feature-major: `values` is n×ℓ.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: DMatrix<f64>,
    dt: f64,
    id: String,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, values: DMatrix<f64>) -> Result<Self> {
        Self::with_dt(id, values, 1.0)
    }

    pub fn with_dt(id: impl Into<String>, values: DMatrix<f64>, dt: f64) -> Result<Self> {
        let id = id.into();
        if values.nrows() < 1 {
            return Err(invalid(format!("series `{id}` has no features")));
        }
        if values.ncols() < 2 {
            return Err(invalid(format!(
                "series `{id}` needs at least 2 time points, has {}",
                values.ncols()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(invalid(format!("series `{id}` contains non-finite values")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("series `{id}` has invalid dt {dt}")));
        }
        Ok(Self { values, dt, id })
    }

    /// Builds a series from time-major rows (one `Vec` of n features per step).
    pub fn from_time_rows(id: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid("time rows have differing feature counts"));
        }
        let values = DMatrix::from_fn(n, rows.len(), |i, t| rows[t][i]);
        Self::new(id, values)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn n_features(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::with_dt(self.id.clone(), &self.values * factor, self.dt)
    }

    /// Same series with feature rows reordered: row `i` of the result is
    /// row `perm[i]` of `self`.
    pub fn permute_features(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_features() {
            return Err(invalid("permutation length differs from feature count"));
        }
        let values = DMatrix::from_fn(self.n_features(), self.len(), |i, t| self.values[(perm[i], t)]);
        Self::with_dt(self.id.clone(), values, self.dt)
    }
}

/// Shifted snapshot matrices `(X, X')`, each n×(ℓ−1).
pub fn snapshot_pair(series: &TimeSeries) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let l = series.len();
    if l < 2 {
        return Err(invalid("snapshot pair needs at least 2 time points"));
    }
    let v = series.values();
    Ok((v.columns(0, l - 1).into_owned(), v.columns(1, l - 1).into_owned()))
}

#[derive(Debug, Clone)]
pub struct DmdDecomposition {
    pub eigenvalues: Vec<Complex64>,
    /// n×r, unit-norm columns.
    pub modes: CMatrix,
    pub amplitudes: Vec<Complex64>,
    pub rank: usize,
    pub dt: f64,
    pub source_id: String,
}

impl DmdDecomposition {
    pub fn n_features(&self) -> usize {
        self.modes.nrows()
    }

    /// `ln(λ) / dt` for every eigenvalue (zero eigenvalues map to `-∞`).
    pub fn continuous_rates(&self) -> Vec<Complex64> {
        self.eigenvalues.iter().map(|l| l.ln() / self.dt).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DmdOptions {
    pub max_rank: Option<usize>,
    pub rel_tol: f64,
}

impl Default for DmdOptions {
    fn default() -> Self {
        Self {
            max_rank: None,
            rel_tol: DEFAULT_REL_TOL,
        }
    }
}

pub fn exact_dmd(series: &TimeSeries, max_rank: Option<usize>) -> Result<DmdDecomposition> {
    exact_dmd_with(
        series,
        DmdOptions {
            max_rank,
            ..DmdOptions::default()
        },
    )
}

pub fn exact_dmd_with(series: &TimeSeries, opts: DmdOptions) -> Result<DmdDecomposition> {
    let (x, xp) = snapshot_pair(series)?;
    let n = x.nrows();
    let x = numerics::complexify(&x);
    let xp = numerics::complexify(&xp);

    let svd = numerics::compact_svd(&x, opts.rel_tol)?;
    let rank = opts.max_rank.map_or(svd.rank, |m| m.min(svd.rank));
    if rank == 0 {
        return Ok(DmdDecomposition {
            eigenvalues: Vec::new(),
            modes: CMatrix::zeros(n, 0),
            amplitudes: Vec::new(),
            rank: 0,
            dt: series.dt(),
            source_id: series.id().to_owned(),
        });
    }
    let u = svd.u.columns(0, rank).into_owned();
    let mut v_sinv = svd.v.columns(0, rank).into_owned();
    for j in 0..rank {
        v_sinv.column_mut(j).unscale_mut(svd.sigma[j]);
    }

    // X' V Σ⁻¹ is shared by the reduced operator and the lifted modes.
    let lifted = &xp * &v_sinv;
    let reduced = u.adjoint() * &lifted;
    let pairs = numerics::eig(&reduced)?;

    let mut modes = &lifted * &pairs.vectors;
    let scale = lifted.norm().max(f64::MIN_POSITIVE);
    for j in 0..rank {
        let mut col: CVector = modes.column(j).into_owned();
        if col.norm() <= 1e-12 * scale {
            // A zero eigenvalue annihilates the exact mode; fall back to the
            // projected mode U w, which spans the same eigen-direction of Ã.
            col = &u * pairs.vectors.column(j);
        }
        numerics::normalize_column(&mut col);
        modes.set_column(j, &col);
    }

    let x0: CVector = x.column(0).into_owned();
    let amplitudes = numerics::pinv(&modes, opts.rel_tol)? * x0;

    Ok(DmdDecomposition {
        eigenvalues: pairs.values,
        modes,
        amplitudes: amplitudes.iter().copied().collect(),
        rank,
        dt: series.dt(),
        source_id: series.id().to_owned(),
    })
}

/// `Φ Λᵏ b`: the model's estimate of snapshot `k`.
pub fn reconstruct(d: &DmdDecomposition, k: usize) -> CVector {
    let k = u32::try_from(k).unwrap_or(u32::MAX);
    let weights = CVector::from_iterator(
        d.rank,
        d.eigenvalues.iter().zip(&d.amplitudes).map(|(l, b)| l.powu(k) * b),
    );
    &d.modes * weights
}

/// The k leading DMD eigenvectors of one series, stored as n×k columns.
#[derive(Debug, Clone)]
pub struct TemporalModes {
    pub basis: CMatrix,
    pub eigenvalues: Vec<Complex64>,
    pub source_id: String,
    pub requested_k: usize,
    /// Set when `requested_k` exceeded the decomposition rank.
    pub clipped: bool,
}

impl TemporalModes {
    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Real 2n-dimensional embedding `[Re φ; Im φ]` of every mode.
    pub fn realified(&self) -> TemporalModes {
        let (n, k) = self.basis.shape();
        let basis = CMatrix::from_fn(2 * n, k, |i, j| {
            let z = self.basis[(i % n, j)];
            Complex64::new(if i < n { z.re } else { z.im }, 0.0)
        });
        TemporalModes { basis, ..self.clone() }
    }
}

/// How many temporal modes to keep per series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModesK {
    /// Every mode of the decomposition (its effective rank).
    #[default]
    Auto,
    #[serde(untagged)]
    Fixed(usize),
}

impl ModesK {
    pub fn resolve(self, rank: usize) -> usize {
        match self {
            ModesK::Auto => rank,
            ModesK::Fixed(k) => k,
        }
    }
}

impl std::str::FromStr for ModesK {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(ModesK::Auto);
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("expected `auto` or a positive count, got `{s}`")),
            Ok(k) => Ok(ModesK::Fixed(k)),
        }
    }
}

pub fn temporal_modes(d: &DmdDecomposition, k: usize) -> Result<TemporalModes> {
    if k == 0 {
        return Err(invalid("temporal_modes needs k >= 1"));
    }
    if d.rank == 0 {
        return Err(Error::EmptyModes(d.source_id.clone()));
    }
    let eff = k.min(d.rank);
    if eff < k {
        log::debug!(
            "series `{}`: requested {k} temporal modes, rank is {}",
            d.source_id,
            d.rank
        );
    }
    Ok(TemporalModes {
        basis: d.modes.columns(0, eff).into_owned(),
        eigenvalues: d.eigenvalues[..eff].to_vec(),
        source_id: d.source_id.clone(),
        requested_k: k,
        clipped: eff < k,
    })
}

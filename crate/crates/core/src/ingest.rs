//! CSV loading, windowing, normalization and dataset files.
//!
//! Raw files hold one time step per row and one feature per column. Dataset
//! files are long-format CSV (`series_id, t_index, feature_0, …`) with a JSON
//! sidecar carrying shape, labels, provenance and normalization parameters.
//! Line and column numbers in errors are 1-based and count the header.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::datagen::{Dataset, Provenance};
use crate::dmd::TimeSeries;
use crate::error::{invalid, IngestError, Result};

/// Which raw columns become features.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ColumnSelection {
    #[default]
    All,
    /// 0-based column positions.
    Indices(Vec<usize>),
    /// Header names; requires a header row.
    Names(Vec<String>),
}

fn io_err(path: &Path, source: std::io::Error) -> IngestError {
    if source.kind() == std::io::ErrorKind::NotFound {
        IngestError::Missing(path.display().to_string())
    } else {
        IngestError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

fn csv_err(path: &Path, e: csv::Error) -> IngestError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        other => IngestError::Malformed(format!("{}: {other:?}", path.display())),
    }
}

fn parse_cell(cell: &str, line: usize, col: usize) -> std::result::Result<f64, IngestError> {
    match cell.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(IngestError::Parse {
            row: line,
            col,
            value: cell.to_string(),
        }),
    }
}

/// Loads a raw numeric table; rows are time steps, columns features.
pub fn load_csv(path: &Path, header: bool, columns: &ColumnSelection) -> Result<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut records = reader.records();

    let mut line = 0usize;
    let mut names: Option<Vec<String>> = None;
    if header {
        match records.next() {
            Some(rec) => {
                let rec = rec.map_err(|e| csv_err(path, e))?;
                line += 1;
                names = Some(rec.iter().map(|s| s.trim().to_string()).collect());
            }
            None => return Err(IngestError::Malformed(format!("{}: empty file", path.display())).into()),
        }
    }

    let mut width = names.as_ref().map(|n| n.len());
    let mut picked: Option<Vec<usize>> = None;
    let mut data: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for rec in records {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        line += 1;
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(IngestError::Ragged {
                row: line,
                expected: w,
                found: rec.len(),
            }
            .into());
        }
        let cols = match &picked {
            Some(p) => p,
            None => picked.insert(resolve_columns(columns, names.as_deref(), w)?),
        };
        for &c in cols.iter() {
            data.push(parse_cell(&rec[c], line, c + 1)?);
        }
        rows += 1;
    }
    let cols = picked.map_or(0, |p| p.len());
    if rows == 0 || cols == 0 {
        return Err(IngestError::Malformed(format!("{}: no data rows", path.display())).into());
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn resolve_columns(sel: &ColumnSelection, names: Option<&[String]>, width: usize) -> Result<Vec<usize>> {
    match sel {
        ColumnSelection::All => Ok((0..width).collect()),
        ColumnSelection::Indices(ix) => {
            if let Some(bad) = ix.iter().find(|&&i| i >= width) {
                return Err(IngestError::UnknownColumn(format!("index {bad} (file has {width} columns)")).into());
            }
            Ok(ix.clone())
        }
        ColumnSelection::Names(want) => {
            let names = names.ok_or_else(|| invalid("column names given but the file has no header"))?;
            want.iter()
                .map(|w| {
                    names
                        .iter()
                        .position(|n| n == w)
                        .ok_or_else(|| IngestError::UnknownColumn(w.clone()).into())
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
    pub stride: usize,
    /// When unset, a final window aligned to the last row is added if the
    /// stride grid does not reach it.
    pub drop_partial: bool,
}

impl WindowSpec {
    pub fn new(length: usize) -> Self {
        Self {
            length,
            stride: 1,
            drop_partial: true,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    /// Window start rows for a table of `rows` rows.
    pub fn starts(&self, rows: usize) -> Result<Vec<usize>> {
        if self.length < 2 {
            return Err(invalid(format!(
                "window length must be at least 2, got {}",
                self.length
            )));
        }
        if self.stride == 0 {
            return Err(invalid("window stride must be at least 1"));
        }
        if rows < self.length {
            return Err(IngestError::TooShort {
                rows,
                length: self.length,
            }
            .into());
        }
        let mut starts: Vec<usize> = (0..=rows - self.length).step_by(self.stride).collect();
        let tail = rows - self.length;
        if !self.drop_partial && starts.last() != Some(&tail) {
            starts.push(tail);
        }
        Ok(starts)
    }
}

/// Cuts a raw table into `n × ℓ` series.
pub fn window(raw: &DMatrix<f64>, spec: &WindowSpec) -> Result<Dataset> {
    let starts = spec.starts(raw.nrows())?;
    let series = starts
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let block = raw.rows(s, spec.length).transpose();
            TimeSeries::new(format!("w{i}"), block)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(
        series,
        None,
        Provenance {
            generator: "window".into(),
            params: serde_json::to_value(spec).expect("window spec serializes"),
            seed: None,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationScheme {
    None,
    #[default]
    MinmaxGlobal,
    ZscoreGlobal,
    MinmaxPerSeries,
}

impl std::str::FromStr for NormalizationScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "minmax-global" => Ok(Self::MinmaxGlobal),
            "zscore-global" => Ok(Self::ZscoreGlobal),
            "minmax-per-series" => Ok(Self::MinmaxPerSeries),
            other => Err(format!(
                "unknown normalization `{other}` (none | minmax-global | zscore-global | minmax-per-series)"
            )),
        }
    }
}

/// Per-feature `y = (x − shift) / scale`; a zero scale marks a constant
/// feature, which maps to 0 and inverts to `shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Affine {
    fn identity(n: usize) -> Self {
        Self {
            shift: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    fn forward(&self, f: usize, x: f64) -> f64 {
        if self.scale[f] == 0.0 {
            0.0
        } else {
            (x - self.shift[f]) / self.scale[f]
        }
    }

    fn inverse(&self, f: usize, y: f64) -> f64 {
        if self.scale[f] == 0.0 {
            self.shift[f]
        } else {
            y * self.scale[f] + self.shift[f]
        }
    }

    /// Applies to a feature-major `n × ℓ` block.
    pub fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |f, t| self.forward(f, m[(f, t)]))
    }

    pub fn invert(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |f, t| self.inverse(f, m[(f, t)]))
    }

    /// Applies to a raw time-major table (rows = time).
    pub fn apply_raw(&self, raw: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(raw.nrows(), raw.ncols(), |t, f| self.forward(f, raw[(t, f)]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub scheme: NormalizationScheme,
    /// One entry for global schemes, one per series for per-series ones.
    pub affines: Vec<Affine>,
}

impl NormalizationParams {
    fn affine_for(&self, i: usize) -> &Affine {
        if self.affines.len() == 1 {
            &self.affines[0]
        } else {
            &self.affines[i]
        }
    }
}

fn minmax(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Fits normalization parameters on `ds`.
pub fn fit(ds: &Dataset, scheme: NormalizationScheme) -> Result<NormalizationParams> {
    let (n, _) = ds
        .shape()
        .ok_or_else(|| invalid("cannot fit normalization on an empty dataset"))?;
    let affines = match scheme {
        NormalizationScheme::None => vec![Affine::identity(n)],
        NormalizationScheme::MinmaxGlobal => {
            let mut a = Affine::identity(n);
            for f in 0..n {
                let (lo, hi) = minmax(
                    ds.series
                        .iter()
                        .flat_map(|s| s.values().row(f).iter().copied().collect::<Vec<_>>()),
                );
                a.shift[f] = lo;
                a.scale[f] = hi - lo;
            }
            vec![a]
        }
        NormalizationScheme::ZscoreGlobal => {
            let mut a = Affine::identity(n);
            for f in 0..n {
                let vals: Vec<f64> = ds
                    .series
                    .iter()
                    .flat_map(|s| s.values().row(f).iter().copied().collect::<Vec<_>>())
                    .collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
                let std = var.sqrt();
                if std == 0.0 || std <= 1e-15 * mean.abs() {
                    log::warn!("feature {f} has zero variance; it normalizes to 0");
                    a.scale[f] = 0.0;
                    a.shift[f] = vals[0];
                } else {
                    a.shift[f] = mean;
                    a.scale[f] = std;
                }
            }
            vec![a]
        }
        NormalizationScheme::MinmaxPerSeries => ds
            .series
            .iter()
            .map(|s| {
                let mut a = Affine::identity(n);
                for f in 0..n {
                    let (lo, hi) = minmax(s.values().row(f).iter().copied());
                    a.shift[f] = lo;
                    a.scale[f] = hi - lo;
                }
                a
            })
            .collect(),
    };
    Ok(NormalizationParams { scheme, affines })
}

fn map_series(ds: &Dataset, params: &NormalizationParams, forward: bool) -> Result<Dataset> {
    if params.affines.len() != 1 && params.affines.len() != ds.len() {
        return Err(invalid(format!(
            "{} per-series parameter sets for {} series",
            params.affines.len(),
            ds.len()
        )));
    }
    if let Some((n, _)) = ds.shape() {
        if params.affines.iter().any(|a| a.shift.len() != n || a.scale.len() != n) {
            return Err(invalid("normalization parameters do not match the feature count"));
        }
    }
    let series = ds
        .series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let a = params.affine_for(i);
            let v = if forward {
                a.apply(s.values())
            } else {
                a.invert(s.values())
            };
            TimeSeries::with_dt(s.id(), v, s.dt())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        series,
        labels: ds.labels.clone(),
        provenance: ds.provenance.clone(),
        normalization: if forward { Some(params.clone()) } else { None },
    })
}

/// Applies `params`; the result records them for [`denormalize`].
pub fn normalize(ds: &Dataset, params: &NormalizationParams) -> Result<Dataset> {
    if ds.normalization.is_some() {
        return Err(invalid("dataset is already normalized"));
    }
    map_series(ds, params, true)
}

/// Fits `scheme` on `ds` and applies it.
pub fn normalize_fit(ds: &Dataset, scheme: NormalizationScheme) -> Result<Dataset> {
    let params = fit(ds, scheme)?;
    normalize(ds, &params)
}

pub fn denormalize(ds: &Dataset) -> Result<Dataset> {
    let params = ds
        .normalization
        .as_ref()
        .ok_or_else(|| invalid("dataset carries no normalization parameters"))?;
    map_series(ds, params, false)
}

/// Sidecar contents of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n: usize,
    pub length: usize,
    pub count: usize,
    pub dt: f64,
    pub labels: Option<Vec<String>>,
    pub provenance: Provenance,
    pub normalization: Option<NormalizationParams>,
}

/// `data.csv` → `data.json`.
pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let (n, len) = ds
        .shape()
        .ok_or_else(|| invalid("refusing to write an empty dataset"))?;
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut line = String::from("series_id,t_index");
    for f in 0..n {
        line.push_str(&format!(",feature_{f}"));
    }
    let wr = |w: &mut BufWriter<File>, s: &str| writeln!(w, "{s}").map_err(|e| io_err(path, e));
    wr(&mut w, &line)?;
    for s in &ds.series {
        if s.id().contains([',', '"', '\n', '\r']) {
            return Err(invalid(format!("series id {:?} cannot be written to CSV", s.id())));
        }
        for t in 0..len {
            line.clear();
            line.push_str(s.id());
            line.push_str(&format!(",{t}"));
            for f in 0..n {
                line.push_str(&format!(",{}", s.values()[(f, t)]));
            }
            wr(&mut w, &line)?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))?;

    let manifest = DatasetManifest {
        n,
        length: len,
        count: ds.len(),
        dt: ds.series[0].dt(),
        labels: ds.labels.clone(),
        provenance: ds.provenance.clone(),
        normalization: ds.normalization.clone(),
    };
    let mp = manifest_path(path);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&mp, text + "\n").map_err(|e| io_err(&mp, e))?;
    Ok(())
}

/// Reads a dataset file; the sidecar is used when present.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mp = manifest_path(path);
    let manifest: Option<DatasetManifest> = if mp.exists() {
        let text = std::fs::read_to_string(&mp).map_err(|e| io_err(&mp, e))?;
        Some(serde_json::from_str(&text).map_err(|e| IngestError::Malformed(format!("{}: {e}", mp.display())))?)
    } else {
        None
    };

    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_err(path, e))?,
        None => return Err(IngestError::Malformed(format!("{}: empty dataset file", path.display())).into()),
    };
    if header.len() < 3 || &header[0] != "series_id" || &header[1] != "t_index" {
        return Err(IngestError::Malformed(format!(
            "{}: expected header `series_id,t_index,feature_0,...`",
            path.display()
        ))
        .into());
    }
    let n = header.len() - 2;

    let mut series: Vec<(String, Vec<f64>)> = Vec::new();
    let mut line = 1usize;
    for rec in records {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        line += 1;
        if rec.len() != header.len() {
            return Err(IngestError::Ragged {
                row: line,
                expected: header.len(),
                found: rec.len(),
            }
            .into());
        }
        let id = &rec[0];
        let t: usize = rec[1].trim().parse().map_err(|_| IngestError::Parse {
            row: line,
            col: 2,
            value: rec[1].to_string(),
        })?;
        if series.last().map(|(last, _)| last.as_str()) != Some(id) {
            if t != 0 {
                return Err(
                    IngestError::Malformed(format!("line {line}: series `{id}` does not start at t_index 0")).into(),
                );
            }
            series.push((id.to_string(), Vec::new()));
        }
        let (_, vals) = series.last_mut().expect("pushed above");
        if t != vals.len() / n {
            return Err(IngestError::Malformed(format!("line {line}: t_index {t} out of sequence")).into());
        }
        for f in 0..n {
            vals.push(parse_cell(&rec[f + 2], line, f + 3)?);
        }
    }
    if series.is_empty() {
        return Err(IngestError::Malformed(format!("{}: dataset has no series", path.display())).into());
    }

    let dt = manifest.as_ref().map_or(1.0, |m| m.dt);
    let built = series
        .into_iter()
        .map(|(id, vals)| {
            let len = vals.len() / n;
            // Stored time-major; columns of the matrix are time steps.
            TimeSeries::with_dt(id, DMatrix::from_column_slice(n, len, &vals), dt)
        })
        .collect::<Result<Vec<_>>>()?;

    match manifest {
        Some(m) => {
            if m.n != n || m.count != built.len() {
                return Err(IngestError::Malformed(format!(
                    "{}: sidecar says {} series of {} features, file has {} of {}",
                    mp.display(),
                    m.count,
                    m.n,
                    built.len(),
                    n
                ))
                .into());
            }
            let mut ds = Dataset::new(built, m.labels, m.provenance)?;
            ds.normalization = m.normalization;
            Ok(ds)
        }
        None => Dataset::new(
            built,
            None,
            Provenance {
                generator: "file".into(),
                params: serde_json::Value::Null,
                seed: None,
            },
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn write_file(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn load_plain_integers() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(&dir, "a.csv", "1,2\n3,4\n5,6\n");
        let m = load_csv(&p, false, &ColumnSelection::All).unwrap();
        assert_eq!(m.shape(), (3, 2));
        assert_eq!(m[(2, 1)], 6.0);
    }

    #[test]
    fn load_by_header_name() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(&dir, "a.csv", "date,open,close\nx,1.5,2\ny,3,4.25\n");
        let m = load_csv(&p, true, &ColumnSelection::Names(vec!["close".into(), "open".into()])).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[2.0, 1.5, 4.25, 3.0]));
        let e = load_csv(&p, true, &ColumnSelection::Names(vec!["volume".into()])).unwrap_err();
        assert!(matches!(e, Error::Ingest(IngestError::UnknownColumn(_))));
    }

    #[test]
    fn parse_error_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::new();
        for i in 0..6 {
            body.push_str(&format!("{i},{i}\n"));
        }
        body.push_str("7,abc\n");
        let p = write_file(&dir, "a.csv", &body);
        match load_csv(&p, false, &ColumnSelection::All).unwrap_err() {
            Error::Ingest(IngestError::Parse { row, col, value }) => {
                assert_eq!((row, col, value.as_str()), (7, 2, "abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn distinct_error_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.csv");
        assert!(matches!(
            load_csv(&missing, false, &ColumnSelection::All).unwrap_err(),
            Error::Ingest(IngestError::Missing(_))
        ));
        let ragged = write_file(&dir, "r.csv", "1,2\n3\n");
        assert!(matches!(
            load_csv(&ragged, false, &ColumnSelection::All).unwrap_err(),
            Error::Ingest(IngestError::Ragged {
                row: 2,
                expected: 2,
                found: 1
            })
        ));
        let nan = write_file(&dir, "n.csv", "1,NaN\n");
        assert!(matches!(
            load_csv(&nan, false, &ColumnSelection::All).unwrap_err(),
            Error::Ingest(IngestError::Parse { row: 1, col: 2, .. })
        ));
    }

    #[test]
    fn window_counts() {
        let raw = DMatrix::from_fn(10, 2, |i, j| (i * 2 + j) as f64);
        assert_eq!(window(&raw, &WindowSpec::new(4).with_stride(2)).unwrap().len(), 4);
        assert_eq!(window(&raw, &WindowSpec::new(10)).unwrap().len(), 1);
        let stock = DMatrix::zeros(3773, 6);
        let ds = window(&stock, &WindowSpec::new(24)).unwrap();
        assert_eq!(ds.len(), 3750);
        assert_eq!(ds.shape(), Some((6, 24)));
        assert!(matches!(
            window(&raw, &WindowSpec::new(11)).unwrap_err(),
            Error::Ingest(IngestError::TooShort { rows: 10, length: 11 })
        ));
    }

    #[test]
    fn window_keeps_tail_when_asked() {
        let raw = DMatrix::from_fn(10, 1, |i, _| i as f64);
        let mut spec = WindowSpec::new(4).with_stride(4);
        assert_eq!(spec.starts(10).unwrap(), vec![0, 4]);
        spec.drop_partial = false;
        assert_eq!(spec.starts(10).unwrap(), vec![0, 4, 6]);
        let ds = window(&raw, &spec).unwrap();
        assert_eq!(ds.series[2].values()[(0, 3)], 9.0);
    }

    #[test]
    fn window_transposes_rows() {
        let raw = DMatrix::from_row_slice(3, 2, &[1.0, 10.0, 2.0, 20.0, 3.0, 30.0]);
        let ds = window(&raw, &WindowSpec::new(2)).unwrap();
        assert_eq!(
            ds.series[1].values(),
            &DMatrix::from_row_slice(2, 2, &[2.0, 3.0, 20.0, 30.0])
        );
    }

    fn random_ds(seed: u64, count: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let series = (0..count)
            .map(|i| {
                TimeSeries::new(
                    format!("s{i}"),
                    DMatrix::from_fn(3, 7, |_, _| rng.gen_range(-50.0..50.0)),
                )
                .unwrap()
            })
            .collect();
        Dataset::new(series, None, Provenance::default()).unwrap()
    }

    #[test]
    fn normalization_round_trips() {
        let ds = random_ds(1, 6);
        for scheme in [
            NormalizationScheme::None,
            NormalizationScheme::MinmaxGlobal,
            NormalizationScheme::ZscoreGlobal,
            NormalizationScheme::MinmaxPerSeries,
        ] {
            let back = denormalize(&normalize_fit(&ds, scheme).unwrap()).unwrap();
            for (a, b) in ds.series.iter().zip(&back.series) {
                assert!((a.values() - b.values()).amax() < 1e-12, "{scheme:?}");
            }
        }
    }

    #[test]
    fn minmax_ranges() {
        let ds = random_ds(2, 4);
        let g = normalize_fit(&ds, NormalizationScheme::MinmaxGlobal).unwrap();
        let (lo, hi) = minmax(
            g.series
                .iter()
                .flat_map(|s| s.values().iter().copied().collect::<Vec<_>>()),
        );
        assert!(lo.abs() < 1e-15 && (hi - 1.0).abs() < 1e-15);
        let p = normalize_fit(&ds, NormalizationScheme::MinmaxPerSeries).unwrap();
        for s in &p.series {
            for f in 0..3 {
                let (lo, hi) = minmax(s.values().row(f).iter().copied());
                assert!(lo.abs() < 1e-15 && (hi - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn unit_interval_unchanged_under_minmax() {
        let vals = DMatrix::from_row_slice(1, 4, &[0.0, 0.25, 1.0, 0.5]);
        let ds = Dataset::new(
            vec![TimeSeries::new("a", vals.clone()).unwrap()],
            None,
            Provenance::default(),
        )
        .unwrap();
        let out = normalize_fit(&ds, NormalizationScheme::MinmaxGlobal).unwrap();
        assert_eq!(out.series[0].values(), &vals);
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let vals = DMatrix::from_row_slice(2, 3, &[4.0, 4.0, 4.0, 1.0, 2.0, 3.0]);
        let ds = Dataset::new(
            vec![TimeSeries::new("a", vals.clone()).unwrap()],
            None,
            Provenance::default(),
        )
        .unwrap();
        for scheme in [
            NormalizationScheme::MinmaxGlobal,
            NormalizationScheme::ZscoreGlobal,
            NormalizationScheme::MinmaxPerSeries,
        ] {
            let out = normalize_fit(&ds, scheme).unwrap();
            assert!(out.series[0].values().row(0).iter().all(|v| *v == 0.0));
            assert_eq!(denormalize(&out).unwrap().series[0].values(), &vals);
        }
    }

    #[test]
    fn global_normalization_commutes_with_windowing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw = DMatrix::from_fn(40, 3, |_, _| rng.gen_range(-5.0..5.0));
        let spec = WindowSpec::new(8).with_stride(3);
        let windowed = window(&raw, &spec).unwrap();
        for scheme in [NormalizationScheme::MinmaxGlobal, NormalizationScheme::ZscoreGlobal] {
            let params = fit(&windowed, scheme).unwrap();
            let a = normalize(&windowed, &params).unwrap();
            let b = window(&params.affines[0].apply_raw(&raw), &spec).unwrap();
            for (x, y) in a.series.iter().zip(&b.series) {
                assert!((x.values() - y.values()).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn dataset_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = crate::datagen::bimodal_sines_channels(3, 2, 5).unwrap();
        ds = normalize_fit(&ds, NormalizationScheme::ZscoreGlobal).unwrap();
        let p = dir.path().join("d.csv");
        write_dataset(&ds, &p).unwrap();
        let back = read_dataset(&p).unwrap();
        assert_eq!(back.len(), 6);
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.normalization, ds.normalization);
        assert_eq!(back.provenance, ds.provenance);
        for (a, b) in ds.series.iter().zip(&back.series) {
            assert_eq!(a.values(), b.values());
            assert_eq!(a.id(), b.id());
            assert_eq!(a.dt(), b.dt());
        }
        let first = std::fs::read(&p).unwrap();
        write_dataset(&back, &p).unwrap();
        assert_eq!(first, std::fs::read(&p).unwrap());
    }

    #[test]
    fn dataset_file_without_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            &dir,
            "d.csv",
            "series_id,t_index,feature_0\na,0,1\na,1,2\nb,0,3\nb,1,4\n",
        );
        let ds = read_dataset(&p).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.series[1].values(), &DMatrix::from_row_slice(1, 2, &[3.0, 4.0]));
        let bad = write_file(&dir, "e.csv", "series_id,t_index,feature_0\na,0,1\na,2,2\n");
        assert!(read_dataset(&bad).is_err());
        let empty = write_file(&dir, "f.csv", "");
        assert!(read_dataset(&empty).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn window_count_formula(rows in 2usize..200, len in 2usize..50, stride in 1usize..20) {
                prop_assume!(rows >= len);
                let spec = WindowSpec::new(len).with_stride(stride);
                prop_assert_eq!(spec.starts(rows).unwrap().len(), (rows - len) / stride + 1);
            }

            #[test]
            fn stride_equal_length_tiles_prefix(rows in 2usize..80, len in 2usize..10, n in 1usize..4) {
                prop_assume!(rows >= len);
                let raw = DMatrix::from_fn(rows, n, |i, j| (i * 7 + j) as f64);
                let ds = window(&raw, &WindowSpec::new(len).with_stride(len)).unwrap();
                let mut t = 0;
                for s in &ds.series {
                    for k in 0..len {
                        for f in 0..n {
                            prop_assert_eq!(s.values()[(f, k)], raw[(t, f)]);
                        }
                        t += 1;
                    }
                }
                prop_assert_eq!(t, (rows / len) * len);
            }
        }
    }
}

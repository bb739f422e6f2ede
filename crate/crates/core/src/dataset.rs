//! Earthquake table ingestion: CSV loading and cleaning, chronological
//! ordering, min-max normalization to `[-1, 1]`, the random train/test split,
//! and a synthetic generator with a known ground truth.
//!
//! The seven columns, in canonical order, are year, magnitude, epicenter
//! latitude, epicenter longitude, focal depth, epicentral distance and
//! hypocentral distance. Magnitude is the regression target; the other six,
//! in that order, form the feature vector.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kv;
use crate::mlp::Matrix;
use crate::rng::{substream, Purpose};

pub const COLUMNS: [&str; 7] = [
    "year",
    "magnitude",
    "epicenter_lat",
    "epicenter_lon",
    "focal_depth",
    "epicentral_distance",
    "hypocentral_distance",
];

pub const TARGET_COLUMN: usize = 1;
pub const FEATURE_COLUMNS: [usize; 6] = [0, 2, 3, 4, 5, 6];
pub const DEFAULT_SENTINEL: f64 = -999.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRecord {
    /// Zero-based data-row index in the source file (header excluded).
    pub row: usize,
    pub year: f64,
    pub magnitude: f64,
    pub epicenter_lat: f64,
    pub epicenter_lon: f64,
    pub focal_depth: f64,
    pub epicentral_distance: f64,
    pub hypocentral_distance: f64,
}

impl RawRecord {
    pub fn from_values(row: usize, v: [f64; 7]) -> Self {
        Self {
            row,
            year: v[0],
            magnitude: v[1],
            epicenter_lat: v[2],
            epicenter_lon: v[3],
            focal_depth: v[4],
            epicentral_distance: v[5],
            hypocentral_distance: v[6],
        }
    }

    /// Values in canonical column order.
    pub fn values(&self) -> [f64; 7] {
        [
            self.year,
            self.magnitude,
            self.epicenter_lat,
            self.epicenter_lon,
            self.focal_depth,
            self.epicentral_distance,
            self.hypocentral_distance,
        ]
    }

    pub fn features(&self) -> [f64; 6] {
        let v = self.values();
        FEATURE_COLUMNS.map(|c| v[c])
    }

    /// Name of the first column outside its physical range, if any.
    pub fn range_violation(&self) -> Option<&'static str> {
        range_violation(&self.values())
    }
}

fn range_violation(v: &[f64; 7]) -> Option<&'static str> {
    if !(-90.0..=90.0).contains(&v[2]) {
        return Some(COLUMNS[2]);
    }
    if !(-180.0..=180.0).contains(&v[3]) {
        return Some(COLUMNS[3]);
    }
    (4..7).find(|&c| v[c] < 0.0).map(|c| COLUMNS[c])
}

/// Header names for the seven canonical columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub names: [String; 7],
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            names: COLUMNS.map(String::from),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub columns: ColumnMap,
    pub missing_sentinels: Vec<f64>,
    /// Reject (instead of drop) rows with a wrong field count or values
    /// outside their physical range.
    pub strict: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            columns: ColumnMap::default(),
            missing_sentinels: vec![DEFAULT_SENTINEL],
            strict: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningSummary {
    pub rows_read: usize,
    pub rows_dropped: usize,
}

enum Cell {
    Value(f64),
    Missing,
}

fn parse_cell(raw: &str, sentinels: &[f64]) -> Cell {
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && !sentinels.contains(&v) => Cell::Value(v),
        _ => Cell::Missing,
    }
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Reads the columns named in `wanted` from every data row. Rows with a
/// missing wanted cell yield `None`; malformed rows are dropped (`None`) or,
/// in strict mode, rejected.
fn read_rows<R: Read>(
    reader: R,
    wanted: &[&str],
    opts: &LoadOptions,
) -> Result<Vec<(u64, Option<Vec<f64>>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, format!("cannot read header: {e}")))?
        .clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let lookup: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let idx = wanted
        .iter()
        .map(|name| {
            lookup
                .get(name)
                .copied()
                .ok_or_else(|| parse_err(1, format!("header has no column `{name}`")))
        })
        .collect::<Result<Vec<usize>>>()?;

    let mut rows = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(k as u64 + 2, |p| p.line());
                if opts.strict {
                    return Err(parse_err(line, e.to_string()));
                }
                rows.push((line, None));
                continue;
            }
        };
        let line = record.position().map_or(k as u64 + 2, |p| p.line());
        if record.len() != headers.len() {
            if opts.strict {
                return Err(parse_err(
                    line,
                    format!("expected {} fields, found {}", headers.len(), record.len()),
                ));
            }
            rows.push((line, None));
            continue;
        }
        let mut values = Vec::with_capacity(idx.len());
        for &i in &idx {
            match parse_cell(&record[i], &opts.missing_sentinels) {
                Cell::Value(v) => values.push(v),
                Cell::Missing => break,
            }
        }
        rows.push((line, (values.len() == idx.len()).then_some(values)));
    }
    Ok(rows)
}

/// Loads and cleans a seven-column table from any reader.
pub fn read_csv<R: Read>(
    reader: R,
    opts: &LoadOptions,
) -> Result<(Vec<RawRecord>, CleaningSummary)> {
    let names: Vec<&str> = opts.columns.names.iter().map(String::as_str).collect();
    let rows = read_rows(reader, &names, opts)?;
    let rows_read = rows.len();
    let mut records = Vec::with_capacity(rows_read);
    for (row, (line, values)) in rows.into_iter().enumerate() {
        let Some(values) = values else { continue };
        let v: [f64; 7] = values.try_into().expect("seven columns requested");
        if let Some(col) = range_violation(&v) {
            if opts.strict {
                return Err(parse_err(line, format!("`{col}` outside its valid range")));
            }
            continue;
        }
        records.push(RawRecord::from_values(row, v));
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let summary = CleaningSummary {
        rows_read,
        rows_dropped: rows_read - records.len(),
    };
    Ok((records, summary))
}

pub fn load_csv(path: &Path, opts: &LoadOptions) -> Result<(Vec<RawRecord>, CleaningSummary)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, opts)
}

/// One row of prediction input: its data-row index and six features.
pub type FeatureRow = (usize, [f64; 6]);

/// Reads only the six feature columns (the target column may be absent).
/// Rows with a missing feature are skipped; the count is returned alongside.
pub fn read_feature_rows<R: Read>(
    reader: R,
    opts: &LoadOptions,
) -> Result<(Vec<FeatureRow>, usize)> {
    let names: Vec<&str> = FEATURE_COLUMNS
        .iter()
        .map(|&c| opts.columns.names[c].as_str())
        .collect();
    let rows = read_rows(reader, &names, opts)?;
    let mut out = Vec::with_capacity(rows.len());
    let mut skipped = 0;
    for (row, (_, values)) in rows.into_iter().enumerate() {
        match values {
            Some(v) => out.push((row, v.try_into().expect("six columns requested"))),
            None => skipped += 1,
        }
    }
    Ok((out, skipped))
}

/// Writes records with the canonical header; values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(records: &[RawRecord], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record(r.values().map(|v| format!("{v}")))?;
    }
    w.flush()
}

/// Stable ascending sort on year.
pub fn sort_by_year(records: &mut [RawRecord]) {
    records.sort_by(|a, b| a.year.total_cmp(&b.year));
}

/// Observed range of one column and the affine map onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
}

impl ColumnRange {
    /// `2 (x - min) / (max - min) - 1`; sends `min` to exactly -1 and `max`
    /// to exactly +1.
    #[inline]
    pub fn transform(&self, x: f64) -> f64 {
        2.0 * (x - self.min) / (self.max - self.min) - 1.0
    }

    #[inline]
    pub fn inverse(&self, y: f64) -> f64 {
        self.min + (y + 1.0) * (self.max - self.min) / 2.0
    }

    /// Factor by which squared errors grow under [`ColumnRange::inverse`].
    pub fn squared_scale(&self) -> f64 {
        let half = (self.max - self.min) / 2.0;
        half * half
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationSpec {
    columns: [ColumnRange; 7],
}

impl NormalizationSpec {
    pub fn new(columns: [ColumnRange; 7]) -> Result<Self> {
        for (r, name) in columns.iter().zip(COLUMNS) {
            if !(r.min.is_finite() && r.max.is_finite() && r.min < r.max) {
                return Err(Error::DegenerateColumn(name.into()));
            }
        }
        Ok(Self { columns })
    }

    pub fn column(&self, c: usize) -> &ColumnRange {
        &self.columns[c]
    }

    pub fn target(&self) -> &ColumnRange {
        &self.columns[TARGET_COLUMN]
    }

    pub fn transform_features(&self, raw: &[f64; 6]) -> [f64; 6] {
        let mut out = [0.0; 6];
        for ((o, &x), &c) in out.iter_mut().zip(raw).zip(&FEATURE_COLUMNS) {
            *o = self.columns[c].transform(x);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# min-max normalization onto [-1, 1]\n");
        for (r, name) in self.columns.iter().zip(COLUMNS) {
            s.push_str(&format!("{name}.min = {:.16e}\n", r.min));
            s.push_str(&format!("{name}.max = {:.16e}\n", r.max));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let map = kv::parse(text)?;
        let get = |key: String| -> Result<f64> {
            let raw = map.get(&key).ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("normalization file lacks `{key}`"),
            })?;
            raw.parse::<f64>().map_err(|_| Error::Parse {
                line: 0,
                message: format!("`{key}` is not a number: `{raw}`"),
            })
        };
        let mut columns = [ColumnRange { min: 0.0, max: 0.0 }; 7];
        for (r, name) in columns.iter_mut().zip(COLUMNS) {
            r.min = get(format!("{name}.min"))?;
            r.max = get(format!("{name}.max"))?;
        }
        Self::new(columns)
    }

    /// SHA-256 of the canonical text form.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

pub fn fit_normalizer(records: &[RawRecord]) -> Result<NormalizationSpec> {
    if records.len() < 2 {
        return Err(Error::EmptyDataset);
    }
    let mut columns = [ColumnRange {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
    }; 7];
    for r in records {
        for (range, v) in columns.iter_mut().zip(r.values()) {
            range.min = range.min.min(v);
            range.max = range.max.max(v);
        }
    }
    NormalizationSpec::new(columns)
}

/// Number of training rows: `round(fraction * n)`, halves rounded up.
pub fn train_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) + 0.5).floor() as usize
}

/// Random train/test partition of `0..n`, both sides sorted ascending.
pub fn split(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = train_count(n, train_fraction);
    if n < 2 || n_train == 0 || n_train >= n {
        return Err(Error::SplitTooSmall {
            n,
            fraction: train_fraction,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut substream(seed, Purpose::Split, 0, 0));
    let mut test = perm.split_off(n_train);
    perm.sort_unstable();
    test.sort_unstable();
    Ok((perm, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Test,
}

/// Normalized features and targets plus the split. Immutable once built.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Matrix,
    targets: Vec<f64>,
    source_rows: Vec<usize>,
    normalization: NormalizationSpec,
    train: Vec<usize>,
    test: Vec<usize>,
}

impl Dataset {
    pub fn build(
        records: &[RawRecord],
        normalization: NormalizationSpec,
        train: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<Self> {
        let n = records.len();
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&test) {
            if i >= n || seen[i] {
                return Err(Error::Shape(format!(
                    "train/test indices must partition 0..{n}"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Shape(format!(
                "train/test indices must partition 0..{n}"
            )));
        }
        let mut data = Vec::with_capacity(n * 6);
        for r in records {
            data.extend_from_slice(&normalization.transform_features(&r.features()));
        }
        let targets = records
            .iter()
            .map(|r| normalization.target().transform(r.magnitude))
            .collect();
        Ok(Self {
            features: Matrix::new(data, n, 6)?,
            targets,
            source_rows: records.iter().map(|r| r.row).collect(),
            normalization,
            train,
            test,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Source data-row index of each dataset row.
    pub fn source_rows(&self) -> &[usize] {
        &self.source_rows
    }

    pub fn normalization(&self) -> &NormalizationSpec {
        &self.normalization
    }

    pub fn indices(&self, subset: Subset) -> &[usize] {
        match subset {
            Subset::Train => &self.train,
            Subset::Test => &self.test,
        }
    }

    /// Feature matrix and targets of one subset.
    pub fn subset(&self, subset: Subset) -> (Matrix, Vec<f64>) {
        let idx = self.indices(subset);
        (
            self.features.select_rows(idx),
            idx.iter().map(|&i| self.targets[i]).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub train_fraction: f64,
    pub split_seed: u64,
    /// Fit the normalization on training rows only instead of all rows.
    pub fit_norm_on_train: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            train_fraction: 0.9,
            split_seed: 0,
            fit_norm_on_train: false,
        }
    }
}

/// Sort by year, normalize, split.
pub fn prepare(mut records: Vec<RawRecord>, opts: &PipelineOptions) -> Result<Dataset> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    sort_by_year(&mut records);
    let (train, test) = split(records.len(), opts.train_fraction, opts.split_seed)?;
    let norm = if opts.fit_norm_on_train {
        let subset: Vec<RawRecord> = train.iter().map(|&i| records[i]).collect();
        fit_normalizer(&subset)?
    } else {
        fit_normalizer(&records)?
    };
    Dataset::build(&records, norm, train, test)
}

/// Ground-truth magnitude of the synthetic generator.
///
/// `5.5 + 0.8 tanh((depth - 40) / 30) + 0.6 sin(pi lat / 90) cos(pi lon / 180)
///  + 0.5 (hypo / 250 - 1) + 0.2 (year - 1970) / 40`
pub fn synthetic_magnitude(year: f64, lat: f64, lon: f64, depth: f64, hypo: f64) -> f64 {
    use std::f64::consts::PI;
    5.5 + 0.8 * ((depth - 40.0) / 30.0).tanh()
        + 0.6 * (PI * lat / 90.0).sin() * (PI * lon / 180.0).cos()
        + 0.5 * (hypo / 250.0 - 1.0)
        + 0.2 * (year - 1970.0) / 40.0
}

/// `n` plausible records: year in [1930, 2010), latitude and longitude over
/// their full ranges, depth in [0, 100) km, epicentral distance in [0, 480)
/// km and hypocentral distance `sqrt(epi^2 + depth^2)`. Magnitude is
/// [`synthetic_magnitude`] plus `N(0, noise_sd)` noise.
pub fn make_synthetic(n: usize, seed: u64, noise_sd: f64) -> Result<Vec<RawRecord>> {
    if n < 10 {
        return Err(Error::Config(format!(
            "synthetic dataset needs at least 10 rows, got {n}"
        )));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::Config(
            "noise standard deviation must be >= 0".into(),
        ));
    }
    let mut rng = substream(seed, Purpose::Synthetic, 0, 0);
    let noise = (noise_sd > 0.0).then(|| Normal::new(0.0, noise_sd).expect("valid sd"));
    Ok((0..n)
        .map(|row| {
            let year = rng.random_range(1930.0..2010.0);
            let lat = rng.random_range(-90.0..=90.0);
            let lon = rng.random_range(-180.0..=180.0);
            let depth = rng.random_range(0.0..100.0);
            let epi: f64 = rng.random_range(0.0..480.0);
            let hypo = epi.hypot(depth);
            let eps = noise.map_or(0.0, |d| d.sample(&mut rng));
            let magnitude = synthetic_magnitude(year, lat, lon, depth, hypo) + eps;
            RawRecord::from_values(row, [year, magnitude, lat, lon, depth, epi, hypo])
        })
        .collect())
}

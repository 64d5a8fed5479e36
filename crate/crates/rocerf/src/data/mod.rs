//! Tabular datasets: loading, preprocessing, splitting, synthesis.
//!
//! The flow for real data is `load_csv` → `split_raw` → `fit_apply_preprocess`:
//! the preprocessor is fitted on the training rows only and then applied to
//! the other splits. Synthetic data from [`make_synthetic_gaussians`] is
//! already standardized and skips preprocessing entirely.

mod schema;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng;

pub use schema::{ColumnKind, Schema};

/// Cell contents treated as missing when loading raw CSVs; rows containing
/// one in a used column are dropped (and counted) rather than imputed.
const MISSING_MARKERS: [&str; 3] = ["", "?", "NA"];

/// Standard deviations below this floor are clamped so constant columns
/// standardize to zeros instead of dividing by zero.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("file not found or unreadable: {path}")]
    MissingFile { path: String },
    #[error("schema file error at line {line}: {detail}")]
    SchemaFile { line: usize, detail: String },
    #[error("schema mismatch at row {row}, column '{column}': {detail}")]
    SchemaMismatch {
        row: usize,
        column: String,
        detail: String,
    },
    #[error("degenerate labels: {detail}")]
    DegenerateLabels { detail: String },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("degenerate split: {detail}")]
    DegenerateSplit { detail: String },
    #[error("invalid split fractions: {detail}")]
    InvalidFractions { detail: String },
    #[error("dataset construction: {detail}")]
    Construction { detail: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Raw datasets
// ---------------------------------------------------------------------------

/// A feature column as parsed from CSV, before standardization/encoding.
#[derive(Debug, Clone)]
pub enum RawColumn {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

/// Parsed but not yet standardized dataset. Column order follows the schema.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub schema: Schema,
    pub columns: Vec<RawColumn>,
    pub labels: Vec<i8>,
}

impl RawDataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Row-subset in the given index order.
    pub fn subset(&self, indices: &[usize]) -> RawDataset {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                RawColumn::Numeric(v) => {
                    RawColumn::Numeric(indices.iter().map(|&i| v[i]).collect())
                }
                RawColumn::Categorical(v) => {
                    RawColumn::Categorical(indices.iter().map(|&i| v[i].clone()).collect())
                }
            })
            .collect();
        RawDataset {
            schema: self.schema.clone(),
            columns,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Load a raw dataset from a headered CSV against a schema.
///
/// Rows with a missing value in any used column are dropped; the second
/// return value is the drop count. Extra CSV columns not named by the schema
/// are ignored.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<(RawDataset, usize), DataError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(DataError::MissingFile {
            path: path.display().to_string(),
        });
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let header_index = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::SchemaMismatch {
                row: 0,
                column: name.to_string(),
                detail: "column absent from CSV header".into(),
            })
    };
    let feature_idx: Vec<usize> = schema
        .columns
        .iter()
        .map(|(name, _)| header_index(name))
        .collect::<Result<_, _>>()?;
    let label_idx = header_index(&schema.label_column)?;

    let mut columns: Vec<RawColumn> = schema
        .columns
        .iter()
        .map(|(_, kind)| match kind {
            ColumnKind::Numeric => RawColumn::Numeric(Vec::new()),
            ColumnKind::Categorical => RawColumn::Categorical(Vec::new()),
        })
        .collect();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut dropped = 0usize;

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_idx + 1; // 1-based data row for error messages
        let mut used: Vec<&str> = Vec::with_capacity(feature_idx.len() + 1);
        for &ci in feature_idx.iter().chain(std::iter::once(&label_idx)) {
            used.push(record.get(ci).ok_or_else(|| DataError::SchemaMismatch {
                row,
                column: headers[ci].to_string(),
                detail: "row has fewer fields than the header".into(),
            })?);
        }
        if used
            .iter()
            .any(|cell| MISSING_MARKERS.contains(&cell.trim()))
        {
            dropped += 1;
            continue;
        }
        for (k, (name, kind)) in schema.columns.iter().enumerate() {
            let cell = used[k].trim();
            match (kind, &mut columns[k]) {
                (ColumnKind::Numeric, RawColumn::Numeric(v)) => {
                    let parsed: f64 = cell.parse().map_err(|_| DataError::SchemaMismatch {
                        row,
                        column: name.clone(),
                        detail: format!("cell '{cell}' is not numeric"),
                    })?;
                    v.push(parsed);
                }
                (ColumnKind::Categorical, RawColumn::Categorical(v)) => v.push(cell.to_string()),
                _ => unreachable!("column kinds fixed at construction"),
            }
        }
        raw_labels.push(used[used.len() - 1].trim().to_string());
    }

    let distinct: BTreeSet<&str> = raw_labels.iter().map(|s| s.as_str()).collect();
    if distinct.len() < 2 {
        return Err(DataError::DegenerateLabels {
            detail: format!("label column has {} distinct value(s), need 2", distinct.len()),
        });
    }
    if distinct.len() > 2 {
        return Err(DataError::SchemaMismatch {
            row: 0,
            column: schema.label_column.clone(),
            detail: format!("label column has {} distinct values, need 2", distinct.len()),
        });
    }
    if !distinct.contains(schema.positive_label.as_str()) {
        return Err(DataError::DegenerateLabels {
            detail: format!(
                "positive label '{}' never occurs (values: {:?})",
                schema.positive_label, distinct
            ),
        });
    }
    let labels: Vec<i8> = raw_labels
        .iter()
        .map(|v| if *v == schema.positive_label { 1 } else { -1 })
        .collect();

    Ok((
        RawDataset {
            schema: schema.clone(),
            columns,
            labels,
        },
        dropped,
    ))
}

// ---------------------------------------------------------------------------
// Standardized datasets
// ---------------------------------------------------------------------------

/// Standardized feature matrix with ±1 labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<i8>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<i8>,
        feature_names: Vec<String>,
    ) -> Result<Self, DataError> {
        if features.nrows() != labels.len() {
            return Err(DataError::Construction {
                detail: format!(
                    "{} feature rows but {} labels",
                    features.nrows(),
                    labels.len()
                ),
            });
        }
        if features.ncols() != feature_names.len() {
            return Err(DataError::Construction {
                detail: format!(
                    "{} feature columns but {} names",
                    features.ncols(),
                    feature_names.len()
                ),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
            return Err(DataError::Construction {
                detail: format!("label {bad} outside {{-1, +1}}"),
            });
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(DataError::Construction {
                detail: "features contain NaN/Inf".into(),
            });
        }
        Ok(Self {
            features,
            labels,
            feature_names,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn x(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn y(&self, i: usize) -> i8 {
        self.labels[i]
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.iter().any(|&y| y == 1) && self.labels.iter().any(|&y| y == -1)
    }

    /// Row-subset in the given index order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Array2::<f64>::zeros((indices.len(), self.d()));
        for (r, &i) in indices.iter().enumerate() {
            features.row_mut(r).assign(&self.features.row(i));
        }
        Dataset {
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Indices of rows the given classifier scores negative.
    pub fn negative_indices_under<F>(&self, score: F) -> Vec<usize>
    where
        F: Fn(ArrayView1<f64>) -> f64,
    {
        (0..self.n()).filter(|&i| score(self.x(i)) < 0.0).collect()
    }

    /// Copy with an always-1 column appended, mirroring what the preprocessor
    /// does for real data. Models without a separate intercept need it, and
    /// so does the local-surrogate fit (its hyperplanes pass through the
    /// origin of feature space).
    pub fn with_bias_column(&self) -> Dataset {
        let n = self.n();
        let d = self.d();
        let mut features = Array2::<f64>::ones((n, d + 1));
        features
            .slice_mut(ndarray::s![.., ..d])
            .assign(&self.features);
        let mut names = self.feature_names.clone();
        names.push("bias".to_string());
        Dataset {
            features,
            labels: self.labels.clone(),
            feature_names: names,
        }
    }
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum FittedColumn {
    Numeric {
        name: String,
        mean: f64,
        std: f64,
    },
    Categorical {
        name: String,
        /// Categories seen in training, sorted; the value→slot map is derived.
        categories: Vec<String>,
    },
}

/// Fitted standardization/encoding state. Fitted only on training rows.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    fitted: Vec<FittedColumn>,
    add_bias: bool,
}

impl Preprocessor {
    /// Fit on training rows. `add_bias` appends an always-1 column so linear
    /// models carry their intercept inside θ.
    pub fn fit(train: &RawDataset, add_bias: bool) -> Result<Self, DataError> {
        if train.n() == 0 {
            return Err(DataError::EmptyTrainingSet);
        }
        let fitted = train
            .schema
            .columns
            .iter()
            .zip(&train.columns)
            .map(|((name, _), col)| match col {
                RawColumn::Numeric(values) => {
                    let n = values.len() as f64;
                    let mean = values.iter().sum::<f64>() / n;
                    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    FittedColumn::Numeric {
                        name: name.clone(),
                        mean,
                        std: var.sqrt().max(STD_FLOOR),
                    }
                }
                RawColumn::Categorical(values) => {
                    let set: BTreeSet<&String> = values.iter().collect();
                    FittedColumn::Categorical {
                        name: name.clone(),
                        categories: set.into_iter().cloned().collect(),
                    }
                }
            })
            .collect();
        Ok(Self { fitted, add_bias })
    }

    pub fn add_bias(&self) -> bool {
        self.add_bias
    }

    /// Width of the standardized feature space.
    pub fn output_dim(&self) -> usize {
        let base: usize = self
            .fitted
            .iter()
            .map(|c| match c {
                FittedColumn::Numeric { .. } => 1,
                FittedColumn::Categorical { categories, .. } => categories.len(),
            })
            .sum();
        base + usize::from(self.add_bias)
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.output_dim());
        for col in &self.fitted {
            match col {
                FittedColumn::Numeric { name, .. } => names.push(name.clone()),
                FittedColumn::Categorical { name, categories } => {
                    names.extend(categories.iter().map(|c| format!("{name}={c}")))
                }
            }
        }
        if self.add_bias {
            names.push("bias".to_string());
        }
        names
    }

    /// Standardize a raw dataset. Categories unseen in training map to an
    /// all-zeros one-hot block.
    pub fn apply(&self, raw: &RawDataset) -> Result<Dataset, DataError> {
        let n = raw.n();
        let d = self.output_dim();
        let mut features = Array2::<f64>::zeros((n, d));
        let mut slot = 0usize;
        for (col_idx, fitted) in self.fitted.iter().enumerate() {
            match (fitted, &raw.columns[col_idx]) {
                (FittedColumn::Numeric { mean, std, .. }, RawColumn::Numeric(values)) => {
                    for (r, v) in values.iter().enumerate() {
                        features[(r, slot)] = (v - mean) / std;
                    }
                    slot += 1;
                }
                (FittedColumn::Categorical { categories, .. }, RawColumn::Categorical(values)) => {
                    let index: BTreeMap<&str, usize> = categories
                        .iter()
                        .enumerate()
                        .map(|(i, c)| (c.as_str(), i))
                        .collect();
                    for (r, v) in values.iter().enumerate() {
                        if let Some(&j) = index.get(v.as_str()) {
                            features[(r, slot + j)] = 1.0;
                        }
                    }
                    slot += categories.len();
                }
                (fitted, _) => {
                    let name = match fitted {
                        FittedColumn::Numeric { name, .. } => name,
                        FittedColumn::Categorical { name, .. } => name,
                    };
                    return Err(DataError::SchemaMismatch {
                        row: 0,
                        column: name.clone(),
                        detail: "column kind differs from the fitted schema".into(),
                    });
                }
            }
        }
        if self.add_bias {
            features.column_mut(d - 1).fill(1.0);
        }
        Dataset::new(features, raw.labels.clone(), self.feature_names())
    }

    /// Recover the raw numeric columns (schema order) from a standardized
    /// dataset. One-hot and bias columns are not invertible and are skipped.
    pub fn inverse_numeric(&self, ds: &Dataset) -> Array2<f64> {
        let numeric: Vec<(usize, f64, f64)> = {
            let mut out = Vec::new();
            let mut slot = 0usize;
            for col in &self.fitted {
                match col {
                    FittedColumn::Numeric { mean, std, .. } => {
                        out.push((slot, *mean, *std));
                        slot += 1;
                    }
                    FittedColumn::Categorical { categories, .. } => slot += categories.len(),
                }
            }
            out
        };
        let mut raw = Array2::<f64>::zeros((ds.n(), numeric.len()));
        for (k, (slot, mean, std)) in numeric.iter().enumerate() {
            for r in 0..ds.n() {
                raw[(r, k)] = ds.features()[(r, *slot)] * std + mean;
            }
        }
        raw
    }
}

/// Fit a preprocessor on `train` and standardize `train` plus each of
/// `others` with it.
pub fn fit_apply_preprocess(
    train: &RawDataset,
    others: &[&RawDataset],
    add_bias: bool,
) -> Result<(Preprocessor, Dataset, Vec<Dataset>), DataError> {
    let prep = Preprocessor::fit(train, add_bias)?;
    let train_std = prep.apply(train)?;
    let others_std = others
        .iter()
        .map(|raw| prep.apply(raw))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((prep, train_std, others_std))
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// Fractions and seed defining a train/val/test partition.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// The 70/10/20 default split.
    pub fn default_with_seed(seed: u64) -> Self {
        Self {
            train_fraction: 0.7,
            val_fraction: 0.1,
            test_fraction: 0.2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let fr = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fr.iter().any(|f| !(f > &0.0 && f < &1.0)) {
            return Err(DataError::InvalidFractions {
                detail: format!("each fraction must lie in (0,1), got {fr:?}"),
            });
        }
        let sum: f64 = fr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidFractions {
                detail: format!("fractions sum to {sum}, expected 1"),
            });
        }
        Ok(())
    }
}

/// Shuffle `0..n` deterministically and cut it into the three index blocks.
/// Sizes are `⌊train·n⌋`, `⌊val·n⌋`, and the remainder.
pub fn split_indices(
    n: usize,
    spec: &SplitSpec,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>), DataError> {
    spec.validate()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(spec.seed));
    let n_train = (spec.train_fraction * n as f64).floor() as usize;
    let n_val = (spec.val_fraction * n as f64).floor() as usize;
    let n_test = n - n_train - n_val;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(DataError::DegenerateSplit {
            detail: format!("split sizes ({n_train}, {n_val}, {n_test}) must all be nonzero"),
        });
    }
    let val_end = n_train + n_val;
    Ok((
        order[..n_train].to_vec(),
        order[n_train..val_end].to_vec(),
        order[val_end..].to_vec(),
    ))
}

/// Split a standardized dataset. Fails if the training block is single-class.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset), DataError> {
    let (tr, va, te) = split_indices(ds.n(), spec)?;
    let train = ds.subset(&tr);
    if !train.has_both_classes() {
        return Err(DataError::DegenerateSplit {
            detail: "training split contains a single class".into(),
        });
    }
    Ok((train, ds.subset(&va), ds.subset(&te)))
}

/// Split a raw dataset (before preprocessing).
pub fn split_raw(
    raw: &RawDataset,
    spec: &SplitSpec,
) -> Result<(RawDataset, RawDataset, RawDataset), DataError> {
    let (tr, va, te) = split_indices(raw.n(), spec)?;
    let train = raw.subset(&tr);
    if !(train.labels.iter().any(|&y| y == 1) && train.labels.iter().any(|&y| y == -1)) {
        return Err(DataError::DegenerateSplit {
            detail: "training split contains a single class".into(),
        });
    }
    Ok((train, raw.subset(&va), raw.subset(&te)))
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Two spherical Gaussians at ±(separation/2)·e₁, one per class, `n_per_class`
/// rows each (class +1 block first). Already standardized by construction.
pub fn make_synthetic_gaussians(
    n_per_class: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> Dataset {
    assert!(n_per_class >= 1 && d >= 1 && separation >= 0.0);
    let shift = separation / 2.0;
    let mut rng = rng::seeded(seed);
    let n = 2 * n_per_class;
    let mut features = Array2::<f64>::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for r in 0..n {
        let sign = if r < n_per_class { 1.0 } else { -1.0 };
        for c in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            features[(r, c)] = z + if c == 0 { sign * shift } else { 0.0 };
        }
        labels.push(if r < n_per_class { 1 } else { -1 });
    }
    let names = (0..d).map(|c| format!("x{c}")).collect();
    Dataset::new(features, labels, names).expect("synthetic data is finite by construction")
}

// ---------------------------------------------------------------------------
// Standardized CSV persistence
// ---------------------------------------------------------------------------

/// Write a standardized dataset as CSV: feature columns then a `label`
/// column holding `1`/`-1`.
pub fn write_standardized_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header: Vec<&str> = ds.feature_names().iter().map(|s| s.as_str()).collect();
        header.push("label");
        w.write_record(&header)?;
        for i in 0..ds.n() {
            let mut record: Vec<String> = ds.x(i).iter().map(|v| format!("{v}")).collect();
            record.push(ds.y(i).to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
    }
    crate::ioutil::atomic_write(path.as_ref(), &buf)?;
    Ok(())
}

/// Read a dataset previously written by [`write_standardized_csv`].
pub fn read_standardized_csv(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(DataError::MissingFile {
            path: path.display().to_string(),
        });
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 2 || &headers[headers.len() - 1] != "label" {
        return Err(DataError::SchemaMismatch {
            row: 0,
            column: "label".into(),
            detail: "last column of a standardized CSV must be 'label'".into(),
        });
    }
    let d = headers.len() - 1;
    let names: Vec<String> = headers.iter().take(d).map(|s| s.to_string()).collect();
    let mut rows: Vec<f64> = Vec::new();
    let mut labels: Vec<i8> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_idx + 1;
        for c in 0..d {
            let v: f64 = record[c].trim().parse().map_err(|_| DataError::SchemaMismatch {
                row,
                column: names[c].clone(),
                detail: format!("cell '{}' is not numeric", &record[c]),
            })?;
            rows.push(v);
        }
        let y = match record[d].trim() {
            "1" | "+1" => 1,
            "-1" => -1,
            other => {
                return Err(DataError::SchemaMismatch {
                    row,
                    column: "label".into(),
                    detail: format!("label '{other}' is not ±1"),
                })
            }
        };
        labels.push(y);
    }
    let n = labels.len();
    let features = Array1::from_vec(rows)
        .into_shape_with_order((n, d))
        .map_err(|e| DataError::Construction {
            detail: e.to_string(),
        })?;
    Dataset::new(features, labels, names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy_schema() -> Schema {
        Schema::new(
            vec![
                ("age".into(), ColumnKind::Numeric),
                ("job".into(), ColumnKind::Categorical),
            ],
            "ok",
            "yes",
        )
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_csv_maps_labels_by_positive_value() {
        let f = write_temp("age,job,ok\n30,clerk,yes\n40,none,no\n50,clerk,no\n");
        let (raw, dropped) = load_csv(f.path(), &toy_schema()).unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(raw.labels, vec![1, -1, -1]);
        assert_eq!(raw.n(), 3);
    }

    #[test]
    fn load_csv_reports_bad_numeric_cell() {
        let f = write_temp("age,job,ok\n30,clerk,yes\nforty,none,no\n");
        let err = load_csv(f.path(), &toy_schema()).unwrap_err();
        match err {
            DataError::SchemaMismatch { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "age");
            }
            other => panic!("expected SchemaMismatch, got {other}"),
        }
    }

    #[test]
    fn load_csv_drops_missing_rows_and_counts() {
        let f = write_temp("age,job,ok\n30,clerk,yes\n?,none,no\n50,,no\n60,clerk,no\n");
        let (raw, dropped) = load_csv(f.path(), &toy_schema()).unwrap();
        assert_eq!(dropped, 2);
        assert_eq!(raw.n(), 2);
    }

    #[test]
    fn load_csv_missing_file() {
        let err = load_csv("/no/such/file.csv", &toy_schema()).unwrap_err();
        assert!(matches!(err, DataError::MissingFile { .. }));
    }

    #[test]
    fn load_csv_single_class_is_degenerate() {
        let f = write_temp("age,job,ok\n30,clerk,yes\n40,none,yes\n");
        let err = load_csv(f.path(), &toy_schema()).unwrap_err();
        assert!(matches!(err, DataError::DegenerateLabels { .. }));
    }

    #[test]
    fn zscore_of_symmetric_triple() {
        let f = write_temp("age,job,ok\n1,a,yes\n2,a,no\n3,a,yes\n");
        let (raw, _) = load_csv(f.path(), &toy_schema()).unwrap();
        let (_, train, _) = fit_apply_preprocess(&raw, &[], false).unwrap();
        let expected = (1.5f64).sqrt(); // z-score of {1,2,3} endpoints
        assert_abs_diff_eq!(train.features()[(0, 0)], -expected, epsilon = 1e-9);
        assert_abs_diff_eq!(train.features()[(1, 0)], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(train.features()[(2, 0)], expected, epsilon = 1e-9);
    }

    #[test]
    fn constant_column_standardizes_to_zeros() {
        let f = write_temp("age,job,ok\n5,a,yes\n5,b,no\n");
        let (raw, _) = load_csv(f.path(), &toy_schema()).unwrap();
        let (_, train, _) = fit_apply_preprocess(&raw, &[], false).unwrap();
        assert_eq!(train.features()[(0, 0)], 0.0);
        assert_eq!(train.features()[(1, 0)], 0.0);
    }

    #[test]
    fn unseen_category_encodes_to_zero_block() {
        let tr = write_temp("age,job,ok\n1,a,yes\n2,b,no\n");
        let te = write_temp("age,job,ok\n3,c,yes\n4,a,no\n");
        let (raw_tr, _) = load_csv(tr.path(), &toy_schema()).unwrap();
        let (raw_te, _) = load_csv(te.path(), &toy_schema()).unwrap();
        let (_, _, others) = fit_apply_preprocess(&raw_tr, &[&raw_te], false).unwrap();
        let test = &others[0];
        // columns: age, job=a, job=b
        assert_eq!(test.d(), 3);
        assert_eq!(test.features()[(0, 1)], 0.0);
        assert_eq!(test.features()[(0, 2)], 0.0);
        assert_eq!(test.features()[(1, 1)], 1.0);
    }

    #[test]
    fn one_hot_blocks_sum_to_one_iff_seen() {
        let tr = write_temp("age,job,ok\n1,a,yes\n2,b,no\n3,a,yes\n");
        let te = write_temp("age,job,ok\n9,zzz,no\n8,b,yes\n");
        let (raw_tr, _) = load_csv(tr.path(), &toy_schema()).unwrap();
        let (raw_te, _) = load_csv(te.path(), &toy_schema()).unwrap();
        let (_, train, others) = fit_apply_preprocess(&raw_tr, &[&raw_te], true).unwrap();
        for i in 0..train.n() {
            let block: f64 = train.features()[(i, 1)] + train.features()[(i, 2)];
            assert_eq!(block, 1.0);
        }
        let test = &others[0];
        assert_eq!(test.features()[(0, 1)] + test.features()[(0, 2)], 0.0);
        assert_eq!(test.features()[(1, 1)] + test.features()[(1, 2)], 1.0);
        // bias column present and constant
        assert!(train.feature_names().last().unwrap() == "bias");
        assert!((0..train.n()).all(|i| train.features()[(i, 3)] == 1.0));
    }

    #[test]
    fn inverse_transform_recovers_numerics() {
        let f = write_temp("age,job,ok\n1.5,a,yes\n-2.25,b,no\n7,a,yes\n");
        let (raw, _) = load_csv(f.path(), &toy_schema()).unwrap();
        let (prep, train, _) = fit_apply_preprocess(&raw, &[], true).unwrap();
        let rec = prep.inverse_numeric(&train);
        let orig = match &raw.columns[0] {
            RawColumn::Numeric(v) => v.clone(),
            _ => unreachable!(),
        };
        for (i, o) in orig.iter().enumerate() {
            assert_abs_diff_eq!(rec[(i, 0)], *o, epsilon = 1e-9);
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = make_synthetic_gaussians(5, 2, 2.0, 11);
        let spec = SplitSpec {
            train_fraction: 0.6,
            val_fraction: 0.2,
            test_fraction: 0.2,
            seed: 7,
        };
        let (a_tr, a_va, a_te) = split(&ds, &spec).unwrap();
        assert_eq!((a_tr.n(), a_va.n(), a_te.n()), (6, 2, 2));
        let (b_tr, _, _) = split(&ds, &spec).unwrap();
        assert_eq!(a_tr.features(), b_tr.features());
        assert_eq!(a_tr.labels(), b_tr.labels());
    }

    #[test]
    fn split_rejects_empty_block() {
        let ds = make_synthetic_gaussians(2, 1, 1.0, 0); // n=4... need n=3
        let spec = SplitSpec {
            train_fraction: 0.98,
            val_fraction: 0.01,
            test_fraction: 0.01,
            seed: 1,
        };
        let err = split(&ds.subset(&[0, 1, 3]), &spec).unwrap_err();
        assert!(matches!(err, DataError::DegenerateSplit { .. }));
    }

    #[test]
    fn synthetic_is_deterministic_and_centered() {
        let a = make_synthetic_gaussians(20, 3, 4.0, 1);
        let b = make_synthetic_gaussians(20, 3, 4.0, 1);
        assert_eq!(a.features(), b.features());
        // separation 0 keeps both class means at the origin
        let c = make_synthetic_gaussians(2000, 1, 0.0, 5);
        let mean: f64 = c.features().column(0).sum() / c.n() as f64;
        assert!(mean.abs() < 0.1, "overall mean {mean}");
    }

    #[test]
    fn standardized_csv_round_trip() {
        let ds = make_synthetic_gaussians(4, 3, 2.0, 9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        write_standardized_csv(&ds, &path).unwrap();
        let back = read_standardized_csv(&path).unwrap();
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.feature_names(), ds.feature_names());
        for (a, b) in back.features().iter().zip(ds.features().iter()) {
            assert_eq!(a, b, "shortest round-trip formatting must be exact");
        }
    }
}

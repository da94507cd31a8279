//! Covariate schemas, datasets and soft-labeled samples.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance on the unit-sum constraint of probability vectors.
pub const PROB_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    /// Ordered integer levels `0..levels`.
    Ordinal { levels: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
    /// Display names for ordinal levels, used by questionnaire front ends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_names: Option<Vec<String>>,
}

impl ColumnSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Continuous,
            level_names: None,
        }
    }

    pub fn ordinal(name: impl Into<String>, levels: usize) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Ordinal { levels },
            level_names: None,
        }
    }

    pub fn levels(&self) -> Option<usize> {
        match self.kind {
            ColumnKind::Continuous => None,
            ColumnKind::Ordinal { levels } => Some(levels),
        }
    }

    pub fn is_ordinal(&self) -> bool {
        matches!(self.kind, ColumnKind::Ordinal { .. })
    }
}

fn default_label_column() -> String {
    "label".to_string()
}

/// Column layout of the covariate space plus the response classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaWire")]
pub struct Schema {
    columns: Vec<ColumnSpec>,
    class_labels: Vec<String>,
    #[serde(default = "default_label_column")]
    label_column: String,
}

#[derive(Deserialize)]
struct SchemaWire {
    columns: Vec<ColumnSpec>,
    class_labels: Vec<String>,
    #[serde(default = "default_label_column")]
    label_column: String,
}

impl TryFrom<SchemaWire> for Schema {
    type Error = Error;

    fn try_from(w: SchemaWire) -> Result<Self> {
        Schema::with_label_column(w.columns, w.class_labels, w.label_column)
    }
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>, class_labels: Vec<String>) -> Result<Self> {
        Self::with_label_column(columns, class_labels, default_label_column())
    }

    pub fn with_label_column(
        columns: Vec<ColumnSpec>,
        class_labels: Vec<String>,
        label_column: String,
    ) -> Result<Self> {
        if class_labels.len() < 2 {
            return Err(Error::Schema(format!(
                "need at least 2 classes, got {}",
                class_labels.len()
            )));
        }
        if columns.is_empty() {
            return Err(Error::Schema("schema has no columns".into()));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name {:?}", c.name)));
            }
            if let ColumnKind::Ordinal { levels } = c.kind {
                if levels < 2 {
                    return Err(Error::Schema(format!(
                        "ordinal column {:?} declares {} level(s), need at least 2",
                        c.name, levels
                    )));
                }
                if let Some(names) = &c.level_names {
                    if names.len() != levels {
                        return Err(Error::Schema(format!(
                            "ordinal column {:?} has {} level names for {} levels",
                            c.name,
                            names.len(),
                            levels
                        )));
                    }
                }
            }
        }
        if seen.contains(label_column.as_str()) {
            return Err(Error::Schema(format!(
                "label column {label_column:?} collides with a covariate name"
            )));
        }
        Ok(Schema {
            columns,
            class_labels,
            label_column,
        })
    }

    /// `m` continuous columns named `x1..xm` with classes `0..k`.
    pub fn continuous(m: usize, k: usize) -> Result<Self> {
        let columns = (1..=m).map(|i| ColumnSpec::continuous(format!("x{i}"))).collect();
        let classes = (0..k).map(|i| i.to_string()).collect();
        Schema::new(columns, classes)
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn column(&self, idx: usize) -> Result<&ColumnSpec> {
        self.columns.get(idx).ok_or_else(|| {
            Error::Schema(format!(
                "column index {idx} out of range for {} columns",
                self.columns.len()
            ))
        })
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_labels.len()
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn label_column(&self) -> &str {
        &self.label_column
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        let hash = Sha256::digest(&bytes);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks that `x` is a row of this schema: right length, finite values,
    /// ordinal cells integral and in range.
    pub fn check_row<T: Scalar>(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Schema(format!(
                "row has {} values, schema has {} columns",
                x.len(),
                self.dim()
            )));
        }
        for (c, (v, spec)) in x.iter().zip(&self.columns).enumerate() {
            if !v.is_finite() {
                return Err(Error::Data(format!("column {c} ({}) is not finite", spec.name)));
            }
            if let ColumnKind::Ordinal { levels } = spec.kind {
                if v.fract() != T::zero() || *v < T::zero() || *v >= T::from_count(levels) {
                    return Err(Error::Data(format!(
                        "column {c} ({}) value {v} is not a level in 0..{levels}",
                        spec.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Matrix<T> {
    data: Vec<T>,
    ncols: usize,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(ncols: usize) -> Self {
        Matrix {
            data: Vec::new(),
            ncols,
        }
    }

    pub fn with_capacity(ncols: usize, rows: usize) -> Self {
        Matrix {
            data: Vec::with_capacity(ncols * rows),
            ncols,
        }
    }

    pub fn from_flat(ncols: usize, data: Vec<T>) -> Result<Self> {
        if ncols == 0 || !data.len().is_multiple_of(ncols) {
            return Err(Error::Data(format!(
                "{} values do not form rows of width {ncols}",
                data.len()
            )));
        }
        Ok(Matrix { data, ncols })
    }

    pub fn from_rows<R: AsRef<[T]>>(ncols: usize, rows: &[R]) -> Result<Self> {
        let mut m = Matrix::with_capacity(ncols, rows.len());
        for r in rows {
            m.push_row(r.as_ref())?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[T]) -> Result<()> {
        if row.len() != self.ncols {
            return Err(Error::Data(format!(
                "row of length {} pushed into matrix of width {}",
                row.len(),
                self.ncols
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn append(&mut self, other: &Matrix<T>) -> Result<()> {
        if other.ncols != self.ncols {
            return Err(Error::Data("matrix width mismatch".into()));
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.data.len().checked_div(self.ncols).unwrap_or(0)
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.ncols.max(1))
    }

    pub fn as_flat(&self) -> &[T] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<T> {
        self.data
    }

    /// Rows selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Matrix<T> {
        let mut m = Matrix::with_capacity(self.ncols, indices.len());
        for &i in indices {
            m.data.extend_from_slice(self.row(i));
        }
        m
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.rows().map(<[T]>::to_vec).collect()
    }
}

/// Original sample: covariates with optional hard labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Dataset<T> {
    schema: Schema,
    rows: Matrix<T>,
    labels: Option<Vec<usize>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(schema: Schema, rows: Matrix<T>, labels: Option<Vec<usize>>) -> Result<Self> {
        if rows.ncols() != schema.dim() {
            return Err(Error::Schema(format!(
                "data has {} columns, schema has {}",
                rows.ncols(),
                schema.dim()
            )));
        }
        for (i, r) in rows.rows().enumerate() {
            schema
                .check_row(r)
                .map_err(|e| Error::Data(format!("row {i}: {e}")))?;
        }
        if let Some(l) = &labels {
            if l.len() != rows.nrows() {
                return Err(Error::Data(format!(
                    "{} labels for {} rows",
                    l.len(),
                    rows.nrows()
                )));
            }
            let k = schema.class_count();
            if let Some((i, bad)) = l.iter().enumerate().find(|(_, &y)| y >= k) {
                return Err(Error::Data(format!("row {i}: label {bad} outside 0..{k}")));
            }
        }
        Ok(Dataset {
            schema,
            rows,
            labels,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &Matrix<T> {
        &self.rows
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// A pseudo covariate row with the oracle's class-probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SoftLabeledSample<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
}

impl<T: Scalar> SoftLabeledSample<T> {
    pub fn new(x: Vec<T>, y: Vec<T>) -> Result<Self> {
        check_probs(&y)?;
        Ok(SoftLabeledSample { x, y })
    }
}

pub fn check_probs<T: Scalar>(y: &[T]) -> Result<()> {
    let mut sum = 0.0;
    for v in y {
        let v = v.to_f64_lossy();
        if !(v >= 0.0) {
            return Err(Error::Domain(format!("negative or NaN probability {v}")));
        }
        sum += v;
    }
    // single precision cannot hold the f64 tolerance
    let tol = PROB_SUM_TOL.max(64.0 * T::epsilon().to_f64_lossy());
    if (sum - 1.0).abs() > tol {
        return Err(Error::Domain(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

/// Column-oriented pseudo sample: covariates and soft labels side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch<T> {
    pub x: Matrix<T>,
    pub y: Matrix<T>,
}

impl<T: Scalar> SampleBatch<T> {
    pub fn new(x: Matrix<T>, y: Matrix<T>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::Data(format!(
                "{} covariate rows vs {} label rows",
                x.nrows(),
                y.nrows()
            )));
        }
        Ok(SampleBatch { x, y })
    }

    pub fn empty(dim: usize, classes: usize) -> Self {
        SampleBatch {
            x: Matrix::new(dim),
            y: Matrix::new(classes),
        }
    }

    pub fn from_samples(samples: &[SoftLabeledSample<T>]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Data("no samples".into()))?;
        let mut x = Matrix::with_capacity(first.x.len(), samples.len());
        let mut y = Matrix::with_capacity(first.y.len(), samples.len());
        for s in samples {
            x.push_row(&s.x)?;
            y.push_row(&s.y)?;
        }
        Ok(SampleBatch { x, y })
    }

    pub fn append(&mut self, other: &SampleBatch<T>) -> Result<()> {
        self.x.append(&other.x)?;
        self.y.append(&other.y)
    }

    pub fn to_samples(&self) -> Vec<SoftLabeledSample<T>> {
        self.x
            .rows()
            .zip(self.y.rows())
            .map(|(x, y)| SoftLabeledSample {
                x: x.to_vec(),
                y: y.to_vec(),
            })
            .collect()
    }

    /// Mean soft label over the batch.
    pub fn mean_label(&self) -> Vec<T> {
        let k = self.y.ncols();
        let mut acc = vec![T::zero(); k];
        for row in self.y.rows() {
            for (a, v) in acc.iter_mut().zip(row) {
                *a = *a + *v;
            }
        }
        let n = T::from_count(self.y.nrows().max(1));
        acc.into_iter().map(|a| a / n).collect()
    }

    /// Replace every soft label with the one-hot vector of its argmax.
    pub fn harden(&mut self) {
        let k = self.y.ncols();
        let mut flat = std::mem::replace(&mut self.y, Matrix::new(k)).into_flat();
        for row in flat.chunks_exact_mut(k) {
            let j = crate::scalar::argmax(row);
            for (c, v) in row.iter_mut().enumerate() {
                *v = if c == j { T::one() } else { T::zero() };
            }
        }
        self.y = Matrix::from_flat(k, flat).expect("shape preserved");
    }
}

/// Read access to labeled samples regardless of storage layout.
pub trait SampleView<T: Scalar> {
    fn len(&self) -> usize;
    fn x(&self, i: usize) -> &[T];
    fn y(&self, i: usize) -> &[T];

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn class_count(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            self.y(0).len()
        }
    }
}

impl<T: Scalar> SampleView<T> for SampleBatch<T> {
    fn len(&self) -> usize {
        self.x.nrows()
    }
    fn x(&self, i: usize) -> &[T] {
        self.x.row(i)
    }
    fn y(&self, i: usize) -> &[T] {
        self.y.row(i)
    }
    fn class_count(&self) -> usize {
        self.y.ncols()
    }
}

impl<T: Scalar> SampleView<T> for [SoftLabeledSample<T>] {
    fn len(&self) -> usize {
        <[SoftLabeledSample<T>]>::len(self)
    }
    fn x(&self, i: usize) -> &[T] {
        &self[i].x
    }
    fn y(&self, i: usize) -> &[T] {
        &self[i].y
    }
}

impl<T: Scalar> SampleView<T> for Vec<SoftLabeledSample<T>> {
    fn len(&self) -> usize {
        <[SoftLabeledSample<T>]>::len(self)
    }
    fn x(&self, i: usize) -> &[T] {
        &self[i].x
    }
    fn y(&self, i: usize) -> &[T] {
        &self[i].y
    }
}

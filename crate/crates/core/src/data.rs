//! Sparse labeled datasets and data-dependent constants.
//!
//! Datasets are read from LIBSVM text (`<label> <idx>:<val> ...`, 1-based
//! indices) and stored with 0-based indices. A dataset is immutable after
//! construction and safe to share across concurrent solver runs.

use std::fmt::Write as _;
use std::io::BufRead;

use thiserror::Error;

use crate::problem::DenseVector;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("empty input: no data rows")]
    EmptyInput,
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One sparse feature vector, stored as parallel index/value lists.
///
/// Indices are 0-based and strictly increasing; zero values are never
/// stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRow {
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Result<Self, DataError> {
        if indices.len() != values.len() {
            return Err(DataError::Invalid(format!(
                "index/value length mismatch: {} vs {}",
                indices.len(),
                values.len()
            )));
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(DataError::Invalid(
                "row indices must be strictly increasing".into(),
            ));
        }
        if values.contains(&0.0) {
            return Err(DataError::Invalid("explicit zero value in row".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Invalid("non-finite value in row".into()));
        }
        Ok(Self { indices, values })
    }

    pub fn empty() -> Self {
        Self {
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Largest stored index, if any.
    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().copied()
    }

    /// Squared Euclidean norm of the row.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Sparse-dense inner product. Panics if an index is out of range
    /// for `x`.
    pub fn dot(&self, x: &DenseVector) -> f64 {
        let xs = x.as_slice();
        self.iter().map(|(j, v)| v * xs[j]).sum()
    }

    /// `y += c * row`. Panics if an index is out of range for `y`.
    pub fn add_scaled_into(&self, c: f64, y: &mut DenseVector) {
        let ys = y.as_mut_slice();
        for (j, v) in self.iter() {
            ys[j] += c * v;
        }
    }
}

/// A set of n sparse feature vectors with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<SparseRow>,
    labels: Vec<f64>,
    dim: usize,
}

impl Dataset {
    pub fn new(rows: Vec<SparseRow>, labels: Vec<f64>, dim: usize) -> Result<Self, DataError> {
        if rows.is_empty() {
            return Err(DataError::Invalid("dataset must have at least one row".into()));
        }
        if rows.len() != labels.len() {
            return Err(DataError::Invalid(format!(
                "row/label count mismatch: {} vs {}",
                rows.len(),
                labels.len()
            )));
        }
        if dim == 0 {
            return Err(DataError::Invalid("dimension must be at least 1".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if let Some(mx) = r.max_index() {
                if mx >= dim {
                    return Err(DataError::Invalid(format!(
                        "row {i} has index {mx} >= dim {dim}"
                    )));
                }
            }
        }
        if labels.iter().any(|l| !l.is_finite()) {
            return Err(DataError::Invalid("non-finite label".into()));
        }
        Ok(Self { rows, labels, dim })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &SparseRow {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// True when every label is exactly +1 or -1 (classification data).
    pub fn labels_are_signs(&self) -> bool {
        self.labels.iter().all(|&l| l == 1.0 || l == -1.0)
    }
}

/// Parse LIBSVM text. Indices in the input are 1-based and strictly
/// increasing per line; they are converted to 0-based on the way in.
/// Explicitly written zero values are dropped. Duplicate indices within a
/// line are rejected rather than summed.
///
/// Without `dim_override` the dimension is the largest observed 1-based
/// index (at least 1). With an override, any index beyond it is an error;
/// this lets a train split align with a test split that has trailing
/// features the other lacks.
pub fn parse_libsvm(reader: impl BufRead, dim_override: Option<usize>) -> Result<Dataset, DataError> {
    if let Some(d) = dim_override {
        if d == 0 {
            return Err(DataError::Invalid("dimension override must be >= 1".into()));
        }
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut max_index_1b = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let mut tokens = line.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue; // blank line
        };
        let label: f64 = label_tok.parse().map_err(|_| DataError::Parse {
            line: lineno,
            msg: format!("bad label `{label_tok}`"),
        })?;
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut prev_1b = 0usize;
        for tok in tokens {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| DataError::Parse {
                line: lineno,
                msg: format!("expected `<idx>:<val>`, got `{tok}`"),
            })?;
            let idx_1b: usize = idx_s.parse().map_err(|_| DataError::Parse {
                line: lineno,
                msg: format!("bad index `{idx_s}`"),
            })?;
            let val: f64 = val_s.parse().map_err(|_| DataError::Parse {
                line: lineno,
                msg: format!("bad value `{val_s}`"),
            })?;
            if idx_1b == 0 {
                return Err(DataError::Parse {
                    line: lineno,
                    msg: "indices are 1-based; got 0".into(),
                });
            }
            if idx_1b <= prev_1b {
                return Err(DataError::Parse {
                    line: lineno,
                    msg: format!("indices must be strictly increasing; got {idx_1b} after {prev_1b}"),
                });
            }
            prev_1b = idx_1b;
            if let Some(d) = dim_override {
                if idx_1b > d {
                    return Err(DataError::Parse {
                        line: lineno,
                        msg: format!("index {idx_1b} exceeds dimension override {d}"),
                    });
                }
            }
            max_index_1b = max_index_1b.max(idx_1b);
            if val != 0.0 {
                indices.push(idx_1b - 1);
                values.push(val);
            }
        }
        rows.push(SparseRow::new(indices, values)?);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(DataError::EmptyInput);
    }
    let dim = dim_override.unwrap_or_else(|| max_index_1b.max(1));
    Dataset::new(rows, labels, dim)
}

/// Serialize back to LIBSVM text (1-based indices). Round-trips through
/// [`parse_libsvm`] to an identical dataset when the dimension is passed
/// back as an override.
pub fn write_libsvm(ds: &Dataset, out: &mut impl std::io::Write) -> std::io::Result<()> {
    let mut line = String::new();
    for i in 0..ds.n() {
        line.clear();
        write!(line, "{}", ds.label(i)).unwrap();
        for (j, v) in ds.row(i).iter() {
            write!(line, " {}:{}", j + 1, v).unwrap();
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// `max_i ||a_i||^2`, the largest squared row norm; 0 when every row is
/// empty. This is the data half of the smoothness constants.
pub fn max_row_norm_sq(ds: &Dataset) -> f64 {
    ds.rows().iter().map(SparseRow::norm_sq).fold(0.0, f64::max)
}

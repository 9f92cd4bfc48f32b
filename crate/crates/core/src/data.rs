//! Labeled datasets with categorical protected attributes.
//!
//! A dataset holds an n x d feature matrix, binary labels, and one or more
//! protected attribute columns encoded as group indices. Protected attributes
//! are kept out of the feature matrix unless the schema opts them in, so a
//! classifier never sees them by accident.

use std::io::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<bool>,
    /// One column per protected attribute; values index into that
    /// attribute's groups.
    protected: Vec<Vec<usize>>,
    /// Number of groups per attribute (fixed by schema, not by the sample).
    group_sizes: Vec<usize>,
    /// Per-attribute sample counts by group.
    group_counts: Vec<Vec<usize>>,
}

impl LabeledDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<bool>,
        protected: Vec<Vec<usize>>,
        group_sizes: Vec<usize>,
    ) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: labels.len(),
            });
        }
        if protected.len() != group_sizes.len() {
            return Err(Error::LengthMismatch {
                left: protected.len(),
                right: group_sizes.len(),
            });
        }
        for (attribute, (column, &p)) in protected.iter().zip(&group_sizes).enumerate() {
            if p < 2 {
                return Err(Error::invalid(
                    "group_sizes",
                    format!("attribute {attribute} has {p} groups, need at least 2"),
                ));
            }
            if column.len() != n {
                return Err(Error::LengthMismatch {
                    left: n,
                    right: column.len(),
                });
            }
            for (row, &value) in column.iter().enumerate() {
                if value >= p {
                    return Err(Error::GroupRange {
                        attribute,
                        row,
                        value,
                        groups: p,
                    });
                }
            }
        }
        let group_counts = protected
            .iter()
            .zip(&group_sizes)
            .map(|(column, &p)| {
                let mut counts = vec![0usize; p];
                for &v in column {
                    counts[v] += 1;
                }
                counts
            })
            .collect();
        Ok(Self {
            features,
            labels,
            protected,
            group_sizes,
            group_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    /// Labels as 0/1 floats, in sample order.
    pub fn labels_f64(&self) -> Array1<f64> {
        Array1::from_iter(self.labels.iter().map(|&y| if y { 1.0 } else { 0.0 }))
    }

    pub fn attribute_count(&self) -> usize {
        self.protected.len()
    }

    pub fn group_count(&self, attribute: usize) -> Result<usize> {
        self.check_attribute(attribute)?;
        Ok(self.group_sizes[attribute])
    }

    pub fn protected_values(&self, attribute: usize) -> Result<&[usize]> {
        self.check_attribute(attribute)?;
        Ok(&self.protected[attribute])
    }

    pub fn group_counts(&self, attribute: usize) -> Result<&[usize]> {
        self.check_attribute(attribute)?;
        Ok(&self.group_counts[attribute])
    }

    fn check_attribute(&self, attribute: usize) -> Result<()> {
        if attribute >= self.protected.len() {
            return Err(Error::AttributeOutOfRange {
                index: attribute,
                count: self.protected.len(),
            });
        }
        Ok(())
    }

    /// Copy with one protected attribute column replaced.
    pub fn with_protected(&self, attribute: usize, values: Vec<usize>) -> Result<Self> {
        self.check_attribute(attribute)?;
        let mut protected = self.protected.clone();
        protected[attribute] = values;
        Self::new(
            self.features.clone(),
            self.labels.clone(),
            protected,
            self.group_sizes.clone(),
        )
    }

    /// Row subset in the given order. Indices must be in range.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Array2::<f64>::zeros((indices.len(), self.dim()));
        let mut labels = Vec::with_capacity(indices.len());
        for (out_row, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(Error::invalid(
                    "indices",
                    format!("row {i} out of range for dataset of {}", self.len()),
                ));
            }
            features.row_mut(out_row).assign(&self.features.row(i));
            labels.push(self.labels[i]);
        }
        let protected = self
            .protected
            .iter()
            .map(|column| indices.iter().map(|&i| column[i]).collect())
            .collect();
        Self::new(features, labels, protected, self.group_sizes.clone())
    }
}

/// Shuffles sample indices with a seeded generator and splits the dataset so
/// the first `floor(n * fraction)` shuffled rows form the training side.
pub fn split(
    dataset: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(
            "fraction",
            format!("{fraction} outside [0,1]"),
        ));
    }
    let n = dataset.len();
    let n_train = (n as f64 * fraction).floor() as usize;
    let n_test = n - n_train;
    if n_train == 0 || n_test == 0 {
        return Err(Error::EmptySplit {
            train: n_train,
            test: n_test,
        });
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    let train = dataset.subset(&indices[..n_train])?;
    let test = dataset.subset(&indices[n_train..])?;
    Ok((train, test))
}

/// One categorical protected column: category strings map to group indices
/// by position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtectedColumn {
    pub name: String,
    pub categories: Vec<String>,
}

/// Column layout for CSV ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub feature_columns: Vec<String>,
    pub protected_columns: Vec<ProtectedColumn>,
    pub label_column: String,
    /// Label cell equal to this string means a positive label.
    pub positive_label: String,
    /// Prepend a constant-one feature column.
    #[serde(default = "default_true")]
    pub add_intercept: bool,
    /// Also expose protected group indices as numeric features. Off by
    /// default so the classifier cannot read the attribute directly.
    #[serde(default)]
    pub include_protected_features: bool,
}

fn default_true() -> bool {
    true
}

impl DatasetSchema {
    fn validate(&self) -> Result<()> {
        if self.feature_columns.is_empty() && !self.include_protected_features {
            return Err(Error::invalid("feature_columns", "no feature columns"));
        }
        if self.protected_columns.is_empty() {
            return Err(Error::invalid("protected_columns", "none declared"));
        }
        for column in &self.protected_columns {
            if column.categories.len() < 2 {
                return Err(Error::invalid(
                    "protected_columns",
                    format!("column {:?} needs at least 2 categories", column.name),
                ));
            }
        }
        Ok(())
    }
}

/// Loads a headered CSV file according to the schema. Rows are rejected,
/// with their 1-based data row number, on any unparsable field or unknown
/// category.
pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<LabeledDataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let column_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                name: name.to_string(),
            })
    };

    let feature_idx: Vec<usize> = schema
        .feature_columns
        .iter()
        .map(|c| column_index(c))
        .collect::<Result<_>>()?;
    let protected_idx: Vec<usize> = schema
        .protected_columns
        .iter()
        .map(|c| column_index(&c.name))
        .collect::<Result<_>>()?;
    let label_idx = column_index(&schema.label_column)?;

    let dim = usize::from(schema.add_intercept)
        + feature_idx.len()
        + if schema.include_protected_features {
            protected_idx.len()
        } else {
            0
        };

    let mut rows = Vec::<f64>::new();
    let mut labels = Vec::<bool>::new();
    let mut protected: Vec<Vec<usize>> = vec![Vec::new(); protected_idx.len()];

    for (row_number, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_number + 1;
        if schema.add_intercept {
            rows.push(1.0);
        }
        for (&idx, name) in feature_idx.iter().zip(&schema.feature_columns) {
            let cell = record.get(idx).unwrap_or("");
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: name.clone(),
                message: format!("cannot parse {cell:?} as a number"),
            })?;
            rows.push(value);
        }
        let mut group_values = Vec::with_capacity(protected_idx.len());
        for (&idx, column) in protected_idx.iter().zip(&schema.protected_columns) {
            let cell = record.get(idx).unwrap_or("");
            let group = column
                .categories
                .iter()
                .position(|c| c == cell)
                .ok_or_else(|| Error::UnknownCategory {
                    row,
                    column: column.name.clone(),
                    value: cell.to_string(),
                })?;
            group_values.push(group);
        }
        if schema.include_protected_features {
            for &g in &group_values {
                rows.push(g as f64);
            }
        }
        for (store, g) in protected.iter_mut().zip(group_values) {
            store.push(g);
        }
        labels.push(record.get(label_idx).unwrap_or("") == schema.positive_label);
    }

    let n = labels.len();
    let features = Array2::from_shape_vec((n, dim), rows)
        .map_err(|e| Error::Config(format!("feature matrix shape: {e}")))?;
    let group_sizes = schema
        .protected_columns
        .iter()
        .map(|c| c.categories.len())
        .collect();
    LabeledDataset::new(features, labels, protected, group_sizes)
}

/// Writes a dataset back to CSV under the same schema conventions that
/// `load_csv` reads, so a written file round-trips.
pub fn write_csv(path: &Path, dataset: &LabeledDataset, schema: &DatasetSchema) -> Result<()> {
    schema.validate()?;
    if schema.protected_columns.len() != dataset.attribute_count() {
        return Err(Error::LengthMismatch {
            left: schema.protected_columns.len(),
            right: dataset.attribute_count(),
        });
    }
    let offset = usize::from(schema.add_intercept);
    if offset + schema.feature_columns.len() > dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: offset + schema.feature_columns.len(),
            got: dataset.dim(),
        });
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header: Vec<&str> = schema.feature_columns.iter().map(|s| s.as_str()).collect();
    for column in &schema.protected_columns {
        header.push(&column.name);
    }
    header.push(&schema.label_column);
    writeln!(out, "{}", header.join(","))?;
    for i in 0..dataset.len() {
        let mut cells: Vec<String> = (0..schema.feature_columns.len())
            .map(|j| format_cell(dataset.features()[[i, offset + j]]))
            .collect();
        for (a, column) in schema.protected_columns.iter().enumerate() {
            let g = dataset.protected_values(a)?[i];
            cells.push(column.categories[g].clone());
        }
        cells.push(if dataset.labels()[i] {
            schema.positive_label.clone()
        } else {
            negative_label(&schema.positive_label)
        });
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

fn format_cell(v: f64) -> String {
    // Shortest round-trippable form keeps files reproducible byte for byte.
    let mut buffer = ryu_format(v);
    if buffer.ends_with(".0") {
        buffer.truncate(buffer.len() - 2);
    }
    buffer
}

fn ryu_format(v: f64) -> String {
    // serde_json already carries a shortest-float formatter; reuse it rather
    // than pulling another dependency.
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}

fn negative_label(positive: &str) -> String {
    if positive == "1" {
        "0".to_string()
    } else {
        format!("not_{positive}")
    }
}

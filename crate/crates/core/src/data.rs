//! Tabular data: CSV ingestion, column-major storage, categorical encoding
//! and train/test splitting.
//!
//! Categorical columns are read as labels and stored as category codes
//! (indices into [`FeatureMeta::categories`]) until [`encode_categoricals`]
//! or [`EncoderState::transform`] replaces them with smoothed target
//! statistics. The tree learner only ever sees encoded data.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub kind: FeatureKind,
    /// Category labels in order of first appearance. Empty for numeric features.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl FeatureMeta {
    pub fn numeric(name: impl Into<String>) -> Self {
        FeatureMeta {
            name: name.into(),
            kind: FeatureKind::Numeric,
            categories: Vec::new(),
        }
    }

    pub fn categorical(name: impl Into<String>, categories: Vec<String>) -> Self {
        FeatureMeta {
            name: name.into(),
            kind: FeatureKind::Categorical,
            categories,
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }
}

/// Column-major feature matrix with an aligned response and optional weights.
///
/// The response may be empty for feature-only data loaded for prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    response: Vec<f64>,
    meta: Vec<FeatureMeta>,
    weights: Option<Vec<f64>>,
    encoded: bool,
    n_rows: usize,
}

impl Dataset {
    /// Builds a dataset from numeric columns, validating every invariant.
    ///
    /// Categorical columns passed here are taken to hold category codes and
    /// the dataset is marked as not yet encoded.
    pub fn new(
        features: Vec<Vec<f64>>,
        response: Vec<f64>,
        meta: Vec<FeatureMeta>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let encoded = !meta.iter().any(FeatureMeta::is_categorical);
        Self::build(features, response, meta, weights, encoded)
    }

    /// Convenience constructor for all-numeric data.
    pub fn from_columns(
        names: &[&str],
        features: Vec<Vec<f64>>,
        response: Vec<f64>,
    ) -> Result<Self> {
        let meta = names.iter().map(|n| FeatureMeta::numeric(*n)).collect();
        Self::new(features, response, meta, None)
    }

    fn build(
        features: Vec<Vec<f64>>,
        response: Vec<f64>,
        meta: Vec<FeatureMeta>,
        weights: Option<Vec<f64>>,
        encoded: bool,
    ) -> Result<Self> {
        if features.len() != meta.len() {
            return Err(Error::InvalidData(format!(
                "{} feature columns but {} metadata entries",
                features.len(),
                meta.len()
            )));
        }
        let n_rows = features.first().map_or(response.len(), Vec::len);
        if n_rows == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut names = HashSet::new();
        for (col, m) in features.iter().zip(&meta) {
            if !names.insert(m.name.as_str()) {
                return Err(Error::InvalidData(format!(
                    "duplicate feature name `{}`",
                    m.name
                )));
            }
            if col.len() != n_rows {
                return Err(Error::InvalidData(format!(
                    "column `{}` has {} rows, expected {n_rows}",
                    m.name,
                    col.len()
                )));
            }
            if let Some(v) = col.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "column `{}` contains {v}",
                    m.name
                )));
            }
            if m.is_categorical() {
                let unique: HashSet<&String> = m.categories.iter().collect();
                if m.categories.is_empty() || unique.len() != m.categories.len() {
                    return Err(Error::InvalidData(format!(
                        "categorical column `{}` needs non-empty, duplicate-free categories",
                        m.name
                    )));
                }
            }
        }
        if !response.is_empty() && response.len() != n_rows {
            return Err(Error::InvalidData(format!(
                "response has {} rows, features have {n_rows}",
                response.len()
            )));
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(
                "response contains a non-finite value".into(),
            ));
        }
        if let Some(w) = &weights {
            if w.len() != n_rows {
                return Err(Error::InvalidData("weights are not row-aligned".into()));
            }
            if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidData(
                    "weights must be positive and finite".into(),
                ));
            }
        }
        Ok(Dataset {
            features,
            response,
            meta,
            weights,
            encoded,
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.features.len()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.features[j]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.iter().map(|c| c[i]).collect()
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn has_response(&self) -> bool {
        !self.response.is_empty()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn meta(&self) -> &[FeatureMeta] {
        &self.meta
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.meta.iter().map(|m| m.name.as_str()).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.meta.iter().position(|m| m.name == name)
    }

    /// True once every categorical column holds target statistics.
    pub fn is_encoded(&self) -> bool {
        self.encoded
    }

    /// Rows `rows` in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            features: self.features.iter().map(|c| pick(c)).collect(),
            response: if self.response.is_empty() {
                Vec::new()
            } else {
                pick(&self.response)
            },
            meta: self.meta.clone(),
            weights: self.weights.as_ref().map(|w| pick(w)),
            encoded: self.encoded,
            n_rows: rows.len(),
        }
    }

    /// Copy with column `j` replaced.
    pub fn with_column(&self, j: usize, values: Vec<f64>) -> Dataset {
        assert_eq!(
            values.len(),
            self.n_rows,
            "replacement column must be row-aligned"
        );
        let mut out = self.clone();
        out.features[j] = values;
        out
    }

    /// Copy with the response replaced.
    pub fn with_response(&self, response: Vec<f64>) -> Result<Dataset> {
        Self::build(
            self.features.clone(),
            response,
            self.meta.clone(),
            self.weights.clone(),
            self.encoded,
        )
    }

    /// Reorders columns to match `schema` by name. Extra columns are dropped;
    /// a missing column is an error naming it.
    pub fn align_to(&self, schema: &[FeatureMeta]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(schema.len());
        let mut meta = Vec::with_capacity(schema.len());
        for s in schema {
            let j = self
                .feature_index(&s.name)
                .ok_or_else(|| Error::MissingColumn(s.name.clone()))?;
            if self.meta[j].kind != s.kind {
                return Err(Error::InvalidData(format!(
                    "column `{}` kind differs from the model schema",
                    s.name
                )));
            }
            features.push(self.features[j].clone());
            meta.push(self.meta[j].clone());
        }
        let encoded = !meta.iter().any(FeatureMeta::is_categorical) || self.encoded;
        Self::build(
            features,
            self.response.clone(),
            meta,
            self.weights.clone(),
            encoded,
        )
    }

    /// Writes features and (if present) the response as a CSV with a header.
    /// Categorical columns are written as labels while still unencoded.
    pub fn write_csv(&self, path: impl AsRef<Path>, response_name: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.meta.iter().map(|m| m.name.clone()).collect();
        if self.has_response() {
            header.push(response_name.to_string());
        }
        w.write_record(&header)?;
        for i in 0..self.n_rows {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            for (j, m) in self.meta.iter().enumerate() {
                let v = self.features[j][i];
                if m.is_categorical() && !self.encoded {
                    rec.push(m.categories[v as usize].clone());
                } else {
                    rec.push(format_float(v));
                }
            }
            if self.has_response() {
                rec.push(format_float(self.response[i]));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Reads a CSV with a mandatory header. `response_col` must exist.
pub fn load_csv(
    path: impl AsRef<Path>,
    response_col: &str,
    categorical_cols: &[String],
    weight_col: Option<&str>,
) -> Result<Dataset> {
    read_csv(
        path.as_ref(),
        Some(response_col),
        true,
        categorical_cols,
        weight_col,
    )
}

/// Reads a CSV for prediction. The response column is loaded when
/// `response_col` is given and present, otherwise the dataset carries no
/// response.
pub fn load_features_csv(
    path: impl AsRef<Path>,
    response_col: Option<&str>,
    categorical_cols: &[String],
) -> Result<Dataset> {
    read_csv(path.as_ref(), response_col, false, categorical_cols, None)
}

fn read_csv(
    path: &Path,
    response_col: Option<&str>,
    response_required: bool,
    categorical_cols: &[String],
    weight_col: Option<&str>,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let position = |name: &str| header.iter().position(|h| h == name);

    let response_idx = match response_col {
        Some(r) => match position(r) {
            Some(i) => Some(i),
            None if response_required => return Err(Error::MissingColumn(r.to_string())),
            None => None,
        },
        None => None,
    };
    let weight_idx = match weight_col {
        Some(w) => Some(position(w).ok_or_else(|| Error::MissingColumn(w.to_string()))?),
        None => None,
    };
    for c in categorical_cols {
        if position(c).is_none() {
            return Err(Error::MissingColumn(c.clone()));
        }
    }
    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|&i| Some(i) != response_idx && Some(i) != weight_idx)
        .collect();
    let is_cat: Vec<bool> = feature_idx
        .iter()
        .map(|&i| categorical_cols.iter().any(|c| c == &header[i]))
        .collect();

    let mut features: Vec<Vec<f64>> = vec![Vec::new(); feature_idx.len()];
    let mut categories: Vec<Vec<String>> = vec![Vec::new(); feature_idx.len()];
    let mut lookup: Vec<HashMap<String, usize>> = vec![HashMap::new(); feature_idx.len()];
    let mut response = Vec::new();
    let mut weights = Vec::new();

    let parse = |token: &str, column: &str, row: usize| -> Result<f64> {
        if token.is_empty() {
            return Err(Error::MissingValue {
                column: column.to_string(),
                row,
            });
        }
        match token.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::NonNumericValue {
                column: column.to_string(),
                row,
                token: token.to_string(),
            }),
        }
    };

    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for (slot, &i) in feature_idx.iter().enumerate() {
            let token = record.get(i).unwrap_or("");
            if is_cat[slot] {
                if token.is_empty() {
                    return Err(Error::MissingValue {
                        column: header[i].clone(),
                        row,
                    });
                }
                let code = match lookup[slot].get(token) {
                    Some(&c) => c,
                    None => {
                        let c = categories[slot].len();
                        categories[slot].push(token.to_string());
                        lookup[slot].insert(token.to_string(), c);
                        c
                    }
                };
                features[slot].push(code as f64);
            } else {
                features[slot].push(parse(token, &header[i], row)?);
            }
        }
        if let Some(i) = response_idx {
            response.push(parse(record.get(i).unwrap_or(""), &header[i], row)?);
        }
        if let Some(i) = weight_idx {
            weights.push(parse(record.get(i).unwrap_or(""), &header[i], row)?);
        }
    }
    if features.first().map_or(response.is_empty(), Vec::is_empty) {
        return Err(Error::EmptyDataset);
    }
    if features.is_empty() {
        return Err(Error::InvalidData("no feature columns".into()));
    }

    let meta = feature_idx
        .iter()
        .zip(is_cat.iter().zip(categories))
        .map(|(&i, (&cat, cats))| {
            if cat {
                FeatureMeta::categorical(header[i].clone(), cats)
            } else {
                FeatureMeta::numeric(header[i].clone())
            }
        })
        .collect();
    Dataset::new(features, response, meta, weight_idx.map(|_| weights))
}

/// Per-category smoothed target statistics, persisted with the model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EncoderState {
    pub smoothing: f64,
    pub global_mean: f64,
    /// Feature name -> category label -> encoded value.
    pub columns: BTreeMap<String, BTreeMap<String, f64>>,
}

impl EncoderState {
    pub fn value(&self, column: &str, label: &str) -> f64 {
        self.columns
            .get(column)
            .and_then(|m| m.get(label))
            .copied()
            .unwrap_or(self.global_mean)
    }

    /// Replaces category codes with the stored statistics. Labels never seen
    /// during fitting map to the global mean. Already-encoded data passes
    /// through unchanged.
    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        if data.encoded {
            return Ok(data.clone());
        }
        let mut features = data.features.clone();
        for (j, m) in data.meta.iter().enumerate() {
            if !m.is_categorical() {
                continue;
            }
            let table: Vec<f64> = m
                .categories
                .iter()
                .map(|l| self.value(&m.name, l))
                .collect();
            for v in features[j].iter_mut() {
                *v = table[*v as usize];
            }
        }
        Dataset::build(
            features,
            data.response.clone(),
            data.meta.clone(),
            data.weights.clone(),
            true,
        )
    }
}

/// Fits smoothed target statistics on `train` and returns the encoded data.
///
/// Each category c is mapped to `(sum_c + global_mean * s) / (n_c + s)`,
/// a convex combination of its mean and the global mean.
pub fn encode_categoricals(train: &Dataset, smoothing: f64) -> Result<(Dataset, EncoderState)> {
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::Config(format!(
            "smoothing must be non-negative, got {smoothing}"
        )));
    }
    let mut state = EncoderState {
        smoothing,
        ..Default::default()
    };
    if train.encoded {
        return Ok((train.clone(), state));
    }
    if !train.has_response() {
        return Err(Error::InvalidData(
            "categorical encoding needs a response".into(),
        ));
    }
    let y = &train.response;
    state.global_mean = y.iter().sum::<f64>() / y.len() as f64;
    for (j, m) in train.meta.iter().enumerate() {
        if !m.is_categorical() {
            continue;
        }
        let mut sums = vec![0.0; m.categories.len()];
        let mut counts = vec![0usize; m.categories.len()];
        for (code, yi) in train.features[j].iter().zip(y) {
            sums[*code as usize] += yi;
            counts[*code as usize] += 1;
        }
        let table = m
            .categories
            .iter()
            .enumerate()
            .filter(|(c, _)| counts[*c] > 0)
            .map(|(c, label)| {
                let v = (sums[c] + state.global_mean * smoothing) / (counts[c] as f64 + smoothing);
                (label.clone(), v)
            })
            .collect();
        state.columns.insert(m.name.clone(), table);
    }
    let encoded = state.transform(train)?;
    Ok((encoded, state))
}

/// Seeded shuffle into train and test parts of sizes
/// `ceil(n * (1 - f))` and the remainder. Each part keeps the original row order.
pub fn split_train_test(
    data: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::BadFraction(test_fraction));
    }
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::TooFewRows { got: n, needed: 2 });
    }
    let n_train = ((n as f64 * (1.0 - test_fraction)) - 1e-9).ceil() as usize;
    let n_train = n_train.clamp(1, n - 1);
    let (train_idx, test_idx) = split_indices(n, n_train, seed);
    Ok((data.subset(&train_idx), data.subset(&test_idx)))
}

pub(crate) fn split_indices(n: usize, n_train: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

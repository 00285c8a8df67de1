//! Tabular multi-output datasets: loading, preprocessing, splitting and the
//! synthetic boolean-gate generator.
//!
//! A [`Dataset`] holds a dense real-valued feature matrix next to a binary
//! output matrix. Categorical feature columns are integer-coded in order of
//! first appearance and tagged [`ColumnKind::Categorical`] so reports can
//! still name them by their original column header.

mod csv_io;
mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{
    load_csv, load_csv_with, parse_binarization, white_collar_mapping, write_csv, Binarization,
    CsvOptions,
};
pub use synth::generate_xor_dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// Min/max recorded for one feature column by [`minmax_normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub min: f64,
    pub max: f64,
}

/// Provenance carried alongside a dataset so reports can state exactly how
/// the numbers were produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    /// Rows removed at load time because a cell held a missing marker.
    pub dropped_missing_rows: usize,
    pub missing_policy: String,
    /// Per feature column; `Some` only for categorical-encoded columns.
    pub levels: Vec<Option<Vec<String>>>,
    /// Per output column: the raw labels mapped to 0 and to 1.
    pub output_labels: Vec<[String; 2]>,
    pub normalization: Option<Vec<ColumnScale>>,
    pub dropped_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    outputs: Vec<Vec<u8>>,
    feature_names: Vec<String>,
    output_names: Vec<String>,
    column_kinds: Vec<ColumnKind>,
    preprocessing: Preprocessing,
}

impl Dataset {
    /// Builds a dataset, checking shape, binary outputs and name uniqueness.
    pub fn new(
        features: Vec<Vec<f64>>,
        outputs: Vec<Vec<u8>>,
        feature_names: Vec<String>,
        output_names: Vec<String>,
        column_kinds: Vec<ColumnKind>,
    ) -> Result<Self> {
        let n = feature_names.len();
        let levels = vec![None; n];
        let output_labels = (0..output_names.len())
            .map(|_| ["0".to_string(), "1".to_string()])
            .collect();
        let ds = Dataset {
            features,
            outputs,
            feature_names,
            output_names,
            column_kinds,
            preprocessing: Preprocessing {
                levels,
                output_labels,
                missing_policy: "drop-row".into(),
                ..Default::default()
            },
        };
        ds.validate()?;
        Ok(ds)
    }

    pub(crate) fn with_preprocessing(mut self, preprocessing: Preprocessing) -> Self {
        self.preprocessing = preprocessing;
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.feature_names.len();
        let m = self.output_names.len();
        if self.column_kinds.len() != n {
            return Err(Error::DimensionMismatch {
                context: "column kinds",
                expected: n,
                found: self.column_kinds.len(),
            });
        }
        if self.features.len() != self.outputs.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset rows",
                expected: self.features.len(),
                found: self.outputs.len(),
            });
        }
        for row in &self.features {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "feature row width",
                    expected: n,
                    found: row.len(),
                });
            }
        }
        for row in &self.outputs {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    context: "output row width",
                    expected: m,
                    found: row.len(),
                });
            }
            if row.iter().any(|&v| v > 1) {
                return Err(Error::InvalidData("output cells must be 0 or 1".into()));
            }
        }
        let mut seen = HashSet::new();
        for name in self.feature_names.iter().chain(&self.output_names) {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.features.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.output_names.len()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn outputs(&self) -> &[Vec<u8>] {
        &self.outputs
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn output_names(&self) -> &[String] {
        &self.output_names
    }

    pub fn column_kinds(&self) -> &[ColumnKind] {
        &self.column_kinds
    }

    pub fn preprocessing(&self) -> &Preprocessing {
        &self.preprocessing
    }

    /// Column `j` of the output matrix.
    pub fn output_column(&self, j: usize) -> Vec<u8> {
        self.outputs.iter().map(|r| r[j]).collect()
    }

    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.output_names.iter().position(|n| n == name)
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            outputs: indices.iter().map(|&i| self.outputs[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            output_names: self.output_names.clone(),
            column_kinds: self.column_kinds.clone(),
            preprocessing: self.preprocessing.clone(),
        }
    }

    /// Seeded uniform subsample of `rows` rows without replacement, kept in
    /// original row order. Returns a clone when `rows >= self.rows()`.
    pub fn subsample(&self, rows: usize, seed: u64) -> Dataset {
        if rows >= self.rows() {
            return self.clone();
        }
        let mut idx = shuffled_indices(self.rows(), seed);
        idx.truncate(rows);
        idx.sort_unstable();
        self.select_rows(&idx)
    }
}

pub(crate) fn shuffled_indices(len: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx
}

/// Rescales every feature column to `[0, 1]` via `(v - min) / (max - min)`.
///
/// Constant columns map to 0. Categorical-encoded columns are rescaled too:
/// they carry integer codes and the learner sees them as numbers.
pub fn minmax_normalize(d: &Dataset) -> Dataset {
    let n = d.n_features();
    let mut scales = vec![
        ColumnScale {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        n
    ];
    for row in &d.features {
        for (s, &v) in scales.iter_mut().zip(row) {
            s.min = s.min.min(v);
            s.max = s.max.max(v);
        }
    }
    let features = d
        .features
        .iter()
        .map(|row| {
            row.iter()
                .zip(&scales)
                .map(|(&v, s)| {
                    let range = s.max - s.min;
                    if range > 0.0 {
                        (v - s.min) / range
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let mut out = d.clone();
    out.features = features;
    // Keep the first recorded scales so repeated application still reports
    // the raw ranges.
    if out.preprocessing.normalization.is_none() {
        out.preprocessing.normalization = Some(scales);
    }
    out
}

/// Removes the `drop` feature columns, then integer-codes the `discretize`
/// columns by first appearance and tags them categorical.
pub fn drop_and_discretize(d: &Dataset, drop: &[String], discretize: &[String]) -> Result<Dataset> {
    for name in drop.iter().chain(discretize) {
        if d.feature_index(name).is_none() {
            return Err(Error::MissingColumn(name.clone()));
        }
    }
    let drop_set: HashSet<&str> = drop.iter().map(String::as_str).collect();
    let keep: Vec<usize> = (0..d.n_features())
        .filter(|&i| !drop_set.contains(d.feature_names[i].as_str()))
        .collect();

    let mut out = d.clone();
    out.feature_names = keep.iter().map(|&i| d.feature_names[i].clone()).collect();
    out.column_kinds = keep.iter().map(|&i| d.column_kinds[i]).collect();
    out.features = d
        .features
        .iter()
        .map(|row| keep.iter().map(|&i| row[i]).collect())
        .collect();
    out.preprocessing.levels = keep
        .iter()
        .map(|&i| d.preprocessing.levels.get(i).cloned().flatten())
        .collect();
    if let Some(scales) = &d.preprocessing.normalization {
        out.preprocessing.normalization = Some(keep.iter().map(|&i| scales[i]).collect());
    }
    out.preprocessing
        .dropped_columns
        .extend(drop.iter().cloned());

    for name in discretize {
        let col = out.feature_index(name).ok_or_else(|| Error::MissingColumn(name.clone()))?;
        let mut codes: HashMap<u64, usize> = HashMap::new();
        let mut order: Vec<f64> = Vec::new();
        for row in &mut out.features {
            let v = row[col];
            let next = codes.len();
            let code = *codes.entry(v.to_bits()).or_insert_with(|| {
                order.push(v);
                next
            });
            row[col] = code as f64;
        }
        let old_levels = out.preprocessing.levels[col].take();
        let levels = order
            .iter()
            .map(|&v| match &old_levels {
                Some(l) => l.get(v as usize).cloned().unwrap_or_else(|| v.to_string()),
                None => v.to_string(),
            })
            .collect();
        out.preprocessing.levels[col] = Some(levels);
        out.column_kinds[col] = ColumnKind::Categorical;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Seeded shuffle of the row indices, then a prefix/suffix split.
///
/// The train side gets `floor(train_fraction * rows)` rows, clamped so that
/// each side keeps at least one row.
pub fn train_test_split(d: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let f = spec.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::InvalidSplit(format!(
            "train_fraction must lie in (0, 1), got {f}"
        )));
    }
    let rows = d.rows();
    if rows < 2 {
        return Err(Error::InvalidSplit(format!(
            "need at least 2 rows to split, got {rows}"
        )));
    }
    let n_train = ((f * rows as f64).floor() as usize).clamp(1, rows - 1);
    let idx = shuffled_indices(rows, spec.seed);
    let (train, test) = idx.split_at(n_train);
    Ok((d.select_rows(train), d.select_rows(test)))
}

/// Counts of each raw label, keyed and ordered for deterministic reporting.
pub fn output_balance(d: &Dataset) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    if d.rows() == 0 {
        return out;
    }
    for (j, name) in d.output_names.iter().enumerate() {
        let ones = d.outputs.iter().filter(|r| r[j] == 1).count();
        out.insert(name.clone(), ones as f64 / d.rows() as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_col(values: &[f64]) -> Dataset {
        Dataset::new(
            values.iter().map(|&v| vec![v]).collect(),
            values.iter().map(|_| vec![0]).collect(),
            vec!["a".into()],
            vec!["y".into()],
            vec![ColumnKind::Numeric],
        )
        .unwrap()
    }

    fn col(d: &Dataset) -> Vec<f64> {
        d.features().iter().map(|r| r[0]).collect()
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(col(&minmax_normalize(&one_col(&[2.0, 4.0, 6.0]))), vec![0.0, 0.5, 1.0]);
        assert_eq!(col(&minmax_normalize(&one_col(&[5.0, 5.0]))), vec![0.0, 0.0]);
        let unit = [0.0, 0.25, 1.0];
        assert_eq!(col(&minmax_normalize(&one_col(&unit))), unit.to_vec());
    }

    #[test]
    fn minmax_records_scales() {
        let d = minmax_normalize(&one_col(&[2.0, 4.0, 6.0]));
        let scales = d.preprocessing().normalization.as_ref().unwrap();
        assert_eq!(scales[0], ColumnScale { min: 2.0, max: 6.0 });
    }

    #[test]
    fn split_counts() {
        let d = one_col(&(0..10).map(f64::from).collect::<Vec<_>>());
        let (tr, te) = train_test_split(&d, SplitSpec { train_fraction: 0.8, seed: 3 }).unwrap();
        assert_eq!((tr.rows(), te.rows()), (8, 2));
        let (tr, te) = train_test_split(&d, SplitSpec { train_fraction: 0.999, seed: 3 }).unwrap();
        assert_eq!((tr.rows(), te.rows()), (9, 1));
        let (tr, te) = train_test_split(&d, SplitSpec { train_fraction: 0.01, seed: 3 }).unwrap();
        assert_eq!((tr.rows(), te.rows()), (1, 9));
    }

    #[test]
    fn split_is_partition_and_deterministic() {
        let d = one_col(&(0..37).map(f64::from).collect::<Vec<_>>());
        let spec = SplitSpec { train_fraction: 0.7, seed: 11 };
        let (a, b) = train_test_split(&d, spec).unwrap();
        let (a2, b2) = train_test_split(&d, spec).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        let mut all: Vec<f64> = col(&a).into_iter().chain(col(&b)).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..37).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_degenerate() {
        let d = one_col(&[1.0]);
        assert!(train_test_split(&d, SplitSpec::default()).is_err());
        let d = one_col(&[1.0, 2.0]);
        assert!(train_test_split(&d, SplitSpec { train_fraction: 1.0, seed: 0 }).is_err());
    }

    #[test]
    fn drop_and_discretize_paths() {
        let d = Dataset::new(
            vec![vec![1.0, 7.0, 3.0], vec![2.0, 5.0, 3.0], vec![1.0, 7.0, 4.0]],
            vec![vec![0], vec![1], vec![0]],
            vec!["a".into(), "race".into(), "c".into()],
            vec!["y".into()],
            vec![ColumnKind::Numeric; 3],
        )
        .unwrap();
        assert_eq!(drop_and_discretize(&d, &[], &[]).unwrap(), d);

        let out = drop_and_discretize(&d, &["race".into()], &["c".into()]).unwrap();
        assert_eq!(out.feature_names(), ["a", "c"]);
        assert_eq!(out.features()[2], vec![1.0, 1.0]);
        assert_eq!(out.column_kinds()[1], ColumnKind::Categorical);

        assert!(matches!(
            drop_and_discretize(&d, &["nonexistent".into()], &[]),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn rejects_bad_shapes_and_names() {
        let bad_rows = Dataset::new(
            vec![vec![1.0]],
            vec![],
            vec!["a".into()],
            vec!["y".into()],
            vec![ColumnKind::Numeric],
        );
        assert!(bad_rows.is_err());
        let dup = Dataset::new(
            vec![vec![1.0]],
            vec![vec![0]],
            vec!["a".into()],
            vec!["a".into()],
            vec![ColumnKind::Numeric],
        );
        assert!(matches!(dup, Err(Error::DuplicateColumn(_))));
        let nonbinary = Dataset::new(
            vec![vec![1.0]],
            vec![vec![2]],
            vec!["a".into()],
            vec!["y".into()],
            vec![ColumnKind::Numeric],
        );
        assert!(nonbinary.is_err());
    }

    #[test]
    fn subsample_is_seeded() {
        let d = one_col(&(0..50).map(f64::from).collect::<Vec<_>>());
        let a = d.subsample(10, 4);
        assert_eq!(a.rows(), 10);
        assert_eq!(a, d.subsample(10, 4));
        assert_ne!(col(&a), col(&d.subsample(10, 5)));
    }
}

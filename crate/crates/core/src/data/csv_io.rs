use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::data::{ColumnKind, Dataset, Preprocessing};
use crate::error::{Error, Result};

/// Category-to-bit mapping for a multi-valued output column.
pub type Binarization = BTreeMap<String, u8>;

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub output_columns: Vec<String>,
    /// Mapping applied to named output columns before the two-value check.
    pub binarize: BTreeMap<String, Binarization>,
    /// Cells equal to one of these markers mark the whole row as missing.
    pub missing_markers: Vec<String>,
}

impl CsvOptions {
    pub fn new(output_columns: &[&str]) -> Self {
        CsvOptions {
            output_columns: output_columns.iter().map(|s| s.to_string()).collect(),
            binarize: BTreeMap::new(),
            missing_markers: vec!["?".to_string()],
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, output_columns: &[&str]) -> Result<Dataset> {
    load_csv_with(path, &CsvOptions::new(output_columns))
}

/// Loads a headered CSV file. Declared output columns become the binary
/// output matrix; every other column becomes a feature.
///
/// A feature column whose first cell parses as a number is numeric and every
/// later cell must parse too. Otherwise the column is categorical and its
/// values are integer-coded by order of first appearance. Output values are
/// mapped to {0,1} by sorted order (numeric when every value parses, else
/// lexicographic), smaller value first.
pub fn load_csv_with(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let mut output_pos = Vec::with_capacity(opts.output_columns.len());
    for name in &opts.output_columns {
        let pos = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.clone()))?;
        output_pos.push(pos);
    }
    for name in opts.binarize.keys() {
        if !opts.output_columns.contains(name) {
            return Err(Error::Mapping(format!(
                "'{name}' is not a declared output column"
            )));
        }
    }
    let feature_pos: Vec<usize> = (0..header.len())
        .filter(|i| !output_pos.contains(i))
        .collect();

    let mut raw: Vec<Vec<String>> = Vec::new();
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record?;
        if record.iter().any(|c| opts.missing_markers.iter().any(|m| m == c)) {
            dropped += 1;
            continue;
        }
        raw.push(record.iter().map(str::to_string).collect());
    }
    // Row numbers in errors are 1-based file lines (header is line 1). Missing
    // rows are skipped, so they are reported relative to the kept rows.
    let line = |r: usize| r + 2;

    let mut kinds = Vec::with_capacity(feature_pos.len());
    let mut levels = Vec::with_capacity(feature_pos.len());
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(feature_pos.len());
    for &c in &feature_pos {
        let numeric = raw.first().is_none_or(|r| r[c].parse::<f64>().is_ok());
        if numeric {
            let mut col = Vec::with_capacity(raw.len());
            for (r, row) in raw.iter().enumerate() {
                let v = row[c].parse::<f64>().map_err(|_| Error::Parse {
                    row: line(r),
                    column: header[c].clone(),
                    value: row[c].clone(),
                })?;
                col.push(v);
            }
            kinds.push(ColumnKind::Numeric);
            levels.push(None);
            columns.push(col);
        } else {
            let mut codes: HashMap<&str, usize> = HashMap::new();
            let mut seen: Vec<String> = Vec::new();
            let col = raw
                .iter()
                .map(|row| {
                    let next = codes.len();
                    let code = *codes.entry(row[c].as_str()).or_insert_with(|| {
                        seen.push(row[c].clone());
                        next
                    });
                    code as f64
                })
                .collect();
            kinds.push(ColumnKind::Categorical);
            levels.push(Some(seen));
            columns.push(col);
        }
    }

    let mut out_cols: Vec<Vec<u8>> = Vec::with_capacity(output_pos.len());
    let mut output_labels = Vec::with_capacity(output_pos.len());
    for (name, &c) in opts.output_columns.iter().zip(&output_pos) {
        let (col, labels) = match opts.binarize.get(name) {
            Some(mapping) => binarize_column(&raw, c, name, mapping)?,
            None => two_valued_column(&raw, c, name)?,
        };
        out_cols.push(col);
        output_labels.push(labels);
    }

    let features = (0..raw.len())
        .map(|r| columns.iter().map(|col| col[r]).collect())
        .collect();
    let outputs = (0..raw.len())
        .map(|r| out_cols.iter().map(|col| col[r]).collect())
        .collect();
    let ds = Dataset::new(
        features,
        outputs,
        feature_pos.iter().map(|&c| header[c].clone()).collect(),
        opts.output_columns.clone(),
        kinds,
    )?;
    Ok(ds.with_preprocessing(Preprocessing {
        dropped_missing_rows: dropped,
        missing_policy: format!("drop-row on {:?}", opts.missing_markers),
        levels,
        output_labels,
        normalization: None,
        dropped_columns: Vec::new(),
    }))
}

fn binarize_column(
    raw: &[Vec<String>],
    c: usize,
    name: &str,
    mapping: &Binarization,
) -> Result<(Vec<u8>, [String; 2])> {
    let col = raw
        .iter()
        .map(|row| {
            mapping.get(&row[c]).copied().ok_or_else(|| {
                Error::Mapping(format!("no mapping for '{}' in column '{name}'", row[c]))
            })
        })
        .collect::<Result<Vec<u8>>>()?;
    let join = |bit: u8| {
        mapping
            .iter()
            .filter(|(_, &v)| v == bit)
            .map(|(k, _)| k.as_str())
            .collect::<Vec<_>>()
            .join("|")
    };
    Ok((col, [join(0), join(1)]))
}

fn two_valued_column(raw: &[Vec<String>], c: usize, name: &str) -> Result<(Vec<u8>, [String; 2])> {
    let mut distinct: Vec<&str> = raw.iter().map(|row| row[c].as_str()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let all_numeric = distinct.iter().all(|v| v.parse::<f64>().is_ok());
    if all_numeric {
        distinct.sort_by(|a, b| {
            let (a, b) = (a.parse::<f64>().unwrap(), b.parse::<f64>().unwrap());
            a.total_cmp(&b)
        });
    }
    let labels: [String; 2] = match distinct.as_slice() {
        [lo, hi] => [lo.to_string(), hi.to_string()],
        // A constant column already written as 0/1 keeps its meaning.
        [only] if all_numeric && matches!(only.parse::<f64>(), Ok(v) if v == 0.0 || v == 1.0) => {
            ["0".to_string(), "1".to_string()]
        }
        _ => {
            return Err(Error::NonBinaryOutput {
                column: name.to_string(),
                distinct: distinct.len(),
            })
        }
    };
    let col = raw
        .iter()
        .map(|row| {
            let v = row[c].as_str();
            if distinct.len() == 2 {
                u8::from(v == labels[1])
            } else {
                u8::from(v.parse::<f64>() == Ok(1.0))
            }
        })
        .collect();
    Ok((col, labels))
}

/// Parses a binarization mapping: one `category=0` or `category=1` per line.
/// Blank lines and lines starting with `#` are ignored.
pub fn parse_binarization(text: &str) -> Result<Binarization> {
    let mut out = Binarization::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, bit) = line
            .rsplit_once('=')
            .ok_or_else(|| Error::Mapping(format!("line {}: expected 'category=0|1'", i + 1)))?;
        let bit = match bit.trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Mapping(format!(
                    "line {}: value must be 0 or 1, got '{other}'",
                    i + 1
                )))
            }
        };
        if out.insert(key.trim().to_string(), bit).is_some() {
            return Err(Error::Mapping(format!(
                "line {}: duplicate category '{}'",
                i + 1,
                key.trim()
            )));
        }
    }
    Ok(out)
}

/// Default occupation mapping: managerial, professional, sales and clerical
/// occupations are 1 ("white-collar"), everything else 0.
pub fn white_collar_mapping() -> Binarization {
    const WHITE: [&str; 4] = ["Exec-managerial", "Prof-specialty", "Sales", "Adm-clerical"];
    const OTHER: [&str; 10] = [
        "Tech-support",
        "Craft-repair",
        "Other-service",
        "Handlers-cleaners",
        "Machine-op-inspct",
        "Farming-fishing",
        "Transport-moving",
        "Priv-house-serv",
        "Protective-serv",
        "Armed-Forces",
    ];
    WHITE
        .iter()
        .map(|k| (k.to_string(), 1))
        .chain(OTHER.iter().map(|k| (k.to_string(), 0)))
        .collect()
}

/// Writes features then outputs under a single header row. Values use the
/// shortest decimal form that parses back to the same `f64`.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    let header: Vec<&str> = d
        .feature_names()
        .iter()
        .chain(d.output_names())
        .map(String::as_str)
        .collect();
    writeln!(f, "{}", header.join(",")).map_err(io_err)?;
    for (x, y) in d.features().iter().zip(d.outputs()) {
        let cells: Vec<String> = x
            .iter()
            .map(|v| format!("{v:?}"))
            .chain(y.iter().map(|v| v.to_string()))
            .collect();
        writeln!(f, "{}", cells.join(",")).map_err(io_err)?;
    }
    f.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn minimal_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,and\n0,0,0\n1,1,1\n");
        let d = load_csv(&p, &["and"]).unwrap();
        assert_eq!((d.n_features(), d.n_outputs(), d.rows()), (2, 1, 2));
        assert_eq!(d.output_column(0), vec![0, 1]);
    }

    #[test]
    fn three_valued_output_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,y\n0,0\n1,1\n2,2\n");
        let err = load_csv(&p, &["y"]).unwrap_err();
        assert!(matches!(err, Error::NonBinaryOutput { distinct: 3, .. }));
        assert!(err.to_string().contains("non-binary output column"));
    }

    #[test]
    fn missing_file_and_column() {
        assert!(matches!(
            load_csv("/nonexistent/file.csv", &["y"]),
            Err(Error::Io { .. })
        ));
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,y\n0,0\n1,1\n");
        assert!(matches!(load_csv(&p, &["z"]), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn unparseable_numeric_cell_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,y\n0,0\nabc,1\n");
        match load_csv(&p, &["y"]).unwrap_err() {
            Error::Parse { row, column, value } => {
                assert_eq!((row, column.as_str(), value.as_str()), (3, "a", "abc"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn categorical_and_label_ordering() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.csv",
            "w,income\nPrivate,>50K\nState-gov,<=50K\nPrivate,<=50K\n",
        );
        let d = load_csv(&p, &["income"]).unwrap();
        assert_eq!(d.column_kinds(), [ColumnKind::Categorical]);
        assert_eq!(d.features(), [vec![0.0], vec![1.0], vec![0.0]]);
        assert_eq!(d.output_column(0), vec![1, 0, 0]);
        assert_eq!(d.preprocessing().output_labels[0], ["<=50K".to_string(), ">50K".to_string()]);
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,y\n0,10\n1,9\n");
        let d = load_csv(&p, &["y"]).unwrap();
        assert_eq!(d.output_column(0), vec![1, 0]);
    }

    #[test]
    fn missing_rows_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,y\n1,?,0\n2,3,1\n4,5,0\n");
        let d = load_csv(&p, &["y"]).unwrap();
        assert_eq!(d.rows(), 2);
        assert_eq!(d.preprocessing().dropped_missing_rows, 1);
    }

    #[test]
    fn binarized_output() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,occ\n1,Sales\n2,Craft-repair\n3,Exec-managerial\n");
        let mut opts = CsvOptions::new(&["occ"]);
        opts.binarize.insert("occ".into(), white_collar_mapping());
        let d = load_csv_with(&p, &opts).unwrap();
        assert_eq!(d.output_column(0), vec![1, 0, 1]);

        opts.binarize.insert("occ".into(), parse_binarization("Sales=1\n").unwrap());
        assert!(matches!(load_csv_with(&p, &opts), Err(Error::Mapping(_))));
    }

    #[test]
    fn mapping_parser() {
        let m = parse_binarization("# comment\nSales=1\n\nCraft-repair = 0\n").unwrap();
        assert_eq!(m.get("Sales"), Some(&1));
        assert_eq!(m.get("Craft-repair"), Some(&0));
        assert!(parse_binarization("Sales=2").is_err());
        assert!(parse_binarization("Sales").is_err());
        assert!(parse_binarization("a=1\na=0").is_err());
    }
}

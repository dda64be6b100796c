//! Reading feature tables, dataset manifests and external score files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::{ExternalScores, LabeledDataset};
use crate::matrix::Matrix;

/// Picks a column by header name or by 0-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    Index(usize),
    Name(String),
}

impl FromStr for ColumnSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::invalid("empty column selector"));
        }
        Ok(s.parse::<usize>().map_or_else(
            |_| ColumnSelector::Name(s.to_string()),
            ColumnSelector::Index,
        ))
    }
}

/// A parsed CSV: numeric features, optional labels, and what was dropped.
#[derive(Debug, Clone)]
pub struct Table {
    /// Names of the retained feature columns (`col<i>` when headerless).
    pub columns: Vec<String>,
    pub features: Matrix,
    pub labels: Option<Vec<bool>>,
    /// Non-numeric columns that were skipped.
    pub dropped: Vec<String>,
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok()
}

fn parse_label(cell: &str) -> Option<bool> {
    let c = cell.trim();
    match c.to_ascii_lowercase().as_str() {
        "true" | "yes" | "anomaly" | "outlier" => return Some(true),
        "false" | "no" | "normal" | "inlier" => return Some(false),
        _ => {}
    }
    match parse_number(c) {
        Some(0.0) => Some(false),
        Some(1.0) => Some(true),
        _ => None,
    }
}

/// The first row is a header when some field in it is non-numeric while the
/// same field of the next row is numeric, or when every field is non-numeric.
fn looks_like_header(first: &csv::StringRecord, second: Option<&csv::StringRecord>) -> bool {
    let non_numeric: Vec<bool> = first.iter().map(|c| parse_number(c).is_none()).collect();
    if non_numeric.iter().all(|&b| b) {
        return true;
    }
    match second {
        Some(next) => non_numeric
            .iter()
            .zip(next.iter())
            .any(|(&nn, cell)| nn && parse_number(cell).is_some()),
        None => non_numeric.iter().any(|&b| b),
    }
}

/// Read a comma-separated table. Columns whose first data cell is not a
/// number are treated as nominal and dropped with a warning; a later
/// non-numeric or missing cell in a numeric column is an error.
pub fn read_table<R: Read>(reader: R, label: Option<&ColumnSelector>) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        records.push(rec);
    }

    let header = match records.first() {
        Some(first) if looks_like_header(first, records.get(1)) => Some(records.remove(0)),
        _ => None,
    };
    let width = header.as_ref().or(records.first()).map_or(0, |r| r.len());
    let names: Vec<String> = match &header {
        Some(h) => h.iter().map(str::to_string).collect(),
        None => (0..width).map(|i| format!("col{i}")).collect(),
    };

    let label_col = match label {
        None => None,
        Some(ColumnSelector::Index(i)) if *i < width => Some(*i),
        Some(ColumnSelector::Index(i)) => {
            return Err(Error::invalid(format!(
                "label column {i} out of range ({width} columns)"
            )))
        }
        Some(ColumnSelector::Name(n)) => Some(
            names
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::invalid(format!("no label column named `{n}`")))?,
        ),
    };

    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for col in 0..width {
        if Some(col) == label_col {
            continue;
        }
        let numeric = records
            .first()
            .is_none_or(|r| parse_number(&r[col]).is_some());
        if numeric {
            keep.push(col);
        } else {
            log::warn!("dropping non-numeric column `{}`", names[col]);
            dropped.push(names[col].clone());
        }
    }

    let data_offset = usize::from(header.is_some()) + 1;
    let mut data = Vec::with_capacity(records.len() * keep.len());
    let mut labels = label_col.map(|_| Vec::with_capacity(records.len()));
    for (r, rec) in records.iter().enumerate() {
        for (k, &col) in keep.iter().enumerate() {
            let v = parse_number(&rec[col]).ok_or_else(|| {
                Error::invalid(format!(
                    "line {}: column `{}` holds `{}`, expected a number",
                    r + data_offset,
                    names[col],
                    &rec[col]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteCell { row: r, col: k });
            }
            data.push(v);
        }
        if let (Some(col), Some(out)) = (label_col, labels.as_mut()) {
            out.push(parse_label(&rec[col]).ok_or_else(|| {
                Error::invalid(format!(
                    "line {}: label `{}` is not binary",
                    r + data_offset,
                    &rec[col]
                ))
            })?);
        }
    }

    Ok(Table {
        columns: keep.iter().map(|&c| names[c].clone()).collect(),
        features: Matrix::new(records.len(), keep.len(), data)?,
        labels,
        dropped,
    })
}

pub fn read_table_file(path: impl AsRef<Path>, label: Option<&ColumnSelector>) -> Result<Table> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, label)
}

/// One dataset entry of a benchmark manifest. Relative paths resolve against
/// the manifest's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub path: PathBuf,
    /// Name or 0-based index of the ground-truth column.
    pub label_column: LabelColumn,
    #[serde(default)]
    pub anomaly_fraction: Option<f64>,
    /// Detector name to score file.
    #[serde(default)]
    pub external_scores: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl From<&LabelColumn> for ColumnSelector {
    fn from(l: &LabelColumn) -> Self {
        match l {
            LabelColumn::Index(i) => ColumnSelector::Index(*i),
            LabelColumn::Name(n) => ColumnSelector::Name(n.clone()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub datasets: Vec<DatasetEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut m: Manifest = serde_json::from_str(text)?;
        m.base_dir = base_dir.into();
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Load one entry's data and its external score files.
    pub fn load_entry(
        &self,
        entry: &DatasetEntry,
    ) -> Result<(LabeledDataset, Vec<ExternalScores>)> {
        let table = read_table_file(
            self.resolve(&entry.path),
            Some(&(&entry.label_column).into()),
        )?;
        let labels = table.labels.unwrap_or_default();
        let ds = LabeledDataset::new(&entry.name, table.features, labels, entry.anomaly_fraction)?;
        let mut external = Vec::new();
        for (detector, path) in &entry.external_scores {
            let (scores, flags) = read_scores_file(self.resolve(path))?;
            external.push(ExternalScores {
                detector: detector.clone(),
                dataset: entry.name.clone(),
                scores,
                flags,
            });
        }
        Ok((ds, external))
    }
}

/// A score file has one row per data row: `score[,flag]`, with an optional
/// header. Flags must be 0/1 and present on every row or on none.
pub fn read_scores<R: Read>(reader: R) -> Result<(Vec<f64>, Option<Vec<bool>>)> {
    let table = read_table(reader, None)?;
    let x = table.features;
    match x.ncols() {
        1 => Ok((x.into_vec(), None)),
        2 => {
            let scores = x.column_values(0);
            let flags = x
                .column_values(1)
                .into_iter()
                .enumerate()
                .map(|(i, f)| match f {
                    0.0 => Ok(false),
                    1.0 => Ok(true),
                    f => Err(Error::invalid(format!(
                        "score row {i}: flag {f} is not 0 or 1"
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((scores, Some(flags)))
        }
        0 if x.nrows() == 0 => Ok((Vec::new(), None)),
        n => Err(Error::invalid(format!(
            "score file has {n} numeric columns, expected 1 or 2"
        ))),
    }
}

pub fn read_scores_file(path: impl AsRef<Path>) -> Result<(Vec<f64>, Option<Vec<bool>>)> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_scores(file)
}

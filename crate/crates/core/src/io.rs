//! Dataset ingestion, experiment configuration files and result writers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{DataSource, Dataset, ExperimentOutcome, ExperimentPlan, RoundRecord, SyntheticSpec};

/// Column holding the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Last,
    Index(usize),
    /// Header name; requires `has_header`.
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("last") {
            Ok(LabelColumn::Last)
        } else if let Ok(k) = s.parse::<usize>() {
            Ok(LabelColumn::Index(k))
        } else if s.is_empty() {
            Err(Error::Argument("empty label column".into()))
        } else {
            Ok(LabelColumn::Name(s.to_string()))
        }
    }
}

impl std::fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelColumn::Last => write!(f, "last"),
            LabelColumn::Index(k) => write!(f, "{k}"),
            LabelColumn::Name(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub label_column: LabelColumn,
    /// Raw label value mapped to +1; everything else becomes -1.
    pub positive_label: String,
    pub delimiter: u8,
    pub has_header: bool,
    pub standardize: bool,
}

impl DatasetSpec {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            label_column: LabelColumn::Last,
            positive_label: "1".into(),
            delimiter: b',',
            has_header: false,
            standardize: true,
        }
    }
}

fn parse_error(path: &Path, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a delimited numeric file into features and ±1 labels. Line and
/// column numbers in errors are 1-based.
pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    let path = spec.path.as_path();
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(spec.delimiter)
        .has_headers(spec.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let header: Option<Vec<String>> = if spec.has_header {
        let h = reader
            .headers()
            .map_err(|e| parse_error(path, 1, 0, e.to_string()))?;
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut width: Option<usize> = header.as_ref().map(Vec::len);
    let mut label_idx: Option<usize> = None;
    let mut features: Vec<f64> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut n_rows = 0;

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(path, line, 0, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(parse_error(
                path,
                line,
                0,
                format!("expected {w} columns, found {}", record.len()),
            ));
        }
        let li = match label_idx {
            Some(k) => k,
            None => {
                let k = match &spec.label_column {
                    LabelColumn::Last => w.saturating_sub(1),
                    LabelColumn::Index(k) => *k,
                    LabelColumn::Name(name) => header
                        .as_ref()
                        .and_then(|h| h.iter().position(|c| c == name))
                        .ok_or_else(|| Error::Argument(format!("no label column named {name:?}")))?,
                };
                if k >= w {
                    return Err(Error::Argument(format!(
                        "label column {k} out of range for {w} columns"
                    )));
                }
                if w < 3 {
                    return Err(Error::Argument(
                        "need at least 2 feature columns besides the label".into(),
                    ));
                }
                label_idx = Some(k);
                k
            }
        };
        for (c, cell) in record.iter().enumerate() {
            if c == li {
                labels.push(if cell == spec.positive_label { 1.0 } else { -1.0 });
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_error(path, line, c + 1, format!("not a number: {cell:?}")))?;
                if !v.is_finite() {
                    return Err(parse_error(path, line, c + 1, "non-finite value"));
                }
                features.push(v);
            }
        }
        n_rows += 1;
    }

    if n_rows == 0 {
        return Err(Error::Argument(format!("{}: no data rows", path.display())));
    }
    let d = features.len() / n_rows;
    let labels = DVector::from_vec(labels);
    if !(labels.iter().any(|&y| y > 0.0) && labels.iter().any(|&y| y < 0.0)) {
        return Err(Error::DegenerateLabels);
    }
    Dataset::new(DMatrix::from_row_slice(n_rows, d, &features), labels)
}

/// Writes features followed by a label column of `1` / `-1`, no header.
pub fn write_dataset(path: &Path, dataset: &Dataset, delimiter: u8) -> Result<()> {
    let mut rows = Vec::with_capacity(dataset.labels.len());
    for (i, y) in dataset.labels.iter().enumerate() {
        let mut cells: Vec<String> = dataset.features.row(i).iter().map(|v| v.to_string()).collect();
        cells.push(if *y > 0.0 { "1".into() } else { "-1".into() });
        rows.push(cells.join(&(delimiter as char).to_string()));
    }
    write_text(path, &(rows.join("\n") + "\n"))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>, delimiter: u8) -> Result<()> {
    let sep = (delimiter as char).to_string();
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|&v| format_number(v)).collect();
        out.push_str(&cells.join(&sep));
        out.push('\n');
    }
    write_text(path, &out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_error(parent))?;
    }
    fs::write(path, text).map_err(io_error(path))
}

/// Significant digits used for every real number in result files.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Fixed-point decimal with [`SIGNIFICANT_DIGITS`] significant digits.
pub fn format_number(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let magnitude = if v == 0.0 { 0 } else { v.abs().log10().floor() as i64 };
    let decimals = (SIGNIFICANT_DIGITS as i64 - 1 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub const RECORD_COLUMNS: [&str; 8] = [
    "round",
    "cumulative_cost",
    "queried_entries",
    "recon_rel",
    "recon_msq",
    "train_objective",
    "test_accuracy",
    "test_auc",
];

pub fn records_to_csv(records: &[RoundRecord]) -> String {
    let mut out = RECORD_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.round,
            format_number(r.cumulative_cost),
            r.queried_entries,
            format_number(r.reconstruction_error_relative),
            format_number(r.reconstruction_error_mean_sq),
            format_number(r.train_objective),
            format_number(r.test_accuracy),
            format_number(r.test_auc),
        );
    }
    out
}

pub fn write_records(path: &Path, records: &[RoundRecord]) -> Result<()> {
    write_text(path, &records_to_csv(records))
}

pub fn read_records(path: &Path) -> Result<Vec<RoundRecord>> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_error(path, 1, 0, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != RECORD_COLUMNS {
        return Err(parse_error(path, 1, 0, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| parse_error(path, line, 0, e.to_string()))?;
        let num = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_error(path, line, c + 1, "bad number"))
        };
        let int = |c: usize| -> Result<usize> {
            rec.get(c)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_error(path, line, c + 1, "bad integer"))
        };
        out.push(RoundRecord {
            round: int(0)?,
            cumulative_cost: num(1)?,
            queried_entries: int(2)?,
            reconstruction_error_relative: num(3)?,
            reconstruction_error_mean_sq: num(4)?,
            train_objective: num(5)?,
            test_accuracy: num(6)?,
            test_auc: num(7)?,
        });
    }
    Ok(out)
}

/// One `replicate_NNN.csv` per replicate plus `mean.csv`. Returns the paths
/// written.
pub fn write_outcome(dir: &Path, outcome: &ExperimentOutcome) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let mut written = Vec::new();
    for (k, run) in outcome.replicates.iter().enumerate() {
        let p = dir.join(format!("replicate_{k:03}.csv"));
        write_records(&p, &run.records)?;
        written.push(p);
    }
    let p = dir.join("mean.csv");
    write_records(&p, &outcome.mean)?;
    written.push(p);
    Ok(written)
}

/// Experiment configuration file: the plan fields, the completion
/// hyperparameters and the dataset reference, all as flat JSON keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub plan: ExperimentPlan,
    /// Dataset file; the synthetic generator is used when absent.
    pub data: Option<PathBuf>,
    pub label_col: String,
    pub positive_label: String,
    pub delimiter: char,
    pub has_header: bool,
    pub standardize: bool,
    pub synthetic_rows: usize,
    pub synthetic_cols: usize,
    pub synthetic_rank: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            plan: ExperimentPlan::default(),
            data: None,
            label_col: "last".into(),
            positive_label: "1".into(),
            delimiter: ',',
            has_header: false,
            standardize: true,
            synthetic_rows: 100,
            synthetic_cols: 20,
            synthetic_rank: 3,
        }
    }
}

impl ExperimentConfig {
    fn known_keys() -> Vec<String> {
        match serde_json::to_value(ExperimentConfig::default()) {
            Ok(serde_json::Value::Object(map)) => map.keys().cloned().collect(),
            _ => Vec::new(),
        }
    }

    /// Parses a config, rejecting keys it does not know.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Config("top level must be a JSON object".into()))?;
        let known = Self::known_keys();
        if let Some(k) = obj.keys().find(|k| !known.contains(k)) {
            return Err(Error::Config(format!("unknown key {k:?}")));
        }
        let cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &(self.to_json() + "\n"))
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        if !self.delimiter.is_ascii() {
            return Err(Error::Config("delimiter must be a single ASCII character".into()));
        }
        if self.data.is_none() {
            let s = self.synthetic();
            if s.rank == 0 || s.rank > s.rows.min(s.cols) {
                return Err(Error::Config(format!(
                    "synthetic_rank {} must lie in 1..={}",
                    s.rank,
                    s.rows.min(s.cols)
                )));
            }
        }
        Ok(())
    }

    pub fn synthetic(&self) -> SyntheticSpec {
        SyntheticSpec {
            rows: self.synthetic_rows,
            cols: self.synthetic_cols,
            rank: self.synthetic_rank,
        }
    }

    pub fn dataset_spec(&self) -> Result<Option<DatasetSpec>> {
        let Some(path) = &self.data else {
            return Ok(None);
        };
        Ok(Some(DatasetSpec {
            path: path.clone(),
            label_column: self.label_col.parse()?,
            positive_label: self.positive_label.clone(),
            delimiter: self.delimiter as u8,
            has_header: self.has_header,
            standardize: self.standardize,
        }))
    }

    /// Loads the dataset file, if any, into a data source.
    pub fn data_source(&self) -> Result<DataSource> {
        match self.dataset_spec()? {
            None => Ok(DataSource::Synthetic(self.synthetic())),
            Some(spec) => Ok(DataSource::Fixed {
                dataset: load_dataset(&spec)?,
                standardize: spec.standardize,
            }),
        }
    }
}

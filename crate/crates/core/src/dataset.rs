//! Tabular ingestion and preprocessing.
//!
//! Rows with a missing cell are dropped first, categorical columns are then
//! frequency encoded (`count(value) / n`) and finally every column is
//! standardized with the population standard deviation.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("empty file")]
    Empty,
    #[error("row {row} has {found} cells, header has {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("target column `{0}` not found in header")]
    UnknownTarget(String),
    #[error("no feature columns besides the target")]
    NoFeatures,
    #[error("need at least 2 rows, have {0}")]
    TooFewRows(usize),
    #[error("every row has a missing cell")]
    AllRowsDropped,
    #[error("column `{0}` is constant")]
    ConstantColumn(String),
    #[error("column `{name}` is not numeric")]
    NotNumeric { name: String },
}

/// One parsed cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Missing,
}

impl Cell {
    fn parse(raw: &str) -> Cell {
        let s = raw.trim();
        if s.is_empty() || s == "NA" {
            return Cell::Missing;
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Cell::Num(v),
            _ => Cell::Text(s.to_string()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub feature_names: Vec<String>,
    /// Row-major cells, `rows[i][j]` is feature `j` of row `i`.
    pub rows: Vec<Vec<Cell>>,
    pub targets: Option<Vec<Cell>>,
    pub categorical_mask: Vec<bool>,
}

/// Per-feature scale of a dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureStats {
    pub sigma_per_feature: Vec<f64>,
    pub sigma_bar: f64,
    pub mean_per_feature: Vec<f64>,
}

impl FeatureStats {
    pub fn from_columns(columns: &[Vec<f64>]) -> FeatureStats {
        let mean_per_feature: Vec<f64> = columns.iter().map(|c| mean(c)).collect();
        let sigma_per_feature: Vec<f64> = columns
            .iter()
            .zip(&mean_per_feature)
            .map(|(c, m)| population_std(c, *m))
            .collect();
        let sigma_bar = mean(&sigma_per_feature);
        FeatureStats {
            sigma_per_feature,
            sigma_bar,
            mean_per_feature,
        }
    }

    /// Unit scale in `d` dimensions, the stats of standardized data.
    pub fn unit(d: usize) -> FeatureStats {
        FeatureStats {
            sigma_per_feature: vec![1.0; d],
            sigma_bar: 1.0,
            mean_per_feature: vec![0.0; d],
        }
    }

    /// Same scale `sigma` for every one of `d` features.
    pub fn isotropic(d: usize, sigma: f64) -> FeatureStats {
        FeatureStats {
            sigma_per_feature: vec![sigma; d],
            sigma_bar: sigma,
            mean_per_feature: vec![0.0; d],
        }
    }
}

/// Output of [`preprocess`].
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub dataset: TabularDataset,
    /// Stats of the standardized columns the engine works in.
    pub stats: FeatureStats,
    /// Stats of the encoded columns before standardization.
    pub raw_stats: FeatureStats,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn population_std(v: &[f64], m: f64) -> f64 {
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn load_csv(
    path: impl AsRef<Path>,
    target_column: Option<&str>,
) -> Result<TabularDataset, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(file, target_column)
}

pub fn parse_csv<R: std::io::Read>(
    reader: R,
    target_column: Option<&str>,
) -> Result<TabularDataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(DatasetError::Empty);
    }
    let target_idx = match target_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DatasetError::UnknownTarget(name.to_string()))?,
        ),
        None => None,
    };
    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|i| Some(*i) != target_idx)
        .collect();
    if feature_idx.is_empty() {
        return Err(DatasetError::NoFeatures);
    }

    let mut rows = Vec::new();
    let mut targets = target_idx.map(|_| Vec::new());
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(DatasetError::Ragged {
                row: i + 1,
                expected: header.len(),
                found: record.len(),
            });
        }
        rows.push(
            feature_idx
                .iter()
                .map(|&j| Cell::parse(&record[j]))
                .collect::<Vec<_>>(),
        );
        if let (Some(t), Some(ts)) = (target_idx, targets.as_mut()) {
            ts.push(Cell::parse(&record[t]));
        }
    }
    if rows.is_empty() {
        return Err(DatasetError::Empty);
    }

    let categorical_mask = (0..feature_idx.len())
        .map(|j| rows.iter().any(|r| matches!(r[j], Cell::Text(_))))
        .collect();
    Ok(TabularDataset {
        feature_names: feature_idx.iter().map(|&j| header[j].clone()).collect(),
        rows,
        targets,
        categorical_mask,
    })
}

impl TabularDataset {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Numeric row `i`; fails on text or missing cells.
    pub fn row(&self, i: usize) -> Result<Vec<f64>, DatasetError> {
        self.rows[i]
            .iter()
            .enumerate()
            .map(|(j, c)| {
                c.as_f64().ok_or_else(|| DatasetError::NotNumeric {
                    name: self.feature_names[j].clone(),
                })
            })
            .collect()
    }

    /// Column-major numeric copy; fails unless every cell is a number.
    pub fn numeric_columns(&self) -> Result<Vec<Vec<f64>>, DatasetError> {
        (0..self.n_features())
            .map(|j| {
                self.rows
                    .iter()
                    .map(|r| {
                        r[j].as_f64().ok_or_else(|| DatasetError::NotNumeric {
                            name: self.feature_names[j].clone(),
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn preprocess(ds: &TabularDataset) -> Result<Preprocessed, DatasetError> {
    if ds.n_rows() < 2 {
        return Err(DatasetError::TooFewRows(ds.n_rows()));
    }
    let keep: Vec<usize> = (0..ds.n_rows())
        .filter(|&i| {
            !ds.rows[i].contains(&Cell::Missing)
                && !ds.targets.as_ref().is_some_and(|t| t[i] == Cell::Missing)
        })
        .collect();
    if keep.is_empty() {
        return Err(DatasetError::AllRowsDropped);
    }
    if keep.len() < 2 {
        return Err(DatasetError::TooFewRows(keep.len()));
    }
    let n = keep.len();

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(ds.n_features());
    for j in 0..ds.n_features() {
        let col = if ds.categorical_mask[j] {
            let mut counts: HashMap<String, usize> = HashMap::new();
            for &i in &keep {
                *counts.entry(cell_key(&ds.rows[i][j])).or_default() += 1;
            }
            keep.iter()
                .map(|&i| counts[&cell_key(&ds.rows[i][j])] as f64 / n as f64)
                .collect()
        } else {
            keep.iter()
                .map(|&i| ds.rows[i][j].as_f64().expect("numeric column"))
                .collect()
        };
        columns.push(col);
    }

    let raw_stats = FeatureStats::from_columns(&columns);
    for (j, s) in raw_stats.sigma_per_feature.iter().enumerate() {
        if *s == 0.0 || !s.is_finite() {
            return Err(DatasetError::ConstantColumn(ds.feature_names[j].clone()));
        }
    }
    for (j, col) in columns.iter_mut().enumerate() {
        let (m, s) = (
            raw_stats.mean_per_feature[j],
            raw_stats.sigma_per_feature[j],
        );
        for v in col.iter_mut() {
            *v = (*v - m) / s;
        }
    }
    let stats = FeatureStats::from_columns(&columns);

    let rows = (0..n)
        .map(|i| columns.iter().map(|c| Cell::Num(c[i])).collect())
        .collect();
    let targets = ds
        .targets
        .as_ref()
        .map(|t| keep.iter().map(|&i| t[i].clone()).collect());
    Ok(Preprocessed {
        dataset: TabularDataset {
            feature_names: ds.feature_names.clone(),
            rows,
            targets,
            categorical_mask: vec![false; ds.n_features()],
        },
        stats,
        raw_stats,
    })
}

fn cell_key(c: &Cell) -> String {
    match c {
        Cell::Num(v) => format!("{v}"),
        Cell::Text(s) => s.clone(),
        Cell::Missing => String::new(),
    }
}

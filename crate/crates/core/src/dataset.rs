//! Tabular input: CSV ingestion, validation and column preprocessing.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Column preprocessing applied to a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Preprocessing {
    Raw,
    Centered {
        means: Vec<f64>,
    },
    Autoscaled {
        means: Vec<f64>,
        /// Divisors actually applied; 1.0 for zero-variance columns.
        scales: Vec<f64>,
        zero_variance: Vec<bool>,
    },
}

impl Preprocessing {
    pub fn name(&self) -> &'static str {
        match self {
            Preprocessing::Raw => "raw",
            Preprocessing::Centered { .. } => "centered",
            Preprocessing::Autoscaled { .. } => "autoscaled",
        }
    }

    pub fn means(&self) -> Option<&[f64]> {
        match self {
            Preprocessing::Raw => None,
            Preprocessing::Centered { means } | Preprocessing::Autoscaled { means, .. } => {
                Some(means)
            }
        }
    }

    pub fn scales(&self) -> Option<&[f64]> {
        match self {
            Preprocessing::Autoscaled { scales, .. } => Some(scales),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessMode {
    Center,
    Autoscale,
}

impl std::str::FromStr for PreprocessMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center" | "centered" => Ok(PreprocessMode::Center),
            "autoscale" | "autoscaled" => Ok(PreprocessMode::Autoscale),
            other => Err(Error::Parse(format!("unknown preprocessing mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
    /// Column holding sample identifiers, by header name or zero-based
    /// position. The column is excluded from the numeric matrix.
    pub id_column: Option<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { delimiter: b',', has_header: true, id_column: None }
    }
}

/// An I×J matrix of finite values with sample and variable labels.
///
/// `raw` always holds the values as loaded; `values` holds the matrix the
/// decompositions operate on (identical to `raw` until [`Dataset::preprocess`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<String>,
    variables: Vec<String>,
    raw: Array2<f64>,
    values: Array2<f64>,
    preprocessing: Preprocessing,
}

/// JSON summary used by the API.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetSummary {
    pub n_samples: usize,
    pub n_variables: usize,
    pub samples: Vec<String>,
    pub variables: Vec<String>,
    pub preprocessing: String,
    pub zero_variance: Vec<String>,
}

impl Dataset {
    pub fn new(samples: Vec<String>, variables: Vec<String>, raw: Array2<f64>) -> Result<Self> {
        let (rows, cols) = raw.dim();
        if rows < 3 {
            return Err(Error::TooFewRows(rows));
        }
        if cols < 2 {
            return Err(Error::TooFewColumns(cols));
        }
        check_len(rows, samples.len())?;
        check_len(cols, variables.len())?;
        if let Some(((row, col), v)) = raw.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonNumericCell { row, col, value: v.to_string() });
        }
        Ok(Dataset {
            samples,
            variables,
            values: raw.clone(),
            raw,
            preprocessing: Preprocessing::Raw,
        })
    }

    /// Builds a dataset with generated labels (`0..I` and `v0..vJ`).
    pub fn from_matrix(raw: Array2<f64>) -> Result<Self> {
        let samples = (0..raw.nrows()).map(|i| i.to_string()).collect();
        let variables = (0..raw.ncols()).map(|j| format!("v{j}")).collect();
        Self::new(samples, variables, raw)
    }

    /// Restores a dataset from persisted parts without recomputing anything.
    pub(crate) fn from_parts(
        samples: Vec<String>,
        variables: Vec<String>,
        raw: Array2<f64>,
        values: Array2<f64>,
        preprocessing: Preprocessing,
    ) -> Result<Self> {
        let mut d = Self::new(samples, variables, raw)?;
        if values.dim() != d.raw.dim() {
            return Err(Error::CorruptSession("dataset shape mismatch".into()));
        }
        d.values = values;
        d.preprocessing = preprocessing;
        Ok(d)
    }

    /// Parses delimited text. Error positions are zero-based data-row and
    /// column indices (the header line is not counted).
    pub fn load_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(options.delimiter)
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);

        let mut records = rdr.records();
        let header: Option<Vec<String>> = if options.has_header {
            match records.next() {
                Some(rec) => {
                    Some(rec.map_err(csv_err)?.iter().map(str::to_owned).collect())
                }
                None => return Err(Error::TooFewRows(0)),
            }
        } else {
            None
        };

        let mut width = header.as_ref().map(Vec::len);
        let mut id_col = None;
        if let Some(name) = &options.id_column {
            id_col = Some(match &header {
                Some(h) => match h.iter().position(|c| c == name) {
                    Some(p) => p,
                    None => name.parse::<usize>().map_err(|_| {
                        Error::Parse(format!("id column {name:?} not found in header"))
                    })?,
                },
                None => name
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("id column {name:?} is not an index")))?,
            });
        }

        let mut samples = Vec::new();
        let mut data = Vec::new();
        for (row, rec) in records.enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() == 1 && rec.get(0) == Some("") {
                continue;
            }
            let expected = *width.get_or_insert(rec.len());
            if rec.len() != expected {
                return Err(Error::RaggedRows { row, expected, found: rec.len() });
            }
            let mut id = None;
            for (col, cell) in rec.iter().enumerate() {
                if Some(col) == id_col {
                    id = Some(cell.to_owned());
                    continue;
                }
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => data.push(v),
                    _ => {
                        return Err(Error::NonNumericCell { row, col, value: cell.to_owned() })
                    }
                }
            }
            samples.push(id.unwrap_or_else(|| row.to_string()));
        }

        let width = width.unwrap_or(0);
        if let Some(c) = id_col {
            if c >= width && !samples.is_empty() {
                return Err(Error::IndexOutOfRange { index: c, limit: width });
            }
        }
        let cols = width - usize::from(id_col.is_some_and(|c| c < width));
        let variables: Vec<String> = match header {
            Some(h) => h
                .into_iter()
                .enumerate()
                .filter(|(c, _)| Some(*c) != id_col)
                .map(|(_, name)| name)
                .collect(),
            None => (0..cols).map(|j| format!("v{j}")).collect(),
        };
        if samples.len() < 3 {
            return Err(Error::TooFewRows(samples.len()));
        }
        if cols < 2 {
            return Err(Error::TooFewColumns(cols));
        }
        let raw = Array2::from_shape_vec((samples.len(), cols), data)
            .map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(samples, variables, raw)
    }

    /// Writes the raw values with an `id` column and a header line.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_owned()];
        header.extend(self.variables.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (id, row) in self.samples.iter().zip(self.raw.rows()) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn preprocess(&self, mode: PreprocessMode) -> Result<Dataset> {
        if self.preprocessing != Preprocessing::Raw {
            return Err(Error::AlreadyPreprocessed);
        }
        let n = self.raw.nrows() as f64;
        let means = self.raw.mean_axis(Axis(0)).expect("nonempty");
        let mut values = &self.raw - &means;
        let preprocessing = match mode {
            PreprocessMode::Center => Preprocessing::Centered { means: means.to_vec() },
            PreprocessMode::Autoscale => {
                let mut scales = Vec::with_capacity(values.ncols());
                let mut zero_variance = Vec::with_capacity(values.ncols());
                for (j, mut col) in values.columns_mut().into_iter().enumerate() {
                    let sd = (col.iter().map(|v| v * v).sum::<f64>() / (n - 1.0)).sqrt();
                    let magnitude =
                        self.raw.column(j).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                    let zero = sd <= 1e-12 * magnitude;
                    if zero {
                        col.fill(0.0);
                        scales.push(1.0);
                    } else {
                        col.mapv_inplace(|v| v / sd);
                        scales.push(sd);
                    }
                    zero_variance.push(zero);
                }
                Preprocessing::Autoscaled { means: means.to_vec(), scales, zero_variance }
            }
        };
        Ok(Dataset {
            samples: self.samples.clone(),
            variables: self.variables.clone(),
            raw: self.raw.clone(),
            values,
            preprocessing,
        })
    }

    /// Applies the stored preprocessing to a row given in original units.
    pub fn transform_row(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_len(self.n_variables(), x.len())?;
        Ok(apply_preprocessing(&self.preprocessing, x))
    }

    pub fn samples(&self) -> &[String] {
        &self.samples
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    /// The matrix downstream models are fitted on.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn raw(&self) -> &Array2<f64> {
        &self.raw
    }

    pub fn preprocessing(&self) -> &Preprocessing {
        &self.preprocessing
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_variables(&self) -> usize {
        self.values.ncols()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    pub fn summary(&self) -> DatasetSummary {
        let zero_variance = match &self.preprocessing {
            Preprocessing::Autoscaled { zero_variance, .. } => self
                .variables
                .iter()
                .zip(zero_variance)
                .filter(|(_, z)| **z)
                .map(|(v, _)| v.clone())
                .collect(),
            _ => Vec::new(),
        };
        DatasetSummary {
            n_samples: self.n_samples(),
            n_variables: self.n_variables(),
            samples: self.samples.clone(),
            variables: self.variables.clone(),
            preprocessing: self.preprocessing.name().to_owned(),
            zero_variance,
        }
    }
}

pub(crate) fn apply_preprocessing(p: &Preprocessing, x: ArrayView1<f64>) -> Array1<f64> {
    match p {
        Preprocessing::Raw => x.to_owned(),
        Preprocessing::Centered { means } => {
            x.iter().zip(means).map(|(v, m)| v - m).collect()
        }
        Preprocessing::Autoscaled { means, scales, .. } => {
            x.iter().zip(means).zip(scales).map(|((v, m), s)| (v - m) / s).collect()
        }
    }
}

pub(crate) fn undo_preprocessing(p: &Preprocessing, x: ArrayView1<f64>) -> Array1<f64> {
    match p {
        Preprocessing::Raw => x.to_owned(),
        Preprocessing::Centered { means } => {
            x.iter().zip(means).map(|(v, m)| v + m).collect()
        }
        Preprocessing::Autoscaled { means, scales, .. } => {
            x.iter().zip(means).zip(scales).map(|((v, m), s)| v * s + m).collect()
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

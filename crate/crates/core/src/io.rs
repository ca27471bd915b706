//! File formats: model descriptions (TOML), matrix sidecars and trajectory
//! CSV files, plus the parameter digest.
//!
//! Floats are written either as 17 significant digits (CSV) or with the
//! shortest representation that parses back to the same bits (TOML); both
//! round-trip exactly.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{Activation, Form, Model, ModelParams, TimeDomain};
use crate::simulate::{TimeGrid, Trajectory, TrajectoryMeta};

/// A single invalid configuration field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Every problem found while validating a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigErrors(pub Vec<FieldError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration")?;
        for e in &self.0 {
            write!(f, "\n  {e}")?;
        }
        Ok(())
    }
}

impl ConfigErrors {
    pub fn into_result(errors: Vec<FieldError>) -> Result<(), ConfigErrors> {
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errors))
        }
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed trajectory file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Config(#[from] ConfigErrors),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FormSpec {
    #[default]
    Tanh,
    Identity,
    Linearized,
}

/// Serializable description of a [`Model`] in any form.
///
/// Matrices are given inline as arrays of rows, or through a CSV sidecar
/// (`w_file`, `w_in_file`) resolved relative to the config file. A model
/// is discrete iff `effective_step` is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub lambda: f64,
    #[serde(default)]
    pub form: FormSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_in: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_in_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], path: &str, errors: &mut Vec<FieldError>) -> Option<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        errors.push(FieldError::new(format!("{path}[{i}]"), format!("row has {} entries, expected {ncols}", rows[i].len())));
        return None;
    }
    Some(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

/// Read a headerless CSV of numbers into a matrix, one CSV row per matrix row.
pub fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let row = rec
            .iter()
            .filter(|f| !f.is_empty())
            .map(|f| f.parse::<f64>().map_err(|e| format!("row {i}: `{f}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

impl ModelSpec {
    /// Inline description of `model`; the result reloads to an equal model.
    pub fn from_model(model: &Model) -> Self {
        let p = model.params();
        let form = match model.form() {
            Form::Nonlinear(Activation::Tanh) => FormSpec::Tanh,
            Form::Nonlinear(Activation::Identity) => FormSpec::Identity,
            Form::Linearized => FormSpec::Linearized,
        };
        ModelSpec {
            lambda: p.lambda(),
            form,
            gain: Some(model.gain()),
            effective_step: model.effective_step(),
            w: Some(rows_of(p.w())),
            w_file: None,
            w_in: (p.n_inputs() > 0).then(|| rows_of(p.w_in())),
            w_in_file: None,
            b: Some(p.b().iter().copied().collect()),
        }
    }

    /// Build the model, collecting every problem under `path`.
    pub fn build(&self, path: &str, base_dir: &Path) -> Result<Model, ConfigErrors> {
        let mut errors = Vec::new();
        let load = |inline: &Option<Vec<Vec<f64>>>, file: &Option<PathBuf>, key: &str, errors: &mut Vec<FieldError>| match (inline, file) {
            (Some(_), Some(_)) => {
                errors.push(FieldError::new(format!("{path}.{key}"), format!("give either `{key}` or `{key}_file`, not both")));
                None
            }
            (Some(rows), None) => Some(rows.clone()),
            (None, Some(f)) => match read_matrix_csv(&base_dir.join(f)) {
                Ok(rows) => Some(rows),
                Err(e) => {
                    errors.push(FieldError::new(format!("{path}.{key}_file"), e));
                    None
                }
            },
            (None, None) => None,
        };

        let w_rows = load(&self.w, &self.w_file, "w", &mut errors);
        if w_rows.is_none() && self.w.is_none() && self.w_file.is_none() {
            errors.push(FieldError::new(format!("{path}.w"), "recurrent weights are required"));
        }
        let w = w_rows.and_then(|r| matrix_from_rows(&r, &format!("{path}.w"), &mut errors));
        let n = w.as_ref().map_or(0, DMatrix::nrows);
        let w_in = match load(&self.w_in, &self.w_in_file, "w_in", &mut errors) {
            Some(rows) if rows.iter().all(Vec::is_empty) && rows.len() == n => Some(DMatrix::zeros(n, 0)),
            Some(rows) => matrix_from_rows(&rows, &format!("{path}.w_in"), &mut errors),
            None => Some(DMatrix::zeros(n, 0)),
        };
        let b = DVector::from_vec(self.b.clone().unwrap_or_else(|| vec![0.0; n]));

        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            errors.push(FieldError::new(format!("{path}.lambda"), format!("must be finite and > 0, got {}", self.lambda)));
        }
        let gain = self.gain.unwrap_or(1.0);
        if !(gain.is_finite() && gain > 0.0) {
            errors.push(FieldError::new(format!("{path}.gain"), format!("must be finite and > 0, got {gain}")));
        }
        if let Some(s) = self.effective_step {
            if !(s.is_finite() && s > 0.0) {
                errors.push(FieldError::new(format!("{path}.effective_step"), format!("must be finite and > 0, got {s}")));
            }
        }
        let (Some(w), Some(w_in)) = (w, w_in) else {
            return Err(ConfigErrors(errors));
        };
        if !errors.is_empty() {
            return Err(ConfigErrors(errors));
        }
        let params = ModelParams::new(self.lambda, w, w_in, b).map_err(|e| ConfigErrors(vec![FieldError::new(path, e.to_string())]))?;
        let form = match self.form {
            FormSpec::Tanh => Form::Nonlinear(Activation::Tanh),
            FormSpec::Identity => Form::Nonlinear(Activation::Identity),
            FormSpec::Linearized => Form::Linearized,
        };
        let domain = match self.effective_step {
            Some(effective_step) => TimeDomain::Discrete { effective_step },
            None => TimeDomain::Continuous,
        };
        Model::from_parts(params, domain, form, gain).map_err(|e| ConfigErrors(vec![FieldError::new(path, e.to_string())]))
    }

    /// Canonical TOML text of an inline model description.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model spec serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

/// 64-bit digest (leading bytes of SHA-256) of the canonical serialization.
pub fn model_digest(model: &Model) -> String {
    text_digest(&ModelSpec::from_model(model).to_toml())
}

/// 64-bit digest of arbitrary text, as 16 hex digits.
pub fn text_digest(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&hash[..8]);
    format!("{:016x}", u64::from_be_bytes(bytes))
}

/// Fixed 17-significant-digit scientific notation.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Write `t,h_1,...,h_N` with one row per stored state.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<(), IoError> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let n = traj.n_units();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("h_{i}")));
    wtr.write_record(&header)?;
    for (k, h) in traj.states.iter().enumerate() {
        let mut row = Vec::with_capacity(n + 1);
        row.push(format_f64(traj.grid.time(k)));
        row.extend(h.iter().map(|&v| format_f64(v)));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|source| IoError::File { path: PathBuf::from("<csv>"), source })?;
    Ok(())
}

/// Times and states read back from a trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

pub fn read_trajectory_csv<R: Read>(input: R) -> Result<CsvTrajectory, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("t") {
        return Err(IoError::Malformed("first column must be `t`".into()));
    }
    for (i, h) in headers.iter().skip(1).enumerate() {
        if h != format!("h_{}", i + 1) {
            return Err(IoError::Malformed(format!("unexpected column `{h}`")));
        }
    }
    let n = headers.len() - 1;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| IoError::Malformed(format!("row {row}: `{f}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        times.push(vals[0]);
        states.push(DVector::from_column_slice(&vals[1..=n]));
    }
    Ok(CsvTrajectory { times, states })
}

/// Structured mirror of a [`Trajectory`] for JSON export.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRecord<'a> {
    pub grid: &'a TimeGrid,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub meta: &'a TrajectoryMeta,
}

impl<'a> TrajectoryRecord<'a> {
    pub fn new(traj: &'a Trajectory) -> Self {
        TrajectoryRecord {
            grid: &traj.grid,
            times: (0..traj.states.len()).map(|k| traj.grid.time(k)).collect(),
            states: traj.states.iter().map(|h| h.iter().copied().collect()).collect(),
            inputs: traj.inputs.iter().map(|x| x.iter().copied().collect()).collect(),
            meta: &traj.meta,
        }
    }
}

//! Experiment configuration: one TOML document drives every subcommand.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use ctrnn::io::{read_matrix_csv, ConfigErrors, FieldError, ModelSpec};
use ctrnn::verify::{random_model, EnsembleSpec, SuiteConfig};
use ctrnn::{Activation, InputSignal, Model, SignalKind, TransformStep};

/// Draws one member of a seeded random ensemble as the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSource {
    pub index: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "defaults::n_units")]
    pub n_units: usize,
    #[serde(default = "defaults::n_inputs")]
    pub n_inputs: usize,
    #[serde(default = "defaults::weight_std_gain")]
    pub weight_std_gain: f64,
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    #[serde(default = "defaults::activation")]
    pub activation: Activation,
    #[serde(default = "defaults::bias_std")]
    pub bias_std: f64,
}

mod defaults {
    use ctrnn::verify::EnsembleSpec;
    use ctrnn::Activation;

    pub fn n_units() -> usize {
        EnsembleSpec::default().n_units
    }
    pub fn n_inputs() -> usize {
        EnsembleSpec::default().n_inputs
    }
    pub fn weight_std_gain() -> f64 {
        EnsembleSpec::default().weight_std_gain
    }
    pub fn lambda() -> f64 {
        EnsembleSpec::default().lambda
    }
    pub fn activation() -> Activation {
        EnsembleSpec::default().activation
    }
    pub fn bias_std() -> f64 {
        EnsembleSpec::default().bias_std
    }
    pub fn substeps() -> usize {
        ctrnn::simulate::DEFAULT_SUBSTEPS
    }
    pub fn yes() -> bool {
        true
    }
    pub fn out_dir() -> std::path::PathBuf {
        "out".into()
    }
    pub fn formats() -> Vec<super::Format> {
        vec![super::Format::Csv, super::Format::Json]
    }
}

impl EnsembleSource {
    pub fn spec(&self, fallback_seed: u64) -> EnsembleSpec {
        EnsembleSpec {
            seed: self.seed.unwrap_or(fallback_seed),
            count: self.index + 1,
            n_units: self.n_units,
            n_inputs: self.n_inputs,
            weight_std_gain: self.weight_std_gain,
            lambda: self.lambda,
            activation: self.activation,
            bias_std: self.bias_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalConfig {
    Zero {},
    Constant {
        values: Vec<f64>,
    },
    Step {
        onset: f64,
        values: Vec<f64>,
    },
    Sine {
        amplitudes: Vec<f64>,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Zero-order hold over rows of samples, inline or from a CSV file.
    Samples {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<PathBuf>,
        sample_step: f64,
    },
}

impl SignalConfig {
    pub fn build(&self, path: &str, n_inputs: usize, base_dir: &Path) -> Result<InputSignal, ConfigErrors> {
        let err = |field: &str, msg: String| ConfigErrors(vec![FieldError::new(format!("{path}.{field}"), msg)]);
        let vector = |field: &str, v: &[f64]| {
            if v.len() == n_inputs {
                Ok(DVector::from_column_slice(v))
            } else {
                Err(err(field, format!("has {} entries, model has {n_inputs} inputs", v.len())))
            }
        };
        let kind = match self {
            SignalConfig::Zero {} => SignalKind::Zero { dim: n_inputs },
            SignalConfig::Constant { values } => SignalKind::Constant { values: vector("values", values)? },
            SignalConfig::Step { onset, values } => SignalKind::Step { onset: *onset, values: vector("values", values)? },
            SignalConfig::Sine { amplitudes, frequency, phase } => {
                SignalKind::Sine { amplitudes: vector("amplitudes", amplitudes)?, frequency: *frequency, phase: *phase }
            }
            SignalConfig::Samples { values, file, sample_step } => {
                let rows = match (values, file) {
                    (Some(v), None) => v.clone(),
                    (None, Some(f)) => read_matrix_csv(&base_dir.join(f)).map_err(|e| err("file", e))?,
                    _ => return Err(err("values", "give exactly one of `values` or `file`".into())),
                };
                if rows.is_empty() {
                    return Err(err("values", "needs at least one sample row".into()));
                }
                if let Some(i) = rows.iter().position(|r| r.len() != n_inputs) {
                    return Err(err(&format!("values[{i}]"), format!("has {} entries, model has {n_inputs} inputs", rows[i].len())));
                }
                let samples = DMatrix::from_row_iterator(rows.len(), n_inputs, rows.iter().flatten().copied());
                SignalKind::PiecewiseConstant { samples, sample_step: *sample_step }
            }
        };
        InputSignal::new(kind).map_err(|e| ConfigErrors(vec![FieldError::new(path, e.to_string())]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorChoice {
    /// Euler map of a discrete model.
    #[default]
    Euler,
    /// RK4 reference solve of a continuous model.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub h0: Vec<f64>,
    pub n_steps: usize,
    #[serde(default)]
    pub t_start: f64,
    /// Defaults to `t_start + n_steps·Δ` for discrete models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub generator: GeneratorChoice,
    #[serde(default = "defaults::substeps")]
    pub substeps: usize,
    #[serde(default = "default_signal")]
    pub signal: SignalConfig,
}

fn default_signal() -> SignalConfig {
    SignalConfig::Zero {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Constant input at which equilibria are sought. Defaults to zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    /// Newton starting point. Defaults to zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guess: Option<Vec<f64>>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "defaults::yes")]
    pub fixed_point: bool,
    #[serde(default = "defaults::yes")]
    pub stability: bool,
}

fn default_tol() -> f64 {
    ctrnn::analysis::NewtonOptions::default().tol
}

fn default_max_iter() -> usize {
    ctrnn::analysis::NewtonOptions::default().max_iter
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { x: None, guess: None, tol: default_tol(), max_iter: default_max_iter(), fixed_point: true, stability: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "defaults::out_dir")]
    pub dir: PathBuf,
    #[serde(default = "defaults::formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: defaults::out_dir(), formats: defaults::formats() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSource>,
    #[serde(default)]
    pub transforms: Vec<TransformStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub verify: SuiteConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config is valid")
    }
}

/// A parsed config plus the directory sidecar paths resolve against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

pub fn load(path: Option<&Path>) -> anyhow::Result<Loaded> {
    let Some(path) = path else {
        return Ok(Loaded { config: ExperimentConfig::default(), base_dir: PathBuf::from(".") });
    };
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    let config: ExperimentConfig = toml::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, base_dir })
}

fn positive(errs: &mut Vec<FieldError>, path: &str, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        errs.push(FieldError::new(path, format!("must be finite and > 0, got {v}")));
    }
}

fn finite_all(errs: &mut Vec<FieldError>, path: &str, v: &[f64]) {
    for (i, x) in v.iter().enumerate() {
        if !x.is_finite() {
            errs.push(FieldError::new(format!("{path}[{i}]"), "must be finite"));
        }
    }
}

impl ExperimentConfig {
    /// Checks that need no model: every field is inspected and every problem
    /// is reported.
    pub fn validate(&self) -> Vec<FieldError> {
        let mut e = Vec::new();
        if self.model.is_some() && self.ensemble.is_some() {
            e.push(FieldError::new("ensemble", "give either [model] or [ensemble], not both"));
        }
        if let Some(en) = &self.ensemble {
            let spec = en.spec(0);
            e.extend(spec.validate("ensemble"));
        }
        for (i, step) in self.transforms.iter().enumerate() {
            match *step {
                TransformStep::Rescale { tau } => positive(&mut e, &format!("transforms[{i}].tau"), tau),
                TransformStep::Discretize { delta } => positive(&mut e, &format!("transforms[{i}].delta"), delta),
                TransformStep::Linearize => {}
            }
        }
        if let Some(s) = &self.simulation {
            finite_all(&mut e, "simulation.h0", &s.h0);
            if s.n_steps == 0 {
                e.push(FieldError::new("simulation.n_steps", "must be at least 1"));
            }
            if !s.t_start.is_finite() {
                e.push(FieldError::new("simulation.t_start", "must be finite"));
            }
            if let Some(t) = s.t_end {
                if !(t.is_finite() && t > s.t_start) {
                    e.push(FieldError::new("simulation.t_end", format!("must be finite and > t_start, got {t}")));
                }
            }
            if s.substeps == 0 {
                e.push(FieldError::new("simulation.substeps", "must be at least 1"));
            }
            if let SignalConfig::Samples { sample_step, .. } = s.signal {
                positive(&mut e, "simulation.signal.sample_step", sample_step);
            }
        }
        let a = &self.analysis;
        positive(&mut e, "analysis.tol", a.tol);
        if a.max_iter == 0 {
            e.push(FieldError::new("analysis.max_iter", "must be at least 1"));
        }
        finite_all(&mut e, "analysis.x", a.x.as_deref().unwrap_or(&[]));
        finite_all(&mut e, "analysis.guess", a.guess.as_deref().unwrap_or(&[]));
        e.extend(self.verify.validate("verify"));
        if self.output.formats.is_empty() {
            e.push(FieldError::new("output.formats", "must list at least one format"));
        }
        e
    }

    /// Build the untransformed model, reporting every problem with its path.
    pub fn base_model(&self, base_dir: &Path, seed: u64) -> Result<Model, ConfigErrors> {
        match (&self.model, &self.ensemble) {
            (Some(spec), None) => spec.build("model", base_dir),
            (None, Some(en)) => random_model(&en.spec(seed), en.index).map_err(|e| ConfigErrors(vec![FieldError::new("ensemble", e.to_string())])),
            (None, None) => Err(ConfigErrors(vec![FieldError::new("model", "a [model] or [ensemble] section is required")])),
            (Some(_), Some(_)) => Err(ConfigErrors(vec![FieldError::new("ensemble", "give either [model] or [ensemble], not both")])),
        }
    }
}

/// Vector-length check against the model dimension.
pub fn sized(path: &str, v: &[f64], expected: usize, what: &str) -> Result<DVector<f64>, FieldError> {
    if v.len() == expected {
        Ok(DVector::from_column_slice(v))
    } else {
        Err(FieldError::new(path, format!("has {} entries, model has {expected} {what}", v.len())))
    }
}

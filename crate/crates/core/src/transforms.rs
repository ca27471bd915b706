//! The model transforms as maps between model forms.
//!
//! Rescaling by `τ` multiplies the gain. On a discrete model it also divides
//! the nominal step by `τ`, so the effective Euler step `γ·Δ` is left
//! untouched: regrouping the samples of an already-sliced trajectory does
//! not change the sequence itself.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Form, Model, TimeDomain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum TransformStep {
    Rescale { tau: f64 },
    Discretize { delta: f64 },
    Linearize,
}

impl std::fmt::Display for TransformStep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransformStep::Rescale { tau } => write!(f, "Rescale({tau})"),
            TransformStep::Discretize { delta } => write!(f, "Discretize({delta})"),
            TransformStep::Linearize => write!(f, "Linearize"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("rescale factor must be finite and strictly positive, got {0}")]
    InvalidFactor(f64),
    #[error("discretization step must be finite and strictly positive, got {0}")]
    InvalidStep(f64),
    #[error("model is already discrete")]
    AlreadyDiscrete,
    #[error("model is already linearized")]
    AlreadyLinearized,
    #[error("activation `{0}` is not linearizable at the origin")]
    NotLinearizable(&'static str),
    #[error("step {index} ({step}) failed: {cause}")]
    AtStep {
        index: usize,
        step: TransformStep,
        cause: Box<TransformError>,
    },
}

impl TransformError {
    /// Index of the failing step for errors coming out of [`apply_sequence`].
    pub fn step_index(&self) -> Option<usize> {
        match self {
            TransformError::AtStep { index, .. } => Some(*index),
            _ => None,
        }
    }
}

pub fn rescale(model: &Model, tau: f64) -> Result<Model, TransformError> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(TransformError::InvalidFactor(tau));
    }
    let mut out = model.clone();
    out.gain = model.gain * tau;
    Ok(out)
}

/// Slice a continuous model with nominal step `delta`. The Euler map of the
/// result is `h ← h + (γ·Δ)·F₀(h, x)`.
pub fn discretize(model: &Model, delta: f64) -> Result<Model, TransformError> {
    if !model.is_continuous() {
        return Err(TransformError::AlreadyDiscrete);
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(TransformError::InvalidStep(delta));
    }
    let mut out = model.clone();
    out.domain = TimeDomain::Discrete { effective_step: model.gain * delta };
    Ok(out)
}

pub fn linearize(model: &Model) -> Result<Model, TransformError> {
    match model.form {
        Form::Linearized => Err(TransformError::AlreadyLinearized),
        Form::Nonlinear(act) if !act.is_linearizable() => Err(TransformError::NotLinearizable(act.name())),
        Form::Nonlinear(_) => {
            let mut out = model.clone();
            out.form = Form::Linearized;
            Ok(out)
        }
    }
}

pub fn apply_step(model: &Model, step: TransformStep) -> Result<Model, TransformError> {
    match step {
        TransformStep::Rescale { tau } => rescale(model, tau),
        TransformStep::Discretize { delta } => discretize(model, delta),
        TransformStep::Linearize => linearize(model),
    }
}

/// Left-to-right fold; the first failure is reported with its index.
pub fn apply_sequence(model: &Model, steps: &[TransformStep]) -> Result<Model, TransformError> {
    steps.iter().enumerate().try_fold(model.clone(), |m, (index, &step)| {
        apply_step(&m, step).map_err(|e| TransformError::AtStep { index, step, cause: Box::new(e) })
    })
}

/// Exact field-by-field comparison of two models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamComparison {
    /// Same time-domain variant and same form variant (including activation).
    pub structurally_equal: bool,
    /// Max absolute difference over every numeric field, including the gain
    /// and the nominal step. Infinite when shapes differ.
    pub max_abs_param_diff: f64,
    /// Max absolute difference over `λ`, `w`, `w_in`, `b` only.
    pub max_abs_weight_diff: f64,
    pub gain_diff: f64,
    /// `|γ₁Δ₁ − γ₂Δ₂|` when both models are discrete.
    pub effective_step_diff: Option<f64>,
}

impl ParamComparison {
    /// Structurally equal with every numeric field bit-for-bit equal.
    pub fn is_exact(&self) -> bool {
        self.structurally_equal && self.max_abs_param_diff == 0.0 && self.effective_step_diff.unwrap_or(0.0) == 0.0
    }
}

fn max_abs_diff<'a>(a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> f64 {
    a.zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn compare_params(a: &Model, b: &Model) -> ParamComparison {
    let same_domain = matches!(
        (a.domain, b.domain),
        (TimeDomain::Continuous, TimeDomain::Continuous) | (TimeDomain::Discrete { .. }, TimeDomain::Discrete { .. })
    );
    let structurally_equal = same_domain && a.form == b.form;

    let (pa, pb) = (&a.params, &b.params);
    let same_shape = pa.w().shape() == pb.w().shape() && pa.w_in().shape() == pb.w_in().shape();
    let max_abs_weight_diff = if same_shape {
        (pa.lambda() - pb.lambda())
            .abs()
            .max(max_abs_diff(pa.w().iter(), pb.w().iter()))
            .max(max_abs_diff(pa.w_in().iter(), pb.w_in().iter()))
            .max(max_abs_diff(pa.b().iter(), pb.b().iter()))
    } else {
        f64::INFINITY
    };

    let gain_diff = (a.gain - b.gain).abs();
    let delta_diff = match (a.delta(), b.delta()) {
        (Some(x), Some(y)) => (x - y).abs(),
        _ => 0.0,
    };
    let effective_step_diff = match (a.effective_step(), b.effective_step()) {
        (Some(x), Some(y)) => Some((x - y).abs()),
        _ => None,
    };
    ParamComparison {
        structurally_equal,
        max_abs_param_diff: max_abs_weight_diff.max(gain_diff).max(delta_diff),
        max_abs_weight_diff,
        gain_diff,
        effective_step_diff,
    }
}

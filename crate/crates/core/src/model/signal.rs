use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use super::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub enum SignalKind {
    Zero { dim: usize },
    Constant { values: DVector<f64> },
    /// Zero before `onset`, `values` from `onset` on.
    Step { onset: f64, values: DVector<f64> },
    /// `amplitudes[i] * sin(2π·frequency·t + phase)`.
    Sine { amplitudes: DVector<f64>, frequency: f64, phase: f64 },
    /// Zero-order hold over `samples` (one row per sample, K×M). Times before
    /// the first sample hold row 0, times after the last hold row K−1.
    PiecewiseConstant { samples: DMatrix<f64>, sample_step: f64 },
}

/// External excitation `x(t)`, optionally viewed through a time-scale factor.
///
/// `evaluate(s)` returns the underlying value at `time_scale · s`, which is
/// how a rescaled model sees its input: `χ(s) = x(τ s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSignal {
    kind: SignalKind,
    time_scale: f64,
}

fn all_finite(v: impl IntoIterator<Item = f64>) -> bool {
    v.into_iter().all(f64::is_finite)
}

impl InputSignal {
    pub fn new(kind: SignalKind) -> Result<Self, ModelError> {
        let ok = match &kind {
            SignalKind::Zero { .. } => true,
            SignalKind::Constant { values } => all_finite(values.iter().copied()),
            SignalKind::Step { onset, values } => onset.is_finite() && all_finite(values.iter().copied()),
            SignalKind::Sine { amplitudes, frequency, phase } => {
                frequency.is_finite() && phase.is_finite() && all_finite(amplitudes.iter().copied())
            }
            SignalKind::PiecewiseConstant { samples, sample_step } => {
                if samples.nrows() == 0 {
                    return Err(ModelError::InvalidSignal("piecewise-constant signal needs at least one sample".into()));
                }
                if !(sample_step.is_finite() && *sample_step > 0.0) {
                    return Err(ModelError::InvalidSignal(format!("sample_step must be positive, got {sample_step}")));
                }
                all_finite(samples.iter().copied())
            }
        };
        if !ok {
            return Err(ModelError::NonFinite("input signal"));
        }
        Ok(InputSignal { kind, time_scale: 1.0 })
    }

    pub fn zero(dim: usize) -> Self {
        InputSignal { kind: SignalKind::Zero { dim }, time_scale: 1.0 }
    }

    pub fn constant(values: DVector<f64>) -> Result<Self, ModelError> {
        Self::new(SignalKind::Constant { values })
    }

    pub fn sine(amplitudes: DVector<f64>, frequency: f64, phase: f64) -> Result<Self, ModelError> {
        Self::new(SignalKind::Sine { amplitudes, frequency, phase })
    }

    pub fn kind(&self) -> &SignalKind {
        &self.kind
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SignalKind::Zero { dim } => *dim,
            SignalKind::Constant { values } | SignalKind::Step { values, .. } => values.len(),
            SignalKind::Sine { amplitudes, .. } => amplitudes.len(),
            SignalKind::PiecewiseConstant { samples, .. } => samples.ncols(),
        }
    }

    /// The same signal seen on a time axis stretched by `tau`.
    pub fn time_scaled(&self, tau: f64) -> Result<Self, ModelError> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(ModelError::InvalidFactor(tau));
        }
        Ok(InputSignal { kind: self.kind.clone(), time_scale: self.time_scale * tau })
    }

    pub fn evaluate(&self, s: f64) -> DVector<f64> {
        let t = self.time_scale * s;
        match &self.kind {
            SignalKind::Zero { dim } => DVector::zeros(*dim),
            SignalKind::Constant { values } => values.clone(),
            SignalKind::Step { onset, values } => {
                if t >= *onset {
                    values.clone()
                } else {
                    DVector::zeros(values.len())
                }
            }
            SignalKind::Sine { amplitudes, frequency, phase } => {
                let v = (TAU * frequency * t + phase).sin();
                amplitudes * v
            }
            SignalKind::PiecewiseConstant { samples, sample_step } => {
                let last = samples.nrows() - 1;
                let k = (t / sample_step).floor();
                let idx = if k.is_nan() || k < 0.0 {
                    0
                } else if k >= last as f64 {
                    last
                } else {
                    k as usize
                };
                samples.row(idx).transpose()
            }
        }
    }
}

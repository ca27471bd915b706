//! Network parameterization and the right-hand side of the dynamics
//!
//! ```text
//! h'(t) = γ · ( −λ h + σ(w h + b + w_in x(t)) )
//! ```
//!
//! where `γ` is the accumulated time gain left behind by rescaling. The
//! linearized form replaces `σ` by the identity, giving
//! `h' = γ · (A h + B x + b)` with `A = w − λI` and `B = w_in`.

mod activation;
mod signal;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use activation::Activation;
pub use signal::{InputSignal, SignalKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension { what: &'static str, expected: String, found: String },
    #[error("decay rate must be finite and strictly positive, got {0}")]
    NonPositiveDecay(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("factor must be finite and strictly positive, got {0}")]
    InvalidFactor(f64),
    #[error("operation requires a continuous-time model")]
    NotContinuous,
    #[error("operation requires a discrete-time model")]
    NotDiscrete,
    #[error("invalid input signal: {0}")]
    InvalidSignal(String),
}

pub(crate) fn check_len(what: &'static str, v: &DVector<f64>, expected: usize) -> Result<(), ModelError> {
    if v.len() != expected {
        return Err(ModelError::Dimension { what, expected: expected.to_string(), found: v.len().to_string() });
    }
    Ok(())
}

/// Parameters of an `N`-unit network with `M` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    lambda: f64,
    w: DMatrix<f64>,
    w_in: DMatrix<f64>,
    b: DVector<f64>,
}

impl ModelParams {
    /// `w` is N×N, `w_in` is N×M (pass an N×0 matrix for an input-free
    /// network), `b` has length N.
    pub fn new(lambda: f64, w: DMatrix<f64>, w_in: DMatrix<f64>, b: DVector<f64>) -> Result<Self, ModelError> {
        let n = b.len();
        if n == 0 {
            return Err(ModelError::Dimension { what: "bias", expected: "at least one unit".into(), found: "0".into() });
        }
        if w.shape() != (n, n) {
            return Err(ModelError::Dimension {
                what: "recurrent weights",
                expected: format!("{n}x{n}"),
                found: format!("{}x{}", w.nrows(), w.ncols()),
            });
        }
        if w_in.nrows() != n {
            return Err(ModelError::Dimension {
                what: "input weights",
                expected: format!("{n}xM"),
                found: format!("{}x{}", w_in.nrows(), w_in.ncols()),
            });
        }
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(ModelError::NonPositiveDecay(lambda));
        }
        if !w.iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFinite("recurrent weights"));
        }
        if !w_in.iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFinite("input weights"));
        }
        if !b.iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFinite("bias"));
        }
        Ok(ModelParams { lambda, w, w_in, b })
    }

    /// Input-free network with zero bias.
    pub fn autonomous(lambda: f64, w: DMatrix<f64>) -> Result<Self, ModelError> {
        let n = w.nrows();
        Self::new(lambda, w, DMatrix::zeros(n, 0), DVector::zeros(n))
    }

    pub fn n_units(&self) -> usize {
        self.b.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.w_in.ncols()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn w_in(&self) -> &DMatrix<f64> {
        &self.w_in
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// `A = w − λI`.
    pub fn effective_a(&self) -> DMatrix<f64> {
        let n = self.n_units();
        &self.w - DMatrix::identity(n, n) * self.lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeDomain {
    Continuous,
    /// Euler map with effective step `γ·Δ`. The nominal step `Δ` is derived
    /// as `effective_step / gain`.
    Discrete { effective_step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Nonlinear(Activation),
    Linearized,
}

impl Form {
    pub fn tag(self) -> &'static str {
        match self {
            Form::Nonlinear(Activation::Tanh) => "nonlinear-tanh",
            Form::Nonlinear(Activation::Identity) => "nonlinear-identity",
            Form::Linearized => "linearized",
        }
    }
}

/// A network in one of four forms (continuous/discrete × nonlinear/linearized)
/// together with the time gain accumulated by rescaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub(crate) params: ModelParams,
    pub(crate) domain: TimeDomain,
    pub(crate) form: Form,
    pub(crate) gain: f64,
}

impl Model {
    /// Fresh continuous, nonlinear model with unit gain.
    pub fn new(params: ModelParams, activation: Activation) -> Self {
        Model { params, domain: TimeDomain::Continuous, form: Form::Nonlinear(activation), gain: 1.0 }
    }

    /// Assemble a model in an arbitrary state, e.g. when reloading one that
    /// was serialized after transforms were applied.
    pub fn from_parts(params: ModelParams, domain: TimeDomain, form: Form, gain: f64) -> Result<Self, ModelError> {
        if !(gain.is_finite() && gain > 0.0) {
            return Err(ModelError::InvalidFactor(gain));
        }
        if let TimeDomain::Discrete { effective_step } = domain {
            if !(effective_step.is_finite() && effective_step > 0.0) {
                return Err(ModelError::InvalidFactor(effective_step));
            }
        }
        Ok(Model { params, domain, form, gain })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn time_domain(&self) -> TimeDomain {
        self.domain
    }

    pub fn form(&self) -> Form {
        self.form
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn n_units(&self) -> usize {
        self.params.n_units()
    }

    pub fn n_inputs(&self) -> usize {
        self.params.n_inputs()
    }

    pub fn is_continuous(&self) -> bool {
        self.domain == TimeDomain::Continuous
    }

    pub fn is_discrete(&self) -> bool {
        !self.is_continuous()
    }

    pub fn is_linearized(&self) -> bool {
        self.form == Form::Linearized
    }

    /// Nominal Euler step `Δ`; `None` for continuous models.
    pub fn delta(&self) -> Option<f64> {
        self.effective_step().map(|s| s / self.gain)
    }

    /// `γ·Δ`, the only step-like quantity that enters the Euler map.
    pub fn effective_step(&self) -> Option<f64> {
        match self.domain {
            TimeDomain::Continuous => None,
            TimeDomain::Discrete { effective_step } => Some(effective_step),
        }
    }

    /// `w − λI`; the gain is not folded in.
    pub fn effective_a(&self) -> DMatrix<f64> {
        self.params.effective_a()
    }

    pub(crate) fn check_state(&self, h: &DVector<f64>, x: &DVector<f64>) -> Result<(), ModelError> {
        check_len("state", h, self.n_units())?;
        check_len("input", x, self.n_inputs())
    }

    /// Net input `w h + b + w_in x`.
    pub(crate) fn net_input(&self, h: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        let mut phi = &p.w * h + &p.b;
        if p.n_inputs() > 0 {
            phi += &p.w_in * x;
        }
        phi
    }

    /// Gain-free right-hand side `F₀(h, x)`.
    ///
    /// The linearized form is evaluated as `−λh + (w h + b + w_in x)`, the same
    /// operation order as the nonlinear form with `σ = id`, so an identity
    /// network and its linearization produce bit-identical sequences.
    pub(crate) fn drift(&self, h: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        let phi = self.net_input(h, x);
        let lambda = self.params.lambda;
        match self.form {
            Form::Nonlinear(act) => DVector::from_fn(h.len(), |i, _| -lambda * h[i] + act.value(phi[i])),
            Form::Linearized => DVector::from_fn(h.len(), |i, _| -lambda * h[i] + phi[i]),
        }
    }

    /// Dimension-checked `F₀(h, x)`; valid in either time domain since fixed
    /// points and Jacobians are shared between them.
    pub fn gain_free_rhs(&self, h: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        self.check_state(h, x)?;
        Ok(self.drift(h, x))
    }

    /// `F(h, x) = γ·F₀(h, x)` for a continuous model.
    pub fn rhs(&self, h: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        if !self.is_continuous() {
            return Err(ModelError::NotContinuous);
        }
        self.check_state(h, x)?;
        let gain = self.gain;
        Ok(self.drift(h, x).map(|f| gain * f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn scalar(lambda: f64, w: f64, act: Activation) -> Model {
        Model::new(ModelParams::autonomous(lambda, dmatrix![w]).unwrap(), act)
    }

    #[test]
    fn minimal_scalar_model() {
        let m = scalar(1.0, 0.0, Activation::Tanh);
        assert_eq!(m.n_units(), 1);
        assert_eq!(m.n_inputs(), 0);
        assert_eq!(m.gain(), 1.0);
        assert!(m.is_continuous());
        assert_eq!(m.form(), Form::Nonlinear(Activation::Tanh));
    }

    #[test]
    fn rejects_malformed_params() {
        let bad_shape = ModelParams::new(1.0, DMatrix::zeros(3, 2), DMatrix::zeros(2, 0), DVector::zeros(2));
        assert!(matches!(bad_shape, Err(ModelError::Dimension { .. })));
        let bad_in = ModelParams::new(1.0, DMatrix::zeros(2, 2), DMatrix::zeros(3, 1), DVector::zeros(2));
        assert!(matches!(bad_in, Err(ModelError::Dimension { .. })));
        assert!(matches!(ModelParams::autonomous(0.0, dmatrix![0.0]), Err(ModelError::NonPositiveDecay(_))));
        assert!(matches!(ModelParams::autonomous(-1.0, dmatrix![0.0]), Err(ModelError::NonPositiveDecay(_))));
        assert!(matches!(ModelParams::autonomous(1.0, dmatrix![f64::NAN]), Err(ModelError::NonFinite(_))));
        let inf_bias = ModelParams::new(1.0, dmatrix![0.0], DMatrix::zeros(1, 0), dvector![f64::INFINITY]);
        assert!(matches!(inf_bias, Err(ModelError::NonFinite(_))));
    }

    #[test]
    fn effective_a_examples() {
        let m = Model::new(ModelParams::autonomous(1.0, DMatrix::zeros(2, 2)).unwrap(), Activation::Tanh);
        assert_eq!(m.effective_a(), -DMatrix::<f64>::identity(2, 2));
        let m = Model::new(ModelParams::autonomous(1.0, DMatrix::identity(2, 2)).unwrap(), Activation::Tanh);
        assert_eq!(m.effective_a(), DMatrix::<f64>::zeros(2, 2));
        let m = Model::new(ModelParams::autonomous(0.5, dmatrix![0.0, 1.0; -1.0, 0.0]).unwrap(), Activation::Tanh);
        assert_eq!(m.effective_a(), dmatrix![-0.5, 1.0; -1.0, -0.5]);
    }

    #[test]
    fn rhs_examples() {
        let none = DVector::zeros(0);
        let mut lin = scalar(1.0, 0.0, Activation::Tanh);
        lin.form = Form::Linearized;
        assert_eq!(lin.rhs(&dvector![2.0], &none).unwrap(), dvector![-2.0]);

        // −1 + tanh(1), arbitrary-precision reference.
        let m = scalar(1.0, 1.0, Activation::Tanh);
        let f = m.rhs(&dvector![1.0], &none).unwrap();
        assert!((f[0] - (-0.238_405_844_044_235_111_88)).abs() <= 2.0 * f64::EPSILON);

        for form in [Form::Nonlinear(Activation::Tanh), Form::Linearized] {
            let mut m = scalar(0.7, 2.0, Activation::Tanh);
            m.form = form;
            assert_eq!(m.rhs(&dvector![0.0], &none).unwrap(), dvector![0.0]);
        }
    }

    #[test]
    fn rhs_rejects_discrete_and_bad_dims() {
        let mut m = scalar(1.0, 0.0, Activation::Tanh);
        assert!(matches!(m.rhs(&dvector![1.0, 2.0], &DVector::zeros(0)), Err(ModelError::Dimension { .. })));
        assert!(matches!(m.rhs(&dvector![1.0], &dvector![1.0]), Err(ModelError::Dimension { .. })));
        m.domain = TimeDomain::Discrete { effective_step: 0.1 };
        assert_eq!(m.rhs(&dvector![1.0], &DVector::zeros(0)), Err(ModelError::NotContinuous));
    }

    #[test]
    fn from_parts_validates_gain_and_step() {
        let p = ModelParams::autonomous(1.0, dmatrix![0.0]).unwrap();
        assert!(Model::from_parts(p.clone(), TimeDomain::Continuous, Form::Linearized, 0.0).is_err());
        assert!(Model::from_parts(p.clone(), TimeDomain::Discrete { effective_step: -0.1 }, Form::Linearized, 1.0).is_err());
        let m = Model::from_parts(p, TimeDomain::Discrete { effective_step: 0.1 }, Form::Linearized, 2.0).unwrap();
        assert_eq!(m.delta(), Some(0.05));
    }
}

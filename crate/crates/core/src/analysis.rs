//! Equilibria and eigenvalue-based stability classification.

use nalgebra::{Complex, DMatrix, DVector, Schur};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::model::{Activation, Form, Model, ModelError};

/// Half-width of the band around the stability boundary that is reported as
/// [`Stability::Marginal`].
pub const MARGIN_TOL: f64 = 1e-9;

/// Upper bound on the condition estimate of `A` for the closed-form linear
/// fixed point.
pub const MAX_CONDITION: f64 = 1e12;

const EIGEN_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("tolerance must be finite and positive, got {0}")]
    InvalidTolerance(f64),
    #[error("iterate became non-finite after {iterations} iterations")]
    NonFiniteIterate { iterations: usize },
    #[error("A = w - lambda*I is singular or ill-conditioned (condition estimate {condition:e})")]
    SingularA { condition: f64 },
    #[error("eigenvalue computation did not converge for a {0}x{0} matrix")]
    EigenFailure(usize),
    #[error("matrix has non-finite entries")]
    NonFiniteMatrix,
    #[error("activation `{0}` is not linearizable")]
    NotLinearizable(&'static str),
    #[error("operation requires a linearized model")]
    NotLinearized,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointResult {
    pub h_star: Vec<f64>,
    /// `‖F₀(h*, x)‖∞`, gain-free.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FixedPointResult {
    pub fn state(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.h_star)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Continuous,
    Discrete,
}

fn eigen_pairs<S: Serializer>(eigs: &[Complex<f64>], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(eigs.iter().map(|z| [z.re, z.im]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    #[serde(serialize_with = "eigen_pairs")]
    pub eigenvalues: Vec<Complex<f64>>,
    pub classification: Stability,
    /// Continuous: spectral abscissa. Discrete: spectral radius minus one.
    pub margin: f64,
    pub domain: Domain,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

fn classify(margin: f64) -> Stability {
    if margin < -MARGIN_TOL {
        Stability::Stable
    } else if margin > MARGIN_TOL {
        Stability::Unstable
    } else {
        Stability::Marginal
    }
}

fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>, AnalysisError> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(AnalysisError::NonFiniteMatrix);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_ITER).ok_or(AnalysisError::EigenFailure(m.nrows()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Gain-free Jacobian `∂F₀/∂h`.
pub(crate) fn drift_jacobian(model: &Model, h: &DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
    match model.form() {
        Form::Linearized => model.effective_a(),
        Form::Nonlinear(act) => {
            let p = model.params();
            let slope = act.apply_derivative(&model.net_input(h, x));
            let lambda = p.lambda();
            DMatrix::from_fn(h.len(), h.len(), |i, j| {
                let diag = if i == j { lambda } else { 0.0 };
                slope[i] * p.w()[(i, j)] - diag
            })
        }
    }
}

/// `γ·(−λI + diag(σ'(w h + b + w_in x))·w)`, or `γ·(w − λI)` once linearized.
pub fn jacobian(model: &Model, h: &DVector<f64>, x: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
    model.check_state(h, x)?;
    let gain = model.gain();
    Ok(drift_jacobian(model, h, x) * gain)
}

/// Newton iteration on `G(h) = −λh + σ(w h + b + w_in x)`.
///
/// The gain is irrelevant here since `F = γG` has the same zeros. Each
/// Newton step is halved until `‖G‖∞` decreases. When the Newton system is
/// singular the step falls back to `h ← h + 0.1·G(h)`. If
/// `max_iter` is exhausted the best iterate seen is returned with
/// `converged = false`.
pub fn fixed_point(model: &Model, x: &DVector<f64>, guess: &DVector<f64>, opts: NewtonOptions) -> Result<FixedPointResult, AnalysisError> {
    if !model.is_continuous() {
        return Err(ModelError::NotContinuous.into());
    }
    if !(opts.tol.is_finite() && opts.tol > 0.0) {
        return Err(AnalysisError::InvalidTolerance(opts.tol));
    }
    model.check_state(guess, x)?;

    let mut h = guess.clone();
    let mut best: Option<(DVector<f64>, f64, usize)> = None;
    for it in 0..=opts.max_iter {
        let g = model.drift(&h, x);
        let r = inf_norm(&g);
        if !r.is_finite() {
            return Err(AnalysisError::NonFiniteIterate { iterations: it });
        }
        if best.as_ref().is_none_or(|b| r < b.1) {
            best = Some((h.clone(), r, it));
        }
        if r <= opts.tol {
            return Ok(FixedPointResult { h_star: h.as_slice().to_vec(), residual: r, iterations: it, converged: true });
        }
        if it == opts.max_iter {
            break;
        }
        let step = drift_jacobian(model, &h, x)
            .lu()
            .solve(&(-&g))
            .filter(|s| s.iter().all(|v| v.is_finite()));
        match step {
            Some(s) => h = backtrack(model, x, &h, &s, r),
            None => h += &g * 0.1,
        }
        if !h.iter().all(|v| v.is_finite()) {
            return Err(AnalysisError::NonFiniteIterate { iterations: it + 1 });
        }
    }
    let (h, r, _) = best.expect("at least one residual evaluated");
    Ok(FixedPointResult { h_star: h.as_slice().to_vec(), residual: r, iterations: opts.max_iter, converged: false })
}

/// Largest `t = 2⁻ᵏ` (k ≤ 30) with `‖G(h + t·s)‖∞ < r`; the full step if none.
fn backtrack(model: &Model, x: &DVector<f64>, h: &DVector<f64>, s: &DVector<f64>, r: f64) -> DVector<f64> {
    let mut t = 1.0;
    for _ in 0..=30 {
        let trial = h + s * t;
        let rt = inf_norm(&model.drift(&trial, x));
        if rt < r {
            return trial;
        }
        t *= 0.5;
    }
    h + s
}

/// `tanh x − x` without the cancellation of the direct difference near zero.
pub fn tanh_remainder(x: f64) -> f64 {
    // Taylor coefficients of tanh from x³ to x¹⁵.
    const C: [f64; 7] = [
        -1.0 / 3.0,
        2.0 / 15.0,
        -17.0 / 315.0,
        62.0 / 2835.0,
        -1382.0 / 155_925.0,
        21_844.0 / 6_081_075.0,
        -929_569.0 / 638_512_875.0,
    ];
    if x.abs() >= 0.25 {
        return x.tanh() - x;
    }
    let x2 = x * x;
    let tail = C.iter().rev().fold(0.0, |acc, &c| acc * x2 + c);
    x * x2 * tail
}

/// Ratio of extreme singular values; infinite for an exactly singular matrix.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Closed-form equilibrium `h* = −A⁻¹(B x + b)` of a linearized model.
pub fn linear_fixed_point(model: &Model, x: &DVector<f64>) -> Result<FixedPointResult, AnalysisError> {
    if !model.is_linearized() {
        return Err(AnalysisError::NotLinearized);
    }
    model.check_state(&DVector::zeros(model.n_units()), x)?;
    let a = model.effective_a();
    let condition = condition_estimate(&a);
    if condition.is_nan() || condition >= MAX_CONDITION {
        return Err(AnalysisError::SingularA { condition });
    }
    let p = model.params();
    let mut rhs = p.b().clone();
    if model.n_inputs() > 0 {
        rhs += p.w_in() * x;
    }
    let h = a.lu().solve(&(-rhs)).ok_or(AnalysisError::SingularA { condition: f64::INFINITY })?;
    let residual = inf_norm(&model.drift(&h, x));
    Ok(FixedPointResult { h_star: h.as_slice().to_vec(), residual, iterations: 0, converged: true })
}

/// Classify a continuous-time Jacobian by its spectral abscissa.
pub fn stability_continuous(j: &DMatrix<f64>) -> Result<StabilityReport, AnalysisError> {
    let eigenvalues = eigenvalues(j)?;
    let margin = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(StabilityReport { eigenvalues, classification: classify(margin), margin, domain: Domain::Continuous })
}

/// Classify an Euler update matrix by its spectral radius.
pub fn stability_of_map(update: &DMatrix<f64>) -> Result<StabilityReport, AnalysisError> {
    let eigenvalues = eigenvalues(update)?;
    let radius = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let margin = radius - 1.0;
    Ok(StabilityReport { eigenvalues, classification: classify(margin), margin, domain: Domain::Discrete })
}

fn euler_update_matrix(step: f64, j0: DMatrix<f64>) -> DMatrix<f64> {
    let n = j0.nrows();
    DMatrix::identity(n, n) + j0 * step
}

/// Stability of the linear Euler map `h ← (I + γΔ·(w − λI)) h + ...`.
pub fn stability_discrete(model: &Model) -> Result<StabilityReport, AnalysisError> {
    let step = model.effective_step().ok_or(ModelError::NotDiscrete)?;
    if !model.is_linearized() {
        return Err(AnalysisError::NotLinearized);
    }
    stability_of_map(&euler_update_matrix(step, model.effective_a()))
}

/// Local stability of a nonlinear Euler map at `h`, normally a fixed point:
/// eigenvalues of `I + γΔ·J₀(h, x)`.
pub fn stability_discrete_at(model: &Model, h: &DVector<f64>, x: &DVector<f64>) -> Result<StabilityReport, AnalysisError> {
    let step = model.effective_step().ok_or(ModelError::NotDiscrete)?;
    model.check_state(h, x)?;
    stability_of_map(&euler_update_matrix(step, drift_jacobian(model, h, x)))
}

/// `σ(φ) − φ`, the error committed by replacing the activation with the identity.
pub fn linearization_error(kind: Activation, phi: &DVector<f64>) -> Result<DVector<f64>, AnalysisError> {
    if !kind.is_linearizable() {
        return Err(AnalysisError::NotLinearizable(kind.name()));
    }
    Ok(phi.map(|p| kind.value(p) - p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::transforms::{discretize, linearize, rescale};
    use nalgebra::{dmatrix, dvector};

    fn none() -> DVector<f64> {
        DVector::zeros(0)
    }

    fn driven_linear() -> Model {
        let p = ModelParams::new(1.0, dmatrix![0.0], dmatrix![1.0], dvector![0.0]).unwrap();
        linearize(&Model::new(p, Activation::Tanh)).unwrap()
    }

    #[test]
    fn trivial_fixed_point_takes_no_iterations() {
        let p = ModelParams::autonomous(1.0, dmatrix![0.4, -2.0; 1.0, 0.3]).unwrap();
        let m = Model::new(p, Activation::Tanh);
        let r = fixed_point(&m, &none(), &DVector::zeros(2), NewtonOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.residual, 0.0);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.h_star, vec![0.0, 0.0]);
    }

    #[test]
    fn newton_on_linear_model() {
        let r = fixed_point(&driven_linear(), &dvector![1.0], &dvector![0.0], NewtonOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.h_star[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn newton_scalar_tanh_matches_bisection() {
        // Root of 0.5 h = tanh(h) from bisection to 1e-15 on the scalar equation.
        let p = ModelParams::autonomous(0.5, dmatrix![1.0]).unwrap();
        let m = Model::new(p, Activation::Tanh);
        let r = fixed_point(&m, &none(), &dvector![1.0], NewtonOptions::default()).unwrap();
        assert!(r.converged && r.residual <= 1e-10);
        assert!((r.h_star[0] - 1.915_008_048_154_537).abs() < 1e-10);
        // Gain does not move the equilibrium.
        let r2 = fixed_point(&rescale(&m, 7.0).unwrap(), &none(), &dvector![1.0], NewtonOptions::default()).unwrap();
        assert_eq!(r.h_star, r2.h_star);
    }

    #[test]
    fn newton_singular_jacobian_falls_back_to_damped_step() {
        // J₀ = w − λ = 0 everywhere for the linear model with w = λ = 1, so
        // every step is damped: h ← h + 0.1·b.
        let p = ModelParams::new(1.0, dmatrix![1.0], DMatrix::zeros(1, 0), dvector![1.0]).unwrap();
        let m = linearize(&Model::new(p, Activation::Tanh)).unwrap();
        let r = fixed_point(&m, &none(), &dvector![0.0], NewtonOptions { tol: 1e-10, max_iter: 5 }).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 5);
        assert!((r.residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn newton_rejects_bad_input() {
        let m = driven_linear();
        assert!(matches!(
            fixed_point(&m, &dvector![1.0], &dvector![0.0], NewtonOptions { tol: 0.0, max_iter: 3 }),
            Err(AnalysisError::InvalidTolerance(_))
        ));
        let d = discretize(&m, 0.1).unwrap();
        assert!(fixed_point(&d, &dvector![1.0], &dvector![0.0], NewtonOptions::default()).is_err());
    }

    #[test]
    fn linear_fixed_point_examples() {
        let p = ModelParams::autonomous(1.0, dmatrix![0.3, 0.1; -0.2, 0.5]).unwrap();
        let m = linearize(&Model::new(p, Activation::Tanh)).unwrap();
        assert_eq!(linear_fixed_point(&m, &none()).unwrap().h_star, vec![0.0, 0.0]);

        let r = linear_fixed_point(&driven_linear(), &dvector![1.0]).unwrap();
        assert_eq!(r.h_star, vec![1.0]);
        assert!(r.converged);

        let p = ModelParams::new(1.0, DMatrix::identity(2, 2), DMatrix::zeros(2, 0), dvector![1.0, 0.0]).unwrap();
        let m = linearize(&Model::new(p, Activation::Tanh)).unwrap();
        assert!(matches!(linear_fixed_point(&m, &none()), Err(AnalysisError::SingularA { .. })));

        let nonlin = Model::new(ModelParams::autonomous(1.0, dmatrix![0.0]).unwrap(), Activation::Tanh);
        assert_eq!(linear_fixed_point(&nonlin, &none()), Err(AnalysisError::NotLinearized));
    }

    #[test]
    fn jacobian_examples() {
        let p = ModelParams::autonomous(0.7, dmatrix![0.2, 1.5; -0.4, 0.9]).unwrap();
        let m = Model::new(p, Activation::Tanh);
        let lin = linearize(&m).unwrap();
        let z = DVector::zeros(2);
        assert_eq!(jacobian(&lin, &dvector![3.0, -1.0], &none()).unwrap(), lin.effective_a());
        assert_eq!(jacobian(&m, &z, &none()).unwrap(), m.effective_a());
        let g = rescale(&m, 3.0).unwrap();
        assert_eq!(jacobian(&g, &z, &none()).unwrap(), m.effective_a() * 3.0);

        // 2(1 − tanh²2) − 1, arbitrary-precision reference.
        let p = ModelParams::autonomous(1.0, dmatrix![2.0]).unwrap();
        let m = Model::new(p, Activation::Tanh);
        let j = jacobian(&m, &dvector![1.0], &none()).unwrap();
        assert!((j[(0, 0)] - (-0.858_698_350_293_671_068_63)).abs() < 4.0 * f64::EPSILON);
        let eps = 1e-6;
        let fd = (m.rhs(&dvector![1.0 + eps], &none()).unwrap()[0] - m.rhs(&dvector![1.0 - eps], &none()).unwrap()[0]) / (2.0 * eps);
        assert!((fd - j[(0, 0)]).abs() <= 1e-6);
    }

    #[test]
    fn continuous_stability_examples() {
        let r = stability_continuous(&-DMatrix::<f64>::identity(3, 3)).unwrap();
        assert_eq!((r.classification, r.margin), (Stability::Stable, -1.0));
        let r = stability_continuous(&dmatrix![0.0, 1.0; -1.0, 0.0]).unwrap();
        assert_eq!(r.classification, Stability::Marginal);
        assert!(r.eigenvalues.iter().all(|z| (z.im.abs() - 1.0).abs() < 1e-12));
        let r = stability_continuous(&dmatrix![0.5]).unwrap();
        assert_eq!((r.classification, r.margin), (Stability::Unstable, 0.5));
        assert_eq!(stability_continuous(&dmatrix![f64::NAN]), Err(AnalysisError::NonFiniteMatrix));
    }

    #[test]
    fn discrete_stability_examples() {
        let base = linearize(&Model::new(ModelParams::autonomous(1.0, dmatrix![0.0]).unwrap(), Activation::Tanh)).unwrap();
        let cases = [(0.1, 0.9, Stability::Stable), (2.5, -1.5, Stability::Unstable), (2.0, -1.0, Stability::Marginal)];
        for (step, eig, class) in cases {
            let r = stability_discrete(&discretize(&base, step).unwrap()).unwrap();
            assert_eq!(r.classification, class, "step {step}");
            assert_eq!(r.eigenvalues[0].re, eig);
            assert_eq!(r.domain, Domain::Discrete);
        }
        // Continuous-stable yet discrete-unstable.
        assert_eq!(stability_continuous(&jacobian(&base, &dvector![0.0], &none()).unwrap()).unwrap().classification, Stability::Stable);

        let nonlin = Model::new(ModelParams::autonomous(1.0, dmatrix![0.0]).unwrap(), Activation::Tanh);
        assert_eq!(stability_discrete(&discretize(&nonlin, 0.1).unwrap()), Err(AnalysisError::NotLinearized));
        assert!(stability_discrete(&base).is_err());
        let at = stability_discrete_at(&discretize(&nonlin, 2.5).unwrap(), &dvector![0.0], &none()).unwrap();
        assert_eq!(at.classification, Stability::Unstable);
    }

    #[test]
    fn linearization_error_examples() {
        assert_eq!(linearization_error(Activation::Tanh, &DVector::zeros(3)).unwrap(), DVector::zeros(3));
        assert_eq!(linearization_error(Activation::Identity, &dvector![4.0, -0.1]).unwrap(), DVector::zeros(2));
        let e = linearization_error(Activation::Tanh, &dvector![0.5]).unwrap();
        assert!((e[0] - (-0.037_882_842_739_990_241_498)).abs() < 1e-16);
    }

    #[test]
    fn tanh_remainder_bound_on_grid() {
        let n = 10_000;
        for k in 0..n {
            let x = -1.0 + 2.0 * k as f64 / (n - 1) as f64;
            assert!(tanh_remainder(x).abs() <= x.abs().powi(3) / 3.0, "x = {x}");
        }
    }

    #[test]
    fn report_serializes_eigen_pairs() {
        let r = stability_continuous(&dmatrix![0.0, 1.0; -1.0, 0.0]).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["classification"], "marginal");
        assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 2);
        assert_eq!(v["eigenvalues"][0].as_array().unwrap().len(), 2);
    }
}

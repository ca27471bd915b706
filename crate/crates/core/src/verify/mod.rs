//! Seeded, reproducible checks of the algebraic claims about the transforms.
//!
//! Every check is a pure function of its inputs. Random fixtures are drawn
//! from per-item ChaCha streams keyed by
//! `(seed, purpose, index)`, so results do not depend on evaluation order
//! and the parallel suite is identical to a sequential run.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, NewtonOptions, Stability};
use crate::io::{ConfigErrors, FieldError};
use crate::model::{Activation, InputSignal, Model, ModelError, ModelParams};
use crate::simulate::{self, reference_solve, sequence_diff, simulate, trajectory_diff, SimulationError, TimeGrid, Trajectory};
use crate::transforms::{apply_sequence, compare_params, ParamComparison, TransformError, TransformStep};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error("model index {index} out of range for an ensemble of {count}")]
    IndexOutOfRange { index: usize, count: usize },
}

/// Gaussian random-network ensemble: `w_ij ~ N(0, (g/√N)²)`,
/// `w_in_ij ~ N(0, 1/N)`, `b_i ~ N(0, bias_std²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSpec {
    pub seed: u64,
    pub count: usize,
    pub n_units: usize,
    pub n_inputs: usize,
    pub weight_std_gain: f64,
    pub lambda: f64,
    pub activation: Activation,
    pub bias_std: f64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            seed: 0,
            count: 100,
            n_units: 8,
            n_inputs: 2,
            weight_std_gain: 0.9,
            lambda: 1.0,
            activation: Activation::Tanh,
            bias_std: 0.1,
        }
    }
}

impl EnsembleSpec {
    pub fn validate(&self, path: &str) -> Vec<FieldError> {
        let mut errs = Vec::new();
        if self.n_units == 0 {
            errs.push(FieldError::new(format!("{path}.n_units"), "must be at least 1"));
        }
        if !(self.weight_std_gain.is_finite() && self.weight_std_gain >= 0.0) {
            errs.push(FieldError::new(format!("{path}.weight_std_gain"), "must be finite and >= 0"));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            errs.push(FieldError::new(format!("{path}.lambda"), "must be finite and > 0"));
        }
        if !(self.bias_std.is_finite() && self.bias_std >= 0.0) {
            errs.push(FieldError::new(format!("{path}.bias_std"), "must be finite and >= 0"));
        }
        errs
    }
}

const PURPOSE_MODEL: u64 = 1;
const PURPOSE_STATE: u64 = 2;
const PURPOSE_STEP: u64 = 3;
const PURPOSE_SIGNAL: u64 = 4;
const PURPOSE_PROBE: u64 = 5;

fn derived_rng(seed: u64, purpose: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 56) | index as u64);
    rng
}

fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize, std: f64) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; len];
    }
    let dist = Normal::new(0.0, std).expect("std is finite and positive");
    (0..len).map(|_| dist.sample(rng)).collect()
}

/// Model `index` of the ensemble: continuous, nonlinear, unit gain.
pub fn random_model(spec: &EnsembleSpec, index: usize) -> Result<Model, VerifyError> {
    if index >= spec.count {
        return Err(VerifyError::IndexOutOfRange { index, count: spec.count });
    }
    ConfigErrors::into_result(spec.validate("ensemble"))?;
    let (n, m) = (spec.n_units, spec.n_inputs);
    let mut rng = derived_rng(spec.seed, PURPOSE_MODEL, index);
    let w = gaussian_vec(&mut rng, n * n, spec.weight_std_gain / (n as f64).sqrt());
    let w_in = gaussian_vec(&mut rng, n * m, 1.0 / (n as f64).sqrt());
    let b = gaussian_vec(&mut rng, n, spec.bias_std);
    let params = ModelParams::new(spec.lambda, DMatrix::from_vec(n, n, w), DMatrix::from_vec(n, m, w_in), DVector::from_vec(b))?;
    Ok(Model::new(params, spec.activation))
}

/// Seeded initial state with i.i.d. `N(0, scale²)` entries.
pub fn random_state(spec: &EnsembleSpec, index: usize, scale: f64) -> DVector<f64> {
    let mut rng = derived_rng(spec.seed, PURPOSE_STATE, index);
    DVector::from_vec(gaussian_vec(&mut rng, spec.n_units, scale))
}

/// Seeded sinusoidal drive for ensemble member `index` (zero when `M = 0`).
pub fn random_signal(spec: &EnsembleSpec, index: usize) -> InputSignal {
    if spec.n_inputs == 0 {
        return InputSignal::zero(0);
    }
    let mut rng = derived_rng(spec.seed, PURPOSE_SIGNAL, index);
    let amps = DVector::from_vec(gaussian_vec(&mut rng, spec.n_inputs, 0.5));
    let freq = rng.random_range(0.2..2.0);
    let phase = rng.random_range(0.0..TAU);
    InputSignal::sine(amps, freq, phase).expect("finite parameters")
}

/// Random model whose recurrent matrix is rescaled to spectral norm
/// `norm_fraction · λ`, which keeps trajectories bounded.
pub fn bounded_model(spec: &EnsembleSpec, index: usize, norm_fraction: f64) -> Result<Model, VerifyError> {
    let m = random_model(spec, index)?;
    let p = m.params();
    let norm = p.w().clone().singular_values().max();
    let target = norm_fraction * p.lambda();
    let w = if norm > 0.0 { p.w() * (target / norm) } else { p.w().clone() };
    let params = ModelParams::new(p.lambda(), w, p.w_in().clone(), p.b().clone())?;
    Ok(Model::new(params, spec.activation))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Claim {
    #[serde(rename = "RD")]
    RescaleDiscretize,
    #[serde(rename = "RD-misaligned")]
    RescaleDiscretizeMisaligned,
    #[serde(rename = "DL")]
    DiscretizeLinearize,
    #[serde(rename = "LR")]
    LinearizeRescale,
    #[serde(rename = "RescaleInverse")]
    RescaleInverse,
    #[serde(rename = "SpeedReparameterization")]
    SpeedReparameterization,
}

/// Two transform orderings compared on parameters and on trajectories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommutatorReport {
    pub claim: Claim,
    pub path_a: Vec<TransformStep>,
    pub path_b: Vec<TransformStep>,
    pub param_comparison: ParamComparison,
    pub trajectory_max_abs: f64,
    pub trajectory_max_rel: f64,
    pub pass: bool,
    pub tolerance_used: f64,
}

fn report(
    claim: Claim,
    path_a: Vec<TransformStep>,
    path_b: Vec<TransformStep>,
    param_comparison: ParamComparison,
    traj: Option<simulate::TrajectoryDiff>,
    tolerance_used: f64,
) -> CommutatorReport {
    let (max_abs, max_rel) = traj.map_or((0.0, 0.0), |d| (d.max_abs, d.max_rel));
    CommutatorReport {
        claim,
        path_a,
        path_b,
        param_comparison,
        trajectory_max_abs: max_abs,
        trajectory_max_rel: max_rel,
        pass: param_comparison.is_exact() && max_abs <= tolerance_used,
        tolerance_used,
    }
}

fn run_discrete(model: &Model, h0: &DVector<f64>, signal: &InputSignal, n_steps: usize) -> Result<Trajectory, VerifyError> {
    let delta = model.delta().ok_or(ModelError::NotDiscrete)?;
    let grid = TimeGrid::new(0.0, n_steps as f64 * delta, n_steps)?;
    Ok(simulate(model, h0, signal, &grid)?)
}

fn rd_paths(tau: f64, delta_s: f64, aligned: bool) -> (Vec<TransformStep>, Vec<TransformStep>) {
    let path_a = vec![TransformStep::Rescale { tau }, TransformStep::Discretize { delta: delta_s }];
    let delta_t = if aligned { tau * delta_s } else { delta_s };
    let path_b = vec![TransformStep::Discretize { delta: delta_t }, TransformStep::Rescale { tau }];
    (path_a, path_b)
}

fn rd_check(
    model: &Model,
    tau: f64,
    delta_s: f64,
    h0: &DVector<f64>,
    signal: &InputSignal,
    n_steps: usize,
    aligned: bool,
) -> Result<CommutatorReport, VerifyError> {
    let (path_a, path_b) = rd_paths(tau, delta_s, aligned);
    let a = apply_sequence(model, &path_a)?;
    let b = apply_sequence(model, &path_b)?;
    // Both discrete models live on the rescaled clock s and see χ(s) = x(τs).
    let chi = signal.time_scaled(tau)?;
    let ta = run_discrete(&a, h0, &chi, n_steps)?;
    let tb = run_discrete(&b, h0, &chi, n_steps)?;
    let claim = if aligned { Claim::RescaleDiscretize } else { Claim::RescaleDiscretizeMisaligned };
    Ok(report(claim, path_a, path_b, compare_params(&a, &b), Some(sequence_diff(&ta, &tb)?), 0.0))
}

/// `[Rescale(τ), Discretize(Δ_s)]` against `[Discretize(τΔ_s), Rescale(τ)]`.
///
/// Both orders end with the same effective step, so the sequences must agree
/// bit for bit (tolerance 0).
pub fn check_rescale_discretize(
    model: &Model,
    tau: f64,
    delta_s: f64,
    h0: &DVector<f64>,
    signal: &InputSignal,
    n_steps: usize,
) -> Result<CommutatorReport, VerifyError> {
    rd_check(model, tau, delta_s, h0, signal, n_steps, true)
}

/// Negative control for [`check_rescale_discretize`]: the second path
/// discretizes with `Δ_s` instead of `τΔ_s`. For `τ ≠ 1` this must fail.
pub fn check_rescale_discretize_misaligned(
    model: &Model,
    tau: f64,
    delta_s: f64,
    h0: &DVector<f64>,
    signal: &InputSignal,
    n_steps: usize,
) -> Result<CommutatorReport, VerifyError> {
    rd_check(model, tau, delta_s, h0, signal, n_steps, false)
}

pub fn check_discretize_linearize(
    model: &Model,
    delta: f64,
    h0: &DVector<f64>,
    signal: &InputSignal,
    n_steps: usize,
) -> Result<CommutatorReport, VerifyError> {
    let path_a = vec![TransformStep::Discretize { delta }, TransformStep::Linearize];
    let path_b = vec![TransformStep::Linearize, TransformStep::Discretize { delta }];
    let a = apply_sequence(model, &path_a)?;
    let b = apply_sequence(model, &path_b)?;
    let ta = run_discrete(&a, h0, signal, n_steps)?;
    let tb = run_discrete(&b, h0, signal, n_steps)?;
    Ok(report(Claim::DiscretizeLinearize, path_a, path_b, compare_params(&a, &b), Some(trajectory_diff(&ta, &tb)?), 0.0))
}

/// Tolerance for the continuous `[L,R]` comparison through the reference
/// integrator.
pub const LR_TOLERANCE: f64 = 1e-12;

pub fn check_linearize_rescale(
    model: &Model,
    tau: f64,
    h0: &DVector<f64>,
    signal: &InputSignal,
    grid: &TimeGrid,
    substeps: usize,
) -> Result<CommutatorReport, VerifyError> {
    let path_a = vec![TransformStep::Linearize, TransformStep::Rescale { tau }];
    let path_b = vec![TransformStep::Rescale { tau }, TransformStep::Linearize];
    let a = apply_sequence(model, &path_a)?;
    let b = apply_sequence(model, &path_b)?;
    let chi = signal.time_scaled(tau)?;
    let ta = reference_solve(&a, h0, &chi, grid, substeps)?;
    let tb = reference_solve(&b, h0, &chi, grid, substeps)?;
    Ok(report(Claim::LinearizeRescale, path_a, path_b, compare_params(&a, &b), Some(trajectory_diff(&ta, &tb)?), LR_TOLERANCE))
}

/// Relative tolerance on the gain after `Rescale(τ)` then `Rescale(1/τ)`.
pub const INVERSE_GAIN_RTOL: f64 = 1e-15;

/// `Rescale(τ)·Rescale(1/τ)` against the identity. Passes when the gain is
/// restored within [`INVERSE_GAIN_RTOL`] and every other stored field is
/// bit-identical. The nominal step of a discrete model is derived from
/// the gain and so is only restored to the same relative accuracy.
pub fn check_rescale_inverse(model: &Model, tau: f64) -> Result<CommutatorReport, VerifyError> {
    let path_a = vec![TransformStep::Rescale { tau }, TransformStep::Rescale { tau: 1.0 / tau }];
    let back = apply_sequence(model, &path_a)?;
    let cmp = compare_params(&back, model);
    let gain_ok = cmp.gain_diff <= INVERSE_GAIN_RTOL * model.gain();
    let pass = cmp.structurally_equal && cmp.max_abs_weight_diff == 0.0 && cmp.effective_step_diff.unwrap_or(0.0) == 0.0 && gain_ok;
    Ok(CommutatorReport {
        claim: Claim::RescaleInverse,
        path_a,
        path_b: Vec::new(),
        param_comparison: cmp,
        trajectory_max_abs: 0.0,
        trajectory_max_rel: 0.0,
        pass,
        tolerance_used: INVERSE_GAIN_RTOL,
    })
}

/// Run the model discretized with `Δ = T/n` on `[0, T]`, and the model
/// rescaled by `τ` and discretized with `Δ/τ` on `[0, T/τ]` with the
/// time-scaled input. The two runs must visit the same states index by index
/// while their clocks differ by the factor `τ`.
///
/// Exactness relies on `τ·(Δ/τ)` and `τ·s_k` rounding back to `Δ` and `t_k`,
/// which holds for powers of two.
pub fn check_speed_reparameterization(
    model: &Model,
    tau: f64,
    h0: &DVector<f64>,
    signal: &InputSignal,
    horizon: f64,
    n_steps: usize,
) -> Result<CommutatorReport, VerifyError> {
    let delta = horizon / n_steps as f64;
    let path_a = vec![TransformStep::Discretize { delta }];
    let path_b = vec![TransformStep::Rescale { tau }, TransformStep::Discretize { delta: delta / tau }];
    let a = apply_sequence(model, &path_a)?;
    let b = apply_sequence(model, &path_b)?;
    let ta = simulate(&a, h0, signal, &TimeGrid::new(0.0, horizon, n_steps)?)?;
    let tb = simulate(&b, h0, &signal.time_scaled(tau)?, &TimeGrid::new(0.0, horizon / tau, n_steps)?)?;
    let diff = sequence_diff(&ta, &tb)?;
    let clocks_ok = (0..=n_steps).all(|k| {
        let (t, s) = (ta.grid.time(k), tb.grid.time(k));
        (t - tau * s).abs() <= 1e-12 * t.abs().max(1.0)
    });
    let cmp = compare_params(&a, &b);
    let pass = cmp.structurally_equal
        && cmp.max_abs_weight_diff == 0.0
        && cmp.effective_step_diff == Some(0.0)
        && clocks_ok
        && diff.max_abs <= 0.0;
    Ok(CommutatorReport {
        claim: Claim::SpeedReparameterization,
        path_a,
        path_b,
        param_comparison: cmp,
        trajectory_max_abs: diff.max_abs,
        trajectory_max_rel: diff.max_rel,
        pass,
        tolerance_used: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityImplicationSummary {
    pub tested: usize,
    pub discrete_stable: usize,
    pub continuous_stable: usize,
    pub violations: usize,
    pub counterexample_included: bool,
    /// The scalar `λ = 1, γΔ = 2.5` model came out continuous-stable and
    /// discrete-unstable.
    pub counterexample_confirmed: bool,
}

impl StabilityImplicationSummary {
    pub fn pass(&self) -> bool {
        self.violations == 0 && self.counterexample_included && self.counterexample_confirmed
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct StabilityImplication {
    continuous: Stability,
    discrete: Stability,
}

impl StabilityImplication {
    fn violates_implication(&self) -> bool {
        self.discrete == Stability::Stable && self.continuous != Stability::Stable
    }
}

fn classify_pair(model: &Model, step: f64) -> Result<StabilityImplication, VerifyError> {
    let lin = crate::transforms::linearize(model)?;
    let j = analysis::jacobian(&lin, &DVector::zeros(lin.n_units()), &DVector::zeros(lin.n_inputs()))?;
    let continuous = analysis::stability_continuous(&j)?.classification;
    let discrete = analysis::stability_discrete(&crate::transforms::discretize(&lin, step)?)?.classification;
    Ok(StabilityImplication { continuous, discrete })
}

/// Discrete stability implies continuous stability, never the reverse.
///
/// Each ensemble member is linearized and paired with a step drawn uniformly
/// from `(low, high]`; a violation is a discrete-stable model whose
/// continuous counterpart is not stable. The scalar counterexample
/// `λ = 1, w = 0, γΔ = 2.5` is always appended.
pub fn check_stability_implication(spec: &EnsembleSpec, delta_range: (f64, f64)) -> Result<StabilityImplicationSummary, VerifyError> {
    let (low, high) = delta_range;
    if !(low.is_finite() && high.is_finite() && low >= 0.0 && high > low) {
        return Err(ConfigErrors(vec![FieldError::new("delta_range", format!("need 0 <= low < high, got ({low}, {high})"))]).into());
    }
    let pairs = (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let model = random_model(spec, i)?;
            let u: f64 = derived_rng(spec.seed, PURPOSE_STEP, i).random();
            classify_pair(&model, high - (high - low) * u)
        })
        .collect::<Result<Vec<_>, VerifyError>>()?;

    let scalar = Model::new(ModelParams::autonomous(1.0, DMatrix::zeros(1, 1))?, Activation::Tanh);
    let counter = classify_pair(&scalar, 2.5)?;

    let all = pairs.iter().chain(std::iter::once(&counter));
    let mut summary = StabilityImplicationSummary {
        tested: spec.count + 1,
        discrete_stable: 0,
        continuous_stable: 0,
        violations: 0,
        counterexample_included: true,
        counterexample_confirmed: counter.continuous == Stability::Stable && counter.discrete == Stability::Unstable,
    };
    for p in all {
        summary.discrete_stable += (p.discrete == Stability::Stable) as usize;
        summary.continuous_stable += (p.continuous == Stability::Stable) as usize;
        summary.violations += p.violates_implication() as usize;
    }
    Ok(summary)
}

/// Bound on the fixed-point residual for the shared-fixed-point check.
pub const FIXED_POINT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharedFixedPointReport {
    pub converged: bool,
    pub newton_residual: f64,
    /// `(Δ, ‖E(h*) − h*‖∞, bound γΔ·1e−10)` per step, `E` the Euler map.
    pub euler_residuals: Vec<(f64, f64, f64)>,
    pub pass: bool,
}

/// A Newton fixed point of the continuous model is also a fixed point of
/// its Euler map for every step size.
pub fn check_shared_fixed_point(model: &Model, x: &DVector<f64>, deltas: &[f64]) -> Result<SharedFixedPointReport, VerifyError> {
    let fp = analysis::fixed_point(model, x, &DVector::zeros(model.n_units()), NewtonOptions { tol: FIXED_POINT_TOL, max_iter: 100 })?;
    let h = fp.state();
    let mut euler_residuals = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let d = crate::transforms::discretize(model, delta)?;
        let next = simulate::euler_step(&d, &h, x)?;
        let r = (next - &h).amax();
        euler_residuals.push((delta, r, model.gain() * delta * FIXED_POINT_TOL));
    }
    let pass = fp.converged && fp.residual <= FIXED_POINT_TOL && euler_residuals.iter().all(|&(_, r, bound)| r <= bound);
    Ok(SharedFixedPointReport { converged: fp.converged, newton_residual: fp.residual, euler_residuals, pass })
}

pub const CONVERGENCE_RATIO_RANGE: (f64, f64) = (1.8, 2.2);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub deltas: Vec<f64>,
    /// ∞-norm error of the Euler state at the horizon against the reference.
    pub errors: Vec<f64>,
    pub ratios: Vec<f64>,
    pub pass: bool,
}

/// Ensemble members drawn per requested model before the search gives up.
pub const FIXED_POINT_SEARCH_FACTOR: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharedFixedPointSummary {
    pub requested: usize,
    /// `(ensemble index, report)` for each model whose Newton run converged.
    pub tested: Vec<(usize, SharedFixedPointReport)>,
    /// Indices whose Newton run did not converge; the property says nothing
    /// about them.
    pub skipped: Vec<usize>,
    pub pass: bool,
}

/// Walk the ensemble in index order with a seeded constant input per member
/// and run [`check_shared_fixed_point`] on the first `requested` models whose
/// Newton iteration converges. Fails if any tested model violates the bound
/// or if fewer than `requested` converge within
/// `FIXED_POINT_SEARCH_FACTOR · requested` draws.
pub fn check_shared_fixed_point_ensemble(spec: &EnsembleSpec, requested: usize, deltas: &[f64]) -> Result<SharedFixedPointSummary, VerifyError> {
    let limit = requested * FIXED_POINT_SEARCH_FACTOR;
    let spec = EnsembleSpec { count: limit, ..spec.clone() };
    let mut tested = Vec::with_capacity(requested);
    let mut skipped = Vec::new();
    for i in 0..limit {
        if tested.len() == requested {
            break;
        }
        let model = random_model(&spec, i)?;
        let x = DVector::from_vec(gaussian_vec(&mut derived_rng(spec.seed, PURPOSE_PROBE, i), spec.n_inputs, 1.0));
        let r = check_shared_fixed_point(&model, &x, deltas)?;
        if r.converged {
            tested.push((i, r));
        } else {
            skipped.push(i);
        }
    }
    let pass = tested.len() == requested && tested.iter().all(|(_, r)| r.pass);
    Ok(SharedFixedPointSummary { requested, tested, skipped, pass })
}

/// First-order convergence of the Euler map: the error at `horizon` must
/// halve with each halving of `Δ`, starting from `base_delta`.
pub fn check_euler_convergence(
    model: &Model,
    h0: &DVector<f64>,
    signal: &InputSignal,
    horizon: f64,
    base_delta: f64,
    halvings: usize,
    substeps: usize,
) -> Result<ConvergenceReport, VerifyError> {
    let base_n = (horizon / base_delta).round().max(1.0) as usize;
    let reference = reference_solve(model, h0, signal, &TimeGrid::new(0.0, horizon, base_n)?, substeps)?;
    let exact = reference.last_state();
    let mut deltas = Vec::new();
    let mut errors = Vec::new();
    for level in 0..=halvings {
        let n = base_n << level;
        let grid = TimeGrid::new(0.0, horizon, n)?;
        let d = crate::transforms::discretize(model, grid.step())?;
        let tr = simulate(&d, h0, signal, &grid)?;
        deltas.push(grid.step());
        errors.push((tr.last_state() - exact).amax());
    }
    let ratios: Vec<f64> = errors.windows(2).map(|e| e[0] / e[1]).collect();
    let (lo, hi) = CONVERGENCE_RATIO_RANGE;
    let pass = !ratios.is_empty() && ratios.iter().all(|r| (lo..=hi).contains(r));
    Ok(ConvergenceReport { deltas, errors, ratios, pass })
}

pub const JACOBIAN_FD_STEP: f64 = 1e-6;
pub const JACOBIAN_FD_TOL: f64 = 1e-5;

/// Largest entrywise gap between the analytic Jacobian and central
/// differences of the right-hand side.
pub fn jacobian_fd_error(model: &Model, h: &DVector<f64>, x: &DVector<f64>, step: f64) -> Result<f64, VerifyError> {
    let j = analysis::jacobian(model, h, x)?;
    let mut worst: f64 = 0.0;
    for c in 0..h.len() {
        let mut hp = h.clone();
        let mut hm = h.clone();
        hp[c] += step;
        hm[c] -= step;
        let col = (model.rhs(&hp, x)? - model.rhs(&hm, x)?) / (2.0 * step);
        for r in 0..h.len() {
            worst = worst.max((col[r] - j[(r, c)]).abs());
        }
    }
    Ok(worst)
}

pub const CUBIC_RATIO_RANGE: (f64, f64) = (4.0, 16.0);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearizationScalingReport {
    pub amplitude: f64,
    pub error_full: f64,
    pub error_half: f64,
    pub ratio: f64,
    pub pass: bool,
}

/// Gap at the horizon between nonlinear and linearized Euler runs started
/// from `ε·h_dir` and driven by `ε·(sine with amplitudes)`. With `b = 0` the
/// gap is third order in `ε`, so halving `ε` should shrink it about eightfold.
pub fn check_linearization_scaling(
    model: &Model,
    h_dir: &DVector<f64>,
    amplitudes: &DVector<f64>,
    frequency: f64,
    amplitude: f64,
    delta: f64,
    n_steps: usize,
) -> Result<LinearizationScalingReport, VerifyError> {
    let nonlinear = crate::transforms::discretize(model, delta)?;
    let linear = crate::transforms::linearize(&nonlinear)?;
    let gap = |eps: f64| -> Result<f64, VerifyError> {
        let signal = InputSignal::sine(amplitudes * eps, frequency, 0.0)?;
        let h0 = h_dir * eps;
        let a = run_discrete(&nonlinear, &h0, &signal, n_steps)?;
        let b = run_discrete(&linear, &h0, &signal, n_steps)?;
        Ok((a.last_state() - b.last_state()).amax())
    };
    let error_full = gap(amplitude)?;
    let error_half = gap(amplitude / 2.0)?;
    let ratio = error_full / error_half;
    let (lo, hi) = CUBIC_RATIO_RANGE;
    Ok(LinearizationScalingReport { amplitude, error_full, error_half, ratio, pass: (lo..=hi).contains(&ratio) })
}

/// Grid points `x` in `[−1, 1]` where `|tanh x − x| > |x|³/3`.
pub fn tanh_remainder_violations(n_points: usize) -> usize {
    let last = n_points.saturating_sub(1).max(1) as f64;
    (0..n_points)
        .filter(|&k| {
            let x = -1.0 + 2.0 * k as f64 / last;
            analysis::tanh_remainder(x).abs() > x.abs().powi(3) / 3.0
        })
        .count()
}

mod suite;
pub use suite::*;

//! Trajectory generation.
//!
//! Discrete models are advanced with their own Euler map; continuous models
//! go through a fixed-step classical Runge–Kutta integrator that serves as a
//! reference when judging the Euler sequences.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{check_len, InputSignal, Model, ModelError};

/// Any state component above this magnitude counts as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e100;

/// Relative tolerance when matching a grid step against a model step.
pub const STEP_MATCH_RTOL: f64 = 1e-12;

pub const DEFAULT_SUBSTEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("grid step {grid} does not match model step {model}")]
    StepMismatch { grid: f64, model: f64 },
    #[error("input signal has dimension {found}, model expects {expected}")]
    SignalDimension { expected: usize, found: usize },
    #[error("trajectories are on different grids")]
    GridMismatch,
    #[error("substeps must be at least 1")]
    ZeroSubsteps,
}

/// Uniform grid `t_k = a + k·(b−a)/n`, `k = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    start: f64,
    end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(start: f64, end: f64, n_steps: usize) -> Result<Self, SimulationError> {
        if !(start.is_finite() && end.is_finite()) {
            return Err(SimulationError::InvalidGrid("endpoints must be finite".into()));
        }
        if end <= start {
            return Err(SimulationError::InvalidGrid(format!("end {end} must exceed start {start}")));
        }
        if n_steps == 0 {
            return Err(SimulationError::InvalidGrid("at least one step is required".into()));
        }
        Ok(TimeGrid { start, end, n_steps })
    }

    /// `n` steps of size `step` starting at `start`; the end point is
    /// `start + n·step`.
    pub fn from_step(start: f64, step: f64, n_steps: usize) -> Result<Self, SimulationError> {
        Self::new(start, start + n_steps as f64 * step, n_steps)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn step(&self) -> f64 {
        (self.end - self.start) / self.n_steps as f64
    }

    /// Sample time `t_k`; both endpoints are returned exactly.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.end
        } else {
            self.start + k as f64 * self.step()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }

    fn matches(&self, other: &TimeGrid) -> bool {
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(f64::MIN_POSITIVE);
        self.n_steps == other.n_steps && close(self.start, other.start) && close(self.end, other.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Euler,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryMeta {
    pub form: &'static str,
    pub gain: f64,
    pub generator: Generator,
    /// Index of the first state that was non-finite or above
    /// [`DIVERGENCE_THRESHOLD`]; the run stops there.
    pub diverged_at: Option<usize>,
}

/// Sampled states `h(t_k)` and the inputs that produced them.
///
/// `states.len() == grid.n_steps() + 1` unless the run diverged, in which
/// case the states end with the first offending row.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn diverged(&self) -> bool {
        self.meta.diverged_at.is_some()
    }

    pub fn last_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn n_units(&self) -> usize {
        self.states[0].len()
    }
}

fn is_bad(h: &DVector<f64>) -> bool {
    h.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_THRESHOLD)
}

fn check_signal(model: &Model, signal: &InputSignal) -> Result<(), SimulationError> {
    if signal.dim() != model.n_inputs() {
        return Err(SimulationError::SignalDimension { expected: model.n_inputs(), found: signal.dim() });
    }
    Ok(())
}

/// One application of the Euler map `h + s·F₀(h, x)` with `s = γ·Δ`.
///
/// `s` is a single stored scalar, so two models that agree on it produce
/// bit-identical sequences no matter how gain and step were reached.
pub fn euler_step(model: &Model, h: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>, SimulationError> {
    let s = model.effective_step().ok_or(ModelError::NotDiscrete)?;
    model.check_state(h, x)?;
    Ok(advance(model, s, h, x))
}

#[inline]
fn advance(model: &Model, s: f64, h: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    let f = model.drift(h, x);
    DVector::from_fn(h.len(), |i, _| h[i] + s * f[i])
}

/// Iterate the Euler map over `grid`, sampling the input at the left end of
/// every interval.
pub fn simulate(model: &Model, h0: &DVector<f64>, signal: &InputSignal, grid: &TimeGrid) -> Result<Trajectory, SimulationError> {
    let s = model.effective_step().ok_or(ModelError::NotDiscrete)?;
    let delta = s / model.gain();
    if (grid.step() - delta).abs() > STEP_MATCH_RTOL * delta {
        return Err(SimulationError::StepMismatch { grid: grid.step(), model: delta });
    }
    check_len("initial state", h0, model.n_units())?;
    check_signal(model, signal)?;

    let n = grid.n_steps();
    let mut states = Vec::with_capacity(n + 1);
    let mut inputs = Vec::with_capacity(n + 1);
    let mut diverged_at = is_bad(h0).then_some(0);
    states.push(h0.clone());
    inputs.push(signal.evaluate(grid.time(0)));
    if diverged_at.is_none() {
        for k in 0..n {
            let next = advance(model, s, &states[k], &inputs[k]);
            let bad = is_bad(&next);
            states.push(next);
            inputs.push(signal.evaluate(grid.time(k + 1)));
            if bad {
                diverged_at = Some(k + 1);
                break;
            }
        }
    }
    Ok(Trajectory {
        grid: *grid,
        states,
        inputs,
        meta: TrajectoryMeta { form: model.form().tag(), gain: model.gain(), generator: Generator::Euler, diverged_at },
    })
}

/// Classical fourth-order Runge–Kutta with `substeps` internal steps per
/// grid interval; states are reported at grid points only. Local error per
/// interval is `O((Δ/substeps)⁴)`.
pub fn reference_solve(
    model: &Model,
    h0: &DVector<f64>,
    signal: &InputSignal,
    grid: &TimeGrid,
    substeps: usize,
) -> Result<Trajectory, SimulationError> {
    if !model.is_continuous() {
        return Err(ModelError::NotContinuous.into());
    }
    if substeps == 0 {
        return Err(SimulationError::ZeroSubsteps);
    }
    check_len("initial state", h0, model.n_units())?;
    check_signal(model, signal)?;

    let gain = model.gain();
    let f = |t: f64, h: &DVector<f64>| model.drift(h, &signal.evaluate(t)) * gain;
    let n = grid.n_steps();
    let mut states = Vec::with_capacity(n + 1);
    let mut inputs = Vec::with_capacity(n + 1);
    let mut diverged_at = is_bad(h0).then_some(0);
    states.push(h0.clone());
    inputs.push(signal.evaluate(grid.time(0)));
    if diverged_at.is_none() {
        for k in 0..n {
            let t0 = grid.time(k);
            let dt = (grid.time(k + 1) - t0) / substeps as f64;
            let mut h = states[k].clone();
            for j in 0..substeps {
                let t = t0 + j as f64 * dt;
                let k1 = f(t, &h);
                let k2 = f(t + 0.5 * dt, &(&h + &k1 * (0.5 * dt)));
                let k3 = f(t + 0.5 * dt, &(&h + &k2 * (0.5 * dt)));
                let k4 = f(t + dt, &(&h + &k3 * dt));
                h += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            }
            let bad = is_bad(&h);
            states.push(h);
            inputs.push(signal.evaluate(grid.time(k + 1)));
            if bad {
                diverged_at = Some(k + 1);
                break;
            }
        }
    }
    Ok(Trajectory {
        grid: *grid,
        states,
        inputs,
        meta: TrajectoryMeta { form: model.form().tag(), gain, generator: Generator::Reference, diverged_at },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryDiff {
    pub max_abs: f64,
    pub max_rel: f64,
    /// `(time index, unit index)` of the largest absolute difference.
    pub argmax: (usize, usize),
}

fn state_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> Result<TrajectoryDiff, SimulationError> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(SimulationError::GridMismatch);
    }
    let mut out = TrajectoryDiff { max_abs: 0.0, max_rel: 0.0, argmax: (0, 0) };
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        for (i, (&u, &v)) in x.iter().zip(y.iter()).enumerate() {
            // Bit-equal entries (including matching infinities) count as zero.
            let abs = if u == v { 0.0 } else { (u - v).abs() };
            let rel = abs / u.abs().max(v.abs()).max(1e-300);
            if abs > out.max_abs || (abs.is_nan() && !out.max_abs.is_nan()) {
                out.max_abs = abs;
                out.argmax = (k, i);
            }
            out.max_rel = out.max_rel.max(rel);
        }
    }
    Ok(out)
}

/// Entrywise comparison of two trajectories on the same grid.
pub fn trajectory_diff(a: &Trajectory, b: &Trajectory) -> Result<TrajectoryDiff, SimulationError> {
    if !a.grid.matches(&b.grid) {
        return Err(SimulationError::GridMismatch);
    }
    state_diff(&a.states, &b.states)
}

/// Index-by-index comparison that ignores the time axes; used when two runs
/// are expected to visit the same states on differently scaled clocks.
pub fn sequence_diff(a: &Trajectory, b: &Trajectory) -> Result<TrajectoryDiff, SimulationError> {
    state_diff(&a.states, &b.states)
}

/// A single simulation request for [`simulate_batch`].
#[derive(Debug, Clone)]
pub struct SimulationJob {
    pub model: Model,
    pub h0: DVector<f64>,
    pub signal: InputSignal,
    pub grid: TimeGrid,
    /// `None` runs the Euler map (discrete models); `Some(substeps)` runs the
    /// reference integrator (continuous models).
    pub reference_substeps: Option<usize>,
}

impl SimulationJob {
    pub fn run(&self) -> Result<Trajectory, SimulationError> {
        match self.reference_substeps {
            None => simulate(&self.model, &self.h0, &self.signal, &self.grid),
            Some(sub) => reference_solve(&self.model, &self.h0, &self.signal, &self.grid, sub),
        }
    }
}

/// Run independent jobs in parallel. Results come back in job order and are
/// identical to running each job on its own.
pub fn simulate_batch(jobs: &[SimulationJob]) -> Vec<Result<Trajectory, SimulationError>> {
    jobs.par_iter().map(SimulationJob::run).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, ModelParams};
    use crate::transforms::{discretize, linearize, rescale};
    use nalgebra::{dmatrix, dvector, DMatrix};

    fn decay(lambda: f64) -> Model {
        Model::new(ModelParams::autonomous(lambda, dmatrix![0.0]).unwrap(), Activation::Tanh)
    }

    #[test]
    fn grid_endpoints_are_anchored() {
        let g = TimeGrid::new(0.1, 0.7, 3).unwrap();
        assert_eq!(g.time(0), 0.1);
        assert_eq!(g.time(3), 0.7);
        assert_eq!(g.time(1), 0.1 + g.step());
        assert_eq!(g.times().len(), 4);
        assert!(TimeGrid::new(1.0, 1.0, 4).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        assert!(TimeGrid::new(0.0, f64::NAN, 2).is_err());
    }

    #[test]
    fn euler_step_examples() {
        let none = DVector::zeros(0);
        for form_linear in [false, true] {
            let mut m = discretize(&decay(1.0), 0.1).unwrap();
            if form_linear {
                m = linearize(&m).unwrap();
            }
            assert_eq!(euler_step(&m, &dvector![1.0], &none).unwrap(), dvector![0.9]);
            assert_eq!(euler_step(&m, &dvector![0.0], &none).unwrap(), dvector![0.0]);
        }
        let m = Model::new(ModelParams::autonomous(1.0, dmatrix![1.0]).unwrap(), Activation::Tanh);
        let m = discretize(&m, 0.5).unwrap();
        let h = euler_step(&m, &dvector![1.0], &none).unwrap();
        // 1 + 0.5(−1 + tanh 1), arbitrary-precision reference.
        assert!((h[0] - 0.880_797_077_977_882_444_06).abs() <= 2.0 * f64::EPSILON);

        assert!(euler_step(&decay(1.0), &dvector![1.0], &none).is_err());
        assert!(euler_step(&m, &dvector![1.0, 2.0], &none).is_err());
    }

    #[test]
    fn scalar_decay_matches_closed_form() {
        let m = discretize(&decay(1.0), 0.1).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let tr = simulate(&m, &dvector![1.0], &InputSignal::zero(0), &grid).unwrap();
        assert_eq!(tr.states.len(), 11);
        assert!((tr.last_state()[0] - 0.348_678_440_1).abs() < 1e-15);
        assert!(!tr.diverged());
        assert_eq!(tr.meta.generator, Generator::Euler);
    }

    #[test]
    fn zero_state_stays_zero() {
        let params = ModelParams::new(0.8, dmatrix![0.5, -1.0; 2.0, 0.1], dmatrix![1.0; -1.0], DVector::zeros(2)).unwrap();
        let m = Model::new(params, Activation::Tanh);
        let grid = TimeGrid::new(0.0, 5.0, 50).unwrap();
        for model in [m.clone(), linearize(&m).unwrap()] {
            let d = discretize(&model, 0.1).unwrap();
            let tr = simulate(&d, &DVector::zeros(2), &InputSignal::zero(1), &grid).unwrap();
            assert!(tr.states.iter().all(|h| h.iter().all(|&v| v == 0.0)));
            let r = reference_solve(&model, &DVector::zeros(2), &InputSignal::zero(1), &grid, 4).unwrap();
            assert!(r.states.iter().all(|h| h.iter().all(|&v| v == 0.0)));
        }
    }

    #[test]
    fn unstable_step_diverges_with_alternating_sign() {
        let m = discretize(&decay(1.0), 2.5).unwrap();
        let grid = TimeGrid::from_step(0.0, 2.5, 1000).unwrap();
        let tr = simulate(&m, &dvector![1.0], &InputSignal::zero(0), &grid).unwrap();
        for k in 0..20 {
            assert_eq!(tr.states[k][0], (-1.5f64).powi(k as i32));
        }
        // 1.5^k first exceeds 1e100 at k = 568.
        assert_eq!(tr.meta.diverged_at, Some(568));
        assert_eq!(tr.states.len(), 569);
    }

    #[test]
    fn stability_boundary_keeps_magnitude() {
        let m = discretize(&decay(1.0), 2.0).unwrap();
        let grid = TimeGrid::from_step(0.0, 2.0, 200).unwrap();
        let tr = simulate(&m, &dvector![0.37], &InputSignal::zero(0), &grid).unwrap();
        assert!(tr.states.iter().all(|h| h[0].abs() == 0.37));
        for s in [0.5, 1.0, 1.9] {
            let m = discretize(&decay(1.0), s).unwrap();
            let grid = TimeGrid::from_step(0.0, s, 2000).unwrap();
            let tr = simulate(&m, &dvector![1.0], &InputSignal::zero(0), &grid).unwrap();
            assert!(tr.last_state()[0].abs() < 1e-10, "s = {s}");
        }
    }

    #[test]
    fn simulate_rejects_mismatches() {
        let m = discretize(&decay(1.0), 0.1).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
        assert!(matches!(
            simulate(&m, &dvector![1.0], &InputSignal::zero(0), &grid),
            Err(SimulationError::StepMismatch { .. })
        ));
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        assert!(matches!(
            simulate(&m, &dvector![1.0], &InputSignal::zero(2), &grid),
            Err(SimulationError::SignalDimension { .. })
        ));
        assert!(simulate(&decay(1.0), &dvector![1.0], &InputSignal::zero(0), &grid).is_err());
        assert!(reference_solve(&m, &dvector![1.0], &InputSignal::zero(0), &grid, 10).is_err());
        assert!(matches!(
            reference_solve(&decay(1.0), &dvector![1.0], &InputSignal::zero(0), &grid, 0),
            Err(SimulationError::ZeroSubsteps)
        ));
    }

    #[test]
    fn reference_matches_exact_decay() {
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let tr = reference_solve(&decay(1.0), &dvector![1.0], &InputSignal::zero(0), &grid, 10).unwrap();
        assert!((tr.last_state()[0] - 0.367_879_441_171_442_321_6).abs() < 1e-9);
        assert_eq!(tr.meta.generator, Generator::Reference);
    }

    #[test]
    fn reference_matches_driven_linear_solution() {
        let params = ModelParams::new(1.0, dmatrix![0.0], dmatrix![1.0], dvector![0.0]).unwrap();
        let m = linearize(&Model::new(params, Activation::Tanh)).unwrap();
        let grid = TimeGrid::new(0.0, 2.0, 20).unwrap();
        let tr = reference_solve(&m, &dvector![0.0], &InputSignal::constant(dvector![1.0]).unwrap(), &grid, 10).unwrap();
        for (k, h) in tr.states.iter().enumerate() {
            let t = grid.time(k);
            assert!((h[0] - (1.0 - (-t).exp())).abs() < 1e-9);
        }
    }

    #[test]
    fn equal_effective_steps_give_identical_runs() {
        let params = ModelParams::new(1.3, dmatrix![0.2, -0.9; 0.7, 0.1], dmatrix![1.0; 0.5], dvector![0.1, -0.2]).unwrap();
        let m = Model::new(params, Activation::Tanh);
        let sig = InputSignal::sine(dvector![0.4], 1.5, 0.0).unwrap();
        // gain 1, Δ = 0.12 versus gain 4, Δ = 0.03.
        let a = discretize(&m, 0.12).unwrap();
        let b = discretize(&rescale(&m, 4.0).unwrap(), 0.03).unwrap();
        assert_eq!(a.effective_step(), b.effective_step());
        let grid_a = TimeGrid::from_step(0.0, 0.12, 300).unwrap();
        let grid_b = TimeGrid::from_step(0.0, 0.03, 300).unwrap();
        let sig_b = sig.time_scaled(4.0).unwrap();
        let ta = simulate(&a, &dvector![0.5, -1.0], &sig, &grid_a).unwrap();
        let tb = simulate(&b, &dvector![0.5, -1.0], &sig_b, &grid_b).unwrap();
        assert_eq!(ta.states, tb.states);
    }

    #[test]
    fn diff_examples() {
        let m = discretize(&decay(1.0), 0.1).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let a = simulate(&m, &dvector![1.0], &InputSignal::zero(0), &grid).unwrap();
        assert_eq!(trajectory_diff(&a, &a).unwrap().max_abs, 0.0);

        let mut b = a.clone();
        b.states[4][0] += 1e-9;
        let d = trajectory_diff(&a, &b).unwrap();
        assert!((d.max_abs - 1e-9).abs() < 1e-15);
        assert_eq!(d.argmax, (4, 0));

        let other = TimeGrid::new(0.0, 1.0, 5).unwrap();
        let m5 = discretize(&decay(1.0), 0.2).unwrap();
        let c = simulate(&m5, &dvector![1.0], &InputSignal::zero(0), &other).unwrap();
        assert_eq!(trajectory_diff(&a, &c), Err(SimulationError::GridMismatch));
    }

    #[test]
    fn batch_equals_sequential() {
        let jobs: Vec<SimulationJob> = (0..16)
            .map(|i| {
                let w = DMatrix::from_fn(3, 3, |r, c| ((r * 3 + c + i) as f64 * 0.37).sin());
                let m = Model::new(ModelParams::autonomous(1.0, w).unwrap(), Activation::Tanh);
                let continuous = i % 2 == 0;
                SimulationJob {
                    model: if continuous { m } else { discretize(&m, 0.05).unwrap() },
                    h0: DVector::from_element(3, 0.1 * i as f64),
                    signal: InputSignal::zero(0),
                    grid: TimeGrid::new(0.0, 1.0, 20).unwrap(),
                    reference_substeps: continuous.then_some(5),
                }
            })
            .collect();
        let par = simulate_batch(&jobs);
        let seq: Vec<_> = jobs.iter().map(SimulationJob::run).collect();
        assert_eq!(par, seq);
    }
}

use std::fmt::Write as _;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleDefaults {
    /// Models per commutator check, spread round-robin over `unit_sizes`.
    pub models: usize,
    pub unit_sizes: Vec<usize>,
    pub n_inputs: usize,
    pub weight_std_gain: f64,
    pub lambda: f64,
    pub bias_std: f64,
    /// Std of the random initial states.
    pub state_scale: f64,
}

impl Default for EnsembleDefaults {
    fn default() -> Self {
        EnsembleDefaults {
            models: 100,
            unit_sizes: vec![2, 8, 32],
            n_inputs: 2,
            weight_std_gain: 0.9,
            lambda: 1.0,
            bias_std: 0.1,
            state_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RdConfig {
    pub enabled: bool,
    pub taus: Vec<f64>,
    pub delta_s: f64,
    pub n_steps: usize,
    /// Treat the misaligned control as an ordinary check that must pass.
    /// The suite then fails, which is how the control is shown to bite.
    pub misaligned_as_primary: bool,
}

impl Default for RdConfig {
    fn default() -> Self {
        RdConfig { enabled: true, taus: vec![0.5, 2.0, 3.0, 10.0], delta_s: 0.01, n_steps: 200, misaligned_as_primary: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DlConfig {
    pub enabled: bool,
    pub delta: f64,
    pub n_steps: usize,
}

impl Default for DlConfig {
    fn default() -> Self {
        DlConfig { enabled: true, delta: 0.05, n_steps: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrConfig {
    pub enabled: bool,
    pub taus: Vec<f64>,
    pub horizon: f64,
    pub n_steps: usize,
    pub substeps: usize,
    pub tolerance: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig { enabled: true, taus: vec![0.5, 2.0, 3.0], horizon: 1.0, n_steps: 20, substeps: 5, tolerance: LR_TOLERANCE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InverseConfig {
    pub enabled: bool,
    pub taus: Vec<f64>,
}

impl Default for InverseConfig {
    fn default() -> Self {
        InverseConfig { enabled: true, taus: vec![2.0, 3.0, 7.0, 0.2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeedConfig {
    pub enabled: bool,
    pub taus: Vec<f64>,
    pub horizon: f64,
    pub n_steps: usize,
}

impl Default for SpeedConfig {
    fn default() -> Self {
        SpeedConfig { enabled: true, taus: vec![0.5, 2.0], horizon: 1.0, n_steps: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub enabled: bool,
    pub samples: usize,
    pub n_units: usize,
    pub step_range: (f64, f64),
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig { enabled: true, samples: 1000, n_units: 10, step_range: (0.0, 0.2) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointConfig {
    pub enabled: bool,
    pub models: usize,
    pub n_units: usize,
    pub bias_std: f64,
    pub deltas: Vec<f64>,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig { enabled: true, models: 20, n_units: 8, bias_std: 0.5, deltas: vec![0.1, 1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub enabled: bool,
    pub n_units: usize,
    pub horizon: f64,
    pub base_delta: f64,
    pub halvings: usize,
    pub substeps: usize,
    /// Spectral norm of `w` as a fraction of `λ`.
    pub norm_fraction: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig { enabled: true, n_units: 8, horizon: 1.0, base_delta: 0.02, halvings: 3, substeps: 100, norm_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JacobianConfig {
    pub enabled: bool,
    pub models: usize,
    pub n_units: usize,
}

impl Default for JacobianConfig {
    fn default() -> Self {
        JacobianConfig { enabled: true, models: 50, n_units: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearizationConfig {
    pub enabled: bool,
    pub n_units: usize,
    pub amplitude: f64,
    pub delta: f64,
    pub n_steps: usize,
    pub grid_points: usize,
}

impl Default for LinearizationConfig {
    fn default() -> Self {
        LinearizationConfig { enabled: true, n_units: 8, amplitude: 0.1, delta: 0.01, n_steps: 100, grid_points: 10_000 }
    }
}

/// Which checks to run and on what ensembles. Every field has a default, so
/// an empty document is a complete configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub seed: u64,
    pub ensemble: EnsembleDefaults,
    pub rd: RdConfig,
    pub dl: DlConfig,
    pub lr: LrConfig,
    pub inverse: InverseConfig,
    pub speed: SpeedConfig,
    pub stability: StabilityConfig,
    pub fixed_point: FixedPointConfig,
    pub convergence: ConvergenceConfig,
    pub jacobian: JacobianConfig,
    pub linearization: LinearizationConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 20_240_917,
            ensemble: Default::default(),
            rd: Default::default(),
            dl: Default::default(),
            lr: Default::default(),
            inverse: Default::default(),
            speed: Default::default(),
            stability: Default::default(),
            fixed_point: Default::default(),
            convergence: Default::default(),
            jacobian: Default::default(),
            linearization: Default::default(),
        }
    }
}

fn positive(errs: &mut Vec<FieldError>, path: &str, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        errs.push(FieldError::new(path, format!("must be finite and > 0, got {v}")));
    }
}

fn non_negative(errs: &mut Vec<FieldError>, path: &str, v: f64) {
    if !(v.is_finite() && v >= 0.0) {
        errs.push(FieldError::new(path, format!("must be finite and >= 0, got {v}")));
    }
}

fn at_least_one(errs: &mut Vec<FieldError>, path: &str, v: usize) {
    if v == 0 {
        errs.push(FieldError::new(path, "must be at least 1"));
    }
}

fn all_positive(errs: &mut Vec<FieldError>, path: &str, vs: &[f64]) {
    for (i, &v) in vs.iter().enumerate() {
        positive(errs, &format!("{path}[{i}]"), v);
    }
}

impl SuiteConfig {
    /// Every invalid field, addressed by its dotted path in the document.
    pub fn validate(&self, prefix: &str) -> Vec<FieldError> {
        let p = |s: &str| if prefix.is_empty() { s.to_string() } else { format!("{prefix}.{s}") };
        let mut e = Vec::new();
        let en = &self.ensemble;
        if en.unit_sizes.is_empty() {
            e.push(FieldError::new(p("ensemble.unit_sizes"), "must not be empty"));
        }
        for (i, &n) in en.unit_sizes.iter().enumerate() {
            at_least_one(&mut e, &p(&format!("ensemble.unit_sizes[{i}]")), n);
        }
        non_negative(&mut e, &p("ensemble.weight_std_gain"), en.weight_std_gain);
        positive(&mut e, &p("ensemble.lambda"), en.lambda);
        non_negative(&mut e, &p("ensemble.bias_std"), en.bias_std);
        non_negative(&mut e, &p("ensemble.state_scale"), en.state_scale);

        all_positive(&mut e, &p("rd.taus"), &self.rd.taus);
        positive(&mut e, &p("rd.delta_s"), self.rd.delta_s);
        at_least_one(&mut e, &p("rd.n_steps"), self.rd.n_steps);

        positive(&mut e, &p("dl.delta"), self.dl.delta);
        at_least_one(&mut e, &p("dl.n_steps"), self.dl.n_steps);

        all_positive(&mut e, &p("lr.taus"), &self.lr.taus);
        positive(&mut e, &p("lr.horizon"), self.lr.horizon);
        at_least_one(&mut e, &p("lr.n_steps"), self.lr.n_steps);
        at_least_one(&mut e, &p("lr.substeps"), self.lr.substeps);
        non_negative(&mut e, &p("lr.tolerance"), self.lr.tolerance);

        all_positive(&mut e, &p("inverse.taus"), &self.inverse.taus);

        all_positive(&mut e, &p("speed.taus"), &self.speed.taus);
        positive(&mut e, &p("speed.horizon"), self.speed.horizon);
        at_least_one(&mut e, &p("speed.n_steps"), self.speed.n_steps);

        at_least_one(&mut e, &p("stability.n_units"), self.stability.n_units);
        let (lo, hi) = self.stability.step_range;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
            e.push(FieldError::new(p("stability.step_range"), format!("need 0 <= low < high, got ({lo}, {hi})")));
        }

        at_least_one(&mut e, &p("fixed_point.n_units"), self.fixed_point.n_units);
        non_negative(&mut e, &p("fixed_point.bias_std"), self.fixed_point.bias_std);
        all_positive(&mut e, &p("fixed_point.deltas"), &self.fixed_point.deltas);

        let c = &self.convergence;
        at_least_one(&mut e, &p("convergence.n_units"), c.n_units);
        positive(&mut e, &p("convergence.horizon"), c.horizon);
        positive(&mut e, &p("convergence.base_delta"), c.base_delta);
        at_least_one(&mut e, &p("convergence.halvings"), c.halvings);
        at_least_one(&mut e, &p("convergence.substeps"), c.substeps);
        positive(&mut e, &p("convergence.norm_fraction"), c.norm_fraction);

        at_least_one(&mut e, &p("jacobian.n_units"), self.jacobian.n_units);

        let l = &self.linearization;
        at_least_one(&mut e, &p("linearization.n_units"), l.n_units);
        positive(&mut e, &p("linearization.amplitude"), l.amplitude);
        positive(&mut e, &p("linearization.delta"), l.delta);
        at_least_one(&mut e, &p("linearization.n_steps"), l.n_steps);
        at_least_one(&mut e, &p("linearization.grid_points"), l.grid_points);
        e
    }

    /// Ensemble member `index` of the commutator checks.
    pub fn commutator_spec(&self, index: usize) -> EnsembleSpec {
        let en = &self.ensemble;
        EnsembleSpec {
            seed: self.seed,
            count: en.models,
            n_units: en.unit_sizes[index % en.unit_sizes.len()],
            n_inputs: en.n_inputs,
            weight_std_gain: en.weight_std_gain,
            lambda: en.lambda,
            activation: Activation::Tanh,
            bias_std: en.bias_std,
        }
    }

    fn spec_with(&self, count: usize, n_units: usize, bias_std: f64) -> EnsembleSpec {
        EnsembleSpec {
            seed: self.seed,
            count,
            n_units,
            n_inputs: self.ensemble.n_inputs,
            weight_std_gain: self.ensemble.weight_std_gain,
            lambda: self.ensemble.lambda,
            activation: Activation::Tanh,
            bias_std,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckRole {
    Primary,
    /// Expected to fail; the outcome passes when every case fails visibly.
    NegativeControl,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub role: CheckRole,
    pub pass: bool,
    pub cases: usize,
    pub failures: usize,
    /// Largest deviation seen (smallest separation for negative controls).
    pub worst: f64,
    pub note: String,
    /// Reports of the cases that did not behave as required.
    pub failing: Vec<CommutatorReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<CheckOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityImplicationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_points: Option<SharedFixedPointSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linearization: Option<LinearizationScalingReport>,
}

/// Separation a misaligned RD run must show to count as a visible failure.
pub const NEGATIVE_CONTROL_MIN_GAP: f64 = 1e-3;

fn commutator_outcome(name: &str, note: String, reports: Vec<CommutatorReport>) -> CheckOutcome {
    let worst = reports
        .iter()
        .map(|r| r.trajectory_max_abs.max(r.param_comparison.max_abs_weight_diff))
        .fold(0.0, f64::max);
    let failing: Vec<_> = reports.iter().filter(|r| !r.pass).cloned().collect();
    CheckOutcome {
        name: name.into(),
        role: CheckRole::Primary,
        pass: failing.is_empty(),
        cases: reports.len(),
        failures: failing.len(),
        worst,
        note,
        failing,
    }
}

fn control_outcome(name: &str, note: String, reports: Vec<CommutatorReport>) -> CheckOutcome {
    let bites = |r: &CommutatorReport| !r.pass && r.trajectory_max_abs > NEGATIVE_CONTROL_MIN_GAP;
    let failing: Vec<_> = reports.iter().filter(|r| !bites(r)).cloned().collect();
    let worst = reports.iter().map(|r| r.trajectory_max_abs).fold(f64::INFINITY, f64::min);
    CheckOutcome {
        name: name.into(),
        role: CheckRole::NegativeControl,
        pass: failing.is_empty(),
        cases: reports.len(),
        failures: failing.len(),
        worst,
        note,
        failing,
    }
}

fn simple_outcome(name: &str, pass: bool, cases: usize, failures: usize, worst: f64, note: String) -> CheckOutcome {
    CheckOutcome { name: name.into(), role: CheckRole::Primary, pass, cases, failures, worst, note, failing: Vec::new() }
}

/// Fixture for commutator case `i`: model, initial state, input.
fn fixture(cfg: &SuiteConfig, i: usize) -> Result<(Model, DVector<f64>, InputSignal), VerifyError> {
    let spec = cfg.commutator_spec(i);
    Ok((random_model(&spec, i)?, random_state(&spec, i, cfg.ensemble.state_scale), random_signal(&spec, i)))
}

fn per_model<T: Send>(
    cfg: &SuiteConfig,
    f: impl Fn(&Model, &DVector<f64>, &InputSignal) -> Result<Vec<T>, VerifyError> + Sync,
) -> Result<Vec<T>, VerifyError> {
    let nested = (0..cfg.ensemble.models)
        .into_par_iter()
        .map(|i| {
            let (m, h0, sig) = fixture(cfg, i)?;
            f(&m, &h0, &sig)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(nested.into_iter().flatten().collect())
}

fn random_vec(seed: u64, index: usize, len: usize, std: f64) -> DVector<f64> {
    let mut rng = derived_rng(seed, PURPOSE_PROBE, index);
    DVector::from_vec(gaussian_vec(&mut rng, len, std))
}

/// Run every enabled check. The suite passes iff every outcome passes.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport, VerifyError> {
    ConfigErrors::into_result(cfg.validate(""))?;
    let mut checks = Vec::new();
    let sizes = format!("{} models, N in {:?}", cfg.ensemble.models, cfg.ensemble.unit_sizes);

    if cfg.dl.enabled {
        let d = &cfg.dl;
        let reports = per_model(cfg, |m, h0, sig| Ok(vec![check_discretize_linearize(m, d.delta, h0, sig, d.n_steps)?]))?;
        checks.push(commutator_outcome("[D,L] commute", format!("{sizes}, delta {}, {} steps, tol 0", d.delta, d.n_steps), reports));
    }

    if cfg.lr.enabled {
        let l = &cfg.lr;
        let grid = TimeGrid::new(0.0, l.horizon, l.n_steps)?;
        let reports = per_model(cfg, |m, h0, sig| {
            l.taus
                .iter()
                .map(|&tau| {
                    let mut r = check_linearize_rescale(m, tau, h0, sig, &grid, l.substeps)?;
                    r.tolerance_used = l.tolerance;
                    r.pass = r.param_comparison.is_exact() && r.trajectory_max_abs <= l.tolerance;
                    Ok(r)
                })
                .collect()
        })?;
        checks.push(commutator_outcome("[L,R] commute", format!("{sizes}, tau {:?}, reference solver, tol {:e}", l.taus, l.tolerance), reports));
    }

    if cfg.rd.enabled {
        let r = &cfg.rd;
        let aligned = per_model(cfg, |m, h0, sig| {
            r.taus.iter().map(|&tau| check_rescale_discretize(m, tau, r.delta_s, h0, sig, r.n_steps)).collect()
        })?;
        checks.push(commutator_outcome(
            "[R,D] commute (aligned)",
            format!("{sizes}, tau {:?}, delta_s {}, {} steps, tol 0", r.taus, r.delta_s, r.n_steps),
            aligned,
        ));
        let misaligned = per_model(cfg, |m, h0, sig| {
            r.taus
                .iter()
                .filter(|&&tau| tau != 1.0)
                .map(|&tau| check_rescale_discretize_misaligned(m, tau, r.delta_s, h0, sig, r.n_steps))
                .collect()
        })?;
        let note = format!("second path discretized with delta_s instead of tau*delta_s; must exceed {NEGATIVE_CONTROL_MIN_GAP:e}");
        checks.push(if r.misaligned_as_primary {
            commutator_outcome("[R,D] misaligned (as primary)", note, misaligned)
        } else {
            control_outcome("[R,D] misaligned control", note, misaligned)
        });
    }

    if cfg.inverse.enabled {
        let taus = &cfg.inverse.taus;
        let reports = per_model(cfg, |m, _, _| {
            let discrete = crate::transforms::discretize(m, 0.1)?;
            let mut out = Vec::new();
            for model in [m, &discrete] {
                for &tau in taus {
                    out.push(check_rescale_inverse(model, tau)?);
                }
            }
            Ok(out)
        })?;
        let mut o = commutator_outcome(
            "rescale inverse",
            format!("continuous and discrete models, tau {taus:?}, gain rtol {INVERSE_GAIN_RTOL:e}"),
            reports.clone(),
        );
        o.worst = reports.iter().map(|r| r.param_comparison.gain_diff).fold(0.0, f64::max);
        checks.push(o);
    }

    if cfg.speed.enabled {
        let s = &cfg.speed;
        let reports = per_model(cfg, |m, h0, sig| {
            s.taus.iter().map(|&tau| check_speed_reparameterization(m, tau, h0, sig, s.horizon, s.n_steps)).collect()
        })?;
        checks.push(commutator_outcome("speed reparameterization", format!("{sizes}, tau {:?}, tol 0", s.taus), reports));
    }

    let mut stability = None;
    if cfg.stability.enabled {
        let st = &cfg.stability;
        let spec = EnsembleSpec { n_inputs: 0, bias_std: 0.0, ..cfg.spec_with(st.samples, st.n_units, 0.0) };
        let summary = check_stability_implication(&spec, st.step_range)?;
        checks.push(simple_outcome(
            "discrete-stable implies continuous-stable",
            summary.pass(),
            summary.tested,
            summary.violations + (!summary.counterexample_confirmed) as usize,
            summary.violations as f64,
            format!(
                "{} discrete-stable of {}, step in ({}, {}], converse counterexample {}",
                summary.discrete_stable,
                summary.tested,
                st.step_range.0,
                st.step_range.1,
                if summary.counterexample_confirmed { "confirmed" } else { "NOT confirmed" }
            ),
        ));
        stability = Some(summary);
    }

    let mut fixed_points = None;
    if cfg.fixed_point.enabled {
        let f = &cfg.fixed_point;
        let summary = check_shared_fixed_point_ensemble(&cfg.spec_with(f.models, f.n_units, f.bias_std), f.models, &f.deltas)?;
        let violations = summary.tested.iter().filter(|(_, r)| !r.pass).count();
        let shortfall = f.models - summary.tested.len();
        let worst = summary
            .tested
            .iter()
            .flat_map(|(_, r)| r.euler_residuals.iter().map(|&(_, res, bound)| res / bound))
            .fold(0.0, f64::max);
        checks.push(simple_outcome(
            "shared fixed point",
            summary.pass,
            summary.tested.len(),
            violations + shortfall,
            worst,
            format!(
                "Euler residual / (gain*delta*{FIXED_POINT_TOL:e}) for delta {:?}; {} unconverged models skipped",
                f.deltas,
                summary.skipped.len()
            ),
        ));
        fixed_points = Some(summary);
    }

    let mut convergence = None;
    if cfg.convergence.enabled {
        let c = &cfg.convergence;
        let spec = cfg.spec_with(1, c.n_units, cfg.ensemble.bias_std);
        let m = bounded_model(&spec, 0, c.norm_fraction)?;
        let rep = check_euler_convergence(&m, &random_state(&spec, 0, 1.0), &random_signal(&spec, 0), c.horizon, c.base_delta, c.halvings, c.substeps)?;
        checks.push(simple_outcome(
            "Euler first-order convergence",
            rep.pass,
            rep.ratios.len(),
            rep.ratios.iter().filter(|r| !(CONVERGENCE_RATIO_RANGE.0..=CONVERGENCE_RATIO_RANGE.1).contains(*r)).count(),
            rep.ratios.iter().map(|r| (r - 2.0).abs()).fold(0.0, f64::max),
            format!("error ratios {:?}, required in {CONVERGENCE_RATIO_RANGE:?}", rep.ratios),
        ));
        convergence = Some(rep);
    }

    if cfg.jacobian.enabled {
        let j = &cfg.jacobian;
        let spec = cfg.spec_with(j.models, j.n_units, cfg.ensemble.bias_std);
        let errs = (0..j.models)
            .into_par_iter()
            .map(|i| {
                let m = random_model(&spec, i)?;
                let h = random_state(&spec, i, 1.0);
                let x = random_vec(cfg.seed, i, spec.n_inputs, 1.0);
                jacobian_fd_error(&m, &h, &x, JACOBIAN_FD_STEP)
            })
            .collect::<Result<Vec<_>, VerifyError>>()?;
        let failures = errs.iter().filter(|&&e| e.is_nan() || e > JACOBIAN_FD_TOL).count();
        checks.push(simple_outcome(
            "Jacobian vs central differences",
            failures == 0,
            errs.len(),
            failures,
            errs.iter().copied().fold(0.0, f64::max),
            format!("step {JACOBIAN_FD_STEP:e}, tol {JACOBIAN_FD_TOL:e}"),
        ));
    }

    let mut linearization = None;
    if cfg.linearization.enabled {
        let l = &cfg.linearization;
        let violations = tanh_remainder_violations(l.grid_points);
        checks.push(simple_outcome(
            "tanh remainder bound |tanh x - x| <= |x|^3/3",
            violations == 0,
            l.grid_points,
            violations,
            violations as f64,
            "grid over [-1, 1]".into(),
        ));
        let spec = cfg.spec_with(1, l.n_units, 0.0);
        let m = random_model(&spec, 0)?;
        let dir = random_state(&spec, 0, 1.0);
        let amps = random_vec(cfg.seed, 0, spec.n_inputs, 1.0);
        let rep = check_linearization_scaling(&m, &dir, &amps, 1.0, l.amplitude, l.delta, l.n_steps)?;
        checks.push(simple_outcome(
            "linearization gap is cubic in amplitude",
            rep.pass,
            1,
            (!rep.pass) as usize,
            rep.ratio,
            format!("gap ratio eps/(eps/2) = {:.4}, required in {CUBIC_RATIO_RANGE:?}", rep.ratio),
        ));
        linearization = Some(rep);
    }

    Ok(SuiteReport { seed: cfg.seed, pass: checks.iter().all(|c| c.pass), checks, stability, fixed_points, convergence, linearization })
}

/// Plain-text summary, one line per check.
pub fn render_table(report: &SuiteReport) -> String {
    let width = report.checks.iter().map(|c| c.name.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:<16}  {:>6}  {:>8}  {:>11}  result", "check", "role", "cases", "failures", "worst");
    for c in &report.checks {
        let role = match c.role {
            CheckRole::Primary => "primary",
            CheckRole::NegativeControl => "negative-control",
        };
        let _ = writeln!(
            out,
            "{:<width$}  {:<16}  {:>6}  {:>8}  {:>11.3e}  {}",
            c.name,
            role,
            c.cases,
            c.failures,
            c.worst,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    let _ = writeln!(out, "overall: {}", if report.pass { "PASS" } else { "FAIL" });
    out
}

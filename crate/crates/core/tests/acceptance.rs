//! Release criteria. Each prints one `[PASS]` / `[FAIL]` line; the process
//! exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use ctrnn::analysis::{self, Stability};
use ctrnn::transforms::{apply_sequence, discretize, linearize};
use ctrnn::verify::{
    bounded_model, check_discretize_linearize, check_euler_convergence, check_linearization_scaling, check_linearize_rescale,
    check_rescale_discretize, check_rescale_discretize_misaligned, check_rescale_inverse, check_shared_fixed_point_ensemble,
    check_speed_reparameterization, check_stability_implication, jacobian_fd_error, random_model, random_signal, random_state,
    tanh_remainder_violations, EnsembleSpec,
};
use ctrnn::{Activation, InputSignal, Model, ModelParams, TimeGrid, TransformStep};

const SEED: u64 = 20_240_917;
const UNIT_SIZES: [usize; 3] = [2, 8, 32];
const ENSEMBLE: usize = 100;

struct Verdict {
    pass: bool,
    detail: String,
}

fn spec(count: usize, n_units: usize) -> EnsembleSpec {
    EnsembleSpec { seed: SEED, count, n_units, ..EnsembleSpec::default() }
}

/// Commutator fixture `i`: Tanh model, initial state, sinusoidal input.
fn fixture(i: usize) -> (Model, DVector<f64>, InputSignal) {
    let s = spec(ENSEMBLE, UNIT_SIZES[i % UNIT_SIZES.len()]);
    (random_model(&s, i).unwrap(), random_state(&s, i, 1.0), random_signal(&s, i))
}

fn dl() -> Verdict {
    let (mut param, mut traj, mut fails) = (0.0f64, 0.0f64, 0);
    for i in 0..ENSEMBLE {
        let (m, h0, sig) = fixture(i);
        let r = check_discretize_linearize(&m, 0.05, &h0, &sig, 1000).unwrap();
        param = param.max(r.param_comparison.max_abs_param_diff);
        traj = traj.max(r.trajectory_max_abs);
        fails += (!(r.pass && r.param_comparison.structurally_equal)) as usize;
    }
    Verdict {
        pass: fails == 0 && param == 0.0 && traj == 0.0,
        detail: format!("{ENSEMBLE} models N in {UNIT_SIZES:?}, 1000 steps: max param diff {param:e}, max traj diff {traj:e}, failures {fails}"),
    }
}

fn lr() -> Verdict {
    let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
    let (mut param, mut traj, mut fails) = (0.0f64, 0.0f64, 0);
    for i in 0..ENSEMBLE {
        let (m, h0, sig) = fixture(i);
        for tau in [0.5, 2.0, 3.0] {
            let r = check_linearize_rescale(&m, tau, &h0, &sig, &grid, 5).unwrap();
            param = param.max(r.param_comparison.max_abs_param_diff);
            traj = traj.max(r.trajectory_max_abs);
            fails += (!(r.param_comparison.structurally_equal && r.param_comparison.max_abs_param_diff == 0.0 && r.trajectory_max_abs <= 1e-12)) as usize;
        }
    }
    Verdict {
        pass: fails == 0,
        detail: format!("tau in [0.5, 2, 3]: max param diff {param:e}, max reference-trajectory diff {traj:e} (tol 1e-12)"),
    }
}

fn rd() -> Verdict {
    let taus = [0.5, 2.0, 3.0, 10.0];
    let (mut worst, mut fails, mut control_min) = (0.0f64, 0, f64::INFINITY);
    for i in 0..ENSEMBLE {
        let (m, h0, sig) = fixture(i);
        for tau in taus {
            let r = check_rescale_discretize(&m, tau, 0.01, &h0, &sig, 1000).unwrap();
            worst = worst.max(r.trajectory_max_abs);
            fails += (!(r.pass && r.param_comparison.max_abs_param_diff == 0.0)) as usize;
            let c = check_rescale_discretize_misaligned(&m, tau, 0.01, &h0, &sig, 1000).unwrap();
            control_min = control_min.min(c.trajectory_max_abs);
        }
    }
    Verdict {
        pass: fails == 0 && worst == 0.0 && control_min > 1e-3,
        detail: format!("{ENSEMBLE} models x tau {taus:?}: aligned max diff {worst:e}, failures {fails}; misaligned control min gap {control_min:.3e} (> 1e-3)"),
    }
}

fn inverse() -> Verdict {
    let taus = [2.0, 3.0, 7.0, 1.0 / 5.0];
    let (mut rel, mut fails, mut cases) = (0.0f64, 0, 0);
    for i in 0..ENSEMBLE {
        let (m, _, _) = fixture(i);
        let rescaled = apply_sequence(&m, &[TransformStep::Rescale { tau: 1.7 }]).unwrap();
        let disc = discretize(&rescaled, 0.1).unwrap();
        for model in [&m, &rescaled, &disc] {
            for tau in taus {
                let r = check_rescale_inverse(model, tau).unwrap();
                rel = rel.max(r.param_comparison.gain_diff / model.gain());
                fails += (!r.pass) as usize;
                cases += 1;
            }
        }
    }
    Verdict {
        pass: fails == 0 && rel <= 1e-15,
        detail: format!("{cases} round trips, tau {taus:?}: max relative gain error {rel:e} (tol 1e-15), weights/form/step bit-equal, failures {fails}"),
    }
}

fn stability() -> Verdict {
    let s = EnsembleSpec { n_inputs: 0, bias_std: 0.0, ..spec(1000, 10) };
    let r = check_stability_implication(&s, (0.0, 0.2)).unwrap();

    let scalar = linearize(&Model::new(ModelParams::autonomous(1.0, DMatrix::zeros(1, 1)).unwrap(), Activation::Tanh)).unwrap();
    let j = analysis::jacobian(&scalar, &DVector::zeros(1), &DVector::zeros(0)).unwrap();
    let cont = analysis::stability_continuous(&j).unwrap().classification;
    let disc = analysis::stability_discrete(&discretize(&scalar, 2.5).unwrap()).unwrap().classification;
    let counter = cont == Stability::Stable && disc == Stability::Unstable;
    Verdict {
        pass: r.violations == 0 && r.tested == 1001 && r.counterexample_confirmed && counter,
        detail: format!(
            "1000 models N=10, step in (0, 0.2]: {} discrete-stable, {} continuous-stable, {} violations; scalar step 2.5: {cont:?}/{disc:?}",
            r.discrete_stable, r.continuous_stable, r.violations
        ),
    }
}

fn fixed_point() -> Verdict {
    let s = EnsembleSpec { bias_std: 0.5, ..spec(20, 8) };
    let summary = check_shared_fixed_point_ensemble(&s, 20, &[0.1, 1.0]).unwrap();
    let (mut newton, mut worst_ratio, mut fails) = (0.0f64, 0.0f64, 0);
    for (_, r) in &summary.tested {
        newton = newton.max(r.newton_residual);
        for &(delta, res, _) in &r.euler_residuals {
            worst_ratio = worst_ratio.max(res / (delta * 1e-10));
            fails += (res > delta * 1e-10) as usize;
        }
        fails += (!(r.converged && r.newton_residual <= 1e-10)) as usize;
    }
    Verdict {
        pass: summary.pass && summary.tested.len() == 20 && fails == 0,
        detail: format!(
            "{} models N=8 with converged Newton ({} skipped), delta in [0.1, 1.0]: max Newton residual {newton:.3e}, max Euler residual / (gain*delta*1e-10) {worst_ratio:.3}, failures {fails}",
            summary.tested.len(),
            summary.skipped.len()
        ),
    }
}

fn sci(v: &[f64]) -> Vec<String> {
    v.iter().map(|e| format!("{e:.3e}")).collect()
}

fn convergence() -> Verdict {
    let s = spec(1, 8);
    let m = bounded_model(&s, 0, 0.5).unwrap();
    let r = check_euler_convergence(&m, &random_state(&s, 0, 1.0), &random_signal(&s, 0), 1.0, 0.02, 3, 100).unwrap();
    let ok = r.ratios.len() == 3 && r.ratios.iter().all(|q| (1.8..=2.2).contains(q));
    Verdict {
        pass: ok && r.pass,
        detail: format!("N=8, ||w||=0.5*lambda, delta {:?}: errors {:?}, ratios {:.4?} (in [1.8, 2.2])", r.deltas, sci(&r.errors), r.ratios),
    }
}

fn linearization() -> Verdict {
    let violations = tanh_remainder_violations(10_000);
    let s = EnsembleSpec { bias_std: 0.0, ..spec(1, 8) };
    let m = random_model(&s, 0).unwrap();
    let amps = random_state(&EnsembleSpec { n_units: 2, ..s.clone() }, 1, 1.0);
    let r = check_linearization_scaling(&m, &random_state(&s, 0, 1.0), &amps, 1.0, 0.1, 0.01, 100).unwrap();
    Verdict {
        pass: violations == 0 && (4.0..=16.0).contains(&r.ratio),
        detail: format!(
            "remainder bound violations {violations}/10000; gap at t=1: eps=0.1 {:.3e}, eps=0.05 {:.3e}, ratio {:.4} (in [4, 16])",
            r.error_full, r.error_half, r.ratio
        ),
    }
}

fn speed() -> Verdict {
    let (mut fails, mut worst) = (0, 0.0f64);
    for i in 0..ENSEMBLE {
        let (m, h0, sig) = fixture(i);
        for tau in [0.5, 2.0] {
            let r = check_speed_reparameterization(&m, tau, &h0, &sig, 1.0, 100).unwrap();
            worst = worst.max(r.trajectory_max_abs);
            fails += (!r.pass) as usize;
        }
    }
    Verdict {
        pass: fails == 0 && worst == 0.0,
        detail: format!("{ENSEMBLE} models x tau [0.5, 2], 100 steps, clocks scaled by 1/tau: max state diff {worst:e}, failures {fails}"),
    }
}

fn jacobian() -> Verdict {
    let s = spec(50, 6);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let m = random_model(&s, i).unwrap();
        let h = random_state(&s, i, 1.0);
        let x = random_state(&EnsembleSpec { n_units: 2, ..s.clone() }, i, 1.0);
        worst = worst.max(jacobian_fd_error(&m, &h, &x, 1e-6).unwrap());
    }
    Verdict { pass: worst <= 1e-5, detail: format!("50 models N=6: max |J - J_fd| {worst:.3e} (tol 1e-5)") }
}

fn main() -> ExitCode {
    type Criterion = (u32, &'static str, Option<Duration>, fn() -> Verdict);
    let criteria: [Criterion; 10] = [
        (1, "[D,L] commute", Some(Duration::from_secs(5)), dl),
        (2, "[L,R] commute", Some(Duration::from_secs(10)), lr),
        (3, "[R,D] commute with aligned steps", Some(Duration::from_secs(5)), rd),
        (4, "rescale is invertible", None, inverse),
        (5, "discrete stability implies continuous", Some(Duration::from_secs(10)), stability),
        (6, "shared fixed point", None, fixed_point),
        (7, "Euler first-order convergence", None, convergence),
        (8, "linearization regime", None, linearization),
        (9, "speed reparameterization", None, speed),
        (10, "Jacobian vs finite differences", None, jacobian),
    ];
    let total = Instant::now();
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let v = run();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let pass = v.pass && in_time;
        failed += (!pass) as usize;
        let budget = limit.map_or(String::new(), |l| format!(" <= {}s", l.as_secs()));
        println!(
            "[{}] {id:>2}. {name}: {} ({:.3}s{budget})",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 10 criteria passed in {:.2}s", 10 - failed, total.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use ctrnn::analysis::{self, FixedPointResult, NewtonOptions, StabilityReport};
use ctrnn::io::{model_digest, text_digest, write_trajectory_csv, ConfigErrors, FieldError, ModelSpec, TrajectoryRecord};
use ctrnn::simulate::{reference_solve, simulate};
use ctrnn::transforms::apply_sequence;
use ctrnn::verify::{render_table, run_suite, SuiteReport};
use ctrnn::{Model, TimeDomain, TimeGrid};

use crate::config::{sized, ExperimentConfig, Format, GeneratorChoice, Loaded};

/// What a successful command run means for the exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    SuiteFailed,
}

pub struct Ctx {
    pub loaded: Loaded,
    pub seed: u64,
    pub quiet: bool,
}


impl Ctx {
    fn config(&self) -> &ExperimentConfig {
        &self.loaded.config
    }

    fn say(&self, text: impl AsRef<str>) {
        if !self.quiet {
            // A closed pipe (e.g. `| head`) is not an error worth reporting.
            let _ = writeln!(std::io::stdout().lock(), "{}", text.as_ref());
        }
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.config().output.dir.clone();
        fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(dir)
    }

    fn wants(&self, f: Format) -> bool {
        self.config().output.formats.contains(&f)
    }

    /// The model after the configured transform sequence.
    fn model(&self) -> Result<(Model, Model)> {
        let base = self.config().base_model(&self.loaded.base_dir, self.seed)?;
        let out = apply_sequence(&base, &self.config().transforms).context("transform sequence failed")?;
        Ok((base, out))
    }
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    command: &'static str,
    config: &'a ExperimentConfig,
    digests: Digests,
    result: T,
}

#[derive(Serialize, Default)]
struct Digests {
    config: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_in: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_out: Option<String>,
}

fn digests(cfg: &ExperimentConfig, models: Option<(&Model, &Model)>) -> Digests {
    // Where results are written is not part of the experiment.
    let experiment = ExperimentConfig { output: Default::default(), ..cfg.clone() };
    let config = text_digest(&toml::to_string(&experiment).expect("config serializes"));
    match models {
        Some((a, b)) => Digests { config, model_in: Some(model_digest(a)), model_out: Some(model_digest(b)) },
        None => Digests { config, ..Default::default() },
    }
}

fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn domain_label(m: &Model) -> String {
    match m.time_domain() {
        TimeDomain::Continuous => "Continuous".into(),
        TimeDomain::Discrete { .. } => format!("Discrete({})", m.delta().expect("discrete model has a step")),
    }
}

#[derive(Serialize)]
struct TransformResult {
    steps: usize,
    form: &'static str,
    domain: String,
    gain: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    effective_step: Option<f64>,
    model: ModelSpec,
}

pub fn transform(ctx: &Ctx) -> Result<Outcome> {
    let (base, model) = ctx.model()?;
    let result = TransformResult {
        steps: ctx.config().transforms.len(),
        form: model.form().tag(),
        domain: domain_label(&model),
        gain: model.gain(),
        delta: model.delta(),
        effective_step: model.effective_step(),
        model: ModelSpec::from_model(&model),
    };
    let d = digests(ctx.config(), Some((&base, &model)));
    ctx.say(format!("form:    {}", result.form));
    ctx.say(format!("domain:  {}", result.domain));
    ctx.say(format!("gain:    {}", result.gain));
    if let (Some(delta), Some(s)) = (result.delta, result.effective_step) {
        ctx.say(format!("delta:   {delta}"));
        ctx.say(format!("step:    {s} (gain*delta)"));
    }
    ctx.say(format!("digest:  {}", d.model_out.as_deref().unwrap_or_default()));

    let dir = ctx.out_dir()?;
    let model_path = dir.join("model.toml");
    fs::write(&model_path, result.model.to_toml()).with_context(|| format!("writing {}", model_path.display()))?;
    if ctx.wants(Format::Json) {
        write_json(&dir.join("transform.json"), &Document { command: "transform", config: ctx.config(), digests: d, result })?;
    }
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct SimulationResult<'a> {
    n_units: usize,
    rows: usize,
    diverged: bool,
    diverged_at: Option<usize>,
    trajectory: TrajectoryRecord<'a>,
}

fn config_error(path: &str, msg: impl Into<String>) -> anyhow::Error {
    ConfigErrors(vec![FieldError::new(path, msg)]).into()
}

pub fn simulate_cmd(ctx: &Ctx) -> Result<Outcome> {
    let (base, model) = ctx.model()?;
    let Some(sim) = &ctx.config().simulation else {
        return Err(config_error("simulation", "a [simulation] section is required"));
    };
    let h0 = sized("simulation.h0", &sim.h0, model.n_units(), "units").map_err(|e| ConfigErrors(vec![e]))?;
    let signal = sim.signal.build("simulation.signal", model.n_inputs(), &ctx.loaded.base_dir)?;

    let traj = match sim.generator {
        GeneratorChoice::Euler => {
            let Some(delta) = model.delta() else {
                return Err(config_error(
                    "simulation.generator",
                    "the Euler map needs a discrete model; add a discretize transform or use generator = \"reference\"",
                ));
            };
            let grid = match sim.t_end {
                Some(end) => TimeGrid::new(sim.t_start, end, sim.n_steps)?,
                None => TimeGrid::from_step(sim.t_start, delta, sim.n_steps)?,
            };
            simulate(&model, &h0, &signal, &grid)?
        }
        GeneratorChoice::Reference => {
            if !model.is_continuous() {
                return Err(config_error("simulation.generator", "the reference solver needs a continuous model"));
            }
            let Some(end) = sim.t_end else {
                return Err(config_error("simulation.t_end", "required for the reference solver"));
            };
            reference_solve(&model, &h0, &signal, &TimeGrid::new(sim.t_start, end, sim.n_steps)?, sim.substeps)?
        }
    };

    ctx.say(format!("model:   {} {} gain {} ({} units)", model.form().tag(), domain_label(&model), model.gain(), model.n_units()));
    ctx.say(format!("grid:    [{}, {}] in {} steps", traj.grid.start(), traj.grid.end(), traj.grid.n_steps()));
    match traj.meta.diverged_at {
        Some(k) => ctx.say(format!("DIVERGED at index {k} (t = {}); rows after it are not written", traj.grid.time(k))),
        None => ctx.say(format!("final:   {:?}", traj.last_state().as_slice())),
    }

    let dir = ctx.out_dir()?;
    if ctx.wants(Format::Csv) {
        let path = dir.join("trajectory.csv");
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_trajectory_csv(&traj, BufWriter::new(file))?;
        ctx.say(format!("wrote    {}", path.display()));
    }
    if ctx.wants(Format::Json) {
        let path = dir.join("trajectory.json");
        let result = SimulationResult {
            n_units: traj.n_units(),
            rows: traj.states.len(),
            diverged: traj.diverged(),
            diverged_at: traj.meta.diverged_at,
            trajectory: TrajectoryRecord::new(&traj),
        };
        write_json(&path, &Document { command: "simulate", config: ctx.config(), digests: digests(ctx.config(), Some((&base, &model))), result })?;
        ctx.say(format!("wrote    {}", path.display()));
    }
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct AnalysisResult {
    form: &'static str,
    domain: String,
    input: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fixed_point: Option<FixedPointResult>,
    /// State at which the Jacobian and local stability were evaluated.
    evaluated_at: Vec<f64>,
    jacobian: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stability: Option<StabilityReport>,
}

fn continuous_twin(model: &Model) -> Result<Model> {
    Ok(Model::from_parts(model.params().clone(), TimeDomain::Continuous, model.form(), model.gain())?)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn analyze(ctx: &Ctx) -> Result<Outcome> {
    let (base, model) = ctx.model()?;
    let a = &ctx.config().analysis;
    let n = model.n_units();
    let x = match &a.x {
        Some(v) => sized("analysis.x", v, model.n_inputs(), "inputs").map_err(|e| ConfigErrors(vec![e]))?,
        None => DVector::zeros(model.n_inputs()),
    };
    let guess = match &a.guess {
        Some(v) => sized("analysis.guess", v, n, "units").map_err(|e| ConfigErrors(vec![e]))?,
        None => DVector::zeros(n),
    };

    // Euler maps share the equilibria of their continuous counterpart.
    let twin = continuous_twin(&model)?;
    let fixed_point = if a.fixed_point {
        let fp = if model.is_linearized() {
            analysis::linear_fixed_point(&twin, &x)?
        } else {
            analysis::fixed_point(&twin, &x, &guess, NewtonOptions { tol: a.tol, max_iter: a.max_iter })?
        };
        Some(fp)
    } else {
        None
    };
    let at = fixed_point.as_ref().map_or_else(|| guess.clone(), FixedPointResult::state);
    let jac = analysis::jacobian(&twin, &at, &x)?;
    let stability = if a.stability {
        Some(match (model.is_discrete(), model.is_linearized()) {
            (false, _) => analysis::stability_continuous(&jac)?,
            (true, true) => analysis::stability_discrete(&model)?,
            (true, false) => analysis::stability_discrete_at(&model, &at, &x)?,
        })
    } else {
        None
    };

    ctx.say(format!("model:     {} {} gain {} ({} units)", model.form().tag(), domain_label(&model), model.gain(), n));
    if let Some(fp) = &fixed_point {
        if fp.converged {
            ctx.say(format!("fixed pt:  converged in {} iterations, residual {:e}", fp.iterations, fp.residual));
        } else {
            ctx.say(format!("fixed pt:  NOT converged after {} iterations, best residual {:e}", fp.iterations, fp.residual));
        }
        ctx.say(format!("h*:        {:?}", fp.h_star));
    }
    if let Some(s) = &stability {
        let label = format!("{:?}", s.classification).to_lowercase();
        ctx.say(format!("stability: {label} ({:?}, margin {:e})", s.domain, s.margin));
        for z in &s.eigenvalues {
            ctx.say(format!("  eig      {} {:+}i", z.re, z.im));
        }
    }

    let result = AnalysisResult {
        form: model.form().tag(),
        domain: domain_label(&model),
        input: x.as_slice().to_vec(),
        fixed_point,
        evaluated_at: at.as_slice().to_vec(),
        jacobian: rows(&jac),
        stability,
    };
    if ctx.wants(Format::Json) {
        let path = ctx.out_dir()?.join("analysis.json");
        write_json(&path, &Document { command: "analyze", config: ctx.config(), digests: digests(ctx.config(), Some((&base, &model))), result })?;
        ctx.say(format!("wrote      {}", path.display()));
    }
    Ok(Outcome::Success)
}

pub fn verify(ctx: &Ctx) -> Result<Outcome> {
    let report: SuiteReport = run_suite(&ctx.config().verify)?;
    ctx.say(render_table(&report).trim_end());
    let pass = report.pass;
    if ctx.wants(Format::Json) {
        let path = ctx.out_dir()?.join("verify.json");
        write_json(&path, &Document { command: "verify", config: ctx.config(), digests: digests(ctx.config(), None), result: report })?;
        ctx.say(format!("wrote {}", path.display()));
    }
    if pass {
        Ok(Outcome::Success)
    } else {
        if ctx.quiet {
            eprintln!("verification suite FAILED");
        }
        Ok(Outcome::SuiteFailed)
    }
}

pub fn ensure_valid(cfg: &ExperimentConfig) -> Result<()> {
    let errors = cfg.validate();
    if errors.is_empty() {
        Ok(())
    } else {
        bail!(ConfigErrors(errors))
    }
}

//! The four subcommands. Each takes a resolved config and writes its
//! artifacts under `config.out`.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pushmpc_core::gp::{GpModel, Hyperparams, PushDataset, OUTPUT_DIM};
use pushmpc_core::learned::LearnedDynamics;
use pushmpc_core::mpc::{Command, ControlOutput, Controller, FomController, GpController};
use pushmpc_core::sim::{generate_pushes, run_closed_loop, Policy, SimResult};
use pushmpc_core::slider::{SliderParams, State};
use pushmpc_core::tracks::{generate_nominal, NominalTrajectory};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ControllerKind, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::formats::{self, DatasetMeta};

pub const OUTPUT_NAMES: [&str; OUTPUT_DIM] = ["dx_b", "dy_b", "dtheta_b"];

/// Generates the configured pushes, without the subset cut.
pub fn generate_dataset(cfg: &ExperimentConfig) -> CliResult<(PushDataset, DatasetMeta)> {
    let params = cfg.params()?;
    let gen_cfg = cfg.data.generation(cfg.seed);
    let out = generate_pushes(&params, &gen_cfg)?;
    let meta = DatasetMeta {
        n: out.dataset.len(),
        v_nom: gen_cfg.v_nom,
        dt: gen_cfg.dt,
        seed: gen_cfg.seed,
        beta_max: gen_cfg.beta_max,
        noise_std: gen_cfg.noise_std,
        resampled: out.resampled,
        slider: params,
    };
    Ok((out.dataset, meta))
}

fn cut(ds: PushDataset, mut meta: DatasetMeta, subset: Option<usize>) -> CliResult<(PushDataset, DatasetMeta)> {
    match subset {
        None => Ok((ds, meta)),
        Some(k) if k > ds.len() => Err(CliError::Validation(format!("subset {k} exceeds the {} available rows", ds.len()))),
        Some(k) => {
            meta.n = k;
            Ok((ds.prefix(k), meta))
        }
    }
}

/// The training data: the dataset file when given, generated pushes otherwise.
pub fn load_dataset(cfg: &ExperimentConfig) -> CliResult<(PushDataset, DatasetMeta)> {
    let (ds, meta) = match &cfg.dataset {
        Some(p) => formats::read_dataset(p)?,
        None => generate_dataset(cfg)?,
    };
    cut(ds, meta, cfg.subset)
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerateReport {
    pub dataset: PathBuf,
    pub rows: usize,
    pub resampled: usize,
}

pub fn cmd_generate(cfg: &ExperimentConfig) -> CliResult<GenerateReport> {
    let (ds, meta) = generate_dataset(cfg)?;
    let (ds, meta) = cut(ds, meta, cfg.subset)?;
    let path = cfg.out.join("dataset.csv");
    formats::write_dataset(&path, &ds, &meta)?;
    Ok(GenerateReport { dataset: path, rows: ds.len(), resampled: meta.resampled })
}

pub fn train(ds: &PushDataset, params: SliderParams, cfg: &ExperimentConfig) -> CliResult<LearnedDynamics> {
    let gp = GpModel::fit(ds, &cfg.fit.options())?;
    Ok(LearnedDynamics::new(gp, ds.v_nom, ds.dt, params)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputReport {
    pub output: &'static str,
    pub hyperparams: Hyperparams,
    pub jitter: f64,
    pub log_marginal_likelihood: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub model: PathBuf,
    pub rows: usize,
    pub fit_seconds: f64,
    pub outputs: Vec<OutputReport>,
    pub config: ExperimentConfig,
}

pub fn cmd_train(cfg: &ExperimentConfig) -> CliResult<TrainReport> {
    let (ds, meta) = load_dataset(cfg)?;
    let start = Instant::now();
    let dynamics = train(&ds, meta.slider, cfg)?;
    let fit_seconds = start.elapsed().as_secs_f64();
    let path = cfg.out.join("model.json");
    formats::write_model(&path, &dynamics, meta.seed)?;
    let outputs = (0..OUTPUT_DIM)
        .map(|k| OutputReport {
            output: OUTPUT_NAMES[k],
            hyperparams: dynamics.gp.outputs[k].hyper,
            jitter: dynamics.gp.outputs[k].jitter,
            log_marginal_likelihood: dynamics.gp.log_marginal_likelihood(k),
        })
        .collect();
    let report = TrainReport { model: path, rows: ds.len(), fit_seconds, outputs, config: cfg.clone() };
    formats::write_json(&cfg.out.join("hyperparams.json"), &report)?;
    Ok(report)
}

pub fn analytical_controller(cfg: &ExperimentConfig) -> CliResult<Controller> {
    let mut c = FomController::new(cfg.params()?, cfg.weights())?;
    c.bounds = cfg.mpc.analytical_bounds;
    c.sliding_steps = cfg.mpc.sliding_steps;
    Ok(Controller::Analytical(c))
}

pub fn learned_controller(cfg: &ExperimentConfig, dynamics: LearnedDynamics) -> CliResult<Controller> {
    let mut c = GpController::new(dynamics, cfg.weights())?;
    c.bounds = cfg.mpc.learned_bounds;
    Ok(Controller::Learned(c))
}

/// The configured controller; the learned one is loaded from the model file
/// or trained on the configured data.
pub fn build_controller(cfg: &ExperimentConfig) -> CliResult<Controller> {
    match cfg.controller {
        ControllerKind::Analytical => analytical_controller(cfg),
        ControllerKind::Learned => {
            let dynamics = match &cfg.model {
                Some(p) => formats::read_model(p)?,
                None => {
                    let (ds, meta) = load_dataset(cfg)?;
                    train(&ds, meta.slider, cfg)?
                }
            };
            learned_controller(cfg, dynamics)
        }
    }
}

/// Records the wall-clock time of every control solve.
pub struct Timed<'a> {
    pub inner: &'a Controller,
    pub solve_ms: RefCell<Vec<f64>>,
}

impl<'a> Timed<'a> {
    pub fn new(inner: &'a Controller) -> Self {
        Timed { inner, solve_ms: RefCell::new(Vec::new()) }
    }
}

impl Policy for Timed<'_> {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn params(&self) -> &SliderParams {
        self.inner.params()
    }

    fn control(&self, traj: &NominalTrajectory, t: f64, x: &State) -> pushmpc_core::Result<ControlOutput> {
        let start = Instant::now();
        let out = self.inner.control(traj, t, x);
        self.solve_ms.borrow_mut().push(start.elapsed().as_secs_f64() * 1e3);
        out
    }

    fn nominal_command(&self, traj: &NominalTrajectory, t: f64) -> Command {
        self.inner.nominal_command(traj, t)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub setup_s: f64,
    pub run_s: f64,
    pub mean_solve_ms: f64,
    pub max_solve_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub controller: &'static str,
    /// Training rows behind the learned model.
    pub training_rows: Option<usize>,
    pub mean_error: f64,
    pub mean_error_mm: f64,
    pub rms_error_mm: f64,
    pub mse_m2: f64,
    pub completed: bool,
    pub steps: usize,
    pub contact_lost_steps: usize,
    pub controller_failures: usize,
    pub recovery_time: Option<f64>,
    pub abort: Option<String>,
    pub timings: Timings,
    pub config: ExperimentConfig,
}

pub struct TrackRun {
    pub traj: NominalTrajectory,
    pub result: SimResult,
    /// Control-solve times aligned with the trace rows (empty while detached).
    pub solve_ms: Vec<f64>,
    pub summary: RunSummary,
}

/// Solve times per trace row, leaving detached rows empty.
fn align_solve_times(result: &SimResult, times: &[f64]) -> Vec<f64> {
    let mut it = times.iter();
    result.trace.iter().map(|r| if r.mode.is_none() { f64::NAN } else { *it.next().unwrap_or(&f64::NAN) }).collect()
}

/// Runs one closed-loop lap without touching the disk.
pub fn run_track(cfg: &ExperimentConfig, ctrl: &Controller, setup_s: f64) -> CliResult<TrackRun> {
    let params = cfg.params()?;
    let traj = generate_nominal(&cfg.track.spec(), &params)?;
    let opts = cfg.run_options();
    let timed = Timed::new(ctrl);
    let start = Instant::now();
    let result = run_closed_loop(&timed, &params, &traj, &opts)?;
    let run_s = start.elapsed().as_secs_f64();
    let times = timed.solve_ms.into_inner();
    let mean_solve_ms = if times.is_empty() { 0.0 } else { times.iter().sum::<f64>() / times.len() as f64 };
    let max_solve_ms = times.iter().cloned().fold(0.0, f64::max);
    let training_rows = match ctrl {
        Controller::Learned(c) => Some(c.dynamics.gp.len()),
        Controller::Analytical(_) => None,
    };
    let summary = RunSummary {
        controller: ctrl.name(),
        training_rows,
        mean_error: result.mean_error,
        mean_error_mm: result.mean_error * 1e3,
        rms_error_mm: result.rms_error * 1e3,
        mse_m2: result.rms_error * result.rms_error,
        completed: result.completed,
        steps: result.trace.len(),
        contact_lost_steps: result.contact_lost_steps,
        controller_failures: result.controller_failures,
        recovery_time: result.recovery_time,
        abort: result.abort.as_ref().map(|e| e.to_string()),
        timings: Timings { setup_s, run_s, mean_solve_ms, max_solve_ms },
        config: cfg.clone(),
    };
    let solve_ms = align_solve_times(&result, &times);
    Ok(TrackRun { traj, result, solve_ms, summary })
}

/// Text dump of the QPs solved at `t = 0` from the initial state.
pub fn initial_qp_dump(ctrl: &Controller, traj: &NominalTrajectory, x: &State) -> String {
    let mut s = String::new();
    match ctrl {
        Controller::Analytical(c) => {
            for (i, (seq, qp, sol)) in c.solve_family(traj, 0.0, x).iter().enumerate() {
                let modes: Vec<&str> = seq.0.iter().map(|m| m.name()).collect();
                let _ = writeln!(s, "# sequence {i} status {:?} objective {:e}: {}", sol.status, sol.objective, modes.join(","));
                let _ = qp.write_text(&mut s);
            }
        }
        Controller::Learned(c) => match c.build_problem(traj, 0.0, x) {
            Ok(qp) => {
                let _ = qp.write_text(&mut s);
            }
            Err(e) => {
                let _ = writeln!(s, "# no problem: {e}");
            }
        },
    }
    s
}

pub fn cmd_track(cfg: &ExperimentConfig) -> CliResult<RunSummary> {
    let start = Instant::now();
    let ctrl = build_controller(cfg)?;
    let setup_s = start.elapsed().as_secs_f64();
    let run = run_track(cfg, &ctrl, setup_s)?;
    let out = &cfg.out;
    let opts = cfg.run_options();
    formats::write_trace(&out.join("trace.csv"), &run.result, &opts, &run.solve_ms)?;
    formats::write_path(&out.join("path.csv"), &run.result, &run.traj)?;
    formats::write_error(&out.join("error.csv"), &run.result)?;
    formats::write_nominal(&out.join("nominal.csv"), &run.traj)?;
    if let Some(first) = run.result.trace.first() {
        formats::write_text(&out.join("qp_t0.txt"), &initial_qp_dump(&ctrl, &run.traj, &first.state))?;
    }
    formats::write_json(&out.join("summary.json"), &run.summary)?;
    if let Some(e) = &run.result.abort {
        return Err((*e).clone().into());
    }
    Ok(run.summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub seed: u64,
    pub n: usize,
    pub mean_error_mm: f64,
    pub rms_error_mm: f64,
    pub completed: bool,
    pub contact_lost_steps: usize,
    pub controller_failures: usize,
    pub fit_s: f64,
    pub run_s: f64,
    /// Why the run produced no result.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub n: usize,
    /// Median over seeds of the completed and aborted runs alike.
    pub median_error_mm: f64,
    pub completed_runs: usize,
    pub runs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub points: Vec<SweepPoint>,
    pub config: ExperimentConfig,
}

fn sweep_one(cfg: &ExperimentConfig, master: &PushDataset, slider: SliderParams, seed: u64, n: usize) -> SweepRow {
    let mut row = SweepRow {
        seed,
        n,
        mean_error_mm: f64::NAN,
        rms_error_mm: f64::NAN,
        completed: false,
        contact_lost_steps: 0,
        controller_failures: 0,
        fit_s: 0.0,
        run_s: 0.0,
        failure: None,
    };
    if n > master.len() {
        row.failure = Some(format!("only {} rows available", master.len()));
        return row;
    }
    let start = Instant::now();
    let outcome = train(&master.prefix(n), slider, cfg).and_then(|d| {
        row.fit_s = start.elapsed().as_secs_f64();
        let ctrl = learned_controller(cfg, d)?;
        run_track(cfg, &ctrl, row.fit_s)
    });
    match outcome {
        Ok(run) => {
            let s = run.summary;
            row.mean_error_mm = s.mean_error_mm;
            row.rms_error_mm = s.rms_error_mm;
            row.completed = s.completed;
            row.contact_lost_steps = s.contact_lost_steps;
            row.controller_failures = s.controller_failures;
            row.run_s = s.timings.run_s;
            row.failure = s.abort;
        }
        Err(e) => row.failure = Some(e.to_string()),
    }
    row
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Learned-controller runs over nested training prefixes, in parallel.
///
/// Failed runs become flagged rows rather than errors.
pub fn sweep(cfg: &ExperimentConfig) -> CliResult<SweepReport> {
    let mut cfg = cfg.clone();
    cfg.controller = ControllerKind::Learned;
    cfg.model = None;
    cfg.subset = None;
    let largest = *cfg.sweep.sizes.iter().max().unwrap_or(&1);
    let mut masters = Vec::new();
    for &seed in &cfg.sweep.seeds {
        let c = ExperimentConfig { seed, data: crate::config::DataConfig { n: largest, ..cfg.data }, ..cfg.clone() };
        let (ds, meta) = match &cfg.dataset {
            Some(p) => formats::read_dataset(p)?,
            None => generate_dataset(&c)?,
        };
        masters.push((seed, ds, meta.slider));
    }
    let jobs: Vec<(usize, usize)> = (0..masters.len()).flat_map(|m| cfg.sweep.sizes.iter().map(move |&n| (m, n))).collect();
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(m, n)| {
            let (seed, ds, slider) = &masters[m];
            sweep_one(&cfg, ds, *slider, *seed, n)
        })
        .collect();
    let mut sizes = cfg.sweep.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let points = sizes
        .iter()
        .map(|&n| {
            let of_n: Vec<&SweepRow> = rows.iter().filter(|r| r.n == n).collect();
            let mut errs: Vec<f64> = of_n.iter().map(|r| r.mean_error_mm).filter(|e| e.is_finite()).collect();
            SweepPoint {
                n,
                median_error_mm: median(&mut errs),
                completed_runs: of_n.iter().filter(|r| r.completed).count(),
                runs: of_n.len(),
            }
        })
        .collect();
    Ok(SweepReport { rows, points, config: cfg })
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> CliResult<SweepReport> {
    let report = sweep(cfg)?;
    write_sweep(&cfg.out, &report)?;
    Ok(report)
}

fn write_sweep(out: &Path, report: &SweepReport) -> CliResult<()> {
    let path = out.join("sweep.csv");
    let mut w = csv::Writer::from_writer(formats::create(&path)?);
    for r in &report.rows {
        w.serialize(r).map_err(|e| CliError::format(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    let path = out.join("sweep_points.csv");
    let mut w = csv::Writer::from_writer(formats::create(&path)?);
    for p in &report.points {
        w.serialize(p).map_err(|e| CliError::format(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    formats::write_json(&out.join("sweep.json"), report)
}

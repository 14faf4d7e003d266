//! On-disk formats.
//!
//! * dataset: CSV `p_y,beta,dx_b,dy_b,dtheta_b` plus a `<stem>.meta.json` sidecar
//! * model: JSON holding the training data and hyperparameters; the factor is
//!   recomputed on load, which reproduces predictions bit for bit
//! * trace: CSV `t,x,y,theta,p_y,<inputs>,v_n,v_t,mode,err,objective,kkt,solve_ms,fallback,event`
//! * path: CSV `t,x,y,x_nom,y_nom`; error: CSV `t,err_mm`
//! * nominal: CSV `t,x,y,theta,p_y,f_n,f_t,p_y_dot,v_n,v_t`

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pushmpc_core::gp::{GpModel, Hyperparams, Input, PushDataset, PushSample, OUTPUT_DIM};
use pushmpc_core::learned::LearnedDynamics;
use pushmpc_core::mpc::Command;
use pushmpc_core::sim::{PerturbationKind, RunOptions, SimResult};
use pushmpc_core::slider::SliderParams;
use pushmpc_core::tracks::NominalTrajectory;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MODEL_FORMAT: &str = "pushmpc-gp";
pub const MODEL_VERSION: u32 = 1;

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::format(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
}

/// Sidecar of a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub v_nom: f64,
    pub dt: f64,
    pub seed: u64,
    pub beta_max: f64,
    pub noise_std: f64,
    /// Pushes redrawn because they lost contact.
    pub resampled: usize,
    pub slider: SliderParams,
}

pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

pub fn write_dataset(path: &Path, ds: &PushDataset, meta: &DatasetMeta) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in &ds.rows {
        w.serialize(row).map_err(|e| CliError::format(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    write_json(&meta_path(path), meta)
}

pub fn read_dataset(path: &Path) -> CliResult<(PushDataset, DatasetMeta)> {
    let meta: DatasetMeta = read_json(&meta_path(path))?;
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::format(path, e))?;
    let header = r.headers().map_err(|e| CliError::format(path, e))?;
    if header != vec!["p_y", "beta", "dx_b", "dy_b", "dtheta_b"] {
        return Err(CliError::format(path, "expected header p_y,beta,dx_b,dy_b,dtheta_b"));
    }
    let rows = r
        .deserialize::<PushSample>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::format(path, e))?;
    let ds = PushDataset { rows, v_nom: meta.v_nom, dt: meta.dt, seed: meta.seed };
    ds.validate(meta.slider.half_width(), meta.beta_max)?;
    Ok((ds, meta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub v_nom: f64,
    pub dt: f64,
    pub seed: u64,
    pub slider: SliderParams,
    pub hyperparams: [Hyperparams; OUTPUT_DIM],
    /// Jitter that was added to each kernel diagonal.
    pub jitter: [f64; OUTPUT_DIM],
    pub inputs: Vec<Input>,
    pub targets: [Vec<f64>; OUTPUT_DIM],
}

impl ModelFile {
    pub fn from_dynamics(d: &LearnedDynamics, seed: u64) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            v_nom: d.v_nom,
            dt: d.dt,
            seed,
            slider: d.params,
            hyperparams: d.gp.hyperparams(),
            jitter: [d.gp.outputs[0].jitter, d.gp.outputs[1].jitter, d.gp.outputs[2].jitter],
            inputs: d.gp.inputs.clone(),
            targets: d.gp.targets.clone(),
        }
    }

    pub fn into_dynamics(self) -> pushmpc_core::Result<LearnedDynamics> {
        let gp = GpModel::with_hyperparams(self.inputs, self.targets, self.hyperparams)?;
        LearnedDynamics::new(gp, self.v_nom, self.dt, self.slider)
    }
}

pub fn write_model(path: &Path, d: &LearnedDynamics, seed: u64) -> CliResult<()> {
    write_json(path, &ModelFile::from_dynamics(d, seed))
}

pub fn read_model(path: &Path) -> CliResult<LearnedDynamics> {
    let file: ModelFile = read_json(path)?;
    if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
        return Err(CliError::format(path, format!("unsupported model format {} v{}", file.format, file.version)));
    }
    Ok(file.into_dynamics()?)
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn put(w: &mut csv::Writer<BufWriter<File>>, path: &Path, rec: Vec<String>) -> CliResult<()> {
    w.write_record(&rec).map_err(|e| CliError::format(path, e))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// Per-step event markers: where a perturbation was applied and where contact resumed.
pub fn trace_events(result: &SimResult, opts: &RunOptions) -> Vec<&'static str> {
    let mut ev = vec![""; result.trace.len()];
    let pert = opts.perturbation;
    match pert.kind {
        PerturbationKind::None => {}
        PerturbationKind::Tangential => {
            if let Some(e) = ev.first_mut() {
                *e = "perturbation";
            }
        }
        PerturbationKind::Normal => {
            if let Some(i) = result.trace.iter().position(|r| r.t >= pert.apply_time - 1e-9) {
                ev[i] = "perturbation";
            }
            if let Some(tr) = result.recovery_time {
                if let Some(i) = result.trace.iter().position(|r| r.t >= tr - 1e-9) {
                    ev[i] = "recontact";
                }
            }
        }
    }
    ev
}

pub fn write_trace(path: &Path, result: &SimResult, opts: &RunOptions, solve_ms: &[f64]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    let force = result.trace.iter().any(|r| matches!(r.command, Command::Force(_)));
    let mut header: Vec<String> = ["t", "x", "y", "theta", "p_y"].map(String::from).to_vec();
    let inputs: &[&str] = if force { &["f_n", "f_t", "p_y_dot"] } else { &["u_n", "u_t"] };
    header.extend(inputs.iter().map(|s| s.to_string()));
    header.extend(["v_n", "v_t", "mode", "err", "objective", "kkt", "solve_ms", "fallback", "event"].map(String::from));
    put(&mut w, path, header)?;
    let events = trace_events(result, opts);
    for (i, r) in result.trace.iter().enumerate() {
        let s = r.state;
        let mut rec = vec![num(r.t), num(s.x), num(s.y), num(s.theta), num(s.p_y)];
        let vals = r.command.values();
        for k in 0..inputs.len() {
            rec.push(vals.get(k).map_or(String::new(), |v| num(*v)));
        }
        rec.push(num(r.v_p[0]));
        rec.push(num(r.v_p[1]));
        rec.push(r.mode.map_or("detached", |m| m.name()).into());
        rec.push(num(r.error));
        rec.push(num(r.objective));
        rec.push(num(r.kkt_residual));
        rec.push(solve_ms.get(i).map_or(String::new(), |v| num(*v)));
        rec.push((r.fallback as u8).to_string());
        rec.push(events[i].into());
        put(&mut w, path, rec)?;
    }
    finish(w, path)
}

pub fn write_path(path: &Path, result: &SimResult, traj: &NominalTrajectory) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    put(&mut w, path, ["t", "x", "y", "x_nom", "y_nom"].map(String::from).to_vec())?;
    for r in &result.trace {
        let n = traj.lookup(r.t).state;
        put(&mut w, path, vec![num(r.t), num(r.state.x), num(r.state.y), num(n.x), num(n.y)])?;
    }
    finish(w, path)
}

pub fn write_error(path: &Path, result: &SimResult) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    put(&mut w, path, vec!["t".into(), "err_mm".into()])?;
    for r in &result.trace {
        put(&mut w, path, vec![num(r.t), num(r.error * 1e3)])?;
    }
    finish(w, path)
}

pub fn write_nominal(path: &Path, traj: &NominalTrajectory) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    let header = ["t", "x", "y", "theta", "p_y", "f_n", "f_t", "p_y_dot", "v_n", "v_t"];
    put(&mut w, path, header.map(String::from).to_vec())?;
    for i in 0..traj.len() {
        let (s, ua, ul) = (traj.states[i], traj.inputs_analytical[i], traj.inputs_learned[i]);
        let rec = [traj.times[i], s.x, s.y, s.theta, s.p_y, ua[0], ua[1], ua[2], ul[0], ul[1]];
        put(&mut w, path, rec.iter().map(|v| num(*v)).collect())?;
    }
    finish(w, path)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

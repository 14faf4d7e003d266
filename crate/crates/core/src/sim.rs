//! Ground-truth simulation, training-push generation and closed-loop runs.
//!
//! The simulated world is the velocity-driven analytical model: the pusher
//! velocity is resolved into a contact mode and body twist at every RK4 stage.

use alloc::vec::Vec;
use core::f64::consts::PI;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::gp::{PushDataset, PushSample};
use crate::mpc::{Command, ControlOutput, Controller};
use crate::slider::{pusher_velocity_for_forces, resolve_push, ContactMode, SliderParams, State};
use crate::tracks::NominalTrajectory;
use crate::{Error, Result};
// std's inherent float methods shadow this whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;

/// One integration step of the ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthStep {
    pub state: State,
    /// Mode at the start of the step.
    pub mode: ContactMode,
    /// The contact offset left the face during the step and was clamped.
    pub clamped: bool,
}

fn ground_truth_rate(params: &SliderParams, x: &State, v_p: [f64; 2]) -> Result<([f64; 4], ContactMode)> {
    let hw = params.half_width();
    let inside = State { p_y: x.p_y.clamp(-hw, hw), ..*x };
    let r = resolve_push(params, &inside, v_p)?;
    let [xd, yd, thd] = r.twist.to_world(x.theta);
    Ok(([xd, yd, thd, r.p_y_rate], r.mode))
}

/// Advances the object under a constant body-frame pusher velocity for `h`
/// seconds with classical RK4, re-resolving the contact mode at each stage.
pub fn step_ground_truth(params: &SliderParams, x: &State, v_p: [f64; 2], h: f64) -> Result<GroundTruthStep> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter("step must be positive"));
    }
    let (k1, mode) = ground_truth_rate(params, x, v_p)?;
    let (k2, _) = ground_truth_rate(params, &x.advanced(k1, 0.5 * h), v_p)?;
    let (k3, _) = ground_truth_rate(params, &x.advanced(k2, 0.5 * h), v_p)?;
    let (k4, _) = ground_truth_rate(params, &x.advanced(k3, h), v_p)?;
    let rate: [f64; 4] = core::array::from_fn(|i| (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0);
    let mut state = x.advanced(rate, h);
    let hw = params.half_width();
    let clamped = state.p_y.abs() > hw;
    state.p_y = state.p_y.clamp(-hw, hw);
    Ok(GroundTruthStep { state, mode, clamped })
}

/// Counts consecutive clamped steps and reports when the pin lasts too long.
#[derive(Debug, Clone, Copy)]
struct PinMonitor {
    pinned: f64,
    limit: f64,
}

impl PinMonitor {
    fn new(limit: f64) -> Self {
        PinMonitor { pinned: 0.0, limit }
    }

    /// Returns false once the contact counts as lost.
    fn update(&mut self, clamped: bool, h: f64) -> bool {
        self.pinned = if clamped { self.pinned + h } else { 0.0 };
        self.pinned <= self.limit + 1e-12
    }
}

/// Time the contact offset may stay pinned at a corner before contact counts as lost.
pub const PIN_LIMIT: f64 = 0.1;

/// Settings of the random training pushes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushGenConfig {
    pub n: usize,
    pub v_nom: f64,
    pub dt: f64,
    pub beta_max: f64,
    /// Integration step inside one push.
    pub step: f64,
    /// Standard deviation of additive output noise.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for PushGenConfig {
    fn default() -> Self {
        PushGenConfig { n: 5000, v_nom: 0.02, dt: 1.0, beta_max: PI / 3.0, step: 0.01, noise_std: 0.0, seed: 0 }
    }
}

impl PushGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("need at least one push"));
        }
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.v_nom) && pos(self.dt) && pos(self.step)) {
            return Err(Error::InvalidParameter("v_nom, dt and step must be positive"));
        }
        if !(self.beta_max >= 0.0 && self.beta_max < PI / 2.0) {
            return Err(Error::InvalidParameter("beta_max must lie in [0, pi/2)"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidParameter("noise_std must be non-negative"));
        }
        Ok(())
    }
}

/// Executes one push from the origin at `theta = 0` and returns the
/// displacement `[dx, dy, dtheta]` in the initial body frame, or `None` when
/// contact is lost on the way.
pub fn execute_push(params: &SliderParams, p_y: f64, beta: f64, v_nom: f64, dt: f64, step: f64) -> Result<Option<[f64; 3]>> {
    let v_p = [v_nom * beta.cos(), v_nom * beta.sin()];
    let steps = (dt / step).round().max(1.0) as usize;
    let h = dt / steps as f64;
    let mut x = State::new(0.0, 0.0, 0.0, p_y);
    let mut pin = PinMonitor::new(PIN_LIMIT);
    for _ in 0..steps {
        let s = step_ground_truth(params, &x, v_p, h)?;
        if !pin.update(s.clamped, h) {
            return Ok(None);
        }
        x = s.state;
    }
    Ok(Some([x.x, x.y, x.theta]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPushes {
    pub dataset: PushDataset,
    /// Pushes drawn again because contact was lost.
    pub resampled: usize,
}

/// Random pushes with `p_y ~ U(+-0.9 a/2)` and `beta ~ U(+-beta_max)`.
pub fn generate_pushes(params: &SliderParams, cfg: &PushGenConfig) -> Result<GeneratedPushes> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|_| Error::InvalidParameter("noise_std"))?;
    let range = 0.9 * params.half_width();
    let mut rows = Vec::with_capacity(cfg.n);
    let mut resampled = 0;
    while rows.len() < cfg.n {
        let p_y = rng.gen_range(-range..=range);
        let beta = rng.gen_range(-cfg.beta_max..=cfg.beta_max);
        let Some(d) = execute_push(params, p_y, beta, cfg.v_nom, cfg.dt, cfg.step)? else {
            resampled += 1;
            if resampled > 100 * cfg.n {
                return Err(Error::InvalidParameter("almost every push loses contact"));
            }
            continue;
        };
        let mut out = d;
        if cfg.noise_std > 0.0 {
            for o in out.iter_mut() {
                *o += noise.sample(&mut rng);
            }
        }
        rows.push(PushSample { p_y, beta, dx_b: out[0], dy_b: out[1], dtheta_b: out[2] });
    }
    Ok(GeneratedPushes {
        dataset: PushDataset { rows, v_nom: cfg.v_nom, dt: cfg.dt, seed: cfg.seed },
        resampled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    None,
    /// Initial contact offset shifted by the magnitude.
    Tangential,
    /// Object moved away from the pusher along the contact normal.
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub magnitude: f64,
    /// Time of a normal perturbation; tangential ones act at `t = 0`.
    pub apply_time: f64,
}

impl Perturbation {
    pub fn none() -> Self {
        Perturbation { kind: PerturbationKind::None, magnitude: 0.0, apply_time: 0.0 }
    }

    pub fn tangential(magnitude: f64) -> Self {
        Perturbation { kind: PerturbationKind::Tangential, magnitude, apply_time: 0.0 }
    }

    pub fn normal(magnitude: f64) -> Self {
        Perturbation { kind: PerturbationKind::Normal, magnitude, apply_time: 1.0 }
    }

    pub fn validate(&self, params: &SliderParams) -> Result<()> {
        if !(self.magnitude >= 0.0 && self.magnitude.is_finite() && self.apply_time >= 0.0) {
            return Err(Error::InvalidParameter("perturbation magnitude and time must be non-negative"));
        }
        if self.kind == PerturbationKind::Tangential && self.magnitude > params.half_width() {
            return Err(Error::InvalidParameter("tangential perturbation moves the pusher off the face"));
        }
        Ok(())
    }
}

/// Feedback law driven by the closed loop.
pub trait Policy {
    fn name(&self) -> &'static str;
    fn params(&self) -> &SliderParams;
    fn control(&self, traj: &NominalTrajectory, t: f64, x: &State) -> Result<ControlOutput>;
    /// Input applied when `control` fails.
    fn nominal_command(&self, traj: &NominalTrajectory, t: f64) -> Command;
}

impl Policy for Controller {
    fn name(&self) -> &'static str {
        Controller::name(self)
    }

    fn params(&self) -> &SliderParams {
        Controller::params(self)
    }

    fn control(&self, traj: &NominalTrajectory, t: f64, x: &State) -> Result<ControlOutput> {
        Controller::control(self, traj, t, x)
    }

    fn nominal_command(&self, traj: &NominalTrajectory, t: f64) -> Command {
        Controller::nominal_command(self, traj, t)
    }
}

/// Open-loop replay of the nominal pusher velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalReplay {
    pub params: SliderParams,
}

impl Policy for NominalReplay {
    fn name(&self) -> &'static str {
        "nominal"
    }

    fn params(&self) -> &SliderParams {
        &self.params
    }

    fn control(&self, traj: &NominalTrajectory, t: f64, _x: &State) -> Result<ControlOutput> {
        Ok(ControlOutput {
            command: self.nominal_command(traj, t),
            mode: Some(ContactMode::Sticking),
            objective: 0.0,
            kkt_residual: 0.0,
        })
    }

    fn nominal_command(&self, traj: &NominalTrajectory, t: f64) -> Command {
        Command::Velocity(traj.lookup(t).input_learned)
    }
}

/// One control step of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    /// State at the start of the step.
    pub state: State,
    pub command: Command,
    /// Executed body-frame pusher velocity.
    pub v_p: [f64; 2],
    /// Ground-truth contact mode; `None` while the pusher is detached.
    pub mode: Option<ContactMode>,
    /// Distance between the object center and the nominal center at `t`.
    pub error: f64,
    /// QP objective of the step, `NaN` when no QP was solved.
    pub objective: f64,
    pub kkt_residual: f64,
    /// The controller failed and the nominal input was applied.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub trace: Vec<TraceRow>,
    pub mean_error: f64,
    pub rms_error: f64,
    pub completed: bool,
    /// Steps spent detached or pinned at a corner.
    pub contact_lost_steps: usize,
    pub controller_failures: usize,
    /// End of the perturbation: the recontact time for normal perturbations, 0 otherwise.
    pub recovery_time: Option<f64>,
    pub abort: Option<Error>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Simulated time; one lap when `None`.
    pub duration: Option<f64>,
    pub perturbation: Perturbation,
    /// Consecutive controller failures tolerated before aborting.
    pub max_failures: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { duration: None, perturbation: Perturbation::none(), max_failures: 10 }
    }
}

/// Runs the policy against the ground truth along `traj` starting on the
/// nominal state.
pub fn run_closed_loop<P: Policy + ?Sized>(
    policy: &P,
    params: &SliderParams,
    traj: &NominalTrajectory,
    opts: &RunOptions,
) -> Result<SimResult> {
    let pert = opts.perturbation;
    pert.validate(params)?;
    let h = traj.spec.step_h;
    let duration = opts.duration.unwrap_or(traj.lap_time);
    if !(duration > 0.0) {
        return Err(Error::InvalidParameter("duration must be positive"));
    }
    let steps = (duration / h).round() as usize;
    let speed = traj.spec.speed;

    let mut x = traj.lookup(0.0).state;
    let mut recovery_time = None;
    match pert.kind {
        PerturbationKind::Tangential => {
            x.p_y += pert.magnitude;
            recovery_time = Some(0.0);
        }
        PerturbationKind::None => recovery_time = Some(0.0),
        PerturbationKind::Normal => {}
    }

    let mut trace = Vec::with_capacity(steps);
    let mut pin = PinMonitor::new(PIN_LIMIT);
    let (mut failures, mut consecutive, mut lost_steps) = (0, 0, 0);
    let mut gap = 0.0;
    let mut perturbed = false;
    let mut abort = None;

    for k in 0..steps {
        let t = k as f64 * h;
        if pert.kind == PerturbationKind::Normal && !perturbed && t >= pert.apply_time - 1e-9 {
            let (s, c) = x.theta.sin_cos();
            x.x += pert.magnitude * c;
            x.y += pert.magnitude * s;
            gap = pert.magnitude;
            perturbed = true;
        }
        let error = x.distance_to(&traj.lookup(t).state);

        if gap > 0.0 {
            // detached: the pusher closes the gap along the normal
            gap -= speed * h;
            lost_steps += 1;
            trace.push(TraceRow {
                t,
                state: x,
                command: Command::Velocity([speed, 0.0]),
                v_p: [speed, 0.0],
                mode: None,
                error,
                objective: f64::NAN,
                kkt_residual: f64::NAN,
                fallback: false,
            });
            if gap <= 1e-12 {
                gap = 0.0;
                recovery_time = Some(t + h);
            }
            continue;
        }

        let (command, objective, kkt_residual, fallback) = match policy.control(traj, t, &x) {
            Ok(out) => {
                consecutive = 0;
                (out.command, out.objective, out.kkt_residual, false)
            }
            Err(_) => {
                failures += 1;
                consecutive += 1;
                (policy.nominal_command(traj, t), f64::NAN, f64::NAN, true)
            }
        };
        if consecutive >= opts.max_failures {
            abort = Some(Error::RunAborted { t, reason: "too many consecutive controller failures" });
            break;
        }
        let mut v_p = match command {
            Command::Force(u) => pusher_velocity_for_forces(params, x.p_y, u),
            Command::Velocity(v) => v,
        };
        v_p[0] = v_p[0].max(0.0);
        let step = match step_ground_truth(params, &x, v_p, h) {
            Ok(s) => s,
            Err(e) => {
                abort = Some(e);
                break;
            }
        };
        trace.push(TraceRow {
            t,
            state: x,
            command,
            v_p,
            mode: Some(step.mode),
            error,
            objective,
            kkt_residual,
            fallback,
        });
        if step.clamped {
            lost_steps += 1;
        }
        if !pin.update(step.clamped, h) {
            abort = Some(Error::ContactLost { t: t + h });
            break;
        }
        x = step.state;
    }

    let completed = abort.is_none() && trace.len() == steps && recovery_time.is_some();
    let errors: Vec<f64> = trace.iter().map(|r| r.error).collect();
    Ok(SimResult {
        mean_error: mean(&errors),
        rms_error: rms(&errors),
        trace,
        completed,
        contact_lost_steps: lost_steps,
        controller_failures: failures,
        recovery_time,
        abort,
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt()
}

/// Mean distance between the traced centers and the time-indexed nominal centers.
pub fn tracking_error(trace: &[TraceRow], traj: &NominalTrajectory) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::Empty("trace"));
    }
    let d: Vec<f64> = trace.iter().map(|r| r.state.distance_to(&traj.lookup(r.t).state)).collect();
    Ok(mean(&d))
}

/// Root-mean-square counterpart of [`tracking_error`].
pub fn tracking_rms_error(trace: &[TraceRow], traj: &NominalTrajectory) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::Empty("trace"));
    }
    let d: Vec<f64> = trace.iter().map(|r| r.state.distance_to(&traj.lookup(r.t).state)).collect();
    Ok(rms(&d))
}

/// Mean recorded error over the rows with `t >= from`.
pub fn mean_error_since(trace: &[TraceRow], from: f64) -> f64 {
    let e: Vec<f64> = trace.iter().filter(|r| r.t >= from - 1e-9).map(|r| r.error).collect();
    mean(&e)
}

//! Receding-horizon tracking controllers.
//!
//! Both controllers linearize their model along the nominal trajectory,
//! condense the forward-Euler rollout of the deviation dynamics into a QP over
//! the input deviations and apply the first input of the solution. The
//! analytical controller solves one QP per mode sequence of a small family
//! and keeps the cheapest; the learned controller linearizes the GP mean and
//! solves a single QP.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::learned::{beta_of, learned_jacobians_from_prediction, GpPrediction, LearnedDynamics};
use crate::qp::{self, QProblem, QSolution, QpSettings};
use crate::slider::{mode_constraints, ContactMode, SliderParams, State};
use crate::tracks::{NominalPoint, NominalTrajectory};
use crate::{Error, Result};
// std's inherent float methods shadow this whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;

/// Diagonal cost weights, horizon length and step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcWeights {
    pub q: [f64; 4],
    pub q_n: [f64; 4],
    pub r: Vec<f64>,
    pub horizon_n: usize,
    pub step_h: f64,
}

impl MpcWeights {
    /// Weights of the force-input controller, `u = [f_n, f_t, p_y_dot]`.
    pub fn analytical() -> Self {
        let q = [6000.0, 3000.0, 10.0, 0.0];
        MpcWeights { q, q_n: q, r: vec![0.1, 0.001, 0.001], horizon_n: 35, step_h: 0.01 }
    }

    /// Weights of the velocity-input controller, `u = [v_n, v_t]`.
    pub fn learned() -> Self {
        let q = [6000.0, 3000.0, 10.0, 3000.0];
        MpcWeights { q, q_n: q, r: vec![10.0, 0.001], horizon_n: 35, step_h: 0.01 }
    }

    pub fn input_dim(&self) -> usize {
        self.r.len()
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if self.r.len() != input_dim {
            return Err(Error::InvalidParameter("input weight count does not match the model"));
        }
        let ok = |v: &f64| v.is_finite() && *v >= 0.0;
        if !(self.q.iter().all(ok) && self.q_n.iter().all(ok) && self.r.iter().all(ok)) {
            return Err(Error::InvalidParameter("weights must be finite and non-negative"));
        }
        if self.horizon_n == 0 {
            return Err(Error::InvalidParameter("horizon must have at least one step"));
        }
        if !(self.step_h > 0.0 && self.step_h.is_finite()) {
            return Err(Error::InvalidParameter("step_h must be positive"));
        }
        Ok(())
    }
}

/// Continuous-time Jacobians `A_i` (4x4) and `B_i` (4xm) along the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedDynamics {
    pub a: Vec<Matrix4<f64>>,
    pub b: Vec<DMatrix<f64>>,
}

impl LinearizedDynamics {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn input_dim(&self) -> usize {
        self.b.first().map_or(0, |b| b.ncols())
    }
}

/// Jacobians of the force-driven model at `(x, u)`, `u = [f_n, f_t, p_y_dot]`.
pub fn linearize_analytical(params: &SliderParams, x: &State, u: [f64; 3]) -> (Matrix4<f64>, DMatrix<f64>) {
    let (l_f, l_tau) = params.limit_surface_gains();
    let p_x = params.p_x;
    let (f_n, f_t) = (u[0], u[1]);
    let tw = [l_f * f_n, l_f * f_t, l_tau * (-x.p_y * f_n + p_x * f_t)];
    let (s, c) = x.theta.sin_cos();

    let mut a = Matrix4::zeros();
    a[(0, 2)] = -s * tw[0] - c * tw[1];
    a[(1, 2)] = c * tw[0] - s * tw[1];
    // the contact offset only enters through the torque arm of f_n
    a[(2, 3)] = -l_tau * f_n;

    let mut b = DMatrix::zeros(4, 3);
    b[(0, 0)] = c * l_f;
    b[(1, 0)] = s * l_f;
    b[(2, 0)] = -l_tau * x.p_y;
    b[(0, 1)] = -s * l_f;
    b[(1, 1)] = c * l_f;
    b[(2, 1)] = l_tau * p_x;
    b[(3, 2)] = 1.0;
    (a, b)
}

/// Jacobians of the GP-driven model at `(x, v_p)`; needs `|v_p| > 0`.
pub fn linearize_learned(dyn_: &LearnedDynamics, x: &State, v_p: [f64; 2]) -> Result<(Matrix4<f64>, DMatrix<f64>)> {
    let beta = beta_of(v_p)?;
    let prediction = dyn_.gp.predict_mean_with_gradient(&[x.p_y, beta]);
    learned_to_dynamic(dyn_, x, v_p, &prediction)
}

fn learned_to_dynamic(
    dyn_: &LearnedDynamics,
    x: &State,
    v_p: [f64; 2],
    prediction: &GpPrediction,
) -> Result<(Matrix4<f64>, DMatrix<f64>)> {
    let (a, b) = learned_jacobians_from_prediction(dyn_, x, v_p, prediction)?;
    Ok((a, DMatrix::from_column_slice(4, 2, b.as_slice())))
}

/// One linear row `coeffs . u_bar (=|<=) rhs` on a single step's input deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

/// Bound `|p_y*_k + x_bar_k[3]| <= limit` for `k = 1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PyBound {
    pub limit: f64,
    /// Nominal `p_y*_k` for `k = 1..=N`.
    pub nominal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HorizonConstraints {
    /// Equality rows per step, indexed by step.
    pub stage_eq: Vec<Vec<LinearRow>>,
    /// Inequality rows per step, indexed by step.
    pub stage_ineq: Vec<Vec<LinearRow>>,
    pub p_y_bound: Option<PyBound>,
}

/// Condensed QP over `u_bar_0..u_bar_{N-1}` (stacked).
///
/// The objective is `sum_k x_bar_k^T Q x_bar_k + x_bar_N^T Q_N x_bar_N +
/// sum_i u_bar_i^T R u_bar_i` with `x_bar_{i+1} = x_bar_i + h (A_i x_bar_i +
/// B_i u_bar_i)`, written as `1/2 z^T H z + g^T z + offset`. A contact-offset
/// bound that the zero-input rollout already violates is relaxed so that the
/// inputs may not make the violation worse.
pub fn build_qp(weights: &MpcWeights, lin: &LinearizedDynamics, x0_bar: &[f64; 4], cons: &HorizonConstraints) -> QProblem {
    let n = lin.horizon();
    let m = lin.input_dim();
    let h = weights.step_h;
    let nu = n * m;

    // x_bar stacked for k = 1..=N: free + gamma * z
    let mut gamma = DMatrix::<f64>::zeros(4 * n, nu);
    let mut free = DVector::<f64>::zeros(4 * n);
    let mut prev = Vector4::from(*x0_bar);
    for k in 0..n {
        let f = Matrix4::identity() + lin.a[k] * h;
        prev = f * prev;
        free.rows_mut(4 * k, 4).copy_from(&prev);
        if k > 0 {
            let fd = DMatrix::from_column_slice(4, 4, f.as_slice());
            let block = &fd * gamma.view((4 * (k - 1), 0), (4, k * m));
            gamma.view_mut((4 * k, 0), (4, k * m)).copy_from(&block);
        }
        gamma.view_mut((4 * k, k * m), (4, m)).copy_from(&(&lin.b[k] * h));
    }

    let w: Vec<f64> = (0..4 * n)
        .map(|i| {
            let (k, j) = (i / 4, i % 4);
            weights.q[j] + if k + 1 == n { weights.q_n[j] } else { 0.0 }
        })
        .collect();
    let mut wg = gamma.clone();
    for (i, wi) in w.iter().enumerate() {
        wg.row_mut(i).scale_mut(*wi);
    }
    let mut hess = gamma.tr_mul(&wg) * 2.0;
    for i in 0..n {
        for j in 0..m {
            hess[(i * m + j, i * m + j)] += 2.0 * weights.r[j];
        }
    }
    // symmetrize against rounding in the product
    let hess = (&hess + hess.transpose()) * 0.5;
    let grad = wg.tr_mul(&free) * 2.0;
    let offset = free.iter().zip(&w).map(|(s, wi)| wi * s * s).sum();

    let stage_rows = |rows: &[Vec<LinearRow>]| rows.iter().map(Vec::len).sum::<usize>();
    let n_eq = stage_rows(&cons.stage_eq);
    let n_py = if cons.p_y_bound.is_some() { 2 * n } else { 0 };
    let n_in = stage_rows(&cons.stage_ineq) + n_py;
    let mut ae = DMatrix::zeros(n_eq, nu);
    let mut be = DVector::zeros(n_eq);
    let mut ai = DMatrix::zeros(n_in, nu);
    let mut bi = DVector::zeros(n_in);

    let fill = |mat: &mut DMatrix<f64>, rhs: &mut DVector<f64>, rows: &[Vec<LinearRow>]| {
        let mut r = 0;
        for (i, step) in rows.iter().enumerate() {
            for row in step {
                for (j, c) in row.coeffs.iter().enumerate() {
                    mat[(r, i * m + j)] = *c;
                }
                rhs[r] = row.rhs;
                r += 1;
            }
        }
        r
    };
    fill(&mut ae, &mut be, &cons.stage_eq);
    let mut r = fill(&mut ai, &mut bi, &cons.stage_ineq);
    if let Some(bound) = &cons.p_y_bound {
        for k in 0..n {
            let row = 4 * k + 3;
            let level = bound.nominal[k] + free[row];
            for sign in [1.0, -1.0] {
                for j in 0..nu {
                    ai[(r, j)] = sign * gamma[(row, j)];
                }
                bi[r] = (bound.limit - sign * level).max(0.0);
                r += 1;
            }
        }
    }

    QProblem {
        hessian: hess,
        gradient: grad,
        eq_matrix: ae,
        eq_rhs: be,
        ineq_matrix: ai,
        ineq_rhs: bi,
        offset,
    }
}

/// Nominal points at `t, t + h, ..., t + N h`.
pub fn horizon_points(traj: &NominalTrajectory, t: f64, n: usize, h: f64) -> Vec<NominalPoint> {
    (0..=n).map(|i| traj.lookup(t + i as f64 * h)).collect()
}

fn deviation(x: &State, nominal: &State) -> [f64; 4] {
    [x.x - nominal.x, x.y - nominal.y, x.theta - nominal.theta, x.p_y - nominal.p_y]
}

fn py_bound(params: &SliderParams, pts: &[NominalPoint]) -> PyBound {
    PyBound { limit: params.half_width(), nominal: pts[1..].iter().map(|p| p.state.p_y).collect() }
}

/// Contact mode per horizon step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSequence(pub Vec<ContactMode>);

impl ModeSequence {
    /// All-sticking, then `sliding_steps` of sliding left or right followed by sticking.
    pub fn family(horizon: usize, sliding_steps: usize) -> Vec<ModeSequence> {
        let l = sliding_steps.min(horizon);
        let lead = |mode| {
            ModeSequence((0..horizon).map(|i| if i < l { mode } else { ContactMode::Sticking }).collect())
        };
        vec![lead(ContactMode::Sticking), lead(ContactMode::SlidingLeft), lead(ContactMode::SlidingRight)]
    }

    pub fn first(&self) -> ContactMode {
        self.0[0]
    }

    pub fn mirrored(&self) -> Self {
        ModeSequence(self.0.iter().map(|m| m.mirrored()).collect())
    }
}

/// Input limits of the analytical controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticalBounds {
    /// `f_n <= f_cap_factor * f_max`.
    pub f_cap_factor: f64,
    /// `|p_y_dot| <= p_y_rate_max`.
    pub p_y_rate_max: f64,
}

impl Default for AnalyticalBounds {
    fn default() -> Self {
        AnalyticalBounds { f_cap_factor: 10.0, p_y_rate_max: 0.1 }
    }
}

/// Input limits of the learned controller, relative to the track speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnedBounds {
    /// `0 <= v_n <= k * speed` and `|v_t| <= k * speed`.
    pub speed_factor: f64,
}

impl Default for LearnedBounds {
    fn default() -> Self {
        LearnedBounds { speed_factor: 3.0 }
    }
}

/// Outcome of one analytical control step.
#[derive(Debug, Clone, PartialEq)]
pub struct FomStep {
    pub u: [f64; 3],
    /// Index of the winning sequence in the family.
    pub sequence: usize,
    pub mode: ContactMode,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Optimal objective of each sequence, `None` when its QP failed.
    pub objectives: Vec<Option<f64>>,
}

/// Force-input controller over the analytical model with mode enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct FomController {
    pub params: SliderParams,
    pub weights: MpcWeights,
    pub bounds: AnalyticalBounds,
    /// Leading sliding steps of the sliding sequences.
    pub sliding_steps: usize,
    pub qp: QpSettings,
}

impl FomController {
    pub fn new(params: SliderParams, weights: MpcWeights) -> Result<Self> {
        params.validate()?;
        weights.validate(3)?;
        Ok(FomController {
            params,
            weights,
            bounds: AnalyticalBounds::default(),
            sliding_steps: 5,
            qp: QpSettings::default(),
        })
    }

    pub fn family(&self) -> Vec<ModeSequence> {
        ModeSequence::family(self.weights.horizon_n, self.sliding_steps)
    }

    pub fn linearize_horizon(&self, pts: &[NominalPoint]) -> LinearizedDynamics {
        let (a, b) = pts[..self.weights.horizon_n]
            .iter()
            .map(|p| linearize_analytical(&self.params, &p.state, p.input_analytical))
            .unzip();
        LinearizedDynamics { a, b }
    }

    /// Mode and input-limit rows of `seq`, shifted to act on deviations from
    /// the nominal inputs in `pts`.
    pub fn sequence_constraints(&self, seq: &ModeSequence, pts: &[NominalPoint]) -> HorizonConstraints {
        let f_cap = self.bounds.f_cap_factor * self.params.f_max;
        let rate = self.bounds.p_y_rate_max;
        let shifted = |coeffs: [f64; 3], rhs: f64, u: &[f64; 3]| LinearRow {
            coeffs: coeffs.to_vec(),
            rhs: rhs - (coeffs[0] * u[0] + coeffs[1] * u[1] + coeffs[2] * u[2]),
        };
        let mut stage_eq = Vec::with_capacity(seq.0.len());
        let mut stage_ineq = Vec::with_capacity(seq.0.len());
        for (mode, p) in seq.0.iter().zip(pts) {
            let u = &p.input_analytical;
            let mc = mode_constraints(&self.params, *mode);
            stage_eq.push(mc.eq.iter().map(|r| shifted(r.coeffs, r.rhs, u)).collect());
            let mut ineq: Vec<LinearRow> = mc.ineq.iter().map(|r| shifted(r.coeffs, r.rhs, u)).collect();
            ineq.push(shifted([1.0, 0.0, 0.0], f_cap, u));
            ineq.push(shifted([0.0, 0.0, 1.0], rate, u));
            ineq.push(shifted([0.0, 0.0, -1.0], rate, u));
            stage_ineq.push(ineq);
        }
        HorizonConstraints { stage_eq, stage_ineq, p_y_bound: Some(py_bound(&self.params, pts)) }
    }

    /// Solves the QP of every sequence in the family at time `t` and state `x`.
    pub fn solve_family(&self, traj: &NominalTrajectory, t: f64, x: &State) -> Vec<(ModeSequence, QProblem, QSolution)> {
        let pts = horizon_points(traj, t, self.weights.horizon_n, self.weights.step_h);
        let lin = self.linearize_horizon(&pts);
        let x0 = deviation(x, &pts[0].state);
        self.family()
            .into_iter()
            .map(|seq| {
                let cons = self.sequence_constraints(&seq, &pts);
                let problem = build_qp(&self.weights, &lin, &x0, &cons);
                let sol = qp::solve_with(&problem, &self.qp);
                (seq, problem, sol)
            })
            .collect()
    }

    /// Picks the feasible sequence with the lowest objective and returns its
    /// first input `u*_0 + u_bar_0`.
    pub fn control_step(&self, traj: &NominalTrajectory, t: f64, x: &State) -> Result<FomStep> {
        let nominal = traj.lookup(t).input_analytical;
        let family = self.solve_family(traj, t, x);
        let objectives: Vec<Option<f64>> =
            family.iter().map(|(_, _, s)| s.is_optimal().then_some(s.objective)).collect();
        let mut best: Option<usize> = None;
        for (i, obj) in objectives.iter().enumerate() {
            if let Some(o) = obj {
                if best.map_or(true, |b| *o < objectives[b].unwrap_or(f64::INFINITY)) {
                    best = Some(i);
                }
            }
        }
        let i = best.ok_or(Error::AllModesInfeasible)?;
        let (seq, _, sol) = &family[i];
        Ok(FomStep {
            u: [nominal[0] + sol.z[0], nominal[1] + sol.z[1], nominal[2] + sol.z[2]],
            sequence: i,
            mode: seq.first(),
            objective: sol.objective,
            kkt_residual: sol.kkt_residual,
            iterations: sol.iterations,
            objectives,
        })
    }
}

/// Outcome of one learned control step.
#[derive(Debug, Clone, PartialEq)]
pub struct GpStep {
    pub u: [f64; 2],
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Velocity-input controller over the GP mean dynamics.
#[derive(Debug, Clone)]
pub struct GpController {
    pub dynamics: LearnedDynamics,
    pub weights: MpcWeights,
    pub bounds: LearnedBounds,
    pub qp: QpSettings,
}

impl GpController {
    pub fn new(dynamics: LearnedDynamics, weights: MpcWeights) -> Result<Self> {
        weights.validate(2)?;
        Ok(GpController { dynamics, weights, bounds: LearnedBounds::default(), qp: QpSettings::default() })
    }

    /// Linearizes along `pts`, evaluating the GP once per run of equal
    /// `(p_y*, v_p*)`.
    pub fn linearize_horizon(&self, pts: &[NominalPoint]) -> Result<LinearizedDynamics> {
        let n = self.weights.horizon_n;
        let mut lin = LinearizedDynamics { a: Vec::with_capacity(n), b: Vec::with_capacity(n) };
        let mut cache: Option<([f64; 3], GpPrediction)> = None;
        for p in &pts[..n] {
            let v = p.input_learned;
            let key = [p.state.p_y, v[0], v[1]];
            let prediction = match cache {
                Some((k, pred)) if k == key => pred,
                _ => {
                    let pred = self.dynamics.gp.predict_mean_with_gradient(&[p.state.p_y, beta_of(v)?]);
                    cache = Some((key, pred));
                    pred
                }
            };
            let (a, b) = learned_to_dynamic(&self.dynamics, &p.state, v, &prediction)?;
            lin.a.push(a);
            lin.b.push(b);
        }
        Ok(lin)
    }

    pub fn horizon_constraints(&self, pts: &[NominalPoint], speed: f64) -> HorizonConstraints {
        let cap = self.bounds.speed_factor * speed;
        let n = self.weights.horizon_n;
        let stage_ineq = pts[..n]
            .iter()
            .map(|p| {
                let [v_n, v_t] = p.input_learned;
                vec![
                    LinearRow { coeffs: vec![-1.0, 0.0], rhs: v_n },
                    LinearRow { coeffs: vec![1.0, 0.0], rhs: cap - v_n },
                    LinearRow { coeffs: vec![0.0, 1.0], rhs: cap - v_t },
                    LinearRow { coeffs: vec![0.0, -1.0], rhs: cap + v_t },
                ]
            })
            .collect();
        HorizonConstraints {
            stage_eq: vec![Vec::new(); n],
            stage_ineq,
            p_y_bound: Some(py_bound(&self.dynamics.params, pts)),
        }
    }

    pub fn build_problem(&self, traj: &NominalTrajectory, t: f64, x: &State) -> Result<QProblem> {
        let pts = horizon_points(traj, t, self.weights.horizon_n, self.weights.step_h);
        let lin = self.linearize_horizon(&pts)?;
        let cons = self.horizon_constraints(&pts, traj.spec.speed);
        Ok(build_qp(&self.weights, &lin, &deviation(x, &pts[0].state), &cons))
    }

    /// Solves the certainty-equivalent QP and returns `u*_0 + u_bar_0`.
    pub fn control_step(&self, traj: &NominalTrajectory, t: f64, x: &State) -> Result<GpStep> {
        let nominal = traj.lookup(t).input_learned;
        let problem = self.build_problem(traj, t, x)?;
        let sol = qp::solve_with(&problem, &self.qp);
        if !sol.is_optimal() {
            return Err(Error::SolverFailure);
        }
        Ok(GpStep {
            u: [nominal[0] + sol.z[0], nominal[1] + sol.z[1]],
            objective: sol.objective,
            kkt_residual: sol.kkt_residual,
            iterations: sol.iterations,
        })
    }
}

/// Input produced by a controller: contact forces for the analytical model,
/// pusher velocity for the learned one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    /// `[f_n, f_t, p_y_dot]`.
    Force([f64; 3]),
    /// `[v_n, v_t]` in the body frame.
    Velocity([f64; 2]),
}

impl Command {
    pub fn values(&self) -> &[f64] {
        match self {
            Command::Force(u) => u,
            Command::Velocity(u) => u,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub command: Command,
    /// Leading mode of the chosen sequence (analytical controller only).
    pub mode: Option<ContactMode>,
    pub objective: f64,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone)]
pub enum Controller {
    Analytical(FomController),
    Learned(GpController),
}

impl Controller {
    pub fn name(&self) -> &'static str {
        match self {
            Controller::Analytical(_) => "analytical",
            Controller::Learned(_) => "learned",
        }
    }

    pub fn params(&self) -> &SliderParams {
        match self {
            Controller::Analytical(c) => &c.params,
            Controller::Learned(c) => &c.dynamics.params,
        }
    }

    pub fn control(&self, traj: &NominalTrajectory, t: f64, x: &State) -> Result<ControlOutput> {
        match self {
            Controller::Analytical(c) => c.control_step(traj, t, x).map(|s| ControlOutput {
                command: Command::Force(s.u),
                mode: Some(s.mode),
                objective: s.objective,
                kkt_residual: s.kkt_residual,
            }),
            Controller::Learned(c) => c.control_step(traj, t, x).map(|s| ControlOutput {
                command: Command::Velocity(s.u),
                mode: None,
                objective: s.objective,
                kkt_residual: s.kkt_residual,
            }),
        }
    }

    /// The nominal input at `t`, used as the fallback when a step fails.
    pub fn nominal_command(&self, traj: &NominalTrajectory, t: f64) -> Command {
        let p = traj.lookup(t);
        match self {
            Controller::Analytical(_) => Command::Force(p.input_analytical),
            Controller::Learned(_) => Command::Velocity(p.input_learned),
        }
    }
}

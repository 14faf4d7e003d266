//! Quasi-static pusher-slider mechanics.
//!
//! A point pusher touches the left face (`p_x = -a/2`) of a square slider.
//! Applied wrenches map to body twists through the gradient of an ellipsoidal
//! limit surface, and the pusher-face friction follows Coulomb's law with three
//! contact modes.

use nalgebra::{Matrix2x3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};
// std's inherent float methods shadow this whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;

/// Physical constants of the slider and the contact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliderParams {
    pub mass: f64,
    /// Side length of the square slider.
    pub side_a: f64,
    /// Pusher/object friction coefficient.
    pub mu_p: f64,
    /// Object/support friction coefficient.
    pub mu_g: f64,
    pub g: f64,
    /// Maximum support friction force, `mu_g * mass * g`.
    pub f_max: f64,
    /// Maximum support friction torque, `c * f_max`.
    pub tau_max: f64,
    /// Contact-face coordinate, always `-side_a / 2`.
    pub p_x: f64,
}

impl SliderParams {
    /// Builds the parameter set, deriving `f_max`, `tau_max` and `p_x`.
    ///
    /// `tau_max` uses the mean distance to the center of a uniformly loaded
    /// square as the torque arm.
    pub fn new(mass: f64, side_a: f64, mu_p: f64, mu_g: f64) -> Result<Self> {
        let g = 9.81;
        let f_max = mu_g * mass * g;
        let params = SliderParams {
            mass,
            side_a,
            mu_p,
            mu_g,
            g,
            f_max,
            tau_max: mean_contact_radius(side_a) * f_max,
            p_x: -side_a / 2.0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.mass) {
            return Err(Error::InvalidParameter("mass must be positive"));
        }
        if !positive(self.side_a) {
            return Err(Error::InvalidParameter("side_a must be positive"));
        }
        if !positive(self.mu_p) || !positive(self.mu_g) {
            return Err(Error::InvalidParameter("friction coefficients must be positive"));
        }
        if !positive(self.f_max) || !positive(self.tau_max) {
            return Err(Error::InvalidParameter("limit surface constants must be positive"));
        }
        if self.p_x != -self.side_a / 2.0 {
            return Err(Error::InvalidParameter("p_x must equal -side_a/2"));
        }
        Ok(())
    }

    pub fn half_width(&self) -> f64 {
        self.side_a / 2.0
    }

    /// Diagonal of the limit-surface gradient map, `t = diag(l_f, l_f, l_tau) w`.
    pub fn limit_surface_gains(&self) -> (f64, f64) {
        (
            2.0 / (self.f_max * self.f_max),
            2.0 / (self.tau_max * self.tau_max),
        )
    }
}

impl Default for SliderParams {
    /// The 90 mm, 0.827 kg square on plywood used in the experiments.
    fn default() -> Self {
        SliderParams::new(0.827, 0.09, 0.3, 0.35).expect("default parameters are valid")
    }
}

/// Mean of `sqrt(x^2 + y^2)` over a centered square of side `side`.
///
/// The inner integral over `y` is evaluated in closed form and the outer one
/// by composite Simpson quadrature over one quadrant.
pub fn mean_contact_radius(side: f64) -> f64 {
    let b = side / 2.0;
    // int_0^b sqrt(x^2 + y^2) dy
    let inner = |x: f64| {
        if x == 0.0 {
            0.5 * b * b
        } else {
            0.5 * (b * (x * x + b * b).sqrt() + x * x * (b / x).asinh())
        }
    };
    let intervals = 4096;
    let step = b / intervals as f64;
    let mut acc = inner(0.0) + inner(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * inner(i as f64 * step);
    }
    acc * step / 3.0 / (b * b)
}

/// Object pose in the world frame plus the pusher's tangential contact offset.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub p_y: f64,
}

impl State {
    pub fn new(x: f64, y: f64, theta: f64, p_y: f64) -> Self {
        State { x, y, theta, p_y }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.theta, self.p_y]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        State::new(v[0], v[1], v[2], v[3])
    }

    /// `self + rate * dt`, componentwise.
    pub fn advanced(self, rate: [f64; 4], dt: f64) -> Self {
        State::new(
            self.x + rate[0] * dt,
            self.y + rate[1] * dt,
            self.theta + rate[2] * dt,
            self.p_y + rate[3] * dt,
        )
    }

    pub fn distance_to(&self, other: &State) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Wrench applied to the slider at its center, in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub f_n: f64,
    pub f_t: f64,
    pub tau: f64,
}

/// Slider twist in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyTwist {
    pub vx_b: f64,
    pub vy_b: f64,
    pub omega_b: f64,
}

impl BodyTwist {
    pub fn new(vx_b: f64, vy_b: f64, omega_b: f64) -> Self {
        BodyTwist { vx_b, vy_b, omega_b }
    }

    pub fn scaled(self, k: f64) -> Self {
        BodyTwist::new(self.vx_b * k, self.vy_b * k, self.omega_b * k)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.vx_b, self.vy_b, self.omega_b]
    }

    /// Twist rotated into world-frame rates `[x_dot, y_dot, theta_dot]`.
    pub fn to_world(self, theta: f64) -> [f64; 3] {
        let (s, c) = theta.sin_cos();
        [
            c * self.vx_b - s * self.vy_b,
            s * self.vx_b + c * self.vy_b,
            self.omega_b,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContactMode {
    Sticking,
    SlidingLeft,
    SlidingRight,
}

impl ContactMode {
    pub const ALL: [ContactMode; 3] = [
        ContactMode::Sticking,
        ContactMode::SlidingLeft,
        ContactMode::SlidingRight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ContactMode::Sticking => "sticking",
            ContactMode::SlidingLeft => "sliding_left",
            ContactMode::SlidingRight => "sliding_right",
        }
    }

    /// The mode seen after reflecting the problem across the slider's x axis.
    pub fn mirrored(self) -> Self {
        match self {
            ContactMode::Sticking => ContactMode::Sticking,
            ContactMode::SlidingLeft => ContactMode::SlidingRight,
            ContactMode::SlidingRight => ContactMode::SlidingLeft,
        }
    }
}

pub fn contact_jacobian(p_x: f64, p_y: f64) -> Matrix2x3<f64> {
    Matrix2x3::new(1.0, 0.0, -p_y, 0.0, 1.0, p_x)
}

/// `w = J^T (n f_n + d f_t)` with `n = [1, 0]`, `d = [0, 1]`.
pub fn wrench_from_contact_force(params: &SliderParams, p_y: f64, f_n: f64, f_t: f64) -> Wrench {
    let w = contact_jacobian(params.p_x, p_y).transpose() * nalgebra::Vector2::new(f_n, f_t);
    Wrench { f_n: w[0], f_t: w[1], tau: w[2] }
}

/// Gradient of `H(w) = f_n^2/f_max^2 + f_t^2/f_max^2 + tau^2/tau_max^2`.
pub fn limit_surface_twist(params: &SliderParams, w: Wrench) -> BodyTwist {
    let (l_f, l_tau) = params.limit_surface_gains();
    BodyTwist::new(l_f * w.f_n, l_f * w.f_t, l_tau * w.tau)
}

/// Limit-surface level `H(w)`.
pub fn limit_surface_value(params: &SliderParams, w: Wrench) -> f64 {
    let fm2 = params.f_max * params.f_max;
    (w.f_n * w.f_n + w.f_t * w.f_t) / fm2 + w.tau * w.tau / (params.tau_max * params.tau_max)
}

/// State derivative of the force-driven model for `u = [f_n, f_t, p_y_dot]`.
pub fn motion_equations_analytical(params: &SliderParams, x: &State, u: [f64; 3]) -> [f64; 4] {
    let w = wrench_from_contact_force(params, x.p_y, u[0], u[1]);
    let [xd, yd, thd] = limit_surface_twist(params, w).to_world(x.theta);
    [xd, yd, thd, u[2]]
}

/// A single linear row `coeffs . [f_n, f_t, p_y_dot] (=|<=) rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintRow {
    pub coeffs: [f64; 3],
    pub rhs: f64,
}

impl ConstraintRow {
    const fn new(coeffs: [f64; 3], rhs: f64) -> Self {
        ConstraintRow { coeffs, rhs }
    }

    pub fn eval(&self, u: [f64; 3]) -> f64 {
        self.coeffs[0] * u[0] + self.coeffs[1] * u[1] + self.coeffs[2] * u[2]
    }
}

/// Linear constraints on `[f_n, f_t, p_y_dot]` that hold in one contact mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeConstraints {
    pub eq: alloc::vec::Vec<ConstraintRow>,
    pub ineq: alloc::vec::Vec<ConstraintRow>,
}

impl ModeConstraints {
    pub fn is_satisfied(&self, u: [f64; 3], tol: f64) -> bool {
        self.eq.iter().all(|r| (r.eval(u) - r.rhs).abs() <= tol)
            && self.ineq.iter().all(|r| r.eval(u) - r.rhs <= tol)
    }
}

pub fn mode_constraints(params: &SliderParams, mode: ContactMode) -> ModeConstraints {
    let mu = params.mu_p;
    let normal_nonneg = ConstraintRow::new([-1.0, 0.0, 0.0], 0.0);
    match mode {
        ContactMode::Sticking => ModeConstraints {
            eq: alloc::vec![ConstraintRow::new([0.0, 0.0, 1.0], 0.0)],
            ineq: alloc::vec![
                ConstraintRow::new([-mu, 1.0, 0.0], 0.0),
                ConstraintRow::new([-mu, -1.0, 0.0], 0.0),
                normal_nonneg,
            ],
        },
        ContactMode::SlidingLeft => ModeConstraints {
            eq: alloc::vec![ConstraintRow::new([-mu, 1.0, 0.0], 0.0)],
            ineq: alloc::vec![ConstraintRow::new([0.0, 0.0, -1.0], 0.0), normal_nonneg],
        },
        ContactMode::SlidingRight => ModeConstraints {
            eq: alloc::vec![ConstraintRow::new([mu, 1.0, 0.0], 0.0)],
            ineq: alloc::vec![ConstraintRow::new([0.0, 0.0, 1.0], 0.0), normal_nonneg],
        },
    }
}

/// Solution of a velocity-driven push.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushResolution {
    pub mode: ContactMode,
    pub twist: BodyTwist,
    pub p_y_rate: f64,
    pub f_n: f64,
    pub f_t: f64,
}

/// `M = J L J^T`, the map from contact force `[f_n, f_t]` to contact-point
/// velocity on the slider.
fn contact_mobility(params: &SliderParams, p_y: f64) -> [[f64; 2]; 2] {
    let (l_f, l_tau) = params.limit_surface_gains();
    let p_x = params.p_x;
    [
        [l_f + l_tau * p_y * p_y, -l_tau * p_y * p_x],
        [-l_tau * p_y * p_x, l_f + l_tau * p_x * p_x],
    ]
}

const MODE_TOL: f64 = 1e-9;

/// Candidate solution of one mode's equalities, without checking its inequalities.
fn solve_mode(params: &SliderParams, p_y: f64, v_p: [f64; 2], mode: ContactMode) -> PushResolution {
    let m = contact_mobility(params, p_y);
    let (f_n, f_t, p_y_rate) = match mode {
        ContactMode::Sticking => {
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let f_n = (m[1][1] * v_p[0] - m[0][1] * v_p[1]) / det;
            let f_t = (m[0][0] * v_p[1] - m[1][0] * v_p[0]) / det;
            (f_n, f_t, 0.0)
        }
        ContactMode::SlidingLeft | ContactMode::SlidingRight => {
            let ratio = if mode == ContactMode::SlidingLeft { params.mu_p } else { -params.mu_p };
            // p_x_dot = 0 fixes the normal force, the tangential row gives p_y_dot.
            let f_n = v_p[0] / (m[0][0] + ratio * m[0][1]);
            let f_t = ratio * f_n;
            let p_y_rate = v_p[1] - (m[1][0] * f_n + m[1][1] * f_t);
            (f_n, f_t, p_y_rate)
        }
    };
    let w = wrench_from_contact_force(params, p_y, f_n, f_t);
    PushResolution { mode, twist: limit_surface_twist(params, w), p_y_rate, f_n, f_t }
}

fn mode_consistent(params: &SliderParams, r: &PushResolution) -> bool {
    let scale = 1.0 + r.f_n.abs() + r.f_t.abs();
    if r.f_n < -MODE_TOL * scale {
        return false;
    }
    match r.mode {
        ContactMode::Sticking => r.f_t.abs() <= params.mu_p * r.f_n + MODE_TOL * scale,
        ContactMode::SlidingLeft => r.p_y_rate >= -MODE_TOL * (1.0 + r.p_y_rate.abs()),
        ContactMode::SlidingRight => r.p_y_rate <= MODE_TOL * (1.0 + r.p_y_rate.abs()),
    }
}

/// Every mode whose solution satisfies its own inequalities. More than one
/// entry only occurs on a mode boundary.
pub fn consistent_modes(
    params: &SliderParams,
    p_y: f64,
    v_p: [f64; 2],
) -> alloc::vec::Vec<PushResolution> {
    ContactMode::ALL
        .iter()
        .map(|&mode| solve_mode(params, p_y, v_p, mode))
        .filter(|r| mode_consistent(params, r))
        .collect()
}

/// Resolves the contact mode, twist and forces produced by a pusher moving
/// with body-frame velocity `v_p = [v_n, v_t]` while staying on the face.
///
/// Sticking is tried first, then sliding left and sliding right.
pub fn resolve_push(params: &SliderParams, x: &State, v_p: [f64; 2]) -> Result<PushResolution> {
    if v_p[0] < 0.0 {
        return Err(Error::Withdrawal(v_p[0]));
    }
    if v_p[0] == 0.0 && v_p[1] == 0.0 {
        return Ok(PushResolution {
            mode: ContactMode::Sticking,
            twist: BodyTwist::default(),
            p_y_rate: 0.0,
            f_n: 0.0,
            f_t: 0.0,
        });
    }
    ContactMode::ALL
        .iter()
        .map(|&mode| solve_mode(params, x.p_y, v_p, mode))
        .find(|r| mode_consistent(params, r))
        .ok_or(Error::NoConsistentMode { p_y: x.p_y, v_n: v_p[0], v_t: v_p[1] })
}

/// Pusher velocity that realises commanded forces and sliding rate:
/// `v_p = J t(f) + [0, p_y_dot]`.
pub fn pusher_velocity_for_forces(params: &SliderParams, p_y: f64, u: [f64; 3]) -> [f64; 2] {
    let w = wrench_from_contact_force(params, p_y, u[0], u[1]);
    let t = limit_surface_twist(params, w);
    let jt = contact_jacobian(params.p_x, p_y) * Vector3::new(t.vx_b, t.vy_b, t.omega_b);
    [jt[0], jt[1] + u[2]]
}

/// Constant sticking push that moves the slider along a path of curvature
/// `curvature` at `speed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StickingPush {
    pub p_y: f64,
    pub f_n: f64,
    pub f_t: f64,
    pub v_p: [f64; 2],
    pub twist: BodyTwist,
}

/// Solves for the contact offset and forces producing body twist
/// `[speed, 0, curvature * speed]` with a sticking contact.
///
/// Zero lateral velocity forces `f_t = 0`, and the torque ratio then fixes
/// `p_y = -curvature * l_f / l_tau`.
pub fn sticking_push_for_curvature(
    params: &SliderParams,
    curvature: f64,
    speed: f64,
) -> Result<StickingPush> {
    let (l_f, l_tau) = params.limit_surface_gains();
    let p_y = -curvature * l_f / l_tau;
    if p_y.abs() > params.half_width() {
        return Err(Error::InfeasibleCurvature { curvature, p_y });
    }
    let f_n = speed / l_f;
    let u = [f_n, 0.0, 0.0];
    let v_p = pusher_velocity_for_forces(params, p_y, u);
    let w = wrench_from_contact_force(params, p_y, f_n, 0.0);
    Ok(StickingPush { p_y, f_n, f_t: 0.0, v_p, twist: limit_surface_twist(params, w) })
}

//! Push dynamics driven by a GP trained on fixed-speed pushes.
//!
//! The GP predicts the displacement of a push of duration `dt` at speed
//! `v_nom`; quasi-static scaling turns it into a body twist for any pusher
//! speed.

use nalgebra::{Matrix4, Matrix4x2};

use crate::gp::{GpModel, INPUT_DIM, OUTPUT_DIM};
use crate::slider::{BodyTwist, SliderParams, State};
use crate::{Error, Result};
// std's inherent float methods shadow this whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone)]
pub struct LearnedDynamics {
    pub gp: GpModel,
    pub v_nom: f64,
    pub dt: f64,
    pub params: SliderParams,
}

impl LearnedDynamics {
    pub fn new(gp: GpModel, v_nom: f64, dt: f64, params: SliderParams) -> Result<Self> {
        if !(v_nom > 0.0 && dt > 0.0) {
            return Err(Error::InvalidParameter("v_nom and dt must be positive"));
        }
        Ok(LearnedDynamics { gp, v_nom, dt, params })
    }

    fn scale_per_speed(&self) -> f64 {
        1.0 / (self.v_nom * self.dt)
    }
}

/// Push direction measured from the contact normal, `atan2(v_t, v_n)`.
pub fn beta_of(v_p: [f64; 2]) -> Result<f64> {
    if v_p[0] == 0.0 && v_p[1] == 0.0 {
        return Err(Error::ZeroVelocity);
    }
    Ok(v_p[1].atan2(v_p[0]))
}

/// `x_dot_b = |v_p| / (v_nom dt) * GP(p_y, beta)`; zero at rest.
pub fn body_twist_learned(dyn_: &LearnedDynamics, p_y: f64, v_p: [f64; 2]) -> BodyTwist {
    let Ok(beta) = beta_of(v_p) else {
        return BodyTwist::default();
    };
    let speed = v_p[0].hypot(v_p[1]);
    let m = dyn_.gp.predict_mean(&[p_y, beta]);
    BodyTwist::new(m[0], m[1], m[2]).scaled(speed * dyn_.scale_per_speed())
}

/// Pusher velocity relative to the face, `v_p - J x_dot_b`, as `[p_x_dot, p_y_dot]`.
pub fn contact_point_rate(p_y: f64, p_x: f64, v_p: [f64; 2], xdot_b: BodyTwist) -> [f64; 2] {
    [
        v_p[0] - (xdot_b.vx_b - p_y * xdot_b.omega_b),
        v_p[1] - (xdot_b.vy_b + p_x * xdot_b.omega_b),
    ]
}

pub fn motion_equations_learned(dyn_: &LearnedDynamics, x: &State, v_p: [f64; 2]) -> [f64; 4] {
    let twist = body_twist_learned(dyn_, x.p_y, v_p);
    let [xd, yd, thd] = twist.to_world(x.theta);
    let rate = contact_point_rate(x.p_y, dyn_.params.p_x, v_p, twist);
    [xd, yd, thd, rate[1]]
}

/// Continuous-time Jacobians `(df/dx, df/du)` of the learned motion
/// equations. Requires `|v_p| > 0`.
pub fn learned_jacobians(dyn_: &LearnedDynamics, x: &State, v_p: [f64; 2]) -> Result<(Matrix4<f64>, Matrix4x2<f64>)> {
    let beta = beta_of(v_p)?;
    let prediction = dyn_.gp.predict_mean_with_gradient(&[x.p_y, beta]);
    learned_jacobians_from_prediction(dyn_, x, v_p, &prediction)
}

/// GP mean and its input gradient at `[p_y, beta]`.
pub type GpPrediction = ([f64; OUTPUT_DIM], [[f64; INPUT_DIM]; OUTPUT_DIM]);

/// Same as [`learned_jacobians`] with the GP already evaluated at
/// `[x.p_y, beta_of(v_p)]`. The prediction does not depend on `x.theta`, so it
/// can be shared between points that differ only in pose.
pub fn learned_jacobians_from_prediction(
    dyn_: &LearnedDynamics,
    x: &State,
    v_p: [f64; 2],
    prediction: &GpPrediction,
) -> Result<(Matrix4<f64>, Matrix4x2<f64>)> {
    beta_of(v_p)?;
    let speed = v_p[0].hypot(v_p[1]);
    let k = dyn_.scale_per_speed();
    let s = speed * k;
    let (mean, grad) = *prediction;
    let (sn, cs) = x.theta.sin_cos();
    let p_x = dyn_.params.p_x;

    // body twist derivatives: d/dp_y and d/dv_j
    let mut dtw_dpy = [0.0; 3];
    let mut dtw_dv = [[0.0; 2]; 3];
    let ds_dv = [v_p[0] / speed * k, v_p[1] / speed * k];
    let s2 = speed * speed;
    let dbeta_dv = [-v_p[1] / s2, v_p[0] / s2];
    for c in 0..3 {
        dtw_dpy[c] = s * grad[c][0];
        for j in 0..2 {
            dtw_dv[c][j] = mean[c] * ds_dv[j] + s * grad[c][1] * dbeta_dv[j];
        }
    }
    let tw = [s * mean[0], s * mean[1], s * mean[2]];

    let rot = |v: [f64; 3]| [cs * v[0] - sn * v[1], sn * v[0] + cs * v[1], v[2]];
    let mut a = Matrix4::zeros();
    a[(0, 2)] = -sn * tw[0] - cs * tw[1];
    a[(1, 2)] = cs * tw[0] - sn * tw[1];
    let r = rot(dtw_dpy);
    a[(0, 3)] = r[0];
    a[(1, 3)] = r[1];
    a[(2, 3)] = r[2];
    a[(3, 3)] = -(dtw_dpy[1] + p_x * dtw_dpy[2]);

    let mut b = Matrix4x2::zeros();
    for j in 0..2 {
        let r = rot([dtw_dv[0][j], dtw_dv[1][j], dtw_dv[2][j]]);
        b[(0, j)] = r[0];
        b[(1, j)] = r[1];
        b[(2, j)] = r[2];
        b[(3, j)] = if j == 1 { 1.0 } else { 0.0 } - (dtw_dv[1][j] + p_x * dtw_dv[2][j]);
    }
    Ok((a, b))
}

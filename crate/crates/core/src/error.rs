use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("pusher velocity has a negative normal component ({0} m/s)")]
    Withdrawal(f64),
    #[error("no contact mode is consistent with the push (p_y = {p_y}, v_p = [{v_n}, {v_t}])")]
    NoConsistentMode { p_y: f64, v_n: f64, v_t: f64 },
    #[error("pusher velocity is zero, push direction undefined")]
    ZeroVelocity,
    #[error("kernel matrix is not positive definite after jitter {jitter:e}")]
    SingularKernel { jitter: f64 },
    #[error("curvature {curvature} 1/m needs |p_y| = {p_y} m beyond the face half-width")]
    InfeasibleCurvature { curvature: f64, p_y: f64 },
    #[error("every mode sequence produced an infeasible or failed QP")]
    AllModesInfeasible,
    #[error("QP solve failed")]
    SolverFailure,
    #[error("pusher lost contact with the object at t = {t} s")]
    ContactLost { t: f64 },
    #[error("run aborted at t = {t} s: {reason}")]
    RunAborted { t: f64, reason: &'static str },
    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

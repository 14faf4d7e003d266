#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pushmpc_core::gp::{GpModel, Hyperparams, PushDataset};
use pushmpc_core::learned::{motion_equations_learned, LearnedDynamics};
use pushmpc_core::mpc::{linearize_analytical, linearize_learned};
use pushmpc_core::qp::QProblem;
use pushmpc_core::sim::{generate_pushes, PushGenConfig};
use pushmpc_core::slider::{motion_equations_analytical, SliderParams, State};
use pushmpc_core::tracks::{NominalPoint, NominalTrajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Regularized Hessian, shifted the same way as the solver.
pub fn regularized_hessian(p: &QProblem, rel: f64) -> DMatrix<f64> {
    let n = p.num_vars();
    let mean_diag = p.hessian.trace() / n as f64;
    let h = 0.5 * (&p.hessian + p.hessian.transpose());
    h + DMatrix::identity(n, n) * rel * mean_diag.abs().max(f64::MIN_POSITIVE)
}

pub struct OracleSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub active: Vec<usize>,
}

/// Exhaustive active-set enumeration: solves the equality-constrained KKT
/// system for every subset of inequality rows and keeps the feasible,
/// dual-feasible candidate of least objective. `None` means infeasible.
pub fn brute_force_qp(p: &QProblem, rel_reg: f64) -> Option<OracleSolution> {
    let n = p.num_vars();
    let me = p.eq_rhs.len();
    let mi = p.ineq_rhs.len();
    assert!(mi <= 16, "enumeration is exponential in the row count");
    let h = regularized_hessian(p, rel_reg);
    let mut best: Option<OracleSolution> = None;
    for mask in 0u32..(1 << mi) {
        let active: Vec<usize> = (0..mi).filter(|i| mask & (1 << i) != 0).collect();
        let m = me + active.len();
        if m > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + m, n + m);
        let mut rhs = DVector::zeros(n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        for j in 0..n {
            rhs[j] = -p.gradient[j];
        }
        for r in 0..m {
            let (row, b) = if r < me {
                (p.eq_matrix.row(r).clone_owned(), p.eq_rhs[r])
            } else {
                let i = active[r - me];
                (p.ineq_matrix.row(i).clone_owned(), p.ineq_rhs[i])
            };
            for j in 0..n {
                kkt[(n + r, j)] = row[j];
                kkt[(j, n + r)] = row[j];
            }
            rhs[n + r] = b;
        }
        let lu = kkt.clone().lu();
        let sol = match lu.solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => continue,
        };
        // reject numerically singular systems
        if (&kkt * &sol - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
            continue;
        }
        let z = sol.rows(0, n).clone_owned();
        let scale = 1.0 + z.amax();
        let feasible = (0..mi).all(|i| p.ineq_matrix.row(i).transpose().dot(&z) <= p.ineq_rhs[i] + 1e-9 * scale);
        let dual_ok = (0..active.len()).all(|k| sol[n + me + k] >= -1e-9 * (1.0 + sol.amax()));
        if !feasible || !dual_ok {
            continue;
        }
        let objective = p.objective(&z);
        if best.as_ref().map_or(true, |b| objective < b.objective) {
            best = Some(OracleSolution { z, objective, active });
        }
    }
    best
}

/// KKT residual computed element by element from the raw problem data,
/// each condition scaled by the magnitudes involved.
pub fn kkt_residual(p: &QProblem, z: &[f64], eq_mult: &[f64], ineq_mult: &[f64]) -> f64 {
    let n = p.num_vars();
    let mut worst = 0.0f64;
    for j in 0..n {
        let mut g = p.gradient[j];
        let mut mag = p.gradient[j].abs();
        for k in 0..n {
            let t = p.hessian[(j, k)] * z[k];
            g += t;
            mag = mag.max(t.abs());
        }
        for (r, l) in eq_mult.iter().enumerate() {
            let t = p.eq_matrix[(r, j)] * l;
            g += t;
            mag = mag.max(t.abs());
        }
        for (r, l) in ineq_mult.iter().enumerate() {
            let t = p.ineq_matrix[(r, j)] * l;
            g += t;
            mag = mag.max(t.abs());
        }
        worst = worst.max(g.abs() / (1.0 + mag));
    }
    for (r, b) in p.eq_rhs.iter().enumerate() {
        let lhs: f64 = (0..n).map(|k| p.eq_matrix[(r, k)] * z[k]).sum();
        worst = worst.max((lhs - b).abs() / (1.0 + b.abs()));
    }
    for (r, b) in p.ineq_rhs.iter().enumerate() {
        let lhs: f64 = (0..n).map(|k| p.ineq_matrix[(r, k)] * z[k]).sum();
        let slack = b - lhs;
        let l = ineq_mult[r];
        worst = worst.max((-slack).max(0.0) / (1.0 + b.abs()));
        worst = worst.max((-l).max(0.0) / (1.0 + l.abs()));
        worst = worst.max((slack * l).abs() / ((1.0 + b.abs()) * (1.0 + l.abs())));
    }
    worst
}

/// Random convex QP with `n` variables, a feasible point by construction,
/// and an optionally singular Hessian.
pub fn random_qp(rng: &mut impl Rng, n: usize, meq: usize, mineq: usize, semidefinite: bool) -> QProblem {
    let rank = if semidefinite { n - 1 } else { n };
    let m = DMatrix::from_fn(n, rank, |_, _| rng.gen_range(-1.0..1.0));
    let mut h = &m * m.transpose();
    if !semidefinite {
        h += DMatrix::identity(n, n) * 0.1;
    }
    let g = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let z0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let ae = DMatrix::from_fn(meq, n, |_, _| rng.gen_range(-1.0..1.0));
    let be = &ae * &z0;
    let ai = DMatrix::from_fn(mineq, n, |_, _| rng.gen_range(-1.0..1.0));
    let slack = DVector::from_fn(mineq, |_, _| rng.gen_range(0.0..0.5));
    let bi = &ai * &z0 + slack;
    let mut p = QProblem::unconstrained(h, g).with_eq(ae, be).with_ineq(ai, bi);
    if semidefinite {
        // a box keeps the semidefinite problem bounded
        let mut rows = p.ineq_matrix.clone().resize_vertically(mineq + 2 * n, 0.0);
        let mut rhs = p.ineq_rhs.clone().resize_vertically(mineq + 2 * n, 0.0);
        for j in 0..n {
            rows[(mineq + 2 * j, j)] = 1.0;
            rows[(mineq + 2 * j + 1, j)] = -1.0;
            rhs[mineq + 2 * j] = z0[j] + 2.0;
            rhs[mineq + 2 * j + 1] = 2.0 - z0[j];
        }
        p = p.with_ineq(rows, rhs);
    }
    p
}

pub fn params() -> SliderParams {
    SliderParams::default()
}

/// Simulated training pushes with the default collection settings.
pub fn pushes(n: usize, seed: u64) -> PushDataset {
    let cfg = PushGenConfig { n, seed, ..PushGenConfig::default() };
    generate_pushes(&params(), &cfg).unwrap().dataset
}

/// Fixed-hyperparameter model, cheap enough for dense test sweeps.
pub fn fixed_model(ds: &PushDataset, sigma_n2_rel: f64) -> GpModel {
    let targets = [ds.targets(0), ds.targets(1), ds.targets(2)];
    let hypers = [0, 1, 2].map(|k| {
        let t = &targets[k];
        let mean = t.iter().sum::<f64>() / t.len() as f64;
        let var = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t.len() as f64 + mean * mean;
        Hyperparams { sigma_f2: var, lambda: [4e-4, 0.4], sigma_n2: sigma_n2_rel * var }
    });
    GpModel::with_hyperparams(ds.inputs(), targets, hypers).unwrap()
}

/// Relative difference with an absolute floor.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// Largest row-relative error between an analytic Jacobian and central
/// differences of `f` around `x0`: each output's partials are compared
/// against that output's largest partial. `steps` are per coordinate.
pub fn jacobian_error(
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    steps: &[f64],
    analytic: &DMatrix<f64>,
) -> f64 {
    let m = analytic.nrows();
    let mut fd = DMatrix::zeros(m, x0.len());
    for j in 0..x0.len() {
        let (mut up, mut dn) = (x0.to_vec(), x0.to_vec());
        up[j] += steps[j];
        dn[j] -= steps[j];
        let (fu, fdn) = (f(&up), f(&dn));
        for i in 0..m {
            fd[(i, j)] = (fu[i] - fdn[i]) / (2.0 * steps[j]);
        }
    }
    let floor = 1e-8 * fd.amax().max(1e-300);
    let mut worst = 0.0f64;
    for i in 0..m {
        let scale = fd.row(i).amax().max(floor);
        for j in 0..x0.len() {
            worst = worst.max((analytic[(i, j)] - fd[(i, j)]).abs() / scale);
        }
    }
    worst
}

/// Analytical-model Jacobian error at a nominal point.
pub fn analytical_jacobian_error(p: &SliderParams, x: &State, u: [f64; 3]) -> f64 {
    let (a, b) = linearize_analytical(p, x, u);
    let fx = |s: &[f64]| motion_equations_analytical(p, &State::from_array([s[0], s[1], s[2], s[3]]), u).to_vec();
    let fu = |v: &[f64]| motion_equations_analytical(p, x, [v[0], v[1], v[2]]).to_vec();
    let ux = 1e-6 * (u[0].abs() + u[1].abs()).max(1e-3);
    let a_err = jacobian_error(&fx, &x.to_array(), &[1e-6, 1e-6, 1e-6, 1e-7], &DMatrix::from_fn(4, 4, |i, j| a[(i, j)]));
    let b_err = jacobian_error(&fu, &u, &[ux, ux, 1e-7], &b);
    a_err.max(b_err)
}

/// Learned-model Jacobian error at a nominal point.
pub fn learned_jacobian_error(d: &LearnedDynamics, x: &State, v: [f64; 2]) -> f64 {
    let (a, b) = linearize_learned(d, x, v).unwrap();
    let fx = |s: &[f64]| motion_equations_learned(d, &State::from_array([s[0], s[1], s[2], s[3]]), v).to_vec();
    let fu = |w: &[f64]| motion_equations_learned(d, x, [w[0], w[1]]).to_vec();
    let hv = 1e-5 * (v[0].hypot(v[1]));
    let a_err = jacobian_error(&fx, &x.to_array(), &[1e-6, 1e-6, 1e-6, 1e-6], &DMatrix::from_fn(4, 4, |i, j| a[(i, j)]));
    let b_err = jacobian_error(&fu, &v, &[hv, hv], &b);
    a_err.max(b_err)
}

/// GP mean-gradient error at `x`, steps scaled by each length-scale.
pub fn gp_gradient_error(model: &GpModel, x: [f64; 2]) -> f64 {
    let grad = model.predict_mean_gradient(&x);
    let mut worst = 0.0f64;
    for (k, out) in model.outputs.iter().enumerate() {
        let f = |s: &[f64]| vec![model.predict_mean(&[s[0], s[1]])[k]];
        let steps = [1e-5 * out.hyper.lambda[0].sqrt(), 1e-5 * out.hyper.lambda[1].sqrt()];
        let g = DMatrix::from_row_slice(1, 2, &grad[k]);
        worst = worst.max(jacobian_error(&f, &x, &steps, &g));
    }
    worst
}

/// Draws nominal points uniformly in time over one lap of `traj`.
pub fn nominal_points(traj: &NominalTrajectory, n: usize, seed: u64) -> Vec<NominalPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| traj.lookup(rng.gen_range(0.0..traj.lap_time))).collect()
}

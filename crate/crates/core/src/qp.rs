//! Dense convex QP solver.
//!
//! Solves `min 1/2 z^T H z + g^T z + offset` subject to `A_e z = b_e` and
//! `A_i z <= b_i` with the Goldfarb-Idnani dual active-set method. The
//! factorization `J = L^-T Q` is kept up to date with Givens rotations when
//! constraints enter or leave the active set.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use nalgebra::{DMatrix, DVector};
// std's inherent float methods shadow this whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
pub struct QProblem {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    /// Constant added to the objective.
    pub offset: f64,
}

impl QProblem {
    /// Unconstrained problem over `n` variables.
    pub fn unconstrained(hessian: DMatrix<f64>, gradient: DVector<f64>) -> Self {
        let n = gradient.len();
        QProblem {
            hessian,
            gradient,
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_rhs: DVector::zeros(0),
            offset: 0.0,
        }
    }

    pub fn with_eq(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.eq_matrix = a;
        self.eq_rhs = b;
        self
    }

    pub fn with_ineq(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.ineq_matrix = a;
        self.ineq_rhs = b;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.gradient.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.hessian * z)) + self.gradient.dot(z) + self.offset
    }

    pub fn check_dimensions(&self) -> bool {
        let n = self.num_vars();
        self.hessian.nrows() == n
            && self.hessian.ncols() == n
            && self.eq_matrix.ncols() == n
            && self.ineq_matrix.ncols() == n
            && self.eq_matrix.nrows() == self.eq_rhs.len()
            && self.ineq_matrix.nrows() == self.ineq_rhs.len()
    }

    /// Plain-text dump: a header line with the dimensions followed by the
    /// dense blocks `H`, `g`, `A_e`, `b_e`, `A_i`, `b_i`, one row per line.
    pub fn write_text<W: fmt::Write>(&self, w: &mut W) -> fmt::Result {
        writeln!(
            w,
            "qp n={} meq={} mineq={} offset={:e}",
            self.num_vars(),
            self.eq_rhs.len(),
            self.ineq_rhs.len(),
            self.offset
        )?;
        let mut block = |name: &str, m: &DMatrix<f64>| -> fmt::Result {
            writeln!(w, "{} {} {}", name, m.nrows(), m.ncols())?;
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    if j > 0 {
                        w.write_char(' ')?;
                    }
                    write!(w, "{:e}", m[(i, j)])?;
                }
                w.write_char('\n')?;
            }
            Ok(())
        };
        block("H", &self.hessian)?;
        block("g", &DMatrix::from_column_slice(1, self.num_vars(), self.gradient.as_slice()))?;
        block("Ae", &self.eq_matrix)?;
        block("be", &DMatrix::from_column_slice(1, self.eq_rhs.len(), self.eq_rhs.as_slice()))?;
        block("Ai", &self.ineq_matrix)?;
        block("bi", &DMatrix::from_column_slice(1, self.ineq_rhs.len(), self.ineq_rhs.as_slice()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
    /// The Hessian could not be factored even after regularization.
    NonConvex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub kkt_residual: f64,
    /// Multipliers with `H z + g + A_e^T eq + A_i^T ineq = 0`.
    pub eq_multipliers: DVector<f64>,
    pub ineq_multipliers: DVector<f64>,
    pub iterations: usize,
}

impl QSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub max_iter: usize,
    /// Diagonal shift, relative to `trace(H)/n`, added before factoring.
    pub regularization: f64,
    /// Relative tolerance on constraint violation.
    pub feas_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings { max_iter: 1000, regularization: 1e-9, feas_tol: 1e-11 }
    }
}

/// Scaled KKT residuals of a candidate primal-dual point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Evaluates the KKT conditions at `(z, eq, ineq)` directly from the problem data.
pub fn kkt_report(p: &QProblem, z: &DVector<f64>, eq: &DVector<f64>, ineq: &DVector<f64>) -> KktReport {
    let hz = &p.hessian * z;
    let ae = p.eq_matrix.transpose() * eq;
    let ai = p.ineq_matrix.transpose() * ineq;
    let grad = &hz + &p.gradient + &ae + &ai;
    let scale = 1.0 + inf_norm(&hz).max(inf_norm(&p.gradient)).max(inf_norm(&ae)).max(inf_norm(&ai));
    let stationarity = inf_norm(&grad) / scale;

    let re = &p.eq_matrix * z - &p.eq_rhs;
    let ri = &p.ineq_matrix * z - &p.ineq_rhs;
    let bscale = 1.0 + inf_norm(&p.eq_rhs).max(inf_norm(&p.ineq_rhs));
    let primal = inf_norm(&re).max(ri.iter().fold(0.0f64, |m, r| m.max(*r))) / bscale;
    let mscale = 1.0 + inf_norm(ineq);
    let dual = ineq.iter().fold(0.0f64, |m, u| m.max(-*u)) / mscale;
    let complementarity = ri.iter().zip(ineq.iter()).fold(0.0f64, |m, (r, u)| m.max((r * u).abs())) / (mscale * bscale);
    KktReport { stationarity, primal, dual, complementarity }
}

pub fn solve(problem: &QProblem, max_iter: usize) -> QSolution {
    solve_with(problem, &QpSettings { max_iter, ..QpSettings::default() })
}

/// Dense column-major square matrix used for `J` and `R`.
struct Square {
    n: usize,
    data: Vec<f64>,
}

impl Square {
    fn zeros(n: usize) -> Self {
        Square { n, data: vec![0.0; n * n] }
    }

    #[inline]
    fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.n..(c + 1) * self.n]
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.n + r]
    }

    #[inline]
    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[c * self.n + r] = v;
    }

    /// Applies `[c s; -s c]` to columns `(a, a + 1)`.
    fn rotate_cols(&mut self, a: usize, cos: f64, sin: f64) {
        let n = self.n;
        let (left, right) = self.data.split_at_mut((a + 1) * n);
        let ca = &mut left[a * n..];
        let cb = &mut right[..n];
        for (x, y) in ca.iter_mut().zip(cb.iter_mut()) {
            let (u, v) = (*x, *y);
            *x = cos * u + sin * v;
            *y = -sin * u + cos * v;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let r = a.hypot(b);
    if r == 0.0 { (1.0, 0.0, 0.0) } else { (a / r, b / r, r) }
}

/// Lower Cholesky factor of a dense row-major matrix, or `None`.
fn dense_cholesky(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s = a[i * n + j] - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

struct ActiveSet {
    n: usize,
    j: Square,
    r: Square,
    q: usize,
    active: Vec<usize>,
    u: Vec<f64>,
}

impl ActiveSet {
    /// `d = J^T n`.
    fn project(&self, normal: &[f64], d: &mut [f64]) {
        for (c, dc) in d.iter_mut().enumerate() {
            *dc = dot(self.j.col(c), normal);
        }
    }

    /// Primal step `z = J_2 d_2` and dual step `r = R^-1 d_1`.
    fn directions(&self, d: &[f64], z: &mut [f64], r: &mut Vec<f64>) {
        z.iter_mut().for_each(|v| *v = 0.0);
        for c in self.q..self.n {
            let dc = d[c];
            if dc != 0.0 {
                for (zi, jc) in z.iter_mut().zip(self.j.col(c)) {
                    *zi += jc * dc;
                }
            }
        }
        r.clear();
        r.extend_from_slice(&d[..self.q]);
        for i in (0..self.q).rev() {
            let mut s = r[i];
            for k in i + 1..self.q {
                s -= self.r.at(i, k) * r[k];
            }
            r[i] = s / self.r.at(i, i);
        }
    }

    /// Appends a constraint whose projection `d = J^T n` is given.
    fn add(&mut self, index: usize, mult: f64, d: &mut [f64]) -> bool {
        for i in (self.q + 1..self.n).rev() {
            if d[i] == 0.0 {
                continue;
            }
            let (c, s, rr) = givens(d[i - 1], d[i]);
            d[i - 1] = rr;
            d[i] = 0.0;
            self.j.rotate_cols(i - 1, c, s);
        }
        let scale = d[..=self.q].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if d[self.q].abs() <= 1e-14 * scale.max(1e-300) {
            return false;
        }
        for (i, di) in d.iter().enumerate().take(self.q + 1) {
            self.r.set(i, self.q, *di);
        }
        self.q += 1;
        self.active.push(index);
        self.u.push(mult);
        true
    }

    /// Removes the active constraint at position `k`.
    fn drop(&mut self, k: usize) {
        let q = self.q;
        for c in k..q - 1 {
            for i in 0..=c + 1 {
                let v = self.r.at(i, c + 1);
                self.r.set(i, c, v);
            }
        }
        for i in 0..q {
            self.r.set(i, q - 1, 0.0);
        }
        for c in k..q - 1 {
            let (cs, sn, rr) = givens(self.r.at(c, c), self.r.at(c + 1, c));
            self.r.set(c, c, rr);
            self.r.set(c + 1, c, 0.0);
            for col in c + 1..q - 1 {
                let (a, b) = (self.r.at(c, col), self.r.at(c + 1, col));
                self.r.set(c, col, cs * a + sn * b);
                self.r.set(c + 1, col, -sn * a + cs * b);
            }
            self.j.rotate_cols(c, cs, sn);
        }
        self.q -= 1;
        self.active.remove(k);
        self.u.remove(k);
    }
}

pub fn solve_with(problem: &QProblem, settings: &QpSettings) -> QSolution {
    assert!(problem.check_dimensions(), "inconsistent QP dimensions");
    let n = problem.num_vars();
    let me = problem.eq_rhs.len();
    let mi = problem.ineq_rhs.len();

    let fail = |status| QSolution {
        z: DVector::zeros(n),
        objective: f64::NAN,
        status,
        kkt_residual: f64::INFINITY,
        eq_multipliers: DVector::zeros(me),
        ineq_multipliers: DVector::zeros(mi),
        iterations: 0,
    };
    if n == 0 {
        let z = DVector::zeros(0);
        let feasible = problem.eq_rhs.iter().all(|b| b.abs() <= settings.feas_tol)
            && problem.ineq_rhs.iter().all(|b| *b >= -settings.feas_tol);
        if !feasible {
            return fail(QpStatus::Infeasible);
        }
        return QSolution {
            objective: problem.offset,
            status: QpStatus::Optimal,
            kkt_residual: 0.0,
            iterations: 0,
            ..fail(QpStatus::Optimal)
        }
        .with_z(z);
    }

    // Row-major H with the diagonal shift.
    let trace = (0..n).map(|i| problem.hessian[(i, i)]).sum::<f64>();
    let base_shift = settings.regularization * (trace / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut shift = base_shift;
    let mut h = vec![0.0; n * n];
    let l = loop {
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = 0.5 * (problem.hessian[(i, j)] + problem.hessian[(j, i)]);
            }
            h[i * n + i] += shift;
        }
        if let Some(l) = dense_cholesky(n, &h) {
            break l;
        }
        shift *= 100.0;
        if shift > 1e-3 * (trace / n as f64).abs().max(1.0) {
            return fail(QpStatus::NonConvex);
        }
    };

    // J = L^-T, computed column by column: column c of J is row c of L^-1.
    let mut jm = Square::zeros(n);
    let mut e = vec![0.0; n];
    for c in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[c] = 1.0;
        for i in 0..n {
            let s = e[i] - dot(&l[i * n..i * n + i], &e[..i]);
            e[i] = s / l[i * n + i];
        }
        // e = L^-1 e_c is column c of L^-1; scatter into rows of J^T
        for (i, v) in e.iter().enumerate() {
            jm.set(c, i, *v);
        }
    }

    // Unconstrained minimiser x = -J J^T g.
    let g = problem.gradient.as_slice();
    let mut x = vec![0.0; n];
    {
        let jt_g: Vec<f64> = (0..n).map(|c| dot(jm.col(c), g)).collect();
        for c in 0..n {
            for (xi, jc) in x.iter_mut().zip(jm.col(c)) {
                *xi -= jc * jt_g[c];
            }
        }
    }

    // GI form: normals[k] . x (>=|=) rhs[k]; equalities first.
    let m = me + mi;
    let mut normals = vec![0.0; m * n];
    let mut rhs = vec![0.0; m];
    for k in 0..me {
        for c in 0..n {
            normals[k * n + c] = problem.eq_matrix[(k, c)];
        }
        rhs[k] = problem.eq_rhs[k];
    }
    for k in 0..mi {
        for c in 0..n {
            normals[(me + k) * n + c] = -problem.ineq_matrix[(k, c)];
        }
        rhs[me + k] = -problem.ineq_rhs[k];
    }
    let row = |k: usize| &normals[k * n..(k + 1) * n];
    let norms: Vec<f64> = (0..m).map(|k| dot(row(k), row(k)).sqrt()).collect();

    let mut set = ActiveSet { n, j: jm, r: Square::zeros(n), q: 0, active: Vec::new(), u: Vec::new() };
    let mut d = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut rdir = Vec::with_capacity(n);
    let mut iterations = 0;
    let mut is_active = vec![false; m];

    let tol = |k: usize| settings.feas_tol * (1.0 + rhs[k].abs() + norms[k]);

    for k in 0..me {
        iterations += 1;
        set.project(row(k), &mut d);
        set.directions(&d, &mut z, &mut rdir);
        let s = dot(row(k), &x) - rhs[k];
        let zn = dot(&z, row(k));
        let dnorm2 = dot(&d, &d);
        if zn <= 1e-20 * dnorm2 {
            if s.abs() <= tol(k) * (1.0 + inf(&x)) {
                continue;
            }
            return fail(QpStatus::Infeasible).with_iterations(iterations);
        }
        let t = -s / zn;
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += t * zi;
        }
        for (u, r) in set.u.iter_mut().zip(&rdir) {
            *u -= t * r;
        }
        if !set.add(k, t, &mut d) {
            continue;
        }
        is_active[k] = true;
    }

    let status = 'outer: loop {
        // most violated inequality, by normalised distance
        let mut worst = None;
        let mut worst_v = 0.0;
        for k in me..m {
            if is_active[k] || norms[k] == 0.0 {
                continue;
            }
            let s = dot(row(k), &x) - rhs[k];
            if s < -tol(k) {
                let v = -s / norms[k];
                if v > worst_v {
                    worst_v = v;
                    worst = Some(k);
                }
            }
        }
        let Some(p) = worst else { break QpStatus::Optimal };
        let mut u_plus = 0.0;
        loop {
            iterations += 1;
            if iterations > settings.max_iter {
                break 'outer QpStatus::MaxIter;
            }
            set.project(row(p), &mut d);
            set.directions(&d, &mut z, &mut rdir);
            let mut t1 = f64::INFINITY;
            let mut block = None;
            for (pos, (&idx, &r)) in set.active.iter().zip(&rdir).enumerate() {
                if idx >= me && r > 1e-14 {
                    let ratio = set.u[pos] / r;
                    if ratio < t1 {
                        t1 = ratio;
                        block = Some(pos);
                    }
                }
            }
            let zn = dot(&z, row(p));
            let dnorm2 = dot(&d, &d);
            let s = dot(row(p), &x) - rhs[p];
            let t2 = if zn > 1e-20 * dnorm2 { -s / zn } else { f64::INFINITY };
            if t1.is_infinite() && t2.is_infinite() {
                break 'outer QpStatus::Infeasible;
            }
            if t2.is_infinite() {
                for (u, r) in set.u.iter_mut().zip(&rdir) {
                    *u -= t1 * r;
                }
                u_plus += t1;
                let k = block.unwrap();
                is_active[set.active[k]] = false;
                set.drop(k);
                continue;
            }
            let t = t1.min(t2);
            for (xi, zi) in x.iter_mut().zip(&z) {
                *xi += t * zi;
            }
            for (u, r) in set.u.iter_mut().zip(&rdir) {
                *u -= t * r;
            }
            u_plus += t;
            if t2 <= t1 {
                set.project(row(p), &mut d);
                if set.add(p, u_plus, &mut d) {
                    is_active[p] = true;
                }
                continue 'outer;
            }
            let k = block.unwrap();
            is_active[set.active[k]] = false;
            set.drop(k);
        }
    };

    if status == QpStatus::Optimal {
        refine(&mut set, &h, g, &normals, &rhs, &mut x);
    }

    let zv = DVector::from_vec(x);
    let mut eqm = DVector::zeros(me);
    let mut inm = DVector::zeros(mi);
    for (&idx, &u) in set.active.iter().zip(&set.u) {
        if idx < me {
            eqm[idx] = -u;
        } else {
            inm[idx - me] = u.max(0.0);
        }
    }
    let report = kkt_report(problem, &zv, &eqm, &inm);
    QSolution {
        objective: problem.objective(&zv),
        status,
        kkt_residual: report.max(),
        z: zv,
        eq_multipliers: eqm,
        ineq_multipliers: inm,
        iterations,
    }
}

/// Iterative refinement of the final equality-constrained KKT system
/// `H x + g = N u`, `N^T x = b` over the active normals, reusing `J` and
/// `R`. This recovers accuracy lost in `J = L^-T` on ill-conditioned `H`.
fn refine(set: &mut ActiveSet, h: &[f64], g: &[f64], normals: &[f64], rhs: &[f64], x: &mut [f64]) {
    let n = set.n;
    let q = set.q;
    let row = |k: usize| &normals[k * n..(k + 1) * n];
    let residual = |x: &[f64], u: &[f64], r1: &mut [f64], r2: &mut [f64]| {
        for i in 0..n {
            r1[i] = dot(&h[i * n..(i + 1) * n], x) + g[i];
        }
        for (pos, &k) in set.active.iter().enumerate() {
            for (ri, ni) in r1.iter_mut().zip(row(k)) {
                *ri -= u[pos] * ni;
            }
            r2[pos] = rhs[k] - dot(row(k), x);
        }
        inf(r1).max(inf(r2))
    };
    let mut r1 = vec![0.0; n];
    let mut r2 = vec![0.0; q];
    let mut u = set.u.clone();
    let mut best = residual(x, &u, &mut r1, &mut r2);
    let mut a = vec![0.0; q];
    let mut cand = vec![0.0; n];
    for _ in 0..3 {
        if best == 0.0 {
            break;
        }
        // a = R^-T r2
        for i in 0..q {
            let mut s = r2[i];
            for k in 0..i {
                s -= set.r.at(k, i) * a[k];
            }
            a[i] = s / set.r.at(i, i);
        }
        let jt_r1: Vec<f64> = (0..n).map(|c| dot(set.j.col(c), &r1)).collect();
        // dx = J_1 a - J_2 J_2^T r1, R du = a + J_1^T r1
        cand.copy_from_slice(x);
        for c in 0..n {
            let coef = if c < q { a[c] } else { -jt_r1[c] };
            for (xi, jc) in cand.iter_mut().zip(set.j.col(c)) {
                *xi += coef * jc;
            }
        }
        let mut du: Vec<f64> = (0..q).map(|i| a[i] + jt_r1[i]).collect();
        for i in (0..q).rev() {
            let mut s = du[i];
            for k in i + 1..q {
                s -= set.r.at(i, k) * du[k];
            }
            du[i] = s / set.r.at(i, i);
        }
        let u_new: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + b).collect();
        let r = residual(&cand, &u_new, &mut r1, &mut r2);
        if !(r < best) {
            break;
        }
        best = r;
        x.copy_from_slice(&cand);
        u = u_new;
    }
    set.u = u;
}

fn inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

impl QSolution {
    fn with_z(mut self, z: DVector<f64>) -> Self {
        self.z = z;
        self
    }

    fn with_iterations(mut self, it: usize) -> Self {
        self.iterations = it;
        self
    }
}

//! Exact Gaussian-process regression over push inputs `[p_y, beta]`.
//!
//! One zero-mean GP per output (`dx_b`, `dy_b`, `dtheta_b`), each with its own
//! ARD squared-exponential kernel
//! `k(x, x') = sigma_f2 * exp(-(x - x')^T diag(lambda)^-1 (x - x'))`.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};
// std's inherent float methods shadow this whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;

pub const INPUT_DIM: usize = 2;
pub const OUTPUT_DIM: usize = 3;

pub type Input = [f64; INPUT_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Signal variance.
    pub sigma_f2: f64,
    /// Squared length-scale per input dimension.
    pub lambda: [f64; INPUT_DIM],
    /// Observation-noise variance.
    pub sigma_n2: f64,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_f2 > 0.0 && self.sigma_f2.is_finite()) {
            return Err(Error::InvalidParameter("sigma_f2 must be positive"));
        }
        if self.lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter("length-scales must be positive"));
        }
        if !(self.sigma_n2 >= 0.0 && self.sigma_n2.is_finite()) {
            return Err(Error::InvalidParameter("sigma_n2 must be non-negative"));
        }
        Ok(())
    }

    /// Initial guess from data statistics: length-scales equal to the input
    /// standard deviations, signal variance equal to the target variance and
    /// noise at 1e-4 of it.
    pub fn from_data(inputs: &[Input], targets: &[f64]) -> Self {
        let mut lambda = [1.0; INPUT_DIM];
        for (d, l) in lambda.iter_mut().enumerate() {
            let v = variance(inputs.iter().map(|x| x[d]));
            if v > 1e-24 {
                *l = v;
            }
        }
        let scale = target_scale(targets);
        Hyperparams { sigma_f2: scale, lambda, sigma_n2: 1e-4 * scale }
    }

    fn to_log(self) -> [f64; 4] {
        [self.sigma_f2.ln(), self.lambda[0].ln(), self.lambda[1].ln(), self.sigma_n2.ln()]
    }

    fn from_log(v: &[f64; 4]) -> Self {
        Hyperparams { sigma_f2: v[0].exp(), lambda: [v[1].exp(), v[2].exp()], sigma_n2: v[3].exp() }
    }
}

fn variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n == 0 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
}

/// Variance of the targets, falling back to the second moment (and then to 1)
/// for constant or all-zero targets.
fn target_scale(targets: &[f64]) -> f64 {
    let var = variance(targets.iter().copied());
    if var > 1e-24 {
        return var;
    }
    let second = targets.iter().map(|y| y * y).sum::<f64>() / targets.len().max(1) as f64;
    if second > 1e-24 { second } else { 1.0 }
}

pub fn kernel(hyper: &Hyperparams, x: &Input, x2: &Input) -> f64 {
    hyper.sigma_f2 * (-scaled_sq_dist(hyper, x, x2)).exp()
}

#[inline]
fn scaled_sq_dist(hyper: &Hyperparams, x: &Input, x2: &Input) -> f64 {
    let d0 = x[0] - x2[0];
    let d1 = x[1] - x2[1];
    d0 * d0 / hyper.lambda[0] + d1 * d1 / hyper.lambda[1]
}

/// One training push: inputs `(p_y, beta)` and the body-frame displacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushSample {
    pub p_y: f64,
    pub beta: f64,
    pub dx_b: f64,
    pub dy_b: f64,
    pub dtheta_b: f64,
}

impl PushSample {
    pub fn input(&self) -> Input {
        [self.p_y, self.beta]
    }

    pub fn output(&self) -> [f64; OUTPUT_DIM] {
        [self.dx_b, self.dy_b, self.dtheta_b]
    }
}

/// Training pushes recorded at pusher speed `v_nom` over duration `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushDataset {
    pub rows: Vec<PushSample>,
    pub v_nom: f64,
    pub dt: f64,
    pub seed: u64,
}

impl PushDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// The first `n` rows; nested prefixes give nested training sets.
    pub fn prefix(&self, n: usize) -> PushDataset {
        PushDataset { rows: self.rows[..n.min(self.rows.len())].to_vec(), ..*self }
    }

    pub fn inputs(&self) -> Vec<Input> {
        self.rows.iter().map(PushSample::input).collect()
    }

    pub fn targets(&self, output: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.output()[output]).collect()
    }

    pub fn validate(&self, half_width: f64, beta_max: f64) -> Result<()> {
        if !(self.v_nom > 0.0) || !(self.dt > 0.0) {
            return Err(Error::InvalidParameter("dataset v_nom and dt must be positive"));
        }
        if self.rows.iter().any(|r| r.p_y.abs() > half_width || r.beta.abs() > beta_max) {
            return Err(Error::InvalidParameter("dataset row outside the input domain"));
        }
        Ok(())
    }
}

impl Default for PushDataset {
    fn default() -> Self {
        PushDataset { rows: Vec::new(), v_nom: 0.02, dt: 1.0, seed: 0 }
    }
}

/// Lower-triangular Cholesky factor stored row by row (packed).
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    data: Vec<f64>,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn dot4(a: [&[f64]; 4], b: &[f64]) -> [f64; 4] {
    let n = b.len();
    let m = n / 4 * 4;
    let [a0, a1, a2, a3] = a.map(|r| &r[..n]);
    let mut acc = [[0.0f64; 4]; 4];
    for k in (0..m).step_by(4) {
        let bk = &b[k..k + 4];
        let rows = [&a0[k..k + 4], &a1[k..k + 4], &a2[k..k + 4], &a3[k..k + 4]];
        for r in 0..4 {
            for c in 0..4 {
                acc[r][c] += rows[r][c] * bk[c];
            }
        }
    }
    let mut out = [0.0; 4];
    for r in 0..4 {
        let row = [a0, a1, a2, a3][r];
        let mut t = (acc[r][0] + acc[r][1]) + (acc[r][2] + acc[r][3]);
        for k in m..n {
            t += row[k] * b[k];
        }
        out[r] = t;
    }
    out
}

impl Cholesky {
    /// Factors the symmetric matrix whose lower triangle is given packed by
    /// rows. Returns `None` if it is not numerically positive definite.
    pub fn factor_packed(n: usize, mut data: Vec<f64>) -> Option<Self> {
        debug_assert_eq!(data.len(), row_start(n));
        const BLOCK: usize = 32;
        let mut i0 = 0;
        while i0 < n {
            let i1 = (i0 + BLOCK).min(n);
            for j in 0..i1 {
                let sj = row_start(j);
                let first = i0.max(j);
                if j >= i0 {
                    // diagonal of row j; its off-diagonal entries are final
                    let (head, _) = data.split_at(sj + j);
                    let s = data[sj + j] - dot(&head[sj..sj + j], &head[sj..sj + j]);
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    data[sj + j] = s.sqrt();
                }
                let ljj = data[sj + j];
                let mut i = if j >= i0 { first + 1 } else { first };
                // four rows at a time so row j is loaded once per group
                while i + 4 <= i1 {
                    let s = [i, i + 1, i + 2, i + 3].map(row_start);
                    let d = {
                        let rows = [
                            &data[s[0]..s[0] + j],
                            &data[s[1]..s[1] + j],
                            &data[s[2]..s[2] + j],
                            &data[s[3]..s[3] + j],
                        ];
                        dot4(rows, &data[sj..sj + j])
                    };
                    for r in 0..4 {
                        data[s[r] + j] = (data[s[r] + j] - d[r]) / ljj;
                    }
                    i += 4;
                }
                for i in i..i1 {
                    let si = row_start(i);
                    let (head, tail) = data.split_at_mut(si);
                    let s = tail[j] - dot(&tail[..j], &head[sj..sj + j]);
                    tail[j] = s / ljj;
                }
            }
            i0 = i1;
        }
        Some(Cholesky { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry `L[i][j]` (zero above the diagonal).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i { 0.0 } else { self.data[row_start(i) + j] }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[row_start(i)..row_start(i) + i + 1]
    }

    /// Solves `L z = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let r = self.row(i);
            b[i] = (b[i] - dot(&r[..i], &b[..i])) / r[i];
        }
    }

    /// Solves `L^T z = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        for i in (0..self.n).rev() {
            let r = self.row(i);
            b[i] /= r[i];
            let bi = b[i];
            for (bj, lij) in b[..i].iter_mut().zip(&r[..i]) {
                *bj -= lij * bi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut z = b.to_vec();
        self.solve_lower_in_place(&mut z);
        self.solve_upper_in_place(&mut z);
        z
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.data[row_start(i) + i].ln()).sum::<f64>()
    }

    /// Dense row-major inverse of `L L^T`.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for k in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[k] = 1.0;
            self.solve_lower_in_place(&mut col);
            self.solve_upper_in_place(&mut col);
            for i in 0..n {
                inv[i * n + k] = col[i];
            }
        }
        inv
    }
}

/// Packed lower triangle of `K + sigma_n2 I` over `inputs`.
fn kernel_matrix_packed(hyper: &Hyperparams, inputs: &[Input], diag_extra: f64) -> Vec<f64> {
    let n = inputs.len();
    let mut data = Vec::with_capacity(row_start(n));
    for i in 0..n {
        for j in 0..i {
            data.push(kernel(hyper, &inputs[i], &inputs[j]));
        }
        data.push(hyper.sigma_f2 + hyper.sigma_n2 + diag_extra);
    }
    data
}

/// Factors `K + sigma_n2 I`, escalating diagonal jitter by x10 from
/// `1e-10 sigma_f2` to `1e-6 sigma_f2` when plain factorization fails.
fn factor_with_jitter(hyper: &Hyperparams, inputs: &[Input]) -> Result<(Cholesky, f64)> {
    let mut jitter = 0.0;
    loop {
        if let Some(c) = Cholesky::factor_packed(inputs.len(), kernel_matrix_packed(hyper, inputs, jitter)) {
            return Ok((c, jitter));
        }
        jitter = if jitter == 0.0 { 1e-10 * hyper.sigma_f2 } else { jitter * 10.0 };
        if jitter > 1e-6 * hyper.sigma_f2 * (1.0 + 1e-9) {
            return Err(Error::SingularKernel { jitter: jitter / 10.0 });
        }
    }
}

/// Log marginal likelihood `log p(y | X, hyper)` of a zero-mean GP.
pub fn log_marginal_likelihood(hyper: &Hyperparams, inputs: &[Input], targets: &[f64]) -> Result<f64> {
    let (chol, _) = factor_with_jitter(hyper, inputs)?;
    let alpha = chol.solve(targets);
    Ok(lml_from_factor(&chol, targets, &alpha))
}

fn lml_from_factor(chol: &Cholesky, targets: &[f64], alpha: &[f64]) -> f64 {
    let n = targets.len() as f64;
    -0.5 * dot(targets, alpha) - 0.5 * chol.log_det() - 0.5 * n * (2.0 * core::f64::consts::PI).ln()
}

/// Log marginal likelihood and its gradient with respect to
/// `[ln sigma_f2, ln lambda_0, ln lambda_1, ln sigma_n2]`.
pub fn log_marginal_likelihood_with_gradient(
    hyper: &Hyperparams,
    inputs: &[Input],
    targets: &[f64],
) -> Result<(f64, [f64; 4])> {
    let n = inputs.len();
    let (chol, _) = factor_with_jitter(hyper, inputs)?;
    let alpha = chol.solve(targets);
    let lml = lml_from_factor(&chol, targets, &alpha);
    let inv = chol.inverse();
    // dL/dp = 1/2 tr((alpha alpha^T - K^-1) dK/dp)
    let mut grad = [0.0; 4];
    for i in 0..n {
        for j in 0..=i {
            let w = alpha[i] * alpha[j] - inv[i * n + j];
            let mult = if i == j { 0.5 } else { 1.0 };
            let k = kernel(hyper, &inputs[i], &inputs[j]);
            grad[0] += mult * w * k;
            if i != j {
                for d in 0..INPUT_DIM {
                    let diff = inputs[i][d] - inputs[j][d];
                    grad[1 + d] += mult * w * k * diff * diff / hyper.lambda[d];
                }
            } else {
                grad[3] += mult * w * hyper.sigma_n2;
            }
        }
    }
    Ok((lml, grad))
}

/// Hyperparameter-search settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Starting hyperparameters per output; data statistics when `None`.
    pub init: Option<[Hyperparams; OUTPUT_DIM]>,
    pub restarts: usize,
    pub max_iter: usize,
    /// Marginal likelihood is optimised on at most this many leading rows;
    /// the final model always uses every row.
    pub max_opt_rows: usize,
    /// Search box in log space around the data scale: `[scale/range, scale*range]`.
    pub bound_range: f64,
    /// Lower bound of the noise variance relative to the target scale.
    pub noise_floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            init: None,
            restarts: 5,
            max_iter: 60,
            max_opt_rows: 200,
            bound_range: 1e4,
            noise_floor: 1e-10,
        }
    }
}

/// Deterministic offsets (log space) of the restart points around the initial guess.
const RESTART_OFFSETS: [[f64; 4]; 8] = [
    [0.0, 0.0, 0.0, 0.0],
    [0.0, -2.3, -2.3, 0.0],
    [0.0, 2.3, 2.3, 0.0],
    [1.0, -2.3, 2.3, 2.3],
    [1.0, 2.3, -2.3, 2.3],
    [-1.0, 0.0, 0.0, -2.3],
    [2.0, 1.0, 1.0, 0.0],
    [0.0, -4.6, -4.6, 0.0],
];

fn search_bounds(inputs: &[Input], targets: &[f64], opts: &FitOptions) -> ([f64; 4], [f64; 4]) {
    let r = opts.bound_range.ln();
    let ts = target_scale(targets).ln();
    let mut lo = [ts - r, 0.0, 0.0, ts + opts.noise_floor.ln()];
    let mut hi = [ts + r, 0.0, 0.0, ts];
    for d in 0..INPUT_DIM {
        let v = variance(inputs.iter().map(|x| x[d]));
        let s = if v > 1e-24 { v.ln() } else { 0.0 };
        lo[1 + d] = s - r;
        hi[1 + d] = s + r;
    }
    (lo, hi)
}

/// Maximises the marginal likelihood for one output. Returns the best point
/// found, never worse than `init`.
fn optimize_hyperparams(
    inputs: &[Input],
    targets: &[f64],
    init: Hyperparams,
    opts: &FitOptions,
) -> Hyperparams {
    let (lo, hi) = search_bounds(inputs, targets, opts);
    let objective = |v: &[f64; 4]| -> Option<(f64, [f64; 4])> {
        let h = Hyperparams::from_log(v);
        let (l, g) = log_marginal_likelihood_with_gradient(&h, inputs, targets).ok()?;
        if !l.is_finite() {
            return None;
        }
        Some((-l, [-g[0], -g[1], -g[2], -g[3]]))
    };
    let base = init.to_log();
    let mut best: Option<([f64; 4], f64)> = objective(&base).map(|(f, _)| (base, f));
    for offset in RESTART_OFFSETS.iter().take(opts.restarts.max(1)) {
        let mut x0 = [0.0; 4];
        for k in 0..4 {
            x0[k] = (base[k] + offset[k]).clamp(lo[k], hi[k]);
        }
        if let Some((x, f)) = minimize_box(objective, x0, &lo, &hi, opts.max_iter) {
            if best.map_or(true, |(_, bf)| f < bf) {
                best = Some((x, f));
            }
        }
    }
    best.map_or(init, |(x, _)| Hyperparams::from_log(&x))
}

/// Projected BFGS with backtracking line search on a box.
fn minimize_box<F>(mut f: F, x0: [f64; 4], lo: &[f64; 4], hi: &[f64; 4], max_iter: usize) -> Option<([f64; 4], f64)>
where
    F: FnMut(&[f64; 4]) -> Option<(f64, [f64; 4])>,
{
    const N: usize = 4;
    let (mut fx, mut g) = f(&x0)?;
    let mut x = x0;
    let mut h = [[0.0; N]; N];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let free = |x: &[f64; N], g: &[f64; N], i: usize| {
        !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0))
    };
    for _ in 0..max_iter {
        let pg: f64 = (0..N).filter(|&i| free(&x, &g, i)).map(|i| g[i] * g[i]).sum::<f64>().sqrt();
        if pg < 1e-6 {
            break;
        }
        let mut d = [0.0; N];
        for i in 0..N {
            if free(&x, &g, i) {
                d[i] = -(0..N).filter(|&j| free(&x, &g, j)).map(|j| h[i][j] * g[j]).sum::<f64>();
            }
        }
        let mut slope: f64 = (0..N).map(|i| d[i] * g[i]).sum();
        if slope >= 0.0 {
            // reset to steepest descent
            for (i, row) in h.iter_mut().enumerate() {
                *row = [0.0; N];
                row[i] = 1.0;
            }
            for i in 0..N {
                d[i] = if free(&x, &g, i) { -g[i] } else { 0.0 };
            }
            slope = (0..N).map(|i| d[i] * g[i]).sum();
        }
        // cap the step so no coordinate moves more than 3 in log space
        let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut step = if dmax > 3.0 { 3.0 / dmax } else { 1.0 };
        let mut accepted = None;
        for _ in 0..30 {
            let mut xn = [0.0; N];
            for i in 0..N {
                xn[i] = (x[i] + step * d[i]).clamp(lo[i], hi[i]);
            }
            if let Some((fn_, gn)) = f(&xn) {
                let pred: f64 = (0..N).map(|i| g[i] * (xn[i] - x[i])).sum();
                if fn_ <= fx + 1e-4 * pred.min(0.0) {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else { break };
        let mut s = [0.0; N];
        let mut y = [0.0; N];
        for i in 0..N {
            s[i] = xn[i] - x[i];
            y[i] = gn[i] - g[i];
        }
        let sy: f64 = (0..N).map(|i| s[i] * y[i]).sum();
        let improvement = fx - fn_;
        x = xn;
        fx = fn_;
        g = gn;
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let mut hy = [0.0; N];
            for i in 0..N {
                hy[i] = (0..N).map(|j| h[i][j] * y[j]).sum();
            }
            let yhy: f64 = (0..N).map(|i| y[i] * hy[i]).sum();
            for i in 0..N {
                for j in 0..N {
                    h[i][j] += (1.0 + yhy * rho) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        if improvement.abs() < 1e-10 * (1.0 + fx.abs()) {
            break;
        }
    }
    Some((x, fx))
}

/// Trained single-output GP sharing the model's training inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGp {
    pub hyper: Hyperparams,
    /// Diagonal jitter added on top of `sigma_n2` during factorization.
    pub jitter: f64,
    pub chol: Cholesky,
    /// `(K + sigma_n2 I)^-1 y`.
    pub alpha: Vec<f64>,
}

/// Three independent GPs predicting `[dx_b, dy_b, dtheta_b]` from `[p_y, beta]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpModel {
    pub inputs: Vec<Input>,
    pub targets: [Vec<f64>; OUTPUT_DIM],
    pub outputs: [OutputGp; OUTPUT_DIM],
}

impl GpModel {
    /// Fits a model, optimising each output's hyperparameters by marginal likelihood.
    pub fn fit(dataset: &PushDataset, opts: &FitOptions) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Empty("training dataset"));
        }
        let inputs = dataset.inputs();
        let targets = [dataset.targets(0), dataset.targets(1), dataset.targets(2)];
        let m = inputs.len().min(opts.max_opt_rows.max(1));
        let mut hypers = [Hyperparams::from_data(&inputs, &targets[0]); OUTPUT_DIM];
        for k in 0..OUTPUT_DIM {
            let init = match &opts.init {
                Some(h) => h[k],
                None => Hyperparams::from_data(&inputs[..m], &targets[k][..m]),
            };
            init.validate()?;
            hypers[k] = optimize_hyperparams(&inputs[..m], &targets[k][..m], init, opts);
        }
        Self::with_hyperparams(inputs, targets, hypers)
    }

    /// Conditions GPs with fixed hyperparameters on the training data.
    pub fn with_hyperparams(
        inputs: Vec<Input>,
        targets: [Vec<f64>; OUTPUT_DIM],
        hypers: [Hyperparams; OUTPUT_DIM],
    ) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Empty("training inputs"));
        }
        if targets.iter().any(|t| t.len() != inputs.len()) {
            return Err(Error::InvalidParameter("targets and inputs differ in length"));
        }
        let mut outs = Vec::with_capacity(OUTPUT_DIM);
        for k in 0..OUTPUT_DIM {
            hypers[k].validate()?;
            let (chol, jitter) = factor_with_jitter(&hypers[k], &inputs)?;
            let alpha = chol.solve(&targets[k]);
            outs.push(OutputGp { hyper: hypers[k], jitter, chol, alpha });
        }
        let outputs: [OutputGp; OUTPUT_DIM] = outs.try_into().map_err(|_| Error::Empty("outputs"))?;
        Ok(GpModel { inputs, targets, outputs })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn hyperparams(&self) -> [Hyperparams; OUTPUT_DIM] {
        [self.outputs[0].hyper, self.outputs[1].hyper, self.outputs[2].hyper]
    }

    /// Posterior mean `k_*^T alpha` for each output.
    pub fn predict_mean(&self, x: &Input) -> [f64; OUTPUT_DIM] {
        let mut mean = [0.0; OUTPUT_DIM];
        for (m, out) in mean.iter_mut().zip(&self.outputs) {
            *m = self
                .inputs
                .iter()
                .zip(&out.alpha)
                .map(|(xi, a)| a * kernel(&out.hyper, x, xi))
                .sum();
        }
        mean
    }

    /// Posterior mean and its Jacobian with respect to `[p_y, beta]`.
    pub fn predict_mean_with_gradient(&self, x: &Input) -> ([f64; OUTPUT_DIM], [[f64; INPUT_DIM]; OUTPUT_DIM]) {
        let mut mean = [0.0; OUTPUT_DIM];
        let mut grad = [[0.0; INPUT_DIM]; OUTPUT_DIM];
        for k in 0..OUTPUT_DIM {
            let out = &self.outputs[k];
            let (mut m, mut g0, mut g1) = (0.0, 0.0, 0.0);
            for (xi, a) in self.inputs.iter().zip(&out.alpha) {
                let w = a * kernel(&out.hyper, x, xi);
                m += w;
                g0 += w * (x[0] - xi[0]);
                g1 += w * (x[1] - xi[1]);
            }
            mean[k] = m;
            grad[k] = [-2.0 * g0 / out.hyper.lambda[0], -2.0 * g1 / out.hyper.lambda[1]];
        }
        (mean, grad)
    }

    pub fn predict_mean_gradient(&self, x: &Input) -> [[f64; INPUT_DIM]; OUTPUT_DIM] {
        self.predict_mean_with_gradient(x).1
    }

    /// Posterior variance of output `k` (not used by the controllers).
    pub fn predict_variance(&self, k: usize, x: &Input) -> f64 {
        let out = &self.outputs[k];
        let mut ks: Vec<f64> = self.inputs.iter().map(|xi| kernel(&out.hyper, x, xi)).collect();
        out.chol.solve_lower_in_place(&mut ks);
        out.hyper.sigma_f2 - dot(&ks, &ks)
    }

    pub fn log_marginal_likelihood(&self, k: usize) -> f64 {
        lml_from_factor(&self.outputs[k].chol, &self.targets[k], &self.outputs[k].alpha)
    }
}

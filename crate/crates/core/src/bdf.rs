//! Variable-order, variable-step BDF integrator (orders 1 to 5) in
//! backward-difference form, with dense output and optional forward
//! sensitivities carried by the same discretisation.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{mat_vec, Lu, Matrix};
use crate::math::{cbrt, powf, rms_norm, sqrt};

const MAX_ORDER: usize = 5;
const NEWTON_MAXITER: usize = 4;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const KAPPA: [f64; MAX_ORDER + 1] = [0.0, -0.1850, -1.0 / 9.0, -0.0823, -0.0415, 0.0];

type Diff<const N: usize> = [[f64; N]; MAX_ORDER + 3];

struct Coefficients {
    gamma: [f64; MAX_ORDER + 1],
    alpha: [f64; MAX_ORDER + 1],
    error_const: [f64; MAX_ORDER + 2],
}

fn coefficients() -> Coefficients {
    let mut gamma = [0.0; MAX_ORDER + 1];
    for k in 1..=MAX_ORDER {
        gamma[k] = gamma[k - 1] + 1.0 / k as f64;
    }
    let mut alpha = [0.0; MAX_ORDER + 1];
    let mut error_const = [0.0; MAX_ORDER + 2];
    for k in 0..=MAX_ORDER {
        alpha[k] = (1.0 - KAPPA[k]) * gamma[k];
        error_const[k] = KAPPA[k] * gamma[k] + 1.0 / (k as f64 + 1.0);
    }
    error_const[MAX_ORDER + 1] = 1.0 / (MAX_ORDER as f64 + 2.0);
    Coefficients { gamma, alpha, error_const }
}

/// A first-order system `y' = f(t, y; p)`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N];

    /// Number of parameters carried as forward sensitivities.
    fn n_params(&self) -> usize {
        0
    }

    /// `df/dp_j` at `(t, y)`.
    fn param_derivative(&self, _t: f64, _y: &[f64; N], _j: usize) -> [f64; N] {
        [0.0; N]
    }

    /// Magnitude used to size finite-difference perturbations of component `i`.
    fn typical(&self, _i: usize) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdfOptions<const N: usize> {
    pub rtol: f64,
    pub atol: [f64; N],
    pub max_step: f64,
    pub first_step: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BdfStats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub jac_evals: usize,
    pub factorizations: usize,
}

impl BdfStats {
    pub fn accumulate(&mut self, o: &BdfStats) {
        self.steps += o.steps;
        self.rejected += o.rejected;
        self.rhs_evals += o.rhs_evals;
        self.jac_evals += o.jac_evals;
        self.factorizations += o.factorizations;
    }
}

#[derive(Debug, Clone)]
pub struct Endpoint<const N: usize> {
    pub y: [f64; N],
    pub sens: Vec<[f64; N]>,
    pub stats: BdfStats,
}

fn compute_r(order: usize, factor: f64) -> [[f64; MAX_ORDER + 1]; MAX_ORDER + 1] {
    let mut m = [[0.0; MAX_ORDER + 1]; MAX_ORDER + 1];
    for j in 0..=order {
        m[0][j] = 1.0;
    }
    for i in 1..=order {
        for j in 1..=order {
            m[i][j] = (i as f64 - 1.0 - factor * j as f64) / i as f64;
        }
    }
    for i in 1..=order {
        for j in 0..=order {
            m[i][j] *= m[i - 1][j];
        }
    }
    m
}

fn change_d<const N: usize>(d: &mut Diff<N>, order: usize, factor: f64) {
    let r = compute_r(order, factor);
    let u = compute_r(order, 1.0);
    let mut ru = [[0.0; MAX_ORDER + 1]; MAX_ORDER + 1];
    for i in 0..=order {
        for j in 0..=order {
            ru[i][j] = (0..=order).map(|k| r[i][k] * u[k][j]).sum();
        }
    }
    let mut out = [[0.0; N]; MAX_ORDER + 1];
    for (i, row) in out.iter_mut().enumerate().take(order + 1) {
        for (j, dj) in d.iter().enumerate().take(order + 1) {
            let w = ru[j][i];
            for c in 0..N {
                row[c] += w * dj[c];
            }
        }
    }
    d[..=order].copy_from_slice(&out[..=order]);
}

fn dense_eval<const N: usize>(d: &Diff<N>, order: usize, t_new: f64, h: f64, t: f64) -> [f64; N] {
    let mut y = d[0];
    let mut p = 1.0;
    for i in 0..order {
        let shift = t_new - h * i as f64;
        p *= (t - shift) / (h * (i as f64 + 1.0));
        for c in 0..N {
            y[c] += d[i + 1][c] * p;
        }
    }
    y
}

struct Solver<'a, S: OdeSystem<N>, const N: usize> {
    sys: &'a S,
    opts: &'a BdfOptions<N>,
    co: Coefficients,
    stats: BdfStats,
}

impl<S: OdeSystem<N>, const N: usize> Solver<'_, S, N> {
    fn f(&mut self, t: f64, y: &[f64; N]) -> [f64; N] {
        self.stats.rhs_evals += 1;
        self.sys.rhs(t, y)
    }

    fn jacobian(&mut self, t: f64, y: &[f64; N]) -> Matrix<N> {
        self.stats.jac_evals += 1;
        let step = cbrt(f64::EPSILON);
        let mut jac = [[0.0; N]; N];
        for i in 0..N {
            let delta = step * y[i].abs().max(self.sys.typical(i));
            let mut yp = *y;
            let mut ym = *y;
            yp[i] += delta;
            ym[i] -= delta;
            let width = yp[i] - ym[i];
            let fp = self.f(t, &yp);
            let fm = self.f(t, &ym);
            for r in 0..N {
                jac[r][i] = (fp[r] - fm[r]) / width;
            }
        }
        jac
    }

    fn factor(&mut self, jac: &Matrix<N>, c: f64) -> Result<Lu<N>> {
        self.stats.factorizations += 1;
        let mut m = [[0.0; N]; N];
        for i in 0..N {
            for j in 0..N {
                m[i][j] = -c * jac[i][j];
            }
            m[i][i] += 1.0;
        }
        Lu::factor(m).ok_or(Error::Integration { t: f64::NAN, reason: "singular iteration matrix" })
    }

    fn initial_step(&mut self, t0: f64, y0: &[f64; N], f0: &[f64; N]) -> f64 {
        let scale: [f64; N] = core::array::from_fn(|i| self.opts.atol[i] + self.opts.rtol * y0[i].abs());
        let d0 = rms_norm(y0, &scale);
        let d1 = rms_norm(f0, &scale);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let y1: [f64; N] = core::array::from_fn(|i| y0[i] + h0 * f0[i]);
        let f1 = self.f(t0 + h0, &y1);
        let diff: [f64; N] = core::array::from_fn(|i| f1[i] - f0[i]);
        let d2 = rms_norm(&diff, &scale) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { powf(0.01 / d1.max(d2), 0.5) };
        (100.0 * h0).min(h1)
    }

    #[allow(clippy::too_many_arguments)]
    fn newton(
        &mut self,
        t_new: f64,
        y_predict: &[f64; N],
        c: f64,
        psi: &[f64; N],
        lu: &Lu<N>,
        scale: &[f64; N],
        tol: f64,
    ) -> (bool, usize, [f64; N], [f64; N]) {
        let mut d = [0.0; N];
        let mut y = *y_predict;
        let mut dy_norm_old: Option<f64> = None;
        let mut converged = false;
        let mut k = 0;
        while k < NEWTON_MAXITER {
            let f = self.f(t_new, &y);
            if !f.iter().all(|v| v.is_finite()) {
                break;
            }
            let rhs: [f64; N] = core::array::from_fn(|i| c * f[i] - psi[i] - d[i]);
            let dy = lu.solve(&rhs);
            let dy_norm = rms_norm(&dy, scale);
            let rate = dy_norm_old.map(|old| dy_norm / old);
            if let Some(r) = rate {
                if r >= 1.0 || powf(r, (NEWTON_MAXITER - k) as f64) / (1.0 - r) * dy_norm > tol {
                    break;
                }
            }
            for i in 0..N {
                y[i] += dy[i];
                d[i] += dy[i];
            }
            if dy_norm == 0.0 || rate.is_some_and(|r| r / (1.0 - r) * dy_norm < tol) {
                converged = true;
                k += 1;
                break;
            }
            dy_norm_old = Some(dy_norm);
            k += 1;
        }
        (converged, k.max(1), y, d)
    }
}

/// Integrates from `t0` to `t1`, reporting the solution (and sensitivities)
/// at every time in `outputs` that lies in `[t0, t1]`. `outputs` must be
/// sorted. `sens0` holds one initial sensitivity vector per system parameter.
#[allow(clippy::too_many_arguments)]
pub fn integrate<S, F, const N: usize>(
    sys: &S,
    t0: f64,
    y0: &[f64; N],
    sens0: &[[f64; N]],
    t1: f64,
    opts: &BdfOptions<N>,
    outputs: &[f64],
    mut sink: F,
) -> Result<Endpoint<N>>
where
    S: OdeSystem<N>,
    F: FnMut(f64, &[f64; N], &[[f64; N]]),
{
    if !(t1 > t0) {
        return Err(Error::Integration { t: t0, reason: "empty interval" });
    }
    let np = sys.n_params();
    if sens0.len() != np {
        return Err(Error::Integration { t: t0, reason: "sensitivity count mismatch" });
    }
    let mut s = Solver { sys, opts, co: coefficients(), stats: BdfStats::default() };
    let newton_tol = (10.0 * f64::EPSILON / opts.rtol).max(0.03f64.min(sqrt(opts.rtol)));

    let mut out_idx = outputs.partition_point(|&to| to < t0);
    while out_idx < outputs.len() && outputs[out_idx] == t0 {
        sink(t0, y0, sens0);
        out_idx += 1;
    }

    let mut t = t0;
    let f0 = s.f(t0, y0);
    let mut h_abs = match opts.first_step {
        Some(h) => h,
        None => s.initial_step(t0, y0, &f0),
    };
    h_abs = h_abs.min(opts.max_step).min(t1 - t0);

    let mut d: Diff<N> = [[0.0; N]; MAX_ORDER + 3];
    d[0] = *y0;
    for i in 0..N {
        d[1][i] = f0[i] * h_abs;
    }
    let mut jac = s.jacobian(t0, y0);
    let mut ds: Vec<Diff<N>> = vec![[[0.0; N]; MAX_ORDER + 3]; np];
    for (j, dsj) in ds.iter_mut().enumerate() {
        dsj[0] = sens0[j];
        let js = mat_vec(&jac, &sens0[j]);
        let fp = sys.param_derivative(t0, y0, j);
        for i in 0..N {
            dsj[1][i] = h_abs * (js[i] + fp[i]);
        }
    }
    let mut order = 1usize;
    let mut n_equal_steps = 0usize;
    let mut lu: Option<Lu<N>> = None;
    let mut current_jac = true;
    let mut sens_buf: Vec<[f64; N]> = vec![[0.0; N]; np];

    while t < t1 {
        let min_step = 10.0 * (t.next_up() - t);
        if h_abs > opts.max_step {
            change_d(&mut d, order, opts.max_step / h_abs);
            for dsj in ds.iter_mut() {
                change_d(dsj, order, opts.max_step / h_abs);
            }
            h_abs = opts.max_step;
            n_equal_steps = 0;
            lu = None;
        } else if h_abs < min_step {
            change_d(&mut d, order, min_step / h_abs);
            for dsj in ds.iter_mut() {
                change_d(dsj, order, min_step / h_abs);
            }
            h_abs = min_step;
            n_equal_steps = 0;
            lu = None;
        }

        let (t_new, y_new, d_new, error_norm, safety, scale) = loop {
            if h_abs < min_step {
                return Err(Error::Integration { t, reason: "step size underflow" });
            }
            let mut t_new = t + h_abs;
            if t_new >= t1 {
                t_new = t1;
                let factor = (t_new - t) / h_abs;
                change_d(&mut d, order, factor);
                for dsj in ds.iter_mut() {
                    change_d(dsj, order, factor);
                }
                n_equal_steps = 0;
                lu = None;
            }
            let h = t_new - t;
            h_abs = h;

            let mut y_predict = [0.0; N];
            for row in d.iter().take(order + 1) {
                for i in 0..N {
                    y_predict[i] += row[i];
                }
            }
            let scale: [f64; N] = core::array::from_fn(|i| opts.atol[i] + opts.rtol * y_predict[i].abs());
            let mut psi = [0.0; N];
            for k in 1..=order {
                for i in 0..N {
                    psi[i] += d[k][i] * s.co.gamma[k];
                }
            }
            for v in psi.iter_mut() {
                *v /= s.co.alpha[order];
            }
            let c = h / s.co.alpha[order];

            let mut result = None;
            loop {
                let factored = match lu.take() {
                    Some(f) => f,
                    None => {
                        s.factor(&jac, c).map_err(|_| Error::Integration { t, reason: "singular iteration matrix" })?
                    }
                };
                let (conv, n_iter, y_new, d_corr) = s.newton(t_new, &y_predict, c, &psi, &factored, &scale, newton_tol);
                lu = Some(factored);
                if conv {
                    result = Some((n_iter, y_new, d_corr));
                    break;
                }
                if current_jac {
                    break;
                }
                jac = s.jacobian(t_new, &y_predict);
                lu = None;
                current_jac = true;
            }

            let Some((n_iter, y_new, d_corr)) = result else {
                let factor = 0.5;
                h_abs *= factor;
                change_d(&mut d, order, factor);
                for dsj in ds.iter_mut() {
                    change_d(dsj, order, factor);
                }
                n_equal_steps = 0;
                lu = None;
                s.stats.rejected += 1;
                continue;
            };

            let safety = 0.9 * (2.0 * NEWTON_MAXITER as f64 + 1.0) / (2.0 * NEWTON_MAXITER as f64 + n_iter as f64);
            let scale: [f64; N] = core::array::from_fn(|i| opts.atol[i] + opts.rtol * y_new[i].abs());
            let err: [f64; N] = core::array::from_fn(|i| s.co.error_const[order] * d_corr[i]);
            let error_norm = rms_norm(&err, &scale);
            if error_norm > 1.0 {
                let factor = MIN_FACTOR.max(safety * powf(error_norm, -1.0 / (order as f64 + 1.0)));
                h_abs *= factor;
                change_d(&mut d, order, factor);
                for dsj in ds.iter_mut() {
                    change_d(dsj, order, factor);
                }
                n_equal_steps = 0;
                s.stats.rejected += 1;
                continue;
            }
            break (t_new, y_new, d_corr, error_norm, safety, scale);
        };

        if !y_new.iter().all(|v| v.is_finite()) {
            return Err(Error::Integration { t, reason: "non-finite state" });
        }
        s.stats.steps += 1;
        n_equal_steps += 1;
        let h = t_new - t;

        if np > 0 {
            let c = h / s.co.alpha[order];
            jac = s.jacobian(t_new, &y_new);
            current_jac = true;
            let lu_new =
                s.factor(&jac, c).map_err(|_| Error::Integration { t, reason: "singular iteration matrix" })?;
            for (j, dsj) in ds.iter_mut().enumerate() {
                let mut s_pred = [0.0; N];
                for row in dsj.iter().take(order + 1) {
                    for i in 0..N {
                        s_pred[i] += row[i];
                    }
                }
                let mut psi_s = [0.0; N];
                for k in 1..=order {
                    for i in 0..N {
                        psi_s[i] += dsj[k][i] * s.co.gamma[k];
                    }
                }
                let js = mat_vec(&jac, &s_pred);
                let fp = sys.param_derivative(t_new, &y_new, j);
                let rhs: [f64; N] = core::array::from_fn(|i| c * (js[i] + fp[i]) - psi_s[i] / s.co.alpha[order]);
                let d_s = lu_new.solve(&rhs);
                dsj[order + 2] = core::array::from_fn(|i| d_s[i] - dsj[order + 1][i]);
                dsj[order + 1] = d_s;
                for k in (0..=order).rev() {
                    for i in 0..N {
                        dsj[k][i] += dsj[k + 1][i];
                    }
                }
            }
            lu = Some(lu_new);
        } else {
            current_jac = false;
        }

        d[order + 2] = core::array::from_fn(|i| d_new[i] - d[order + 1][i]);
        d[order + 1] = d_new;
        for k in (0..=order).rev() {
            for i in 0..N {
                d[k][i] += d[k + 1][i];
            }
        }

        while out_idx < outputs.len() && outputs[out_idx] <= t_new {
            let to = outputs[out_idx];
            let y_out = if to == t_new { y_new } else { dense_eval(&d, order, t_new, h, to) };
            for (j, dsj) in ds.iter().enumerate() {
                sens_buf[j] = if to == t_new { dsj[0] } else { dense_eval(dsj, order, t_new, h, to) };
            }
            sink(to, &y_out, &sens_buf);
            out_idx += 1;
        }

        t = t_new;
        if n_equal_steps < order + 1 {
            continue;
        }
        let error_m_norm = if order > 1 {
            let e: [f64; N] = core::array::from_fn(|i| s.co.error_const[order - 1] * d[order][i]);
            rms_norm(&e, &scale)
        } else {
            f64::INFINITY
        };
        let error_p_norm = if order < MAX_ORDER {
            let e: [f64; N] = core::array::from_fn(|i| s.co.error_const[order + 1] * d[order + 2][i]);
            rms_norm(&e, &scale)
        } else {
            f64::INFINITY
        };
        let norms = [error_m_norm, error_norm, error_p_norm];
        let mut best = 0;
        let mut best_factor = f64::NEG_INFINITY;
        for (k, &en) in norms.iter().enumerate() {
            let fac = if en == 0.0 { f64::INFINITY } else { powf(en, -1.0 / (order + k) as f64) };
            if fac > best_factor {
                best_factor = fac;
                best = k;
            }
        }
        order = (order + best) - 1;
        let factor = MAX_FACTOR.min(safety * best_factor);
        h_abs *= factor;
        change_d(&mut d, order, factor);
        for dsj in ds.iter_mut() {
            change_d(dsj, order, factor);
        }
        n_equal_steps = 0;
        lu = None;
    }

    let sens = ds.iter().map(|dsj| dsj[0]).collect();
    Ok(Endpoint { y: d[0], sens, stats: s.stats })
}

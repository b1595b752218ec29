//! Equilibria of the model with TRH held at its base value and a constant
//! plasma MMI level.

use serde::{Deserialize, Serialize};

use alloc::vec::Vec;

use crate::bdf::{integrate, BdfOptions, OdeSystem};
use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::math::cbrt;
use crate::params::Model;
use crate::thyroid::{derivatives, HormoneState, N_STATES, TYPICAL};
use crate::SECONDS_PER_DAY;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub state: HormoneState,
    /// Max-norm of `f_i / max(|x_i|, typical_i)`, in 1/s.
    pub residual: f64,
    pub newton_iterations: usize,
}

const TARGET: f64 = 1e-13;
const ACCEPT: f64 = 1e-12;
const MAX_NEWTON: usize = 60;

fn frozen_rhs(x: &[f64; N_STATES], m: &Model, plasma: f64) -> [f64; N_STATES] {
    derivatives(x, plasma, m.thyroid.trh_base, m)
}

/// Scaled residual used as the convergence measure.
pub fn scaled_residual(x: &HormoneState, m: &Model, plasma: f64) -> f64 {
    let f = frozen_rhs(&x.0, m, plasma);
    f.iter().enumerate().map(|(i, v)| (v / x.0[i].abs().max(TYPICAL[i])).abs()).fold(0.0, f64::max)
}

fn generic_guess(m: &Model, plasma: f64) -> HormoneState {
    let mut x = HormoneState([1e-12, 1e-7, 3e-9, 1e-8, 2.0, 2.0, 0.01 * m.thyroid.t_g, 0.0, 0.0]);
    x.0[7] = plasma / m.pdt2.a0;
    x
}

struct Frozen<'a> {
    m: &'a Model,
    plasma: f64,
}

impl OdeSystem<N_STATES> for Frozen<'_> {
    fn rhs(&self, _t: f64, y: &[f64; N_STATES]) -> [f64; N_STATES] {
        frozen_rhs(y, self.m, self.plasma)
    }

    fn typical(&self, i: usize) -> f64 {
        TYPICAL[i]
    }
}

/// Mean over the last day of a `days`-long simulation from `x0`.
fn relax(m: &Model, plasma: f64, x0: &HormoneState, days: f64) -> Result<HormoneState> {
    let opts = BdfOptions {
        rtol: 1e-6,
        atol: core::array::from_fn(|i| 1e-6 * TYPICAL[i]),
        max_step: SECONDS_PER_DAY,
        first_step: None,
    };
    let t1 = days * SECONDS_PER_DAY;
    let grid: Vec<f64> = (0..=24).map(|h| t1 - SECONDS_PER_DAY + h as f64 * 3600.0).collect();
    let mut mean = [0.0; N_STATES];
    integrate(&Frozen { m, plasma }, 0.0, &x0.0, &[], t1, &opts, &grid, |_, y, _| {
        for i in 0..N_STATES {
            mean[i] += y[i] / grid.len() as f64;
        }
    })?;
    Ok(HormoneState(mean))
}

fn newton(m: &Model, plasma: f64, start: &HormoneState) -> (HormoneState, f64, usize) {
    let scale: [f64; N_STATES] = core::array::from_fn(|i| start.0[i].abs().max(TYPICAL[i] * 1e-6));
    let resid_vec = |x: &[f64; N_STATES]| -> [f64; N_STATES] {
        let f = frozen_rhs(x, m, plasma);
        core::array::from_fn(|i| f[i] / x[i].abs().max(TYPICAL[i]))
    };
    let norm = |r: &[f64; N_STATES]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut x = start.0;
    let mut r = resid_vec(&x);
    let mut rn = norm(&r);
    let mut best = (x, rn);
    let mut it = 0;
    while it < MAX_NEWTON && rn > TARGET {
        it += 1;
        let h = cbrt(f64::EPSILON);
        let mut jac = [[0.0; N_STATES]; N_STATES];
        for j in 0..N_STATES {
            let dz = h * (x[j].abs() / scale[j]).max(1.0);
            let mut xp = x;
            let mut xm = x;
            xp[j] += dz * scale[j];
            xm[j] -= dz * scale[j];
            let rp = resid_vec(&xp);
            let rm = resid_vec(&xm);
            let width = (xp[j] - xm[j]) / scale[j];
            for i in 0..N_STATES {
                jac[i][j] = (rp[i] - rm[i]) / width;
            }
        }
        let Some(lu) = Lu::factor(jac) else { break };
        let neg: [f64; N_STATES] = core::array::from_fn(|i| -r[i]);
        let dz = lu.solve(&neg);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut xn = x;
            for i in 0..N_STATES {
                xn[i] += lambda * dz[i] * scale[i];
            }
            for i in 0..7 {
                if xn[i] <= 0.0 {
                    xn[i] = 0.1 * x[i];
                }
            }
            let rn_new = resid_vec(&xn);
            let n_new = norm(&rn_new);
            if n_new.is_finite() && n_new < rn * (1.0 - 1e-4 * lambda) || n_new <= TARGET {
                x = xn;
                r = rn_new;
                rn = n_new;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if rn < best.1 {
            best = (x, rn);
        }
        if !accepted {
            break;
        }
    }
    (HormoneState(best.0), best.1, it)
}

/// Solves `f(x) = 0` with TRH frozen at its base value and plasma MMI held at
/// `constant_plasma` (mol/L).
pub fn solve_steady_state(m: &Model, constant_plasma: f64) -> Result<SteadyState> {
    if !(constant_plasma >= 0.0) {
        return Err(Error::Domain("constant plasma must be >= 0"));
    }
    m.validate()?;
    let mut best = f64::INFINITY;
    let mut guess = generic_guess(m, constant_plasma);
    for days in [200.0, 1000.0, 5000.0] {
        guess = relax(m, constant_plasma, &guess, days)?;
        let (x, res, iters) = newton(m, constant_plasma, &guess);
        if res < ACCEPT {
            let mut state = x;
            if constant_plasma == 0.0 {
                state.0[7] = 0.0;
                state.0[8] = 0.0;
            }
            let residual = scaled_residual(&state, m, constant_plasma);
            return Ok(SteadyState { state, residual, newton_iterations: iters });
        }
        best = best.min(res);
        guess = x;
    }
    Err(Error::SteadyState { residual: best })
}

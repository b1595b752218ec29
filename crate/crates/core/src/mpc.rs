//! Discrete-dose model predictive controller: single shooting over the dose
//! amounts with forward sensitivities and a projected Gauss-Newton solver.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::math::round;
use crate::params::Model;
use crate::pk::{plasma_from_schedule, DoseEvent, DoseSchedule, Route};
use crate::sim::{integrate_segmented, IntegratorConfig, SensitivityDose, TrhMode};
use crate::thyroid::{HormoneState, T3, T4, TSH};
use crate::{SECONDS_PER_DAY, SECONDS_PER_HOUR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Stop when the projected-gradient max-norm drops below
    /// `tol * max(J_track, 1)`, `J_track` being the state-tracking part of the
    /// cost.
    pub tol: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol: 1e-6, max_iter: 200, max_backtracks: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcpConfig {
    /// Seconds.
    pub horizon_s: f64,
    /// Seconds.
    pub delta_s: f64,
    pub q_t4: f64,
    pub q_t3: f64,
    pub q_tsh: f64,
    pub r1: f64,
    pub r2: f64,
    /// mg.
    pub u_max: f64,
    pub setpoint: HormoneState,
    /// Seconds between quadrature nodes of the tracking integral.
    pub quad_step_s: f64,
    /// Length in seconds of one unit of integration time in the tracking
    /// integral.
    pub cost_time_unit_s: f64,
    pub route: Route,
    pub integrator: IntegratorConfig,
    pub solver: SolverSettings,
}

impl OcpConfig {
    pub fn with_defaults(route: Route, delta_s: f64, u_max: f64, setpoint: HormoneState) -> Self {
        OcpConfig {
            horizon_s: 10.0 * SECONDS_PER_DAY,
            delta_s,
            q_t4: 1e3,
            q_t3: 1e3,
            q_tsh: 1e3,
            r1: 5e-3,
            r2: 1e-2,
            u_max,
            setpoint,
            quad_step_s: SECONDS_PER_HOUR,
            cost_time_unit_s: SECONDS_PER_DAY,
            route,
            integrator: IntegratorConfig::default(),
            solver: SolverSettings::default(),
        }
    }

    pub fn n_doses(&self) -> usize {
        round(self.horizon_s / self.delta_s) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.horizon_s / self.delta_s;
        if !(self.delta_s > 0.0) || (n - round(n)).abs() > 1e-9 || round(n) < 1.0 {
            return Err(Error::Domain("horizon must be a positive integer multiple of delta"));
        }
        if [self.q_t4, self.q_t3, self.q_tsh, self.r1, self.r2].iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Domain("weights must be >= 0"));
        }
        if !(self.u_max > 0.0) {
            return Err(Error::Domain("u_max must be > 0"));
        }
        if !(self.quad_step_s > 0.0) || !(self.cost_time_unit_s > 0.0) {
            return Err(Error::Domain("quadrature step and cost time unit must be > 0"));
        }
        self.integrator.validate()
    }

    fn weights(&self) -> [(usize, f64); 3] {
        [(T4, self.q_t4), (T3, self.q_t3), (TSH, self.q_tsh)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    /// mg.
    pub prev_dose: f64,
    /// Doses the controller has prescribed.
    pub history: DoseSchedule,
    pub last_sequence: Option<Vec<f64>>,
    pub last_cost: Option<f64>,
}

impl ControllerState {
    pub fn new(u_max: f64) -> Self {
        ControllerState { prev_dose: u_max, history: DoseSchedule::new(), last_sequence: None, last_cost: None }
    }

    pub fn warm_start(&self, n: usize, u_max: f64) -> Vec<f64> {
        match &self.last_sequence {
            Some(prev) if prev.len() == n && n > 0 => {
                let mut w: Vec<f64> = prev[1..].to_vec();
                w.push(prev[n - 1]);
                w
            }
            _ => vec![u_max; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveInfo {
    pub iterations: usize,
    pub cost_evaluations: usize,
    pub cost: f64,
    /// Projected-gradient max-norm divided by `max(J_track, 1)`.
    pub stationarity: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    pub sequence: Vec<f64>,
    pub info: SolveInfo,
}

/// The candidate doses as a schedule at `t + k delta`.
pub fn candidate_schedule(t: f64, candidate: &[f64], delta_s: f64, route: Route) -> Vec<DoseEvent> {
    candidate.iter().enumerate().map(|(k, &amount)| DoseEvent { time: t + k as f64 * delta_s, amount, route }).collect()
}

/// Plasma concentration at `t + k delta` from past doses plus candidate doses
/// given strictly before that instant.
pub fn predict_plasma(
    history: &DoseSchedule,
    candidate: &[f64],
    t: f64,
    k: usize,
    delta_s: f64,
    route: Route,
    model: &Model,
) -> f64 {
    let tk = t + k as f64 * delta_s;
    let past = plasma_from_schedule(history, tk, &model.pk);
    let future: f64 = candidate_schedule(t, candidate, delta_s, route)
        .iter()
        .take(k)
        .map(|d| crate::pk::plasma_single(d, tk, &model.pk))
        .sum();
    past + future
}

fn full_schedule(history: &DoseSchedule, t: f64, candidate: &[f64], cfg: &OcpConfig) -> Result<DoseSchedule> {
    let mut events: Vec<DoseEvent> = history.events().iter().copied().filter(|d| d.time < t).collect();
    events.extend(candidate_schedule(t, candidate, cfg.delta_s, cfg.route));
    DoseSchedule::from_events(events)
}

fn quadrature_grid(t: f64, cfg: &OcpConfig) -> (Vec<f64>, Vec<f64>) {
    let n = round(cfg.horizon_s / cfg.quad_step_s) as usize;
    let h = cfg.horizon_s / n as f64;
    let w = h / cfg.cost_time_unit_s;
    let times: Vec<f64> = (0..=n).map(|i| t + i as f64 * h).collect();
    let mut weights = vec![w; n + 1];
    weights[0] *= 0.5;
    weights[n] *= 0.5;
    (times, weights)
}

fn penalty(candidate: &[f64], prev: f64, cfg: &OcpConfig) -> f64 {
    candidate.iter().map(|&u| cfg.r1 * u * u + cfg.r2 * (u - prev) * (u - prev)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub cost: f64,
    /// State-tracking integral alone.
    pub tracking: f64,
    pub gradient: Vec<f64>,
    /// Gauss-Newton approximation of the Hessian, row-major `n x n`.
    pub hessian: Vec<f64>,
}

/// Shooting problem for one controller call.
pub struct Shooting<'a> {
    pub x_t: HormoneState,
    pub t: f64,
    pub prev_dose: f64,
    pub history: &'a DoseSchedule,
    pub cfg: &'a OcpConfig,
    pub model: &'a Model,
}

impl Shooting<'_> {
    pub fn n(&self) -> usize {
        self.cfg.n_doses()
    }

    fn horizon_run(&self, candidate: &[f64], with_gradient: bool) -> Result<Evaluation> {
        let cfg = self.cfg;
        let schedule = full_schedule(self.history, self.t, candidate, cfg)?;
        let (times, weights) = quadrature_grid(self.t, cfg);
        let sens_doses: Vec<SensitivityDose> = if with_gradient {
            (0..candidate.len())
                .map(|k| SensitivityDose { time: self.t + k as f64 * cfg.delta_s, route: cfg.route })
                .collect()
        } else {
            Vec::new()
        };
        let wq = cfg.weights();
        let xs = cfg.setpoint;
        let mut idx = 0usize;
        let mut track = 0.0;
        let n = candidate.len();
        let mut grad = vec![0.0; n];
        let mut hess = if with_gradient { vec![0.0; n * n] } else { Vec::new() };
        integrate_segmented(
            self.model,
            &self.x_t,
            self.t,
            self.t + cfg.horizon_s,
            &schedule,
            &sens_doses,
            TrhMode::Circadian,
            &cfg.integrator,
            &times,
            |_, x, s| {
                let w = weights[idx];
                idx += 1;
                for &(c, q) in &wq {
                    let e = x.0[c] - xs.0[c];
                    track += w * q * e * e;
                    for (g, sj) in grad.iter_mut().zip(s) {
                        *g += w * 2.0 * q * e * sj[c];
                    }
                    for i in 0..s.len() {
                        let a = w * 2.0 * q * s[i][c];
                        if a == 0.0 {
                            continue;
                        }
                        for j in 0..=i {
                            hess[i * n + j] += a * s[j][c];
                        }
                    }
                }
            },
        )?;
        if idx != times.len() {
            return Err(Error::Controller("quadrature grid not fully covered".to_string()));
        }
        let cost = track + penalty(candidate, self.prev_dose, cfg);
        for (g, &u) in grad.iter_mut().zip(candidate) {
            *g += 2.0 * cfg.r1 * u + 2.0 * cfg.r2 * (u - self.prev_dose);
        }
        if with_gradient {
            for i in 0..n {
                hess[i * n + i] += 2.0 * (cfg.r1 + cfg.r2);
                for j in 0..i {
                    hess[j * n + i] = hess[i * n + j];
                }
            }
        }
        Ok(Evaluation { cost, tracking: track, gradient: grad, hessian: hess })
    }

    pub fn cost(&self, candidate: &[f64]) -> Result<f64> {
        Ok(self.horizon_run(candidate, false)?.cost)
    }

    /// Cost, its tracking part, the gradient from forward sensitivities and the
    /// Gauss-Newton Hessian built from the same sensitivities.
    pub fn evaluate(&self, candidate: &[f64]) -> Result<Evaluation> {
        self.horizon_run(candidate, true)
    }

    /// Predicted state at `t + delta` under `candidate`.
    pub fn predict_next(&self, candidate: &[f64]) -> Result<HormoneState> {
        let schedule = full_schedule(self.history, self.t, candidate, self.cfg)?;
        let run = integrate_segmented(
            self.model,
            &self.x_t,
            self.t,
            self.t + self.cfg.delta_s,
            &schedule,
            &[],
            TrhMode::Circadian,
            &self.cfg.integrator,
            &[],
            |_, _, _| {},
        )?;
        Ok(run.end)
    }
}

/// Tracking-plus-penalty cost of `candidate` starting from `x_t` at time `t`.
pub fn evaluate_cost(
    x_t: &HormoneState,
    t: f64,
    candidate: &[f64],
    prev_dose: f64,
    history: &DoseSchedule,
    cfg: &OcpConfig,
    model: &Model,
) -> Result<f64> {
    Shooting { x_t: *x_t, t, prev_dose, history, cfg, model }.cost(candidate)
}

fn project(x: f64, hi: f64) -> f64 {
    x.clamp(0.0, hi)
}

/// Max-norm of `x - P(x - g)`.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], hi: f64) -> f64 {
    x.iter().zip(g).map(|(&xi, &gi)| (xi - project(xi - gi, hi)).abs()).fold(0.0, f64::max)
}

/// Projected Gauss-Newton on the box `[0, hi]^n`: Newton step on the free
/// coordinates, diagonally scaled gradient step on the ones held at a bound,
/// projected Armijo backtracking. The Gauss-Newton matrix is corrected by a
/// symmetric rank-one secant term for the curvature it leaves out; the
/// uncorrected matrix is used whenever the sum is not positive definite.
fn minimize<F>(start: Vec<f64>, hi: f64, settings: &SolverSettings, mut eval: F) -> Result<(Vec<f64>, SolveInfo)>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    let n = start.len();
    let mut x: Vec<f64> = start.iter().map(|&v| project(v, hi)).collect();
    let mut cur = eval(&x)?;
    let mut evals = 1;
    let mut iterations = 0;
    let mut converged = false;
    let mut corr = vec![0.0; n * n];
    loop {
        let scale = cur.tracking.abs().max(1.0);
        let pg = projected_gradient_norm(&x, &cur.gradient, hi);
        if pg <= settings.tol * scale {
            converged = true;
            break;
        }
        if iterations >= settings.max_iter {
            break;
        }
        iterations += 1;

        let g = &cur.gradient;
        let h = &cur.hessian;
        let eps = pg.min(1e-3 * hi);
        let free: Vec<usize> =
            (0..n).filter(|&i| !((x[i] <= eps && g[i] > 0.0) || (x[i] >= hi - eps && g[i] < 0.0))).collect();
        let nf = free.len();
        let rhs: Vec<f64> = free.iter().map(|&i| -g[i]).collect();
        let reduced = |with_corr: bool| {
            let mut m = vec![0.0; nf * nf];
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    m[a * nf + b] = h[i * n + j] + if with_corr { corr[i * n + j] } else { 0.0 };
                }
            }
            cholesky_solve(&m, nf, &rhs)
        };
        let mut d: Vec<f64> = (0..n).map(|i| -g[i] / h[i * n + i]).collect();
        if let Some(df) = reduced(true).or_else(|| reduced(false)) {
            for (a, &i) in free.iter().enumerate() {
                d[i] = df[a];
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..settings.max_backtracks {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(&xi, &di)| project(xi + alpha * di, hi)).collect();
            if xn == x {
                break;
            }
            let decrease: f64 = g.iter().zip(xn.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            evals += 1;
            if let Ok(ev) = eval(&xn) {
                if ev.cost.is_finite() && ev.cost <= cur.cost + 1e-4 * decrease.min(0.0) {
                    accepted = Some((xn, ev));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xn, ev)) = accepted else {
            break;
        };
        let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let v: Vec<f64> = (0..n)
            .map(|i| {
                let bs: f64 = (0..n).map(|j| (ev.hessian[i * n + j] + corr[i * n + j]) * step[j]).sum();
                ev.gradient[i] - cur.gradient[i] - bs
            })
            .collect();
        let vs: f64 = v.iter().zip(&step).map(|(a, b)| a * b).sum();
        let vv: f64 = v.iter().map(|a| a * a).sum();
        let ss: f64 = step.iter().map(|a| a * a).sum();
        if vs.abs() > 1e-8 * crate::math::sqrt(vv * ss) {
            for i in 0..n {
                for j in 0..n {
                    corr[i * n + j] += v[i] * v[j] / vs;
                }
            }
        }
        x = xn;
        cur = ev;
    }
    let stationarity = projected_gradient_norm(&x, &cur.gradient, hi) / cur.tracking.abs().max(1.0);
    Ok((x, SolveInfo { iterations, cost_evaluations: evals, cost: cur.cost, stationarity, converged }))
}

/// Optimal dose sequence for the horizon starting at `t`.
pub fn solve_ocp(
    x_t: &HormoneState,
    t: f64,
    ctrl: &ControllerState,
    cfg: &OcpConfig,
    model: &Model,
) -> Result<OcpSolution> {
    cfg.validate()?;
    if !x_t.is_finite() || x_t.0.iter().take(7).any(|v| *v < 0.0) {
        return Err(Error::Controller("measured state must be finite and non-negative".to_string()));
    }
    let problem = Shooting { x_t: *x_t, t, prev_dose: ctrl.prev_dose, history: &ctrl.history, cfg, model };
    let n = cfg.n_doses();
    let start = ctrl.warm_start(n, cfg.u_max);
    let start_proj: Vec<f64> = start.iter().map(|&v| project(v, cfg.u_max)).collect();
    let mut first = Some(
        problem
            .evaluate(&start_proj)
            .map_err(|e| Error::Controller(alloc::format!("shooting failed at the initial point: {e}")))?,
    );
    let (sequence, info) = minimize(start_proj, cfg.u_max, &cfg.solver, |u| match first.take() {
        Some(ev) => Ok(ev),
        None => problem.evaluate(u),
    })?;
    Ok(OcpSolution { sequence, info })
}

/// One receding-horizon step: solve, apply the first dose, update the state.
pub fn mpc_step(
    x_t: &HormoneState,
    t: f64,
    ctrl: &mut ControllerState,
    cfg: &OcpConfig,
    model: &Model,
) -> Result<(f64, SolveInfo)> {
    let sol = solve_ocp(x_t, t, ctrl, cfg, model)?;
    let dose = project(sol.sequence[0], cfg.u_max);
    ctrl.prev_dose = dose;
    ctrl.history.push(DoseEvent { time: t, amount: dose, route: cfg.route })?;
    ctrl.last_sequence = Some(sol.sequence);
    ctrl.last_cost = Some(sol.info.cost);
    Ok((dose, sol.info))
}

//! Segmented integration of the model, measurement noise and the closed-loop
//! runner.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bdf::{integrate as bdf_integrate, BdfOptions, BdfStats, OdeSystem};
use crate::error::{Error, Result};
use crate::math::{floor, round};
use crate::mpc::{mpc_step, ControllerState, OcpConfig, SolveInfo};
use crate::params::Model;
use crate::pk::{DoseEvent, DoseSchedule, PlasmaForcing, Route};
use crate::scenario::ScenarioConfig;
use crate::steady::solve_steady_state;
use crate::thyroid::{derivatives, trh_forcing, HormoneState, MMI2, N_STATES, TYPICAL};
use crate::SECONDS_PER_DAY;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    /// Absolute tolerance relative to each component's typical magnitude.
    pub atol_scale: f64,
    /// Seconds.
    pub max_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { rtol: 1e-8, atol_scale: 1e-8, max_step: 6.0 * 3600.0 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol_scale > 0.0 && self.max_step > 0.0) {
            return Err(Error::Domain("integrator tolerances and max step must be > 0"));
        }
        Ok(())
    }

    pub fn atol(&self) -> [f64; N_STATES] {
        core::array::from_fn(|i| self.atol_scale * TYPICAL[i])
    }

    fn options(&self) -> BdfOptions<N_STATES> {
        BdfOptions { rtol: self.rtol, atol: self.atol(), max_step: self.max_step, first_step: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrhMode {
    Circadian,
    /// TRH held at its base value.
    Frozen,
}

/// Model right-hand side on an interval free of dose instants.
pub(crate) struct SegmentSystem<'a> {
    pub model: &'a Model,
    pub forcing: PlasmaForcing,
    pub trh: TrhMode,
    pub unit_forcings: &'a [PlasmaForcing],
}

impl OdeSystem<N_STATES> for SegmentSystem<'_> {
    fn rhs(&self, t: f64, y: &[f64; N_STATES]) -> [f64; N_STATES] {
        let trh = match self.trh {
            TrhMode::Circadian => trh_forcing(t, &self.model.thyroid),
            TrhMode::Frozen => self.model.thyroid.trh_base,
        };
        derivatives(y, self.forcing.eval(t), trh, self.model)
    }

    fn n_params(&self) -> usize {
        self.unit_forcings.len()
    }

    fn param_derivative(&self, t: f64, _y: &[f64; N_STATES], j: usize) -> [f64; N_STATES] {
        let mut out = [0.0; N_STATES];
        out[MMI2] = self.unit_forcings[j].eval(t);
        out
    }

    fn typical(&self, i: usize) -> f64 {
        TYPICAL[i]
    }
}

/// Dose whose amount is a sensitivity parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SensitivityDose {
    pub time: f64,
    pub route: Route,
}

pub(crate) struct SegmentedRun {
    pub end: HormoneState,
    pub stats: BdfStats,
}

/// Integrates across `[t0, t1]`, restarting at every dose instant of
/// `schedule` and at every sensitivity dose time.
#[allow(clippy::too_many_arguments)]
pub(crate) fn integrate_segmented<F>(
    model: &Model,
    x0: &HormoneState,
    t0: f64,
    t1: f64,
    schedule: &DoseSchedule,
    sens_doses: &[SensitivityDose],
    trh: TrhMode,
    cfg: &IntegratorConfig,
    outputs: &[f64],
    mut sink: F,
) -> Result<SegmentedRun>
where
    F: FnMut(f64, &HormoneState, &[[f64; N_STATES]]),
{
    let mut breaks: Vec<f64> = schedule
        .events()
        .iter()
        .map(|d| d.time)
        .chain(sens_doses.iter().map(|d| d.time))
        .filter(|&tb| tb > t0 && tb < t1)
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    breaks.push(t1);

    let opts = cfg.options();
    let atol = opts.atol;
    let mut x = x0.0;
    let mut sens = vec![[0.0; N_STATES]; sens_doses.len()];
    let mut stats = BdfStats::default();
    let mut a = t0;
    let mut negative: Option<f64> = None;
    for (seg, &b) in breaks.iter().enumerate() {
        let forcing = PlasmaForcing::at(schedule, a, &model.pk);
        let active: Vec<usize> = (0..sens_doses.len()).filter(|&j| sens_doses[j].time <= a).collect();
        let units: Vec<PlasmaForcing> = active
            .iter()
            .map(|&j| PlasmaForcing::unit(sens_doses[j].route, sens_doses[j].time, a, &model.pk))
            .collect();
        let sens_active: Vec<[f64; N_STATES]> = active.iter().map(|&j| sens[j]).collect();
        let sys = SegmentSystem { model, forcing, trh, unit_forcings: &units };
        let lo = if seg == 0 { outputs.partition_point(|&to| to < a) } else { outputs.partition_point(|&to| to <= a) };
        let hi = outputs.partition_point(|&to| to <= b);
        let seg_out = &outputs[lo..hi.max(lo)];
        let mut full = sens.clone();
        let end = bdf_integrate(&sys, a, &x, &sens_active, b, &opts, seg_out, |t, y, s| {
            if negative.is_none() && y.iter().take(7).zip(&atol).any(|(v, tol)| *v < -100.0 * tol) {
                negative = Some(t);
            }
            for (&j, sj) in active.iter().zip(s) {
                full[j] = *sj;
            }
            sink(t, &HormoneState(*y), &full);
        })?;
        stats.accumulate(&end.stats);
        x = end.y;
        for (&j, sj) in active.iter().zip(&end.sens) {
            sens[j] = *sj;
        }
        if let Some(tn) = negative {
            return Err(Error::Integration { t: tn, reason: "negative hormone concentration" });
        }
        if x.iter().take(7).zip(&atol).any(|(v, tol)| *v < -100.0 * tol) {
            return Err(Error::Integration { t: b, reason: "negative hormone concentration" });
        }
        a = b;
    }
    Ok(SegmentedRun { end: HormoneState(x), stats })
}

/// Dense trajectory on a caller-chosen grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<HormoneState>,
    pub end: HormoneState,
    pub stats: BdfStats,
}

/// Integrates from `t0` to `t1` under `schedule`, reporting at `outputs`.
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    x0: &HormoneState,
    t0: f64,
    t1: f64,
    schedule: &DoseSchedule,
    model: &Model,
    cfg: &IntegratorConfig,
    trh: TrhMode,
    outputs: &[f64],
) -> Result<Trajectory> {
    if !(t1 > t0) {
        return Err(Error::Integration { t: t0, reason: "empty interval" });
    }
    let mut times = Vec::with_capacity(outputs.len());
    let mut states = Vec::with_capacity(outputs.len());
    let run = integrate_segmented(model, x0, t0, t1, schedule, &[], trh, cfg, outputs, |t, x, _| {
        times.push(t);
        states.push(*x);
    })?;
    Ok(Trajectory { times, states, end: run.end, stats: run.stats })
}

/// Evenly spaced grid `t0, t0 + step, ...` that always ends at `t1`.
pub fn time_grid(t0: f64, t1: f64, step: f64) -> Vec<f64> {
    let n = round((t1 - t0) / step) as usize;
    let mut g: Vec<f64> = (0..=n).map(|i| t0 + i as f64 * step).filter(|&t| t < t1).collect();
    g.push(t1);
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub std: f64,
    pub truncation: f64,
}

impl NoiseConfig {
    pub const NONE: NoiseConfig = NoiseConfig { std: 0.0, truncation: 0.3 };

    pub fn validate(&self) -> Result<()> {
        if !(self.std >= 0.0 && self.truncation >= 0.0) {
            return Err(Error::Domain("noise std and truncation must be >= 0"));
        }
        Ok(())
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { std: 0.05, truncation: 0.3 }
    }
}

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Multiplies every component by `1 + v`, `v ~ N(0, std^2)` conditioned on
/// `|v| <= truncation`.
pub fn measure(x: &HormoneState, noise: &NoiseConfig, rng: &mut Rng) -> HormoneState {
    if noise.std == 0.0 {
        return *x;
    }
    let normal = Normal::new(0.0, noise.std).expect("validated noise std");
    let mut out = *x;
    for v in out.0.iter_mut() {
        let e = loop {
            let e: f64 = normal.sample(rng);
            if e.abs() <= noise.truncation {
                break e;
            }
        };
        *v *= 1.0 + e;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Aborted(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRecord {
    pub scenario: ScenarioConfig,
    pub setpoint: HormoneState,
    pub times: Vec<f64>,
    pub states: Vec<HormoneState>,
    pub sample_times: Vec<f64>,
    pub measured: Vec<HormoneState>,
    pub commanded: Vec<f64>,
    pub administered: Vec<f64>,
    pub solves: Vec<SolveInfo>,
    pub status: RunStatus,
}

impl SimulationRecord {
    pub fn degraded(&self) -> bool {
        self.solves.iter().any(|s| !s.converged)
    }

    pub fn plant_schedule(&self) -> DoseSchedule {
        let events = self
            .sample_times
            .iter()
            .zip(&self.administered)
            .map(|(&time, &amount)| DoseEvent { time, amount, route: self.scenario.route })
            .collect();
        DoseSchedule::from_events(events).unwrap_or_default()
    }
}

/// Initial patient state: the zero-dose steady state of `plant`.
pub fn initial_state(plant: &Model) -> Result<HormoneState> {
    Ok(solve_steady_state(plant, 0.0)?.state)
}

/// Runs the measurement, controller, actuation loop for a scenario.
///
/// `controller_model` feeds the predictions; `plant_model` is what the
/// patient actually follows.
pub fn run_closed_loop(
    scenario: &ScenarioConfig,
    controller_model: &Model,
    plant_model: &Model,
    ocp: &OcpConfig,
    integ: &IntegratorConfig,
) -> SimulationRecord {
    let mut rec = SimulationRecord {
        scenario: scenario.clone(),
        setpoint: ocp.setpoint,
        times: Vec::new(),
        states: Vec::new(),
        sample_times: Vec::new(),
        measured: Vec::new(),
        commanded: Vec::new(),
        administered: Vec::new(),
        solves: Vec::new(),
        status: RunStatus::Completed,
    };
    if let Err(e) = closed_loop_body(scenario, controller_model, plant_model, ocp, integ, &mut rec) {
        rec.status = RunStatus::Aborted(e.to_string());
    }
    rec
}

fn closed_loop_body(
    scenario: &ScenarioConfig,
    controller_model: &Model,
    plant_model: &Model,
    ocp: &OcpConfig,
    integ: &IntegratorConfig,
    rec: &mut SimulationRecord,
) -> Result<()> {
    scenario.validate()?;
    let mut rng = rng_from_seed(scenario.seed);
    let mut ctrl = ControllerState::new(ocp.u_max);
    let mut plant_schedule = DoseSchedule::new();
    let mut x = initial_state(plant_model)?;
    let steps = round(scenario.duration_s / scenario.delta_s) as usize;
    let record_step = 3600.0;

    rec.times.push(0.0);
    rec.states.push(x);
    for k in 0..steps {
        let t = k as f64 * scenario.delta_s;
        let t_next = (k + 1) as f64 * scenario.delta_s;
        let xm = measure(&x, &scenario.noise, &mut rng);
        let (dose, info) = mpc_step(&xm, t, &mut ctrl, ocp, controller_model)?;
        rec.solves.push(info);
        let day = t / SECONDS_PER_DAY;
        let missed =
            scenario.route == Route::Oral && floor(day) == day && scenario.missed_days.iter().any(|&d| d as f64 == day);
        let given = if missed { 0.0 } else { dose };
        rec.sample_times.push(t);
        rec.measured.push(xm);
        rec.commanded.push(dose);
        rec.administered.push(given);
        plant_schedule.push(DoseEvent { time: t, amount: given, route: scenario.route })?;

        let grid = time_grid(t, t_next, record_step);
        let traj = integrate(&x, t, t_next, &plant_schedule, plant_model, integ, TrhMode::Circadian, &grid)?;
        for (tt, xx) in traj.times.iter().zip(&traj.states).skip(1) {
            rec.times.push(*tt);
            rec.states.push(*xx);
        }
        x = traj.end;
    }
    Ok(())
}

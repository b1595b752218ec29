//! Treatment scenario presets.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::round;
use crate::metrics::{compute_metrics, RunMetrics};
use crate::mpc::{OcpConfig, SolverSettings};
use crate::params::{IodideRegime, Model, ParameterSet};
use crate::pk::Route;
use crate::sim::{run_closed_loop, IntegratorConfig, NoiseConfig, SimulationRecord};
use crate::steady::solve_steady_state;
use crate::thyroid::HormoneState;
use crate::{SECONDS_PER_DAY, SECONDS_PER_HOUR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Ordinary,
    HighIodide,
    Thyrotoxicosis,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [ScenarioKind::Ordinary, ScenarioKind::HighIodide, ScenarioKind::Thyrotoxicosis];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Ordinary => "ordinary",
            ScenarioKind::HighIodide => "high-iodide",
            ScenarioKind::Thyrotoxicosis => "thyrotoxicosis",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Nominal,
    Realistic,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Nominal => "nominal",
            Mode::Realistic => "realistic",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Mode::Nominal, Mode::Realistic].into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub mode: Mode,
    pub gt_multiplier: f64,
    pub route: Route,
    pub regime: IodideRegime,
    /// Seconds.
    pub delta_s: f64,
    /// mg.
    pub u_max: f64,
    /// Seconds.
    pub horizon_s: f64,
    /// Seconds.
    pub duration_s: f64,
    pub noise: NoiseConfig,
    /// Relative plant-side changes, e.g. `("g_d1", 0.1)`.
    pub mismatch: Vec<(String, f64)>,
    pub missed_days: Vec<u32>,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn preset(kind: ScenarioKind, mode: Mode, seed: u64) -> Self {
        let (gt, route, regime, delta_h, u_max, days) = match kind {
            ScenarioKind::Ordinary => (10.0, Route::Oral, IodideRegime::Normal, 24.0, 15.0, 40.0),
            ScenarioKind::HighIodide => (10.0, Route::Oral, IodideRegime::High, 24.0, 35.0, 40.0),
            ScenarioKind::Thyrotoxicosis => (15.0, Route::Intravenous, IodideRegime::Normal, 8.0, 40.0, 30.0),
        };
        let mut cfg = ScenarioConfig {
            kind,
            mode,
            gt_multiplier: gt,
            route,
            regime,
            delta_s: delta_h * SECONDS_PER_HOUR,
            u_max,
            horizon_s: 10.0 * SECONDS_PER_DAY,
            duration_s: days * SECONDS_PER_DAY,
            noise: NoiseConfig::NONE,
            mismatch: Vec::new(),
            missed_days: Vec::new(),
            seed,
        };
        if mode == Mode::Realistic {
            cfg.enable_disturbances();
        }
        cfg
    }

    /// Noise, the deiodinase mismatch and, for oral dosing, missed days.
    pub fn enable_disturbances(&mut self) {
        self.noise = NoiseConfig::default();
        self.mismatch = vec![(String::from("g_d1"), 0.1), (String::from("g_t3"), 0.1)];
        self.missed_days = if self.route == Route::Oral { vec![4, 14] } else { Vec::new() };
    }

    pub fn steps(&self) -> usize {
        round(self.duration_s / self.delta_s) as usize
    }

    pub fn mismatch_pairs(&self) -> Vec<(&str, f64)> {
        self.mismatch.iter().map(|(k, v)| (k.as_str(), *v)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ratio = self.horizon_s / self.delta_s;
        if !(self.delta_s > 0.0) || (ratio - round(ratio)).abs() > 1e-9 || round(ratio) < 1.0 {
            return Err(Error::Domain("horizon must be an integer multiple of delta"));
        }
        if !(self.u_max > 0.0) {
            return Err(Error::Domain("u_max must be > 0"));
        }
        if !(self.gt_multiplier >= 1.0) {
            return Err(Error::Domain("G_T multiplier must be >= 1"));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::Domain("duration must be > 0"));
        }
        self.noise.validate()
    }
}

/// Controller and integrator settings shared by every scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerSettings {
    pub q_t4: f64,
    pub q_t3: f64,
    pub q_tsh: f64,
    pub r1: f64,
    pub r2: f64,
    /// Seconds.
    pub quad_step_s: f64,
    /// Seconds per unit of integration time in the tracking integral.
    pub cost_time_unit_s: f64,
    pub integrator: IntegratorConfig,
    pub solver: SolverSettings,
    /// Relative half-width of the setpoint band used by the metrics.
    pub band: f64,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        ControllerSettings {
            q_t4: 1e3,
            q_t3: 1e3,
            q_tsh: 1e3,
            r1: 5e-3,
            r2: 1e-2,
            quad_step_s: SECONDS_PER_HOUR,
            cost_time_unit_s: SECONDS_PER_DAY,
            integrator: IntegratorConfig::default(),
            solver: SolverSettings::default(),
            band: 0.1,
        }
    }
}

impl ControllerSettings {
    pub fn ocp(&self, sc: &ScenarioConfig, setpoint: HormoneState) -> OcpConfig {
        OcpConfig {
            horizon_s: sc.horizon_s,
            delta_s: sc.delta_s,
            q_t4: self.q_t4,
            q_t3: self.q_t3,
            q_tsh: self.q_tsh,
            r1: self.r1,
            r2: self.r2,
            u_max: sc.u_max,
            setpoint,
            quad_step_s: self.quad_step_s,
            cost_time_unit_s: self.cost_time_unit_s,
            route: sc.route,
            integrator: self.integrator,
            solver: self.solver,
        }
    }
}

/// Models used by one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioModels {
    /// Healthy zero-dose equilibrium (normal iodide).
    pub setpoint: HormoneState,
    pub controller: Model,
    /// Controller model plus the plant-side mismatch.
    pub plant: Model,
}

pub fn healthy_setpoint(params: &ParameterSet) -> Result<HormoneState> {
    Ok(solve_steady_state(&params.model(IodideRegime::Normal), 0.0)?.state)
}

pub fn build_models(params: &ParameterSet, sc: &ScenarioConfig) -> Result<ScenarioModels> {
    params.validate()?;
    sc.validate()?;
    let setpoint = healthy_setpoint(params)?;
    let mut controller = params.model(sc.regime);
    controller.thyroid = controller.thyroid.with_condition(sc.gt_multiplier)?;
    let mut plant = controller;
    plant.thyroid = controller.thyroid.with_mismatch(&sc.mismatch_pairs())?;
    Ok(ScenarioModels { setpoint, controller, plant })
}

/// Everything one run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub models: ScenarioModels,
    pub record: SimulationRecord,
    pub metrics: RunMetrics,
}

/// Runs one scenario end to end. A run that aborts part way still returns
/// its partial record, with the reason in `record.status`.
pub fn run_scenario(params: &ParameterSet, sc: &ScenarioConfig, settings: &ControllerSettings) -> Result<ScenarioRun> {
    let models = build_models(params, sc)?;
    let ocp = settings.ocp(sc, models.setpoint);
    ocp.validate()?;
    let record = run_closed_loop(sc, &models.controller, &models.plant, &ocp, &settings.integrator);
    let metrics = compute_metrics(&record, &models.setpoint, settings.band);
    Ok(ScenarioRun { models, record, metrics })
}

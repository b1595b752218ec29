//! Methimazole plasma kinetics, the intrathyroidal transfer compartment and
//! the TPO activity curve.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp, powf};
use crate::params::{Pdt2Params, PkParams, TpoSigmoidParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Oral,
    Intravenous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoseEvent {
    /// Seconds.
    pub time: f64,
    /// Milligrams.
    pub amount: f64,
    pub route: Route,
}

/// Doses sorted by strictly increasing time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DoseSchedule {
    events: Vec<DoseEvent>,
}

impl DoseSchedule {
    pub fn new() -> Self {
        DoseSchedule { events: Vec::new() }
    }

    pub fn from_events(mut events: Vec<DoseEvent>) -> Result<Self> {
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        for w in events.windows(2) {
            if w[0].time == w[1].time {
                return Err(Error::Domain("duplicate dose time"));
            }
        }
        for e in &events {
            if !(e.amount >= 0.0) || !e.time.is_finite() {
                return Err(Error::Domain("dose amount must be >= 0 and time finite"));
            }
        }
        Ok(DoseSchedule { events })
    }

    /// Appends a dose later than every existing one.
    pub fn push(&mut self, event: DoseEvent) -> Result<()> {
        if !(event.amount >= 0.0) || !event.time.is_finite() {
            return Err(Error::Domain("dose amount must be >= 0 and time finite"));
        }
        if let Some(last) = self.events.last() {
            if event.time <= last.time {
                return Err(Error::Domain("dose times must be strictly increasing"));
            }
        }
        self.events.push(event);
        Ok(())
    }

    pub fn events(&self) -> &[DoseEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Union of two schedules.
    pub fn merged(&self, other: &DoseSchedule) -> Result<DoseSchedule> {
        let mut all = self.events.clone();
        all.extend_from_slice(&other.events);
        DoseSchedule::from_events(all)
    }
}

/// Bateman amplitude `f k_a / (V (k_a - k_e))` in mol/L per mg.
fn oral_coefficient(pk: &PkParams) -> f64 {
    let (ke, ka) = (pk.k_e(), pk.k_a());
    pk.f * ka / (pk.volume_l * (ka - ke)) / (1000.0 * pk.molar_mass_g_per_mol)
}

fn iv_coefficient(pk: &PkParams) -> f64 {
    1.0 / (pk.volume_l * 1000.0 * pk.molar_mass_g_per_mol)
}

/// Plasma concentration (mol/L) from one oral dose.
pub fn oral_plasma_single(dose: &DoseEvent, t: f64, pk: &PkParams) -> f64 {
    if t <= dose.time {
        return 0.0;
    }
    let dt = t - dose.time;
    let v = dose.amount * oral_coefficient(pk) * (exp(-pk.k_e() * dt) - exp(-pk.k_a() * dt));
    v.max(0.0)
}

/// Plasma concentration (mol/L) from one intravenous bolus.
pub fn iv_plasma_single(dose: &DoseEvent, t: f64, pk: &PkParams) -> f64 {
    if t < dose.time {
        return 0.0;
    }
    dose.amount * iv_coefficient(pk) * exp(-pk.k_e() * (t - dose.time))
}

pub fn plasma_single(dose: &DoseEvent, t: f64, pk: &PkParams) -> f64 {
    match dose.route {
        Route::Oral => oral_plasma_single(dose, t, pk),
        Route::Intravenous => iv_plasma_single(dose, t, pk),
    }
}

/// Superposed plasma concentration (mol/L) of a schedule.
pub fn plasma_from_schedule(schedule: &DoseSchedule, t: f64, pk: &PkParams) -> f64 {
    schedule.events().iter().fold(0.0, |acc, d| acc + plasma_single(d, t, pk))
}

/// Plasma concentration on an interval that contains no dose instant, written
/// as `e * exp(-k_e (t - t_ref)) - a * exp(-k_a (t - t_ref))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlasmaForcing {
    pub t_ref: f64,
    pub e: f64,
    pub a: f64,
    pub k_e: f64,
    pub k_a: f64,
}

impl PlasmaForcing {
    pub fn zero(pk: &PkParams) -> Self {
        PlasmaForcing { t_ref: 0.0, e: 0.0, a: 0.0, k_e: pk.k_e(), k_a: pk.k_a() }
    }

    /// Collects every dose with `time <= t_ref`.
    pub fn at(schedule: &DoseSchedule, t_ref: f64, pk: &PkParams) -> Self {
        let mut out = PlasmaForcing::zero(pk);
        out.t_ref = t_ref;
        for d in schedule.events().iter().take_while(|d| d.time <= t_ref) {
            out.add(d, pk);
        }
        out
    }

    /// Adds a dose given at or before `t_ref`.
    pub fn add(&mut self, d: &DoseEvent, pk: &PkParams) {
        let lag = self.t_ref - d.time;
        match d.route {
            Route::Oral => {
                let c = d.amount * oral_coefficient(pk);
                self.e += c * exp(-self.k_e * lag);
                self.a += c * exp(-self.k_a * lag);
            }
            Route::Intravenous => {
                self.e += d.amount * iv_coefficient(pk) * exp(-self.k_e * lag);
            }
        }
    }

    /// Single-dose response per mg, for a dose given at `t_dose <= t_ref`.
    pub fn unit(route: Route, t_dose: f64, t_ref: f64, pk: &PkParams) -> Self {
        let mut out = PlasmaForcing::zero(pk);
        out.t_ref = t_ref;
        out.add(&DoseEvent { time: t_dose, amount: 1.0, route }, pk);
        out
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let dt = t - self.t_ref;
        let mut v = self.e * exp(-self.k_e * dt);
        if self.a != 0.0 {
            v -= self.a * exp(-self.k_a * dt);
        }
        v
    }
}

/// Derivatives of the intrathyroidal states.
pub fn intrathyroidal_rhs(mmi1: f64, mmi2: f64, plasma: f64, p: &Pdt2Params) -> (f64, f64) {
    (mmi2, -p.a0 * mmi1 - p.a1 * mmi2 + plasma)
}

/// Intrathyroidal concentration.
pub fn intrathyroidal_output(mmi1: f64, mmi2: f64, p: &Pdt2Params) -> f64 {
    p.b0 * mmi1 + p.b1 * mmi2
}

/// Fraction of active TPO at intrathyroidal concentration `mmi_th`.
pub fn tpo_activity(mmi_th: f64, s: &TpoSigmoidParams) -> Result<f64> {
    if !(mmi_th >= 0.0) {
        return Err(Error::Domain("intrathyroidal concentration must be >= 0"));
    }
    Ok(tpo_activity_unchecked(mmi_th, s))
}

#[inline]
pub(crate) fn tpo_activity_unchecked(mmi_th: f64, s: &TpoSigmoidParams) -> f64 {
    let root = powf(mmi_th, 1.0 / s.c2);
    s.c0 / (1.0 + exp(-s.c1 * (-root + s.c3)))
}

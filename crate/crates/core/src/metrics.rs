//! Daily means, time to band and dose statistics of a closed-loop run.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math::floor;
use crate::mpc::SolveInfo;
use crate::sim::SimulationRecord;
use crate::thyroid::{HormoneState, T3, T4, TSH};
use crate::SECONDS_PER_DAY;

pub const TRACKED: [(usize, &str); 3] = [(T4, "T4"), (T3, "T3"), (TSH, "TSH")];

/// Trapezoidal mean of `values` over each whole day `[d, d + 1)` covered by
/// `times` (seconds).
pub fn daily_means(times: &[f64], values: &[f64]) -> Vec<f64> {
    let Some(&t_end) = times.last() else { return Vec::new() };
    let days = floor(t_end / SECONDS_PER_DAY + 1e-9) as usize;
    let mut out = Vec::with_capacity(days);
    for d in 0..days {
        let a = d as f64 * SECONDS_PER_DAY;
        let b = a + SECONDS_PER_DAY;
        let mut acc = 0.0;
        for i in 1..times.len() {
            let (t0, t1) = (times[i - 1], times[i]);
            if t0 >= a && t1 <= b {
                acc += 0.5 * (values[i - 1] + values[i]) * (t1 - t0);
            }
        }
        out.push(acc / SECONDS_PER_DAY);
    }
    out
}

/// First day from which every daily mean stays within `band` (relative) of
/// `target`.
pub fn time_to_band(daily: &[f64], target: f64, band: f64) -> Option<u32> {
    let inside = |v: f64| (v - target).abs() <= band * target.abs();
    let mut first = None;
    for (d, &v) in daily.iter().enumerate().rev() {
        if inside(v) {
            first = Some(d as u32);
        } else {
            break;
        }
    }
    first
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub solves: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub worst_stationarity: f64,
    pub degraded: usize,
}

impl SolverSummary {
    pub fn from_solves(solves: &[SolveInfo]) -> Self {
        SolverSummary {
            solves: solves.len(),
            total_iterations: solves.iter().map(|s| s.iterations).sum(),
            max_iterations: solves.iter().map(|s| s.iterations).max().unwrap_or(0),
            worst_stationarity: solves.iter().map(|s| s.stationarity).fold(0.0, f64::max),
            degraded: solves.iter().filter(|s| !s.converged).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub band: f64,
    pub time_to_band_t4: Option<u32>,
    pub time_to_band_t3: Option<u32>,
    pub time_to_band_tsh: Option<u32>,
    /// All three hormones in band from this day on.
    pub time_to_band: Option<u32>,
    pub initial_dose_mg: f64,
    /// Mean administered dose over the last five days.
    pub maintenance_dose_mg: f64,
    pub total_drug_mg: f64,
    pub solver: Option<SolverSummary>,
}

/// Metrics from a trajectory sampled at `times` and the dosing record.
pub fn compute_metrics_raw(
    times: &[f64],
    states: &[HormoneState],
    sample_times: &[f64],
    commanded: &[f64],
    administered: &[f64],
    setpoint: &HormoneState,
    band: f64,
) -> RunMetrics {
    let mut ttb = [None; 3];
    for (slot, (c, _)) in ttb.iter_mut().zip(TRACKED) {
        let v: Vec<f64> = states.iter().map(|s| s.0[c]).collect();
        *slot = time_to_band(&daily_means(times, &v), setpoint.0[c], band);
    }
    let overall = if ttb.iter().all(|t| t.is_some()) { ttb.iter().map(|t| t.unwrap_or(0)).max() } else { None };
    let t_end = times.last().copied().unwrap_or(0.0);
    let cutoff = t_end - 5.0 * SECONDS_PER_DAY;
    let tail: Vec<f64> =
        sample_times.iter().zip(administered).filter(|(t, _)| **t >= cutoff - 1e-6).map(|(_, a)| *a).collect();
    let maintenance = if tail.is_empty() { 0.0 } else { tail.iter().sum::<f64>() / tail.len() as f64 };
    RunMetrics {
        band,
        time_to_band_t4: ttb[0],
        time_to_band_t3: ttb[1],
        time_to_band_tsh: ttb[2],
        time_to_band: overall,
        initial_dose_mg: commanded.first().copied().unwrap_or(0.0),
        maintenance_dose_mg: maintenance,
        total_drug_mg: administered.iter().fold(0.0, |a, b| a + b),
        solver: None,
    }
}

pub fn compute_metrics(record: &SimulationRecord, setpoint: &HormoneState, band: f64) -> RunMetrics {
    let mut m = compute_metrics_raw(
        &record.times,
        &record.states,
        &record.sample_times,
        &record.commanded,
        &record.administered,
        setpoint,
        band,
    );
    m.solver = Some(SolverSummary::from_solves(&record.solves));
    m
}

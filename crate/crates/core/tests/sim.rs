#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use thyreg_core::bdf::{integrate as bdf_integrate, BdfOptions, OdeSystem};
use thyreg_core::metrics::daily_means;
use thyreg_core::sim::{integrate, measure, rng_from_seed, time_grid, IntegratorConfig, NoiseConfig, TrhMode};
use thyreg_core::steady::solve_steady_state;
use thyreg_core::thyroid::{rhs, HormoneState, N_STATES, TYPICAL};
use thyreg_core::{DoseEvent, DoseSchedule, IodideRegime, Model, ParameterSet, Route, SECONDS_PER_DAY};

fn healthy() -> (Model, HormoneState) {
    let m = ParameterSet::default().model(IodideRegime::Normal);
    let xs = solve_steady_state(&m, 0.0).unwrap().state;
    (m, xs)
}

fn hyper() -> (Model, HormoneState) {
    let mut m = ParameterSet::default().model(IodideRegime::Normal);
    m.thyroid = m.thyroid.with_condition(10.0).unwrap();
    let x = solve_steady_state(&m, 0.0).unwrap().state;
    (m, x)
}

fn oral(time: f64, amount: f64) -> DoseEvent {
    DoseEvent { time, amount, route: Route::Oral }
}

fn tol_estimate(cfg: &IntegratorConfig, x: &HormoneState, i: usize) -> f64 {
    cfg.rtol * x.0[i].abs() + cfg.atol_scale * TYPICAL[i]
}

#[test]
fn frozen_equilibrium_is_preserved() {
    let (m, xs) = healthy();
    let cfg = IntegratorConfig::default();
    let traj =
        integrate(&xs, 0.0, 10.0 * SECONDS_PER_DAY, &DoseSchedule::new(), &m, &cfg, TrhMode::Frozen, &[]).unwrap();
    for i in 0..N_STATES {
        assert!((traj.end.0[i] - xs.0[i]).abs() <= 10.0 * tol_estimate(&cfg, &xs, i), "component {i}");
    }
}

#[test]
fn circadian_daily_means_stay_at_setpoint() {
    let (m, xs) = healthy();
    let cfg = IntegratorConfig::default();
    let grid = time_grid(0.0, 30.0 * SECONDS_PER_DAY, 3600.0);
    let traj =
        integrate(&xs, 0.0, 30.0 * SECONDS_PER_DAY, &DoseSchedule::new(), &m, &cfg, TrhMode::Circadian, &grid).unwrap();
    assert_eq!(traj.times, grid);
    for i in 0..7 {
        let v: Vec<f64> = traj.states.iter().map(|s| s.0[i]).collect();
        for (d, mean) in daily_means(&traj.times, &v).iter().enumerate() {
            assert!((mean - xs.0[i]).abs() <= 5e-3 * xs.0[i], "component {i} day {d}: {mean} vs {}", xs.0[i]);
        }
    }
}

#[test]
fn halving_tolerances_converges() {
    let (m, x0) = hyper();
    let s = DoseSchedule::from_events(vec![oral(0.0, 15.0), oral(SECONDS_PER_DAY, 15.0)]).unwrap();
    let t1 = 2.5 * SECONDS_PER_DAY;
    let coarse = IntegratorConfig::default();
    let fine = IntegratorConfig { rtol: coarse.rtol / 2.0, atol_scale: coarse.atol_scale / 2.0, ..coarse };
    let a = integrate(&x0, 0.0, t1, &s, &m, &coarse, TrhMode::Circadian, &[]).unwrap().end;
    let b = integrate(&x0, 0.0, t1, &s, &m, &fine, TrhMode::Circadian, &[]).unwrap().end;
    // Same weighted RMS norm the step-size controller uses.
    let norm = (0..N_STATES).map(|i| ((a.0[i] - b.0[i]) / tol_estimate(&coarse, &b, i)).powi(2)).sum::<f64>();
    let norm = (norm / N_STATES as f64).sqrt();
    assert!(norm < 1.0, "{norm}");
}

/// The model with plasma MMI evaluated from the whole schedule, so a dose
/// instant is just a kink in the forcing.
struct Unsegmented<'a> {
    m: &'a Model,
    schedule: &'a DoseSchedule,
}

impl OdeSystem<N_STATES> for Unsegmented<'_> {
    fn rhs(&self, t: f64, y: &[f64; N_STATES]) -> [f64; N_STATES] {
        rhs(t, &HormoneState(*y), self.schedule, self.m).0
    }

    fn typical(&self, i: usize) -> f64 {
        TYPICAL[i]
    }
}

#[test]
fn restart_at_dose_matches_straight_through() {
    let (m, x0) = hyper();
    let t_dose = 6.0 * 3600.0;
    let t1 = 2.0 * SECONDS_PER_DAY;
    let s = DoseSchedule::from_events(vec![oral(t_dose, 15.0)]).unwrap();
    let cfg = IntegratorConfig { rtol: 1e-12, atol_scale: 1e-12, max_step: 600.0 };
    let restarted = integrate(&x0, 0.0, t1, &s, &m, &cfg, TrhMode::Circadian, &[]).unwrap().end;
    let sys = Unsegmented { m: &m, schedule: &s };
    let opts = BdfOptions { rtol: cfg.rtol, atol: cfg.atol(), max_step: cfg.max_step, first_step: None };
    let straight = bdf_integrate(&sys, 0.0, &x0.0, &[], t1, &opts, &[], |_, _, _| {}).unwrap().y;
    for i in 0..7 {
        let r = (restarted.0[i] - straight[i]).abs() / straight[i].abs();
        assert!(r < 1e-8, "component {i}: {r:e}");
    }
}

#[test]
fn thyroid_hormones_wash_out_without_synthesis() {
    let (mut m, xs) = healthy();
    m.thyroid.g_t = 0.0;
    m.thyroid.g_t3 = 0.0;
    let grid = time_grid(0.0, 60.0 * SECONDS_PER_DAY, 6.0 * 3600.0);
    let traj = integrate(
        &xs,
        0.0,
        60.0 * SECONDS_PER_DAY,
        &DoseSchedule::new(),
        &m,
        &IntegratorConfig::default(),
        TrhMode::Circadian,
        &grid,
    )
    .unwrap();
    let atol = IntegratorConfig::default().atol();
    for i in 0..4 {
        let v: Vec<f64> = traj.states.iter().map(|s| s.0[i]).collect();
        // Monotone until the value drops into the absolute-tolerance floor.
        let floor = v.iter().position(|x| x.abs() <= atol[i]).unwrap_or(v.len());
        assert!(v[..floor].windows(2).all(|w| w[1] < w[0]), "component {i}");
        assert!(v[floor..].iter().all(|x| x.abs() <= atol[i]), "component {i}");
        assert!(*v.last().unwrap() < 0.05 * v[0], "component {i}");
    }
}

#[test]
fn integration_rejects_empty_interval() {
    let (m, xs) = healthy();
    assert!(integrate(&xs, 10.0, 10.0, &DoseSchedule::new(), &m, &IntegratorConfig::default(), TrhMode::Frozen, &[])
        .is_err());
}

#[test]
fn zero_noise_is_identity() {
    let (_, xs) = healthy();
    let mut rng = rng_from_seed(3);
    let none = NoiseConfig { std: 0.0, truncation: 0.3 };
    assert_eq!(measure(&xs, &none, &mut rng), xs);
}

#[test]
fn noise_standard_deviation() {
    let x = HormoneState([1.0; N_STATES]);
    let noise = NoiseConfig::default();
    let mut rng = rng_from_seed(11);
    let mut samples = Vec::with_capacity(100_000);
    while samples.len() < 100_000 {
        let y = measure(&x, &noise, &mut rng);
        samples.extend(y.0.iter().map(|v| v - 1.0));
    }
    samples.truncate(100_000);
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((sd - 0.05).abs() < 0.02 * 0.05, "{sd}");
    assert!(mean.abs() < 5.0 * 0.05 / n.sqrt());
}

fn positive_state() -> impl Strategy<Value = [f64; N_STATES]> {
    proptest::collection::vec(1e-12..10.0f64, N_STATES).prop_map(|v| std::array::from_fn(|i| v[i]))
}

proptest! {
    #[test]
    fn measurement_within_truncation(x in positive_state(), seed in any::<u64>(), std in 0.0..0.5f64) {
        let noise = NoiseConfig { std, truncation: 0.3 };
        let mut a = rng_from_seed(seed);
        let mut b = rng_from_seed(seed);
        let y = measure(&HormoneState(x), &noise, &mut a);
        prop_assert_eq!(y, measure(&HormoneState(x), &noise, &mut b));
        for i in 0..N_STATES {
            prop_assert!(y.0[i] > 0.0);
            prop_assert!((y.0[i] / x[i] - 1.0).abs() <= 0.3 + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn doses_never_drive_hormones_negative(
        amounts in proptest::collection::vec(0.0..40.0f64, 1..5),
        iv in any::<bool>(),
    ) {
        let (m, x0) = hyper();
        let route = if iv { Route::Intravenous } else { Route::Oral };
        let events = amounts.iter().enumerate().map(|(k, &amount)| DoseEvent { time: k as f64 * 8.0 * 3600.0, amount, route }).collect();
        let s = DoseSchedule::from_events(events).unwrap();
        let grid = time_grid(0.0, 3.0 * SECONDS_PER_DAY, 3600.0);
        let traj = integrate(&x0, 0.0, 3.0 * SECONDS_PER_DAY, &s, &m, &IntegratorConfig::default(), TrhMode::Circadian, &grid).unwrap();
        for x in &traj.states {
            prop_assert!(x.0.iter().take(7).all(|v| *v >= 0.0));
        }
    }
}

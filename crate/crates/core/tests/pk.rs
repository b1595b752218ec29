use proptest::prelude::*;
use thyreg_core::pk::{
    intrathyroidal_output, intrathyroidal_rhs, iv_plasma_single, oral_plasma_single, plasma_from_schedule,
    plasma_single, tpo_activity,
};
use thyreg_core::{DoseEvent, DoseSchedule, Pdt2Params, PkParams, Route, TpoSigmoidParams, SECONDS_PER_HOUR};

fn oral(time: f64, amount: f64) -> DoseEvent {
    DoseEvent { time, amount, route: Route::Oral }
}

fn mg_per_l(mol_per_l: f64, pk: &PkParams) -> f64 {
    mol_per_l * pk.molar_mass_g_per_mol * 1000.0
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Gut and central amounts (mg) of the one-compartment model, RK4 in hours.
fn gut_plasma_step(g: f64, c: f64, h: f64, pk: &PkParams) -> (f64, f64) {
    let f = |g: f64, c: f64| (-pk.k_a_per_hour * g, pk.f * pk.k_a_per_hour * g - pk.k_e_per_hour * c);
    let (k1g, k1c) = f(g, c);
    let (k2g, k2c) = f(g + 0.5 * h * k1g, c + 0.5 * h * k1c);
    let (k3g, k3c) = f(g + 0.5 * h * k2g, c + 0.5 * h * k2c);
    let (k4g, k4c) = f(g + h * k3g, c + h * k3c);
    (g + h / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g), c + h / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c))
}

/// Golden-section maximum of a unimodal function on `[a, b]`.
fn argmax(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = b - r * (b - a);
        let x2 = a + r * (b - a);
        if f(x1) < f(x2) {
            a = x1;
        } else {
            b = x2;
        }
    }
    0.5 * (a + b)
}

#[test]
fn bateman_peak_matches_ode_oracle() {
    let pk = PkParams::default();
    let h = 1e-5;
    let (mut g, mut c) = (15.0, 0.0);
    let mut best = (0.0, 0.0);
    let mut i = 0;
    while (i as f64) * h < 2.0 {
        let t = i as f64 * h;
        if c / pk.volume_l > best.1 {
            best = (t, c / pk.volume_l);
        }
        (g, c) = gut_plasma_step(g, c, h, &pk);
        i += 1;
    }
    let (t_ode, c_ode) = best;

    let dose = oral(0.0, 15.0);
    let curve = |t_h: f64| oral_plasma_single(&dose, t_h * SECONDS_PER_HOUR, &pk);
    let t_impl = argmax(curve, 0.0, 2.0);
    let c_impl = mg_per_l(curve(t_impl), &pk);

    assert!(rel(t_impl, 0.3774) < 1e-4, "peak time {t_impl} h");
    assert!(rel(c_impl, 0.4516) < 1e-4, "peak value {c_impl} mg/L");
    assert!(rel(t_impl, t_ode) < 1e-4, "ode oracle peak time {t_ode} h");
    assert!(rel(c_impl, c_ode) < 1e-4, "ode oracle peak value {c_ode} mg/L");
    assert!(rel(curve(t_impl), 3.955e-6) < 1e-3);
}

#[test]
fn oral_response_vanishes_after_100_hours() {
    let pk = PkParams::default();
    let dose = oral(0.0, 15.0);
    let peak = oral_plasma_single(&dose, 0.3774 * SECONDS_PER_HOUR, &pk);
    assert_eq!(oral_plasma_single(&dose, 0.0, &pk), 0.0);
    let tail = oral_plasma_single(&dose, 100.0 * SECONDS_PER_HOUR, &pk);
    // Bound from the slower exponential alone.
    let amplitude = 15.0 * pk.f * pk.k_a_per_hour / (pk.volume_l * (pk.k_a_per_hour - pk.k_e_per_hour));
    let bound = amplitude * (-pk.k_e_per_hour * 100.0).exp() / mg_per_l(peak, &pk);
    assert!(tail / peak <= bound * (1.0 + 1e-12));
    assert!(tail / peak < 1e-8);
}

#[test]
fn iv_bolus_initial_concentration() {
    let pk = PkParams::default();
    let dose = DoseEvent { time: 3600.0, amount: 40.0, route: Route::Intravenous };
    let c0 = iv_plasma_single(&dose, 3600.0, &pk);
    assert!(rel(mg_per_l(c0, &pk), 40.0 / 28.8) < 1e-12);
    assert!(rel(c0, 1.2165e-5) < 1e-4);
    assert_eq!(iv_plasma_single(&dose, 3599.0, &pk), 0.0);
    assert!(iv_plasma_single(&dose, 1e9, &pk) < 1e-300);
    let zero = DoseEvent { amount: 0.0, ..dose };
    assert_eq!(iv_plasma_single(&zero, 4000.0, &pk), 0.0);
}

#[test]
fn mg_to_mol_quotients() {
    let pk = PkParams::default();
    assert_eq!(pk.mg_to_mol(0.0).unwrap(), 0.0);
    assert!(rel(pk.mg_to_mol(15.0).unwrap(), 1.3138e-4) < 1e-4);
    assert!(rel(pk.mg_to_mol(40.0).unwrap(), 3.5035e-4) < 1e-4);
    assert!(pk.mg_to_mol(-1.0).is_err());
}

#[test]
fn five_daily_doses_match_impulsive_ode_oracle() {
    let pk = PkParams::default();
    let schedule = DoseSchedule::from_events((0..5).map(|d| oral(d as f64 * 86_400.0, 15.0)).collect()).unwrap();
    let t_end_h: f64 = 4.5 * 24.0;
    let h: f64 = 1e-3;
    let steps_per_day = (24.0 / h) as usize;
    let total = (t_end_h / h).round() as usize;
    let (mut g, mut c) = (0.0, 0.0);
    for i in 0..total {
        if i % steps_per_day == 0 && i / steps_per_day < 5 {
            g += 15.0;
        }
        (g, c) = gut_plasma_step(g, c, h, &pk);
    }
    let oracle = c / pk.volume_l;
    let got = mg_per_l(plasma_from_schedule(&schedule, t_end_h * SECONDS_PER_HOUR, &pk), &pk);
    assert!(rel(got, oracle) < 1e-6, "{got} vs {oracle}");
}

#[test]
fn two_doses_sum_at_25_hours() {
    let pk = PkParams::default();
    let a = oral(0.0, 15.0);
    let b = oral(24.0 * SECONDS_PER_HOUR, 15.0);
    let t = 25.0 * SECONDS_PER_HOUR;
    let s = DoseSchedule::from_events(vec![a, b]).unwrap();
    assert_eq!(plasma_from_schedule(&s, t, &pk), oral_plasma_single(&a, t, &pk) + oral_plasma_single(&b, t, &pk));
    assert_eq!(plasma_from_schedule(&DoseSchedule::new(), t, &pk), 0.0);
}

/// RK4 on the transfer-function states with constant plasma input.
fn pdt2_long_run(u: f64, p: &Pdt2Params, t_end: f64, h: f64) -> (f64, f64) {
    let (mut x1, mut x2) = (0.0, 0.0);
    let n = (t_end / h) as usize;
    for _ in 0..n {
        let (a1, a2) = intrathyroidal_rhs(x1, x2, u, p);
        let (b1, b2) = intrathyroidal_rhs(x1 + 0.5 * h * a1, x2 + 0.5 * h * a2, u, p);
        let (c1, c2) = intrathyroidal_rhs(x1 + 0.5 * h * b1, x2 + 0.5 * h * b2, u, p);
        let (d1, d2) = intrathyroidal_rhs(x1 + h * c1, x2 + h * c2, u, p);
        x1 += h / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + d1);
        x2 += h / 6.0 * (a2 + 2.0 * b2 + 2.0 * c2 + d2);
    }
    (x1, x2)
}

#[test]
fn pdt2_dc_gain() {
    let p = Pdt2Params::default();
    let u = 3e-6;
    let (x1, x2) = pdt2_long_run(u, &p, 1e6, 10.0);
    let out = intrathyroidal_output(x1, x2, &p);
    assert!(rel(out, 14.8 * u) < 1e-3, "{out}");
    assert!(rel(x1, u / p.a0) < 1e-3);
    assert!(rel(p.dc_gain(), 14.8) < 1e-12);
}

#[test]
fn pdt2_rhs_and_output_anchors() {
    let p = Pdt2Params::default();
    assert_eq!(intrathyroidal_rhs(0.0, 0.0, 0.0, &p), (0.0, 0.0));
    let u = 2e-6;
    assert_eq!(intrathyroidal_rhs(u / p.a0, 0.0, u, &p), (0.0, 0.0));
    assert_eq!(intrathyroidal_output(0.0, 0.0, &p), 0.0);
    assert_eq!(intrathyroidal_output(1.0, 0.0, &p), 37e-9);
    assert_eq!(intrathyroidal_output(0.0, 1.0, &p), 690.3e-6);
}

#[test]
fn pdt2_poles_are_stable() {
    let p = Pdt2Params::default();
    let disc = p.a1 * p.a1 - 4.0 * p.a0;
    let max_real = if disc >= 0.0 { (-p.a1 + disc.sqrt()) / 2.0 } else { -p.a1 / 2.0 };
    assert!(max_real < 0.0);
}

#[test]
fn sigmoid_anchors() {
    let n = tpo_activity(0.0, &TpoSigmoidParams::normal()).unwrap();
    let oracle = 0.9 / (1.0 + (-(84.1e3 * 80.5e-6_f64)).exp());
    assert!((n - 0.8990).abs() < 1e-3, "{n}");
    assert!(rel(n, oracle) < 1e-14);
    let h = tpo_activity(0.0, &TpoSigmoidParams::high()).unwrap();
    assert!((h - 1.0).abs() < 1e-6, "{h}");
    assert!(tpo_activity(-1e-9, &TpoSigmoidParams::normal()).is_err());
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

#[test]
fn sigmoid_strictly_decreasing_on_log_grid() {
    let normal = TpoSigmoidParams::normal();
    let v: Vec<f64> = log_grid(1e-9, 1e-3, 100).iter().map(|&m| tpo_activity(m, &normal).unwrap()).collect();
    assert!(v.windows(2).all(|w| w[1] < w[0]));

    // The high-iodide curve is flat to machine precision outside a narrow
    // window around its half-activity point.
    let high = TpoSigmoidParams::high();
    let v: Vec<f64> = log_grid(8.8e-6, 1.0e-5, 100).iter().map(|&m| tpo_activity(m, &high).unwrap()).collect();
    assert!(v.windows(2).all(|w| w[1] < w[0]));
    let wide: Vec<f64> = log_grid(1e-12, 1e-2, 100).iter().map(|&m| tpo_activity(m, &high).unwrap()).collect();
    assert!(wide.windows(2).all(|w| w[1] <= w[0]));
    assert!(*wide.last().unwrap() < 1e-12);
}

fn schedule_strategy() -> impl Strategy<Value = Vec<DoseEvent>> {
    proptest::collection::btree_map(0u32..2000, (0.0..40.0f64, any::<bool>()), 0..12).prop_map(|m| {
        m.into_iter()
            .map(|(slot, (amount, iv))| DoseEvent {
                time: slot as f64 * 1800.0,
                amount,
                route: if iv { Route::Intravenous } else { Route::Oral },
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn superposition(events in schedule_strategy(), split in any::<u64>(), t in 0.0..4e6f64) {
        let pk = PkParams::default();
        let (a, b): (Vec<_>, Vec<_>) = events.iter().enumerate().partition(|(i, _)| split >> (i % 64) & 1 == 1);
        let s1 = DoseSchedule::from_events(a.into_iter().map(|(_, e)| *e).collect()).unwrap();
        let s2 = DoseSchedule::from_events(b.into_iter().map(|(_, e)| *e).collect()).unwrap();
        let union = s1.merged(&s2).unwrap();
        let whole = plasma_from_schedule(&union, t, &pk);
        let parts = plasma_from_schedule(&s1, t, &pk) + plasma_from_schedule(&s2, t, &pk);
        let singles: f64 = events.iter().map(|e| plasma_single(e, t, &pk)).sum();
        let scale = whole.abs().max(1e-300);
        prop_assert!((whole - parts).abs() <= 1e-12 * scale);
        prop_assert!((whole - singles).abs() <= 1e-12 * scale);
    }

    #[test]
    fn plasma_nonnegative_and_linear(events in schedule_strategy(), t in -1e5..4e6f64) {
        let pk = PkParams::default();
        let s = DoseSchedule::from_events(events.clone()).unwrap();
        let doubled = DoseSchedule::from_events(events.iter().map(|e| DoseEvent { amount: 2.0 * e.amount, ..*e }).collect()).unwrap();
        let v = plasma_from_schedule(&s, t, &pk);
        prop_assert!(v >= 0.0);
        let v2 = plasma_from_schedule(&doubled, t, &pk);
        prop_assert!((v2 - 2.0 * v).abs() <= 1e-12 * v2.abs().max(1e-300));
    }

    #[test]
    fn pdt2_decays_without_input(x1 in -1e3..1e3f64, x2 in -1e-1..1e-1f64) {
        let p = Pdt2Params::default();
        let (mut a, mut b) = (x1, x2);
        let h = 50.0;
        for _ in 0..20_000 {
            let (d1, d2) = intrathyroidal_rhs(a, b, 0.0, &p);
            let (e1, e2) = intrathyroidal_rhs(a + 0.5 * h * d1, b + 0.5 * h * d2, 0.0, &p);
            let (f1, f2) = intrathyroidal_rhs(a + 0.5 * h * e1, b + 0.5 * h * e2, 0.0, &p);
            let (g1, g2) = intrathyroidal_rhs(a + h * f1, b + h * f2, 0.0, &p);
            a += h / 6.0 * (d1 + 2.0 * e1 + 2.0 * f1 + g1);
            b += h / 6.0 * (d2 + 2.0 * e2 + 2.0 * f2 + g2);
        }
        prop_assert!(a.abs() <= 1e-6 * x1.abs().max(1.0) && b.abs() <= 1e-6 * x2.abs().max(1e-4));
    }
}

//! State vector, algebraic relations and right-hand side of the
//! pituitary-thyroid loop.

use core::f64::consts::PI;
use core::ops::{Index, IndexMut};
use serde::{Deserialize, Serialize};

use crate::math::cos;
use crate::params::{Model, Pdt2Params, ThyroidParams, TpoSigmoidParams};
use crate::pk::{
    intrathyroidal_output, intrathyroidal_rhs, plasma_from_schedule, tpo_activity_unchecked, DoseSchedule,
};
use crate::SECONDS_PER_DAY;

pub const N_STATES: usize = 9;
pub const T4TH: usize = 0;
pub const T4: usize = 1;
pub const T3: usize = 2;
pub const T3C: usize = 3;
pub const TSH: usize = 4;
pub const TSHZ: usize = 5;
pub const I_TG: usize = 6;
pub const MMI1: usize = 7;
pub const MMI2: usize = 8;

pub const STATE_NAMES: [&str; N_STATES] = ["T4th", "T4", "T3", "T3c", "TSH", "TSHz", "I_Tg", "MMI1", "MMI2"];

/// Typical magnitudes of each component, used for tolerances and scaling.
pub const TYPICAL: [f64; N_STATES] = [1e-12, 1e-7, 1e-9, 1e-8, 1.0, 1.0, 0.1, 1e3, 1e-1];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HormoneState(pub [f64; N_STATES]);

impl HormoneState {
    pub fn t4th(&self) -> f64 {
        self.0[T4TH]
    }
    pub fn t4(&self) -> f64 {
        self.0[T4]
    }
    pub fn t3(&self) -> f64 {
        self.0[T3]
    }
    pub fn t3c(&self) -> f64 {
        self.0[T3C]
    }
    pub fn tsh(&self) -> f64 {
        self.0[TSH]
    }
    pub fn tshz(&self) -> f64 {
        self.0[TSHZ]
    }
    pub fn i_tg(&self) -> f64 {
        self.0[I_TG]
    }
    pub fn mmi1(&self) -> f64 {
        self.0[MMI1]
    }
    pub fn mmi2(&self) -> f64 {
        self.0[MMI2]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Index<usize> for HormoneState {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for HormoneState {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgebraicOutputs {
    pub ft4: f64,
    pub ft3: f64,
    pub t3n: f64,
    pub tpo: f64,
    pub tpo_a: f64,
    pub ssf: f64,
    pub tg_eff: f64,
    pub scale: f64,
    pub trh_t: f64,
    pub mmi_th: f64,
}

/// Circadian TRH drive.
pub fn trh_forcing(t: f64, p: &ThyroidParams) -> f64 {
    p.trh_base * (1.0 + 0.3 * cos(2.0 * PI * (t / SECONDS_PER_DAY - 5.0 / 24.0)))
}

pub fn free_t4(t4: f64, p: &ThyroidParams) -> f64 {
    t4 / (1.0 + p.k_41 * p.tbg + p.k_42 * p.tbpa)
}

pub fn free_t3(t3: f64, p: &ThyroidParams) -> f64 {
    t3 / (1.0 + p.k_30 * p.tbg)
}

pub fn nuclear_t3(t3c: f64, p: &ThyroidParams) -> f64 {
    t3c / (1.0 + p.k_31 * p.ibs)
}

pub fn ssf(tsh: f64, p: &ThyroidParams) -> f64 {
    (100.0 * tsh - p.r * tsh) / (178.2 + tsh)
}

pub fn tg_eff(i_tg: f64, p: &ThyroidParams) -> f64 {
    1.0 - i_tg / p.t_g
}

pub fn volume_scale(p: &ThyroidParams) -> f64 {
    let b = 1.97 + 0.21 * p.weight + 0.06 * p.age;
    (p.v_measured - 0.17 * b) / b
}

pub fn tpo_concentration(ssf: f64, p: &ThyroidParams) -> f64 {
    p.v_tpo_ssf * ssf / (p.k_tpo_ssf + ssf) * (p.v_colloid_nom / p.v_colloid) * p.alpha_tpo_tg / (p.k_tpo_tg + p.t_g)
        * volume_scale(p)
}

/// Intrathyroidal concentration clamped at zero before the fractional power.
fn activity(mmi1: f64, mmi2: f64, pdt2: &Pdt2Params, s: &TpoSigmoidParams) -> (f64, f64) {
    let mmi_th = intrathyroidal_output(mmi1, mmi2, pdt2);
    (mmi_th, tpo_activity_unchecked(mmi_th.max(0.0), s))
}

pub fn algebraic_outputs(t: f64, x: &HormoneState, m: &Model) -> AlgebraicOutputs {
    let p = &m.thyroid;
    let s = ssf(x.tsh(), p);
    let (mmi_th, tpo_a) = activity(x.mmi1(), x.mmi2(), &m.pdt2, &m.tpo);
    AlgebraicOutputs {
        ft4: free_t4(x.t4(), p),
        ft3: free_t3(x.t3(), p),
        t3n: nuclear_t3(x.t3c(), p),
        tpo: tpo_concentration(s, p),
        tpo_a,
        ssf: s,
        tg_eff: tg_eff(x.i_tg(), p),
        scale: volume_scale(p),
        trh_t: trh_forcing(t, p),
        mmi_th,
    }
}

/// Time derivatives for given plasma MMI (mol/L) and TRH values.
pub fn derivatives(x: &[f64; N_STATES], plasma: f64, trh: f64, m: &Model) -> [f64; N_STATES] {
    let p = &m.thyroid;
    let [t4th, t4, t3, t3c, tsh, tshz, i_tg, mmi1, mmi2] = *x;

    let ft4 = free_t4(t4, p);
    let t3n = nuclear_t3(t3c, p);
    let phi = t4th * tsh / (tsh + p.k_dio);
    let d1_th = p.g_d1 * phi / (phi + p.k_m1);
    let d2_th = p.g_d2 * phi / (phi + p.k_m2);
    let export = p.g_mct8 * t4th / (p.k_mct8 + t4th);
    let synthesis = p.g_t * tsh / (tsh + p.d_t) * p.k_i * i_tg;

    let d_t4th = p.alpha_th * (synthesis - export - d1_th - d2_th) - p.beta_th * t4th;
    let d_t4 = p.alpha_t * export - p.beta_t * t4;
    let d_t3 = p.alpha_31
        * (p.g_d1 * ft4 / (ft4 + p.k_m1)
            + p.g_d2 * ft4 / (ft4 + p.k_m2)
            + d1_th
            + d2_th
            + p.g_t3 * tsh / (p.d_t + tsh))
        - p.beta_31 * t3;
    let d_t3c = p.alpha_32 * p.g_d2 * ft4 / (ft4 + p.k_m2) - p.beta_32 * t3c;

    let drive = p.g_h * trh
        / (trh + p.d_h)
        / ((1.0 + p.s_s * tshz / (tshz + p.d_s)) * (1.0 + p.l_s * p.g_r * t3n / (t3n + p.d_r)));
    let d_tsh = p.alpha_s * drive - p.beta_s * tsh;
    let d_tshz = p.alpha_s2 * drive - p.beta_s2 * tshz;

    let s = ssf(tsh, p);
    let tpo = tpo_concentration(s, p);
    let (_, tpo_a) = activity(mmi1, mmi2, &m.pdt2, &m.tpo);
    let geff = tg_eff(i_tg, p);
    let organification = p.tau_tpo_turnover * tpo * tpo_a * p.v_org_h2o2 * p.h2o2 / (p.k_org_h2o2 + p.h2o2)
        * p.v_org_ic
        * p.i_c
        * p.v_org_tg_eff
        * geff
        / ((p.k_org_ic + p.i_c) * (p.k_org_tg_eff + geff));
    let endocytosis = p.v_apical_ssf * s * p.a_apical * p.alpha_endo * i_tg / ((p.k_apical_ssf + s) * p.a_apical_nom);
    let d_itg = organification - endocytosis;

    let (d_mmi1, d_mmi2) = intrathyroidal_rhs(mmi1, mmi2, plasma, &m.pdt2);

    [d_t4th, d_t4, d_t3, d_t3c, d_tsh, d_tshz, d_itg, d_mmi1, d_mmi2]
}

/// Time derivatives with plasma MMI from `schedule` and circadian TRH.
pub fn rhs(t: f64, x: &HormoneState, schedule: &DoseSchedule, m: &Model) -> HormoneState {
    let plasma = plasma_from_schedule(schedule, t, &m.pk);
    HormoneState(derivatives(&x.0, plasma, trh_forcing(t, &m.thyroid), m))
}

//! Constants for the pharmacokinetics, the intrathyroidal compartment, the TPO
//! sigmoid and the pituitary-thyroid loop.

use alloc::string::ToString;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SECONDS_PER_HOUR;

fn invalid(name: &str, reason: &'static str) -> Error {
    Error::InvalidParameter { name: name.to_string(), reason }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, "must be finite and > 0"))
    }
}

/// One-compartment oral absorption / elimination constants.
///
/// Rates are stored per hour, the way they are usually quoted; the model runs
/// in seconds, see [`PkParams::k_e`] and [`PkParams::k_a`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PkParams {
    pub f: f64,
    pub volume_l: f64,
    pub k_e_per_hour: f64,
    pub k_a_per_hour: f64,
    pub molar_mass_g_per_mol: f64,
}

impl Default for PkParams {
    fn default() -> Self {
        PkParams { f: 0.93, volume_l: 28.8, k_e_per_hour: 0.1857, k_a_per_hour: 11.0, molar_mass_g_per_mol: 114.17 }
    }
}

impl PkParams {
    /// Elimination rate in 1/s.
    pub fn k_e(&self) -> f64 {
        self.k_e_per_hour / SECONDS_PER_HOUR
    }

    /// Absorption rate in 1/s.
    pub fn k_a(&self) -> f64 {
        self.k_a_per_hour / SECONDS_PER_HOUR
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f > 0.0 && self.f <= 1.0) {
            return Err(invalid("f", "must lie in (0, 1]"));
        }
        positive("volume_l", self.volume_l)?;
        positive("k_e_per_hour", self.k_e_per_hour)?;
        positive("k_a_per_hour", self.k_a_per_hour)?;
        positive("molar_mass_g_per_mol", self.molar_mass_g_per_mol)?;
        if self.k_a_per_hour <= self.k_e_per_hour {
            return Err(invalid("k_a_per_hour", "must exceed k_e_per_hour"));
        }
        Ok(())
    }

    /// Converts a dose in mg to mol.
    pub fn mg_to_mol(&self, dose_mg: f64) -> Result<f64> {
        if !(dose_mg >= 0.0) {
            return Err(Error::Domain("dose must be >= 0 mg"));
        }
        Ok(dose_mg / 1000.0 / self.molar_mass_g_per_mol)
    }
}

/// Coefficients of `(b1 s + b0) / (s^2 + a1 s + a0)`, time base seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pdt2Params {
    pub b1: f64,
    pub b0: f64,
    pub a1: f64,
    pub a0: f64,
}

impl Default for Pdt2Params {
    fn default() -> Self {
        Pdt2Params { b1: 690.3e-6, b0: 37e-9, a1: 92.2e-6, a0: 2.5e-9 }
    }
}

impl Pdt2Params {
    pub fn dc_gain(&self) -> f64 {
        self.b0 / self.a0
    }

    pub fn validate(&self) -> Result<()> {
        positive("a1", self.a1)?;
        positive("a0", self.a0)?;
        positive("b0", self.b0)?;
        if !self.b1.is_finite() {
            return Err(invalid("b1", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IodideRegime {
    Normal,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpoSigmoidParams {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub regime: IodideRegime,
}

impl TpoSigmoidParams {
    pub fn normal() -> Self {
        TpoSigmoidParams { c0: 0.9, c1: 84.1e3, c2: 1.3, c3: 80.5e-6, regime: IodideRegime::Normal }
    }

    pub fn high() -> Self {
        TpoSigmoidParams { c0: 1.0, c1: 175.8e3, c2: 5.0, c3: 97.6e-3, regime: IodideRegime::High }
    }

    pub fn for_regime(regime: IodideRegime) -> Self {
        match regime {
            IodideRegime::Normal => Self::normal(),
            IodideRegime::High => Self::high(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.c0 <= 1.0) {
            return Err(invalid("c0", "must lie in (0, 1]"));
        }
        positive("c1", self.c1)?;
        positive("c2", self.c2)?;
        positive("c3", self.c3)
    }
}

macro_rules! thyroid_params {
    ($($field:ident = $default:expr),* $(,)?) => {
        /// Constants of the pituitary-thyroid feedback loop.
        #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
        pub struct ThyroidParams {
            $(pub $field: f64,)*
        }

        impl Default for ThyroidParams {
            fn default() -> Self {
                ThyroidParams { $($field: $default,)* }
            }
        }

        impl ThyroidParams {
            /// Field names in declaration order.
            pub const NAMES: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn get(&self, name: &str) -> Option<f64> {
                match name {
                    $(stringify!($field) => Some(self.$field),)*
                    _ => None,
                }
            }

            pub fn get_mut(&mut self, name: &str) -> Option<&mut f64> {
                match name {
                    $(stringify!($field) => Some(&mut self.$field),)*
                    _ => None,
                }
            }
        }
    };
}

thyroid_params! {
    alpha_th = 66.7,
    beta_th = 1e-6,
    g_t = 2.56e-11,
    d_t = 50.0,
    k_i = 10.0,
    g_mct8 = 5e-10,
    k_mct8 = 1e-9,
    g_d1 = 2.8e-8,
    k_m1 = 5e-7,
    g_d2 = 4.3e-15,
    k_m2 = 1e-9,
    k_dio = 0.1,
    alpha_t = 0.1,
    beta_t = 1.1e-6,
    alpha_31 = 0.026,
    beta_31 = 8e-6,
    g_t3 = 2e-13,
    alpha_32 = 1.3e5,
    beta_32 = 8.3e-4,
    alpha_s = 0.4,
    alpha_s2 = 2.6e5,
    g_h = 3.0e6,
    trh_base = 6.9e-9,
    d_h = 4.7e-6,
    s_s = 4.0,
    d_s = 0.1,
    l_s = 1.68e6,
    g_r = 1.0,
    d_r = 1e-12,
    beta_s = 2.3e-4,
    beta_s2 = 140.0,
    k_30 = 2e9,
    tbg = 3e-7,
    k_41 = 2e10,
    k_42 = 2e8,
    tbpa = 4.5e-6,
    k_31 = 2e9,
    ibs = 8e-6,
    tau_tpo_turnover = 0.0346,
    v_org_h2o2 = 1.0,
    k_org_h2o2 = 1.0,
    h2o2 = 1.0,
    v_org_ic = 1.0,
    k_org_ic = 1.0,
    i_c = 1.0,
    v_org_tg_eff = 1.0,
    k_org_tg_eff = 0.01,
    v_apical_ssf = 1.0,
    k_apical_ssf = 100.0,
    a_apical = 1.0,
    a_apical_nom = 1.0,
    alpha_endo = 0.007,
    v_tpo_ssf = 1.0,
    k_tpo_ssf = 100.0,
    v_colloid = 1.0,
    v_colloid_nom = 1.0,
    alpha_tpo_tg = 1.0,
    k_tpo_tg = 1.0,
    t_g = 10.0,
    r = 50.0,
    v_measured = 22.3119,
    weight = 70.0,
    age = 40.0,
}

impl ThyroidParams {
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match self.get_mut(name) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(Error::UnknownParameter(name.to_string())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for name in Self::NAMES {
            positive(name, self.get(name).unwrap_or(f64::NAN))?;
        }
        if self.r >= 100.0 {
            return Err(invalid("r", "must be < 100"));
        }
        Ok(())
    }

    /// Copy with `g_t` scaled by `multiplier`.
    pub fn with_condition(&self, multiplier: f64) -> Result<Self> {
        if !(multiplier >= 1.0) || !multiplier.is_finite() {
            return Err(Error::Domain("G_T multiplier must be >= 1"));
        }
        let mut p = *self;
        p.g_t *= multiplier;
        Ok(p)
    }

    /// Copy with each named constant scaled by `1 + rel`.
    pub fn with_mismatch(&self, mismatch: &[(&str, f64)]) -> Result<Self> {
        let mut p = *self;
        for (name, rel) in mismatch {
            let slot = p.get_mut(name).ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
            *slot *= 1.0 + rel;
        }
        Ok(p)
    }
}

/// Everything the right-hand side needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub pk: PkParams,
    pub pdt2: Pdt2Params,
    pub tpo: TpoSigmoidParams,
    pub thyroid: ThyroidParams,
}

impl Default for Model {
    fn default() -> Self {
        Model {
            pk: PkParams::default(),
            pdt2: Pdt2Params::default(),
            tpo: TpoSigmoidParams::normal(),
            thyroid: ThyroidParams::default(),
        }
    }
}

impl Model {
    pub fn validate(&self) -> Result<()> {
        self.pk.validate()?;
        self.pdt2.validate()?;
        self.tpo.validate()?;
        self.thyroid.validate()
    }
}

/// Every constant known to the configuration, with both sigmoid regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub pk: PkParams,
    pub pdt2: Pdt2Params,
    pub tpo_normal: TpoSigmoidParams,
    pub tpo_high: TpoSigmoidParams,
    pub thyroid: ThyroidParams,
}

impl Default for ParameterSet {
    fn default() -> Self {
        ParameterSet {
            pk: PkParams::default(),
            pdt2: Pdt2Params::default(),
            tpo_normal: TpoSigmoidParams::normal(),
            tpo_high: TpoSigmoidParams::high(),
            thyroid: ThyroidParams::default(),
        }
    }
}

impl ParameterSet {
    pub fn validate(&self) -> Result<()> {
        self.pk.validate()?;
        self.pdt2.validate()?;
        self.tpo_normal.validate()?;
        self.tpo_high.validate()?;
        if self.tpo_normal.regime != IodideRegime::Normal || self.tpo_high.regime != IodideRegime::High {
            return Err(invalid("regime", "sigmoid records carry the wrong regime tag"));
        }
        self.thyroid.validate()
    }

    pub fn model(&self, regime: IodideRegime) -> Model {
        Model {
            pk: self.pk,
            pdt2: self.pdt2,
            tpo: match regime {
                IodideRegime::Normal => self.tpo_normal,
                IodideRegime::High => self.tpo_high,
            },
            thyroid: self.thyroid,
        }
    }
}

//! TOML configuration: model constants with provenance, controller and
//! integrator settings, scenario presets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thyreg_core::mpc::SolverSettings;
use thyreg_core::scenario::{ControllerSettings, Mode, ScenarioConfig, ScenarioKind};
use thyreg_core::sim::{IntegratorConfig, NoiseConfig};
use thyreg_core::{IodideRegime, ParameterSet, Pdt2Params, PkParams, Route, ThyroidParams, TpoSigmoidParams};
use thyreg_core::{SECONDS_PER_DAY, SECONDS_PER_HOUR};

/// The configuration shipped with the binary.
pub const DEFAULT_TOML: &str = include_str!("../config/default.toml");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid constant: {0}")]
    Invalid(#[from] thyreg_core::Error),
    #[error("bad override `{0}`: {1}")]
    Override(String, String),
}

/// A constant and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub value: f64,
    pub provenance: String,
}

type Section = BTreeMap<String, Entry>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TpoSections {
    pub normal: Section,
    pub high: Section,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub rtol: f64,
    pub atol_scale: f64,
    pub max_step_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub q_t4: f64,
    pub q_t3: f64,
    pub q_tsh: f64,
    pub r1: f64,
    pub r2: f64,
    pub quad_step_s: f64,
    pub cost_time_unit_s: f64,
    pub band: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbances {
    pub noise_std: f64,
    pub noise_truncation: f64,
    pub missed_days: Vec<u32>,
    pub mismatch: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub gt_multiplier: f64,
    pub route: Route,
    pub regime: IodideRegime,
    pub delta_h: f64,
    pub u_max_mg: f64,
    pub horizon_days: f64,
    pub duration_days: f64,
    pub realistic: Disturbances,
}

/// Mirror of the file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub pk: Section,
    pub pdt2: Section,
    pub tpo: TpoSections,
    pub thyroid: Section,
    pub integrator: IntegratorSection,
    pub controller: ControllerSection,
    pub scenario: BTreeMap<String, ScenarioSection>,
}

/// Resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub params: ParameterSet,
    pub settings: ControllerSettings,
    pub file: ConfigFile,
}

fn pk_slots(p: &mut PkParams) -> [(&'static str, &mut f64); 5] {
    [
        ("f", &mut p.f),
        ("volume_l", &mut p.volume_l),
        ("k_e_per_hour", &mut p.k_e_per_hour),
        ("k_a_per_hour", &mut p.k_a_per_hour),
        ("molar_mass_g_per_mol", &mut p.molar_mass_g_per_mol),
    ]
}

fn pdt2_slots(p: &mut Pdt2Params) -> [(&'static str, &mut f64); 4] {
    [("b1", &mut p.b1), ("b0", &mut p.b0), ("a1", &mut p.a1), ("a0", &mut p.a0)]
}

fn tpo_slots(p: &mut TpoSigmoidParams) -> [(&'static str, &mut f64); 4] {
    [("c0", &mut p.c0), ("c1", &mut p.c1), ("c2", &mut p.c2), ("c3", &mut p.c3)]
}

fn fill<'a>(
    prefix: &str,
    section: &Section,
    slots: impl IntoIterator<Item = (&'a str, &'a mut f64)>,
) -> Result<(), ConfigError> {
    let mut seen = 0;
    for (name, slot) in slots {
        let e = section.get(name).ok_or_else(|| ConfigError::MissingKey(format!("{prefix}.{name}")))?;
        *slot = e.value;
        seen += 1;
    }
    if seen != section.len() {
        let known: Vec<&str> = section.keys().map(String::as_str).collect();
        let extra = known.into_iter().find(|k| !is_known(prefix, k)).unwrap_or("?");
        return Err(ConfigError::UnknownKey(format!("{prefix}.{extra}")));
    }
    Ok(())
}

fn is_known(prefix: &str, key: &str) -> bool {
    match prefix {
        "pk" => pk_slots(&mut PkParams::default()).iter().any(|(n, _)| *n == key),
        "pdt2" => pdt2_slots(&mut Pdt2Params::default()).iter().any(|(n, _)| *n == key),
        "tpo.normal" | "tpo.high" => ["c0", "c1", "c2", "c3"].contains(&key),
        _ => ThyroidParams::NAMES.contains(&key),
    }
}

fn section_from<'a>(slots: impl IntoIterator<Item = (&'a str, &'a mut f64)>, provenance: &Section) -> Section {
    slots
        .into_iter()
        .map(|(n, v)| {
            let prov = provenance.get(n).map(|e| e.provenance.clone()).unwrap_or_default();
            (n.to_string(), Entry { value: *v, provenance: prov })
        })
        .collect()
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn resolve(&self) -> Result<Config, ConfigError> {
        let mut params = ParameterSet::default();
        fill("pk", &self.pk, pk_slots(&mut params.pk))?;
        fill("pdt2", &self.pdt2, pdt2_slots(&mut params.pdt2))?;
        fill("tpo.normal", &self.tpo.normal, tpo_slots(&mut params.tpo_normal))?;
        fill("tpo.high", &self.tpo.high, tpo_slots(&mut params.tpo_high))?;
        let mut thyroid = ThyroidParams::default();
        for name in ThyroidParams::NAMES {
            let e = self.thyroid.get(*name).ok_or_else(|| ConfigError::MissingKey(format!("thyroid.{name}")))?;
            thyroid.set(name, e.value)?;
        }
        if let Some(k) = self.thyroid.keys().find(|k| !ThyroidParams::NAMES.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(format!("thyroid.{k}")));
        }
        params.thyroid = thyroid;
        params.validate()?;

        let c = &self.controller;
        let i = &self.integrator;
        let settings = ControllerSettings {
            q_t4: c.q_t4,
            q_t3: c.q_t3,
            q_tsh: c.q_tsh,
            r1: c.r1,
            r2: c.r2,
            quad_step_s: c.quad_step_s,
            cost_time_unit_s: c.cost_time_unit_s,
            integrator: IntegratorConfig { rtol: i.rtol, atol_scale: i.atol_scale, max_step: i.max_step_s },
            solver: SolverSettings { tol: c.tol, max_iter: c.max_iter, max_backtracks: c.max_backtracks },
            band: c.band,
        };
        settings.integrator.validate()?;
        for kind in ScenarioKind::ALL {
            if !self.scenario.contains_key(kind.name()) {
                return Err(ConfigError::MissingKey(format!("scenario.{}", kind.name())));
            }
        }
        if let Some(k) = self.scenario.keys().find(|k| ScenarioKind::from_name(k).is_none()) {
            return Err(ConfigError::UnknownKey(format!("scenario.{k}")));
        }
        let cfg = Config { params, settings, file: self.clone() };
        for kind in ScenarioKind::ALL {
            for mode in [Mode::Nominal, Mode::Realistic] {
                let sc = cfg.scenario(kind, mode, 0);
                sc.validate()?;
                thyroid.with_mismatch(&sc.mismatch_pairs())?;
            }
        }
        Ok(cfg)
    }

    /// File describing `params` and `settings`, keeping provenance strings
    /// from `self` where names match.
    pub fn with_values(&self, params: &ParameterSet, settings: &ControllerSettings) -> ConfigFile {
        let mut p = *params;
        let mut out = self.clone();
        out.pk = section_from(pk_slots(&mut p.pk), &self.pk);
        out.pdt2 = section_from(pdt2_slots(&mut p.pdt2), &self.pdt2);
        out.tpo.normal = section_from(tpo_slots(&mut p.tpo_normal), &self.tpo.normal);
        out.tpo.high = section_from(tpo_slots(&mut p.tpo_high), &self.tpo.high);
        out.thyroid = ThyroidParams::NAMES
            .iter()
            .map(|n| {
                let prov = self.thyroid.get(*n).map(|e| e.provenance.clone()).unwrap_or_default();
                (n.to_string(), Entry { value: p.thyroid.get(n).unwrap_or(f64::NAN), provenance: prov })
            })
            .collect();
        out.integrator = IntegratorSection {
            rtol: settings.integrator.rtol,
            atol_scale: settings.integrator.atol_scale,
            max_step_s: settings.integrator.max_step,
        };
        out.controller = ControllerSection {
            q_t4: settings.q_t4,
            q_t3: settings.q_t3,
            q_tsh: settings.q_tsh,
            r1: settings.r1,
            r2: settings.r2,
            quad_step_s: settings.quad_step_s,
            cost_time_unit_s: settings.cost_time_unit_s,
            band: settings.band,
            tol: settings.solver.tol,
            max_iter: settings.solver.max_iter,
            max_backtracks: settings.solver.max_backtracks,
        };
        out
    }

    /// Applies `section.key=value` (e.g. `thyroid.g_t=3e-11`,
    /// `controller.r1=0.01`, `scenario.ordinary.u_max_mg=20`).
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let bad = |why: &str| ConfigError::Override(spec.to_string(), why.to_string());
        let (path, raw) = spec.split_once('=').ok_or_else(|| bad("expected key=value"))?;
        let keys: Vec<&str> = path.trim().split('.').collect();
        let mut root = toml::Value::try_from(&*self).map_err(|e| bad(&e.to_string()))?;
        let mut node = &mut root;
        for k in &keys {
            node = node.get_mut(*k).ok_or_else(|| bad("no such key"))?;
        }
        let raw = raw.trim();
        let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .map_err(|e| bad(&e.to_string()))?
            .remove("v")
            .ok_or_else(|| bad("empty value"))?;
        let target = match node {
            toml::Value::Table(t) if t.contains_key("value") => {
                t.insert("provenance".to_string(), toml::Value::String("command-line override".to_string()));
                t.get_mut("value").expect("checked above")
            }
            other => other,
        };
        *target = match (&*target, parsed) {
            (toml::Value::Float(_), toml::Value::Integer(n)) => toml::Value::Float(n as f64),
            (_, v) => v,
        };
        *self = root.try_into().map_err(|e: toml::de::Error| bad(&e.to_string()))?;
        Ok(())
    }
}

impl Config {
    pub fn load(text: &str) -> Result<Self, ConfigError> {
        ConfigFile::parse(text)?.resolve()
    }

    pub fn shipped() -> Self {
        Self::load(DEFAULT_TOML).expect("shipped config is valid")
    }

    /// Scenario preset as described by the file.
    pub fn scenario(&self, kind: ScenarioKind, mode: Mode, seed: u64) -> ScenarioConfig {
        let s = &self.file.scenario[kind.name()];
        let mut sc = ScenarioConfig {
            kind,
            mode,
            gt_multiplier: s.gt_multiplier,
            route: s.route,
            regime: s.regime,
            delta_s: s.delta_h * SECONDS_PER_HOUR,
            u_max: s.u_max_mg,
            horizon_s: s.horizon_days * SECONDS_PER_DAY,
            duration_s: s.duration_days * SECONDS_PER_DAY,
            noise: NoiseConfig::NONE,
            mismatch: Vec::new(),
            missed_days: Vec::new(),
            seed,
        };
        if mode == Mode::Realistic {
            let d = &s.realistic;
            sc.noise = NoiseConfig { std: d.noise_std, truncation: d.noise_truncation };
            sc.mismatch = d.mismatch.iter().map(|(k, v)| (k.clone(), *v)).collect();
            sc.missed_days = d.missed_days.clone();
        }
        sc
    }

    /// Provenance string of a constant, e.g. `provenance("pk.f")`.
    pub fn provenance(&self, key: &str) -> Option<&str> {
        let (section, name) = key.rsplit_once('.')?;
        let sec = match section {
            "pk" => &self.file.pk,
            "pdt2" => &self.file.pdt2,
            "tpo.normal" => &self.file.tpo.normal,
            "tpo.high" => &self.file.tpo.high,
            "thyroid" => &self.file.thyroid,
            _ => return None,
        };
        sec.get(name).map(|e| e.provenance.as_str())
    }
}

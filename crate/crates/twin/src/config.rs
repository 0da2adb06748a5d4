//! Pipeline configuration, read from TOML. Every section may be omitted and
//! falls back to the case-study defaults; unknown keys are rejected.

use std::path::{Path, PathBuf};

use hazard_twin_core::affiliation::GrlConfig;
use hazard_twin_core::calibration::TrainConfig;
use hazard_twin_core::district::{BuildingType, DistrictConfig};
use hazard_twin_core::equity::EquityConfig;
use hazard_twin_core::fusion::FusionConfig;
use hazard_twin_core::intervention::{standard_interventions, Intervention};
use hazard_twin_core::scenario::ScenarioConfig;
use hazard_twin_core::sensing::SensingConfig;
use hazard_twin_core::thermal::{Rc2Params, TruthMode};
use serde::{Deserialize, Serialize};

use crate::error::{TwinError, TwinResult};

/// One value per building type, keyed by the type token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerType<T> {
    #[serde(rename = "MF")]
    pub multi_family: T,
    #[serde(rename = "SF")]
    pub single_family: T,
    #[serde(rename = "COM")]
    pub commercial: T,
    #[serde(rename = "SCH")]
    pub school: T,
    #[serde(rename = "GRO")]
    pub grocery: T,
    #[serde(rename = "CLI")]
    pub clinic: T,
}

impl<T> PerType<T> {
    pub fn from_fn(mut f: impl FnMut(BuildingType) -> T) -> Self {
        Self {
            multi_family: f(BuildingType::MultiFamily),
            single_family: f(BuildingType::SingleFamily),
            commercial: f(BuildingType::Commercial),
            school: f(BuildingType::School),
            grocery: f(BuildingType::Grocery),
            clinic: f(BuildingType::Clinic),
        }
    }

    pub fn get(&self, btype: BuildingType) -> &T {
        match btype {
            BuildingType::MultiFamily => &self.multi_family,
            BuildingType::SingleFamily => &self.single_family,
            BuildingType::Commercial => &self.commercial,
            BuildingType::School => &self.school,
            BuildingType::Grocery => &self.grocery,
            BuildingType::Clinic => &self.clinic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    /// First-order lag towards the outdoor temperature.
    Coupled,
    /// Jittered 2R2C physics.
    Rc2,
}

/// Per-type draw ranges of the coupled truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingRange {
    pub tau_h: [f64; 2],
    pub offset_c: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthConfig {
    pub kind: TruthKind,
    /// Blackout lift of the indoor temperature, °C.
    pub outage_drift: f64,
    /// Log-normal parameter jitter of the physics truth.
    pub jitter: f64,
    pub coupling: PerType<CouplingRange>,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            kind: TruthKind::Coupled,
            outage_drift: 1.2,
            jitter: 0.05,
            coupling: PerType::from_fn(|t| match t {
                BuildingType::School => CouplingRange { tau_h: [4.5, 6.0], offset_c: [-1.0, 1.0] },
                BuildingType::Clinic => CouplingRange { tau_h: [5.0, 8.0], offset_c: [-1.0, 1.0] },
                _ => CouplingRange { tau_h: [2.0, 8.0], offset_c: [-2.0, 2.0] },
            }),
        }
    }
}

impl TruthConfig {
    pub fn mode(&self, btype: BuildingType) -> TruthMode {
        match self.kind {
            TruthKind::Rc2 => TruthMode::Rc2Truth { jitter: self.jitter, outage_drift: self.outage_drift },
            TruthKind::Coupled => {
                let r = self.coupling.get(btype);
                TruthMode::CoupledTruth {
                    tau_h: (r.tau_h[0], r.tau_h[1]),
                    offset_c: (r.offset_c[0], r.offset_c[1]),
                    outage_drift: self.outage_drift,
                }
            }
        }
    }

    fn validate(&self) -> TwinResult<()> {
        if !(self.jitter >= 0.0) || !self.outage_drift.is_finite() {
            return Err(TwinError::Config("truth.jitter must be nonnegative and outage_drift finite".into()));
        }
        for t in BuildingType::ALL {
            let r = self.coupling.get(t);
            if !(r.tau_h[0] > 0.0 && r.tau_h[0] <= r.tau_h[1] && r.offset_c[0] <= r.offset_c[1]) {
                return Err(TwinError::Config(format!("truth.coupling.{}: ranges must be ordered, tau positive", t.token())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterventionConfig {
    /// Overheating threshold, °C.
    pub oh_threshold: f64,
    /// Overheating hours from re-simulated indoor temperatures rather than
    /// the outdoor proxy.
    pub resimulate_oh: bool,
    pub catalogue: Vec<Intervention>,
}

impl Default for InterventionConfig {
    fn default() -> Self {
        Self { oh_threshold: 30.0, resimulate_oh: false, catalogue: standard_interventions() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub district: DistrictConfig,
    pub scenario: ScenarioConfig,
    pub thermal: PerType<Rc2Params>,
    pub truth: TruthConfig,
    pub sensing: SensingConfig,
    pub fusion: FusionConfig,
    pub calibration: TrainConfig,
    pub graph: GrlConfig,
    pub equity: EquityConfig,
    pub intervention: InterventionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out: PathBuf::from("out"),
            district: DistrictConfig::default(),
            scenario: ScenarioConfig::default(),
            thermal: PerType::from_fn(Rc2Params::default_for),
            truth: TruthConfig::default(),
            sensing: SensingConfig::default(),
            fusion: FusionConfig::default(),
            calibration: TrainConfig::default(),
            graph: GrlConfig::default(),
            equity: EquityConfig::default(),
            intervention: InterventionConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> TwinResult<Self> {
        let config: Self = toml::from_str(text).map_err(|e| TwinError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> TwinResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TwinError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks the sections that have no constructor-time validation of
    /// their own.
    pub fn validate(&self) -> TwinResult<()> {
        for t in BuildingType::ALL {
            self.thermal.get(t).validate().map_err(|e| TwinError::Config(format!("thermal.{}: {e}", t.token())))?;
        }
        self.truth.validate()?;
        self.fusion.validate()?;
        self.calibration.validate()?;
        self.graph.validate()?;
        self.equity.validate()?;
        for iv in &self.intervention.catalogue {
            iv.validate()?;
        }
        Ok(())
    }

    /// Canonical text hashed into the manifest. The output directory is
    /// left out so relocating a run does not change its identity.
    pub fn canonical(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serialises");
        if let Some(map) = value.as_object_mut() {
            map.remove("out");
        }
        value.to_string()
    }
}

//! Scenario configuration, presets and TOML loading.
//!
//! A config file names a `preset` and an `algorithm`; every other key is
//! optional and overrides the defaults those two imply.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detector::EnergyDetectorConfig;
use crate::error::{Error, Result};
use crate::hedge::SoftNullModel;
use crate::model::{CombiningMode, LearnerParams};
use crate::perceptron::DEFAULT_THRESHOLD_SAMPLES;
use crate::simulator::MobilityModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Gsc,
    Msc,
    Bsc,
    Custom,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gsc" => Ok(Preset::Gsc),
            "msc" => Ok(Preset::Msc),
            "bsc" => Ok(Preset::Bsc),
            "custom" => Ok(Preset::Custom),
            other => Err(Error::config(format!("unknown preset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "hedge-hc")]
    HedgeHc,
    #[serde(rename = "hedge-sc")]
    HedgeSc,
    #[serde(rename = "perc-sc")]
    PercSc,
    #[serde(rename = "hsc-bh")]
    HscBh,
    #[serde(rename = "psc-bh")]
    PscBh,
    #[serde(rename = "hsc-sw")]
    HscSw,
    #[serde(rename = "psc-sw")]
    PscSw,
    #[serde(rename = "dhedge-hc")]
    DhedgeHc,
    #[serde(rename = "dhedge-sc")]
    DhedgeSc,
    #[serde(rename = "dperc-sc")]
    DpercSc,
    #[serde(rename = "or")]
    Or,
    #[serde(rename = "and")]
    And,
    #[serde(rename = "majority")]
    Majority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerKind {
    Hedge,
    Perceptron,
    Baseline,
}

/// How the fused per-channel statistics become final decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionPolicy {
    Threshold,
    Bh,
    Switch,
}

impl Algorithm {
    pub const ALL: [Algorithm; 13] = [
        Algorithm::HedgeHc,
        Algorithm::HedgeSc,
        Algorithm::PercSc,
        Algorithm::HscBh,
        Algorithm::PscBh,
        Algorithm::HscSw,
        Algorithm::PscSw,
        Algorithm::DhedgeHc,
        Algorithm::DhedgeSc,
        Algorithm::DpercSc,
        Algorithm::Or,
        Algorithm::And,
        Algorithm::Majority,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::HedgeHc => "hedge-hc",
            Algorithm::HedgeSc => "hedge-sc",
            Algorithm::PercSc => "perc-sc",
            Algorithm::HscBh => "hsc-bh",
            Algorithm::PscBh => "psc-bh",
            Algorithm::HscSw => "hsc-sw",
            Algorithm::PscSw => "psc-sw",
            Algorithm::DhedgeHc => "dhedge-hc",
            Algorithm::DhedgeSc => "dhedge-sc",
            Algorithm::DpercSc => "dperc-sc",
            Algorithm::Or => "or",
            Algorithm::And => "and",
            Algorithm::Majority => "majority",
        }
    }

    pub fn learner(self) -> LearnerKind {
        use Algorithm::*;
        match self {
            HedgeHc | HedgeSc | HscBh | HscSw | DhedgeHc | DhedgeSc => LearnerKind::Hedge,
            PercSc | PscBh | PscSw | DpercSc => LearnerKind::Perceptron,
            Or | And | Majority => LearnerKind::Baseline,
        }
    }

    pub fn combining(self) -> CombiningMode {
        use Algorithm::*;
        match self {
            HedgeHc | DhedgeHc | Or | And | Majority => CombiningMode::Hard,
            _ => CombiningMode::Soft,
        }
    }

    pub fn policy(self) -> DecisionPolicy {
        use Algorithm::*;
        match self {
            HscBh | PscBh => DecisionPolicy::Bh,
            HscSw | PscSw => DecisionPolicy::Switch,
            _ => DecisionPolicy::Threshold,
        }
    }

    pub fn discounted(self) -> bool {
        matches!(self, Algorithm::DhedgeHc | Algorithm::DhedgeSc | Algorithm::DpercSc)
    }

    /// Learning parameters used unless the config overrides them.
    pub fn default_learner(self) -> LearnerParams {
        use Algorithm::*;
        let base = LearnerParams::default();
        match self {
            HedgeHc => LearnerParams { beta: 0.88, ..base },
            HedgeSc | HscBh | HscSw => LearnerParams { beta: 0.99, ..base },
            PercSc | PscBh | PscSw => LearnerParams { rho: 0.80, ..base },
            DhedgeHc => LearnerParams {
                beta: 0.05,
                discount: 0.80,
                ..base
            },
            DhedgeSc => LearnerParams {
                beta: 0.50,
                discount: 0.60,
                ..base
            },
            DpercSc => LearnerParams {
                rho: 0.40,
                discount: 0.99,
                ..base
            },
            Or | And | Majority => base,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == lower)
            .ok_or_else(|| Error::config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub pus: usize,
    pub sus: usize,
    pub area_side: f64,
    pub carrier_ghz: f64,
    pub pu_tx_db: f64,
    /// Received power that maps to a signal variance equal to the noise
    /// variance, in the same units as `pu_tx_db`.
    pub noise_floor_db: f64,
    /// Fixed channel-by-SU signal variances replacing the geometric model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal_variances: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    pub components: usize,
    pub rate_min: f64,
    pub rate_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub num_samples: u32,
    pub noise_variance: f64,
    pub pfa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub beta: f64,
    pub rho: f64,
    pub discount: f64,
    pub w0: f64,
    pub alpha_fdr: f64,
    pub tau_switch: f64,
    /// Deactivation cut-off; `None` means `1 / (2S)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_deactivate: Option<f64>,
    pub threshold_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    /// Per-SU budget; `None` is unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    pub cost_per_sense: u64,
    pub deactivation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityConfig {
    pub pus_mobile: bool,
    pub sus_mobile: bool,
    pub speed: f64,
    pub step_duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub preset: Preset,
    pub algorithm: Algorithm,
    pub steps: u64,
    pub seed: u64,
    pub packet_loss: f64,
    pub topology: TopologyConfig,
    pub traffic: TrafficConfig,
    pub detector: DetectorConfig,
    pub learner: LearnerConfig,
    pub energy: EnergyConfig,
    pub mobility: MobilityConfig,
}

/// Noise floor that places roughly the stated share of detectors above
/// `P_d = 0.95` in each preset.
pub const DEFAULT_NOISE_FLOOR_DB: f64 = -127.0;

impl ScenarioConfig {
    pub fn preset(preset: Preset, algorithm: Algorithm) -> Self {
        let (sus, area_side) = match preset {
            Preset::Gsc => (10, 1000.0),
            Preset::Msc | Preset::Custom => (50, 8000.0),
            Preset::Bsc => (10, 8000.0),
        };
        let lp = algorithm.default_learner();
        Self {
            preset,
            algorithm,
            steps: 10_000,
            seed: 1,
            packet_loss: 0.05,
            topology: TopologyConfig {
                pus: 10,
                sus,
                area_side,
                carrier_ghz: 6.0,
                pu_tx_db: 0.0,
                noise_floor_db: DEFAULT_NOISE_FLOOR_DB,
                signal_variances: None,
            },
            traffic: TrafficConfig {
                components: 3,
                rate_min: 0.0,
                rate_max: 500.0,
            },
            detector: DetectorConfig {
                num_samples: 10,
                noise_variance: 1.0,
                pfa: 0.05,
            },
            learner: LearnerConfig {
                beta: lp.beta,
                rho: lp.rho,
                discount: lp.discount,
                w0: lp.w0,
                alpha_fdr: lp.alpha_fdr,
                tau_switch: lp.tau_switch,
                mu_deactivate: None,
                threshold_samples: DEFAULT_THRESHOLD_SAMPLES,
            },
            energy: EnergyConfig {
                budget: None,
                cost_per_sense: 1,
                deactivation: false,
            },
            mobility: MobilityConfig {
                pus_mobile: false,
                sus_mobile: false,
                speed: 5.0,
                step_duration: 1.0,
            },
        }
    }

    /// Parses TOML, filling unspecified keys from the preset and algorithm.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
        let preset = match user.get("preset") {
            Some(v) => v
                .as_str()
                .ok_or_else(|| Error::config("`preset` must be a string"))?
                .parse()?,
            None => Preset::Msc,
        };
        let algorithm = match user.get("algorithm") {
            Some(v) => v
                .as_str()
                .ok_or_else(|| Error::config("`algorithm` must be a string"))?
                .parse()?,
            None => Algorithm::HedgeSc,
        };
        let base = ScenarioConfig::preset(preset, algorithm);
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::config(e.to_string()))?;
        merge(&mut merged, user);
        let cfg: ScenarioConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Switches the algorithm and resets the learner defaults it implies.
    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        let lp = algorithm.default_learner();
        self.algorithm = algorithm;
        self.learner.beta = lp.beta;
        self.learner.rho = lp.rho;
        self.learner.discount = lp.discount;
        self
    }

    pub fn mu(&self) -> f64 {
        self.learner
            .mu_deactivate
            .unwrap_or(1.0 / (2.0 * self.topology.sus as f64))
    }

    pub fn learner_params(&self) -> LearnerParams {
        LearnerParams {
            beta: self.learner.beta,
            rho: self.learner.rho,
            discount: self.learner.discount,
            w0: self.learner.w0,
            pfa_target: self.detector.pfa,
            alpha_fdr: self.learner.alpha_fdr,
            tau_switch: self.learner.tau_switch,
            mu_deactivate: self.mu(),
        }
    }

    pub fn detector_config(&self) -> EnergyDetectorConfig {
        EnergyDetectorConfig {
            num_samples: self.detector.num_samples,
            noise_variance: self.detector.noise_variance,
            pfa_target: self.detector.pfa,
        }
    }

    pub fn null_model(&self) -> SoftNullModel {
        SoftNullModel {
            noise_variance: self.detector.noise_variance,
            num_samples: self.detector.num_samples,
            pfa: self.detector.pfa,
        }
    }

    pub fn mobility_model(&self) -> MobilityModel {
        MobilityModel {
            pus_mobile: self.mobility.pus_mobile,
            sus_mobile: self.mobility.sus_mobile,
            speed: self.mobility.speed,
            step_duration: self.mobility.step_duration,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.topology;
        if t.pus == 0 || t.sus == 0 {
            return Err(Error::config("need at least one PU and one SU"));
        }
        if !(t.area_side > 0.0 && t.area_side.is_finite()) {
            return Err(Error::config("area_side must be positive"));
        }
        if !(t.carrier_ghz > 0.0) {
            return Err(Error::config("carrier_ghz must be positive"));
        }
        if let Some(g) = &t.signal_variances {
            if g.len() != t.pus || g.iter().any(|r| r.len() != t.sus) {
                return Err(Error::config("signal_variances must be a pus x sus matrix"));
            }
            if g.iter().flatten().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::config("signal variances must be finite and nonnegative"));
            }
        }
        if self.traffic.components == 0 || !(self.traffic.rate_min >= 0.0 && self.traffic.rate_max > self.traffic.rate_min)
        {
            return Err(Error::config("traffic needs components >= 1 and 0 <= rate_min < rate_max"));
        }
        self.detector_config().validate()?;
        self.learner_params().validate()?;
        if !(0.0..1.0).contains(&self.packet_loss) {
            return Err(Error::config("packet_loss must lie in [0, 1)"));
        }
        if self.learner.threshold_samples < 1000 {
            return Err(Error::config("threshold_samples must be at least 1000"));
        }
        if self.energy.cost_per_sense == 0 {
            return Err(Error::config("cost_per_sense must be positive"));
        }
        if !(self.mobility.speed >= 0.0 && self.mobility.step_duration > 0.0) {
            return Err(Error::config("mobility needs speed >= 0 and step_duration > 0"));
        }
        if self.energy.deactivation && self.algorithm.learner() != LearnerKind::Hedge {
            return Err(Error::config(format!(
                "deactivation needs a Hedge learner, not `{}`",
                self.algorithm
            )));
        }
        if self.learner.discount != 1.0 && !self.algorithm.discounted() {
            return Err(Error::config(format!(
                "discount {} requires a discounted algorithm, not `{}`",
                self.learner.discount, self.algorithm
            )));
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_table_values() {
        let hc = ScenarioConfig::preset(Preset::Msc, Algorithm::HedgeHc);
        assert_eq!(hc.learner.beta, 0.88);
        let sc = ScenarioConfig::preset(Preset::Msc, Algorithm::HedgeSc);
        assert_eq!(sc.learner.beta, 0.99);
        let pc = ScenarioConfig::preset(Preset::Msc, Algorithm::PercSc);
        assert_eq!(pc.learner.rho, 0.80);
        for c in [&hc, &sc, &pc] {
            assert_eq!(c.detector.pfa, 0.05);
            assert_eq!(c.packet_loss, 0.05);
            assert_eq!(c.topology.pus, 10);
            assert_eq!(c.topology.carrier_ghz, 6.0);
            assert_eq!(c.traffic.components, 3);
            assert_eq!(c.learner.tau_switch, 0.02);
            assert_eq!(c.learner.w0, 1.0);
            assert_eq!(c.steps, 10_000);
        }
        assert_eq!(sc.mu(), 0.01);
    }

    #[test]
    fn preset_geometry() {
        let g = ScenarioConfig::preset(Preset::Gsc, Algorithm::HedgeHc).topology;
        assert_eq!((g.area_side, g.sus), (1000.0, 10));
        let m = ScenarioConfig::preset(Preset::Msc, Algorithm::HedgeHc).topology;
        assert_eq!((m.area_side, m.sus), (8000.0, 50));
        let b = ScenarioConfig::preset(Preset::Bsc, Algorithm::HedgeHc).topology;
        assert_eq!((b.area_side, b.sus), (8000.0, 10));
    }

    #[test]
    fn discounted_defaults() {
        let d = Algorithm::DhedgeSc.default_learner();
        assert_eq!((d.discount, d.beta), (0.60, 0.50));
        let d = Algorithm::DhedgeHc.default_learner();
        assert_eq!((d.discount, d.beta), (0.80, 0.05));
        let d = Algorithm::DpercSc.default_learner();
        assert_eq!((d.discount, d.rho), (0.99, 0.40));
    }

    #[test]
    fn toml_overrides_defaults() {
        let cfg = ScenarioConfig::from_toml_str(
            r#"
            preset = "gsc"
            algorithm = "hedge-hc"
            steps = 200
            [learner]
            beta = 0.5
            "#,
        )
        .unwrap();
        assert_eq!(cfg.steps, 200);
        assert_eq!(cfg.learner.beta, 0.5);
        assert_eq!(cfg.topology.sus, 10);
        assert_eq!(cfg.learner.rho, 0.80);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ScenarioConfig::from_toml_str("stepz = 3").unwrap_err();
        assert!(err.is_config());
        let err = ScenarioConfig::from_toml_str("[learner]\nbeeta = 0.3").unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn invalid_combinations_are_rejected() {
        let err = ScenarioConfig::from_toml_str("algorithm = \"perc-sc\"\n[energy]\ndeactivation = true").unwrap_err();
        assert!(err.is_config());
        let err = ScenarioConfig::from_toml_str("algorithm = \"hedge-sc\"\n[learner]\ndiscount = 0.5").unwrap_err();
        assert!(err.is_config());
        assert!(ScenarioConfig::from_toml_str("algorithm = \"bogus\"").is_err());
        assert!(ScenarioConfig::from_toml_str("[detector]\npfa = 1.5").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ScenarioConfig::preset(Preset::Bsc, Algorithm::DpercSc);
        cfg.energy.budget = Some(123);
        cfg.topology.signal_variances = Some(vec![vec![1.0; 10]; 10]);
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
    }
}

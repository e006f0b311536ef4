//! Versioned JSON scenario configuration and its content hash.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{custom, fairness, incast, ramp, rdcn, ParamOverrides, RunOptions, ScenarioError};
use crate::model::LawKind;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub law: LawKind,
    #[serde(default)]
    pub params: ParamOverrides,
    #[serde(default)]
    pub run: RunOptions,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Scenario {
    Incast(incast::IncastSpec),
    Fairness(fairness::FairnessSpec),
    Rdcn(rdcn::RdcnScenarioSpec),
    Ramp(ramp::RampSpec),
    Custom(custom::CustomSpec),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Incast(_) => "incast",
            Scenario::Fairness(_) => "fairness",
            Scenario::Rdcn(_) => "rdcn",
            Scenario::Ramp(_) => "ramp",
            Scenario::Custom(_) => "custom",
        }
    }

    /// Scenario with default settings, by name.
    pub fn by_name(name: &str) -> Option<Scenario> {
        Some(match name {
            "incast" => Scenario::Incast(Default::default()),
            "fairness" => Scenario::Fairness(Default::default()),
            "rdcn" => Scenario::Rdcn(Default::default()),
            "ramp" => Scenario::Ramp(Default::default()),
            _ => return None,
        })
    }
}

impl ScenarioConfig {
    pub fn new(law: LawKind, scenario: Scenario) -> Self {
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            law,
            params: ParamOverrides::default(),
            run: RunOptions::default(),
            scenario,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::Invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                Err(ScenarioError::Invalid(format!("{name} must be positive, got {x}")))
            }
            _ => Ok(()),
        };
        positive("run.horizon_us", self.run.horizon_us)?;
        positive("run.sample_interval_us", self.run.sample_interval_us)?;
        positive("params.tau_us", self.params.tau_us)?;
        positive("params.host_bw_gbps", self.params.host_bw_gbps)?;
        match &self.scenario {
            Scenario::Incast(s) => s.validate(),
            Scenario::Fairness(s) => s.validate(),
            Scenario::Rdcn(s) => s.validate(),
            Scenario::Ramp(s) => s.validate(),
            Scenario::Custom(s) => s.validate(),
        }
    }

    /// Canonical form: keys sorted, no whitespace.
    pub fn canonical_json(&self) -> String {
        canonical_json(self)
    }
}

pub fn canonical_json<T: Serialize>(value: &T) -> String {
    // serde_json's map type is ordered, so a round trip through `Value`
    // sorts every object's keys.
    let v = serde_json::to_value(value).expect("config serializes");
    serde_json::to_string(&v).expect("value serializes")
}

/// SHA-256 of the canonical JSON of any config, hex encoded.
pub fn content_hash<T: Serialize>(value: &T) -> String {
    hex::encode(Sha256::digest(canonical_json(value).as_bytes()))
}

pub fn config_hash(config: &ScenarioConfig) -> String {
    content_hash(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_hash_stability() {
        let c = ScenarioConfig::new(LawKind::PowerTcp, Scenario::by_name("incast").unwrap());
        let text = serde_json::to_string_pretty(&c).unwrap();
        let back = ScenarioConfig::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(config_hash(&back), config_hash(&c));
        assert_eq!(config_hash(&c).len(), 64);
        let mut d = c.clone();
        d.run.seed += 1;
        assert_ne!(config_hash(&d), config_hash(&c));
    }

    #[test]
    fn key_order_does_not_change_hash() {
        let a = r#"{"schema_version":1,"law":"powertcp","scenario":{"type":"ramp"},"run":{"seed":3}}"#;
        let b = r#"{"run":{"seed":3},"scenario":{"type":"ramp"},"law":"powertcp","schema_version":1}"#;
        let (a, b) = (ScenarioConfig::from_json(a).unwrap(), ScenarioConfig::from_json(b).unwrap());
        assert_eq!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn diagnostics_carry_position() {
        let bad = "{\n  \"schema_version\": 1,\n  \"law\": \"nope\"\n}";
        let e = ScenarioConfig::from_json(bad).unwrap_err();
        assert_eq!(e.line(), 3);
        let unknown = r#"{"schema_version":1,"law":"powertcp","scenario":{"type":"ramp"},"bogus":1}"#;
        assert!(ScenarioConfig::from_json(unknown).is_err());
        let mut c = ScenarioConfig::new(LawKind::PowerTcp, Scenario::by_name("ramp").unwrap());
        c.schema_version = 9;
        assert!(c.validate().is_err());
    }
}

//! Packaged experiments on top of the packet simulator.
//!
//! Every scenario is described by a JSON-serializable config. Running it
//! yields the raw metric stream plus a summary, and the summary is always
//! computed from the metric stream alone, so it can be recomputed from the
//! NDJSON file written to disk.

pub mod config;
pub mod custom;
pub mod fairness;
pub mod incast;
pub mod output;
pub mod ramp;
pub mod rdcn;
pub mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CcParams, Smoothing};
use crate::sim::{MetricRecord, SimError, SimOutput};
use crate::units::{Bandwidth, Duration, ModelError};

pub use config::{config_hash, content_hash, Scenario, ScenarioConfig, SCHEMA_VERSION};
pub use stats::{fct_percentiles, jain_index, FctTable, StatsError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Params(#[from] ModelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("missing metric {kind} for {entity}")]
    MissingMetric { entity: String, kind: String },
}

/// Optional overrides of the derived control-law parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamOverrides {
    pub gamma: Option<f64>,
    /// Additive increase per flow, bytes.
    pub beta: Option<f64>,
    pub tau_us: Option<f64>,
    pub host_bw_gbps: Option<f64>,
    /// Expected flow count used to derive β = host_bw·τ/n.
    pub n: Option<u32>,
    pub smoothing: Option<Smoothing>,
}

impl ParamOverrides {
    /// Builds parameters from scenario defaults, then applies overrides.
    pub fn resolve(&self, tau: Duration, host_bw: Bandwidth, n: u32) -> Result<CcParams, ModelError> {
        let tau = self.tau_us.map(Duration::from_micros).unwrap_or(tau);
        let host_bw = self.host_bw_gbps.map(Bandwidth::from_gbps).unwrap_or(host_bw);
        let mut p = CcParams::new(
            self.gamma.unwrap_or(crate::model::DEFAULT_GAMMA),
            tau,
            host_bw,
            self.n.unwrap_or(n),
        )?;
        if let Some(b) = self.beta {
            p = p.with_beta(b);
        }
        if let Some(s) = self.smoothing {
            p.smoothing = s;
        }
        p.validate()?;
        Ok(p)
    }
}

/// Scenario-independent run knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub seed: u64,
    /// Overrides the scenario's default horizon.
    pub horizon_us: Option<f64>,
    /// Defaults to τ/4.
    pub sample_interval_us: Option<f64>,
    pub audit: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: 1,
            horizon_us: None,
            sample_interval_us: None,
            audit: false,
        }
    }
}

impl RunOptions {
    pub fn sample_interval(&self, tau: Duration) -> Duration {
        self.sample_interval_us
            .map(Duration::from_micros)
            .unwrap_or(Duration::from_secs(tau.secs() / 4.0))
    }

    pub fn horizon(&self, default_us: f64) -> Duration {
        Duration::from_micros(self.horizon_us.unwrap_or(default_us))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Summary {
    Incast(incast::IncastSummary),
    Fairness(fairness::FairnessSummary),
    Rdcn(rdcn::RdcnSummary),
    Ramp(ramp::RampSummary),
    Custom(custom::CustomSummary),
}

/// Outcome of one scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    pub summary: Summary,
    pub metrics: Vec<MetricRecord>,
    /// Everything else the simulator reported; its `metrics` field is empty.
    pub sim: SimOutput,
}

impl ScenarioResult {
    /// Assertion failures a scenario treats as fatal (packet drops, stalls).
    pub fn failures(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.sim.drops > 0 {
            v.push(format!("{} packets dropped", self.sim.drops));
        }
        if self.sim.stalled {
            v.push("event queue exhausted with flows pending".into());
        }
        if !self.sim.audit_violations.is_empty() {
            v.push(format!("audit: {}", self.sim.audit_violations[0]));
        }
        v
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

/// Runs the scenario described by `config`.
pub fn run(config: &ScenarioConfig) -> Result<ScenarioResult, ScenarioError> {
    config.validate()?;
    let mut sim = match &config.scenario {
        Scenario::Incast(s) => incast::simulate(s, config)?,
        Scenario::Fairness(s) => fairness::simulate(s, config)?,
        Scenario::Rdcn(s) => rdcn::simulate(s, config)?,
        Scenario::Ramp(s) => ramp::simulate(s, config)?,
        Scenario::Custom(s) => custom::simulate(s, config)?,
    };
    let metrics = std::mem::take(&mut sim.metrics);
    let summary = summarize(config, &metrics)?;
    Ok(ScenarioResult {
        config: config.clone(),
        summary,
        metrics,
        sim,
    })
}

/// Recomputes the summary from the config and the raw metric stream.
pub fn summarize(config: &ScenarioConfig, metrics: &[MetricRecord]) -> Result<Summary, ScenarioError> {
    Ok(match &config.scenario {
        Scenario::Incast(s) => Summary::Incast(incast::summarize(s, config, metrics)?),
        Scenario::Fairness(s) => Summary::Fairness(fairness::summarize(s, config, metrics)?),
        Scenario::Rdcn(s) => Summary::Rdcn(rdcn::summarize(s, config, metrics)?),
        Scenario::Ramp(s) => Summary::Ramp(ramp::summarize(s, config, metrics)?),
        Scenario::Custom(s) => Summary::Custom(custom::summarize(s, config, metrics)?),
    })
}

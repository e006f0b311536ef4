//! Sudden bandwidth headroom: all flows but one leave a shared bottleneck,
//! and the survivor has to climb from its fair share to line rate.

use serde::{Deserialize, Serialize};

use super::stats::{mean, window};
use super::{ScenarioConfig, ScenarioError};
use crate::sim::metrics::series;
use crate::sim::topology::{dumbbell, DumbbellSpec};
use crate::sim::{run, FlowSpec, MetricKind, MetricRecord, SimConfig, SimError, SimOutput, Topology};
use crate::units::{Bandwidth, Duration};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RampSpec {
    pub bandwidth_gbps: f64,
    pub sender_prop_us: f64,
    pub receiver_prop_us: f64,
    pub buffer_bdps: f64,
    pub n_flows: usize,
    pub depart_at_us: f64,
    pub horizon_us: f64,
    /// Fraction of b the surviving flow must reach.
    pub target: f64,
}

impl Default for RampSpec {
    fn default() -> Self {
        RampSpec {
            bandwidth_gbps: 100.0,
            sender_prop_us: 4.0,
            receiver_prop_us: 1.0,
            buffer_bdps: 16.0,
            n_flows: 10,
            depart_at_us: 1000.0,
            horizon_us: 2500.0,
            target: 0.95,
        }
    }
}

impl RampSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n_flows < 2 {
            return Err(ScenarioError::Invalid("ramp needs at least two flows".into()));
        }
        if !(self.target > 0.0 && self.target <= 1.0) {
            return Err(ScenarioError::Invalid("target must lie in (0, 1]".into()));
        }
        if !(self.depart_at_us > 0.0 && self.depart_at_us < self.horizon_us) {
            return Err(ScenarioError::Invalid("departure must fall inside the horizon".into()));
        }
        for (name, v) in [("bandwidth_gbps", self.bandwidth_gbps), ("buffer_bdps", self.buffer_bdps)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScenarioError::Invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

pub struct RampSetup {
    pub topology: Topology,
    pub flows: Vec<FlowSpec>,
    pub sim: SimConfig,
    pub b: f64,
    pub tau: f64,
    pub depart_at: f64,
    pub horizon: f64,
}

pub fn setup(spec: &RampSpec, config: &ScenarioConfig) -> Result<RampSetup, ScenarioError> {
    let bw = Bandwidth::from_gbps(spec.bandwidth_gbps);
    let us = Duration::from_micros;
    let build = |buffer_cap| {
        dumbbell(&DumbbellSpec {
            host_bw: bw,
            bottleneck_bw: bw,
            sender_props: vec![us(spec.sender_prop_us); spec.n_flows],
            n_receivers: 1,
            receiver_prop: us(spec.receiver_prop_us),
            buffer_cap,
        })
    };
    let probe = build(0);
    let tau = probe
        .topology
        .base_rtt(probe.senders[0], probe.receivers[0])
        .map_err(SimError::from)?;
    let d = build((spec.buffer_bdps * bw.bytes_per_sec() * tau.secs()).round() as u64);
    let params = config.params.resolve(tau, bw, spec.n_flows as u32)?;
    let flows = d
        .senders
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let f = FlowSpec::persistent(format!("f{i}"), s, d.receivers[0], Duration::ZERO, params);
            if i == 0 {
                f
            } else {
                f.stop_at(us(spec.depart_at_us))
            }
        })
        .collect();
    let horizon = config.run.horizon(spec.horizon_us);
    let mut sim = SimConfig::new(config.law, horizon, config.run.sample_interval(tau));
    sim.seed = config.run.seed;
    sim.audit = config.run.audit;
    Ok(RampSetup {
        topology: d.topology,
        flows,
        sim,
        b: bw.bytes_per_sec(),
        tau: tau.secs(),
        depart_at: spec.depart_at_us * 1e-6,
        horizon: horizon.secs(),
    })
}

pub fn simulate(spec: &RampSpec, config: &ScenarioConfig) -> Result<SimOutput, ScenarioError> {
    let s = setup(spec, config)?;
    Ok(run(&s.topology, &s.flows, &s.sim)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampSummary {
    pub tau: f64,
    /// Survivor's share of b just before the others leave.
    pub share_before: Option<f64>,
    /// Seconds from the departure until the survivor's τ-averaged throughput
    /// first reaches `target`·b.
    pub ramp_time: Option<f64>,
    /// Survivor's throughput over b in the last quarter of the run.
    pub final_share: Option<f64>,
}

pub fn summarize(spec: &RampSpec, config: &ScenarioConfig, metrics: &[MetricRecord]) -> Result<RampSummary, ScenarioError> {
    let s = setup(spec, config)?;
    let name = &s.flows[0].name;
    let thr = series(metrics, name, MetricKind::Throughput);
    if thr.is_empty() {
        return Err(ScenarioError::MissingMetric {
            entity: name.clone(),
            kind: "Throughput".into(),
        });
    }
    let share = |from: f64, to: f64| mean(&window(&thr, from, to)).map(|m| m / s.b);
    // Sliding τ-long average, evaluated at every sample after the departure.
    let ramp_time = thr
        .iter()
        .filter(|(t, _)| *t >= s.depart_at + s.tau)
        .find(|(t, _)| share(t - s.tau + 1e-12, t + 1e-12).is_some_and(|x| x >= spec.target))
        .map(|(t, _)| t - s.depart_at);
    Ok(RampSummary {
        tau: s.tau,
        share_before: share(s.depart_at - 10.0 * s.tau, s.depart_at),
        ramp_time,
        final_share: share(s.horizon - (s.horizon - s.depart_at) / 4.0, s.horizon + 1e-12),
    })
}

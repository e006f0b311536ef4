//! N:1 incast onto a bottleneck already carrying one long flow.

use serde::{Deserialize, Serialize};

use super::stats::{mean, median, window};
use super::{ScenarioConfig, ScenarioError};
use crate::model::MSS;
use crate::sim::metrics::series;
use crate::sim::topology::{dumbbell, DumbbellSpec};
use crate::sim::{run, FlowSpec, MetricKind, MetricRecord, SimConfig, SimError, SimOutput, Topology};
use crate::units::{Bandwidth, Duration};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IncastSpec {
    /// Incast senders besides the long flow; 0 runs the long flow alone.
    pub n_senders: usize,
    pub bandwidth_gbps: f64,
    /// Access propagation delay of the long flow's sender.
    pub far_prop_us: f64,
    /// Access propagation delay of every incast sender.
    pub near_prop_us: f64,
    pub receiver_prop_us: f64,
    /// Per-port buffer in multiples of b·τ.
    pub buffer_bdps: f64,
    pub incast_at_us: f64,
    /// Bytes per incast flow; `None` keeps them running to the horizon.
    pub flow_size: Option<u64>,
    pub horizon_us: f64,
    /// Give every sender the far delay (equal RTTs).
    pub symmetric: bool,
}

impl Default for IncastSpec {
    fn default() -> Self {
        IncastSpec {
            n_senders: 10,
            bandwidth_gbps: 100.0,
            // Round trips of 28 µs and 8 µs: a long flow crossing the core
            // and incast senders within the receiver's pod.
            far_prop_us: 13.0,
            near_prop_us: 3.0,
            receiver_prop_us: 1.0,
            buffer_bdps: 16.0,
            incast_at_us: 300.0,
            flow_size: Some(500_000),
            horizon_us: 2500.0,
            symmetric: false,
        }
    }
}

impl IncastSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (name, v) in [
            ("bandwidth_gbps", self.bandwidth_gbps),
            ("buffer_bdps", self.buffer_bdps),
            ("horizon_us", self.horizon_us),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScenarioError::Invalid(format!("{name} must be positive")));
            }
        }
        if self.flow_size == Some(0) {
            return Err(ScenarioError::Invalid("flow_size must be positive".into()));
        }
        Ok(())
    }
}

/// Everything derived from the spec that the summary needs.
#[derive(Debug, Clone)]
pub struct IncastSetup {
    pub topology: Topology,
    pub flows: Vec<FlowSpec>,
    pub sim: SimConfig,
    pub bottleneck: String,
    pub b: f64,
    pub tau: f64,
    /// Sum of β over all flows.
    pub beta_hat: f64,
    pub incast_at: f64,
    pub horizon: f64,
    /// Sender-to-bottleneck delay of each flow (propagation plus one
    /// serialization at the access link).
    pub forward_delay: Vec<f64>,
}

pub fn setup(spec: &IncastSpec, config: &ScenarioConfig) -> Result<IncastSetup, ScenarioError> {
    let bw = Bandwidth::from_gbps(spec.bandwidth_gbps);
    let us = Duration::from_micros;
    let near = if spec.symmetric { spec.far_prop_us } else { spec.near_prop_us };
    let mut props = vec![us(spec.far_prop_us)];
    props.extend(std::iter::repeat_n(us(near), spec.n_senders));

    let build = |buffer_cap| {
        dumbbell(&DumbbellSpec {
            host_bw: bw,
            bottleneck_bw: bw,
            sender_props: props.clone(),
            n_receivers: 1,
            receiver_prop: us(spec.receiver_prop_us),
            buffer_cap,
        })
    };
    // τ is the largest base RTT, and the buffer is sized from it.
    let probe = build(0);
    let pairs: Vec<_> = probe.senders.iter().map(|&s| (s, probe.receivers[0])).collect();
    let tau = probe.topology.max_base_rtt(&pairs).map_err(SimError::from)?;
    let d = build((spec.buffer_bdps * bw.bytes_per_sec() * tau.secs()).round() as u64);

    let n_flows = spec.n_senders + 1;
    let params = config.params.resolve(tau, bw, n_flows as u32)?;
    let recv = d.receivers[0];
    let mut flows = vec![FlowSpec::persistent("long", d.senders[0], recv, Duration::ZERO, params)];
    for (i, &s) in d.senders[1..].iter().enumerate() {
        let mut f = FlowSpec::persistent(format!("incast{i}"), s, recv, us(spec.incast_at_us), params);
        f.size = spec.flow_size;
        flows.push(f);
    }
    let horizon = config.run.horizon(spec.horizon_us);
    let mut sim = SimConfig::new(config.law, horizon, config.run.sample_interval(tau));
    sim.seed = config.run.seed;
    sim.audit = config.run.audit;
    let ser = bw.serialization(crate::model::MSS_BYTES).secs();
    Ok(IncastSetup {
        bottleneck: d.topology.links[d.bottlenecks[0]].name.clone(),
        b: bw.bytes_per_sec(),
        tau: tau.secs(),
        beta_hat: flows.iter().map(|f| f.params.beta).sum(),
        incast_at: spec.incast_at_us * 1e-6,
        horizon: horizon.secs(),
        forward_delay: props.iter().map(|p| p.secs() + ser).collect(),
        topology: d.topology,
        flows,
        sim,
    })
}

pub fn simulate(spec: &IncastSpec, config: &ScenarioConfig) -> Result<SimOutput, ScenarioError> {
    let s = setup(spec, config)?;
    Ok(run(&s.topology, &s.flows, &s.sim)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncastSummary {
    pub n_senders: usize,
    pub bottleneck_bw: f64,
    pub tau: f64,
    pub beta_hat: f64,
    /// Near-zero queue threshold β̂ + 1 MSS.
    pub epsilon: f64,
    pub peak_queue: f64,
    /// Seconds from the incast until the queue first falls to `epsilon`.
    pub recovery_time: Option<f64>,
    /// Median of per-τ queue minima after recovery.
    pub standing_queue: Option<f64>,
    /// Mean bottleneck throughput over b after recovery.
    pub utilization: Option<f64>,
    pub drops: u64,
    pub completed_flows: usize,
}

fn need(s: Vec<(f64, f64)>, entity: &str, kind: MetricKind) -> Result<Vec<(f64, f64)>, ScenarioError> {
    if s.is_empty() {
        return Err(ScenarioError::MissingMetric {
            entity: entity.into(),
            kind: format!("{kind:?}"),
        });
    }
    Ok(s)
}

/// Median over consecutive windows of length `w` of each window's minimum.
pub fn standing_level(samples: &[(f64, f64)], from: f64, to: f64, w: f64) -> Option<f64> {
    let mut minima = Vec::new();
    let mut start = from;
    while start + w <= to {
        let v = window(samples, start, start + w);
        if let Some(m) = v.iter().copied().reduce(f64::min) {
            minima.push(m);
        }
        start += w;
    }
    median(&minima)
}

pub fn summarize(
    spec: &IncastSpec,
    config: &ScenarioConfig,
    metrics: &[MetricRecord],
) -> Result<IncastSummary, ScenarioError> {
    let s = setup(spec, config)?;
    let name = s.bottleneck.as_str();
    let q = need(series(metrics, name, MetricKind::Qlen), name, MetricKind::Qlen)?;
    let qmax = need(series(metrics, name, MetricKind::QlenMax), name, MetricKind::QlenMax)?;
    let thr = need(series(metrics, name, MetricKind::Throughput), name, MetricKind::Throughput)?;
    let drops = series(metrics, name, MetricKind::Drops).last().map_or(0, |x| x.1 as u64);
    let epsilon = s.beta_hat + MSS;

    let after = window(&qmax, s.incast_at, f64::INFINITY);
    let peak_queue = after.iter().copied().fold(0.0, f64::max);
    let t_peak = qmax
        .iter()
        .find(|(t, v)| *t >= s.incast_at && *v == peak_queue)
        .map(|x| x.0)
        .unwrap_or(s.incast_at);
    let t_rec = q.iter().find(|(t, v)| *t >= t_peak && *v <= epsilon).map(|x| x.0);
    let end = s.horizon + 1e-12;
    let (standing_queue, utilization) = match t_rec {
        Some(t) => (
            standing_level(&q, t, end, s.tau),
            mean(&window(&thr, t, end)).map(|m| m / s.b),
        ),
        None => (None, None),
    };
    Ok(IncastSummary {
        n_senders: spec.n_senders,
        bottleneck_bw: s.b,
        tau: s.tau,
        beta_hat: s.beta_hat,
        epsilon,
        peak_queue,
        recovery_time: t_rec.map(|t| t - s.incast_at),
        standing_queue,
        utilization,
        drops,
        completed_flows: metrics.iter().filter(|r| r.kind == MetricKind::Fct).count(),
    })
}

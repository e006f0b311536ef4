//! Persistent ToR-to-ToR flows over a rotating circuit schedule.

use serde::{Deserialize, Serialize};

use super::incast::standing_level;
use super::stats::{mean, window};
use super::{ScenarioConfig, ScenarioError};
use crate::model::MSS;
use crate::sim::circuit::Matching;
use crate::sim::metrics::series;
use crate::sim::topology::{rdcn, RdcnSpec};
use crate::sim::{run, CircuitSchedule, FlowSpec, MetricKind, MetricRecord, SimConfig, SimError, SimOutput, Topology};
use crate::units::{Bandwidth, Duration};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RdcnScenarioSpec {
    pub n_tors: usize,
    pub hosts_per_tor: usize,
    pub host_gbps: f64,
    pub uplink_gbps: f64,
    pub circuit_gbps: f64,
    pub host_prop_us: f64,
    pub uplink_prop_us: f64,
    pub circuit_prop_us: f64,
    /// Per-port and per-VOQ buffer, bytes.
    pub buffer_bytes: u64,
    pub day_us: f64,
    pub night_us: f64,
    /// All-dark slots appended to the rotation.
    pub dark_slots: usize,
    /// Explicit matchings; replaces the rotation when set.
    pub matchings: Option<Vec<Matching>>,
    pub src_tor: usize,
    pub dst_tor: usize,
    pub n_flows: usize,
    pub horizon_us: f64,
}

impl Default for RdcnScenarioSpec {
    fn default() -> Self {
        RdcnScenarioSpec {
            n_tors: 3,
            hosts_per_tor: 4,
            host_gbps: 25.0,
            uplink_gbps: 25.0,
            circuit_gbps: 100.0,
            host_prop_us: 1.0,
            uplink_prop_us: 5.0,
            circuit_prop_us: 10.0,
            buffer_bytes: 4_000_000,
            day_us: 225.0,
            night_us: 20.0,
            dark_slots: 1,
            matchings: None,
            src_tor: 0,
            dst_tor: 1,
            n_flows: 4,
            horizon_us: 3700.0,
        }
    }
}

impl RdcnScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.into()));
        if self.n_tors < 2 || self.hosts_per_tor < 1 || self.n_flows < 1 {
            return bad("rdcn needs two ToRs, a host per ToR and a flow");
        }
        if self.src_tor >= self.n_tors || self.dst_tor >= self.n_tors || self.src_tor == self.dst_tor {
            return bad("src_tor and dst_tor must be distinct ToRs");
        }
        for (name, v) in [
            ("host_gbps", self.host_gbps),
            ("uplink_gbps", self.uplink_gbps),
            ("circuit_gbps", self.circuit_gbps),
            ("day_us", self.day_us),
            ("horizon_us", self.horizon_us),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScenarioError::Invalid(format!("{name} must be positive")));
            }
        }
        self.schedule().map(|_| ())
    }

    pub fn schedule(&self) -> Result<CircuitSchedule, ScenarioError> {
        let (day, night) = (Duration::from_micros(self.day_us), Duration::from_micros(self.night_us));
        let s = match &self.matchings {
            Some(m) => {
                if m.iter().any(|x| x.len() != self.n_tors) {
                    return Err(ScenarioError::Invalid("every matching needs one entry per ToR".into()));
                }
                CircuitSchedule::new(m.clone(), day, night)
            }
            None => CircuitSchedule::rotations(self.n_tors, self.dark_slots, day, night),
        };
        s.map_err(|e| ScenarioError::Invalid(e.to_string()))
    }
}

pub struct RdcnSetup {
    pub topology: Topology,
    pub flows: Vec<FlowSpec>,
    pub sim: SimConfig,
    pub schedule: CircuitSchedule,
    pub circuit_bw: f64,
    pub tau: f64,
    pub beta_hat: f64,
    pub horizon: f64,
    pub circuit_link: String,
    pub voq: String,
}

pub fn setup(spec: &RdcnScenarioSpec, config: &ScenarioConfig) -> Result<RdcnSetup, ScenarioError> {
    let us = Duration::from_micros;
    let schedule = spec.schedule()?;
    let host_bw = Bandwidth::from_gbps(spec.host_gbps);
    let r = rdcn(&RdcnSpec {
        n_tors: spec.n_tors,
        hosts_per_tor: spec.hosts_per_tor,
        host_bw,
        uplink_bw: Bandwidth::from_gbps(spec.uplink_gbps),
        circuit_bw: Bandwidth::from_gbps(spec.circuit_gbps),
        host_prop: us(spec.host_prop_us),
        uplink_prop: us(spec.uplink_prop_us),
        circuit_prop: us(spec.circuit_prop_us),
        buffer_cap: spec.buffer_bytes,
        schedule: schedule.clone(),
    });
    let h = spec.hosts_per_tor;
    let pairs: Vec<_> = (0..spec.n_flows)
        .map(|i| (r.hosts[spec.src_tor][i % h], r.hosts[spec.dst_tor][i % h]))
        .collect();
    // τ is the packet-network RTT, the path every flow can always use.
    let tau = r.topology.max_base_rtt(&pairs).map_err(SimError::from)?;
    let params = config.params.resolve(tau, host_bw, spec.n_flows as u32)?;
    let flows: Vec<FlowSpec> = pairs
        .iter()
        .enumerate()
        .map(|(i, &(s, d))| FlowSpec::persistent(format!("f{i}"), s, d, Duration::ZERO, params))
        .collect();
    let horizon = config.run.horizon(spec.horizon_us);
    let mut sim = SimConfig::new(config.law, horizon, config.run.sample_interval(tau));
    sim.seed = config.run.seed;
    sim.audit = config.run.audit;
    let circuit_link = r.topology.links[r.circuits[spec.src_tor]].name.clone();
    Ok(RdcnSetup {
        topology: r.topology,
        beta_hat: flows.iter().map(|f| f.params.beta).sum(),
        flows,
        sim,
        schedule,
        circuit_bw: Bandwidth::from_gbps(spec.circuit_gbps).bytes_per_sec(),
        tau: tau.secs(),
        horizon: horizon.secs(),
        circuit_link,
        voq: format!("tor{}.voq{}", spec.src_tor, spec.dst_tor),
    })
}

pub fn simulate(spec: &RdcnScenarioSpec, config: &ScenarioConfig) -> Result<SimOutput, ScenarioError> {
    let s = setup(spec, config)?;
    Ok(run(&s.topology, &s.flows, &s.sim)?)
}

/// One day on which the circuit joined the source and destination ToRs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdcnDay {
    pub slot: u64,
    pub start: f64,
    pub end: f64,
    pub bytes: f64,
    /// Bytes carried over day length times circuit bandwidth.
    pub utilization: f64,
    /// Seconds from circuit-on until the circuit port first runs at 80% of
    /// its bandwidth.
    pub ramp_time: Option<f64>,
    /// VOQ level over the second half of the day (median of per-τ minima).
    pub standing_queue: Option<f64>,
    /// First matched day; excluded from the steady-state figures.
    pub warmup: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdcnSummary {
    pub tau: f64,
    pub beta_hat: f64,
    pub epsilon: f64,
    pub days: Vec<RdcnDay>,
    pub min_steady_utilization: Option<f64>,
    /// Zero when the pair never gets a circuit.
    pub mean_steady_utilization: f64,
    pub max_standing_queue: Option<f64>,
    pub max_voq: f64,
    /// Bytes the flows got acknowledged over the whole run.
    pub delivered: f64,
}

pub const RAMP_LEVEL: f64 = 0.8;

pub fn summarize(
    spec: &RdcnScenarioSpec,
    config: &ScenarioConfig,
    metrics: &[MetricRecord],
) -> Result<RdcnSummary, ScenarioError> {
    let s = setup(spec, config)?;
    let pair = format!("tor{}->tor{}", spec.src_tor, spec.dst_tor);
    let day_bytes = series(metrics, &pair, MetricKind::CircuitDayBytes);
    let thr = series(metrics, &s.circuit_link, MetricKind::Throughput);
    let voq = series(metrics, &s.voq, MetricKind::Qlen);
    let voq_max = series(metrics, &s.voq, MetricKind::QlenMax);
    let day = s.schedule.day.secs();

    let mut days = Vec::new();
    let n_slots = (s.horizon / (day + s.schedule.night.secs())).ceil() as u64 + 1;
    for slot in 0..n_slots {
        if s.schedule.peer(slot, spec.src_tor) != Some(spec.dst_tor) {
            continue;
        }
        let (start, end) = s.schedule.day_of_slot(slot);
        let (start, end) = (start.secs(), end.secs());
        if end > s.horizon {
            break;
        }
        let bytes = day_bytes
            .iter()
            .find(|(t, _)| (t - end).abs() < 1e-9)
            .map_or(0.0, |x| x.1);
        let ramp_time = thr
            .iter()
            .find(|(t, v)| *t > start && *t <= end && *v >= RAMP_LEVEL * s.circuit_bw)
            .map(|(t, _)| t - start);
        days.push(RdcnDay {
            slot,
            start,
            end,
            bytes,
            utilization: bytes / (day * s.circuit_bw),
            ramp_time,
            standing_queue: standing_level(&voq, start + day / 2.0, end, s.tau),
            warmup: days.is_empty(),
        });
    }
    let steady: Vec<&RdcnDay> = days.iter().filter(|d| !d.warmup).collect();
    let utils: Vec<f64> = steady.iter().map(|d| d.utilization).collect();
    let delivered = s
        .flows
        .iter()
        .map(|f| series(metrics, &f.name, MetricKind::Throughput).iter().map(|x| x.1).sum::<f64>())
        .sum::<f64>()
        * s.sim.sample_interval.secs();
    Ok(RdcnSummary {
        tau: s.tau,
        beta_hat: s.beta_hat,
        epsilon: s.beta_hat + MSS,
        min_steady_utilization: utils.iter().copied().reduce(f64::min),
        mean_steady_utilization: mean(&utils).unwrap_or(0.0),
        max_standing_queue: steady.iter().filter_map(|d| d.standing_queue).reduce(f64::max),
        max_voq: window(&voq_max, 0.0, f64::INFINITY).into_iter().fold(0.0, f64::max),
        delivered,
        days,
    })
}

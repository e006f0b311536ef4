//! User-described topology and flow list.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::{fct_percentiles, mean, FctTable};
use super::{ScenarioConfig, ScenarioError};
use crate::sim::metrics::series;
use crate::sim::topology::{dumbbell, parking_lot, DumbbellSpec};
use crate::sim::{run, FlowSpec, MetricKind, MetricRecord, SimConfig, SimOutput, Topology};
use crate::units::{Bandwidth, Duration};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologySpec {
    /// Senders `s0..`, receivers `r0..` around one switch.
    Dumbbell {
        host_gbps: f64,
        bottleneck_gbps: f64,
        sender_props_us: Vec<f64>,
        n_receivers: usize,
        receiver_prop_us: f64,
        buffer_bytes: u64,
    },
    /// Hosts `long-src`, `long-dst`, `x1-src`, `x1-dst`, `x2-src`, `x2-dst`.
    ParkingLot {
        bottleneck_gbps: f64,
        host_gbps: f64,
        prop_us: f64,
        buffer_bytes: u64,
    },
}

impl TopologySpec {
    fn host_gbps(&self) -> f64 {
        match self {
            TopologySpec::Dumbbell { host_gbps, .. } | TopologySpec::ParkingLot { host_gbps, .. } => *host_gbps,
        }
    }

    fn build(&self) -> Topology {
        let us = Duration::from_micros;
        match self {
            TopologySpec::Dumbbell {
                host_gbps,
                bottleneck_gbps,
                sender_props_us,
                n_receivers,
                receiver_prop_us,
                buffer_bytes,
            } => {
                dumbbell(&DumbbellSpec {
                    host_bw: Bandwidth::from_gbps(*host_gbps),
                    bottleneck_bw: Bandwidth::from_gbps(*bottleneck_gbps),
                    sender_props: sender_props_us.iter().map(|&p| us(p)).collect(),
                    n_receivers: *n_receivers,
                    receiver_prop: us(*receiver_prop_us),
                    buffer_cap: *buffer_bytes,
                })
                .topology
            }
            TopologySpec::ParkingLot {
                bottleneck_gbps,
                host_gbps,
                prop_us,
                buffer_bytes,
            } => {
                parking_lot(
                    Bandwidth::from_gbps(*bottleneck_gbps),
                    Bandwidth::from_gbps(*host_gbps),
                    us(*prop_us),
                    *buffer_bytes,
                )
                .topology
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomFlow {
    /// Host names as listed on the topology shape.
    pub src: String,
    pub dst: String,
    #[serde(default)]
    pub start_us: f64,
    #[serde(default)]
    pub stop_us: Option<f64>,
    #[serde(default)]
    pub size: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSpec {
    pub topology: TopologySpec,
    pub flows: Vec<CustomFlow>,
    pub horizon_us: f64,
}

impl CustomSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.horizon_us > 0.0 && self.horizon_us.is_finite()) {
            return Err(ScenarioError::Invalid("horizon_us must be positive".into()));
        }
        if !(self.topology.host_gbps() > 0.0) {
            return Err(ScenarioError::Invalid("host_gbps must be positive".into()));
        }
        let topo = self.topology.build();
        for (i, f) in self.flows.iter().enumerate() {
            for name in [&f.src, &f.dst] {
                if topo.node_by_name(name).is_none_or(|n| !topo.is_host(n)) {
                    return Err(ScenarioError::Invalid(format!("flow {i}: no host named {name:?}")));
                }
            }
        }
        Ok(())
    }
}

pub struct CustomSetup {
    pub topology: Topology,
    pub flows: Vec<FlowSpec>,
    pub sim: SimConfig,
    pub tau: f64,
}

pub fn setup(spec: &CustomSpec, config: &ScenarioConfig) -> Result<CustomSetup, ScenarioError> {
    spec.validate()?;
    let topology = spec.topology.build();
    let node = |name: &str| topology.node_by_name(name).expect("validated host name");
    let pairs: Vec<_> = spec.flows.iter().map(|f| (node(&f.src), node(&f.dst))).collect();
    let tau = if pairs.is_empty() {
        Duration::from_micros(10.0)
    } else {
        topology.max_base_rtt(&pairs).map_err(crate::sim::SimError::from)?
    };
    let host_bw = Bandwidth::from_gbps(spec.topology.host_gbps());
    let params = config.params.resolve(tau, host_bw, spec.flows.len().max(1) as u32)?;
    let us = Duration::from_micros;
    let flows = spec
        .flows
        .iter()
        .zip(&pairs)
        .enumerate()
        .map(|(i, (f, &(s, d)))| {
            let mut fs = FlowSpec::persistent(format!("f{i}"), s, d, us(f.start_us), params);
            fs.stop = f.stop_us.map(us);
            fs.size = f.size;
            fs
        })
        .collect();
    let mut sim = SimConfig::new(config.law, config.run.horizon(spec.horizon_us), config.run.sample_interval(tau));
    sim.seed = config.run.seed;
    sim.audit = config.run.audit;
    Ok(CustomSetup {
        topology,
        flows,
        sim,
        tau: tau.secs(),
    })
}

pub fn simulate(spec: &CustomSpec, config: &ScenarioConfig) -> Result<SimOutput, ScenarioError> {
    let s = setup(spec, config)?;
    Ok(run(&s.topology, &s.flows, &s.sim)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSummary {
    pub utilization: f64,
    pub max_queue: f64,
    pub drops: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomSummary {
    pub tau: f64,
    pub completed: usize,
    pub fct: Option<FctTable>,
    /// Per monitored link, keyed by link name.
    pub links: BTreeMap<String, LinkSummary>,
}

pub fn summarize(spec: &CustomSpec, config: &ScenarioConfig, metrics: &[MetricRecord]) -> Result<CustomSummary, ScenarioError> {
    let s = setup(spec, config)?;
    let mut completions = Vec::new();
    for f in &s.flows {
        let fct = series(metrics, &f.name, MetricKind::Fct);
        let size = series(metrics, &f.name, MetricKind::FlowSize);
        if let (Some(t), Some(b)) = (fct.first(), size.first()) {
            completions.push((b.1 as u64, t.1));
        }
    }
    let mut links = BTreeMap::new();
    for l in s.topology.links.iter().filter(|l| l.monitor) {
        let thr: Vec<f64> = series(metrics, &l.name, MetricKind::Throughput).iter().map(|x| x.1).collect();
        let max_queue = series(metrics, &l.name, MetricKind::QlenMax).iter().map(|x| x.1).fold(0.0, f64::max);
        let drops = series(metrics, &l.name, MetricKind::Drops).last().map_or(0.0, |x| x.1);
        links.insert(
            l.name.clone(),
            LinkSummary {
                utilization: mean(&thr).unwrap_or(0.0) / l.bandwidth.bytes_per_sec(),
                max_queue,
                drops,
            },
        );
    }
    Ok(CustomSummary {
        tau: s.tau,
        completed: completions.len(),
        fct: fct_percentiles(&completions).ok(),
        links,
    })
}

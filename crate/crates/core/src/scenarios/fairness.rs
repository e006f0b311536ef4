//! Staggered arrivals and departures on a single bottleneck.

use serde::{Deserialize, Serialize};

use super::stats::{jain_index, mean, window};
use super::{ScenarioConfig, ScenarioError};
use crate::sim::metrics::series;
use crate::sim::topology::{dumbbell, DumbbellSpec};
use crate::sim::{run, FlowSpec, MetricKind, MetricRecord, SimConfig, SimError, SimOutput, Topology};
use crate::units::{Bandwidth, Duration};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairFlow {
    pub start_us: f64,
    #[serde(default)]
    pub stop_us: Option<f64>,
    /// Multiplier on the derived β.
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FairnessSpec {
    pub bandwidth_gbps: f64,
    /// Access propagation delay of every sender.
    pub sender_prop_us: f64,
    pub receiver_prop_us: f64,
    pub buffer_bdps: f64,
    pub flows: Vec<FairFlow>,
    pub horizon_us: f64,
    /// Grace period after each event before fairness is judged, in τ.
    pub settle_rtts: f64,
    /// Rates entering the Jain index are averaged over this many τ.
    pub rate_window_rtts: f64,
}

impl Default for FairnessSpec {
    fn default() -> Self {
        let flow = |start_us, stop_us| FairFlow {
            start_us,
            stop_us,
            weight: 1.0,
        };
        FairnessSpec {
            bandwidth_gbps: 100.0,
            sender_prop_us: 4.0,
            receiver_prop_us: 1.0,
            buffer_bdps: 4.0,
            flows: vec![
                flow(0.0, Some(4000.0)),
                flow(1000.0, Some(5000.0)),
                flow(2000.0, Some(6000.0)),
                flow(3000.0, None),
            ],
            horizon_us: 7000.0,
            settle_rtts: 20.0,
            rate_window_rtts: 10.0,
        }
    }
}

impl FairnessSpec {
    /// Two flows over the whole run with weights 1 and `k`, scaled so the
    /// aggregate β is unchanged.
    pub fn weighted(k: f64) -> Self {
        let flow = |weight| FairFlow {
            start_us: 0.0,
            stop_us: None,
            weight,
        };
        let unit = 2.0 / (1.0 + k);
        FairnessSpec {
            flows: vec![flow(unit), flow(k * unit)],
            horizon_us: 3000.0,
            ..FairnessSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.flows.is_empty() {
            return Err(ScenarioError::Invalid("fairness needs at least one flow".into()));
        }
        for (name, v) in [
            ("bandwidth_gbps", self.bandwidth_gbps),
            ("buffer_bdps", self.buffer_bdps),
            ("horizon_us", self.horizon_us),
            ("rate_window_rtts", self.rate_window_rtts),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScenarioError::Invalid(format!("{name} must be positive")));
            }
        }
        for (i, f) in self.flows.iter().enumerate() {
            if !(f.start_us >= 0.0) || f.stop_us.is_some_and(|s| !(s > f.start_us)) {
                return Err(ScenarioError::Invalid(format!("flow {i}: stop must follow start")));
            }
            if !(f.weight > 0.0 && f.weight.is_finite()) {
                return Err(ScenarioError::Invalid(format!("flow {i}: weight must be positive")));
            }
        }
        Ok(())
    }

    /// Arrival and departure instants inside the horizon, ascending, in seconds.
    pub fn events(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .flows
            .iter()
            .flat_map(|f| std::iter::once(f.start_us).chain(f.stop_us))
            .filter(|&t| t < self.horizon_us)
            .map(|t| t * 1e-6)
            .collect();
        ev.sort_by(f64::total_cmp);
        ev.dedup();
        ev
    }

    fn active(&self, i: usize, t: f64) -> bool {
        let f = &self.flows[i];
        f.start_us * 1e-6 <= t && f.stop_us.is_none_or(|s| s * 1e-6 > t)
    }

    fn max_concurrent(&self) -> u32 {
        self.events()
            .iter()
            .map(|&t| (0..self.flows.len()).filter(|&i| self.active(i, t)).count())
            .max()
            .unwrap_or(1)
            .max(1) as u32
    }
}

pub struct FairnessSetup {
    pub topology: Topology,
    pub flows: Vec<FlowSpec>,
    pub sim: SimConfig,
    pub b: f64,
    pub tau: f64,
    pub horizon: f64,
}

pub fn setup(spec: &FairnessSpec, config: &ScenarioConfig) -> Result<FairnessSetup, ScenarioError> {
    let bw = Bandwidth::from_gbps(spec.bandwidth_gbps);
    let us = Duration::from_micros;
    let build = |buffer_cap| {
        dumbbell(&DumbbellSpec {
            host_bw: bw,
            bottleneck_bw: bw,
            sender_props: vec![us(spec.sender_prop_us); spec.flows.len()],
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
    let base = config.params.resolve(tau, bw, spec.max_concurrent())?;
    let flows = spec
        .flows
        .iter()
        .zip(&d.senders)
        .enumerate()
        .map(|(i, (f, &s))| {
            let params = base.with_beta(base.beta * f.weight);
            let mut fs = FlowSpec::persistent(format!("f{i}"), s, d.receivers[0], us(f.start_us), params);
            fs.stop = f.stop_us.map(us);
            fs
        })
        .collect();
    let horizon = config.run.horizon(spec.horizon_us);
    let mut sim = SimConfig::new(config.law, horizon, config.run.sample_interval(tau));
    sim.seed = config.run.seed;
    sim.audit = config.run.audit;
    Ok(FairnessSetup {
        topology: d.topology,
        flows,
        sim,
        b: bw.bytes_per_sec(),
        tau: tau.secs(),
        horizon: horizon.secs(),
    })
}

pub fn simulate(spec: &FairnessSpec, config: &ScenarioConfig) -> Result<SimOutput, ScenarioError> {
    let s = setup(spec, config)?;
    Ok(run(&s.topology, &s.flows, &s.sim)?)
}

/// One interval between consecutive events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessInterval {
    pub start: f64,
    pub end: f64,
    pub active: Vec<String>,
    /// Smallest Jain index of window-averaged rates once the settle period is over.
    pub min_jain: Option<f64>,
    /// Seconds after the event until the Jain index stays at or above 0.95.
    pub time_to_fair: Option<f64>,
    /// Mean throughput per active flow after the settle period, bytes/s.
    pub throughput: Vec<f64>,
    /// Mean window per active flow after the settle period, bytes.
    pub cwnd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessSummary {
    pub tau: f64,
    pub intervals: Vec<FairnessInterval>,
    /// Minimum of `min_jain` over all intervals.
    pub worst_jain: Option<f64>,
    /// Aggregate throughput over b while any flow is active.
    pub utilization: Option<f64>,
}

pub const JAIN_TARGET: f64 = 0.95;

/// Averages samples into consecutive buckets of length `w` starting at `from`.
fn bucket_means(s: &[(f64, f64)], from: f64, to: f64, w: f64) -> Vec<f64> {
    let n = ((to - from) / w).floor().max(0.0) as usize;
    (0..n)
        .filter_map(|k| {
            let a = from + k as f64 * w;
            mean(&window(s, a, a + w))
        })
        .collect()
}

pub fn summarize(
    spec: &FairnessSpec,
    config: &ScenarioConfig,
    metrics: &[MetricRecord],
) -> Result<FairnessSummary, ScenarioError> {
    let s = setup(spec, config)?;
    let names: Vec<String> = s.flows.iter().map(|f| f.name.clone()).collect();
    let thr: Vec<_> = names.iter().map(|n| series(metrics, n, MetricKind::Throughput)).collect();
    let cwnd: Vec<_> = names.iter().map(|n| series(metrics, n, MetricKind::Cwnd)).collect();
    let mut events = spec.events();
    events.push(s.horizon);

    let mut intervals = Vec::new();
    for pair in events.windows(2) {
        let (start, end) = (pair[0], pair[1]);
        let active: Vec<usize> = (0..names.len()).filter(|&i| spec.active(i, start)).collect();
        if active.is_empty() {
            continue;
        }
        let w = spec.rate_window_rtts * s.tau;
        let buckets: Vec<Vec<f64>> = active.iter().map(|&i| bucket_means(&thr[i], start, end, w)).collect();
        let n_buckets = buckets.iter().map(Vec::len).min().unwrap_or(0);
        let jain: Vec<Option<f64>> = (0..n_buckets)
            .map(|k| jain_index(&buckets.iter().map(|b| b[k]).collect::<Vec<_>>()).ok())
            .collect();
        let settle = ((spec.settle_rtts / spec.rate_window_rtts).ceil() as usize).min(n_buckets);
        let min_jain = jain[settle..]
            .iter()
            .map(|j| j.unwrap_or(0.0))
            .reduce(f64::min);
        let last_unfair = jain.iter().rposition(|j| !j.is_some_and(|j| j >= JAIN_TARGET));
        let time_to_fair = match last_unfair {
            None => Some(0.0),
            Some(k) if k + 1 < n_buckets => Some((k + 1) as f64 * w),
            Some(_) => None,
        };
        let from = start + spec.settle_rtts * s.tau;
        let avg = |v: &[(f64, f64)]| mean(&window(v, from, end)).unwrap_or(0.0);
        intervals.push(FairnessInterval {
            start,
            end,
            active: active.iter().map(|&i| names[i].clone()).collect(),
            min_jain,
            time_to_fair,
            throughput: active.iter().map(|&i| avg(&thr[i])).collect(),
            cwnd: active.iter().map(|&i| avg(&cwnd[i])).collect(),
        });
    }
    let worst_jain = intervals.iter().filter_map(|i| i.min_jain).reduce(f64::min);
    let busy: Vec<f64> = intervals
        .iter()
        .filter(|i| i.min_jain.is_some())
        .map(|i| i.throughput.iter().sum::<f64>() / s.b)
        .collect();
    Ok(FairnessSummary {
        tau: s.tau,
        intervals,
        worst_jain,
        utilization: mean(&busy),
    })
}

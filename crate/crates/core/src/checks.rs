//! Acceptance criteria as runnable checks.
//!
//! Each check runs its own fluid integrations or scenarios and reports a
//! verdict with the measured values next to the tolerance they were held to.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cc::{norm_power, smooth, theta_norm_power, AckContext, CcState};
use crate::fluid::{self, FluidParams, FluidState};
use crate::model::{LawKind, Smoothing, EPS_POW};
use crate::scenarios::fairness::FairnessSpec;
use crate::scenarios::incast::{self, IncastSpec};
use crate::scenarios::ramp::RampSpec;
use crate::scenarios::rdcn::RdcnScenarioSpec;
use crate::scenarios::{self, Scenario, ScenarioConfig, Summary};
use crate::sim::{self, MetricKind};
use crate::telemetry::IntHeader;
use crate::units::{Bandwidth, Duration, SimTime};

type CheckResult = Result<(bool, String), Box<dyn std::error::Error + Send + Sync>>;

/// Hooks for negative controls. The default runs every check as specified.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckOptions {
    /// Replaces γ in the convergence-constant check.
    pub gamma: Option<f64>,
    /// Smoothing used by the packet-scale power identity check.
    pub smoothing: Smoothing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Wall-clock seconds.
    pub elapsed: f64,
}

pub const CRITERIA: [(u32, &str); 11] = [
    (1, "fluid equilibrium"),
    (2, "linearized eigenvalues"),
    (3, "convergence constant"),
    (4, "packet fairness"),
    (5, "gradient law has no unique equilibrium"),
    (6, "throughput-loss contrast"),
    (7, "power identity at packet scale"),
    (8, "incast reaction"),
    (9, "delay-only variant"),
    (10, "rdcn circuit utilization"),
    (11, "determinism"),
];

pub fn run_check(id: u32, opts: &CheckOptions) -> CheckOutcome {
    let start = Instant::now();
    let result = match id {
        1 => equilibrium(),
        2 => eigenvalues(),
        3 => convergence(opts),
        4 => fairness(),
        5 => gradient_multiplicity(),
        6 => throughput_loss(),
        7 => power_identity(opts),
        8 => incast_reaction(),
        9 => theta_variant(),
        10 => rdcn_utilization(),
        11 => determinism(),
        _ => Err(format!("no criterion {id}").into()),
    };
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckOutcome {
        id,
        name: CRITERIA
            .iter()
            .find(|c| c.0 == id)
            .map_or("unknown", |c| c.1)
            .to_string(),
        passed,
        detail,
        elapsed: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all(opts: &CheckOptions) -> Vec<CheckOutcome> {
    CRITERIA.iter().map(|&(id, _)| run_check(id, opts)).collect()
}

const B: f64 = 12.5e9;
const TAU_US: f64 = 20.0;

fn fluid_params(law: LawKind, gamma: f64, tau_us: f64, dt_us: f64, beta_hat: f64) -> Result<FluidParams, fluid::FluidError> {
    FluidParams::new(
        Bandwidth::from_bytes_per_sec(B),
        Duration::from_micros(tau_us),
        gamma,
        Duration::from_micros(dt_us),
        beta_hat,
        law,
    )
}

fn integrate(p: &FluidParams, w: f64, q: f64, horizon_us: f64) -> Result<fluid::FluidTrajectory, fluid::FluidError> {
    fluid::integrate(
        p,
        FluidState { w, q, t: 0.0 },
        Duration::from_micros(horizon_us),
        Duration::from_secs(p.tau.secs() / 200.0),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn equilibrium() -> CheckResult {
    let p = fluid_params(LawKind::PowerTcp, 0.9, TAU_US, TAU_US, 5_000.0)?;
    let bdp = p.bdp();
    let starts = [
        (0.5 * bdp, 0.0),
        (2.0 * bdp, bdp),
        (0.1 * bdp, 4.0 * bdp),
        (3.0 * bdp, 0.0),
        (bdp, 2.0 * bdp),
        (1_000.0, 0.0),
    ];
    let (mut worst, mut slowest) = (0.0f64, 0.0f64);
    for (w, q) in starts {
        let t = Instant::now();
        let tr = integrate(&p, w, q, 2_000.0)?;
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let end = tr.last();
        worst = worst.max(rel(end.w, 255_000.0)).max(rel(end.q, 5_000.0));
    }
    Ok((
        worst <= 0.005 && slowest < 1.0,
        format!(
            "{} starts, worst relative error {worst:.2e} (tol 5e-3), slowest trajectory {slowest:.3} s (tol 1 s)",
            starts.len()
        ),
    ))
}

fn eigenvalues() -> CheckResult {
    let mut worst = 0.0f64;
    for k in 0..10 {
        let tau_us = 10.0 + 10.0 * k as f64;
        let gamma = 0.1 + 0.1 * k as f64;
        let p = fluid_params(LawKind::PowerTcp, gamma, tau_us, tau_us, 0.0)?;
        worst = worst.max(fluid::linearized_eigenvalues(&p)?.max_rel_error());
    }
    Ok((worst <= 1e-6, format!("10-point grid, worst relative error {worst:.2e} (tol 1e-6)")))
}

fn convergence(opts: &CheckOptions) -> CheckResult {
    let mut parts = Vec::new();
    let mut ok = true;
    for (gamma, dt_us) in [(0.9, 20.0), (0.45, 20.0), (0.9, 50.0)] {
        let gamma = opts.gamma.unwrap_or(gamma);
        let p = fluid_params(LawKind::PowerTcp, gamma, TAU_US, dt_us, 5_000.0)?;
        let expected = 5.0 * dt_us * 1e-6 / gamma;
        let horizon_us = if expected.is_finite() { 4.0 * expected * 1e6 } else { 2_000.0 };
        let tr = integrate(&p, 0.5 * p.bdp(), 0.0, horizon_us)?;
        match fluid::convergence_time(&tr, p.bdp() + p.beta_hat) {
            Ok(t) => {
                let e = rel(t.secs(), expected);
                ok &= e <= 0.05;
                parts.push(format!(
                    "γ={gamma} δt={dt_us}µs: {:.1} µs vs {:.1} µs",
                    t.secs() * 1e6,
                    expected * 1e6
                ));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("γ={gamma} δt={dt_us}µs: {e}"));
            }
        }
    }
    Ok((ok, format!("{} (tol ±5%)", parts.join("; "))))
}

fn run_scenario(law: LawKind, scenario: Scenario) -> Result<scenarios::ScenarioResult, scenarios::ScenarioError> {
    scenarios::run(&ScenarioConfig::new(law, scenario))
}

fn fairness() -> CheckResult {
    let r = run_scenario(LawKind::PowerTcp, Scenario::Fairness(FairnessSpec::weighted(3.0)))?;
    let Summary::Fairness(w) = r.summary else { unreachable!() };
    let iv = w.intervals.first().ok_or("weighted run has no interval")?;
    let ratio = iv.throughput[1] / iv.throughput[0];
    let r = run_scenario(LawKind::PowerTcp, Scenario::Fairness(FairnessSpec::default()))?;
    let Summary::Fairness(f) = r.summary else { unreachable!() };
    let jain = f.worst_jain.unwrap_or(0.0);
    Ok((
        rel(ratio, 3.0) <= 0.1 && jain >= 0.95,
        format!(
            "1:3 weights give throughput ratio {ratio:.3} (tol 3 ± 10%); worst Jain 20 RTTs after each event {jain:.4} (tol ≥ 0.95)"
        ),
    ))
}

/// Final `(w, q)` of each law from a spread of initial states.
fn final_states(law: LawKind, beta_hat: f64) -> Result<(FluidParams, Vec<FluidState>), fluid::FluidError> {
    let p = fluid_params(law, 0.9, TAU_US, TAU_US, beta_hat)?;
    let bdp = p.bdp();
    let mut ends = Vec::new();
    for (w, q) in [(0.5 * bdp, 0.0), (2.0 * bdp, bdp), (1.2 * bdp, 0.5 * bdp)] {
        ends.push(*integrate(&p, w, q, 5_000.0)?.last());
    }
    Ok((p, ends))
}

fn spread(v: impl Iterator<Item = f64> + Clone) -> f64 {
    v.clone().fold(f64::NEG_INFINITY, f64::max) - v.fold(f64::INFINITY, f64::min)
}

fn gradient_multiplicity() -> CheckResult {
    // With β̂ > 0 the gradient law has no fixed point at all and drifts; with
    // β̂ = 0 every flat queue is one, so where it stops depends on the start.
    let (p, ends) = final_states(LawKind::RttGradientCurrent, 0.0)?;
    let bdp = p.bdp();
    let grad = spread(ends.iter().map(|s| s.q)) / bdp;
    let mut ok = grad > 0.1;
    let mut parts = vec![format!("gradient law final-queue spread {grad:.3}·bτ (tol > 0.1)")];
    for law in [LawKind::QueueLenVoltage, LawKind::DelayVoltage, LawKind::PowerTcp] {
        let (_, ends) = final_states(law, 5_000.0)?;
        let mean_w = ends.iter().map(|s| s.w).sum::<f64>() / ends.len() as f64;
        let dq = spread(ends.iter().map(|s| s.q)) / bdp;
        let dw = spread(ends.iter().map(|s| s.w)) / mean_w;
        ok &= dq <= 0.005 && dw <= 0.005;
        parts.push(format!("{}: queue spread {dq:.1e}·bτ, window spread {dw:.1e}", law.name()));
    }
    Ok((ok, format!("{} (tol 5e-3)", parts.join("; "))))
}

fn throughput_loss() -> CheckResult {
    let q_law = fluid_params(LawKind::QueueLenVoltage, 0.9, TAU_US, TAU_US, 5_000.0)?;
    let bdp = q_law.bdp();
    let tr = integrate(&q_law, 2.0 * bdp, bdp, 1_000.0)?;
    let starved = tr.samples.iter().find(|s| s.w < bdp && s.q == 0.0);
    let p = fluid_params(LawKind::PowerTcp, 0.9, TAU_US, TAU_US, 5_000.0)?;
    let min_w = integrate(&p, 2.0 * bdp, bdp, 1_000.0)?.min_w() / bdp;
    let detail = match starved {
        Some(s) => format!("queue law reaches w = {:.3}·bτ with an empty queue at {:.1} µs", s.w / bdp, s.t * 1e6),
        None => format!("queue law never drains below bτ (min w {:.3}·bτ)", tr.min_w() / bdp),
    };
    Ok((
        starved.is_some() && min_w >= 0.99,
        format!("{detail}; PowerTCP min w {min_w:.4}·bτ (tol ≥ 0.99)"),
    ))
}

/// Linear interpolation into a time-ordered series, clamped at its ends.
fn interp(s: &[(f64, f64)], t: f64) -> f64 {
    let i = s.partition_point(|x| x.0 < t);
    if i == 0 {
        return s.first().map_or(0.0, |x| x.1);
    }
    if i == s.len() {
        return s[i - 1].1;
    }
    let (a, b) = (s[i - 1], s[i]);
    a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
}

/// Agreement counts of the packet-scale power identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerIdentityReport {
    /// Acks whose telemetry shows the bottleneck queue above β̂ + 1 MSS.
    pub congested: (usize, usize),
    /// Acks with a non-empty queue at or below that level.
    pub settled: (usize, usize),
}

fn share((good, total): (usize, usize)) -> f64 {
    if total == 0 {
        0.0
    } else {
        good as f64 / total as f64
    }
}

/// Compares each sender's smoothed power estimate against `b·w(t - t_f)`,
/// where `w` is the aggregate inflight of all flows shifted by each flow's
/// forward delay, both sides put through the same τ-long averaging. Samples
/// within 10% count as agreeing.
pub fn power_identity_report(smoothing: Smoothing) -> Result<PowerIdentityReport, Box<dyn std::error::Error + Send + Sync>> {
    // The identity assumes one base RTT, so every sender gets the same one.
    let spec = IncastSpec {
        symmetric: true,
        ..IncastSpec::default()
    };
    let mut config = ScenarioConfig::new(LawKind::PowerTcp, Scenario::Incast(spec.clone()));
    config.params.smoothing = Some(smoothing);
    config.run.sample_interval_us = Some(0.25);
    let mut s = incast::setup(&spec, &config)?;
    s.sim.ack_log = true;
    s.sim.control_trace = true;
    let out = sim::run(&s.topology, &s.flows, &s.sim)?;
    let bottleneck = s.topology.link_by_name(&s.bottleneck).ok_or("bottleneck missing")? as u32;
    let inflight: Vec<_> = s
        .flows
        .iter()
        .map(|f| sim::metrics::series(&out.metrics, &f.name, MetricKind::Inflight))
        .collect();
    let bdp = s.b * s.tau;
    let oracle = |t: f64| {
        inflight
            .iter()
            .zip(&s.forward_delay)
            .map(|(w, fd)| interp(w, t - fd))
            .sum::<f64>()
            / bdp
    };
    let epsilon = s.beta_hat + crate::model::MSS;

    let mut report = PowerIdentityReport {
        congested: (0, 0),
        settled: (0, 0),
    };
    for (f, trace) in out.control.iter().enumerate() {
        let acks: Vec<_> = out.ack_log.iter().filter(|a| a.flow == f).collect();
        if acks.len() != trace.len() {
            return Err(format!("flow {f}: {} acks but {} control rows", acks.len(), trace.len()).into());
        }
        let mut filtered: Option<(f64, f64)> = None;
        let mut t_first = None;
        for (a, row) in acks.iter().zip(trace) {
            let Some(hop) = a.hops.iter().find(|h| h.port == bottleneck) else { continue };
            let t = hop.ts.secs();
            let g = match filtered {
                None => 1.0,
                Some((g, t0)) => smooth(g, oracle(t), t - t0, s.tau, Smoothing::Ewma),
            };
            filtered = Some((g, t));
            // Both estimates start from the neutral value; give them 3τ.
            if t - *t_first.get_or_insert(t) < 3.0 * s.tau || hop.qlen == 0 {
                continue;
            }
            let bucket = if hop.qlen as f64 > epsilon {
                &mut report.congested
            } else {
                &mut report.settled
            };
            bucket.1 += 1;
            if rel(row.gamma_smooth, g) <= 0.1 {
                bucket.0 += 1;
            }
        }
    }
    Ok(report)
}

fn power_identity(opts: &CheckOptions) -> CheckResult {
    let start = Instant::now();
    let r = power_identity_report(opts.smoothing)?;
    let secs = start.elapsed().as_secs_f64();
    let frac = share(r.congested);
    Ok((
        r.congested.1 > 0 && frac >= 0.9 && secs < 10.0,
        format!(
            "{}/{} congested samples within 10% ({:.1}%, tol ≥ 90%); settled samples {:.1}%; {secs:.2} s (tol 10 s)",
            r.congested.0,
            r.congested.1,
            100.0 * frac,
            100.0 * share(r.settled)
        ),
    ))
}

fn incast_summary(law: LawKind) -> Result<(incast::IncastSummary, scenarios::ScenarioResult), scenarios::ScenarioError> {
    let r = run_scenario(law, Scenario::Incast(IncastSpec::default()))?;
    let Summary::Incast(s) = r.summary.clone() else { unreachable!() };
    Ok((s, r))
}

fn incast_reaction() -> CheckResult {
    let (p, _) = incast_summary(LawKind::PowerTcp)?;
    let (q, _) = incast_summary(LawKind::QueueLenVoltage)?;
    let util = p.utilization.unwrap_or(0.0);
    let standing = p.standing_queue.unwrap_or(f64::INFINITY);
    let ratio = q.peak_queue / p.peak_queue;
    Ok((
        util >= 0.95 && standing <= p.epsilon && p.drops == 0 && ratio >= 1.5,
        format!(
            "utilization {util:.3} (tol ≥ 0.95), standing queue {standing:.0} B (tol ≤ {:.0} B), drops {}, \
             queue-law peak {:.0} B over PowerTCP peak {:.0} B = {ratio:.2} (tol ≥ 1.5)",
            p.epsilon, p.drops, q.peak_queue, p.peak_queue
        ),
    ))
}

/// Per-ack identity of the two power estimates at the bottleneck hop,
/// restricted to acks whose telemetry shows the link transmitting at line
/// rate. The delay-only side gets the RTT the queue implies, `τ + q/b`,
/// sampled at the telemetry timestamp.
fn theta_identity() -> Result<(usize, f64), Box<dyn std::error::Error + Send + Sync>> {
    let spec = IncastSpec {
        horizon_us: 1_000.0,
        ..IncastSpec::default()
    };
    let config = ScenarioConfig::new(LawKind::PowerTcp, Scenario::Incast(spec.clone()));
    let mut s = incast::setup(&spec, &config)?;
    s.sim.ack_log = true;
    let out = sim::run(&s.topology, &s.flows, &s.sim)?;
    let bottleneck = s.topology.link_by_name(&s.bottleneck).ok_or("bottleneck missing")? as u32;
    let params = s.flows[0].params;
    let tau = params.tau;
    let state = CcState::new(&params);
    let (mut n, mut worst) = (0usize, 0.0f64);
    for f in 0..s.flows.len() {
        let mut prev = None;
        for a in out.ack_log.iter().filter(|a| a.flow == f) {
            let Some(hop) = a.hops.iter().find(|h| h.port == bottleneck).copied() else { continue };
            if let Some(p) = prev.replace(hop) {
                let dt = hop.ts.secs_since(p.ts);
                let b = hop.bandwidth.bytes_per_sec();
                let mu = (hop.tx_bytes - p.tx_bytes) as f64 / dt;
                if dt <= 0.0 || rel(mu, b) > 1e-12 {
                    continue;
                }
                let ctx = AckContext {
                    seq: a.seq,
                    snd_nxt: a.seq,
                    recv_time: SimTime::from_secs(a.t),
                    rtt: Duration::from_secs(a.rtt),
                    int_header: Some(IntHeader::from_hops(vec![hop])),
                };
                let Some(power) = norm_power(&ctx, &[p], &params, &state)?.max_norm() else { continue };
                let rtt = |q: u64| Duration::from_secs(tau.secs() + q as f64 / b);
                let theta = theta_norm_power(rtt(hop.qlen), rtt(p.qlen), hop.ts, p.ts, tau).ok_or("zero dt")?;
                // Both laws divide by the power floored at EPS_POW.
                let power = power.max(EPS_POW);
                worst = worst.max(rel(theta, power));
                n += 1;
            }
        }
    }
    Ok((n, worst))
}

fn theta_variant() -> CheckResult {
    let (n, worst) = theta_identity()?;
    let ramp = |law| -> Result<Option<f64>, scenarios::ScenarioError> {
        let r = run_scenario(law, Scenario::Ramp(RampSpec::default()))?;
        let Summary::Ramp(s) = r.summary else { unreachable!() };
        Ok(s.ramp_time)
    };
    let (p, t) = (ramp(LawKind::PowerTcp)?, ramp(LawKind::ThetaPowerTcp)?);
    let us = |x: Option<f64>| x.map_or("never".to_string(), |v| format!("{:.1} µs", v * 1e6));
    let ratio = match (p, t) {
        (Some(p), Some(t)) => t / p,
        (Some(_), None) => f64::INFINITY,
        _ => 0.0,
    };
    Ok((
        n >= 100 && worst <= 1e-9 && ratio >= 2.0,
        format!(
            "{n} line-rate acks, worst relative gap {worst:.1e} (tol 1e-9); ramp to 95% of b: \
             PowerTCP {}, delay-only {} (ratio {ratio:.2}, tol ≥ 2)",
            us(p),
            us(t)
        ),
    ))
}

fn rdcn_utilization() -> CheckResult {
    let start = Instant::now();
    let r = run_scenario(LawKind::PowerTcp, Scenario::Rdcn(RdcnScenarioSpec::default()))?;
    let secs = start.elapsed().as_secs_f64();
    let Summary::Rdcn(p) = r.summary else { unreachable!() };
    let r = run_scenario(LawKind::QueueLenVoltage, Scenario::Rdcn(RdcnScenarioSpec::default()))?;
    let Summary::Rdcn(q) = r.summary else { unreachable!() };
    let min_util = p.min_steady_utilization.unwrap_or(0.0);
    let standing = p.max_standing_queue.unwrap_or(f64::INFINITY);
    let steady = p.days.iter().filter(|d| !d.warmup).count();
    Ok((
        steady > 0
            && min_util >= 0.8
            && standing <= p.epsilon
            && q.mean_steady_utilization < p.mean_steady_utilization
            && secs < 30.0,
        format!(
            "{steady} steady days, min utilization {min_util:.3} (tol ≥ 0.8), VOQ standing queue {standing:.0} B \
             (tol ≤ {:.0} B), mean utilization {:.3} vs queue law {:.3} (tol strictly higher), {secs:.2} s (tol 30 s)",
            p.epsilon, p.mean_steady_utilization, q.mean_steady_utilization
        ),
    ))
}

fn determinism() -> CheckResult {
    let mut diverged = Vec::new();
    let scenarios = ["incast", "fairness", "rdcn", "ramp"];
    for name in scenarios {
        let config = ScenarioConfig::new(LawKind::PowerTcp, Scenario::by_name(name).ok_or("unknown scenario")?);
        let a = scenarios::run(&config)?.summary_json();
        let b = scenarios::run(&config)?.summary_json();
        if a != b {
            diverged.push(name);
        }
    }
    Ok((
        diverged.is_empty(),
        if diverged.is_empty() {
            format!("{} scenarios rerun with bit-identical summaries", scenarios.len())
        } else {
            format!("summaries differ for {}", diverged.join(", "))
        },
    ))
}

use super::topology::{dumbbell, parking_lot, DumbbellSpec};
use super::*;
use crate::model::{CcParams, LawKind};
use crate::units::{Bandwidth, Duration};

fn us(v: f64) -> Duration {
    Duration::from_micros(v)
}

fn g(v: f64) -> Bandwidth {
    Bandwidth::from_gbps(v)
}

/// `n` senders at `host` Gbps into one receiver behind a `bottleneck` link.
fn star(n: usize, host: f64, bottleneck: f64) -> topology::Dumbbell {
    dumbbell(&DumbbellSpec {
        host_bw: g(host),
        bottleneck_bw: g(bottleneck),
        sender_props: vec![us(4.0); n],
        n_receivers: 1,
        receiver_prop: us(1.0),
        buffer_cap: 4_000_000,
    })
}

fn flows(d: &topology::Dumbbell, params: CcParams) -> Vec<FlowSpec> {
    d.senders
        .iter()
        .enumerate()
        .map(|(i, &s)| FlowSpec::persistent(format!("f{i}"), s, d.receivers[0], Duration::ZERO, params))
        .collect()
}

fn tau_of(d: &topology::Dumbbell) -> Duration {
    d.topology.base_rtt(d.senders[0], d.receivers[0]).unwrap()
}

#[test]
fn back_to_back_telemetry_recovers_line_rate() {
    let d = star(1, 100.0, 100.0);
    let tau = tau_of(&d);
    let params = CcParams::new(0.9, tau, g(100.0), 1).unwrap();
    let mut cfg = SimConfig::new(LawKind::PowerTcp, us(30.0), us(5.0));
    cfg.ack_log = true;
    let out = run(&d.topology, &flows(&d, params), &cfg).unwrap();
    assert!(out.ack_log.len() > 10);
    let (a, b) = (&out.ack_log[1].hops[0], &out.ack_log[2].hops[0]);
    assert_eq!((b.ts - a.ts).ps(), 80_000);
    assert_eq!(b.tx_bytes - a.tx_bytes, 1000);
    let mu = (b.tx_bytes - a.tx_bytes) as f64 / b.ts.secs_since(a.ts);
    assert!((mu / 12.5e9 - 1.0).abs() < 1e-12, "{mu}");
}

#[test]
fn zero_flows_leave_queues_empty() {
    let d = star(2, 100.0, 100.0);
    let cfg = SimConfig::new(LawKind::PowerTcp, us(100.0), us(5.0));
    let out = run(&d.topology, &[], &cfg).unwrap();
    assert!(out.flows.is_empty());
    assert!(!out.stalled);
    assert!(out
        .metrics
        .iter()
        .all(|r| r.value == 0.0 && r.kind != MetricKind::Cwnd));
    assert_eq!(out.metrics.iter().filter(|r| r.kind == MetricKind::Qlen).count(), 20);
}

#[test]
fn pacing_gap_follows_rate() {
    // Window wide open, so spacing at the receiver is set by pacing alone.
    let d = star(1, 100.0, 100.0);
    let tau = tau_of(&d);
    let mut params = CcParams::new(0.9, tau, g(100.0), 1).unwrap();
    params.cwnd_init = 1e9;
    let mut cfg = SimConfig::new(LawKind::DelayVoltage, us(10.0), us(5.0));
    cfg.control_trace = true;
    let out = run(&d.topology, &flows(&d, params), &cfg).unwrap();
    // Before the first ack returns everything leaves at line rate: 80 ns apart.
    assert!(out.flows[0].packets_sent >= (tau.secs() / 80e-9) as u64 - 1);
}

#[test]
fn window_gates_transmission() {
    let d = star(1, 100.0, 100.0);
    let tau = tau_of(&d);
    let mut params = CcParams::new(0.9, tau, g(100.0), 1).unwrap();
    params.cwnd_init = 3000.0;
    let cfg = SimConfig::new(LawKind::PowerTcp, Duration::from_secs(tau.secs() * 0.9), us(1.0));
    let out = run(&d.topology, &flows(&d, params), &cfg).unwrap();
    // No ack can have returned yet: exactly three segments left.
    assert_eq!(out.flows[0].packets_sent, 3);
}

#[test]
fn sized_flow_completes_and_reports_fct() {
    let d = star(1, 100.0, 100.0);
    let tau = tau_of(&d);
    let params = CcParams::new(0.9, tau, g(100.0), 1).unwrap();
    let f = vec![FlowSpec::persistent("f", d.senders[0], d.receivers[0], us(1.0), params).sized(10_500)];
    let cfg = SimConfig::new(LawKind::PowerTcp, us(200.0), us(5.0));
    let out = run(&d.topology, &f, &cfg).unwrap();
    let st = &out.flows[0];
    assert_eq!(st.bytes_acked, 10_500);
    assert_eq!(st.packets_sent, 11);
    // The 500 B tail leaves the host 840 ns in but queues behind the tenth
    // segment at the switch, so it lands 9.5 full-segment times after a
    // lone segment would have.
    let fct = st.fct.unwrap();
    assert!((fct - (tau.secs() + 9.5 * 80e-9)).abs() < 1e-12, "{fct}");
    let m = metrics::series(&out.metrics, "f", MetricKind::Fct);
    assert_eq!(m.len(), 1);
    assert_eq!(m[0].1, fct);
}

#[test]
fn single_flow_settles_at_fluid_equilibrium() {
    // 100G host into a 50G bottleneck: throughput → b and queue → β.
    let d = star(1, 100.0, 50.0);
    let tau = tau_of(&d);
    let params = CcParams::new(0.9, tau, g(100.0), 1).unwrap();
    let beta = params.beta;
    let cfg = SimConfig::new(LawKind::PowerTcp, Duration::from_secs(10e-3), us(5.0));
    let out = run(&d.topology, &flows(&d, params), &cfg).unwrap();
    let link = &d.topology.links[d.bottlenecks[0]].name;
    let tail = |kind| -> f64 {
        let s = metrics::series(&out.metrics, link, kind);
        let last = &s[s.len() / 2..];
        last.iter().map(|x| x.1).sum::<f64>() / last.len() as f64
    };
    let thr = tail(MetricKind::Throughput);
    let q = tail(MetricKind::Qlen);
    assert!((thr / 6.25e9 - 1.0).abs() < 0.01, "throughput {thr}");
    assert!((q / beta - 1.0).abs() < 0.05, "queue {q} vs {beta}");
    assert_eq!(out.drops, 0);
}

#[test]
fn identical_runs_are_bit_identical() {
    let d = star(4, 100.0, 100.0);
    let tau = tau_of(&d);
    let params = CcParams::new(0.9, tau, g(100.0), 4).unwrap();
    let mut cfg = SimConfig::new(LawKind::PowerTcp, us(500.0), us(5.0));
    cfg.seed = 7;
    cfg.start_jitter = us(2.0);
    let a = run(&d.topology, &flows(&d, params), &cfg).unwrap();
    let b = run(&d.topology, &flows(&d, params), &cfg).unwrap();
    let mut ba = Vec::new();
    let mut bb = Vec::new();
    metrics::write_ndjson(&a.metrics, &mut ba).unwrap();
    metrics::write_ndjson(&b.metrics, &mut bb).unwrap();
    assert_eq!(ba, bb);
    assert_eq!(a.flows, b.flows);
    cfg.seed = 8;
    let c = run(&d.topology, &flows(&d, params), &cfg).unwrap();
    assert_ne!(a.flows, c.flows);
}

#[test]
fn audit_holds_under_incast_for_every_law() {
    let d = star(8, 100.0, 100.0);
    let tau = tau_of(&d);
    for law in LawKind::ALL {
        let params = CcParams::new(0.9, tau, g(100.0), 8).unwrap();
        let mut cfg = SimConfig::new(law, us(400.0), us(2.0));
        cfg.audit = true;
        let out = run(&d.topology, &flows(&d, params), &cfg).unwrap();
        assert!(out.audit_violations.is_empty(), "{law}: {:?}", &out.audit_violations[..3.min(out.audit_violations.len())]);
        assert!(out.flows.iter().all(|f| f.cc_errors == 0), "{law}");
    }
}

#[test]
fn drops_are_counted_and_released() {
    let mut d = star(8, 100.0, 100.0);
    for l in &mut d.topology.links {
        l.buffer_cap = 20_000;
    }
    let tau = tau_of(&d);
    let params = CcParams::new(0.9, tau, g(100.0), 1).unwrap();
    let mut cfg = SimConfig::new(LawKind::PowerTcp, us(200.0), us(2.0));
    cfg.audit = true;
    let out = run(&d.topology, &flows(&d, params), &cfg).unwrap();
    assert!(out.drops > 0);
    assert_eq!(out.flows.iter().map(|f| f.packets_dropped).sum::<u64>(), out.drops);
    assert!(out.audit_violations.is_empty(), "{:?}", out.audit_violations.first());
    let peak = out.links[d.bottlenecks[0]].max_qlen;
    assert!(peak <= 20_000);
}

#[test]
fn parking_lot_long_flow_sees_both_bottlenecks() {
    let pl = parking_lot(g(25.0), g(100.0), us(1.0), 4_000_000);
    let t = &pl.topology;
    let tau = t.max_base_rtt(&pl.pairs).unwrap();
    let params = CcParams::new(0.9, tau, g(100.0), 2).unwrap();
    let fl: Vec<_> = pl
        .pairs
        .iter()
        .enumerate()
        .map(|(i, &(s, r))| FlowSpec::persistent(format!("f{i}"), s, r, Duration::ZERO, params))
        .collect();
    let mut cfg = SimConfig::new(LawKind::PowerTcp, Duration::from_secs(5e-3), us(5.0));
    cfg.ack_log = true;
    let out = run(t, &fl, &cfg).unwrap();
    assert!(out.ack_log.iter().filter(|r| r.flow == 0).all(|r| r.hops.len() == 3));
    // Every flow gets a share and neither bottleneck is overrun.
    for (i, f) in out.flows.iter().enumerate() {
        assert!(f.bytes_acked > 1_000_000, "flow {i} starved");
    }
    for l in pl.bottlenecks {
        let s = metrics::series(&out.metrics, &t.links[l].name, MetricKind::Throughput);
        assert!(s.iter().all(|x| x.1 <= 25.0 * 1.25e8 * 1.0001));
    }
}

#[test]
fn rejects_bad_flows() {
    let d = star(1, 100.0, 100.0);
    let params = CcParams::new(0.9, us(10.0), g(100.0), 1).unwrap();
    let cfg = SimConfig::new(LawKind::PowerTcp, us(10.0), us(1.0));
    let bad = FlowSpec::persistent("x", 0, d.receivers[0], Duration::ZERO, params);
    assert!(matches!(run(&d.topology, &[bad], &cfg), Err(SimError::BadFlow { .. })));
    let cfg0 = SimConfig::new(LawKind::PowerTcp, us(10.0), Duration::ZERO);
    assert_eq!(run(&d.topology, &[], &cfg0).unwrap_err(), SimError::BadSampleInterval);
}

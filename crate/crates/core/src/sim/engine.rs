//! The event loop: hosts, switch ports, VOQs, circuit fabric and sampling.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::circuit::{circuit_step, CircuitPhase};
use super::metrics::{MetricKind, MetricRecord};
use super::packet::{FlowSpec, Packet, PacketKind};
use super::topology::{LinkId, NodeId, Topology, TopologyError};
use crate::cc::{AckContext, CcEngine, ControlTraceRow};
use crate::model::{LawKind, LinkState, MSS_BYTES};
use crate::telemetry::{int_attach, int_push_hop, IntHeader, IntHopRecord, H_MAX};
use crate::units::{Duration, ModelError, SimTime};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("flow {flow}: {reason}")]
    BadFlow { flow: String, reason: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Params(#[from] ModelError),
    #[error("sample interval must be positive")]
    BadSampleInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub law: LawKind,
    pub horizon: Duration,
    pub seed: u64,
    pub sample_interval: Duration,
    /// Each flow's start is delayed by a uniform draw from `[0, start_jitter)`.
    #[serde(default)]
    pub start_jitter: Duration,
    /// Check conservation, queue bounds and work conservation at every sample.
    #[serde(default)]
    pub audit: bool,
    /// Keep every ack's RTT and telemetry.
    #[serde(default)]
    pub ack_log: bool,
    #[serde(default)]
    pub control_trace: bool,
    #[serde(default = "default_int_capacity")]
    pub int_capacity: usize,
}

fn default_int_capacity() -> usize {
    H_MAX
}

impl SimConfig {
    pub fn new(law: LawKind, horizon: Duration, sample_interval: Duration) -> Self {
        SimConfig {
            law,
            horizon,
            seed: 0,
            sample_interval,
            start_jitter: Duration::ZERO,
            audit: false,
            ack_log: false,
            control_trace: false,
            int_capacity: H_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowStats {
    pub name: String,
    pub size: Option<u64>,
    pub start: f64,
    pub bytes_sent: u64,
    pub bytes_acked: u64,
    pub bytes_lost: u64,
    pub packets_sent: u64,
    pub packets_dropped: u64,
    pub fct: Option<f64>,
    pub final_cwnd: f64,
    pub cc_errors: u64,
    pub stale_feedback: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    pub name: String,
    pub tx_bytes: u64,
    pub drops: u64,
    pub max_qlen: u64,
}

/// Bytes one ToR's circuit port carried toward `peer` during one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitDay {
    pub tor: usize,
    pub peer: usize,
    pub slot: u64,
    pub start: f64,
    pub end: f64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AckLogRow {
    pub flow: usize,
    pub t: f64,
    pub seq: u64,
    pub rtt: f64,
    pub hops: Vec<IntHopRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimOutput {
    pub metrics: Vec<MetricRecord>,
    pub flows: Vec<FlowStats>,
    pub links: Vec<LinkStats>,
    /// Peak occupancy of each VOQ, as `("tor0.voq1", bytes)`.
    pub voq_max: Vec<(String, u64)>,
    pub circuit_days: Vec<CircuitDay>,
    pub ack_log: Vec<AckLogRow>,
    pub control: Vec<Vec<ControlTraceRow>>,
    pub drops: u64,
    pub int_overflows: u64,
    /// Event queue ran dry while some flow still had data to send.
    pub stalled: bool,
    pub end_time: f64,
    pub events: u64,
    pub audit_violations: Vec<String>,
}

enum EventKind {
    FlowStart(usize),
    FlowStop(usize),
    HostWake(NodeId),
    Arrival(NodeId, Packet),
    TxDone(LinkId),
    Sample,
    Circuit,
}

impl EventKind {
    fn is_periodic(&self) -> bool {
        matches!(self, EventKind::Sample | EventKind::Circuit)
    }
}

struct Event {
    time: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

struct Port {
    state: LinkState,
    fifo: VecDeque<Packet>,
    busy: bool,
    in_tx: Option<(Packet, NodeId)>,
    drops: u64,
    max_qlen: u64,
    interval_max: u64,
    tx_started: SimTime,
    sampled_tx: f64,
    /// Drained by a VOQ group rather than `fifo`.
    voq_owner: Option<NodeId>,
}

impl Port {
    /// Bytes serialized so far, counting the packet on the wire pro rata so
    /// that sampled throughput never exceeds the line rate.
    fn tx_progress(&self, now: SimTime) -> f64 {
        let done = self.state.tx_bytes_total as f64;
        match &self.in_tx {
            Some((p, _)) => {
                let ser = self.state.bandwidth.serialization(p.size).ps() as f64;
                let elapsed = (now - self.tx_started).ps() as f64;
                done + p.size as f64 * (elapsed / ser).min(1.0)
            }
            None => done,
        }
    }
}

struct Voq {
    queues: Vec<VecDeque<Packet>>,
    qlen: Vec<u64>,
    max: Vec<u64>,
    interval_max: Vec<u64>,
    rr: usize,
}

struct Host {
    flows: Vec<usize>,
    acks: VecDeque<Packet>,
    rr: usize,
    wake: Option<SimTime>,
    nic: Option<LinkId>,
}

struct Flow {
    spec: FlowSpec,
    cc: CcEngine,
    start: SimTime,
    line_rate_until: SimTime,
    active: bool,
    finished: bool,
    snd_nxt: u64,
    inflight: u64,
    acked: u64,
    lost: u64,
    next_send: SimTime,
    packets_sent: u64,
    packets_dropped: u64,
    cc_errors: u64,
    sampled_acked: u64,
    fct: Option<f64>,
}

impl Flow {
    fn remaining(&self) -> u64 {
        match self.spec.size {
            Some(s) => s.saturating_sub(self.snd_nxt),
            None => u64::MAX,
        }
    }

    fn window_open(&self) -> Option<u64> {
        if !self.active || self.finished {
            return None;
        }
        let payload = self.remaining().min(MSS_BYTES);
        if payload == 0 || (self.inflight + payload) as f64 > self.cc.cwnd() {
            return None;
        }
        Some(payload)
    }

    fn pending(&self) -> bool {
        self.active && !self.finished && self.remaining() > 0
    }
}

struct Sim<'a> {
    topo: &'a Topology,
    cfg: &'a SimConfig,
    now: SimTime,
    horizon: SimTime,
    heap: BinaryHeap<Event>,
    next_seq: u64,
    work_pending: u64,
    ports: Vec<Port>,
    voqs: Vec<Option<Voq>>,
    hosts: Vec<Host>,
    flows: Vec<Flow>,
    open_days: Vec<CircuitDay>,
    out: SimOutput,
    injected: u64,
    delivered: u64,
    propagating: u64,
}

/// Runs one simulation. Identical inputs give bit-identical outputs.
pub fn run(topo: &Topology, flows: &[FlowSpec], cfg: &SimConfig) -> Result<SimOutput, SimError> {
    if !(cfg.sample_interval.secs() > 0.0) {
        return Err(SimError::BadSampleInterval);
    }
    for f in flows {
        let bad = |reason: &str| SimError::BadFlow {
            flow: f.name.clone(),
            reason: reason.into(),
        };
        if !topo.is_host(f.src) || !topo.is_host(f.dst) {
            return Err(bad("endpoints must be hosts"));
        }
        if f.src == f.dst {
            return Err(bad("source and destination coincide"));
        }
        if topo.host_uplink(f.src).is_none() {
            return Err(bad("source has no link"));
        }
        topo.path(f.src, f.dst)?;
        topo.path(f.dst, f.src)?;
        f.params.validate()?;
    }
    let mut sim = Sim::new(topo, flows, cfg);
    sim.run();
    Ok(sim.finish())
}

impl<'a> Sim<'a> {
    fn new(topo: &'a Topology, specs: &[FlowSpec], cfg: &'a SimConfig) -> Self {
        let mut ports: Vec<Port> = topo
            .links
            .iter()
            .map(|l| Port {
                state: LinkState::new(l.bandwidth, l.buffer_cap),
                fifo: VecDeque::new(),
                busy: false,
                in_tx: None,
                drops: 0,
                max_qlen: 0,
                interval_max: 0,
                tx_started: SimTime::ZERO,
                sampled_tx: 0.0,
                voq_owner: None,
            })
            .collect();
        let n_tors = topo.tor_nodes.len();
        let voqs = topo
            .voq
            .iter()
            .enumerate()
            .map(|(node, v)| {
                v.as_ref().map(|v| {
                    ports[v.uplink].voq_owner = Some(node);
                    ports[v.circuit].voq_owner = Some(node);
                    Voq {
                        queues: vec![VecDeque::new(); n_tors],
                        qlen: vec![0; n_tors],
                        max: vec![0; n_tors],
                        interval_max: vec![0; n_tors],
                        rr: 0,
                    }
                })
            })
            .collect();
        let mut hosts: Vec<Host> = (0..topo.nodes.len())
            .map(|n| Host {
                flows: Vec::new(),
                acks: VecDeque::new(),
                rr: 0,
                wake: None,
                nic: topo.host_uplink(n),
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let jitter = cfg.start_jitter.secs();
        let flows: Vec<Flow> = specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                hosts[s.src].flows.push(i);
                let mut start = s.start.secs();
                if jitter > 0.0 {
                    start += rng.random_range(0.0..jitter);
                }
                let mut cc = CcEngine::new(cfg.law, s.params);
                if cfg.control_trace {
                    cc.enable_trace();
                }
                Flow {
                    spec: s.clone(),
                    cc,
                    start: SimTime::from_secs(start),
                    line_rate_until: SimTime::ZERO,
                    active: false,
                    finished: false,
                    snd_nxt: 0,
                    inflight: 0,
                    acked: 0,
                    lost: 0,
                    next_send: SimTime::ZERO,
                    packets_sent: 0,
                    packets_dropped: 0,
                    cc_errors: 0,
                    sampled_acked: 0,
                    fct: None,
                }
            })
            .collect();
        Sim {
            topo,
            cfg,
            now: SimTime::ZERO,
            horizon: SimTime::from_duration(cfg.horizon),
            heap: BinaryHeap::new(),
            next_seq: 0,
            work_pending: 0,
            ports,
            voqs,
            hosts,
            flows,
            open_days: Vec::new(),
            out: SimOutput::default(),
            injected: 0,
            delivered: 0,
            propagating: 0,
        }
    }

    fn schedule(&mut self, time: SimTime, kind: EventKind) {
        if !kind.is_periodic() {
            self.work_pending += 1;
        }
        self.heap.push(Event {
            time,
            seq: self.next_seq,
            kind,
        });
        self.next_seq += 1;
    }

    fn run(&mut self) {
        for i in 0..self.flows.len() {
            let start = self.flows[i].start;
            self.schedule(start, EventKind::FlowStart(i));
            if let Some(stop) = self.flows[i].spec.stop {
                self.schedule(SimTime::from_duration(stop), EventKind::FlowStop(i));
            }
        }
        self.schedule(SimTime::from_duration(self.cfg.sample_interval), EventKind::Sample);
        if self.topo.circuit.is_some() {
            self.schedule(SimTime::ZERO, EventKind::Circuit);
        }

        while let Some(ev) = self.heap.pop() {
            if ev.time > self.horizon {
                break;
            }
            self.now = ev.time;
            self.out.events += 1;
            if ev.kind.is_periodic() {
                if self.work_pending == 0 && self.flows.iter().any(Flow::pending) {
                    log::warn!("event queue exhausted at {} with flows pending", self.now);
                    self.out.stalled = true;
                    break;
                }
            } else {
                self.work_pending -= 1;
            }
            match ev.kind {
                EventKind::FlowStart(f) => self.flow_start(f),
                EventKind::FlowStop(f) => self.flows[f].active = false,
                EventKind::HostWake(h) => {
                    if self.hosts[h].wake == Some(self.now) {
                        self.hosts[h].wake = None;
                    }
                    self.try_send(h);
                }
                EventKind::Arrival(node, pkt) => {
                    self.propagating -= 1;
                    self.arrive(node, pkt);
                }
                EventKind::TxDone(l) => self.tx_done(l),
                EventKind::Sample => {
                    self.sample();
                    let next = self.now + SimTime::from_duration(self.cfg.sample_interval);
                    self.schedule(next, EventKind::Sample);
                }
                EventKind::Circuit => self.circuit_boundary(),
            }
        }
        self.out.end_time = self.now.secs();
    }

    fn flow_start(&mut self, f: usize) {
        let flow = &mut self.flows[f];
        flow.active = true;
        flow.start = self.now;
        flow.next_send = self.now;
        flow.line_rate_until = self.now + SimTime::from_duration(flow.spec.params.tau);
        let src = flow.spec.src;
        self.try_send(src);
    }

    /// Host NIC pulls its next packet: pending acks first, then flows in
    /// round-robin order subject to window and pacing.
    fn try_send(&mut self, h: NodeId) {
        let Some(nic) = self.hosts[h].nic else { return };
        if self.ports[nic].busy {
            return;
        }
        if let Some(ack) = self.hosts[h].acks.pop_front() {
            self.inject(nic, ack);
            return;
        }
        let n = self.hosts[h].flows.len();
        let mut earliest: Option<SimTime> = None;
        for k in 0..n {
            let idx = (self.hosts[h].rr + k) % n;
            let f = self.hosts[h].flows[idx];
            let Some(payload) = self.flows[f].window_open() else { continue };
            if self.flows[f].next_send <= self.now {
                self.hosts[h].rr = (idx + 1) % n;
                self.send_data(f, payload, nic);
                return;
            }
            let t = self.flows[f].next_send;
            earliest = Some(earliest.map_or(t, |e| e.min(t)));
        }
        if let Some(t) = earliest {
            if self.hosts[h].wake.is_none_or(|w| w > t) {
                self.hosts[h].wake = Some(t);
                self.schedule(t, EventKind::HostWake(h));
            }
        }
    }

    fn send_data(&mut self, f: usize, payload: u64, nic: LinkId) {
        let now = self.now;
        let needs_int = self.cfg.law.needs_int();
        let cap = self.cfg.int_capacity;
        let flow = &mut self.flows[f];
        let mut pkt = Packet::data(f, flow.snd_nxt, payload, flow.spec.src, flow.spec.dst, now);
        if needs_int {
            int_attach(&mut pkt).expect("fresh packet has no header");
            if cap != H_MAX {
                pkt.int = Some(IntHeader::with_capacity_limit(cap));
            }
        }
        flow.snd_nxt += payload;
        flow.inflight += payload;
        flow.packets_sent += 1;
        let rate = if now < flow.line_rate_until {
            flow.spec.params.host_bw
        } else {
            flow.cc.state.rate
        };
        flow.next_send = now + rate.serialization(payload);
        self.inject(nic, pkt);
    }

    fn inject(&mut self, nic: LinkId, pkt: Packet) {
        self.injected += 1;
        let to = self.topo.links[nic].to;
        self.start_tx(nic, pkt, to);
    }

    fn start_tx(&mut self, link: LinkId, pkt: Packet, to: NodeId) {
        let ser = self.ports[link].state.bandwidth.serialization(pkt.size);
        let port = &mut self.ports[link];
        debug_assert!(!port.busy);
        port.busy = true;
        port.tx_started = self.now;
        port.in_tx = Some((pkt, to));
        self.schedule(self.now + ser, EventKind::TxDone(link));
    }

    fn tx_done(&mut self, l: LinkId) {
        let port = &mut self.ports[l];
        let (pkt, to) = port.in_tx.take().expect("tx completion without a packet");
        port.state.tx_bytes_total += pkt.size;
        port.busy = false;
        let owner = port.voq_owner;
        let arrive_at = self.now + SimTime::from_duration(self.topo.links[l].prop);
        self.propagating += 1;
        self.schedule(arrive_at, EventKind::Arrival(to, pkt));
        let from = self.topo.links[l].from;
        if self.topo.is_host(from) {
            self.try_send(from);
        } else if let Some(tor) = owner {
            self.serve_voq(tor);
        } else {
            self.serve_port(l);
        }
    }

    fn arrive(&mut self, node: NodeId, pkt: Packet) {
        if !self.topo.is_host(node) {
            self.forward(node, pkt);
            return;
        }
        debug_assert_eq!(pkt.dst, node);
        self.delivered += 1;
        match pkt.kind {
            PacketKind::Data => {
                self.hosts[node].acks.push_back(pkt.ack_for());
                self.try_send(node);
            }
            PacketKind::Ack => self.on_ack(pkt),
        }
    }

    fn forward(&mut self, node: NodeId, pkt: Packet) {
        if let (Some(v), Some(dst_tor)) = (&self.topo.voq[node], self.topo.tor_of[pkt.dst]) {
            if dst_tor != v.tor_index {
                let cap = v.buffer_cap;
                let voq = self.voqs[node].as_mut().expect("VOQ state for VOQ node");
                if voq.qlen[dst_tor] + pkt.size > cap {
                    self.drop_packet(pkt, None);
                    return;
                }
                voq.qlen[dst_tor] += pkt.size;
                let q = voq.qlen[dst_tor];
                voq.max[dst_tor] = voq.max[dst_tor].max(q);
                voq.interval_max[dst_tor] = voq.interval_max[dst_tor].max(q);
                voq.queues[dst_tor].push_back(pkt);
                self.serve_voq(node);
                return;
            }
        }
        let Some(l) = self.topo.route(node, pkt.dst) else {
            self.drop_packet(pkt, None);
            return;
        };
        let port = &mut self.ports[l];
        if port.state.qlen + pkt.size > port.state.buffer_cap {
            self.drop_packet(pkt, Some(l));
            return;
        }
        port.state.qlen += pkt.size;
        port.max_qlen = port.max_qlen.max(port.state.qlen);
        port.interval_max = port.interval_max.max(port.state.qlen);
        port.fifo.push_back(pkt);
        self.serve_port(l);
    }

    /// Drop-tail. The sender is told at once so its inflight count stays
    /// honest; nothing is retransmitted.
    fn drop_packet(&mut self, pkt: Packet, link: Option<LinkId>) {
        self.out.drops += 1;
        if let Some(l) = link {
            self.ports[l].drops += 1;
        }
        let flow = &mut self.flows[pkt.flow];
        flow.inflight -= pkt.payload;
        flow.lost += pkt.payload;
        flow.packets_dropped += 1;
        self.check_complete(pkt.flow);
        let src = self.flows[pkt.flow].spec.src;
        self.try_send(src);
    }

    fn serve_port(&mut self, l: LinkId) {
        let port = &mut self.ports[l];
        if port.busy {
            return;
        }
        let Some(mut pkt) = port.fifo.pop_front() else { return };
        port.state.qlen -= pkt.size;
        if let (PacketKind::Data, Some(h)) = (pkt.kind, pkt.int.as_mut()) {
            // Queue length excludes the departing packet.
            if int_push_hop(h, l as u32, &port.state, self.now).is_err() {
                self.out.int_overflows += 1;
            }
        }
        let to = self.topo.links[l].to;
        self.start_tx(l, pkt, to);
    }

    /// Matched ToR pair during the day: the circuit port only. Everything
    /// else: the packet uplink, round-robin over destination VOQs.
    fn serve_voq(&mut self, node: NodeId) {
        let spec = self.topo.voq[node].as_ref().expect("VOQ node");
        let (uplink, circuit, me) = (spec.uplink, spec.circuit, spec.tor_index);
        let matched = self.topo.circuit.as_ref().and_then(|s| match circuit_step(s, self.now) {
            CircuitPhase::Day { slot, end, .. } => s.peer(slot, me).map(|d| (d, end)),
            CircuitPhase::Night { .. } => None,
        });

        if let Some((d, end)) = matched {
            let voq = self.voqs[node].as_mut().expect("VOQ state");
            if !self.ports[circuit].busy {
                if let Some(head) = voq.queues[d].front() {
                    let ser = self.ports[circuit].state.bandwidth.serialization(head.size);
                    if self.now + ser <= end {
                        let mut pkt = voq.queues[d].pop_front().expect("non-empty");
                        voq.qlen[d] -= pkt.size;
                        let view = LinkState {
                            qlen: voq.qlen[d],
                            ..self.ports[circuit].state
                        };
                        if let (PacketKind::Data, Some(h)) = (pkt.kind, pkt.int.as_mut()) {
                            if int_push_hop(h, circuit as u32, &view, self.now).is_err() {
                                self.out.int_overflows += 1;
                            }
                        }
                        if let Some(day) = self.open_days.iter_mut().find(|x| x.tor == me) {
                            day.bytes += pkt.size;
                        }
                        let to = self.topo.tor_nodes[d];
                        self.start_tx(circuit, pkt, to);
                    }
                }
            }
        }

        if self.ports[uplink].busy {
            return;
        }
        let voq = self.voqs[node].as_mut().expect("VOQ state");
        let n = voq.queues.len();
        for k in 0..n {
            let d = (voq.rr + k) % n;
            if matched.is_some_and(|(m, _)| m == d) || voq.queues[d].is_empty() {
                continue;
            }
            let mut pkt = voq.queues[d].pop_front().expect("non-empty");
            voq.qlen[d] -= pkt.size;
            voq.rr = (d + 1) % n;
            let view = LinkState {
                qlen: voq.qlen[d],
                ..self.ports[uplink].state
            };
            if let (PacketKind::Data, Some(h)) = (pkt.kind, pkt.int.as_mut()) {
                if int_push_hop(h, uplink as u32, &view, self.now).is_err() {
                    self.out.int_overflows += 1;
                }
            }
            let to = self.topo.links[uplink].to;
            self.start_tx(uplink, pkt, to);
            return;
        }
    }

    fn circuit_boundary(&mut self) {
        let sched = self.topo.circuit.as_ref().expect("circuit event without schedule");
        let now = self.now;
        let mut closed = Vec::new();
        self.open_days.retain(|d| {
            if SimTime::from_secs(d.end) <= now {
                closed.push(d.clone());
                false
            } else {
                true
            }
        });
        for d in closed {
            self.out.metrics.push(MetricRecord {
                t: d.end,
                entity: format!("tor{}->tor{}", d.tor, d.peer),
                kind: MetricKind::CircuitDayBytes,
                value: d.bytes as f64,
            });
            self.out.circuit_days.push(d);
        }
        let next = match circuit_step(sched, now) {
            CircuitPhase::Day { slot, start, end, .. } => {
                if start == now {
                    for tor in 0..self.topo.tor_nodes.len() {
                        if let Some(peer) = sched.peer(slot, tor) {
                            self.open_days.push(CircuitDay {
                                tor,
                                peer,
                                slot,
                                start: start.secs(),
                                end: end.secs(),
                                bytes: 0,
                            });
                        }
                    }
                }
                end
            }
            CircuitPhase::Night { end, .. } => end,
        };
        for node in 0..self.voqs.len() {
            if self.voqs[node].is_some() {
                self.serve_voq(node);
            }
        }
        self.schedule(next, EventKind::Circuit);
    }

    fn on_ack(&mut self, pkt: Packet) {
        let now = self.now;
        let f = pkt.flow;
        let flow = &mut self.flows[f];
        flow.inflight -= pkt.payload;
        flow.acked += pkt.payload;
        let rtt = Duration::from_secs(now.secs_since(pkt.sent_at));
        if self.cfg.ack_log {
            self.out.ack_log.push(AckLogRow {
                flow: f,
                t: now.secs(),
                seq: pkt.seq,
                rtt: rtt.secs(),
                hops: pkt.int.as_ref().map(|h| h.hops.clone()).unwrap_or_default(),
            });
        }
        let ctx = AckContext {
            seq: pkt.seq,
            snd_nxt: flow.snd_nxt,
            recv_time: now,
            rtt,
            int_header: pkt.int,
        };
        if let Err(e) = flow.cc.on_ack(&ctx) {
            if flow.cc_errors == 0 {
                log::warn!("flow {}: {e}", flow.spec.name);
            }
            flow.cc_errors += 1;
        }
        self.check_complete(f);
        let src = self.flows[f].spec.src;
        self.try_send(src);
    }

    fn check_complete(&mut self, f: usize) {
        let flow = &mut self.flows[f];
        let Some(size) = flow.spec.size else { return };
        if flow.finished || flow.acked + flow.lost < size {
            return;
        }
        flow.finished = true;
        let fct = self.now.secs_since(flow.start);
        flow.fct = Some(fct);
        let t = self.now.secs();
        let entity = flow.spec.name.clone();
        self.out.metrics.push(MetricRecord {
            t,
            entity: entity.clone(),
            kind: MetricKind::Fct,
            value: fct,
        });
        self.out.metrics.push(MetricRecord {
            t,
            entity,
            kind: MetricKind::FlowSize,
            value: size as f64,
        });
    }

    fn sample(&mut self) {
        let t = self.now.secs();
        let dt = self.cfg.sample_interval.secs();
        let push = |out: &mut SimOutput, entity: &str, kind, value| {
            out.metrics.push(MetricRecord {
                t,
                entity: entity.to_string(),
                kind,
                value,
            })
        };
        for (l, spec) in self.topo.links.iter().enumerate() {
            if !spec.monitor {
                continue;
            }
            let port = &mut self.ports[l];
            let progress = port.tx_progress(self.now);
            let thr = (progress - port.sampled_tx) / dt;
            port.sampled_tx = progress;
            push(&mut self.out, &spec.name, MetricKind::Throughput, thr);
            if port.voq_owner.is_none() {
                push(&mut self.out, &spec.name, MetricKind::Qlen, port.state.qlen as f64);
                push(&mut self.out, &spec.name, MetricKind::QlenMax, port.interval_max as f64);
                port.interval_max = port.state.qlen;
            }
            push(&mut self.out, &spec.name, MetricKind::Drops, port.drops as f64);
        }
        for (node, voq) in self.voqs.iter_mut().enumerate() {
            let Some(voq) = voq else { continue };
            let me = self.topo.voq[node].as_ref().map(|v| v.tor_index);
            for d in 0..voq.queues.len() {
                if Some(d) == me {
                    continue;
                }
                let name = format!("tor{}.voq{d}", me.unwrap_or(node));
                push(&mut self.out, &name, MetricKind::Qlen, voq.qlen[d] as f64);
                push(&mut self.out, &name, MetricKind::QlenMax, voq.interval_max[d] as f64);
                voq.interval_max[d] = voq.qlen[d];
            }
        }
        for flow in &mut self.flows {
            if flow.start > self.now || !(flow.active || flow.inflight > 0) || flow.finished {
                continue;
            }
            let thr = (flow.acked - flow.sampled_acked) as f64 / dt;
            flow.sampled_acked = flow.acked;
            let name = flow.spec.name.as_str();
            push(&mut self.out, name, MetricKind::Throughput, thr);
            push(&mut self.out, name, MetricKind::Cwnd, flow.cc.cwnd());
            push(&mut self.out, name, MetricKind::Inflight, flow.inflight as f64);
        }
        if self.cfg.audit {
            self.audit();
        }
    }

    fn audit(&mut self) {
        const MAX_REPORTS: usize = 100;
        let mut v = Vec::new();
        let mut in_net = self.propagating;
        for (l, port) in self.ports.iter().enumerate() {
            in_net += port.fifo.len() as u64 + port.in_tx.is_some() as u64;
            let sum: u64 = port.fifo.iter().map(|p| p.size).sum();
            if sum != port.state.qlen {
                v.push(format!("link {l}: qlen {} != queued bytes {sum}", port.state.qlen));
            }
            if port.state.qlen > port.state.buffer_cap {
                v.push(format!("link {l}: qlen {} over cap", port.state.qlen));
            }
            if port.voq_owner.is_none() && !port.fifo.is_empty() && !port.busy {
                v.push(format!("link {l}: idle with a non-empty queue"));
            }
        }
        for (node, voq) in self.voqs.iter().enumerate() {
            let Some(voq) = voq else { continue };
            let spec = self.topo.voq[node].as_ref().expect("VOQ node");
            in_net += voq.queues.iter().map(|q| q.len() as u64).sum::<u64>();
            let matched = self.topo.circuit.as_ref().and_then(|s| match circuit_step(s, self.now) {
                CircuitPhase::Day { slot, .. } => s.peer(slot, spec.tor_index),
                CircuitPhase::Night { .. } => None,
            });
            for (d, q) in voq.queues.iter().enumerate() {
                if voq.qlen[d] > spec.buffer_cap {
                    v.push(format!("node {node} voq {d} over cap"));
                }
                if !q.is_empty() && Some(d) != matched && !self.ports[spec.uplink].busy {
                    v.push(format!("node {node}: uplink idle with voq {d} backlogged"));
                }
            }
        }
        if self.injected != self.delivered + self.out.drops + in_net {
            v.push(format!(
                "conservation: injected {} delivered {} dropped {} in network {in_net}",
                self.injected, self.delivered, self.out.drops
            ));
        }
        for msg in v {
            if self.out.audit_violations.len() < MAX_REPORTS {
                self.out.audit_violations.push(format!("t={}: {msg}", self.now));
            }
        }
    }

    fn finish(mut self) -> SimOutput {
        for (n, voq) in self.voqs.iter().enumerate() {
            let Some(voq) = voq else { continue };
            let me = self.topo.voq[n].as_ref().map_or(n, |v| v.tor_index);
            for (d, &m) in voq.max.iter().enumerate() {
                if d != me {
                    self.out.voq_max.push((format!("tor{me}.voq{d}"), m));
                }
            }
        }
        self.out.links = self
            .topo
            .links
            .iter()
            .zip(&self.ports)
            .map(|(s, p)| LinkStats {
                name: s.name.clone(),
                tx_bytes: p.state.tx_bytes_total,
                drops: p.drops,
                max_qlen: p.max_qlen,
            })
            .collect();
        for f in &mut self.flows {
            self.out.flows.push(FlowStats {
                name: f.spec.name.clone(),
                size: f.spec.size,
                start: f.start.secs(),
                bytes_sent: f.snd_nxt,
                bytes_acked: f.acked,
                bytes_lost: f.lost,
                packets_sent: f.packets_sent,
                packets_dropped: f.packets_dropped,
                fct: f.fct,
                final_cwnd: f.cc.cwnd(),
                cc_errors: f.cc_errors,
                stale_feedback: f.cc.state.stale_feedback,
            });
            self.out
                .control
                .push(f.cc.trace().map(<[_]>::to_vec).unwrap_or_default());
        }
        self.out
    }
}

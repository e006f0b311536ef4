//! Static network description: nodes, unidirectional links, routes.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::circuit::CircuitSchedule;
use crate::model::{ACK_BYTES, MSS_BYTES};
use crate::units::{Bandwidth, Duration, SimTime};

pub type NodeId = usize;
pub type LinkId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("no route from {from} to {to}")]
    NoRoute { from: String, to: String },
    #[error("node {0} is not a host")]
    NotAHost(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Host,
    Switch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkKind {
    Normal,
    /// Circuit port of ToR `tor`; its far end follows the schedule.
    Circuit { tor: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub name: String,
    pub from: NodeId,
    pub to: NodeId,
    pub bandwidth: Bandwidth,
    pub prop: Duration,
    pub buffer_cap: u64,
    pub kind: LinkKind,
    /// Emit queue and throughput samples for this link.
    pub monitor: bool,
}

/// Per-destination virtual output queues at a ToR, drained by the packet
/// uplink and the circuit port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoqSpec {
    pub tor_index: usize,
    pub uplink: LinkId,
    pub circuit: LinkId,
    pub buffer_cap: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub links: Vec<LinkSpec>,
    /// `routes[node][dst]`: egress link toward host `dst`.
    routes: Vec<Vec<Option<LinkId>>>,
    /// ToR index of each ToR switch and of each host below one.
    pub tor_of: Vec<Option<usize>>,
    pub tor_nodes: Vec<NodeId>,
    pub voq: Vec<Option<VoqSpec>>,
    pub circuit: Option<CircuitSchedule>,
}

impl Topology {
    pub fn route(&self, at: NodeId, dst: NodeId) -> Option<LinkId> {
        self.routes.get(at)?.get(dst).copied().flatten()
    }

    pub fn is_host(&self, n: NodeId) -> bool {
        self.nodes.get(n).map(|x| x.kind == NodeKind::Host).unwrap_or(false)
    }

    pub fn hosts(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&n| self.is_host(n))
    }

    /// The single link leaving a host.
    pub fn host_uplink(&self, host: NodeId) -> Option<LinkId> {
        self.links.iter().position(|l| l.from == host)
    }

    pub fn link_by_name(&self, name: &str) -> Option<LinkId> {
        self.links.iter().position(|l| l.name == name)
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Links a packet crosses from `src` to host `dst` over the packet network.
    pub fn path(&self, src: NodeId, dst: NodeId) -> Result<Vec<LinkId>, TopologyError> {
        let mut at = src;
        let mut out = Vec::new();
        while at != dst {
            // Inter-ToR traffic at a ToR with VOQs leaves via the uplink.
            let next = match (&self.voq[at], self.tor_of[dst], self.tor_of[at]) {
                (Some(v), Some(td), Some(ta)) if td != ta => Some(v.uplink),
                _ => self.route(at, dst),
            };
            let l = next.ok_or_else(|| TopologyError::NoRoute {
                from: self.nodes[src].name.clone(),
                to: self.nodes[dst].name.clone(),
            })?;
            out.push(l);
            at = self.links[l].to;
            if out.len() > self.links.len() {
                return Err(TopologyError::NoRoute {
                    from: self.nodes[src].name.clone(),
                    to: self.nodes[dst].name.clone(),
                });
            }
        }
        Ok(out)
    }

    /// Unloaded round trip: full-size data forward, pure ack back, including
    /// store-and-forward serialization at every hop.
    pub fn base_rtt(&self, src: NodeId, dst: NodeId) -> Result<Duration, TopologyError> {
        let leg = |from, to, bytes| -> Result<u64, TopologyError> {
            Ok(self
                .path(from, to)?
                .iter()
                .map(|&l| {
                    let spec = &self.links[l];
                    SimTime::from_duration(spec.prop).ps() + spec.bandwidth.serialization(bytes).ps()
                })
                .sum())
        };
        let ps = leg(src, dst, MSS_BYTES)? + leg(dst, src, ACK_BYTES)?;
        Ok(Duration::from_secs(SimTime::from_ps(ps).secs()))
    }

    /// Largest base RTT over the given (src, dst) pairs.
    pub fn max_base_rtt(&self, pairs: &[(NodeId, NodeId)]) -> Result<Duration, TopologyError> {
        let mut best = 0.0f64;
        for &(s, d) in pairs {
            best = best.max(self.base_rtt(s, d)?.secs());
        }
        Ok(Duration::from_secs(best))
    }
}

/// Incremental construction.
#[derive(Debug, Default)]
pub struct TopologyBuilder {
    nodes: Vec<Node>,
    links: Vec<LinkSpec>,
    tor_of: Vec<Option<usize>>,
    tor_nodes: Vec<NodeId>,
    voq: Vec<Option<VoqSpec>>,
    circuit: Option<CircuitSchedule>,
}

impl TopologyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn add_node(&mut self, kind: NodeKind, name: impl Into<String>) -> NodeId {
        self.nodes.push(Node {
            kind,
            name: name.into(),
        });
        self.tor_of.push(None);
        self.voq.push(None);
        self.nodes.len() - 1
    }

    pub fn host(&mut self, name: impl Into<String>) -> NodeId {
        self.add_node(NodeKind::Host, name)
    }

    pub fn switch(&mut self, name: impl Into<String>) -> NodeId {
        self.add_node(NodeKind::Switch, name)
    }

    /// Adds one direction and returns its id.
    pub fn link(
        &mut self,
        from: NodeId,
        to: NodeId,
        bandwidth: Bandwidth,
        prop: Duration,
        buffer_cap: u64,
    ) -> LinkId {
        let name = format!("{}->{}", self.nodes[from].name, self.nodes[to].name);
        self.links.push(LinkSpec {
            name,
            from,
            to,
            bandwidth,
            prop,
            buffer_cap,
            kind: LinkKind::Normal,
            monitor: false,
        });
        self.links.len() - 1
    }

    /// Adds both directions; returns (a→b, b→a).
    pub fn duplex(
        &mut self,
        a: NodeId,
        b: NodeId,
        bandwidth: Bandwidth,
        prop: Duration,
        buffer_cap: u64,
    ) -> (LinkId, LinkId) {
        (
            self.link(a, b, bandwidth, prop, buffer_cap),
            self.link(b, a, bandwidth, prop, buffer_cap),
        )
    }

    pub fn monitor(&mut self, l: LinkId) {
        self.links[l].monitor = true;
    }

    /// Marks `tor` as ToR number `index`, with `hosts` beneath it.
    pub fn tor(&mut self, tor: NodeId, index: usize, hosts: &[NodeId]) {
        self.tor_of[tor] = Some(index);
        for &h in hosts {
            self.tor_of[h] = Some(index);
        }
        if self.tor_nodes.len() <= index {
            self.tor_nodes.resize(index + 1, usize::MAX);
        }
        self.tor_nodes[index] = tor;
    }

    /// Gives a ToR a circuit port and per-destination VOQs.
    pub fn circuit_port(
        &mut self,
        tor: NodeId,
        uplink: LinkId,
        bandwidth: Bandwidth,
        prop: Duration,
        buffer_cap: u64,
    ) -> LinkId {
        let index = self.tor_of[tor].expect("register the ToR before its circuit port");
        self.links.push(LinkSpec {
            name: format!("{}->circuit", self.nodes[tor].name),
            from: tor,
            to: tor,
            bandwidth,
            prop,
            buffer_cap,
            kind: LinkKind::Circuit { tor: index },
            monitor: false,
        });
        let circuit = self.links.len() - 1;
        self.voq[tor] = Some(VoqSpec {
            tor_index: index,
            uplink,
            circuit,
            buffer_cap,
        });
        circuit
    }

    pub fn schedule(&mut self, s: CircuitSchedule) {
        self.circuit = Some(s);
    }

    /// Computes shortest-hop routes over normal links. Ties go to the link
    /// added first, so routes are deterministic.
    pub fn build(self) -> Topology {
        let n = self.nodes.len();
        let mut routes = vec![vec![None; n]; n];
        let mut inbound: Vec<Vec<LinkId>> = vec![Vec::new(); n];
        for (id, l) in self.links.iter().enumerate() {
            if l.kind == LinkKind::Normal {
                inbound[l.to].push(id);
            }
        }
        for dst in 0..n {
            if self.nodes[dst].kind != NodeKind::Host {
                continue;
            }
            // Reverse BFS from the destination.
            let mut dist = vec![usize::MAX; n];
            dist[dst] = 0;
            let mut queue = VecDeque::from([dst]);
            while let Some(v) = queue.pop_front() {
                for &l in &inbound[v] {
                    let u = self.links[l].from;
                    if dist[u] == usize::MAX {
                        dist[u] = dist[v] + 1;
                        routes[u][dst] = Some(l);
                        // Hosts never forward.
                        if self.nodes[u].kind == NodeKind::Switch {
                            queue.push_back(u);
                        }
                    }
                }
            }
        }
        Topology {
            nodes: self.nodes,
            links: self.links,
            routes,
            tor_of: self.tor_of,
            tor_nodes: self.tor_nodes,
            voq: self.voq,
            circuit: self.circuit,
        }
    }
}

/// Star with one switch: every sender has its own access link and every
/// receiver hangs off the switch. The switch-to-receiver links are monitored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumbbellSpec {
    pub host_bw: Bandwidth,
    pub bottleneck_bw: Bandwidth,
    /// One access propagation delay per sender.
    pub sender_props: Vec<Duration>,
    pub n_receivers: usize,
    pub receiver_prop: Duration,
    pub buffer_cap: u64,
}

pub struct Dumbbell {
    pub topology: Topology,
    pub senders: Vec<NodeId>,
    pub receivers: Vec<NodeId>,
    pub bottlenecks: Vec<LinkId>,
}

pub fn dumbbell(spec: &DumbbellSpec) -> Dumbbell {
    let mut b = TopologyBuilder::new();
    let sw = b.switch("sw");
    let senders: Vec<_> = spec
        .sender_props
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let h = b.host(format!("s{i}"));
            b.duplex(h, sw, spec.host_bw, p, spec.buffer_cap);
            h
        })
        .collect();
    let mut bottlenecks = Vec::new();
    let receivers: Vec<_> = (0..spec.n_receivers)
        .map(|i| {
            let h = b.host(format!("r{i}"));
            let (_, down) = b.duplex(h, sw, spec.bottleneck_bw, spec.receiver_prop, spec.buffer_cap);
            b.monitor(down);
            bottlenecks.push(down);
            h
        })
        .collect();
    Dumbbell {
        topology: b.build(),
        senders,
        receivers,
        bottlenecks,
    }
}

/// Two switch-to-switch bottlenecks in series: one long flow crosses both,
/// and one cross flow loads each.
pub struct ParkingLot {
    pub topology: Topology,
    /// (src, dst) of the long flow, then the cross flows on hop 1 and hop 2.
    pub pairs: [(NodeId, NodeId); 3],
    pub bottlenecks: [LinkId; 2],
}

pub fn parking_lot(bw: Bandwidth, host_bw: Bandwidth, prop: Duration, buffer_cap: u64) -> ParkingLot {
    let mut b = TopologyBuilder::new();
    let s: Vec<_> = (0..3).map(|i| b.switch(format!("sw{i}"))).collect();
    let (h_long, h_x1, h_x2) = (b.host("long-src"), b.host("x1-src"), b.host("x2-src"));
    let (r_long, r_x1, r_x2) = (b.host("long-dst"), b.host("x1-dst"), b.host("x2-dst"));
    b.duplex(h_long, s[0], host_bw, prop, buffer_cap);
    b.duplex(h_x1, s[0], host_bw, prop, buffer_cap);
    b.duplex(h_x2, s[1], host_bw, prop, buffer_cap);
    let (l1, _) = b.duplex(s[0], s[1], bw, prop, buffer_cap);
    let (l2, _) = b.duplex(s[1], s[2], bw, prop, buffer_cap);
    b.duplex(r_long, s[2], host_bw, prop, buffer_cap);
    b.duplex(r_x1, s[1], host_bw, prop, buffer_cap);
    b.duplex(r_x2, s[2], host_bw, prop, buffer_cap);
    b.monitor(l1);
    b.monitor(l2);
    ParkingLot {
        topology: b.build(),
        pairs: [(h_long, r_long), (h_x1, r_x1), (h_x2, r_x2)],
        bottlenecks: [l1, l2],
    }
}

/// ToRs joined by a core packet switch, plus one circuit port per ToR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdcnSpec {
    pub n_tors: usize,
    pub hosts_per_tor: usize,
    pub host_bw: Bandwidth,
    pub uplink_bw: Bandwidth,
    pub circuit_bw: Bandwidth,
    pub host_prop: Duration,
    pub uplink_prop: Duration,
    pub circuit_prop: Duration,
    pub buffer_cap: u64,
    pub schedule: CircuitSchedule,
}

pub struct Rdcn {
    pub topology: Topology,
    /// `hosts[t][i]`: host `i` under ToR `t`.
    pub hosts: Vec<Vec<NodeId>>,
    pub tors: Vec<NodeId>,
    pub uplinks: Vec<LinkId>,
    pub circuits: Vec<LinkId>,
}

pub fn rdcn(spec: &RdcnSpec) -> Rdcn {
    let mut b = TopologyBuilder::new();
    let core = b.switch("core");
    let mut hosts = Vec::new();
    let mut tors = Vec::new();
    let mut uplinks = Vec::new();
    let mut circuits = Vec::new();
    for t in 0..spec.n_tors {
        let tor = b.switch(format!("tor{t}"));
        let hs: Vec<_> = (0..spec.hosts_per_tor)
            .map(|i| {
                let h = b.host(format!("t{t}h{i}"));
                b.duplex(h, tor, spec.host_bw, spec.host_prop, spec.buffer_cap);
                h
            })
            .collect();
        b.tor(tor, t, &hs);
        let (up, _) = b.duplex(tor, core, spec.uplink_bw, spec.uplink_prop, spec.buffer_cap);
        let c = b.circuit_port(tor, up, spec.circuit_bw, spec.circuit_prop, spec.buffer_cap);
        b.monitor(up);
        b.monitor(c);
        hosts.push(hs);
        tors.push(tor);
        uplinks.push(up);
        circuits.push(c);
    }
    b.schedule(spec.schedule.clone());
    Rdcn {
        topology: b.build(),
        hosts,
        tors,
        uplinks,
        circuits,
    }
}

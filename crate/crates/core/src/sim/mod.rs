//! Packet-level discrete-event simulator.

pub mod circuit;
pub mod engine;
pub mod metrics;
pub mod packet;
pub mod topology;

pub use circuit::{circuit_step, CircuitPhase, CircuitSchedule};
pub use engine::{run, AckLogRow, CircuitDay, FlowStats, LinkStats, SimConfig, SimError, SimOutput};
pub use metrics::{MetricKind, MetricRecord};
pub use packet::{FlowSpec, Packet, PacketKind};
pub use topology::{LinkId, NodeId, Topology, TopologyBuilder};

#[cfg(test)]
mod tests;

//! Packets and flow descriptions.

use serde::{Deserialize, Serialize};

use super::topology::NodeId;
use crate::model::{CcParams, ACK_BYTES};
use crate::telemetry::{int_echo, IntCarrier, IntHeader};
use crate::units::{Duration, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PacketKind {
    Data,
    Ack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub kind: PacketKind,
    pub flow: usize,
    /// First payload byte of the data segment (echoed on its ack).
    pub seq: u64,
    /// Bytes on the wire.
    pub size: u64,
    /// Data bytes this packet carries or, for an ack, acknowledges.
    pub payload: u64,
    pub src: NodeId,
    pub dst: NodeId,
    /// Departure time of the data segment, echoed so the sender can take an RTT.
    pub sent_at: SimTime,
    pub int: Option<IntHeader>,
}

impl Packet {
    pub fn data(flow: usize, seq: u64, size: u64, src: NodeId, dst: NodeId, now: SimTime) -> Self {
        Packet {
            kind: PacketKind::Data,
            flow,
            seq,
            size,
            payload: size,
            src,
            dst,
            sent_at: now,
            int: None,
        }
    }

    /// Pure acknowledgment travelling back to the sender.
    pub fn ack_for(&self) -> Self {
        Packet {
            kind: PacketKind::Ack,
            flow: self.flow,
            seq: self.seq,
            size: ACK_BYTES,
            payload: self.payload,
            src: self.dst,
            dst: self.src,
            sent_at: self.sent_at,
            int: self.int.as_ref().map(int_echo),
        }
    }
}

impl IntCarrier for Packet {
    fn is_data(&self) -> bool {
        self.kind == PacketKind::Data
    }

    fn int_slot(&mut self) -> &mut Option<IntHeader> {
        &mut self.int
    }
}

/// One sender-receiver flow. `size: None` keeps it backlogged until `stop`
/// or the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub name: String,
    pub src: NodeId,
    pub dst: NodeId,
    pub start: Duration,
    #[serde(default)]
    pub stop: Option<Duration>,
    #[serde(default)]
    pub size: Option<u64>,
    pub params: CcParams,
}

impl FlowSpec {
    pub fn persistent(name: impl Into<String>, src: NodeId, dst: NodeId, start: Duration, params: CcParams) -> Self {
        FlowSpec {
            name: name.into(),
            src,
            dst,
            start,
            stop: None,
            size: None,
            params,
        }
    }

    pub fn sized(mut self, bytes: u64) -> Self {
        self.size = Some(bytes);
        self
    }

    pub fn stop_at(mut self, t: Duration) -> Self {
        self.stop = Some(t);
        self
    }
}

//! In-band telemetry carried on data packets and echoed on acknowledgments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::LinkState;
use crate::units::{Bandwidth, SimTime};

/// Maximum number of hop records a header can hold.
pub const H_MAX: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TelemetryError {
    #[error("packet already carries a telemetry header")]
    AlreadyAttached,
    #[error("telemetry header full ({0} hops)")]
    Overflow(usize),
}

/// Metadata pushed by one egress port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntHopRecord {
    /// Egress link id. Lets the sender notice a path change between acks.
    pub port: u32,
    pub qlen: u64,
    pub ts: SimTime,
    pub tx_bytes: u64,
    pub bandwidth: Bandwidth,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntHeader {
    pub hops: Vec<IntHopRecord>,
    /// Set once a push was refused because the header was full.
    pub truncated: bool,
    #[serde(skip)]
    cap: Option<usize>,
}

impl IntHeader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_hops(hops: Vec<IntHopRecord>) -> Self {
        IntHeader {
            hops,
            ..Self::default()
        }
    }

    /// Header with a bound smaller than [`H_MAX`], for exercising overflow.
    pub fn with_capacity_limit(cap: usize) -> Self {
        IntHeader {
            hops: Vec::with_capacity(cap),
            truncated: false,
            cap: Some(cap.min(H_MAX)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.cap.unwrap_or(H_MAX)
    }

    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }
}

/// Anything that can carry a telemetry header.
pub trait IntCarrier {
    fn is_data(&self) -> bool;
    fn int_slot(&mut self) -> &mut Option<IntHeader>;
}

/// Gives a data packet an empty header. Acks are left untouched.
pub fn int_attach<P: IntCarrier>(packet: &mut P) -> Result<(), TelemetryError> {
    if !packet.is_data() {
        return Ok(());
    }
    let slot = packet.int_slot();
    if slot.is_some() {
        return Err(TelemetryError::AlreadyAttached);
    }
    *slot = Some(IntHeader::new());
    Ok(())
}

/// Appends the port's state at `now`. On overflow the header is left as is
/// apart from the truncation flag, and the caller counts the error.
pub fn int_push_hop(
    header: &mut IntHeader,
    port: u32,
    link: &LinkState,
    now: SimTime,
) -> Result<(), TelemetryError> {
    if header.hops.len() >= header.capacity() {
        header.truncated = true;
        return Err(TelemetryError::Overflow(header.hops.len()));
    }
    header.hops.push(IntHopRecord {
        port,
        qlen: link.qlen,
        ts: now,
        tx_bytes: link.tx_bytes_total,
        bandwidth: link.bandwidth,
    });
    Ok(())
}

/// Copy placed on the acknowledgment.
pub fn int_echo(data_header: &IntHeader) -> IntHeader {
    data_header.clone()
}

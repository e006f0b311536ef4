//! Per-ack window control laws.
//!
//! All laws share one skeleton: look up the reference window for the acked
//! sequence, turn feedback into a normalized ratio `f/e`, smooth it over one
//! base RTT, then apply `w = γ(w_old/ratio + β) + (1-γ)w`. They differ only in
//! where the ratio comes from and, for the delay-only variant, in updating at
//! most once per RTT.

mod baseline;
mod power;
mod snapshot;
mod theta;

pub use baseline::{baseline_feedback, on_ack_baseline};
pub use power::{norm_power, on_ack_powertcp, update_window, NormPower};
pub use snapshot::CwndSnapshots;
pub use theta::{on_ack_theta, theta_norm_power};

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CcParams, LawKind, Smoothing, MSS};
use crate::telemetry::{IntHeader, IntHopRecord};
use crate::units::{Bandwidth, Duration, SimTime};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CcError {
    #[error("{0} requires a telemetry header on every ack")]
    MissingInt(LawKind),
    #[error("zero power: smoothed feedback must be positive, got {0}")]
    ZeroPower(f64),
    #[error("reference window must be positive, got {0}")]
    NonPositiveWindow(f64),
}

/// What the sender knows when an acknowledgment arrives.
#[derive(Debug, Clone, PartialEq)]
pub struct AckContext {
    /// First byte of the acknowledged segment.
    pub seq: u64,
    /// Sender's next unsent byte at the moment the ack is processed.
    pub snd_nxt: u64,
    pub recv_time: SimTime,
    pub rtt: Duration,
    pub int_header: Option<IntHeader>,
}

/// Rolling per-flow state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcState {
    pub cwnd: f64,
    pub rate: Bandwidth,
    pub gamma_smooth: f64,
    pub prev_int: Vec<IntHopRecord>,
    pub prev_rtt: Option<Duration>,
    pub t_c_prev: Option<SimTime>,
    pub last_update_seq: u64,
    pub cwnd_snapshots: CwndSnapshots,
    /// Most recent unsmoothed ratio, for tracing.
    pub last_norm: f64,
    /// Acks whose feedback could not produce a fresh sample.
    pub stale_feedback: u64,
}

impl CcState {
    pub fn new(params: &CcParams) -> Self {
        CcState {
            cwnd: params.cwnd_init,
            rate: params.host_bw,
            gamma_smooth: 1.0,
            prev_int: Vec::new(),
            prev_rtt: None,
            t_c_prev: None,
            last_update_seq: 0,
            cwnd_snapshots: CwndSnapshots::new(params.cwnd_init),
            last_norm: 1.0,
            stale_feedback: 0,
        }
    }
}

/// Folds a new normalized sample into the smoothed value over one base RTT.
/// `dt` is clamped to τ so a long gap simply replaces the history.
pub fn smooth(gamma_smooth: f64, norm: f64, dt: f64, tau: f64, mode: Smoothing) -> f64 {
    match mode {
        Smoothing::Frozen => gamma_smooth,
        Smoothing::Ewma => {
            let dt = dt.clamp(0.0, tau);
            (gamma_smooth * (tau - dt) + norm * dt) / tau
        }
    }
}

/// Applies the shared window rule and pacing rate after a ratio is known.
fn apply_update(state: &mut CcState, cwnd_old: f64, params: &CcParams) -> Result<(), CcError> {
    let divisor = state.gamma_smooth.max(crate::model::EPS_POW);
    let w = update_window(divisor, cwnd_old, state.cwnd, params)?;
    state.cwnd = w.min(cwnd_ceiling(params));
    state.rate = Bandwidth::from_bytes_per_sec(state.cwnd / params.tau.secs());
    Ok(())
}

/// Result of processing one ack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AckOutcome {
    pub cwnd: f64,
    pub rate: Bandwidth,
    pub norm: f64,
    pub gamma_smooth: f64,
}

/// One row of the optional per-flow control trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlTraceRow {
    pub t: f64,
    pub cwnd: f64,
    pub rate: f64,
    pub gamma_norm: f64,
    pub gamma_smooth: f64,
}

/// A flow's control law together with its state.
#[derive(Debug, Clone)]
pub struct CcEngine {
    pub law: LawKind,
    pub params: CcParams,
    pub state: CcState,
    trace: Option<Vec<ControlTraceRow>>,
}

impl CcEngine {
    pub fn new(law: LawKind, params: CcParams) -> Self {
        CcEngine {
            law,
            state: CcState::new(&params),
            params,
            trace: None,
        }
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> Option<&[ControlTraceRow]> {
        self.trace.as_deref()
    }

    pub fn cwnd(&self) -> f64 {
        self.state.cwnd
    }

    pub fn on_ack(&mut self, ack: &AckContext) -> Result<AckOutcome, CcError> {
        let (cwnd, rate) = match self.law {
            LawKind::PowerTcp => on_ack_powertcp(&mut self.state, ack, &self.params)?,
            LawKind::ThetaPowerTcp => on_ack_theta(&mut self.state, ack, &self.params)?,
            kind => on_ack_baseline(kind, &mut self.state, ack, &self.params)?,
        };
        if let Some(trace) = self.trace.as_mut() {
            trace.push(ControlTraceRow {
                t: ack.recv_time.secs(),
                cwnd,
                rate: rate.bytes_per_sec(),
                gamma_norm: self.state.last_norm,
                gamma_smooth: self.state.gamma_smooth,
            });
        }
        Ok(AckOutcome {
            cwnd,
            rate,
            norm: self.state.last_norm,
            gamma_smooth: self.state.gamma_smooth,
        })
    }
}

/// Writes a control trace as CSV with a header row.
pub fn write_control_trace<W: Write>(rows: &[ControlTraceRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Largest window any update may produce: one host BDP (or the initial
/// window, if larger) plus β. Without it a lull in arrivals drives the
/// smoothed power toward zero and the next update divides by almost nothing.
pub(crate) fn cwnd_ceiling(params: &CcParams) -> f64 {
    let bdp = params.host_bw.bytes_per_sec() * params.tau.secs();
    floor_cwnd(bdp.max(params.cwnd_init) + params.beta)
}

/// Window floor applied after every update.
pub(crate) fn floor_cwnd(w: f64) -> f64 {
    w.max(MSS)
}

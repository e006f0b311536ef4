//! Shared parameter and state records used by the control laws, the fluid
//! model and the packet simulator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::units::{require_positive, Bandwidth, Duration, ModelError};

/// Payload bytes per simulated data packet.
pub const MSS: f64 = 1000.0;
pub const MSS_BYTES: u64 = 1000;
/// Size of a pure acknowledgment on the wire.
pub const ACK_BYTES: u64 = 64;
/// Lower clamp for any feedback divisor.
pub const EPS_POW: f64 = 1e-6;
/// Recommended EWMA parameter.
pub const DEFAULT_GAMMA: f64 = 0.9;

/// The control law a flow runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LawKind {
    #[serde(rename = "powertcp", alias = "power-tcp")]
    PowerTcp,
    #[serde(rename = "theta-powertcp", alias = "theta", alias = "theta-power-tcp")]
    ThetaPowerTcp,
    #[serde(rename = "queue-length", alias = "queue", alias = "queue-len-voltage")]
    QueueLenVoltage,
    #[serde(rename = "delay", alias = "delay-voltage")]
    DelayVoltage,
    #[serde(rename = "rtt-gradient", alias = "gradient", alias = "rtt-gradient-current")]
    RttGradientCurrent,
}

impl LawKind {
    pub const ALL: [LawKind; 5] = [
        LawKind::PowerTcp,
        LawKind::ThetaPowerTcp,
        LawKind::QueueLenVoltage,
        LawKind::DelayVoltage,
        LawKind::RttGradientCurrent,
    ];

    /// Canonical command-line spelling.
    pub fn name(self) -> &'static str {
        match self {
            LawKind::PowerTcp => "powertcp",
            LawKind::ThetaPowerTcp => "theta-powertcp",
            LawKind::QueueLenVoltage => "queue-length",
            LawKind::DelayVoltage => "delay",
            LawKind::RttGradientCurrent => "rtt-gradient",
        }
    }

    /// Whether the law consumes per-hop telemetry.
    pub fn needs_int(self) -> bool {
        matches!(self, LawKind::PowerTcp | LawKind::QueueLenVoltage)
    }
}

impl fmt::Display for LawKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LawKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "powertcp" | "power-tcp" | "power" => Ok(LawKind::PowerTcp),
            "theta-powertcp" | "theta" | "thetapowertcp" => Ok(LawKind::ThetaPowerTcp),
            "queue-length" | "queue" | "queuelenvoltage" | "queue-len-voltage" => {
                Ok(LawKind::QueueLenVoltage)
            }
            "delay" | "delayvoltage" | "delay-voltage" => Ok(LawKind::DelayVoltage),
            "rtt-gradient" | "gradient" | "rttgradientcurrent" | "rtt-gradient-current" => {
                Ok(LawKind::RttGradientCurrent)
            }
            other => Err(format!(
                "unknown law `{other}` (expected powertcp, theta-powertcp, queue-length, delay or rtt-gradient)"
            )),
        }
    }
}

/// Test hook for the smoothing step. `Frozen` never folds new feedback into
/// the smoothed power and exists only to prove the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    #[default]
    Ewma,
    Frozen,
}

/// Per-flow control-law parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcParams {
    pub gamma: f64,
    /// Additive increase in bytes.
    pub beta: f64,
    pub tau: Duration,
    pub host_bw: Bandwidth,
    pub n_expected_flows: u32,
    pub cwnd_init: f64,
    #[serde(default)]
    pub smoothing: Smoothing,
}

impl CcParams {
    /// Default derivation: β = HostBw·τ/N and cwnd_init = HostBw·τ.
    pub fn new(
        gamma: f64,
        tau: Duration,
        host_bw: Bandwidth,
        n_expected_flows: u32,
    ) -> Result<Self, ModelError> {
        if n_expected_flows == 0 {
            return Err(ModelError::OutOfRange {
                name: "n_expected_flows",
                reason: "must be at least 1".into(),
            });
        }
        let bdp = crate::units::bdp(host_bw, tau)?;
        let p = CcParams {
            gamma,
            beta: bdp / n_expected_flows as f64,
            tau,
            host_bw,
            n_expected_flows,
            cwnd_init: bdp,
            smoothing: Smoothing::Ewma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(ModelError::OutOfRange {
                name: "gamma",
                reason: format!("must lie in (0, 1], got {}", self.gamma),
            });
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(ModelError::OutOfRange {
                name: "beta",
                reason: format!("must be a non-negative byte count, got {}", self.beta),
            });
        }
        require_positive("tau", self.tau.secs())?;
        require_positive("host_bw", self.host_bw.bytes_per_sec())?;
        require_positive("cwnd_init", self.cwnd_init)?;
        Ok(())
    }
}

/// Egress port state as seen by telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub bandwidth: Bandwidth,
    pub qlen: u64,
    pub tx_bytes_total: u64,
    pub buffer_cap: u64,
}

impl LinkState {
    pub fn new(bandwidth: Bandwidth, buffer_cap: u64) -> Self {
        LinkState {
            bandwidth,
            qlen: 0,
            tx_bytes_total: 0,
            buffer_cap,
        }
    }
}

/// One evaluation of the power formula for a single hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub current_lambda: f64,
    pub voltage_nu: f64,
    pub power_gamma: f64,
    pub base_power_e: f64,
    pub norm_power: f64,
    pub dt: Duration,
}

impl PowerSample {
    /// Builds a sample from measured queue gradient, transmit rate and queue.
    /// The normalized value is clamped at zero; a negative current only arises
    /// from a draining queue that over-reports its gradient.
    pub fn compute(q_dot: f64, mu: f64, qlen: f64, b: f64, tau: f64, dt: f64) -> Self {
        let current_lambda = q_dot + mu;
        let voltage_nu = qlen + b * tau;
        let power_gamma = current_lambda * voltage_nu;
        let base_power_e = b * b * tau;
        PowerSample {
            current_lambda,
            voltage_nu,
            power_gamma,
            base_power_e,
            norm_power: (power_gamma / base_power_e).max(0.0),
            dt: Duration::from_secs(dt),
        }
    }
}

/// Aggregate equilibrium. `w_e` and `q_e` are absent when the law has no
/// unique equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub w_e: Option<f64>,
    pub q_e: Option<f64>,
    pub unique: bool,
}

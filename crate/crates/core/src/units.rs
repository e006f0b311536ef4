//! Typed physical quantities.
//!
//! Everything inside the crate is expressed in bytes and seconds. Human units
//! (Gbps, microseconds) only appear at configuration boundaries and are
//! converted once through the constructors here.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bytes per second in one Gbps.
pub const BYTES_PER_SEC_PER_GBPS: f64 = 1.25e8;

/// Picoseconds per second; [`SimTime`] resolution.
const PS_PER_SEC: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("parameter `{name}` out of range: {reason}")]
    OutOfRange { name: &'static str, reason: String },
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::NonPositive { name, value })
    }
}

/// Link or host bandwidth in bytes per second.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub const fn from_bytes_per_sec(v: f64) -> Self {
        Bandwidth(v)
    }

    pub fn from_gbps(gbps: f64) -> Self {
        Bandwidth(gbps * BYTES_PER_SEC_PER_GBPS)
    }

    pub fn bytes_per_sec(self) -> f64 {
        self.0
    }

    pub fn gbps(self) -> f64 {
        self.0 / BYTES_PER_SEC_PER_GBPS
    }

    /// Time to serialize `bytes` onto a link of this bandwidth.
    pub fn serialization(self, bytes: u64) -> SimTime {
        SimTime::from_secs(bytes as f64 / self.0)
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Gbps", self.gbps())
    }
}

/// A span of time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Duration(f64);

impl Duration {
    pub const ZERO: Duration = Duration(0.0);

    pub const fn from_secs(s: f64) -> Self {
        Duration(s)
    }

    pub fn from_micros(us: f64) -> Self {
        Duration(us * 1e-6)
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    pub fn micros(self) -> f64 {
        self.0 * 1e6
    }
}

impl Add for Duration {
    type Output = Duration;
    fn add(self, rhs: Duration) -> Duration {
        Duration(self.0 + rhs.0)
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} us", self.micros())
    }
}

/// Simulation clock with picosecond resolution. Monotone within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    pub fn from_secs(s: f64) -> Self {
        debug_assert!(s >= 0.0, "negative time {s}");
        SimTime((s * PS_PER_SEC).round() as u64)
    }

    pub fn from_duration(d: Duration) -> Self {
        Self::from_secs(d.secs())
    }

    pub fn ps(self) -> u64 {
        self.0
    }

    pub fn secs(self) -> f64 {
        self.0 as f64 / PS_PER_SEC
    }

    /// Seconds elapsed since `earlier`; negative if `earlier` is later.
    pub fn secs_since(self, earlier: SimTime) -> f64 {
        if self.0 >= earlier.0 {
            (self.0 - earlier.0) as f64 / PS_PER_SEC
        } else {
            -((earlier.0 - self.0) as f64 / PS_PER_SEC)
        }
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} us", self.secs() * 1e6)
    }
}

/// Bandwidth-delay product in bytes.
pub fn bdp(b: Bandwidth, tau: Duration) -> Result<f64, ModelError> {
    let b = require_positive("bandwidth", b.bytes_per_sec())?;
    let tau = require_positive("tau", tau.secs())?;
    Ok(b * tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bdp_of_100g_20us() {
        let v = bdp(Bandwidth::from_bytes_per_sec(12.5e9), Duration::from_secs(20e-6)).unwrap();
        assert!((v - 250_000.0).abs() < 1e-6);
    }

    #[test]
    fn bdp_rejects_zero_tau() {
        let err = bdp(Bandwidth::from_bytes_per_sec(12.5e9), Duration::ZERO).unwrap_err();
        assert!(matches!(err, ModelError::NonPositive { name: "tau", .. }));
        assert!(bdp(Bandwidth::from_bytes_per_sec(-1.0), Duration::from_secs(1.0)).is_err());
    }

    #[test]
    fn bdp_unit_case() {
        let v = bdp(Bandwidth::from_bytes_per_sec(1.0), Duration::from_secs(1.0)).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn gbps_conversion_is_single_factor() {
        assert_eq!(Bandwidth::from_gbps(100.0).bytes_per_sec(), 12.5e9);
        assert_eq!(Bandwidth::from_gbps(25.0).bytes_per_sec(), 3.125e9);
    }

    #[test]
    fn serialization_times_are_exact_in_ps() {
        let b = Bandwidth::from_gbps(100.0);
        assert_eq!(b.serialization(1000).ps(), 80_000);
        assert_eq!(b.serialization(64).ps(), 5_120);
        assert_eq!(Bandwidth::from_gbps(25.0).serialization(1000).ps(), 320_000);
    }

    #[test]
    fn simtime_differences() {
        let a = SimTime::from_secs(10e-6);
        let b = SimTime::from_secs(4e-6);
        assert!((a.secs_since(b) - 6e-6).abs() < 1e-18);
        assert!(b.secs_since(a) < 0.0);
    }
}

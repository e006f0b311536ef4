//! Rotating circuit schedule for the reconfigurable topology.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{Duration, SimTime};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("schedule has no matchings")]
    Empty,
    #[error("day length must be positive")]
    NoDay,
    #[error("matching {index} is not a partial permutation over {n} ToRs")]
    NotPermutation { index: usize, n: usize },
}

/// One matching: entry `i` is the ToR that ToR `i` reaches over its circuit,
/// or `None` if its circuit port is dark in this slot.
pub type Matching = Vec<Option<usize>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSchedule {
    pub matchings: Vec<Matching>,
    pub day: Duration,
    pub night: Duration,
}

/// State of the circuit fabric at an instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CircuitPhase {
    Day {
        matching: usize,
        /// Global slot counter, increasing across cycles.
        slot: u64,
        start: SimTime,
        end: SimTime,
    },
    Night {
        /// Matching that comes up next.
        next: usize,
        end: SimTime,
    },
}

impl CircuitSchedule {
    pub fn new(matchings: Vec<Matching>, day: Duration, night: Duration) -> Result<Self, CircuitError> {
        let s = CircuitSchedule { matchings, day, night };
        s.validate()?;
        Ok(s)
    }

    /// Cyclic shifts by 1..n-1 followed by `dark` all-off slots.
    pub fn rotations(n_tors: usize, dark: usize, day: Duration, night: Duration) -> Result<Self, CircuitError> {
        let mut m: Vec<Matching> = (1..n_tors)
            .map(|k| (0..n_tors).map(|i| Some((i + k) % n_tors)).collect())
            .collect();
        m.extend((0..dark).map(|_| vec![None; n_tors]));
        Self::new(m, day, night)
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        if self.matchings.is_empty() {
            return Err(CircuitError::Empty);
        }
        if self.day_ps() == 0 {
            return Err(CircuitError::NoDay);
        }
        for (index, m) in self.matchings.iter().enumerate() {
            let n = m.len();
            let mut seen = vec![false; n];
            for (i, d) in m.iter().enumerate() {
                if let Some(d) = *d {
                    if d >= n || d == i || seen[d] {
                        return Err(CircuitError::NotPermutation { index, n });
                    }
                    seen[d] = true;
                }
            }
        }
        Ok(())
    }

    fn day_ps(&self) -> u64 {
        SimTime::from_duration(self.day).ps()
    }

    fn slot_ps(&self) -> u64 {
        self.day_ps() + SimTime::from_duration(self.night).ps()
    }

    pub fn period(&self) -> SimTime {
        SimTime::from_ps(self.slot_ps() * self.matchings.len() as u64)
    }

    /// Instant at which slot `k` (global count) begins.
    pub fn slot_start(&self, k: u64) -> SimTime {
        SimTime::from_ps(k * self.slot_ps())
    }

    pub fn day_of_slot(&self, k: u64) -> (SimTime, SimTime) {
        let s = self.slot_start(k);
        (s, SimTime::from_ps(s.ps() + self.day_ps()))
    }

    pub fn matching_of_slot(&self, k: u64) -> usize {
        (k % self.matchings.len() as u64) as usize
    }

    /// Destination ToR reachable from `tor` during slot `k`.
    pub fn peer(&self, k: u64, tor: usize) -> Option<usize> {
        self.matchings[self.matching_of_slot(k)].get(tor).copied().flatten()
    }
}

/// Phase of the schedule at `now`.
pub fn circuit_step(schedule: &CircuitSchedule, now: SimTime) -> CircuitPhase {
    let slot_ps = schedule.slot_ps();
    let slot = now.ps() / slot_ps;
    let offset = now.ps() % slot_ps;
    let start = SimTime::from_ps(slot * slot_ps);
    let n = schedule.matchings.len() as u64;
    if offset < schedule.day_ps() {
        CircuitPhase::Day {
            matching: (slot % n) as usize,
            slot,
            start,
            end: SimTime::from_ps(start.ps() + schedule.day_ps()),
        }
    } else {
        CircuitPhase::Night {
            next: ((slot + 1) % n) as usize,
            end: SimTime::from_ps(start.ps() + slot_ps),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> CircuitSchedule {
        CircuitSchedule::rotations(3, 1, Duration::from_micros(225.0), Duration::from_micros(20.0)).unwrap()
    }

    fn at(us: f64) -> SimTime {
        SimTime::from_secs(us * 1e-6)
    }

    #[test]
    fn phase_examples() {
        let s = sched();
        assert!(matches!(circuit_step(&s, at(0.0)), CircuitPhase::Day { matching: 0, .. }));
        assert!(matches!(circuit_step(&s, at(230.0)), CircuitPhase::Night { next: 1, .. }));
        assert!(matches!(circuit_step(&s, at(245.0)), CircuitPhase::Day { matching: 1, .. }));
        // Wraps after three slots.
        assert!(matches!(circuit_step(&s, at(735.0)), CircuitPhase::Day { matching: 0, slot: 3, .. }));
    }

    #[test]
    fn rotations_cover_every_pair_once() {
        let s = sched();
        assert_eq!(s.matchings.len(), 3);
        assert_eq!(s.matchings[0], vec![Some(1), Some(2), Some(0)]);
        assert_eq!(s.matchings[1], vec![Some(2), Some(0), Some(1)]);
        assert_eq!(s.matchings[2], vec![None; 3]);
        assert_eq!(s.peer(0, 0), Some(1));
        assert_eq!(s.peer(2, 0), None);
    }

    #[test]
    fn rejects_bad_schedules() {
        let d = Duration::from_micros(1.0);
        assert_eq!(CircuitSchedule::new(vec![], d, d), Err(CircuitError::Empty));
        let bad = vec![vec![Some(1), Some(1), None]];
        assert!(matches!(
            CircuitSchedule::new(bad, d, d),
            Err(CircuitError::NotPermutation { .. })
        ));
        let self_loop = vec![vec![Some(0), None]];
        assert!(CircuitSchedule::new(self_loop, d, d).is_err());
    }

    #[test]
    fn period_is_slots_times_phase() {
        assert_eq!(sched().period(), at(735.0));
    }
}

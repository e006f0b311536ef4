//! Reference-window bookkeeping: the window is remembered once per RTT and
//! looked up by the sequence number an ack covers.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

const KEEP: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwndSnapshots {
    /// (snd_nxt at record time, cwnd), oldest first.
    entries: VecDeque<(u64, f64)>,
    /// Acks at or beyond this sequence open a new epoch.
    epoch_key: u64,
}

impl CwndSnapshots {
    pub fn new(cwnd_init: f64) -> Self {
        let mut entries = VecDeque::with_capacity(KEEP + 1);
        entries.push_back((0, cwnd_init));
        CwndSnapshots {
            entries,
            epoch_key: 0,
        }
    }

    /// Window in force when `seq` was sent: the latest snapshot whose key is
    /// not beyond `seq`, falling back to the oldest one retained.
    pub fn get(&self, seq: u64) -> f64 {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| *k <= seq)
            .or_else(|| self.entries.front())
            .map(|&(_, w)| w)
            .expect("snapshot list is never empty")
    }

    /// Records `(snd_nxt, cwnd)` if `ack_seq` has reached the current epoch.
    /// Returns whether a snapshot was taken.
    pub fn update(&mut self, cwnd: f64, ack_seq: u64, snd_nxt: u64) -> bool {
        if ack_seq < self.epoch_key {
            return false;
        }
        self.entries.push_back((snd_nxt, cwnd));
        while self.entries.len() > KEEP {
            self.entries.pop_front();
        }
        self.epoch_key = snd_nxt.max(ack_seq + 1);
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn epoch_key(&self) -> u64 {
        self.epoch_key
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_lookup_returns_cwnd_init() {
        let s = CwndSnapshots::new(250_000.0);
        assert_eq!(s.get(0), 250_000.0);
        assert_eq!(s.get(1_000_000), 250_000.0);
    }

    #[test]
    fn once_per_epoch_and_bounded() {
        let mut s = CwndSnapshots::new(100.0);
        assert!(s.update(110.0, 0, 5_000));
        assert!(!s.update(120.0, 1_000, 6_000));
        assert!(!s.update(120.0, 4_999, 6_000));
        assert!(s.update(130.0, 5_000, 12_000));
        assert_eq!(s.len(), 2);
        // The (0, 100) seed has been evicted; older acks fall back to the oldest.
        assert_eq!(s.get(4_000), 110.0);
        assert_eq!(s.get(5_000), 110.0);
        assert_eq!(s.get(12_000), 130.0);
    }
}

//! Uniformly sampled state history for delayed lookups.

/// State at one instant as seen by delayed terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub w: f64,
    pub q: f64,
    pub q_dot: f64,
}

impl Sample {
    fn lerp(a: Sample, b: Sample, f: f64) -> Sample {
        Sample {
            w: a.w + (b.w - a.w) * f,
            q: a.q + (b.q - a.q) * f,
            q_dot: a.q_dot + (b.q_dot - a.q_dot) * f,
        }
    }
}

/// Delayed-state source for the right-hand side.
pub trait DelayedLookup {
    fn at(&self, t: f64) -> Sample;
}

/// Samples at `t = k·h`. Times before zero return the first sample
/// (constant pre-history with zero queue rate).
#[derive(Debug, Clone)]
pub struct History {
    h: f64,
    samples: Vec<Sample>,
}

impl History {
    pub fn new(h: f64, init: Sample) -> Self {
        History {
            h,
            samples: vec![Sample { q_dot: 0.0, ..init }],
        }
    }

    pub fn push(&mut self, s: Sample) {
        self.samples.push(s);
    }

    pub fn last_time(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.h
    }

    pub fn last(&self) -> Sample {
        *self.samples.last().expect("history is never empty")
    }

    /// Overwrites the queue rate of the most recent sample once it is known.
    pub fn set_last_q_dot(&mut self, q_dot: f64) {
        if let Some(s) = self.samples.last_mut() {
            s.q_dot = q_dot;
        }
    }

    /// Linear interpolation; clamps to the last sample beyond the end.
    pub fn interpolate(&self, t: f64) -> Sample {
        if t < 0.0 {
            return Sample {
                q_dot: 0.0,
                ..self.samples[0]
            };
        }
        let x = t / self.h;
        let k = x.floor() as usize;
        if k + 1 >= self.samples.len() {
            return self.last();
        }
        Sample::lerp(self.samples[k], self.samples[k + 1], x - k as f64)
    }
}

impl DelayedLookup for History {
    fn at(&self, t: f64) -> Sample {
        self.interpolate(t)
    }
}

/// History extended by the state of an RK stage that has not been committed
/// yet, so lookups between the last sample and the stage time interpolate
/// toward the stage.
pub struct StageView<'a> {
    pub history: &'a History,
    pub t: f64,
    pub state: Sample,
}

impl DelayedLookup for StageView<'_> {
    fn at(&self, t: f64) -> Sample {
        let t_last = self.history.last_time();
        if t <= t_last || self.t <= t_last {
            return self.history.interpolate(t);
        }
        let last = self.history.last();
        let f = ((t - t_last) / (self.t - t_last)).clamp(0.0, 1.0);
        Sample::lerp(last, Sample { q_dot: last.q_dot, ..self.state }, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(w: f64, q: f64) -> Sample {
        Sample { w, q, q_dot: 0.0 }
    }

    #[test]
    fn interpolation_and_prehistory() {
        let mut h = History::new(1.0, s(10.0, 0.0));
        h.push(s(20.0, 4.0));
        assert_eq!(h.at(-5.0).w, 10.0);
        assert_eq!(h.at(0.5).w, 15.0);
        assert_eq!(h.at(0.25).q, 1.0);
        assert_eq!(h.at(9.0).w, 20.0);
    }

    #[test]
    fn stage_view_extrapolates_toward_stage() {
        let h = History::new(1.0, s(10.0, 0.0));
        let v = StageView {
            history: &h,
            t: 0.5,
            state: s(12.0, 2.0),
        };
        assert!((v.at(0.25).w - 11.0).abs() < 1e-12);
        assert_eq!(v.at(0.5).q, 2.0);
    }
}

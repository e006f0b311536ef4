//! Raw sampled metrics and their NDJSON form.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Bytes per second over the preceding sample interval.
    Throughput,
    /// Bytes queued at the sample instant.
    Qlen,
    /// Largest queue seen during the preceding interval.
    QlenMax,
    Cwnd,
    /// Bytes sent and not yet acknowledged or dropped.
    Inflight,
    /// Flow completion time in seconds, emitted once at completion.
    Fct,
    /// Flow size in bytes, emitted alongside `Fct`.
    FlowSize,
    /// Cumulative packets dropped at a link.
    Drops,
    /// Bytes a circuit port carried during one day, emitted at day end.
    CircuitDayBytes,
}

/// One sample. `t` is in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub t: f64,
    pub entity: String,
    pub kind: MetricKind,
    pub value: f64,
}

pub fn write_ndjson<W: Write>(records: &[MetricRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_ndjson<R: BufRead>(input: R) -> io::Result<Vec<MetricRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// `(t, value)` pairs for one entity and kind, in record order.
pub fn series(records: &[MetricRecord], entity: &str, kind: MetricKind) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter(|r| r.kind == kind && r.entity == entity)
        .map(|r| (r.t, r.value))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ndjson_round_trip_is_exact() {
        let recs = vec![
            MetricRecord {
                t: 1.0 / 3.0,
                entity: "sw->r0".into(),
                kind: MetricKind::Qlen,
                value: 0.1 + 0.2,
            },
            MetricRecord {
                t: 2e-6,
                entity: "f0".into(),
                kind: MetricKind::CircuitDayBytes,
                value: 12345.0,
            },
        ];
        let mut buf = Vec::new();
        write_ndjson(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"kind\":\"circuit_day_bytes\""));
        assert_eq!(read_ndjson(&buf[..]).unwrap(), recs);
        assert_eq!(series(&recs, "f0", MetricKind::CircuitDayBytes), vec![(2e-6, 12345.0)]);
    }
}

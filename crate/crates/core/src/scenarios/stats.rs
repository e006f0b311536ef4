//! Reductions over raw metrics: fairness, percentiles, windows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("Jain index is undefined when every rate is zero")]
    AllZero,
    #[error("no samples")]
    Empty,
    #[error("negative value {0}")]
    Negative(f64),
}

/// `(Σx)² / (n·Σx²)`.
pub fn jain_index(rates: &[f64]) -> Result<f64, StatsError> {
    if rates.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(&x) = rates.iter().find(|x| **x < 0.0) {
        return Err(StatsError::Negative(x));
    }
    let sum: f64 = rates.iter().sum();
    let sq: f64 = rates.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        return Err(StatsError::AllZero);
    }
    Ok(sum * sum / (rates.len() as f64 * sq))
}

/// Nearest-rank percentile of an ascending slice, `p` in per-mille so the
/// rank is exact: rank = ⌊p·n/1000⌋ + 1, capped at n (1-based).
pub fn nearest_rank(sorted: &[f64], per_mille: u32) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = (per_mille as usize * n / 1000 + 1).min(n);
    Some(sorted[rank - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizeBucket {
    All,
    /// Under 10 KB.
    Small,
    /// 100 KB to 1 MB.
    Medium,
    /// Over 1 MB.
    Large,
}

impl SizeBucket {
    pub const ALL: [SizeBucket; 4] = [SizeBucket::All, SizeBucket::Small, SizeBucket::Medium, SizeBucket::Large];

    pub fn contains(self, size: u64) -> bool {
        match self {
            SizeBucket::All => true,
            SizeBucket::Small => size < 10_000,
            SizeBucket::Medium => (100_000..=1_000_000).contains(&size),
            SizeBucket::Large => size > 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileRow {
    pub bucket: SizeBucket,
    pub count: usize,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub p999: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FctTable {
    pub rows: Vec<PercentileRow>,
    /// Buckets with no completions, left out of `rows`.
    pub empty_buckets: Vec<SizeBucket>,
}

/// Percentiles of completion times per size bucket. Input is `(size, fct)`.
pub fn fct_percentiles(completions: &[(u64, f64)]) -> Result<FctTable, StatsError> {
    if completions.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut rows = Vec::new();
    let mut empty_buckets = Vec::new();
    for bucket in SizeBucket::ALL {
        let mut d: Vec<f64> = completions
            .iter()
            .filter(|(s, _)| bucket.contains(*s))
            .map(|&(_, t)| t)
            .collect();
        if d.is_empty() {
            empty_buckets.push(bucket);
            continue;
        }
        d.sort_by(f64::total_cmp);
        let p = |pm| nearest_rank(&d, pm).expect("non-empty");
        rows.push(PercentileRow {
            bucket,
            count: d.len(),
            p50: p(500),
            p95: p(950),
            p99: p(990),
            p999: p(999),
        });
    }
    Ok(FctTable { rows, empty_buckets })
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Median by nearest rank (lower middle for even counts).
pub fn median(xs: &[f64]) -> Option<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return None;
    }
    Some(v[(v.len() - 1) / 2])
}

/// Values of a `(t, v)` series with `from <= t < to`.
pub fn window(series: &[(f64, f64)], from: f64, to: f64) -> Vec<f64> {
    series
        .iter()
        .filter(|(t, _)| *t >= from && *t < to)
        .map(|x| x.1)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn jain_examples() {
        assert_eq!(jain_index(&[3.0; 7]).unwrap(), 1.0);
        assert_eq!(jain_index(&[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(jain_index(&[1.0, 1.0, 1.0, 0.0]).unwrap(), 0.75);
        assert_eq!(jain_index(&[5.0]).unwrap(), 1.0);
        assert_eq!(jain_index(&[0.0, 0.0]), Err(StatsError::AllZero));
        assert_eq!(jain_index(&[]), Err(StatsError::Empty));
    }

    #[test]
    fn percentile_examples() {
        let one = fct_percentiles(&[(50_000, 3.0)]).unwrap();
        let r = &one.rows[0];
        assert_eq!((r.p50, r.p95, r.p99, r.p999), (3.0, 3.0, 3.0, 3.0));
        let many: Vec<_> = (1..=1000).map(|i| (500_000u64, i as f64)).collect();
        let t = fct_percentiles(&many).unwrap();
        let all = &t.rows[0];
        assert_eq!(all.p999, 1000.0);
        assert_eq!(all.p99, 991.0);
        assert_eq!(all.p50, 501.0);
        assert_eq!(t.rows[1].bucket, SizeBucket::Medium);
        assert_eq!(t.empty_buckets, vec![SizeBucket::Small, SizeBucket::Large]);
        assert_eq!(fct_percentiles(&[]), Err(StatsError::Empty));
    }

    #[test]
    fn bucket_edges() {
        assert!(SizeBucket::Small.contains(9_999));
        assert!(!SizeBucket::Small.contains(10_000));
        assert!(SizeBucket::Medium.contains(100_000) && SizeBucket::Medium.contains(1_000_000));
        assert!(SizeBucket::Large.contains(1_000_001));
    }

    proptest! {
        #[test]
        fn jain_is_bounded(xs in proptest::collection::vec(0.0f64..1e9, 1..40)) {
            prop_assume!(xs.iter().any(|x| *x > 0.0));
            let j = jain_index(&xs).unwrap();
            prop_assert!(j > 0.0 && j <= 1.0 + 1e-12);
            prop_assert!(j >= 1.0 / xs.len() as f64 - 1e-12);
        }

        #[test]
        fn nearest_rank_is_an_element(mut xs in proptest::collection::vec(-1e6f64..1e6, 1..200), pm in 0u32..=1000) {
            xs.sort_by(f64::total_cmp);
            let v = nearest_rank(&xs, pm).unwrap();
            prop_assert!(xs.contains(&v));
            // At least p of the data is ≤ v.
            let below = xs.iter().filter(|x| **x <= v).count();
            prop_assert!(below * 1000 >= pm as usize * xs.len());
        }
    }
}

use serde::Serialize;

use super::{samples_per_window, AdversaryError};
use crate::trace::{micros_to_secs, secs_to_micros, Micros, ObservedRecord};

/// Bytes per consecutive sample period, both directions summed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RateSeries {
    pub sample_period_us: Micros,
    pub counts: Vec<u64>,
}

impl RateSeries {
    pub fn sample_period_s(&self) -> f64 {
        micros_to_secs(self.sample_period_us)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureVector {
    pub mean: f64,
    pub stddev: f64,
    pub label: Option<String>,
    pub window_index: usize,
}

impl FeatureVector {
    pub fn labeled(mean: f64, stddev: f64, label: impl Into<String>) -> Self {
        Self {
            mean,
            stddev,
            label: Some(label.into()),
            window_index: 0,
        }
    }
}

/// Sums record sizes into `s`-second bins covering `[0, duration)`. A record
/// stamped exactly at the end of the trace lands in the last bin.
pub fn bin_rates(stream: &[ObservedRecord], s: f64, duration_us: Micros) -> RateSeries {
    let s_us = secs_to_micros(s).max(1);
    let mut n = duration_us.div_ceil(s_us) as usize;
    if n == 0 && !stream.is_empty() {
        n = 1;
    }
    let mut counts = vec![0u64; n];
    for r in stream {
        let idx = ((r.timestamp_us / s_us) as usize).min(n - 1);
        counts[idx] += u64::from(r.size_bytes);
    }
    RateSeries {
        sample_period_us: s_us,
        counts,
    }
}

/// Splits the series into non-overlapping `w`-second windows and returns
/// the mean and population standard deviation of each. A trailing partial
/// window is dropped; all-zero windows are kept.
pub fn windows_to_features(series: &RateSeries, w: f64) -> Result<Vec<FeatureVector>, AdversaryError> {
    let per = samples_per_window(series.sample_period_s(), w)?;
    Ok(series
        .counts
        .chunks_exact(per)
        .enumerate()
        .map(|(window_index, chunk)| {
            // Welford's update
            let mut mean = 0.0;
            let mut m2 = 0.0;
            for (i, &c) in chunk.iter().enumerate() {
                let x = c as f64;
                let delta = x - mean;
                mean += delta / (i + 1) as f64;
                m2 += delta * (x - mean);
            }
            FeatureVector {
                mean,
                stddev: (m2 / per as f64).max(0.0).sqrt(),
                label: None,
                window_index,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Direction;
    use proptest::prelude::*;

    fn rec(t_us: u64, size: u32) -> ObservedRecord {
        ObservedRecord {
            timestamp_us: t_us,
            device_id: "d".into(),
            direction: if size % 2 == 0 {
                Direction::Outbound
            } else {
                Direction::Inbound
            },
            size_bytes: size,
            remote_endpoint: None,
            dns_qname: None,
        }
    }

    fn series(counts: Vec<u64>) -> RateSeries {
        RateSeries {
            sample_period_us: 1_000_000,
            counts,
        }
    }

    #[test]
    fn bins_sum_both_directions() {
        let s = bin_rates(&[rec(500_000, 100), rec(900_000, 201)], 1.0, 3_000_000);
        assert_eq!(s.counts, vec![301, 0, 0]);
    }

    #[test]
    fn empty_stream_keeps_trailing_zeros() {
        let s = bin_rates(&[], 2.0, 10_000_000);
        assert_eq!(s.counts, vec![0; 5]);
        // partial last bin still counted
        assert_eq!(bin_rates(&[], 3.0, 10_000_000).counts.len(), 4);
    }

    #[test]
    fn record_at_trace_end_goes_in_last_bin() {
        let s = bin_rates(&[rec(10_000_000, 7)], 2.0, 10_000_000);
        assert_eq!(s.counts, vec![0, 0, 0, 0, 7]);
    }

    #[test]
    fn constant_window() {
        let f = windows_to_features(&series(vec![10, 10, 10]), 3.0).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].mean, 10.0);
        assert_eq!(f[0].stddev, 0.0);
    }

    #[test]
    fn population_stddev() {
        let f = windows_to_features(&series(vec![0, 20]), 2.0).unwrap();
        assert_eq!(f[0].mean, 10.0);
        assert_eq!(f[0].stddev, 10.0);
    }

    #[test]
    fn partial_window_dropped_zero_windows_kept() {
        let f = windows_to_features(&series(vec![0, 0, 5, 5, 1]), 2.0).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!((f[0].mean, f[0].stddev), (0.0, 0.0));
        assert_eq!(f[1].window_index, 1);
    }

    #[test]
    fn window_must_be_multiple() {
        assert!(matches!(
            windows_to_features(&series(vec![1, 2, 3]), 2.5),
            Err(AdversaryError::WindowNotMultiple { .. })
        ));
    }

    fn naive(window: &[u64]) -> (f64, f64) {
        let n = window.len() as f64;
        let mean = window.iter().map(|&x| x as f64).sum::<f64>() / n;
        let var = window.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
    }

    proptest! {
        #[test]
        fn features_match_direct_summation(
            counts in prop::collection::vec(0u64..5_000_000, 1..200),
            per in 1usize..20,
        ) {
            let f = windows_to_features(&series(counts.clone()), per as f64).unwrap();
            prop_assert_eq!(f.len(), counts.len() / per);
            for (fv, chunk) in f.iter().zip(counts.chunks_exact(per)) {
                let (m, sd) = naive(chunk);
                prop_assert!(close(fv.mean, m));
                prop_assert!(close(fv.stddev, sd));
                prop_assert!(fv.stddev >= 0.0);
            }
        }

        #[test]
        fn binning_conserves_bytes(
            mut times in prop::collection::vec(0u64..60_000_000, 0..100),
            s in 1u32..20,
        ) {
            times.sort_unstable();
            let recs: Vec<_> = times.iter().map(|&t| rec(t, 100)).collect();
            let series = bin_rates(&recs, f64::from(s), 60_000_000);
            prop_assert_eq!(series.counts.iter().sum::<u64>(), 100 * recs.len() as u64);
        }
    }
}

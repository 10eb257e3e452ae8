use serde::Serialize;

use super::{DetectorParams, RateSeries};
use crate::trace::{micros_to_secs, Micros};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectedEvent {
    pub start_us: Micros,
    pub end_us: Micros,
    pub peak_bytes_per_s: f64,
}

impl DetectedEvent {
    pub fn start_s(&self) -> f64 {
        micros_to_secs(self.start_us)
    }

    pub fn end_s(&self) -> f64 {
        micros_to_secs(self.end_us)
    }
}

/// Rolling-baseline rate-change detector.
///
/// Each sample is compared with the mean μ and population stddev σ of the
/// preceding `baseline_window_s` worth of samples. A sample is *flagged* when
/// it exceeds μ + c·σ and merely *elevated* when it exceeds μ. Elevated runs
/// separated by at most `merge_gap_s` form one region; a region becomes one
/// event if it holds a flagged run lasting at least `sustain_s`, and the
/// event spans its first to last flagged sample.
///
/// Regions do not depend on c, and raising c only removes flags, so the
/// number of events never grows with the threshold.
pub fn infer_events(series: &RateSeries, params: &DetectorParams) -> Vec<DetectedEvent> {
    let x = &series.counts;
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let s_us = series.sample_period_us;
    let s = series.sample_period_s();
    let window = ((params.baseline_window_s / s).round() as usize).max(1);

    // Prefix sums are exact, so μ and σ don't drift over long traces.
    let mut sum = vec![0u128; n + 1];
    let mut sq = vec![0u128; n + 1];
    for (i, &v) in x.iter().enumerate() {
        sum[i + 1] = sum[i] + u128::from(v);
        sq[i + 1] = sq[i] + u128::from(v) * u128::from(v);
    }

    let mut elevated = vec![false; n];
    let mut flagged = vec![false; n];
    for i in 1..n {
        let lo = i.saturating_sub(window);
        let m = (i - lo) as u128;
        let (s1, s2) = (sum[i] - sum[lo], sq[i] - sq[lo]);
        let xi = u128::from(x[i]);
        if xi * m <= s1 {
            continue;
        }
        elevated[i] = true;
        let mean = s1 as f64 / m as f64;
        let var = (m * s2 - s1 * s1) as f64 / (m * m) as f64;
        flagged[i] = x[i] as f64 - mean > params.threshold * var.sqrt();
    }

    let sustain = (params.sustain_s / s - 1e-9).ceil().max(1.0) as usize;
    let max_gap = (params.merge_gap_s / s + 1e-9).floor() as usize;

    let mut events = Vec::new();
    let mut i = 0;
    while i < n {
        if !elevated[i] {
            i += 1;
            continue;
        }
        // extend the region across short non-elevated gaps
        let start = i;
        let mut end = i;
        let mut j = i + 1;
        while j < n {
            if elevated[j] {
                end = j;
                j += 1;
            } else {
                let mut k = j;
                while k < n && !elevated[k] {
                    k += 1;
                }
                if k < n && k - j <= max_gap {
                    j = k;
                } else {
                    break;
                }
            }
        }
        if let Some(ev) = region_event(x, &flagged[start..=end], start, sustain, s_us) {
            events.push(ev);
        }
        i = end + 1;
    }
    events
}

fn region_event(x: &[u64], flags: &[bool], offset: usize, sustain: usize, s_us: Micros) -> Option<DetectedEvent> {
    let mut longest = 0;
    let mut run = 0;
    for &f in flags {
        run = if f { run + 1 } else { 0 };
        longest = longest.max(run);
    }
    if longest < sustain {
        return None;
    }
    let first = offset + flags.iter().position(|&f| f)?;
    let last = offset + flags.iter().rposition(|&f| f)?;
    let peak = x[first..=last].iter().copied().max().unwrap_or(0);
    Some(DetectedEvent {
        start_us: first as u64 * s_us,
        end_us: (last as u64 + 1) * s_us,
        peak_bytes_per_s: peak as f64 / micros_to_secs(s_us),
    })
}

use std::collections::BTreeMap;

use rand::Rng;

use super::{DefenseCost, DefenseError};
use crate::seed::stage_rng;
use crate::trace::{secs_to_micros, Micros, Trace};

/// Holds back each event burst of the listed devices (all devices when the
/// list is empty) by its own uniform delay in `[0, max_delay_s]`, keeping
/// the spacing inside the burst. Heartbeats and DNS are not touched.
///
/// A burst pushed past the end of the trace has its late records pinned to
/// the end; the number of such bursts is reported in the cost.
pub fn delay_randomize(
    trace: &Trace,
    devices: &[String],
    max_delay_s: f64,
    seed: u64,
) -> Result<(Trace, DefenseCost), DefenseError> {
    if !(max_delay_s.is_finite() && max_delay_s >= 0.0) {
        return Err(super::invalid("delay_randomize", "max_delay_s must be non-negative"));
    }
    for d in devices {
        if !trace.roster().contains_key(d) {
            return Err(DefenseError::UnknownDevice(d.clone()));
        }
    }
    let max_us = secs_to_micros(max_delay_s);
    let selected = |dev: &str| devices.is_empty() || devices.iter().any(|d| d == dev);

    // draw in key order so the result does not depend on record order
    let mut delays: BTreeMap<(String, bool, u32), Micros> = BTreeMap::new();
    for r in trace.records() {
        if let Some((decoy, id)) = r.tag.as_ref().and_then(|t| t.burst_key()) {
            if selected(&r.device_id) {
                delays.insert((r.device_id.clone(), decoy, id), 0);
            }
        }
    }
    let mut rng = stage_rng(seed, "delay");
    for d in delays.values_mut() {
        *d = rng.random_range(0..=max_us);
    }

    let end = trace.duration_us();
    let mut clamped = std::collections::BTreeSet::new();
    let mut byte_us: u128 = 0;
    let mut max_seen = 0;
    let records = trace
        .records()
        .iter()
        .cloned()
        .map(|mut r| {
            let key = r
                .tag
                .as_ref()
                .and_then(|t| t.burst_key())
                .map(|(decoy, id)| (r.device_id.clone(), decoy, id));
            if let Some(delay) = key.as_ref().and_then(|k| delays.get(k)) {
                let shifted = r.timestamp_us + delay;
                if shifted > end {
                    clamped.insert(key.clone());
                }
                let new_t = shifted.min(end);
                let added = new_t - r.timestamp_us;
                byte_us += u128::from(r.size_bytes) * u128::from(added);
                max_seen = max_seen.max(added);
                r.timestamp_us = new_t;
            }
            r
        })
        .collect();

    let original = trace.total_bytes();
    let mut cost = DefenseCost::free("delay_randomize").with_latency(byte_us, original, max_seen);
    cost.clamped_bursts = clamped.len();
    Ok((trace.with_records(records)?, cost))
}

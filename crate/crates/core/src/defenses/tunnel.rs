use std::collections::BTreeMap;

use super::{DefenseCost, DefenseError};
use crate::trace::Trace;

/// Device id every tunneled record is attributed to.
pub const GATEWAY_ID: &str = "gateway";
pub const GATEWAY_LABEL: &str = "gateway";

/// Wraps all traffic in one tunnel from the home gateway to `endpoint`.
/// Every record gains `overhead_bytes` of encapsulation and loses its DNS
/// name; the roster collapses to the gateway.
pub fn tunnel(trace: &Trace, endpoint: &str, overhead_bytes: u32) -> Result<(Trace, DefenseCost), DefenseError> {
    let records: Vec<_> = trace
        .records()
        .iter()
        .cloned()
        .map(|mut r| {
            r.device_id = GATEWAY_ID.to_string();
            r.remote_endpoint = Some(endpoint.to_string());
            r.dns_qname = None;
            r.size_bytes += overhead_bytes;
            r
        })
        .collect();
    let overhead = u64::from(overhead_bytes) * records.len() as u64;
    let roster = BTreeMap::from([(GATEWAY_ID.to_string(), GATEWAY_LABEL.to_string())]);
    let out = Trace::new(records, trace.duration_us(), roster)?;
    Ok((out, DefenseCost::free("tunnel").with_overhead(overhead, trace.total_bytes())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{bin_rates, split_streams};
    use crate::synth::{builtin, render_traffic, sample_timeline};
    use crate::trace::{project_view, AdversaryView};

    #[test]
    fn one_stream_with_accounted_overhead() {
        let sc = builtin("default").unwrap();
        let t = render_traffic(&sample_timeline(&sc).unwrap(), &sc).unwrap();
        let (out, cost) = tunnel(&t, "vpn.example", 40).unwrap();
        let observed = project_view(&out, AdversaryView::LastMile);
        assert_eq!(split_streams(&observed).len(), 1);
        assert_eq!(cost.overhead_bytes, 40 * t.records().len() as u64);
        assert_eq!(out.total_bytes(), t.total_bytes() + cost.overhead_bytes);

        // the aggregate series is the per-device sum plus 40 bytes per record
        let s = 10.0;
        let agg = bin_rates(&observed.records, s, out.duration_us());
        let original = project_view(&t, AdversaryView::LastMile);
        let mut expected = vec![0u64; agg.counts.len()];
        for stream in split_streams(&original).values() {
            for (e, c) in expected.iter_mut().zip(bin_rates(stream, s, t.duration_us()).counts) {
                *e += c;
            }
        }
        let n_per_bin = bin_rates(
            &original
                .records
                .iter()
                .cloned()
                .map(|mut r| {
                    r.size_bytes = 1;
                    r
                })
                .collect::<Vec<_>>(),
            s,
            t.duration_us(),
        );
        for ((e, n), a) in expected.iter_mut().zip(n_per_bin.counts).zip(&agg.counts) {
            *e += 40 * n;
            assert_eq!(e, a);
        }
    }
}

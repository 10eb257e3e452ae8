use super::{DefenseCost, DefenseError};
use crate::trace::Trace;

/// Encrypts DNS: query names disappear, the query packets themselves stay
/// with their size and timing.
pub fn conceal_dns(trace: &Trace) -> Result<(Trace, DefenseCost), DefenseError> {
    let records = trace
        .records()
        .iter()
        .cloned()
        .map(|mut r| {
            r.dns_qname = None;
            r
        })
        .collect();
    Ok((trace.with_records(records)?, DefenseCost::free("conceal_dns")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{identify_by_dns, split_streams, DnsDictionary};
    use crate::synth::{builtin, render_traffic, sample_timeline};
    use crate::trace::{project_view, AdversaryView, Tag};

    #[test]
    fn names_removed_packets_kept() {
        let sc = builtin("default").unwrap();
        let t = render_traffic(&sample_timeline(&sc).unwrap(), &sc).unwrap();
        let (out, cost) = conceal_dns(&t).unwrap();
        assert_eq!(out.records().len(), t.records().len());
        assert_eq!(out.total_bytes(), t.total_bytes());
        assert!(out.records().iter().all(|r| r.dns_qname.is_none()));
        let dns_times = |tr: &Trace| -> Vec<u64> {
            tr.records()
                .iter()
                .filter(|r| r.tag == Some(Tag::Dns))
                .map(|r| r.timestamp_us)
                .collect()
        };
        assert!(!dns_times(&t).is_empty());
        assert_eq!(dns_times(&out), dns_times(&t));
        assert_eq!(cost.overhead_bytes, 0);

        let streams = split_streams(&project_view(&out, AdversaryView::LastMile));
        let dict = DnsDictionary::builtin();
        assert!(streams.values().all(|s| identify_by_dns(s, &dict).is_none()));
    }
}

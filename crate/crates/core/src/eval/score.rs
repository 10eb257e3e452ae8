use serde::{Deserialize, Serialize};

use crate::adversary::DetectedEvent;
use crate::synth::BehaviorEvent;
use crate::trace::{secs_to_micros, Micros};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventScore {
    pub true_positives: usize,
    pub false_positives: usize,
    /// False positives that overlap an injected decoy event.
    pub decoy_false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EventScore {
    pub fn from_counts(tp: usize, fp: usize, decoy_fp: usize, fneg: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fneg);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            true_positives: tp,
            false_positives: fp,
            decoy_false_positives: decoy_fp,
            false_negatives: fneg,
            precision,
            recall,
            f1,
        }
    }

    /// Adds up the counts of several scores and recomputes the ratios.
    pub fn combine(scores: &[EventScore]) -> Self {
        let sum = |f: fn(&EventScore) -> usize| scores.iter().map(f).sum();
        Self::from_counts(
            sum(|s| s.true_positives),
            sum(|s| s.false_positives),
            sum(|s| s.decoy_false_positives),
            sum(|s| s.false_negatives),
        )
    }
}

/// Closed intervals `[a, b]` and `[c, d]` overlap once widened by `tol`.
pub(crate) fn overlaps(a: Micros, b: Micros, c: Micros, d: Micros, tol: Micros) -> bool {
    a <= d.saturating_add(tol) && c <= b.saturating_add(tol)
}

fn matches(det: &DetectedEvent, e: &BehaviorEvent, tol: Micros) -> bool {
    overlaps(det.start_us, det.end_us, e.time_us, e.end_us(), tol)
}

fn overlap_len(det: &DetectedEvent, e: &BehaviorEvent) -> Micros {
    det.end_us.min(e.end_us()).saturating_sub(det.start_us.max(e.time_us))
}

/// Matches detections to real events one-to-one and counts hits and misses.
///
/// The matching has maximum size: candidate pairs are tried largest overlap
/// first, and a detection may take over a partner from another detection
/// when that one can move elsewhere. Unmatched detections are false
/// positives (counted separately if they overlap a decoy); unmatched real
/// events are false negatives.
pub fn score_events(
    detected: &[DetectedEvent],
    truth: &[BehaviorEvent],
    decoys: &[BehaviorEvent],
    tolerance_s: f64,
) -> EventScore {
    let tol = secs_to_micros(tolerance_s.max(0.0));
    let adj: Vec<Vec<usize>> = detected
        .iter()
        .map(|det| {
            let mut cands: Vec<usize> = (0..truth.len()).filter(|&j| matches(det, &truth[j], tol)).collect();
            cands.sort_by_key(|&j| (std::cmp::Reverse(overlap_len(det, &truth[j])), j));
            cands
        })
        .collect();

    let mut owner: Vec<Option<usize>> = vec![None; truth.len()];
    let mut tp = 0;
    for i in 0..detected.len() {
        let mut seen = vec![false; truth.len()];
        if augment(i, &adj, &mut owner, &mut seen) {
            tp += 1;
        }
    }

    let mut matched = vec![false; detected.len()];
    for o in owner.iter().flatten() {
        matched[*o] = true;
    }
    let decoy_fp = detected
        .iter()
        .zip(&matched)
        .filter(|(det, &m)| !m && decoys.iter().any(|e| matches(det, e, tol)))
        .count();
    EventScore::from_counts(tp, detected.len() - tp, decoy_fp, truth.len() - tp)
}

// Kuhn's augmenting path step.
fn augment(i: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    for &j in &adj[i] {
        if seen[j] {
            continue;
        }
        seen[j] = true;
        if owner[j].is_none_or(|o| augment(o, adj, owner, seen)) {
            owner[j] = Some(i);
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(a: u64, b: u64) -> DetectedEvent {
        DetectedEvent {
            start_us: a * 1_000_000,
            end_us: b * 1_000_000,
            peak_bytes_per_s: 1.0,
        }
    }

    fn ev(t: u64, d: u64) -> BehaviorEvent {
        BehaviorEvent {
            time_us: t * 1_000_000,
            device_id: "x".into(),
            event_type: "e".into(),
            duration_us: d * 1_000_000,
        }
    }

    #[test]
    fn exact_detection_is_perfect() {
        let truth = vec![ev(10, 5), ev(100, 20)];
        let d = vec![det(10, 15), det(100, 120)];
        let s = score_events(&d, &truth, &[], 0.0);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn no_detections() {
        let s = score_events(&[], &[ev(1, 1)], &[], 5.0);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        assert_eq!(s.false_negatives, 1);
    }

    #[test]
    fn one_to_one_and_decoy_accounting() {
        let truth = vec![ev(10, 10)];
        let decoys = vec![ev(200, 10)];
        let d = vec![det(12, 18), det(14, 16), det(205, 209), det(500, 510)];
        let s = score_events(&d, &truth, &decoys, 0.0);
        assert_eq!(s.true_positives, 1);
        assert_eq!(s.false_positives, 3);
        assert_eq!(s.decoy_false_positives, 1);
        assert_eq!(s.precision, 0.25);
    }

    #[test]
    fn tolerance_widens_matching() {
        let truth = vec![ev(100, 10)];
        assert_eq!(score_events(&[det(115, 120)], &truth, &[], 0.0).true_positives, 0);
        assert_eq!(score_events(&[det(115, 120)], &truth, &[], 5.0).true_positives, 1);
    }

    #[test]
    fn largest_overlap_first_does_not_lose_matches() {
        // detection 0 overlaps both events more with the first; detection 1
        // only reaches the first. The maximum matching pairs them crosswise.
        let truth = vec![ev(0, 10), ev(20, 10)];
        let d = vec![det(0, 22), det(5, 9)];
        let s = score_events(&d, &truth, &[], 0.0);
        assert_eq!(s.true_positives, 2);
    }

    // Largest matching by trying every assignment of detections.
    fn brute_force(d: &[DetectedEvent], t: &[BehaviorEvent], tol: Micros) -> usize {
        fn go(i: usize, d: &[DetectedEvent], t: &[BehaviorEvent], used: &mut Vec<bool>, tol: Micros) -> usize {
            if i == d.len() {
                return 0;
            }
            let mut best = go(i + 1, d, t, used, tol);
            for j in 0..t.len() {
                if !used[j] && matches(&d[i], &t[j], tol) {
                    used[j] = true;
                    best = best.max(1 + go(i + 1, d, t, used, tol));
                    used[j] = false;
                }
            }
            best
        }
        go(0, d, t, &mut vec![false; t.len()], tol)
    }

    proptest! {
        #[test]
        fn agrees_with_brute_force(
            dets in prop::collection::vec((0u64..300, 0u64..40), 0..6),
            evs in prop::collection::vec((0u64..300, 0u64..40), 0..6),
            tol in 0u64..20,
        ) {
            let d: Vec<_> = dets.iter().map(|&(a, l)| det(a, a + l)).collect();
            let t: Vec<_> = evs.iter().map(|&(a, l)| ev(a, l)).collect();
            let s = score_events(&d, &t, &[], tol as f64);
            let best = brute_force(&d, &t, tol * 1_000_000);
            let expected = EventScore::from_counts(best, d.len() - best, 0, t.len() - best);
            prop_assert_eq!(s.true_positives, best);
            prop_assert_eq!(s.precision, expected.precision);
            prop_assert_eq!(s.recall, expected.recall);
        }
    }
}

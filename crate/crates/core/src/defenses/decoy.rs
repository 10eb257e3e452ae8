use super::{DefenseCost, DefenseError};
use crate::synth::{render_bursts, sample_decoys, BehaviorTimeline, Scenario};
use crate::trace::Trace;

/// Adds fake events drawn from the scenario's own event model, with rates
/// scaled by `multiplier`, such that real and fake events together still
/// satisfy every logical constraint. Returns the defended trace and the
/// decoy ground truth.
pub fn inject_decoys(
    trace: &Trace,
    scenario: &Scenario,
    real: &BehaviorTimeline,
    multiplier: f64,
    seed: u64,
) -> Result<(Trace, BehaviorTimeline, DefenseCost), DefenseError> {
    if &scenario.roster() != trace.roster() {
        return Err(DefenseError::RosterMismatch);
    }
    let decoys = sample_decoys(scenario, real, multiplier, seed)?;
    let extra = render_bursts(&decoys.events, scenario, true, 0, seed)?;
    let overhead: u64 = extra.iter().map(|r| u64::from(r.size_bytes)).sum();
    let mut records = trace.records().to_vec();
    records.extend(extra);
    let out = trace.with_records(records)?;
    let cost = DefenseCost::free("inject_decoys").with_overhead(overhead, trace.total_bytes());
    Ok((out, decoys, cost))
}

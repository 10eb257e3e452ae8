//! Synthetic smart-home traffic: behavior timelines sampled from per-device
//! event rates, rendered into packet traces through device traffic profiles.

pub mod builtin;
mod dist;
mod render;
mod scenario;
mod timeline;

use thiserror::Error;

pub use builtin::{builtin, builtin_scenarios};
pub use dist::Dist;
pub use render::{dns_query_size, render_bursts, render_traffic, DNS_QUERY_BASE_BYTES};
pub use scenario::{
    DeviceProfile, EventShape, Heartbeat, LogicalConstraint, Scenario, ScenarioDevice,
    DEFAULT_DNS_REFRESH_S,
};
pub use timeline::{
    find_violations, load_timeline, parse_timeline, render_timeline, sample_decoys,
    sample_timeline, save_timeline, BehaviorEvent, BehaviorTimeline, Violation, MAX_RETRIES,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("constraint unsatisfiable within retry budget: {constraint}")]
    Unsatisfiable { constraint: String },
    #[error("event references unknown event type '{event_type}' for device '{device}'")]
    UnknownEventType { device: String, event_type: String },
    #[error("event references unknown device '{0}'")]
    UnknownDevice(String),
    #[error("malformed timeline line {line}: {reason}")]
    MalformedTimeline { line: usize, reason: String },
    #[error(transparent)]
    Trace(#[from] crate::trace::TraceError),
}

/// Resolves `builtin:<name>` or a bare built-in name, falling back to a
/// scenario file path.
pub fn resolve_scenario(reference: &str) -> Result<Scenario, SynthError> {
    let name = reference.strip_prefix("builtin:").unwrap_or(reference);
    if let Some(s) = builtin(name) {
        return Ok(s);
    }
    if reference.starts_with("builtin:") {
        return Err(SynthError::InvalidScenario(format!(
            "no built-in scenario named '{name}'"
        )));
    }
    Scenario::load(reference)
}

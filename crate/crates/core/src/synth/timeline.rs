use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::{LogicalConstraint, Scenario, SynthError};
use crate::seed::stage_rng;
use crate::trace::{format_micros, is_token, micros_to_secs, parse_micros, secs_to_micros, Micros};

const DAY_US: Micros = 86_400 * 1_000_000;

/// Resampling attempts allowed per event before a constraint is declared
/// unsatisfiable.
pub const MAX_RETRIES: u32 = 500;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BehaviorEvent {
    pub time_us: Micros,
    pub device_id: String,
    pub event_type: String,
    pub duration_us: Micros,
}

impl BehaviorEvent {
    pub fn end_us(&self) -> Micros {
        self.time_us + self.duration_us
    }

    pub fn time_s(&self) -> f64 {
        micros_to_secs(self.time_us)
    }

    fn matches(&self, device: &str, event_type: Option<&str>) -> bool {
        self.device_id == device && event_type.is_none_or(|t| t == self.event_type)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BehaviorTimeline {
    pub events: Vec<BehaviorEvent>,
    pub constraints: Vec<LogicalConstraint>,
}

/// One broken constraint: the constraint index and the offending event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Violation {
    pub constraint: usize,
    pub event: usize,
    /// The other event involved, for overlap constraints.
    pub other: Option<usize>,
}

/// Scans `events` for constraint violations, in constraint then event order.
pub fn find_violations(events: &[BehaviorEvent], constraints: &[LogicalConstraint]) -> Vec<Violation> {
    let mut out = Vec::new();
    for (ci, c) in constraints.iter().enumerate() {
        collect_violations(events, ci, c, &mut out, false);
    }
    out
}

fn collect_violations(
    events: &[BehaviorEvent],
    ci: usize,
    c: &LogicalConstraint,
    out: &mut Vec<Violation>,
    first_only: bool,
) {
    match c {
        LogicalConstraint::ForbidDuring {
            device,
            event_type,
            during_device,
            during_event_type,
            margin_s,
        } => {
            let margin = secs_to_micros(*margin_s);
            for (i, e) in events.iter().enumerate() {
                if !e.matches(device, event_type.as_deref()) {
                    continue;
                }
                for (j, host) in events.iter().enumerate() {
                    if i == j || !host.matches(during_device, during_event_type.as_deref()) {
                        continue;
                    }
                    let overlaps = e.time_us <= host.end_us() + margin
                        && host.time_us <= e.end_us() + margin;
                    if overlaps {
                        out.push(Violation {
                            constraint: ci,
                            event: i,
                            other: Some(j),
                        });
                        if first_only {
                            return;
                        }
                        break;
                    }
                }
            }
        }
        LogicalConstraint::Precedence {
            before_device,
            before_event_type,
            after_device,
            after_event_type,
        } => {
            for (i, e) in events.iter().enumerate() {
                if !e.matches(after_device, Some(after_event_type)) {
                    continue;
                }
                let day = e.time_us / DAY_US;
                let preceded = events.iter().any(|a| {
                    a.matches(before_device, Some(before_event_type))
                        && a.time_us < e.time_us
                        && a.time_us / DAY_US == day
                });
                if !preceded {
                    out.push(Violation {
                        constraint: ci,
                        event: i,
                        other: None,
                    });
                    if first_only {
                        return;
                    }
                }
            }
        }
    }
}

fn first_violation(events: &[BehaviorEvent], constraints: &[LogicalConstraint]) -> Option<Violation> {
    let mut out = Vec::with_capacity(1);
    for (ci, c) in constraints.iter().enumerate() {
        collect_violations(events, ci, c, &mut out, true);
        if let Some(v) = out.pop() {
            return Some(v);
        }
    }
    None
}

/// Draws Poisson arrivals for every (device, event type) with a positive
/// rate, with `rate_scale` applied to the configured rates.
pub(crate) fn draw_candidates<R: Rng + ?Sized>(
    scenario: &Scenario,
    rate_scale: f64,
    rng: &mut R,
) -> Vec<BehaviorEvent> {
    let total = scenario.duration_us();
    let mut out = Vec::new();
    for device in &scenario.devices {
        for (event_type, shape) in &device.profile.events {
            let rate_per_s = scenario.rate(&device.id, event_type) * rate_scale / 3600.0;
            if rate_per_s <= 0.0 {
                continue;
            }
            let exp = Exp::new(rate_per_s).expect("positive rate");
            let mut t = 0.0;
            loop {
                t += exp.sample(rng);
                let time_us = secs_to_micros(t);
                if time_us >= total {
                    break;
                }
                // traces cover [0, total), so events end strictly before it
                let duration_us = secs_to_micros(shape.duration_s.sample(rng)).min(total - time_us - 1);
                out.push(BehaviorEvent {
                    time_us,
                    device_id: device.id.clone(),
                    event_type: event_type.clone(),
                    duration_us,
                });
            }
        }
    }
    out
}

/// Moves violating events (only those at index ≥ `fixed`) to fresh uniform
/// start times until every constraint holds.
pub(crate) fn repair<R: Rng + ?Sized>(
    events: &mut [BehaviorEvent],
    fixed: usize,
    constraints: &[LogicalConstraint],
    total_us: Micros,
    rng: &mut R,
) -> Result<(), SynthError> {
    let mut attempts = vec![0u32; events.len()];
    while let Some(v) = first_violation(events, constraints) {
        let culprit = if v.event >= fixed {
            Some(v.event)
        } else {
            v.other.filter(|&o| o >= fixed)
        };
        let unsat = || SynthError::Unsatisfiable {
            constraint: constraints[v.constraint].to_string(),
        };
        let idx = culprit.ok_or_else(unsat)?;
        if attempts[idx] >= MAX_RETRIES {
            return Err(unsat());
        }
        attempts[idx] += 1;
        let e = &mut events[idx];
        let latest = total_us.saturating_sub(e.duration_us);
        e.time_us = if latest == 0 { 0 } else { rng.random_range(0..latest) };
    }
    Ok(())
}

fn sort_events(events: &mut [BehaviorEvent]) {
    events.sort_by(|a, b| {
        (a.time_us, &a.device_id, &a.event_type).cmp(&(b.time_us, &b.device_id, &b.event_type))
    });
}

/// Samples a ground-truth behavior timeline for `scenario`.
///
/// Arrivals are Poisson per (device, event type); events that break a
/// logical constraint are moved to new random times, up to
/// [`MAX_RETRIES`] times each.
pub fn sample_timeline(scenario: &Scenario) -> Result<BehaviorTimeline, SynthError> {
    scenario.validate()?;
    let mut rng = stage_rng(scenario.seed, "timeline");
    let mut events = draw_candidates(scenario, 1.0, &mut rng);
    repair(&mut events, 0, &scenario.constraints, scenario.duration_us(), &mut rng)?;
    sort_events(&mut events);
    Ok(BehaviorTimeline {
        events,
        constraints: scenario.constraints.clone(),
    })
}

/// Samples decoy events from the same generative model, with rates scaled by
/// `multiplier`, such that real and decoy events together satisfy every
/// constraint.
pub fn sample_decoys(
    scenario: &Scenario,
    real: &BehaviorTimeline,
    multiplier: f64,
    seed: u64,
) -> Result<BehaviorTimeline, SynthError> {
    if !(multiplier.is_finite() && multiplier >= 0.0) {
        return Err(SynthError::InvalidScenario(
            "decoy multiplier must be non-negative".into(),
        ));
    }
    let mut rng = stage_rng(seed, "decoy-timeline");
    let candidates = draw_candidates(scenario, multiplier, &mut rng);
    let fixed = real.events.len();
    let mut combined = real.events.clone();
    combined.extend(candidates);
    repair(&mut combined, fixed, &scenario.constraints, scenario.duration_us(), &mut rng)?;
    let mut decoys = combined.split_off(fixed);
    sort_events(&mut decoys);
    Ok(BehaviorTimeline {
        events: decoys,
        constraints: scenario.constraints.clone(),
    })
}

pub fn render_timeline(timeline: &BehaviorTimeline) -> String {
    let mut out = String::new();
    for c in &timeline.constraints {
        let _ = writeln!(out, "#constraint {c}");
    }
    for e in &timeline.events {
        let _ = writeln!(
            out,
            "{} {} {} {}",
            format_micros(e.time_us),
            e.device_id,
            e.event_type,
            format_micros(e.duration_us)
        );
    }
    out
}

pub fn parse_timeline(text: &str) -> Result<BehaviorTimeline, SynthError> {
    let mut timeline = BehaviorTimeline::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let bad = |reason: String| SynthError::MalformedTimeline { line, reason };
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("#constraint") {
            timeline
                .constraints
                .push(LogicalConstraint::parse(rest.trim()).map_err(bad)?);
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(' ').collect();
        let [time, device, event_type, duration] = fields.as_slice() else {
            return Err(bad(format!("expected 4 fields, found {}", fields.len())));
        };
        if !is_token(device) || !is_token(event_type) {
            return Err(bad("empty device or event type".into()));
        }
        timeline.events.push(BehaviorEvent {
            time_us: parse_micros(time).ok_or_else(|| bad(format!("bad time '{time}'")))?,
            device_id: device.to_string(),
            event_type: event_type.to_string(),
            duration_us: parse_micros(duration)
                .ok_or_else(|| bad(format!("bad duration '{duration}'")))?,
        });
    }
    Ok(timeline)
}

pub fn save_timeline(timeline: &BehaviorTimeline, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, render_timeline(timeline))
}

pub fn load_timeline(path: impl AsRef<Path>) -> Result<BehaviorTimeline, SynthError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SynthError::MalformedTimeline {
        line: 0,
        reason: format!("{}: {e}", path.display()),
    })?;
    parse_timeline(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::builtin::{builtin, clean_burst_scenario};
    use crate::synth::{DeviceProfile, Dist, EventShape, Heartbeat, ScenarioDevice};
    use std::collections::BTreeMap;

    fn one_device(rate: f64, hours: f64) -> Scenario {
        let shape = EventShape {
            duration_s: Dist::Fixed(10.0),
            packets: Dist::Fixed(5.0),
            size_bytes: Dist::Fixed(100.0),
            gap_s: Dist::Fixed(1.0),
            inbound_fraction: 0.0,
        };
        Scenario {
            name: "one".into(),
            duration_s: hours * 3600.0,
            seed: 11,
            dns_refresh_s: 300.0,
            devices: vec![ScenarioDevice {
                id: "dev".into(),
                profile: DeviceProfile {
                    type_label: "thing".into(),
                    heartbeat: Some(Heartbeat {
                        period_s: 60.0,
                        size_bytes: 50,
                        jitter: 0.0,
                    }),
                    events: BTreeMap::from([("poke".to_string(), shape)]),
                    dns_domains: vec![],
                    remote_endpoint: "cloud".into(),
                },
            }],
            event_rates: BTreeMap::from([(
                "dev".to_string(),
                BTreeMap::from([("poke".to_string(), rate)]),
            )]),
            constraints: vec![],
        }
    }

    #[test]
    fn zero_rates_give_empty_timeline() {
        let mut s = builtin("default").unwrap();
        for rates in s.event_rates.values_mut() {
            for r in rates.values_mut() {
                *r = 0.0;
            }
        }
        assert!(sample_timeline(&s).unwrap().events.is_empty());
    }

    #[test]
    fn poisson_count_is_reproducible_and_centered() {
        let s = one_device(2.0, 10.0);
        let a = sample_timeline(&s).unwrap();
        let b = sample_timeline(&s).unwrap();
        assert_eq!(a, b);

        let mut total = 0usize;
        for seed in 0..100 {
            let mut s = one_device(2.0, 10.0);
            s.seed = seed;
            total += sample_timeline(&s).unwrap().events.len();
        }
        let mean = total as f64 / 100.0;
        assert!((15.0..=25.0).contains(&mean), "mean count {mean}");
    }

    #[test]
    fn forbid_during_is_enforced() {
        let s = builtin("default").unwrap();
        for seed in 0..20 {
            let mut s = s.clone();
            s.seed = seed;
            let t = sample_timeline(&s).unwrap();
            assert!(find_violations(&t.events, &t.constraints).is_empty());
        }
    }

    #[test]
    fn precedence_is_enforced() {
        let s = clean_burst_scenario();
        assert!(s
            .constraints
            .iter()
            .any(|c| matches!(c, LogicalConstraint::Precedence { .. })));
        let t = sample_timeline(&s).unwrap();
        assert!(find_violations(&t.events, &t.constraints).is_empty());
    }

    #[test]
    fn violation_scan_detects_overlap_and_missing_precedent() {
        let ev = |t: u64, d: &str, ty: &str, dur: u64| BehaviorEvent {
            time_us: t,
            device_id: d.into(),
            event_type: ty.into(),
            duration_us: dur,
        };
        let cons = vec![
            LogicalConstraint::ForbidDuring {
                device: "outlet".into(),
                event_type: None,
                during_device: "monitor".into(),
                during_event_type: Some("sleep".into()),
                margin_s: 0.0,
            },
            LogicalConstraint::Precedence {
                before_device: "lock".into(),
                before_event_type: "arrive".into(),
                after_device: "assistant".into(),
                after_event_type: "query".into(),
            },
        ];
        let events = vec![
            ev(0, "monitor", "sleep", 100),
            ev(50, "outlet", "toggle", 0),
            ev(200, "outlet", "toggle", 0),
            ev(300, "assistant", "query", 5),
            ev(400, "lock", "arrive", 5),
            ev(500, "assistant", "query", 5),
        ];
        let v = find_violations(&events, &cons);
        assert_eq!(
            v,
            vec![
                Violation {
                    constraint: 0,
                    event: 1,
                    other: Some(0)
                },
                Violation {
                    constraint: 1,
                    event: 3,
                    other: None
                },
            ]
        );
    }

    #[test]
    fn unsatisfiable_constraint_is_reported() {
        let mut s = one_device(30.0, 1.0);
        s.constraints.push(LogicalConstraint::ForbidDuring {
            device: "dev".into(),
            event_type: None,
            during_device: "dev".into(),
            during_event_type: None,
            margin_s: 3600.0,
        });
        match sample_timeline(&s) {
            Err(SynthError::Unsatisfiable { constraint }) => {
                assert!(constraint.starts_with("forbid_during dev"))
            }
            other => panic!("expected unsatisfiable, got {other:?}"),
        }
    }

    #[test]
    fn decoys_respect_real_timeline() {
        let s = clean_burst_scenario();
        let real = sample_timeline(&s).unwrap();
        let decoys = sample_decoys(&s, &real, 1.0, 99).unwrap();
        let mut all = real.events.clone();
        all.extend(decoys.events.iter().cloned());
        assert!(find_violations(&all, &s.constraints).is_empty());
        assert!(sample_decoys(&s, &real, 0.0, 99).unwrap().events.is_empty());
    }

    #[test]
    fn timeline_text_round_trips() {
        let s = clean_burst_scenario();
        let t = sample_timeline(&s).unwrap();
        assert_eq!(parse_timeline(&render_timeline(&t)).unwrap(), t);
    }
}

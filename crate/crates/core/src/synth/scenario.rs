use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dist, SynthError};
use crate::trace::{is_token, secs_to_micros, Micros};

pub const DEFAULT_DNS_REFRESH_S: f64 = 300.0;

fn default_dns_refresh() -> f64 {
    DEFAULT_DNS_REFRESH_S
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heartbeat {
    pub period_s: f64,
    pub size_bytes: u32,
    /// Fraction of the period by which each heartbeat may be delayed.
    #[serde(default)]
    pub jitter: f64,
}

/// Traffic burst a device emits for one behavior event.
///
/// The event's duration is drawn from `duration_s` when the timeline is
/// sampled. At render time `packets` packets are laid out with relative
/// spacing drawn from `gap_s`, scaled so the burst spans the event exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventShape {
    pub duration_s: Dist,
    pub packets: Dist,
    pub size_bytes: Dist,
    pub gap_s: Dist,
    #[serde(default)]
    pub inbound_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub type_label: String,
    #[serde(default)]
    pub heartbeat: Option<Heartbeat>,
    #[serde(default)]
    pub events: BTreeMap<String, EventShape>,
    #[serde(default)]
    pub dns_domains: Vec<String>,
    pub remote_endpoint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDevice {
    pub id: String,
    #[serde(flatten)]
    pub profile: DeviceProfile,
}

/// Logical rule every timeline (real, or real plus decoys) must obey.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogicalConstraint {
    /// Events of (`device`, `event_type`) may not overlap any event of
    /// (`during_device`, `during_event_type`), widened by `margin_s` on both
    /// sides. A missing event type matches every type of that device.
    ForbidDuring {
        device: String,
        #[serde(default)]
        event_type: Option<String>,
        during_device: String,
        #[serde(default)]
        during_event_type: Option<String>,
        #[serde(default)]
        margin_s: f64,
    },
    /// Every `after` event needs an earlier `before` event on the same day.
    Precedence {
        before_device: String,
        before_event_type: String,
        after_device: String,
        after_event_type: String,
    },
}

impl fmt::Display for LogicalConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogicalConstraint::ForbidDuring {
                device,
                event_type,
                during_device,
                during_event_type,
                margin_s,
            } => write!(
                f,
                "forbid_during {} {} {} {} {}",
                device,
                event_type.as_deref().unwrap_or("*"),
                during_device,
                during_event_type.as_deref().unwrap_or("*"),
                crate::trace::format_micros(secs_to_micros(*margin_s)),
            ),
            LogicalConstraint::Precedence {
                before_device,
                before_event_type,
                after_device,
                after_event_type,
            } => write!(
                f,
                "precedence {before_device} {before_event_type} {after_device} {after_event_type}"
            ),
        }
    }
}

impl LogicalConstraint {
    pub fn parse(s: &str) -> Result<Self, String> {
        let fields: Vec<&str> = s.split_whitespace().collect();
        let wildcard = |t: &str| (t != "*").then(|| t.to_string());
        match fields.as_slice() {
            ["forbid_during", dev, ty, ddev, dty, margin] => Ok(LogicalConstraint::ForbidDuring {
                device: dev.to_string(),
                event_type: wildcard(ty),
                during_device: ddev.to_string(),
                during_event_type: wildcard(dty),
                margin_s: margin
                    .parse()
                    .map_err(|_| format!("bad margin '{margin}'"))?,
            }),
            ["precedence", a, at, b, bt] => Ok(LogicalConstraint::Precedence {
                before_device: a.to_string(),
                before_event_type: at.to_string(),
                after_device: b.to_string(),
                after_event_type: bt.to_string(),
            }),
            _ => Err(format!("unrecognized constraint '{s}'")),
        }
    }

    fn references(&self) -> Vec<(&str, Option<&str>)> {
        match self {
            LogicalConstraint::ForbidDuring {
                device,
                event_type,
                during_device,
                during_event_type,
                ..
            } => vec![
                (device.as_str(), event_type.as_deref()),
                (during_device.as_str(), during_event_type.as_deref()),
            ],
            LogicalConstraint::Precedence {
                before_device,
                before_event_type,
                after_device,
                after_event_type,
            } => vec![
                (before_device.as_str(), Some(before_event_type.as_str())),
                (after_device.as_str(), Some(after_event_type.as_str())),
            ],
        }
    }
}

/// A home to simulate: devices, how often each behavior happens, and the
/// logical rules tying behaviors together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub duration_s: f64,
    pub seed: u64,
    #[serde(default = "default_dns_refresh")]
    pub dns_refresh_s: f64,
    #[serde(rename = "device")]
    pub devices: Vec<ScenarioDevice>,
    /// device id → event type → mean events per hour
    #[serde(default)]
    pub event_rates: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default, rename = "constraint")]
    pub constraints: Vec<LogicalConstraint>,
}

impl Scenario {
    pub fn duration_us(&self) -> Micros {
        secs_to_micros(self.duration_s)
    }

    pub fn device(&self, id: &str) -> Option<&ScenarioDevice> {
        self.devices.iter().find(|d| d.id == id)
    }

    pub fn roster(&self) -> BTreeMap<String, String> {
        self.devices
            .iter()
            .map(|d| (d.id.clone(), d.profile.type_label.clone()))
            .collect()
    }

    pub fn rate(&self, device: &str, event_type: &str) -> f64 {
        self.event_rates
            .get(device)
            .and_then(|m| m.get(event_type))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| SynthError::InvalidScenario(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            SynthError::InvalidScenario(format!("{}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidScenario(m));
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad("duration_s must be positive".into());
        }
        if !(self.dns_refresh_s.is_finite() && self.dns_refresh_s > 0.0) {
            return bad("dns_refresh_s must be positive".into());
        }
        let mut seen = BTreeSet::new();
        for d in &self.devices {
            if !is_token(&d.id) || d.id.contains(':') {
                return bad(format!("invalid device id '{}'", d.id));
            }
            if !seen.insert(d.id.as_str()) {
                return bad(format!("duplicate device id '{}'", d.id));
            }
            let p = &d.profile;
            if !is_token(&p.type_label) || !is_token(&p.remote_endpoint) {
                return bad(format!("device '{}': labels and endpoints must be tokens", d.id));
            }
            if p.heartbeat.is_none() && p.events.is_empty() {
                return bad(format!("device '{}' has neither heartbeat nor events", d.id));
            }
            if let Some(hb) = &p.heartbeat {
                if !(hb.period_s.is_finite() && hb.period_s > 0.0)
                    || hb.size_bytes == 0
                    || !(0.0..1.0).contains(&hb.jitter)
                {
                    return bad(format!(
                        "device '{}': heartbeat needs positive period and size, jitter in [0,1)",
                        d.id
                    ));
                }
            }
            for domain in &p.dns_domains {
                if !is_token(domain) {
                    return bad(format!("device '{}': bad domain '{domain}'", d.id));
                }
            }
            for (ty, shape) in &p.events {
                if !is_token(ty) || ty.contains(':') {
                    return bad(format!("device '{}': bad event type '{ty}'", d.id));
                }
                for (what, dist) in [
                    ("duration_s", &shape.duration_s),
                    ("packets", &shape.packets),
                    ("size_bytes", &shape.size_bytes),
                    ("gap_s", &shape.gap_s),
                ] {
                    dist.validate()
                        .map_err(|m| SynthError::InvalidScenario(format!("{}/{ty} {what}: {m}", d.id)))?;
                }
                if shape.packets.min() < 1.0 || shape.size_bytes.min() < 1.0 {
                    return bad(format!("{}/{ty}: bursts need at least one packet of one byte", d.id));
                }
                if !(0.0..=1.0).contains(&shape.inbound_fraction) {
                    return bad(format!("{}/{ty}: inbound_fraction outside [0,1]", d.id));
                }
            }
        }
        for (dev, rates) in &self.event_rates {
            let Some(device) = self.device(dev) else {
                return bad(format!("event_rates references unknown device '{dev}'"));
            };
            for (ty, rate) in rates {
                if !device.profile.events.contains_key(ty) {
                    return bad(format!("event_rates references unknown event '{dev}/{ty}'"));
                }
                if !(rate.is_finite() && *rate >= 0.0) {
                    return bad(format!("rate for '{dev}/{ty}' must be non-negative"));
                }
            }
        }
        for c in &self.constraints {
            if let LogicalConstraint::ForbidDuring { margin_s, .. } = c {
                if !(margin_s.is_finite() && *margin_s >= 0.0) {
                    return bad(format!("constraint '{c}': margin must be non-negative"));
                }
            }
            for (dev, ty) in c.references() {
                let Some(device) = self.device(dev) else {
                    return bad(format!("constraint '{c}' references unknown device '{dev}'"));
                };
                if let Some(ty) = ty {
                    if !device.profile.events.contains_key(ty) {
                        return bad(format!("constraint '{c}' references unknown event '{dev}/{ty}'"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::builtin_scenarios;

    #[test]
    fn builtins_round_trip_through_toml() {
        for s in builtin_scenarios() {
            let back = Scenario::from_toml(&s.to_toml()).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn constraint_text_round_trips() {
        for s in builtin_scenarios() {
            for c in &s.constraints {
                assert_eq!(&LogicalConstraint::parse(&c.to_string()).unwrap(), c);
            }
        }
    }

    #[test]
    fn validation_catches_unknown_references() {
        let mut s = builtin_scenarios().remove(0);
        s.event_rates
            .entry("ghost".into())
            .or_default()
            .insert("x".into(), 1.0);
        assert!(matches!(s.validate(), Err(SynthError::InvalidScenario(_))));

        let mut s = builtin_scenarios().remove(0);
        s.duration_s = 0.0;
        assert!(s.validate().is_err());

        let mut s = builtin_scenarios().remove(0);
        s.constraints.push(LogicalConstraint::Precedence {
            before_device: s.devices[0].id.clone(),
            before_event_type: "nope".into(),
            after_device: s.devices[0].id.clone(),
            after_event_type: "nope".into(),
        });
        assert!(s.validate().is_err());
    }
}

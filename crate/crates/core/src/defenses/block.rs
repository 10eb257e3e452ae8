use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{DefenseCost, DefenseError, DeviceImpact, FunctionalityImpact, FunctionalityLevel};
use crate::trace::Trace;

/// Category that matches every record of a device.
pub const BLOCK_ALL: &str = "all";

/// Blocks one category of a device's traffic: `all`, `heartbeat`, `dns`, or
/// one of its event types.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockRule {
    pub device: String,
    pub category: String,
}

impl BlockRule {
    pub fn all(device: impl Into<String>) -> Self {
        Self {
            device: device.into(),
            category: BLOCK_ALL.into(),
        }
    }
}

/// Offline functionality of each device type when cut off from the cloud.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionalityTable(pub BTreeMap<String, DeviceImpact>);

impl FunctionalityTable {
    /// Observed offline behavior of the built-in device types.
    pub fn builtin() -> Self {
        use FunctionalityLevel::{Limited, None};
        let rows = [
            ("personal_assistant", Limited, "Usable as a bluetooth speaker for a previously paired phone"),
            ("smart_outlet", Limited, "Switchable with the physical button only"),
            ("smart_socket", Limited, "Switchable with the button or the app on the local network"),
            ("smart_plug", Limited, "Switchable with the button or the app on the local network"),
            ("security_camera", None, "Unable to view video feed or receive detected motion notifications"),
            ("ip_camera", None, "Unable to view video feed or control camera direction"),
            ("sleep_monitor", None, "Monitor does not record sleep data"),
        ];
        Self(
            rows.into_iter()
                .map(|(ty, level, d)| {
                    (
                        ty.to_string(),
                        DeviceImpact {
                            level,
                            description: d.to_string(),
                        },
                    )
                })
                .collect(),
        )
    }

    fn fully_blocked(&self, device_type: &str) -> DeviceImpact {
        self.0.get(device_type).cloned().unwrap_or(DeviceImpact {
            level: FunctionalityLevel::None,
            description: format!("no offline behavior recorded for '{device_type}'"),
        })
    }
}

/// Drops every record matching a rule. Untagged records only match `all`.
pub fn block_streams(
    trace: &Trace,
    rules: &[BlockRule],
    table: &FunctionalityTable,
) -> Result<(Trace, DefenseCost), DefenseError> {
    let mut by_device: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for rule in rules {
        if !trace.roster().contains_key(&rule.device) {
            return Err(DefenseError::UnknownDevice(rule.device.clone()));
        }
        by_device.entry(&rule.device).or_default().insert(&rule.category);
    }

    let kept = trace
        .records()
        .iter()
        .filter(|r| {
            let Some(cats) = by_device.get(r.device_id.as_str()) else {
                return true;
            };
            if cats.contains(BLOCK_ALL) {
                return false;
            }
            !r.tag.as_ref().is_some_and(|t| cats.contains(t.category()))
        })
        .cloned()
        .collect();

    let mut impact = FunctionalityImpact::new();
    for (device, cats) in &by_device {
        let entry = if cats.contains(BLOCK_ALL) {
            table.fully_blocked(&trace.roster()[*device])
        } else {
            DeviceImpact {
                level: FunctionalityLevel::Limited,
                description: format!(
                    "blocked categories: {}",
                    cats.iter().copied().collect::<Vec<_>>().join(", ")
                ),
            }
        };
        impact.insert(device.to_string(), entry);
    }

    let mut cost = DefenseCost::free("block");
    cost.functionality = Some(impact);
    Ok((trace.with_records(kept)?, cost))
}

//! Defenses as trace transforms. Each takes a ground-truth trace and returns
//! the defended trace together with what the defense cost: added bytes,
//! added latency and lost device functionality.

mod block;
mod conceal;
mod decoy;
mod delay;
mod shape;
mod tunnel;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synth::{BehaviorTimeline, Scenario, SynthError};
use crate::trace::{micros_to_secs, Trace, TraceError};

pub use block::{block_streams, BlockRule, FunctionalityTable, BLOCK_ALL};
pub use conceal::conceal_dns;
pub use decoy::inject_decoys;
pub use delay::delay_randomize;
pub use shape::shape_constant_rate;
pub use tunnel::{tunnel, GATEWAY_ID, GATEWAY_LABEL};

pub const DEFAULT_TUNNEL_ENDPOINT: &str = "tunnel.vpn.example";
pub const DEFAULT_TUNNEL_OVERHEAD: u32 = 40;

#[derive(Debug, Error)]
pub enum DefenseError {
    #[error("invalid {defense} parameters: {reason}")]
    InvalidParams { defense: &'static str, reason: String },
    #[error("policy references unknown device '{0}'")]
    UnknownDevice(String),
    #[error("target rate cannot drain the queue of '{device}': {residual_bytes} bytes left at trace end")]
    ResidualQueue { device: String, residual_bytes: u64 },
    #[error("scenario roster does not match trace roster")]
    RosterMismatch,
    #[error("{0} needs the scenario and its real timeline")]
    MissingContext(&'static str),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

fn invalid(defense: &'static str, reason: impl Into<String>) -> DefenseError {
    DefenseError::InvalidParams {
        defense,
        reason: reason.into(),
    }
}

/// One defense and its parameters, as written in the `[[defense]]` tables of
/// an experiment config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DefenseConfig {
    Block {
        rules: Vec<BlockRule>,
    },
    ConcealDns,
    Tunnel {
        #[serde(default = "default_endpoint")]
        endpoint: String,
        #[serde(default = "default_overhead")]
        overhead_bytes: u32,
    },
    ShapeConstant {
        /// Bytes per second.
        target_rate: f64,
        cell_size: u32,
    },
    DelayRandomize {
        max_delay_s: f64,
        /// Devices whose bursts are delayed; empty means every device.
        #[serde(default)]
        devices: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    InjectDecoys {
        multiplier: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

fn default_endpoint() -> String {
    DEFAULT_TUNNEL_ENDPOINT.to_string()
}

fn default_overhead() -> u32 {
    DEFAULT_TUNNEL_OVERHEAD
}

impl DefenseConfig {
    pub fn name(&self) -> &'static str {
        match self {
            DefenseConfig::Block { .. } => "block",
            DefenseConfig::ConcealDns => "conceal_dns",
            DefenseConfig::Tunnel { .. } => "tunnel",
            DefenseConfig::ShapeConstant { .. } => "shape_constant",
            DefenseConfig::DelayRandomize { .. } => "delay_randomize",
            DefenseConfig::InjectDecoys { .. } => "inject_decoys",
        }
    }

    /// Whether the defense also changes what a radio eavesdropper sees.
    /// Blocking and tunneling act upstream of the access point.
    pub fn affects_radio(&self) -> bool {
        !matches!(self, DefenseConfig::Block { .. } | DefenseConfig::Tunnel { .. })
    }

    pub fn validate(&self) -> Result<(), DefenseError> {
        let name = self.name();
        match self {
            DefenseConfig::Block { rules } if rules.is_empty() => Err(invalid(name, "no rules")),
            DefenseConfig::Tunnel { endpoint, .. } if !crate::trace::is_token(endpoint) => {
                Err(invalid(name, format!("bad endpoint '{endpoint}'")))
            }
            DefenseConfig::ShapeConstant { target_rate, cell_size } => {
                shape::cell_interval_us(*target_rate, *cell_size).map(|_| ())
            }
            DefenseConfig::DelayRandomize { max_delay_s, .. } if !(max_delay_s.is_finite() && *max_delay_s >= 0.0) => {
                Err(invalid(name, "max_delay_s must be non-negative"))
            }
            DefenseConfig::InjectDecoys { multiplier, .. } if !(multiplier.is_finite() && *multiplier >= 0.0) => {
                Err(invalid(name, "multiplier must be non-negative"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalityLevel {
    Full,
    Limited,
    None,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceImpact {
    pub level: FunctionalityLevel,
    pub description: String,
}

/// What each affected device can still do, keyed by device id.
pub type FunctionalityImpact = BTreeMap<String, DeviceImpact>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseCost {
    pub defense: String,
    pub overhead_bytes: u64,
    /// `overhead_bytes / original bytes`, 0 for an empty input.
    pub overhead_ratio: f64,
    /// Averaged over every byte of the input trace.
    pub mean_added_latency_s: f64,
    pub max_added_latency_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functionality: Option<FunctionalityImpact>,
    /// Bursts that had to be pulled back to the trace end.
    pub clamped_bursts: usize,
}

impl DefenseCost {
    pub(crate) fn free(defense: &str) -> Self {
        Self {
            defense: defense.to_string(),
            overhead_bytes: 0,
            overhead_ratio: 0.0,
            mean_added_latency_s: 0.0,
            max_added_latency_s: 0.0,
            functionality: None,
            clamped_bursts: 0,
        }
    }

    pub(crate) fn with_overhead(mut self, overhead: u64, original: u64) -> Self {
        self.overhead_bytes = overhead;
        self.overhead_ratio = if original == 0 {
            0.0
        } else {
            overhead as f64 / original as f64
        };
        self
    }

    /// `byte_us` is the byte-weighted sum of delays in microseconds.
    pub(crate) fn with_latency(mut self, byte_us: u128, original: u64, max_us: u64) -> Self {
        if original > 0 {
            self.mean_added_latency_s = byte_us as f64 / original as f64 / 1e6;
        }
        self.max_added_latency_s = micros_to_secs(max_us);
        self
    }

    pub fn csv_header() -> &'static str {
        "defense,overhead_bytes,overhead_ratio,mean_added_latency_s,max_added_latency_s,clamped_bursts,functionality"
    }

    pub fn csv_row(&self) -> String {
        let functionality = self
            .functionality
            .as_ref()
            .map(|f| {
                f.iter()
                    .map(|(d, i)| {
                        let level = serde_json::to_value(i.level).ok();
                        format!("{d}={}", level.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
                    })
                    .collect::<Vec<_>>()
                    .join(";")
            })
            .unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.defense,
            self.overhead_bytes,
            self.overhead_ratio,
            self.mean_added_latency_s,
            self.max_added_latency_s,
            self.clamped_bursts,
            functionality
        )
    }
}

/// Extra inputs some defenses need.
#[derive(Clone, Copy, Debug, Default)]
pub struct DefenseContext<'a> {
    pub scenario: Option<&'a Scenario>,
    pub real_timeline: Option<&'a BehaviorTimeline>,
    /// Seed used when the config does not pin one.
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct DefenseOutcome {
    pub trace: Trace,
    pub cost: DefenseCost,
    /// Ground truth of injected decoys.
    pub decoys: Option<BehaviorTimeline>,
}

pub fn apply_defense(
    trace: &Trace,
    config: &DefenseConfig,
    ctx: &DefenseContext<'_>,
) -> Result<DefenseOutcome, DefenseError> {
    config.validate()?;
    let plain = |(trace, cost)| DefenseOutcome {
        trace,
        cost,
        decoys: None,
    };
    Ok(match config {
        DefenseConfig::Block { rules } => plain(block_streams(trace, rules, &FunctionalityTable::builtin())?),
        DefenseConfig::ConcealDns => plain(conceal_dns(trace)?),
        DefenseConfig::Tunnel {
            endpoint,
            overhead_bytes,
        } => plain(tunnel(trace, endpoint, *overhead_bytes)?),
        DefenseConfig::ShapeConstant { target_rate, cell_size } => {
            plain(shape_constant_rate(trace, *target_rate, *cell_size)?)
        }
        DefenseConfig::DelayRandomize {
            max_delay_s,
            devices,
            seed,
        } => plain(delay_randomize(trace, devices, *max_delay_s, seed.unwrap_or(ctx.seed))?),
        DefenseConfig::InjectDecoys { multiplier, seed } => {
            let (Some(scenario), Some(real)) = (ctx.scenario, ctx.real_timeline) else {
                return Err(DefenseError::MissingContext("inject_decoys"));
            };
            let (trace, decoys, cost) = inject_decoys(trace, scenario, real, *multiplier, seed.unwrap_or(ctx.seed))?;
            DefenseOutcome {
                trace,
                cost,
                decoys: Some(decoys),
            }
        }
    })
}

/// The `[[defense]]` list of a config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenseList {
    #[serde(default, rename = "defense")]
    pub defenses: Vec<DefenseConfig>,
}

impl DefenseList {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let text = r#"
[[defense]]
kind = "block"
rules = [{ device = "sense", category = "all" }]

[[defense]]
kind = "conceal_dns"

[[defense]]
kind = "tunnel"

[[defense]]
kind = "shape_constant"
target_rate = 20000.0
cell_size = 5000

[[defense]]
kind = "delay_randomize"
max_delay_s = 600.0
devices = ["sense"]

[[defense]]
kind = "inject_decoys"
multiplier = 1.0
seed = 7
"#;
        let list = DefenseList::from_toml(text).unwrap();
        assert_eq!(list.defenses.len(), 6);
        assert_eq!(
            list.defenses[2],
            DefenseConfig::Tunnel {
                endpoint: DEFAULT_TUNNEL_ENDPOINT.into(),
                overhead_bytes: 40
            }
        );
        let names: Vec<_> = list.defenses.iter().map(DefenseConfig::name).collect();
        assert_eq!(
            names,
            ["block", "conceal_dns", "tunnel", "shape_constant", "delay_randomize", "inject_decoys"]
        );
        let again = DefenseList::from_toml(&toml::to_string(&list).unwrap()).unwrap();
        assert_eq!(again, list);
        for d in &list.defenses {
            d.validate().unwrap();
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DefenseConfig::InjectDecoys {
            multiplier: -1.0,
            seed: None
        }
        .validate()
        .is_err());
        assert!(DefenseConfig::ShapeConstant {
            target_rate: 0.0,
            cell_size: 10
        }
        .validate()
        .is_err());
        assert!(DefenseList::from_toml("[[defense]]\nkind = \"teleport\"\n").is_err());
    }
}

//! Built-in scenarios.
//!
//! `default` is a six-device home observed for two hours with few user
//! interactions; each device has its own idle rate and burst magnitude.
//! `stress` gives several devices identical idle behavior. `clean_burst` is
//! a longer, quieter home whose bursts stand far above idle traffic, used
//! for behavior-inference and decoy experiments.

use std::collections::BTreeMap;

use super::{DeviceProfile, Dist, EventShape, Heartbeat, LogicalConstraint, Scenario, ScenarioDevice};

pub const DEFAULT_SEED: u64 = 20170213;

fn uniform(min: f64, max: f64) -> Dist {
    Dist::Uniform { min, max }
}

fn normal(mean: f64, sd: f64, min: f64, max: f64) -> Dist {
    Dist::Normal { mean, sd, min, max }
}

fn shape(duration_s: Dist, packets: Dist, size_bytes: Dist, gap_s: Dist, inbound_fraction: f64) -> EventShape {
    EventShape {
        duration_s,
        packets,
        size_bytes,
        gap_s,
        inbound_fraction,
    }
}

struct DeviceSpec<'a> {
    id: &'a str,
    label: &'a str,
    heartbeat: (f64, u32),
    domain: &'a str,
    events: Vec<(&'a str, EventShape, f64)>,
}

fn build(name: &str, duration_s: f64, device_defs: Vec<DeviceSpec<'_>>, constraints: Vec<LogicalConstraint>) -> Scenario {
    let mut devices = Vec::new();
    let mut event_rates = BTreeMap::new();
    for def in device_defs {
        let mut events = BTreeMap::new();
        let mut rates = BTreeMap::new();
        for (ty, shape, rate) in def.events {
            events.insert(ty.to_string(), shape);
            rates.insert(ty.to_string(), rate);
        }
        event_rates.insert(def.id.to_string(), rates);
        devices.push(ScenarioDevice {
            id: def.id.to_string(),
            profile: DeviceProfile {
                type_label: def.label.to_string(),
                heartbeat: Some(Heartbeat {
                    period_s: def.heartbeat.0,
                    size_bytes: def.heartbeat.1,
                    jitter: 0.05,
                }),
                events,
                dns_domains: vec![def.domain.to_string()],
                remote_endpoint: format!("{}.cloud", def.id),
            },
        });
    }
    Scenario {
        name: name.to_string(),
        duration_s,
        seed: DEFAULT_SEED,
        dns_refresh_s: super::DEFAULT_DNS_REFRESH_S,
        devices,
        event_rates,
        constraints,
    }
}

fn forbid(device: &str, event_type: Option<&str>, during: &str, during_type: Option<&str>, margin_s: f64) -> LogicalConstraint {
    LogicalConstraint::ForbidDuring {
        device: device.to_string(),
        event_type: event_type.map(str::to_string),
        during_device: during.to_string(),
        during_event_type: during_type.map(str::to_string),
        margin_s,
    }
}

const LOW_RATE: f64 = 0.3;

pub fn default_scenario() -> Scenario {
    let device_defs = vec![
        DeviceSpec {
            id: "sense",
            label: "sleep_monitor",
            heartbeat: (30.0, 700),
            domain: "api.sense-sleep.example",
            events: vec![(
                "sleep",
                shape(uniform(1200.0, 2400.0), Dist::Fixed(120.0), normal(300.0, 50.0, 150.0, 450.0), uniform(5.0, 20.0), 0.1),
                LOW_RATE,
            )],
        },
        DeviceSpec {
            id: "nestcam",
            label: "security_camera",
            heartbeat: (2.0, 900),
            domain: "nexus.nest-cam.example",
            events: vec![(
                "motion",
                shape(uniform(30.0, 90.0), uniform(200.0, 400.0), normal(1200.0, 150.0, 600.0, 1500.0), uniform(0.05, 0.5), 0.05),
                LOW_RATE,
            )],
        },
        DeviceSpec {
            id: "amcrest",
            label: "ip_camera",
            heartbeat: (4.0, 600),
            domain: "p2p.amcrest-view.example",
            events: vec![(
                "motion",
                shape(uniform(20.0, 60.0), uniform(100.0, 200.0), normal(1000.0, 200.0, 400.0, 1400.0), uniform(0.1, 0.4), 0.1),
                LOW_RATE,
            )],
        },
        DeviceSpec {
            id: "wemo",
            label: "smart_outlet",
            heartbeat: (60.0, 150),
            domain: "api.wemo-switch.example",
            events: vec![(
                "toggle",
                shape(uniform(1.0, 4.0), uniform(6.0, 12.0), uniform(200.0, 400.0), uniform(0.05, 0.3), 0.5),
                LOW_RATE,
            )],
        },
        DeviceSpec {
            id: "tplink",
            label: "smart_plug",
            heartbeat: (15.0, 120),
            domain: "devs.tplink-plug.example",
            events: vec![(
                "toggle",
                shape(uniform(1.0, 3.0), uniform(4.0, 8.0), uniform(150.0, 300.0), uniform(0.05, 0.3), 0.5),
                LOW_RATE,
            )],
        },
        DeviceSpec {
            id: "echo",
            label: "personal_assistant",
            heartbeat: (10.0, 600),
            domain: "avs.alexa-voice.example",
            events: vec![(
                "query",
                shape(uniform(5.0, 20.0), uniform(40.0, 120.0), normal(900.0, 200.0, 300.0, 1500.0), uniform(0.02, 0.3), 0.6),
                LOW_RATE,
            )],
        },
    ];
    let constraints = vec![
        forbid("echo", Some("query"), "sense", Some("sleep"), 0.0),
        forbid("wemo", Some("toggle"), "sense", Some("sleep"), 0.0),
    ];
    build("default", 7200.0, device_defs, constraints)
}

pub fn stress_scenario() -> Scenario {
    let toggle = || shape(uniform(1.0, 3.0), uniform(4.0, 8.0), uniform(150.0, 300.0), uniform(0.05, 0.3), 0.5);
    let device_defs = vec![
        DeviceSpec {
            id: "tplink",
            label: "smart_plug",
            heartbeat: (15.0, 120),
            domain: "devs.tplink-plug.example",
            events: vec![("toggle", toggle(), 1.0)],
        },
        DeviceSpec {
            id: "orvibo",
            label: "smart_socket",
            heartbeat: (15.0, 120),
            domain: "api.orvibo-socket.example",
            events: vec![("toggle", toggle(), 1.0)],
        },
        DeviceSpec {
            id: "wemo",
            label: "smart_outlet",
            heartbeat: (15.0, 120),
            domain: "api.wemo-switch.example",
            events: vec![("toggle", toggle(), 1.0)],
        },
        DeviceSpec {
            id: "echo",
            label: "personal_assistant",
            heartbeat: (10.0, 600),
            domain: "avs.alexa-voice.example",
            events: vec![(
                "query",
                shape(uniform(5.0, 20.0), uniform(40.0, 120.0), normal(900.0, 200.0, 300.0, 1500.0), uniform(0.02, 0.3), 0.6),
                2.0,
            )],
        },
    ];
    build("stress", 7200.0, device_defs, Vec::new())
}

pub fn clean_burst_scenario() -> Scenario {
    let device_defs = vec![
        DeviceSpec {
            id: "lock",
            label: "door_lock",
            heartbeat: (30.0, 200),
            domain: "api.smartlock.example",
            events: vec![(
                "arrive",
                shape(uniform(20.0, 40.0), Dist::Fixed(60.0), Dist::Fixed(800.0), uniform(0.1, 0.5), 0.3),
                1.0,
            )],
        },
        DeviceSpec {
            id: "echo",
            label: "personal_assistant",
            heartbeat: (20.0, 300),
            domain: "avs.alexa-voice.example",
            events: vec![(
                "query",
                shape(uniform(20.0, 60.0), uniform(80.0, 120.0), normal(1000.0, 150.0, 500.0, 1500.0), uniform(0.05, 0.5), 0.6),
                1.5,
            )],
        },
        DeviceSpec {
            id: "cam",
            label: "security_camera",
            heartbeat: (10.0, 400),
            domain: "nexus.nest-cam.example",
            events: vec![(
                "motion",
                shape(uniform(60.0, 120.0), uniform(300.0, 500.0), Dist::Fixed(1200.0), uniform(0.05, 0.4), 0.05),
                1.0,
            )],
        },
    ];
    let constraints = vec![
        forbid("lock", None, "lock", None, 300.0),
        forbid("echo", None, "echo", None, 300.0),
        forbid("cam", None, "cam", None, 300.0),
        LogicalConstraint::Precedence {
            before_device: "lock".into(),
            before_event_type: "arrive".into(),
            after_device: "echo".into(),
            after_event_type: "query".into(),
        },
    ];
    build("clean_burst", 6.0 * 3600.0, device_defs, constraints)
}

/// All built-in scenarios, `default` first.
pub fn builtin_scenarios() -> Vec<Scenario> {
    vec![default_scenario(), stress_scenario(), clean_burst_scenario()]
}

pub fn builtin(name: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}

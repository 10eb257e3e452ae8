use rand::Rng;

use super::{BehaviorEvent, BehaviorTimeline, Scenario, ScenarioDevice, SynthError};
use crate::seed::stage_rng;
use crate::trace::{secs_to_micros, Direction, Micros, PacketRecord, Tag, Trace};

/// Fixed part of a DNS query record's size; the qname length is added.
pub const DNS_QUERY_BASE_BYTES: u32 = 40;

pub fn dns_query_size(domain: &str) -> u32 {
    DNS_QUERY_BASE_BYTES + domain.len() as u32
}

/// Renders a behavior timeline into a packet trace: idle heartbeats for
/// every device over the whole scenario, one burst per event, and DNS
/// queries at each device's first activity and every `dns_refresh_s`
/// afterwards.
pub fn render_traffic(timeline: &BehaviorTimeline, scenario: &Scenario) -> Result<Trace, SynthError> {
    scenario.validate()?;
    let total = scenario.duration_us();
    let mut rng = stage_rng(scenario.seed, "render");
    let mut records = Vec::new();
    for e in &timeline.events {
        if scenario.device(&e.device_id).is_none() {
            return Err(SynthError::UnknownDevice(e.device_id.clone()));
        }
    }

    for device in &scenario.devices {
        let events: Vec<(u32, &BehaviorEvent)> = timeline
            .events
            .iter()
            .enumerate()
            .filter(|(_, e)| e.device_id == device.id)
            .map(|(i, e)| (i as u32, e))
            .collect();

        let heartbeats = render_heartbeats(device, total, &mut rng);
        let mut bursts = Vec::new();
        for (id, event) in &events {
            bursts.extend(render_burst(device, event, *id, false, &mut rng)?);
        }

        let first_activity = heartbeats
            .first()
            .map(|r| r.timestamp_us)
            .into_iter()
            .chain(events.iter().map(|(_, e)| e.time_us))
            .min();
        if let Some(start) = first_activity {
            records.extend(render_dns(device, start, scenario, total));
        }
        records.extend(heartbeats);
        records.extend(bursts);
    }

    Trace::new(records, total, scenario.roster()).map_err(SynthError::Trace)
}

/// Renders only the bursts for `events`, tagging them as decoys when
/// `decoy` is set. Burst ids are the event indices offset by `id_offset`.
pub fn render_bursts(
    events: &[BehaviorEvent],
    scenario: &Scenario,
    decoy: bool,
    id_offset: u32,
    seed: u64,
) -> Result<Vec<PacketRecord>, SynthError> {
    let mut rng = stage_rng(seed, if decoy { "decoy-render" } else { "burst-render" });
    let mut out = Vec::new();
    for (i, event) in events.iter().enumerate() {
        let device = scenario
            .device(&event.device_id)
            .ok_or_else(|| SynthError::UnknownDevice(event.device_id.clone()))?;
        out.extend(render_burst(device, event, id_offset + i as u32, decoy, &mut rng)?);
    }
    Ok(out)
}

fn render_heartbeats<R: Rng + ?Sized>(
    device: &ScenarioDevice,
    total: Micros,
    rng: &mut R,
) -> Vec<PacketRecord> {
    let Some(hb) = &device.profile.heartbeat else {
        return Vec::new();
    };
    let period = secs_to_micros(hb.period_s).max(1);
    let mut out = Vec::new();
    let mut base = 0;
    while base < total {
        let offset = if hb.jitter > 0.0 {
            secs_to_micros(rng.random::<f64>() * hb.jitter * hb.period_s)
        } else {
            0
        };
        let t = base + offset;
        if t >= total {
            break;
        }
        out.push(PacketRecord {
            timestamp_us: t,
            device_id: device.id.clone(),
            direction: Direction::Outbound,
            size_bytes: hb.size_bytes,
            remote_endpoint: Some(device.profile.remote_endpoint.clone()),
            dns_qname: None,
            tag: Some(Tag::Heartbeat),
        });
        base += period;
    }
    out
}

fn render_dns(device: &ScenarioDevice, start: Micros, scenario: &Scenario, total: Micros) -> Vec<PacketRecord> {
    let refresh = secs_to_micros(scenario.dns_refresh_s).max(1);
    let mut out = Vec::new();
    let mut t = start;
    while t < total {
        for domain in &device.profile.dns_domains {
            out.push(PacketRecord {
                timestamp_us: t,
                device_id: device.id.clone(),
                direction: Direction::Outbound,
                size_bytes: dns_query_size(domain),
                remote_endpoint: None,
                dns_qname: Some(domain.clone()),
                tag: Some(Tag::Dns),
            });
        }
        t += refresh;
    }
    out
}

fn render_burst<R: Rng + ?Sized>(
    device: &ScenarioDevice,
    event: &BehaviorEvent,
    id: u32,
    decoy: bool,
    rng: &mut R,
) -> Result<Vec<PacketRecord>, SynthError> {
    let shape = device
        .profile
        .events
        .get(&event.event_type)
        .ok_or_else(|| SynthError::UnknownEventType {
            device: device.id.clone(),
            event_type: event.event_type.clone(),
        })?;
    let count = (shape.packets.sample(rng).round() as usize).max(1);

    // Relative offsets from the gap distribution, stretched onto the event.
    let mut cumulative = Vec::with_capacity(count);
    let mut acc = 0.0;
    cumulative.push(0.0);
    for _ in 1..count {
        acc += shape.gap_s.sample(rng);
        cumulative.push(acc);
    }
    let span = event.duration_us as f64;
    let tag = if decoy {
        Tag::Decoy {
            id,
            event_type: event.event_type.clone(),
        }
    } else {
        Tag::Burst {
            id,
            event_type: event.event_type.clone(),
        }
    };

    let mut out = Vec::with_capacity(count);
    for (i, c) in cumulative.iter().enumerate() {
        let frac = if count == 1 {
            0.0
        } else if acc > 0.0 {
            c / acc
        } else {
            i as f64 / (count - 1) as f64
        };
        let offset = ((frac * span).round() as Micros).min(event.duration_us);
        let size = (shape.size_bytes.sample(rng).round() as u32).max(1);
        let direction = if rng.random::<f64>() < shape.inbound_fraction {
            Direction::Inbound
        } else {
            Direction::Outbound
        };
        out.push(PacketRecord {
            timestamp_us: event.time_us + offset,
            device_id: device.id.clone(),
            direction,
            size_bytes: size,
            remote_endpoint: Some(device.profile.remote_endpoint.clone()),
            dns_qname: None,
            tag: Some(tag.clone()),
        });
    }
    Ok(out)
}

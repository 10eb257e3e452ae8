use std::collections::VecDeque;

use super::{invalid, DefenseCost, DefenseError};
use crate::trace::{Direction, Micros, PacketRecord, Tag, Trace};

/// Cell spacing in microseconds. It has to come out whole so that every
/// aligned bin holds exactly the same number of cells.
pub(crate) fn cell_interval_us(target_rate: f64, cell_size: u32) -> Result<Micros, DefenseError> {
    if !(target_rate.is_finite() && target_rate > 0.0) {
        return Err(invalid("shape_constant", "target_rate must be positive"));
    }
    if cell_size == 0 {
        return Err(invalid("shape_constant", "cell_size must be positive"));
    }
    let exact = f64::from(cell_size) * 1e6 / target_rate;
    let us = exact.round();
    if us < 1.0 || (us - exact).abs() > 1e-6 {
        return Err(invalid(
            "shape_constant",
            format!("cell interval {exact} us is not a whole number of microseconds"),
        ));
    }
    Ok(us as Micros)
}

/// Replaces each device's traffic with fixed-size cells sent every
/// `cell_size / target_rate` seconds from time 0 to the end of the trace.
///
/// Real bytes queue first-come-first-served and leave in the next cell with
/// room; whatever room is left is padding. Fails if any device's queue is
/// not empty after its last cell.
pub fn shape_constant_rate(
    trace: &Trace,
    target_rate: f64,
    cell_size: u32,
) -> Result<(Trace, DefenseCost), DefenseError> {
    let interval = cell_interval_us(target_rate, cell_size)?;
    let n_cells = trace.duration_us().div_ceil(interval);
    let mut out = Vec::new();
    let mut byte_us: u128 = 0;
    let mut max_us = 0;

    for device in trace.roster().keys() {
        let mut pending = trace.records().iter().filter(|r| &r.device_id == device).peekable();
        let endpoint = trace
            .records()
            .iter()
            .filter(|r| &r.device_id == device)
            .find_map(|r| r.remote_endpoint.clone());
        let mut queue: VecDeque<(Micros, u64)> = VecDeque::new();
        for j in 0..n_cells {
            let t = j * interval;
            while let Some(r) = pending.next_if(|r| r.timestamp_us <= t) {
                queue.push_back((r.timestamp_us, u64::from(r.size_bytes)));
            }
            let mut room = u64::from(cell_size);
            while room > 0 {
                let Some(front) = queue.front_mut() else { break };
                let take = front.1.min(room);
                room -= take;
                front.1 -= take;
                let wait = t - front.0;
                byte_us += u128::from(take) * u128::from(wait);
                max_us = max_us.max(wait);
                if front.1 == 0 {
                    queue.pop_front();
                }
            }
            out.push(PacketRecord {
                timestamp_us: t,
                device_id: device.clone(),
                direction: Direction::Outbound,
                size_bytes: cell_size,
                remote_endpoint: endpoint.clone(),
                dns_qname: None,
                tag: Some(Tag::Cell),
            });
        }
        let residual: u64 = queue.iter().map(|q| q.1).sum::<u64>() + pending.map(|r| u64::from(r.size_bytes)).sum::<u64>();
        if residual > 0 {
            return Err(DefenseError::ResidualQueue {
                device: device.clone(),
                residual_bytes: residual,
            });
        }
    }

    let original = trace.total_bytes();
    let shaped = trace.with_records(out)?;
    let cost = DefenseCost::free("shape_constant")
        .with_overhead(shaped.total_bytes() - original, original)
        .with_latency(byte_us, original, max_us);
    Ok((shaped, cost))
}

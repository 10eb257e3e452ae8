//! Packet-metadata traces and adversary views.
//!
//! A [`Trace`] is the ground-truth record of everything a smart home sent or
//! received: per-packet timing, size, direction, device key, remote endpoint
//! and (for DNS queries) the queried name. Adversaries never see a `Trace`
//! directly; they see an [`ObservedTrace`] produced by [`project_view`].
//!
//! Times are kept as integer microseconds so that the text format
//! round-trips exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Microseconds since the start of a trace.
pub type Micros = u64;

pub const MICROS_PER_SEC: u64 = 1_000_000;

/// Converts seconds to microseconds, rounding to the nearest microsecond.
/// Negative and non-finite inputs clamp to zero.
pub fn secs_to_micros(secs: f64) -> Micros {
    if !secs.is_finite() || secs <= 0.0 {
        return 0;
    }
    (secs * MICROS_PER_SEC as f64).round() as Micros
}

pub fn micros_to_secs(us: Micros) -> f64 {
    us as f64 / MICROS_PER_SEC as f64
}

/// Formats microseconds as seconds with exactly six decimals.
pub fn format_micros(us: Micros) -> String {
    format!("{}.{:06}", us / MICROS_PER_SEC, us % MICROS_PER_SEC)
}

/// Parses a non-negative decimal seconds value into microseconds.
///
/// Up to six fractional digits are parsed exactly; longer fractions are
/// rounded to the nearest microsecond.
pub fn parse_micros(s: &str) -> Option<Micros> {
    if s.is_empty() || s.starts_with('-') || s.starts_with('+') {
        return None;
    }
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if frac.len() > 6 {
        let v: f64 = s.parse().ok()?;
        return Some(secs_to_micros(v));
    }
    let whole: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let mut frac_us: u64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    for _ in frac.len()..6 {
        frac_us *= 10;
    }
    whole.checked_mul(MICROS_PER_SEC)?.checked_add(frac_us)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Outbound,
    Inbound,
}

impl Direction {
    pub fn token(self) -> &'static str {
        match self {
            Direction::Outbound => "out",
            Direction::Inbound => "in",
        }
    }
}

impl FromStr for Direction {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "out" => Ok(Direction::Outbound),
            "in" => Ok(Direction::Inbound),
            _ => Err(()),
        }
    }
}

/// Generator provenance of a record. Lives only in the full trace;
/// [`project_view`] strips it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Tag {
    Heartbeat,
    Dns,
    /// Part of the burst rendered for a real behavior event.
    Burst { id: u32, event_type: String },
    /// Part of the burst rendered for an injected decoy event.
    Decoy { id: u32, event_type: String },
    /// A constant-rate shaping cell.
    Cell,
}

impl Tag {
    /// Blocking category this record falls under.
    pub fn category(&self) -> &str {
        match self {
            Tag::Heartbeat => "heartbeat",
            Tag::Dns => "dns",
            Tag::Burst { event_type, .. } | Tag::Decoy { event_type, .. } => event_type,
            Tag::Cell => "cell",
        }
    }

    /// Identifies the burst a record belongs to, if any.
    pub fn burst_key(&self) -> Option<(bool, u32)> {
        match self {
            Tag::Burst { id, .. } => Some((false, *id)),
            Tag::Decoy { id, .. } => Some((true, *id)),
            _ => None,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Heartbeat => f.write_str("hb"),
            Tag::Dns => f.write_str("dns"),
            Tag::Burst { id, event_type } => write!(f, "ev:{id}:{event_type}"),
            Tag::Decoy { id, event_type } => write!(f, "decoy:{id}:{event_type}"),
            Tag::Cell => f.write_str("cell"),
        }
    }
}

impl FromStr for Tag {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hb" => return Ok(Tag::Heartbeat),
            "dns" => return Ok(Tag::Dns),
            "cell" => return Ok(Tag::Cell),
            _ => {}
        }
        let mut parts = s.splitn(3, ':');
        let kind = parts.next().ok_or(())?;
        let id: u32 = parts.next().ok_or(())?.parse().map_err(|_| ())?;
        let event_type = parts.next().filter(|t| !t.is_empty()).ok_or(())?.to_string();
        match kind {
            "ev" => Ok(Tag::Burst { id, event_type }),
            "decoy" => Ok(Tag::Decoy { id, event_type }),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PacketRecord {
    pub timestamp_us: Micros,
    pub device_id: String,
    pub direction: Direction,
    pub size_bytes: u32,
    pub remote_endpoint: Option<String>,
    pub dns_qname: Option<String>,
    pub tag: Option<Tag>,
}

impl PacketRecord {
    pub fn timestamp_s(&self) -> f64 {
        micros_to_secs(self.timestamp_us)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("malformed line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("invalid size at line {line}")]
    InvalidSize { line: usize },
    #[error("invalid timestamp at line {line}")]
    InvalidTimestamp { line: usize },
    #[error("unknown direction '{token}' at line {line}")]
    UnknownDirection { line: usize, token: String },
    #[error("device '{device}' at line {line} is missing from the roster header")]
    UnknownDevice { line: usize, device: String },
    #[error("missing #duration header")]
    MissingDuration,
    #[error("record {index}: {reason}")]
    Invalid { index: usize, reason: String },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}

/// Ground-truth packet trace of one home.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    records: Vec<PacketRecord>,
    duration_us: Micros,
    /// device_id → device type label
    roster: BTreeMap<String, String>,
}

impl Trace {
    /// Builds a trace, validating record invariants and stably sorting by
    /// timestamp.
    pub fn new(
        mut records: Vec<PacketRecord>,
        duration_us: Micros,
        roster: BTreeMap<String, String>,
    ) -> Result<Self, TraceError> {
        for (index, r) in records.iter().enumerate() {
            let fail = |reason: &str| TraceError::Invalid {
                index,
                reason: reason.to_string(),
            };
            if r.size_bytes == 0 {
                return Err(fail("size_bytes must be at least 1"));
            }
            if r.timestamp_us > duration_us {
                return Err(fail("timestamp exceeds trace duration"));
            }
            if !roster.contains_key(&r.device_id) {
                return Err(fail(&format!("device '{}' not in roster", r.device_id)));
            }
            if r.dns_qname.is_some() && r.direction != Direction::Outbound {
                return Err(fail("DNS query records must be outbound"));
            }
            for field in [Some(&r.device_id), r.remote_endpoint.as_ref(), r.dns_qname.as_ref()]
                .into_iter()
                .flatten()
            {
                if !is_token(field) {
                    return Err(fail(&format!("'{field}' is not a valid field token")));
                }
            }
        }
        records.sort_by_key(|r| r.timestamp_us);
        Ok(Self {
            records,
            duration_us,
            roster,
        })
    }

    pub fn empty(duration_us: Micros, roster: BTreeMap<String, String>) -> Self {
        Self {
            records: Vec::new(),
            duration_us,
            roster,
        }
    }

    pub fn records(&self) -> &[PacketRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<PacketRecord> {
        self.records
    }

    pub fn duration_us(&self) -> Micros {
        self.duration_us
    }

    pub fn duration_s(&self) -> f64 {
        micros_to_secs(self.duration_us)
    }

    pub fn roster(&self) -> &BTreeMap<String, String> {
        &self.roster
    }

    pub fn total_bytes(&self) -> u64 {
        self.records.iter().map(|r| u64::from(r.size_bytes)).sum()
    }

    pub fn bytes_by_device(&self) -> BTreeMap<String, u64> {
        let mut out: BTreeMap<String, u64> =
            self.roster.keys().map(|d| (d.clone(), 0)).collect();
        for r in &self.records {
            *out.entry(r.device_id.clone()).or_default() += u64::from(r.size_bytes);
        }
        out
    }

    /// Replaces the record list, keeping duration and roster.
    pub fn with_records(&self, records: Vec<PacketRecord>) -> Result<Self, TraceError> {
        Self::new(records, self.duration_us, self.roster.clone())
    }
}

/// A field token must be non-empty, contain no whitespace and not be the
/// absent-field marker `-`.
pub fn is_token(s: &str) -> bool {
    !s.is_empty() && s != "-" && !s.chars().any(char::is_whitespace)
}

fn opt_field(s: &str) -> Option<String> {
    (s != "-").then(|| s.to_string())
}

pub fn parse_trace(text: &str) -> Result<Trace, TraceError> {
    let mut duration = None;
    let mut roster = BTreeMap::new();
    let mut records = Vec::new();
    let mut record_lines = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('#') {
            let fields: Vec<&str> = header.split_whitespace().collect();
            match fields.as_slice() {
                ["duration", secs] => {
                    duration = Some(parse_micros(secs).ok_or(TraceError::Malformed {
                        line,
                        reason: format!("bad duration '{secs}'"),
                    })?);
                }
                ["device", id, label] => {
                    roster.insert(id.to_string(), label.to_string());
                }
                ["duration", ..] | ["device", ..] => {
                    return Err(TraceError::Malformed {
                        line,
                        reason: "wrong number of header fields".into(),
                    })
                }
                // Other '#' lines are comments.
                _ => {}
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split(' ').collect();
        if fields.len() != 6 && fields.len() != 7 {
            return Err(TraceError::Malformed {
                line,
                reason: format!("expected 6 or 7 fields, found {}", fields.len()),
            });
        }
        let timestamp_us = parse_micros(fields[0]).ok_or(TraceError::InvalidTimestamp { line })?;
        let device_id = fields[1];
        if !is_token(device_id) {
            return Err(TraceError::Malformed {
                line,
                reason: "empty device id".into(),
            });
        }
        let direction: Direction =
            fields[2]
                .parse()
                .map_err(|_| TraceError::UnknownDirection {
                    line,
                    token: fields[2].to_string(),
                })?;
        let size_bytes: u32 = match fields[3].parse() {
            Ok(v) if v >= 1 => v,
            _ => return Err(TraceError::InvalidSize { line }),
        };
        let dns_qname = opt_field(fields[5]);
        if dns_qname.is_some() && direction != Direction::Outbound {
            return Err(TraceError::Malformed {
                line,
                reason: "DNS query on inbound record".into(),
            });
        }
        let tag = match fields.get(6) {
            Some(t) => Some(t.parse::<Tag>().map_err(|_| TraceError::Malformed {
                line,
                reason: format!("bad tag '{t}'"),
            })?),
            None => None,
        };
        records.push(PacketRecord {
            timestamp_us,
            device_id: device_id.to_string(),
            direction,
            size_bytes,
            remote_endpoint: opt_field(fields[4]),
            dns_qname,
            tag,
        });
        record_lines.push(line);
    }

    let duration_us = duration.ok_or(TraceError::MissingDuration)?;
    for (r, &line) in records.iter().zip(&record_lines) {
        if !roster.contains_key(&r.device_id) {
            return Err(TraceError::UnknownDevice {
                line,
                device: r.device_id.clone(),
            });
        }
        if r.timestamp_us > duration_us {
            return Err(TraceError::InvalidTimestamp { line });
        }
    }
    Trace::new(records, duration_us, roster)
}

pub fn render_trace(trace: &Trace) -> String {
    let mut out = String::with_capacity(64 * (trace.records.len() + trace.roster.len() + 1));
    out.push_str(&format!("#duration {}\n", format_micros(trace.duration_us)));
    for (id, label) in &trace.roster {
        out.push_str(&format!("#device {id} {label}\n"));
    }
    for r in &trace.records {
        out.push_str(&format!(
            "{} {} {} {} {} {}",
            format_micros(r.timestamp_us),
            r.device_id,
            r.direction.token(),
            r.size_bytes,
            r.remote_endpoint.as_deref().unwrap_or("-"),
            r.dns_qname.as_deref().unwrap_or("-"),
        ));
        if let Some(tag) = &r.tag {
            out.push(' ');
            out.push_str(&tag.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace, TraceError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| TraceError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_trace(&text)
}

pub fn save_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<(), TraceError> {
    let path = path.as_ref();
    let io_err = |e: std::io::Error| TraceError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(render_trace(trace).as_bytes()).map_err(io_err)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdversaryView {
    /// Passive observer on the home's uplink (for example the ISP).
    #[serde(rename = "last-mile", alias = "last_mile")]
    LastMile,
    /// Radio eavesdropper without WiFi credentials.
    #[serde(rename = "wifi", alias = "wifi_eavesdropper")]
    WifiEavesdropper,
}

impl AdversaryView {
    pub fn sees_endpoints(self) -> bool {
        matches!(self, AdversaryView::LastMile)
    }

    pub fn sees_dns(self) -> bool {
        matches!(self, AdversaryView::LastMile)
    }
}

impl fmt::Display for AdversaryView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdversaryView::LastMile => "last-mile",
            AdversaryView::WifiEavesdropper => "wifi",
        })
    }
}

impl FromStr for AdversaryView {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "last-mile" | "last_mile" => Ok(AdversaryView::LastMile),
            "wifi" | "wifi_eavesdropper" => Ok(AdversaryView::WifiEavesdropper),
            other => Err(format!("unknown adversary view '{other}'")),
        }
    }
}

/// A record as some adversary sees it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservedRecord {
    pub timestamp_us: Micros,
    pub device_id: String,
    pub direction: Direction,
    pub size_bytes: u32,
    pub remote_endpoint: Option<String>,
    pub dns_qname: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservedTrace {
    pub view: AdversaryView,
    pub duration_us: Micros,
    pub records: Vec<ObservedRecord>,
}

/// Projects a ground-truth trace onto what `view` can observe. Record count
/// and order are preserved; forbidden fields, provenance tags and the roster
/// are dropped.
pub fn project_view(trace: &Trace, view: AdversaryView) -> ObservedTrace {
    let records = trace
        .records
        .iter()
        .map(|r| ObservedRecord {
            timestamp_us: r.timestamp_us,
            device_id: r.device_id.clone(),
            direction: r.direction,
            size_bytes: r.size_bytes,
            remote_endpoint: r
                .remote_endpoint
                .clone()
                .filter(|_| view.sees_endpoints()),
            dns_qname: r.dns_qname.clone().filter(|_| view.sees_dns()),
        })
        .collect();
    ObservedTrace {
        view,
        duration_us: trace.duration_us,
        records,
    }
}

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::trace::{AdversaryView, ObservedRecord, ObservedTrace};

/// Identifies one stream the adversary separated out.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StreamKey {
    pub device: String,
    /// Present only when the last-mile observer has to split a device's
    /// traffic by remote endpoint.
    pub endpoint: Option<Option<String>>,
}

impl StreamKey {
    pub fn device(device: impl Into<String>) -> Self {
        Self {
            device: device.into(),
            endpoint: None,
        }
    }
}

impl fmt::Display for StreamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.endpoint {
            None => f.write_str(&self.device),
            Some(ep) => write!(f, "{}@{}", self.device, ep.as_deref().unwrap_or("-")),
        }
    }
}

/// Partitions observed records into per-stream lists.
///
/// The WiFi eavesdropper keys by device (MAC). The last-mile observer keys
/// by (device, remote endpoint), collapsed to the device when devices and
/// endpoints are in one-to-one correspondence. Records without an endpoint
/// (DNS queries) join their device's stream in the collapsed case.
pub fn split_streams(observed: &ObservedTrace) -> BTreeMap<StreamKey, Vec<ObservedRecord>> {
    let collapse = match observed.view {
        AdversaryView::WifiEavesdropper => true,
        AdversaryView::LastMile => endpoints_one_to_one(&observed.records),
    };
    let mut out: BTreeMap<StreamKey, Vec<ObservedRecord>> = BTreeMap::new();
    for r in &observed.records {
        let key = StreamKey {
            device: r.device_id.clone(),
            endpoint: (!collapse).then(|| r.remote_endpoint.clone()),
        };
        out.entry(key).or_default().push(r.clone());
    }
    out
}

fn endpoints_one_to_one(records: &[ObservedRecord]) -> bool {
    let mut by_device: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut by_endpoint: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in records {
        if let Some(ep) = r.remote_endpoint.as_deref() {
            by_device.entry(&r.device_id).or_default().insert(ep);
            by_endpoint.entry(ep).or_default().insert(&r.device_id);
        }
    }
    by_device.values().all(|s| s.len() <= 1) && by_endpoint.values().all(|s| s.len() <= 1)
}

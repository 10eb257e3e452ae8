use std::path::Path;

use super::AdversaryError;
use crate::trace::ObservedRecord;

/// Ordered keyword → device type pairs. Earlier entries win.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DnsDictionary {
    pub entries: Vec<(String, String)>,
}

impl DnsDictionary {
    pub fn new<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Self {
        Self {
            entries: pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    /// Keywords for the built-in device profiles.
    pub fn builtin() -> Self {
        Self::new([
            ("sense", "sleep_monitor"),
            ("nest", "security_camera"),
            ("amcrest", "ip_camera"),
            ("wemo", "smart_outlet"),
            ("tplink", "smart_plug"),
            ("orvibo", "smart_socket"),
            ("alexa", "personal_assistant"),
            ("smartlock", "door_lock"),
        ])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AdversaryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AdversaryError::MalformedDictionary {
            line: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
        parse_dictionary(&text)
    }
}

/// Parses `<keyword> <device_type>` lines; blank lines and `#` comments are
/// skipped.
pub fn parse_dictionary(text: &str) -> Result<DnsDictionary, AdversaryError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [keyword, device_type] = fields.as_slice() else {
            return Err(AdversaryError::MalformedDictionary {
                line: idx + 1,
                reason: format!("expected 2 fields, found {}", fields.len()),
            });
        };
        entries.push((keyword.to_string(), device_type.to_string()));
    }
    if entries.is_empty() {
        return Err(AdversaryError::MalformedDictionary {
            line: 0,
            reason: "dictionary is empty".into(),
        });
    }
    Ok(DnsDictionary { entries })
}

/// Returns the device type of the first dictionary keyword that occurs in
/// any DNS query name of the stream.
pub fn identify_by_dns(stream: &[ObservedRecord], dictionary: &DnsDictionary) -> Option<String> {
    let qnames: Vec<&str> = stream.iter().filter_map(|r| r.dns_qname.as_deref()).collect();
    if qnames.is_empty() {
        return None;
    }
    dictionary
        .entries
        .iter()
        .find(|(kw, _)| qnames.iter().any(|q| q.contains(kw.as_str())))
        .map(|(_, ty)| ty.clone())
}

//! Wire formats for emitted events.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use plgen_core::io::xes;
use plgen_core::sim::{AttributeValue, Event, Lifecycle};
use serde::{Deserialize, Serialize};

/// Attribute holding the timestamp the simulator produced.
pub const SIMULATED_TIME: &str = "plgen:simulated_time";
/// Attribute holding the wall-clock time the event was scheduled for.
pub const SCHEDULED_TIME: &str = "plgen:scheduled_time";

/// Attribute holding the 1-based emission index within the session.
pub const SEQUENCE: &str = "plgen:sequence";

/// One emitted event as sent over the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireEvent {
    pub case: String,
    pub activity: String,
    /// Wall-clock emission time, milliseconds since the epoch.
    pub timestamp: i64,
    pub lifecycle: Lifecycle,
    pub attrs: BTreeMap<String, AttributeValue>,
}

impl WireEvent {
    pub fn to_event(&self) -> Event {
        Event {
            case_id: self.case.clone(),
            activity: self.activity.clone(),
            timestamp: self.timestamp,
            lifecycle: self.lifecycle,
            attributes: self.attrs.clone(),
        }
    }

    pub fn simulated_time(&self) -> Option<i64> {
        self.int_attr(SIMULATED_TIME)
    }

    pub fn scheduled_time(&self) -> Option<i64> {
        self.int_attr(SCHEDULED_TIME)
    }

    pub fn sequence(&self) -> Option<u64> {
        self.int_attr(SEQUENCE).map(|v| v as u64)
    }

    fn int_attr(&self, key: &str) -> Option<i64> {
        match self.attrs.get(key) {
            Some(AttributeValue::Integer(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire event serializes")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmissionFormat {
    /// One JSON object per line.
    #[default]
    Ndjson,
    /// One single-line XES document (one trace, one event) per line.
    XesFragment,
}

impl EmissionFormat {
    /// Encodes `event` as one LF-terminated line.
    pub fn encode(self, event: &WireEvent) -> String {
        let mut line = match self {
            EmissionFormat::Ndjson => event.to_json(),
            EmissionFormat::XesFragment => xes::event_fragment(&event.to_event()),
        };
        line.push('\n');
        line
    }
}

impl fmt::Display for EmissionFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmissionFormat::Ndjson => "ndjson",
            EmissionFormat::XesFragment => "xes_fragment",
        })
    }
}

impl FromStr for EmissionFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ndjson" => Ok(EmissionFormat::Ndjson),
            "xes_fragment" | "xes" => Ok(EmissionFormat::XesFragment),
            other => Err(format!("unknown emission format `{other}` (expected ndjson or xes_fragment)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WireEvent {
        WireEvent {
            case: "case_0001".into(),
            activity: "Activity A".into(),
            timestamp: 1_700_000_000_000,
            lifecycle: Lifecycle::Complete,
            attrs: BTreeMap::from([
                ("d".into(), AttributeValue::Integer(1)),
                ("s".into(), AttributeValue::Text("x".into())),
            ]),
        }
    }

    #[test]
    fn ndjson_shape() {
        let line = EmissionFormat::Ndjson.encode(&sample());
        assert!(line.ends_with('\n'));
        assert_eq!(line.matches('\n').count(), 1);
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["case"], "case_0001");
        assert_eq!(v["lifecycle"], "complete");
        assert_eq!(v["timestamp"], 1_700_000_000_000i64);
        assert_eq!(v["attrs"]["d"], 1);
        assert_eq!(v["attrs"]["s"], "x");
        let back: WireEvent = serde_json::from_str(&line).unwrap();
        assert_eq!(back, sample());
    }

    #[test]
    fn xes_fragment_is_one_line() {
        let line = EmissionFormat::XesFragment.encode(&sample());
        assert_eq!(line.matches('\n').count(), 1);
        assert!(line.contains("<int key=\"d\" value=\"1\"/>"));
        assert!(line.contains("value=\"case_0001\""));
    }

    #[test]
    fn format_names() {
        assert_eq!("ndjson".parse::<EmissionFormat>().unwrap(), EmissionFormat::Ndjson);
        assert_eq!(
            EmissionFormat::XesFragment.to_string().parse::<EmissionFormat>().unwrap(),
            EmissionFormat::XesFragment
        );
        assert!("csv".parse::<EmissionFormat>().is_err());
    }
}

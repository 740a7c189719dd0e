//! XES log export.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use chrono::{TimeZone, Utc};
use flate2::write::GzEncoder;
use flate2::Compression;
use quick_xml::escape::escape;

use crate::sim::{AttributeValue, Event, EventLog, Trace};

const HEADER: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<log xes.version="1.0" xes.features="nested-attributes" xmlns="http://www.xes-standard.org/">
  <extension name="Concept" prefix="concept" uri="http://www.xes-standard.org/concept.xesext"/>
  <extension name="Time" prefix="time" uri="http://www.xes-standard.org/time.xesext"/>
  <extension name="Lifecycle" prefix="lifecycle" uri="http://www.xes-standard.org/lifecycle.xesext"/>
  <global scope="trace">
    <string key="concept:name" value="__INVALID__"/>
  </global>
  <global scope="event">
    <string key="concept:name" value="__INVALID__"/>
    <date key="time:timestamp" value="1970-01-01T00:00:00.000+00:00"/>
    <string key="lifecycle:transition" value="complete"/>
  </global>
  <classifier name="Activity" keys="concept:name"/>
  <classifier name="Activity and lifecycle" keys="concept:name lifecycle:transition"/>
"#;

/// ISO-8601 with milliseconds and an explicit UTC offset.
pub fn format_timestamp(millis: i64) -> String {
    Utc.timestamp_millis_opt(millis)
        .single()
        .map(|t| t.format("%Y-%m-%dT%H:%M:%S%.3f+00:00").to_string())
        .unwrap_or_else(|| "1970-01-01T00:00:00.000+00:00".into())
}

fn attribute(out: &mut String, key: &str, value: &AttributeValue) {
    let (tag, v) = match value {
        AttributeValue::Integer(i) => ("int", i.to_string()),
        AttributeValue::Text(s) => ("string", s.clone()),
    };
    out.push_str(&format!("<{tag} key=\"{}\" value=\"{}\"/>", escape(key), escape(&v)));
}

fn event_element(out: &mut String, event: &Event, indent: &str, sep: &str) {
    out.push_str(indent);
    out.push_str("<event>");
    out.push_str(sep);
    let inner = format!("{indent}  ");
    let field = |out: &mut String, s: String| {
        if !sep.is_empty() {
            out.push_str(&inner);
        }
        out.push_str(&s);
        out.push_str(sep);
    };
    field(
        out,
        format!("<string key=\"concept:name\" value=\"{}\"/>", escape(&event.activity)),
    );
    field(
        out,
        format!("<date key=\"time:timestamp\" value=\"{}\"/>", format_timestamp(event.timestamp)),
    );
    field(
        out,
        format!("<string key=\"lifecycle:transition\" value=\"{}\"/>", event.lifecycle.as_str()),
    );
    for (k, v) in &event.attributes {
        let mut s = String::new();
        attribute(&mut s, k, v);
        field(out, s);
    }
    if !sep.is_empty() {
        out.push_str(indent);
    }
    out.push_str("</event>");
    out.push_str(sep);
}

fn trace_element(out: &mut String, trace: &Trace) {
    out.push_str("  <trace>\n");
    out.push_str(&format!(
        "    <string key=\"concept:name\" value=\"{}\"/>\n",
        escape(&trace.case_id)
    ));
    for e in &trace.events {
        event_element(out, e, "    ", "\n");
    }
    out.push_str("  </trace>\n");
}

pub fn write<W: Write>(log: &EventLog, mut w: W) -> io::Result<()> {
    w.write_all(HEADER.as_bytes())?;
    let mut buf = String::new();
    for t in &log.traces {
        buf.clear();
        trace_element(&mut buf, t);
        w.write_all(buf.as_bytes())?;
    }
    w.write_all(b"</log>\n")?;
    w.flush()
}

pub fn to_string(log: &EventLog) -> String {
    let mut out = Vec::new();
    write(log, &mut out).expect("writing to memory");
    String::from_utf8(out).expect("utf-8")
}

/// Writes `log` to `path`, gzip-compressed when the name ends in `.gz`.
pub fn write_file(log: &EventLog, path: &Path) -> io::Result<()> {
    let file = BufWriter::new(File::create(path)?);
    if path.extension().is_some_and(|e| e == "gz") {
        let mut gz = GzEncoder::new(file, Compression::default());
        write(log, &mut gz)?;
        gz.finish()?.flush()
    } else {
        write(log, file)
    }
}

/// A one-line XES document holding a single trace with a single event.
pub fn event_fragment(event: &Event) -> String {
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?><log xes.version=\"1.0\" xmlns=\"http://www.xes-standard.org/\">",
    );
    out.push_str(&format!(
        "<trace><string key=\"concept:name\" value=\"{}\"/>",
        escape(&event.case_id)
    ));
    event_element(&mut out, event, "", "");
    out.push_str("</trace></log>");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Lifecycle;
    use std::collections::BTreeMap;

    fn event(ts: i64) -> Event {
        Event {
            case_id: "case_0001".into(),
            activity: "Activity <A>".into(),
            timestamp: ts,
            lifecycle: Lifecycle::Complete,
            attributes: BTreeMap::from([
                ("d".into(), AttributeValue::Integer(1)),
                ("who".into(), AttributeValue::Text("a&b".into())),
            ]),
        }
    }

    #[test]
    fn timestamps_have_millis_and_offset() {
        assert_eq!(format_timestamp(1_704_067_200_123), "2024-01-01T00:00:00.123+00:00");
    }

    #[test]
    fn empty_log_has_no_traces() {
        let s = to_string(&EventLog::default());
        assert!(!s.contains("<trace>"));
        assert!(s.trim_end().ends_with("</log>"));
    }

    #[test]
    fn typed_and_escaped_attributes() {
        let log = EventLog {
            traces: vec![Trace {
                case_id: "case_0001".into(),
                events: vec![event(0)],
            }],
        };
        let s = to_string(&log);
        assert!(s.contains("<int key=\"d\" value=\"1\"/>"));
        assert!(s.contains("value=\"a&amp;b\""));
        assert!(s.contains("Activity &lt;A&gt;"));
    }

    #[test]
    fn fragment_is_single_line() {
        let f = event_fragment(&event(5));
        assert!(!f.contains('\n'));
        assert_eq!(f.matches("<event>").count(), 1);
        assert!(f.ends_with("</log>"));
    }

    #[test]
    fn gzip_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.xes.gz");
        let log = EventLog {
            traces: vec![Trace {
                case_id: "c".into(),
                events: vec![event(0)],
            }],
        };
        write_file(&log, &path).unwrap();
        let mut text = String::new();
        std::io::Read::read_to_string(
            &mut flate2::read::GzDecoder::new(File::open(&path).unwrap()),
            &mut text,
        )
        .unwrap();
        assert_eq!(text, to_string(&log));
    }
}

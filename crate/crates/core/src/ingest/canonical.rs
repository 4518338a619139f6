//! Canonical JSON trace files.

use super::{read_maybe_gzip, IngestError};
use crate::trace::{Device, SourceFormat, TraceEvent, TraceSet};
use serde::{Deserialize, Serialize};
use serde_json::Value;

const TOP_FIELDS: &[&str] = &["label", "wall_time_ns", "events"];
const EVENT_FIELDS: &[&str] = &["name", "lane", "device", "start_ns", "dur_ns", "count", "shapes", "bytes", "self_ns"];

#[derive(Serialize, Deserialize)]
struct CanonicalFile {
    label: String,
    wall_time_ns: Option<i64>,
    events: Vec<CanonicalEvent>,
}

#[derive(Serialize, Deserialize)]
struct CanonicalEvent {
    name: String,
    lane: String,
    device: Device,
    start_ns: i64,
    dur_ns: i64,
    count: u64,
    shapes: Option<Vec<Vec<u64>>>,
    bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    self_ns: Option<i64>,
}

/// Parse a canonical trace file. Unknown fields are an error in `strict`
/// mode and a logged warning otherwise.
pub fn parse_canonical(input: &[u8], strict: bool) -> Result<TraceSet, IngestError> {
    let bytes = read_maybe_gzip(input)?;
    let value: Value = serde_json::from_slice(&bytes).map_err(|e| IngestError::Malformed(e.to_string()))?;
    check_fields(&value, strict)?;
    let file: CanonicalFile = serde_json::from_value(value).map_err(|e| IngestError::Malformed(e.to_string()))?;
    Ok(TraceSet {
        label: file.label,
        wall_time_ns: file.wall_time_ns,
        source_format: SourceFormat::Canonical,
        events: file
            .events
            .into_iter()
            .map(|e| TraceEvent {
                name: e.name,
                lane_id: e.lane,
                device: e.device,
                start_ns: e.start_ns,
                duration_ns: e.dur_ns,
                call_count: e.count,
                shapes: e.shapes,
                bytes_moved: e.bytes,
                self_ns: e.self_ns,
            })
            .collect(),
    })
}

fn check_fields(value: &Value, strict: bool) -> Result<(), IngestError> {
    let report = |path: String| -> Result<(), IngestError> {
        if strict {
            Err(IngestError::StrictModeUnknownField(path))
        } else {
            log::warn!("ignoring unknown field {path}");
            Ok(())
        }
    };
    let Some(top) = value.as_object() else {
        return Err(IngestError::Malformed("canonical trace must be a JSON object".into()));
    };
    for key in top.keys().filter(|k| !TOP_FIELDS.contains(&k.as_str())) {
        report(key.clone())?;
    }
    if let Some(events) = top.get("events").and_then(Value::as_array) {
        for (i, ev) in events.iter().enumerate() {
            if let Some(obj) = ev.as_object() {
                for key in obj.keys().filter(|k| !EVENT_FIELDS.contains(&k.as_str())) {
                    report(format!("events[{i}].{key}"))?;
                }
            }
        }
    }
    Ok(())
}

/// Serialize to the canonical schema. Output is deterministic: identical
/// sets produce identical bytes.
pub fn emit_canonical(set: &TraceSet) -> Vec<u8> {
    let file = CanonicalFile {
        label: set.label.clone(),
        wall_time_ns: set.wall_time_ns,
        events: set
            .events
            .iter()
            .map(|e| CanonicalEvent {
                name: e.name.clone(),
                lane: e.lane_id.clone(),
                device: e.device,
                start_ns: e.start_ns,
                dur_ns: e.duration_ns,
                count: e.call_count,
                shapes: e.shapes.clone(),
                bytes: e.bytes_moved,
                self_ns: e.self_ns,
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&file).expect("canonical trace serializes");
    out.push(b'\n');
    out
}

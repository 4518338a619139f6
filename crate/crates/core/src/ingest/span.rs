use super::{read_maybe_gzip, IngestError};
use crate::trace::{has_internal_prefix, Device, SourceFormat, TraceEvent, TraceSet, DEFAULT_INTERNAL_PREFIXES};
use crate::units;
use serde_json::{Map, Value};
use std::collections::HashMap;

/// Argument keys searched for tensor shapes, first hit wins.
pub const SHAPE_KEYS: &[&str] = &["Input Dims", "input_dims", "shapes"];

/// Event categories that mark device-side activity.
const GPU_CATEGORIES: &[&str] = &["kernel", "gpu_memcpy", "gpu_memset", "gpu_user_annotation", "cuda_runtime_gpu"];

#[derive(Debug, Clone)]
pub struct SpanOptions {
    /// Name prefixes of profiler bookkeeping events. Matching events are kept
    /// and counted; removing them is the compensation stage's job.
    pub internal_prefixes: Vec<String>,
}

impl Default for SpanOptions {
    fn default() -> Self {
        SpanOptions { internal_prefixes: DEFAULT_INTERNAL_PREFIXES.iter().map(|s| s.to_string()).collect() }
    }
}

/// Parse a trace-event JSON document (either a bare event array or an object
/// with a `traceEvents` array).
///
/// Complete events (`X`) map one-to-one; `B`/`E` pairs are matched per lane
/// (innermost open span first). Other phases (metadata, counters, instants,
/// flows) are skipped. Output order follows the order in which spans open.
pub fn parse_span_trace(input: &[u8], label: &str, opts: &SpanOptions) -> Result<TraceSet, IngestError> {
    let bytes = read_maybe_gzip(input)?;
    let doc: Value = serde_json::from_slice(&bytes).map_err(|e| IngestError::Malformed(e.to_string()))?;
    let raw_events = match &doc {
        Value::Array(a) => a,
        Value::Object(o) => o
            .get("traceEvents")
            .and_then(Value::as_array)
            .ok_or_else(|| IngestError::Malformed("missing traceEvents array".into()))?,
        _ => return Err(IngestError::Malformed("expected a JSON array or object".into())),
    };

    let mut slots: Vec<Option<TraceEvent>> = Vec::new();
    let mut open: HashMap<String, Vec<usize>> = HashMap::new();
    // Begin events waiting for their end, keyed by output slot.
    let mut pending: HashMap<usize, TraceEvent> = HashMap::new();

    for (index, raw) in raw_events.iter().enumerate() {
        let obj = raw
            .as_object()
            .ok_or_else(|| IngestError::Malformed(format!("traceEvents[{index}] is not an object")))?;
        let phase = obj.get("ph").and_then(Value::as_str).unwrap_or("");
        match phase {
            "X" => {
                let mut ev = base_event(obj, index)?;
                ev.duration_ns = time_field(obj, "dur", index)?;
                slots.push(Some(ev));
            }
            "B" => {
                let ev = base_event(obj, index)?;
                open.entry(ev.lane_id.clone()).or_default().push(slots.len());
                pending.insert(slots.len(), ev);
                slots.push(None);
            }
            "E" => {
                let lane = lane_of(obj, index)?;
                let ts = time_field(obj, "ts", index)?;
                let slot = open.get_mut(&lane).and_then(Vec::pop).ok_or_else(|| IngestError::UnmatchedSpan {
                    lane: lane.clone(),
                    name: obj.get("name").and_then(Value::as_str).unwrap_or("<unnamed>").to_string(),
                })?;
                let mut ev = pending.remove(&slot).expect("open span is pending");
                if let Some(name) = obj.get("name").and_then(Value::as_str) {
                    if !name.is_empty() && name != ev.name {
                        log::warn!("end event {name:?} closes span {:?} on lane {lane:?}", ev.name);
                    }
                }
                ev.duration_ns = ts - ev.start_ns;
                if let Some(args) = obj.get("args").and_then(Value::as_object) {
                    if ev.shapes.is_none() {
                        ev.shapes = shapes_from_args(args);
                    }
                }
                slots[slot] = Some(ev);
            }
            _ => {}
        }
    }

    // Report the earliest still-open span so the error is deterministic.
    if let Some(slot) = open.values().filter_map(|s| s.first().copied()).min() {
        let ev = &pending[&slot];
        return Err(IngestError::UnmatchedSpan { lane: ev.lane_id.clone(), name: ev.name.clone() });
    }

    let events: Vec<TraceEvent> = slots.into_iter().flatten().collect();
    let internal = events.iter().filter(|e| has_internal_prefix(&e.name, &opts.internal_prefixes)).count();
    if internal > 0 {
        log::info!("{label}: {internal} profiler-internal events tagged");
    }
    let mut set = TraceSet::new(label, SourceFormat::ChromeSpans);
    set.events = events;
    Ok(set)
}

fn base_event(obj: &Map<String, Value>, index: usize) -> Result<TraceEvent, IngestError> {
    let name = obj
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| IngestError::Malformed(format!("traceEvents[{index}] has no name")))?;
    let lane = lane_of(obj, index)?;
    let start = time_field(obj, "ts", index)?;
    let args = obj.get("args").and_then(Value::as_object);
    let device = device_of(obj, &lane, args);
    let mut ev = TraceEvent::span(name, lane, device, start, 0);
    if let Some(args) = args {
        ev.shapes = shapes_from_args(args);
        ev.bytes_moved = args.get("bytes").and_then(Value::as_u64);
    }
    Ok(ev)
}

fn lane_of(obj: &Map<String, Value>, index: usize) -> Result<String, IngestError> {
    match obj.get("tid") {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        _ => Err(IngestError::Malformed(format!("traceEvents[{index}] has no tid"))),
    }
}

fn time_field(obj: &Map<String, Value>, key: &str, index: usize) -> Result<i64, IngestError> {
    let text = match obj.get(key) {
        Some(Value::Number(n)) => n.to_string(),
        Some(Value::String(s)) => s.clone(),
        _ => return Err(IngestError::Malformed(format!("traceEvents[{index}] has no numeric {key:?}"))),
    };
    units::micros_to_ns(&text).map_err(|e| IngestError::Malformed(format!("traceEvents[{index}].{key}: {e}")))
}

fn device_of(obj: &Map<String, Value>, lane: &str, args: Option<&Map<String, Value>>) -> Device {
    let cat = obj.get("cat").and_then(Value::as_str).unwrap_or("").to_ascii_lowercase();
    let gpu = GPU_CATEGORIES.contains(&cat.as_str())
        || lane.to_ascii_lowercase().starts_with("stream")
        || args.is_some_and(|a| a.contains_key("stream"));
    if gpu {
        Device::Gpu
    } else {
        Device::Cpu
    }
}

fn shapes_from_args(args: &Map<String, Value>) -> Option<Vec<Vec<u64>>> {
    let value = SHAPE_KEYS.iter().find_map(|k| args.get(*k))?;
    let inputs = value.as_array()?;
    let mut shapes = Vec::with_capacity(inputs.len());
    for input in inputs {
        let dims = input.as_array()?;
        let mut parsed = Vec::with_capacity(dims.len());
        for d in dims {
            match d.as_u64() {
                Some(d) => parsed.push(d),
                None => {
                    log::warn!("ignoring non-integer shape metadata {value}");
                    return None;
                }
            }
        }
        shapes.push(parsed);
    }
    Some(shapes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(doc: &str) -> Result<TraceSet, IngestError> {
        parse_span_trace(doc.as_bytes(), "t", &SpanOptions::default())
    }

    #[test]
    fn complete_event_converts_units() {
        let set = parse(r#"[{"ph":"X","name":"a","ts":0,"dur":10,"tid":1,"pid":1}]"#).unwrap();
        assert_eq!(set.events.len(), 1);
        assert_eq!(set.events[0].duration_ns, 10_000);
        assert_eq!(set.events[0].lane_id, "1");
        assert_eq!(set.source_format, SourceFormat::ChromeSpans);
    }

    #[test]
    fn begin_end_pair() {
        let set = parse(r#"{"traceEvents":[
            {"ph":"B","name":"f","ts":5,"tid":"t1"},
            {"ph":"E","ts":9,"tid":"t1"}]}"#)
        .unwrap();
        assert_eq!(set.events, vec![TraceEvent::span("f", "t1", Device::Cpu, 5_000, 4_000)]);
    }

    #[test]
    fn nested_fixture() {
        let set = parse(
            r#"[{"ph":"X","name":"parent","ts":0,"dur":100,"tid":1},
                {"ph":"B","name":"c1","ts":10,"tid":1},
                {"ph":"E","name":"c1","ts":30,"tid":1},
                {"ph":"X","name":"c2","ts":40,"dur":50,"tid":1},
                {"ph":"M","name":"thread_name","tid":1,"args":{"name":"main"}}]"#,
        )
        .unwrap();
        let expected = vec![
            TraceEvent::span("parent", "1", Device::Cpu, 0, 100_000),
            TraceEvent::span("c1", "1", Device::Cpu, 10_000, 20_000),
            TraceEvent::span("c2", "1", Device::Cpu, 40_000, 50_000),
        ];
        assert_eq!(set.events, expected);
    }

    #[test]
    fn unmatched_begin() {
        let err = parse(r#"[{"ph":"B","name":"open","ts":1,"tid":"t9"}]"#).unwrap_err();
        match err {
            IngestError::UnmatchedSpan { lane, name } => {
                assert_eq!(lane, "t9");
                assert_eq!(name, "open");
            }
            other => panic!("unexpected {other}"),
        }
        assert!(matches!(parse(r#"[{"ph":"E","ts":1,"tid":2}]"#), Err(IngestError::UnmatchedSpan { .. })));
    }

    #[test]
    fn shape_key_precedence_and_gpu_detection() {
        let set = parse(
            r#"[{"ph":"X","name":"aten::mm","ts":0.5,"dur":1.0005,"tid":7,"cat":"cpu_op",
                 "args":{"shapes":[[9]],"Input Dims":[[8,4],[4,2]]}},
                {"ph":"X","name":"Memcpy HtoD","ts":2,"dur":1,"tid":"stream 7","cat":"gpu_memcpy","args":{"bytes":4096}}]"#,
        )
        .unwrap();
        assert_eq!(set.events[0].shapes, Some(vec![vec![8, 4], vec![4, 2]]));
        assert_eq!(set.events[0].start_ns, 500);
        assert_eq!(set.events[0].duration_ns, 1_000);
        assert_eq!(set.events[0].device, Device::Cpu);
        assert_eq!(set.events[1].device, Device::Gpu);
        assert_eq!(set.events[1].bytes_moved, Some(4096));
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(parse("not json"), Err(IngestError::Malformed(_))));
        assert!(matches!(parse(r#"{"foo":1}"#), Err(IngestError::Malformed(_))));
        assert!(matches!(parse(r#"[{"ph":"X","name":"a","ts":0,"tid":1}]"#), Err(IngestError::Malformed(_))));
        assert!(matches!(parse(r#"[{"ph":"X","ts":0,"dur":1,"tid":1}]"#), Err(IngestError::Malformed(_))));
    }
}

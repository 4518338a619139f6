use super::{read_maybe_gzip, IngestError};
use crate::trace::{Device, SourceFormat, TraceEvent, TraceSet};
use crate::units;
use serde_json::Value;

/// One row of a flat per-function profile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatProfileEntry {
    pub name: String,
    pub call_count: u64,
    pub self_ns: i64,
    pub total_ns: i64,
}

/// Lane assigned to flat-profile events: they have no timeline.
pub const FLAT_LANE: &str = "main";

/// Parse a flat profile into a [`TraceSet`]. Each entry becomes one event
/// starting at 0, lasting its total time and carrying its self time.
pub fn parse_flat_profile(input: &[u8], label: &str) -> Result<TraceSet, IngestError> {
    let entries = parse_flat_entries(input)?;
    let mut set = TraceSet::new(label, SourceFormat::FlatProfile);
    set.events = entries
        .into_iter()
        .map(|e| {
            let mut ev = TraceEvent::span(e.name, FLAT_LANE, Device::Cpu, 0, e.total_ns);
            ev.call_count = e.call_count;
            ev.self_ns = Some(e.self_ns);
            ev
        })
        .collect();
    Ok(set)
}

/// Parse either the textual statistics table
/// (`ncalls tottime percall cumtime percall filename:lineno(function)`, times
/// in seconds) or a JSON list/map of `{name, ncalls, tottime, cumtime}`.
pub fn parse_flat_entries(input: &[u8]) -> Result<Vec<FlatProfileEntry>, IngestError> {
    let bytes = read_maybe_gzip(input)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| IngestError::Malformed(format!("not UTF-8: {e}")))?;
    let trimmed = text.trim_start();
    let entries = if trimmed.starts_with('[') || trimmed.starts_with('{') {
        parse_json(trimmed)?
    } else {
        parse_table(text)?
    };
    for e in &entries {
        if e.total_ns < e.self_ns {
            return Err(IngestError::NegativeTime {
                name: e.name.clone(),
                detail: format!("total {} ns is less than self {} ns", e.total_ns, e.self_ns),
            });
        }
    }
    Ok(entries)
}

fn parse_table(text: &str) -> Result<Vec<FlatProfileEntry>, IngestError> {
    let mut lines = text.lines().enumerate();
    let header_found = lines.by_ref().any(|(_, l)| {
        let l = l.trim_start();
        l.starts_with("ncalls") && l.contains("tottime") && l.contains("cumtime")
    });
    if !header_found {
        return Err(IngestError::Malformed("no `ncalls tottime percall cumtime` header found".into()));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 6 {
            return Err(IngestError::Malformed(format!("line {}: expected 6 columns", lineno + 1)));
        }
        // The location column may itself contain spaces.
        let location = rest_after_fields(line, 5).unwrap_or_default();
        let name = function_name(location);
        let ctx = |what: &str| format!("line {}: {what}", lineno + 1);
        out.push(entry(&name, fields[0], fields[1], fields[3]).map_err(|e| match e {
            IngestError::Malformed(m) => IngestError::Malformed(ctx(&m)),
            other => other,
        })?);
    }
    Ok(out)
}

/// Text after the first `n` whitespace-separated fields.
fn rest_after_fields(line: &str, n: usize) -> Option<&str> {
    let mut rest = line.trim_start();
    for _ in 0..n {
        let end = rest.find(char::is_whitespace)?;
        rest = rest[end..].trim_start();
    }
    Some(rest.trim_end())
}

/// Reduce a profiler location string to a function name:
/// `executor.py:120(query)` → `query`, `{built-in method loads}` → `loads`,
/// `{method 'sum' of 'numpy.ndarray' objects}` → `numpy.ndarray.sum`.
fn function_name(location: &str) -> String {
    let loc = location.trim();
    if let Some(inner) = loc.strip_prefix('{').and_then(|s| s.strip_suffix('}')) {
        if let Some(rest) = inner.strip_prefix("built-in method ") {
            return rest.trim().to_string();
        }
        if let Some(rest) = inner.strip_prefix("method '") {
            if let Some((method, owner)) = rest.split_once("' of '") {
                let owner = owner.trim_end_matches(" objects").trim_end_matches('\'');
                return format!("{owner}.{method}");
            }
        }
        return inner.to_string();
    }
    if loc.ends_with(')') {
        if let Some(open) = loc.rfind('(') {
            return loc[open + 1..loc.len() - 1].to_string();
        }
    }
    loc.to_string()
}

fn entry(name: &str, ncalls: &str, tottime: &str, cumtime: &str) -> Result<FlatProfileEntry, IngestError> {
    // Recursive functions print "total/primitive".
    let calls_text = ncalls.split('/').next().unwrap_or(ncalls);
    let call_count: u64 = calls_text
        .parse()
        .map_err(|_| IngestError::Malformed(format!("bad call count {ncalls:?} for {name:?}")))?;
    let secs = |t: &str| units::seconds_to_ns(t).map_err(|e| IngestError::Malformed(format!("{name:?}: {e}")));
    let self_ns = secs(tottime)?;
    let total_ns = secs(cumtime)?;
    if self_ns < 0 || total_ns < 0 {
        return Err(IngestError::NegativeTime {
            name: name.to_string(),
            detail: format!("self {self_ns} ns, total {total_ns} ns"),
        });
    }
    Ok(FlatProfileEntry { name: name.to_string(), call_count, self_ns, total_ns })
}

fn parse_json(text: &str) -> Result<Vec<FlatProfileEntry>, IngestError> {
    let value: Value = serde_json::from_str(text).map_err(|e| IngestError::Malformed(e.to_string()))?;
    let rows: Vec<(String, &Value)> = match &value {
        Value::Array(items) => items
            .iter()
            .map(|item| {
                let name = item
                    .get("name")
                    .and_then(Value::as_str)
                    .ok_or_else(|| IngestError::Malformed("flat profile entry without name".into()))?;
                Ok((name.to_string(), item))
            })
            .collect::<Result<_, IngestError>>()?,
        Value::Object(map) => map.iter().map(|(k, v)| (k.clone(), v)).collect(),
        _ => unreachable!("caller checked the leading bracket"),
    };
    rows.into_iter()
        .map(|(name, row)| {
            let field = |key: &str| -> Result<String, IngestError> {
                match row.get(key) {
                    Some(Value::Number(n)) => Ok(n.to_string()),
                    Some(Value::String(s)) => Ok(s.clone()),
                    _ => Err(IngestError::Malformed(format!("{name:?}: missing {key:?}"))),
                }
            };
            entry(&name, &field("ncalls")?, &field("tottime")?, &field("cumtime")?)
        })
        .collect()
}

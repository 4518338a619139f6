//! In-memory trace representation shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Cpu,
    Gpu,
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Device::Cpu => "cpu",
            Device::Gpu => "gpu",
        })
    }
}

impl std::str::FromStr for Device {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cpu" => Ok(Device::Cpu),
            "gpu" | "cuda" => Ok(Device::Gpu),
            other => Err(format!("unknown device {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceFormat {
    ChromeSpans,
    FlatProfile,
    Canonical,
}

/// One timed span (or one flat-profile entry).
///
/// Times are signed; [`validate`] reports negative values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub name: String,
    pub lane_id: String,
    pub device: Device,
    pub start_ns: i64,
    pub duration_ns: i64,
    pub call_count: u64,
    /// One dimension list per input tensor.
    pub shapes: Option<Vec<Vec<u64>>>,
    pub bytes_moved: Option<u64>,
    /// Pre-computed exclusive time, only present for flat profiles.
    pub self_ns: Option<i64>,
}

impl TraceEvent {
    pub fn span(name: impl Into<String>, lane: impl Into<String>, device: Device, start_ns: i64, duration_ns: i64) -> Self {
        TraceEvent {
            name: name.into(),
            lane_id: lane.into(),
            device,
            start_ns,
            duration_ns,
            call_count: 1,
            shapes: None,
            bytes_moved: None,
            self_ns: None,
        }
    }

    pub fn with_shapes(mut self, shapes: Vec<Vec<u64>>) -> Self {
        self.shapes = Some(shapes);
        self
    }

    /// Exclusive end of the span. Saturates; callers validate first.
    pub fn end_ns(&self) -> i64 {
        self.start_ns.saturating_add(self.duration_ns)
    }

    pub fn is_profiler_internal<S: AsRef<str>>(&self, prefixes: &[S]) -> bool {
        has_internal_prefix(&self.name, prefixes)
    }
}

pub(crate) fn has_internal_prefix<S: AsRef<str>>(name: &str, prefixes: &[S]) -> bool {
    prefixes.iter().any(|p| name.starts_with(p.as_ref()))
}

/// Prefixes of profiler bookkeeping events.
pub const DEFAULT_INTERNAL_PREFIXES: &[&str] = &["ProfilerStep", "profiler::"];

/// One profiled run of one model or submodel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceSet {
    pub events: Vec<TraceEvent>,
    pub wall_time_ns: Option<i64>,
    pub source_format: SourceFormat,
    pub label: String,
}

impl TraceSet {
    pub fn new(label: impl Into<String>, source_format: SourceFormat) -> Self {
        TraceSet {
            events: Vec::new(),
            wall_time_ns: None,
            source_format,
            label: label.into(),
        }
    }

    /// Whether the events carry their own exclusive times (flat profiles).
    pub fn has_flat_self_times(&self) -> bool {
        self.source_format == SourceFormat::FlatProfile
            || (!self.events.is_empty() && self.events.iter().all(|e| e.self_ns.is_some()))
    }

    /// Distance between the earliest start and the latest end over all lanes.
    pub fn extent_ns(&self) -> i64 {
        let start = self.events.iter().map(|e| e.start_ns).min();
        let end = self.events.iter().map(|e| e.end_ns()).max();
        match (start, end) {
            (Some(s), Some(e)) => e.saturating_sub(s),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    NegativeDuration(i64),
    EndOverflow,
    ZeroDimension { input: usize, axis: usize },
    ZeroCallCount,
    NegativeSelfTime(i64),
    SelfExceedsTotal { self_ns: i64, total_ns: i64 },
    EmptyLabel,
    NegativeWallTime(i64),
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::NegativeDuration(d) => write!(f, "negative duration {d} ns"),
            ViolationKind::EndOverflow => f.write_str("start + duration overflows 64-bit nanoseconds"),
            ViolationKind::ZeroDimension { input, axis } => {
                write!(f, "shape of input {input} has a zero-sized dimension at axis {axis}")
            }
            ViolationKind::ZeroCallCount => f.write_str("call count is zero"),
            ViolationKind::NegativeSelfTime(s) => write!(f, "negative self time {s} ns"),
            ViolationKind::SelfExceedsTotal { self_ns, total_ns } => {
                write!(f, "self time {self_ns} ns exceeds total {total_ns} ns")
            }
            ViolationKind::EmptyLabel => f.write_str("trace label is empty"),
            ViolationKind::NegativeWallTime(w) => write!(f, "negative wall time {w} ns"),
        }
    }
}

/// An invariant violation. `event` is `None` for set-level problems.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub event: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.event {
            Some(i) => write!(f, "event {i}: {}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

/// Every invariant violation in `set`; empty iff the set is well formed.
pub fn validate(set: &TraceSet) -> Vec<Violation> {
    let mut out = Vec::new();
    if set.label.trim().is_empty() {
        out.push(Violation { event: None, kind: ViolationKind::EmptyLabel });
    }
    if let Some(w) = set.wall_time_ns {
        if w < 0 {
            out.push(Violation { event: None, kind: ViolationKind::NegativeWallTime(w) });
        }
    }
    for (i, ev) in set.events.iter().enumerate() {
        let mut push = |kind| out.push(Violation { event: Some(i), kind });
        if ev.duration_ns < 0 {
            push(ViolationKind::NegativeDuration(ev.duration_ns));
        } else if ev.start_ns.checked_add(ev.duration_ns).is_none() {
            push(ViolationKind::EndOverflow);
        }
        if ev.call_count == 0 {
            push(ViolationKind::ZeroCallCount);
        }
        if let Some(shapes) = &ev.shapes {
            for (input, dims) in shapes.iter().enumerate() {
                for (axis, &d) in dims.iter().enumerate() {
                    if d == 0 {
                        push(ViolationKind::ZeroDimension { input, axis });
                    }
                }
            }
        }
        if let Some(s) = ev.self_ns {
            if s < 0 {
                push(ViolationKind::NegativeSelfTime(s));
            } else if ev.duration_ns >= 0 && s > ev.duration_ns {
                push(ViolationKind::SelfExceedsTotal { self_ns: s, total_ns: ev.duration_ns });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_set_is_valid() {
        assert!(validate(&TraceSet::new("x", SourceFormat::Canonical)).is_empty());
    }

    #[test]
    fn negative_duration_is_reported_with_index() {
        let mut set = TraceSet::new("x", SourceFormat::Canonical);
        set.events.push(TraceEvent::span("a", "0", Device::Cpu, 0, 5));
        set.events.push(TraceEvent::span("b", "0", Device::Cpu, 0, -1));
        let v = validate(&set);
        assert_eq!(v, vec![Violation { event: Some(1), kind: ViolationKind::NegativeDuration(-1) }]);
    }

    #[test]
    fn set_and_event_level_violations() {
        let mut set = TraceSet::new(" ", SourceFormat::Canonical);
        set.wall_time_ns = Some(-3);
        let mut ev = TraceEvent::span("a", "0", Device::Gpu, i64::MAX - 1, 5).with_shapes(vec![vec![2, 0]]);
        ev.call_count = 0;
        set.events.push(ev);
        let kinds: Vec<_> = validate(&set).into_iter().map(|v| v.kind).collect();
        assert_eq!(
            kinds,
            vec![
                ViolationKind::EmptyLabel,
                ViolationKind::NegativeWallTime(-3),
                ViolationKind::EndOverflow,
                ViolationKind::ZeroCallCount,
                ViolationKind::ZeroDimension { input: 0, axis: 1 },
            ]
        );
    }

    #[test]
    fn flat_self_time_checks() {
        let mut set = TraceSet::new("x", SourceFormat::FlatProfile);
        let mut ev = TraceEvent::span("f", "main", Device::Cpu, 0, 10);
        ev.self_ns = Some(11);
        set.events.push(ev);
        assert!(matches!(validate(&set)[0].kind, ViolationKind::SelfExceedsTotal { .. }));
        assert!(set.has_flat_self_times());
    }

    #[test]
    fn internal_prefixes() {
        let ev = TraceEvent::span("ProfilerStep#3", "0", Device::Cpu, 0, 1);
        assert!(ev.is_profiler_internal(DEFAULT_INTERNAL_PREFIXES));
        let ev = TraceEvent::span("aten::mm", "0", Device::Cpu, 0, 1);
        assert!(!ev.is_profiler_internal(DEFAULT_INTERNAL_PREFIXES));
    }
}

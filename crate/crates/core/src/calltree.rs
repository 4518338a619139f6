//! Per-lane call-tree reconstruction and self-time attribution.
//!
//! Within one lane, spans nest by interval containment. A node's self time is
//! its duration minus the durations of its direct children, so for every
//! root the self times in its subtree sum exactly to the root's duration.

use crate::exec::{self, Execution};
use crate::taxonomy::CategoryId;
use crate::trace::{Device, SourceFormat, TraceEvent, TraceSet};
use indexmap::IndexMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallNode {
    pub event: TraceEvent,
    pub children: Vec<CallNode>,
    pub self_ns: i64,
}

impl CallNode {
    fn leaf(event: TraceEvent) -> Self {
        let self_ns = event.duration_ns;
        CallNode { event, children: Vec::new(), self_ns }
    }

    pub fn start_ns(&self) -> i64 {
        self.event.start_ns
    }

    pub fn end_ns(&self) -> i64 {
        self.event.end_ns()
    }

    /// Number of nodes in this subtree.
    pub fn subtree_len(&self) -> usize {
        let mut n = 0;
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            n += 1;
            stack.extend(node.children.iter());
        }
        n
    }

    /// Pre-order traversal.
    pub fn iter(&self) -> impl Iterator<Item = &CallNode> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let node = stack.pop()?;
            stack.extend(node.children.iter().rev());
            Some(node)
        })
    }
}

/// The roots reconstructed for one lane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaneTree {
    pub lane_id: String,
    pub roots: Vec<CallNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Forest {
    /// Lanes in order of first appearance in the input.
    pub lanes: Vec<LaneTree>,
    /// Total nanoseconds removed by `clip` repairs.
    pub clipped_ns: i64,
}

impl Forest {
    pub fn node_count(&self) -> usize {
        self.lanes.iter().flat_map(|l| &l.roots).map(CallNode::subtree_len).sum()
    }

    /// Per lane: (lane, Σ root durations, Σ self times). The two sums are
    /// equal for every lane of a forest with computed self times.
    pub fn conservation(&self) -> Vec<(String, i64, i64)> {
        self.lanes
            .iter()
            .map(|lane| {
                let roots: i64 = lane.roots.iter().map(|r| r.event.duration_ns).sum();
                let selfs: i64 = lane.roots.iter().flat_map(|r| r.iter()).map(|n| n.self_ns).sum();
                (lane.lane_id.clone(), roots, selfs)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanRef {
    pub name: String,
    pub start_ns: i64,
    pub end_ns: i64,
}

impl fmt::Display for SpanRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} [{}, {})", self.name, self.start_ns, self.end_ns)
    }
}

impl From<&TraceEvent> for SpanRef {
    fn from(e: &TraceEvent) -> Self {
        SpanRef { name: e.name.clone(), start_ns: e.start_ns, end_ns: e.end_ns() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CallTreeError {
    #[error("spans {first} and {second} on lane {lane:?} overlap without nesting (use clip mode to truncate)")]
    PartialOverlap { lane: String, first: SpanRef, second: SpanRef },
    #[error("children of {span} last {children_ns} ns, longer than the span itself")]
    NegativeSelf { span: SpanRef, children_ns: i64 },
    #[error("flat profiles carry their own self times and have no call tree")]
    FlatProfile,
    #[error("event {span} has a negative duration")]
    NegativeDuration { span: SpanRef },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ForestOptions {
    /// Truncate the later of two partially overlapping spans instead of failing.
    pub clip: bool,
    pub exec: Execution,
}

/// Nest the spans of every lane by interval containment.
///
/// Spans sharing a boundary with their parent are contained. Of two spans
/// with identical intervals, the later one in the input is the child.
/// Self times are filled in on return.
pub fn build_forest(set: &TraceSet, opts: ForestOptions) -> Result<Forest, CallTreeError> {
    if set.source_format == SourceFormat::FlatProfile {
        return Err(CallTreeError::FlatProfile);
    }
    let mut by_lane: IndexMap<&str, Vec<(usize, &TraceEvent)>> = IndexMap::new();
    for (i, ev) in set.events.iter().enumerate() {
        if ev.duration_ns < 0 {
            return Err(CallTreeError::NegativeDuration { span: ev.into() });
        }
        by_lane.entry(ev.lane_id.as_str()).or_default().push((i, ev));
    }
    let lanes: Vec<(&str, Vec<(usize, &TraceEvent)>)> = by_lane.into_iter().collect();
    let built = exec::map_owned(opts.exec, lanes, |(lane, events)| build_lane(lane, events, opts.clip));
    let mut forest = Forest::default();
    for result in built {
        let (tree, clipped) = result?;
        forest.lanes.push(tree);
        forest.clipped_ns += clipped;
    }
    compute_self_times(&mut forest)?;
    Ok(forest)
}

fn build_lane(lane: &str, mut events: Vec<(usize, &TraceEvent)>, clip: bool) -> Result<(LaneTree, i64), CallTreeError> {
    events.sort_by_key(|(i, e)| (e.start_ns, std::cmp::Reverse(e.duration_ns), *i));
    let mut roots = Vec::new();
    let mut open: Vec<CallNode> = Vec::new();
    let mut clipped = 0i64;

    fn close(open: &mut Vec<CallNode>, roots: &mut Vec<CallNode>) {
        let node = open.pop().expect("open span");
        match open.last_mut() {
            Some(parent) => parent.children.push(node),
            None => roots.push(node),
        }
    }

    for (_, ev) in events {
        let mut ev = ev.clone();
        while let Some(top) = open.last() {
            let (top_start, top_end) = (top.start_ns(), top.end_ns());
            let starts_inside = ev.start_ns < top_end || ev.start_ns == top_start;
            if starts_inside && ev.end_ns() <= top_end {
                break;
            }
            if starts_inside {
                if !clip {
                    return Err(CallTreeError::PartialOverlap {
                        lane: lane.to_string(),
                        first: (&top.event).into(),
                        second: (&ev).into(),
                    });
                }
                let excess = ev.end_ns() - top_end;
                log::warn!("clipping {} by {excess} ns to fit inside {}", SpanRef::from(&ev), SpanRef::from(&top.event));
                ev.duration_ns -= excess;
                clipped += excess;
                break;
            }
            close(&mut open, &mut roots);
        }
        open.push(CallNode::leaf(ev));
    }
    while !open.is_empty() {
        close(&mut open, &mut roots);
    }
    Ok((LaneTree { lane_id: lane.to_string(), roots }, clipped))
}

/// Set every node's self time to its duration minus its direct children's.
/// Idempotent.
pub fn compute_self_times(forest: &mut Forest) -> Result<(), CallTreeError> {
    for lane in &mut forest.lanes {
        let mut stack: Vec<&mut CallNode> = lane.roots.iter_mut().collect();
        while let Some(node) = stack.pop() {
            let children_ns: i64 = node.children.iter().map(|c| c.event.duration_ns).sum();
            let self_ns = node.event.duration_ns - children_ns;
            if self_ns < 0 {
                return Err(CallTreeError::NegativeSelf { span: (&node.event).into(), children_ns });
            }
            node.self_ns = self_ns;
            stack.extend(node.children.iter_mut());
        }
    }
    Ok(())
}

/// The unit of classification and aggregation: one call (or one flat-profile
/// function) with its exclusive and inclusive time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpRecord {
    pub name: String,
    pub device: Device,
    pub lane_id: String,
    pub self_ns: i64,
    pub total_ns: i64,
    pub call_count: u64,
    pub shapes: Option<Vec<Vec<u64>>>,
    pub category: Option<CategoryId>,
    /// Pre-compensation (self, total), kept once times have been rescaled.
    pub raw: Option<(i64, i64)>,
    /// Whether the record was a root of its lane (always true for flat profiles).
    pub top_level: bool,
}

impl OpRecord {
    pub fn new(name: impl Into<String>, device: Device, self_ns: i64, total_ns: i64) -> Self {
        OpRecord {
            name: name.into(),
            device,
            lane_id: "0".to_string(),
            self_ns,
            total_ns,
            call_count: 1,
            shapes: None,
            category: None,
            raw: None,
            top_level: true,
        }
    }

    fn from_event(ev: &TraceEvent, self_ns: i64, top_level: bool) -> Self {
        OpRecord {
            name: ev.name.clone(),
            device: ev.device,
            lane_id: ev.lane_id.clone(),
            self_ns,
            total_ns: ev.duration_ns,
            call_count: ev.call_count,
            shapes: ev.shapes.clone(),
            category: None,
            raw: None,
            top_level,
        }
    }
}

/// One record per node, lanes in order, nodes in pre-order.
pub fn flatten(forest: &Forest) -> Vec<OpRecord> {
    let mut out = Vec::with_capacity(forest.node_count());
    for lane in &forest.lanes {
        for root in &lane.roots {
            for node in root.iter() {
                let top = std::ptr::eq(node, root);
                out.push(OpRecord::from_event(&node.event, node.self_ns, top));
            }
        }
    }
    out
}

/// Records straight from a flat profile, self and total times unchanged.
/// Events without a stored self time are treated as leaves.
pub fn flatten_flat(set: &TraceSet) -> Vec<OpRecord> {
    set.events
        .iter()
        .map(|ev| OpRecord::from_event(ev, ev.self_ns.unwrap_or(ev.duration_ns), true))
        .collect()
}

//! Generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use nstrace::calltree::{CallNode, Forest};
use nstrace::trace::{Device, SourceFormat, TraceEvent, TraceSet};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::HashMap;
use std::path::PathBuf;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/reference")
}

/// Reference breakdown cells in column order (GEMM … Other, Total). `None`
/// marks an N/A cell.
pub const REFERENCE_ROWS: &[(&str, &str, [Option<&str>; 10])] = &[
    ("01_frame_parser.json", "Image/Frame Parser", cells(["0.19ms", "0ms", "11.8ms", "11.1ms", "0.54ms", "0ms", "6.0ms", "2.4ms", "2.6ms", "34.6ms"])),
    ("02_question_parser.json", "Question Parser", cells(["166ms", "0ms", "0ms", "53.5ms", "0ms", "0.27ms", "50.1ms", "9.9ms", "17.3ms", "297ms"])),
    ("03_dynamics_predictor.json", "Dynamics Predictor", cells(["715ms", "9.9ms", "294ms", "345ms", "0ms", "0ms", "1300ms", "403ms", "125ms", "3200ms"])),
    ("04_nscl_executor.json", "NSCL Executor", cells(["39.9us", "0us", "46.4us", "122.4us", "33.5us", "0.0us", "76.0us", "20.5us", "149.5us", "488.3us"])),
    ("ns_dr_executor.prof", "NS-DR Executor", [None, None, None, None, None, None, None, None, Some("12.9ms"), Some("12.9ms")]),
    ("05_nlm_path.json", "NLM Path", cells(["1.2s", "0s", "0s", "4.7s", "0s", "0s", "3.6s", "1.5s", "7.3s", "18.3s"])),
    ("06_nlm_sort.json", "NLM Sort", cells(["2.6s", "0s", "0s", "11.1s", "0s", "0s", "7.5s", "3.4s", "17.1s", "41.7s"])),
    ("07_nlm_blocks_world.json", "NLM Blocks World", cells(["635ms", "0ms", "0ms", "2100ms", "0ms", "0ms", "1400ms", "618ms", "3100ms", "7850ms"])),
];

const fn cells(c: [&'static str; 10]) -> [Option<&'static str>; 10] {
    [Some(c[0]), Some(c[1]), Some(c[2]), Some(c[3]), Some(c[4]), Some(c[5]), Some(c[6]), Some(c[7]), Some(c[8]), Some(c[9])]
}

/// A printed cell as (value in ns, place value of its last significant
/// digit in ns). Trailing zeros of an integer are not significant, so
/// "3200ms" is known to the hundred milliseconds.
pub fn printed(cell: &str) -> (i128, i128) {
    let (digits, unit) = cell.split_at(cell.find(|c: char| c.is_ascii_alphabetic()).unwrap());
    let unit_ns: i128 = match unit {
        "us" => 1_000,
        "ms" => 1_000_000,
        "s" => 1_000_000_000,
        other => panic!("unit {other}"),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    let mantissa: i128 = format!("{int}{frac}").parse().unwrap();
    let mut place = unit_ns / 10i128.pow(frac.len() as u32);
    let value = mantissa * place;
    if frac.is_empty() && mantissa != 0 {
        let mut m = mantissa;
        while m % 10 == 0 {
            m /= 10;
            place *= 10;
        }
    }
    (value, place)
}

/// Whether `ns` rounds (half away from zero) to the printed cell.
pub fn matches_printed(ns: i64, cell: &str) -> bool {
    let (value, place) = printed(cell);
    if value == 0 {
        return ns == 0;
    }
    let ns = ns as i128;
    let rounded = (ns + place / 2).div_euclid(place) * place;
    rounded == value
}

/// A random laminar family of spans on one lane: depth ≤ `max_depth`,
/// fan-out ≤ `max_fanout`. Siblings may touch, children may share either
/// boundary with (or equal) their parent, and zero-length spans occur.
/// Events come back shuffled; the root is the first span generated and
/// always encloses every other.
pub fn random_tree<R: Rng>(rng: &mut R, max_depth: usize, max_fanout: usize, max_nodes: usize) -> (TraceSet, i64) {
    let root_dur = if rng.gen_bool(0.1) { rng.gen_range(0..=16) } else { rng.gen_range(1..=4_000) };
    let start = rng.gen_range(0..1_000_000i64);
    let mut spans = Vec::new();
    grow(rng, start, start + root_dur, 0, max_depth, max_fanout, max_nodes, &mut spans);
    spans.shuffle(rng);
    let mut set = TraceSet::new("tree", SourceFormat::Canonical);
    set.events = spans
        .into_iter()
        .enumerate()
        .map(|(i, (s, e))| TraceEvent::span(format!("n{i}"), "0", Device::Cpu, s, e - s))
        .collect();
    (set, root_dur)
}

#[allow(clippy::too_many_arguments)]
fn grow<R: Rng>(
    rng: &mut R,
    start: i64,
    end: i64,
    depth: usize,
    max_depth: usize,
    max_fanout: usize,
    max_nodes: usize,
    out: &mut Vec<(i64, i64)>,
) {
    out.push((start, end));
    if depth >= max_depth || out.len() >= max_nodes {
        return;
    }
    let leaf_bias = if depth == 0 { 0.0 } else { 0.35 };
    if rng.gen_bool(leaf_bias) {
        return;
    }
    let k = rng.gen_range(1..=max_fanout);
    let mut cuts: Vec<i64> = (0..2 * k).map(|_| rng.gen_range(start..=end)).collect();
    cuts.sort_unstable();
    for pair in cuts.chunks(2) {
        if out.len() >= max_nodes {
            return;
        }
        grow(rng, pair[0], pair[1], depth + 1, max_depth, max_fanout, max_nodes, out);
    }
}

/// Self time per event by painting every nanosecond with the innermost span
/// covering it. Spans paint in (longest first, then input order), so a
/// later identical span overwrites an earlier one.
pub fn paint_self_times(set: &TraceSet) -> Vec<i64> {
    let lo = set.events.iter().map(|e| e.start_ns).min().unwrap_or(0);
    let hi = set.events.iter().map(|e| e.end_ns()).max().unwrap_or(0);
    let mut owner: Vec<Option<usize>> = vec![None; (hi - lo) as usize];
    let mut order: Vec<usize> = (0..set.events.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(set.events[i].duration_ns), i));
    for i in order {
        let e = &set.events[i];
        for t in e.start_ns..e.end_ns() {
            owner[(t - lo) as usize] = Some(i);
        }
    }
    let mut selfs = vec![0i64; set.events.len()];
    for i in owner.into_iter().flatten() {
        selfs[i] += 1;
    }
    selfs
}

/// Parent of every event by pairwise comparison: the innermost earlier-opened
/// span that contains it. A zero-length span at a span's end is outside it.
pub fn brute_parents(set: &TraceSet) -> Vec<Option<usize>> {
    let key = |i: usize| {
        let e = &set.events[i];
        (e.start_ns, std::cmp::Reverse(e.duration_ns), i)
    };
    let contains = |f: usize, e: usize| {
        let (pf, pe) = (&set.events[f], &set.events[e]);
        f != e
            && pf.lane_id == pe.lane_id
            && key(f) < key(e)
            && pf.start_ns <= pe.start_ns
            && pe.end_ns() <= pf.end_ns()
            && (pe.start_ns < pf.end_ns() || pe.start_ns == pf.start_ns)
    };
    (0..set.events.len())
        .map(|e| (0..set.events.len()).filter(|&f| contains(f, e)).max_by_key(|&f| key(f)))
        .collect()
}

/// (parent name, self time) per node name, read off a forest.
pub fn forest_shape(forest: &Forest) -> HashMap<String, (Option<String>, i64)> {
    fn walk(node: &CallNode, parent: Option<&str>, out: &mut HashMap<String, (Option<String>, i64)>) {
        out.insert(node.event.name.clone(), (parent.map(str::to_string), node.self_ns));
        for c in &node.children {
            walk(c, Some(&node.event.name), out);
        }
    }
    let mut out = HashMap::new();
    for lane in &forest.lanes {
        for root in &lane.roots {
            walk(root, None, &mut out);
        }
    }
    out
}

/// Every reference row, in reference order, analyzed with `rules`. The flat
/// NS-DR profile gets its reference label.
pub fn reference_breakdowns(rules: &nstrace::RuleSet, exec: nstrace::Execution) -> Vec<nstrace::Breakdown> {
    use nstrace::pipeline::{self, RunConfig};
    let config = RunConfig {
        inputs: REFERENCE_ROWS.iter().map(|(file, _, _)| fixture_dir().join(file)).collect(),
        exec,
        ..RunConfig::default()
    };
    let mut analyses = pipeline::run(&config, rules).expect("fixtures load");
    for (a, (_, label, _)) in analyses.iter_mut().zip(REFERENCE_ROWS) {
        a.label = label.to_string();
    }
    pipeline::breakdowns(&analyses, rules, false, exec).expect("fixtures aggregate")
}

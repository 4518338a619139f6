mod common;

use common::{fixture_dir, matches_printed, reference_breakdowns, REFERENCE_ROWS};
use nstrace::calltree::{build_forest, flatten, ForestOptions};
use nstrace::exec::Execution;
use nstrace::ingest::{parse_flat_entries, parse_flat_profile, parse_span_trace, SpanOptions};
use nstrace::pipeline::{self, RunConfig};
use nstrace::report::{heatmap, proportions, scale_to_pipeline, table_row};
use nstrace::taxonomy::{builtin, ml8, symbolic, OTHER};
use std::collections::BTreeMap;

#[test]
fn every_printed_cell_is_reproduced() {
    let rules = builtin("ml8").unwrap();
    let rows = reference_breakdowns(&rules, Execution::Parallel);
    for (b, (_, label, cells)) in rows.iter().zip(REFERENCE_ROWS) {
        assert_eq!(&b.label, label);
        let values: Vec<i64> = ml8::CATEGORIES.iter().map(|c| b.get(c)).chain([b.total_ns()]).collect();
        for (i, (v, cell)) in values.iter().zip(cells).enumerate() {
            if let Some(cell) = cell {
                assert!(matches_printed(*v, cell), "{label} column {i}: {v} ns vs printed {cell}");
            }
        }
    }
}

#[test]
fn printed_cell_rounding() {
    assert!(matches_printed(3_191_900_000, "3200ms"));
    assert!(!matches_printed(3_140_000_000, "3200ms"));
    assert!(matches_printed(7_853_000_000, "7850ms"));
    assert!(matches_printed(488_280, "488.3us"));
    assert!(!matches_printed(1, "0.0us"));
    assert!(matches_printed(2_570_000, "2.6ms"));
}

#[test]
fn table_rows_use_table_formatting() {
    let rules = builtin("ml8").unwrap();
    let rows = reference_breakdowns(&rules, Execution::Sequential);
    let nscl = table_row(&rows[3]).unwrap();
    assert_eq!(nscl.cells[0], "39.9us");
    assert_eq!(nscl.cells[9], "488.3us");
    assert_eq!(table_row(&rows[5]).unwrap().cells[9], "18.3s");
    assert_eq!(table_row(&rows[1]).unwrap().cells[0], "166ms");
}

#[test]
fn frame_parser_scales_to_a_video() {
    let rules = builtin("ml8").unwrap();
    let rows = reference_breakdowns(&rules, Execution::Sequential);
    assert_eq!(rows[0].total_ns(), 34_600_000);
    assert_eq!(scale_to_pipeline(&rows[0], 25).unwrap().total_ns(), 865_000_000);
}

#[test]
fn proportions_match_table_ratios() {
    let rules = builtin("ml8").unwrap();
    let rows = reference_breakdowns(&rules, Execution::Sequential);
    let qp = proportions(&rows[1]).unwrap();
    assert!((qp[ml8::DENSE_MM] - 166.0 / 297.07).abs() < 1e-12);
    let fp = proportions(&rows[0]).unwrap();
    assert!((fp[ml8::CONVOLUTION] - 11.8 / 34.6).abs() < 1e-12);
    assert!((fp[ml8::ELEMENT_WISE] - 11.1 / 34.6).abs() < 1e-12);
}

#[test]
fn heatmap_matches_golden_file() {
    let rules = builtin("ml8").unwrap();
    let config = RunConfig { inputs: vec![fixture_dir()], ..RunConfig::default() };
    let analyses = pipeline::run(&config, &rules).unwrap();
    let rows = pipeline::breakdowns(&analyses, &rules, false, Execution::Parallel).unwrap();
    let m = heatmap(&rows).unwrap();
    assert_eq!(m.row_labels.len(), 7);
    let golden = std::fs::read(fixture_dir().join("heatmap.golden.csv")).unwrap();
    assert_eq!(String::from_utf8(m.to_csv()).unwrap(), String::from_utf8(golden).unwrap());
}

#[test]
fn ns_dr_profile_under_both_taxonomies() {
    let bytes = std::fs::read(fixture_dir().join("ns_dr_executor.prof")).unwrap();
    let entries = parse_flat_entries(&bytes).unwrap();
    assert_eq!(entries.len(), 20);
    assert_eq!(entries.iter().map(|e| e.self_ns).sum::<i64>(), 12_900_000);

    let config = RunConfig { inputs: vec![fixture_dir().join("ns_dr_executor.prof")], ..RunConfig::default() };
    let ml = builtin("ml8").unwrap();
    let b = &pipeline::breakdowns(&pipeline::run(&config, &ml).unwrap(), &ml, false, Execution::Sequential).unwrap()[0];
    assert_eq!(b.get(OTHER), 12_900_000);
    assert_eq!(b.total_ns(), 12_900_000);

    let sym = builtin("symbolic").unwrap();
    let b = &pipeline::breakdowns(&pipeline::run(&config, &sym).unwrap(), &sym, false, Execution::Sequential).unwrap()[0];
    assert_eq!(b.get(symbolic::QUERY), 3_900_000);
    assert_eq!(b.get(symbolic::SCALAR_ARITHMETIC), 2_600_000);
    assert_eq!(b.get(symbolic::JSON_PARSING), 1_800_000);
    assert_eq!(b.get(OTHER), 4_600_000);
    assert_eq!(b.total_ns(), 12_900_000);
}

const SPANS: &str = r#"{"traceEvents": [
  {"ph": "X", "name": "forward", "tid": 1, "ts": 0, "dur": 100},
  {"ph": "X", "name": "aten::linear", "tid": 1, "ts": 5, "dur": 40},
  {"ph": "X", "name": "aten::addmm", "tid": 1, "ts": 10, "dur": 30},
  {"ph": "X", "name": "aten::relu", "tid": 1, "ts": 50, "dur": 10},
  {"ph": "X", "name": "aten::linear", "tid": 1, "ts": 60, "dur": 35},
  {"ph": "X", "name": "aten::addmm", "tid": 1, "ts": 61, "dur": 33.5},
  {"ph": "B", "name": "aten::relu", "tid": 2, "ts": 3},
  {"ph": "E", "name": "aten::relu", "tid": 2, "ts": 7.25}
]}"#;

/// Per-name self times from the call tree equal those of a flat profile
/// summarizing the same run.
#[test]
fn flat_and_span_paths_agree_per_name() {
    let set = parse_span_trace(SPANS.as_bytes(), "paired", &SpanOptions::default()).unwrap();
    let forest = build_forest(&set, ForestOptions::default()).unwrap();
    let mut per_name: BTreeMap<String, (u64, i64, i64)> = BTreeMap::new();
    for r in flatten(&forest) {
        let e = per_name.entry(r.name).or_default();
        e.0 += 1;
        e.1 += r.self_ns;
        e.2 += r.total_ns;
    }
    let secs = |ns: i64| format!("{}.{:09}", ns / 1_000_000_000, ns % 1_000_000_000);
    let rows: Vec<String> = per_name
        .iter()
        .map(|(name, (n, s, t))| format!(r#"{{"name": "{name}", "ncalls": {n}, "tottime": "{}", "cumtime": "{}"}}"#, secs(*s), secs(*t)))
        .collect();
    let flat = parse_flat_profile(format!("[{}]", rows.join(",")).as_bytes(), "paired").unwrap();
    let rules = builtin("ml8").unwrap();
    let config = RunConfig::default();
    let from_flat = pipeline::analyze(&flat, &rules, &config).unwrap();
    let from_spans = pipeline::analyze(&set, &rules, &config).unwrap();
    let flat_self: BTreeMap<String, i64> = from_flat.records.iter().map(|r| (r.name.clone(), r.self_ns)).collect();
    let span_self: BTreeMap<String, i64> = per_name.iter().map(|(k, v)| (k.clone(), v.1)).collect();
    assert_eq!(flat_self, span_self);
    assert_eq!(flat_self["aten::addmm"], 63_500);
    assert_eq!(flat_self["aten::relu"], 14_250);
    let tax = rules.taxonomy();
    let a = nstrace::report::aggregate(&from_flat.records, &tax, "f", Execution::Sequential).unwrap();
    let b = nstrace::report::aggregate(&from_spans.records, &tax, "f", Execution::Sequential).unwrap();
    assert_eq!(a, b);
}

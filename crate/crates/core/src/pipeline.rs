//! End-to-end processing of trace files: load, validate, rebuild call trees,
//! strip profiler artifacts, compensate, classify and aggregate.
//!
//! Diagnostics go through `log`; data is returned to the caller.

use crate::calltree::{build_forest, flatten, flatten_flat, CallTreeError, ForestOptions, OpRecord};
use crate::compensate::{self, CompensateError, CompensationModel};
use crate::exec::{self, Execution};
use crate::ingest::{self, IngestError, InputFormat};
use crate::intensity::{
    boundedness, estimate_record, Boundedness, EstimateParams, IntensityError, IntensityEstimate, MachineModel,
};
use crate::report::{self, Breakdown, OutputFormat, ReportError};
use crate::taxonomy::{classify_all, RuleError, RuleSet, UnmatchedReport};
use crate::trace::{validate, TraceSet, DEFAULT_INTERNAL_PREFIXES};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Process exit codes shared by every subcommand.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INPUT: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const USAGE: i32 = 64;
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Ingest { path: String, source: IngestError },
    #[error("{label}: invalid trace: {detail}")]
    Invalid { label: String, detail: String },
    #[error("{label}: {source}")]
    CallTree { label: String, source: Box<CallTreeError> },
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Compensate(#[from] CompensateError),
    #[error(transparent)]
    Intensity(#[from] IntensityError),
    #[error("{0}")]
    Usage(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Io { .. }
            | PipelineError::Ingest { .. }
            | PipelineError::Invalid { .. }
            | PipelineError::CallTree { .. }
            | PipelineError::Compensate(_) => exit::INPUT,
            PipelineError::Rules(_) | PipelineError::Intensity(_) => exit::CONFIG,
            PipelineError::Report(ReportError::MixedTaxonomy { .. } | ReportError::WrongTaxonomy(_)) => exit::CONFIG,
            PipelineError::Report(ReportError::UnsupportedFormat(_)) => exit::USAGE,
            PipelineError::Report(_) => exit::INPUT,
            PipelineError::Usage(_) => exit::USAGE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Files or directories; directories expand to their `*.json` and
    /// `*.json.gz` files in name order.
    pub inputs: Vec<PathBuf>,
    /// `None` sniffs each file's content.
    pub format: Option<InputFormat>,
    pub strict: bool,
    /// Truncate partially overlapping spans instead of failing.
    pub clip: bool,
    pub baseline_wall_ns: Option<i64>,
    /// Report unscaled times even when a baseline is given.
    pub raw: bool,
    pub internal_prefixes: Vec<String>,
    pub exec: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: Vec::new(),
            format: None,
            strict: false,
            clip: false,
            baseline_wall_ns: None,
            raw: false,
            internal_prefixes: DEFAULT_INTERNAL_PREFIXES.iter().map(|s| s.to_string()).collect(),
            exec: Execution::default(),
        }
    }
}

/// One processed input.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub label: String,
    pub records: Vec<OpRecord>,
    pub unmatched: UnmatchedReport,
    /// Self time of removed profiler bookkeeping records.
    pub artifact_ns: i64,
    /// Time cut off partially overlapping spans under `clip`.
    pub clipped_ns: i64,
    /// Per lane: (lane, Σ root durations, Σ self times). Empty for flat profiles.
    pub conservation: Vec<(String, i64, i64)>,
    pub compensation: Option<CompensationModel>,
}

impl Analysis {
    pub fn conserved(&self) -> bool {
        self.conservation.iter().all(|(_, roots, selfs)| roots == selfs)
    }

    /// One-line diagnostic: conservation check, unmatched names, removed
    /// artifacts and compensation.
    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        if self.conservation.is_empty() {
            parts.push("flat profile, self times as recorded".to_string());
        } else {
            let roots: i64 = self.conservation.iter().map(|c| c.1).sum();
            let selfs: i64 = self.conservation.iter().map(|c| c.2).sum();
            let verdict = if self.conserved() { "ok" } else { "MISMATCH" };
            parts.push(format!(
                "conservation {verdict}: self {selfs} ns, roots {roots} ns over {} lane(s)",
                self.conservation.len()
            ));
        }
        if self.unmatched.is_empty() {
            parts.push("all names matched".to_string());
        } else {
            let other: i64 = self.unmatched.entries.iter().map(|e| e.self_ns).sum();
            let top: Vec<&str> = self.unmatched.names().take(3).collect();
            parts.push(format!(
                "{} unmatched name(s), {other} ns in Other (largest: {})",
                self.unmatched.len(),
                top.join(", ")
            ));
        }
        if self.artifact_ns > 0 {
            parts.push(format!("{} ns of profiler bookkeeping removed", self.artifact_ns));
        }
        if self.clipped_ns > 0 {
            parts.push(format!("{} ns clipped", self.clipped_ns));
        }
        if let Some(m) = &self.compensation {
            parts.push(format!("compensation scale {}", m.scale));
        }
        format!("{}: {}", self.label, parts.join("; "))
    }
}

/// Guess the input format from its content.
pub fn sniff_format(bytes: &[u8]) -> InputFormat {
    let head: String = String::from_utf8_lossy(&bytes[..bytes.len().min(4096)]).into_owned();
    let trimmed = head.trim_start();
    if trimmed.starts_with('[') || head.contains("\"traceEvents\"") {
        InputFormat::Span
    } else if trimmed.starts_with('{') && head.contains("\"events\"") {
        InputFormat::Canonical
    } else {
        InputFormat::Flat
    }
}

/// Expand directories and keep argument order otherwise.
pub fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = Vec::new();
    for path in inputs {
        if path.is_dir() {
            let io = |source| PipelineError::Io { path: path.clone(), source };
            let mut files: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(io)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()
                .map_err(io)?;
            files.retain(|p| {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                p.is_file() && (name.ends_with(".json") || name.ends_with(".json.gz"))
            });
            files.sort();
            out.extend(files);
        } else {
            out.push(path.clone());
        }
    }
    Ok(out)
}

/// File name without `.gz` and without its extension.
fn default_label(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("trace");
    let name = name.strip_suffix(".gz").unwrap_or(name);
    Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or(name).to_string()
}

pub fn load_trace(path: &Path, format: Option<InputFormat>, strict: bool) -> Result<TraceSet, PipelineError> {
    let bytes = if path.as_os_str() == "-" {
        let mut buf = Vec::new();
        std::io::Read::read_to_end(&mut std::io::stdin(), &mut buf)
            .map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?;
        buf
    } else {
        std::fs::read(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?
    };
    let format = match format {
        Some(f) => f,
        None => sniff_format(&ingest::read_maybe_gzip(&bytes).map_err(|source| PipelineError::Ingest {
            path: path.display().to_string(),
            source,
        })?),
    };
    let set = ingest::parse_any(&bytes, format, &default_label(path), strict)
        .map_err(|source| PipelineError::Ingest { path: path.display().to_string(), source })?;
    check(&set)?;
    Ok(set)
}

/// Reject traces that violate the model's invariants.
pub fn check(set: &TraceSet) -> Result<(), PipelineError> {
    let violations = validate(set);
    if violations.is_empty() {
        return Ok(());
    }
    let detail = violations
        .iter()
        .take(5)
        .map(|v| match v.event {
            Some(i) => format!("event {i} ({}): {:?}", set.events[i].name, v.kind),
            None => format!("{:?}", v.kind),
        })
        .collect::<Vec<_>>()
        .join("; ");
    let more = violations.len().saturating_sub(5);
    let detail = if more > 0 { format!("{detail}; and {more} more") } else { detail };
    Err(PipelineError::Invalid { label: set.label.clone(), detail })
}

/// Records with self times, before compensation or classification.
pub fn records_of(set: &TraceSet, config: &RunConfig) -> Result<Records, PipelineError> {
    if set.has_flat_self_times() {
        return Ok(Records { records: flatten_flat(set), clipped_ns: 0, conservation: Vec::new() });
    }
    let forest = build_forest(set, ForestOptions { clip: config.clip, exec: config.exec })
        .map_err(|source| PipelineError::CallTree { label: set.label.clone(), source: Box::new(source) })?;
    let conservation = forest.conservation();
    for (lane, roots, selfs) in &conservation {
        if roots != selfs {
            log::warn!("{}: lane {lane}: self time {selfs} ns != root time {roots} ns", set.label);
        }
    }
    if forest.clipped_ns > 0 {
        log::warn!("{}: clipped {} ns of overlapping spans", set.label, forest.clipped_ns);
    }
    Ok(Records { records: flatten(&forest), clipped_ns: forest.clipped_ns, conservation })
}

#[derive(Debug, Clone)]
pub struct Records {
    pub records: Vec<OpRecord>,
    pub clipped_ns: i64,
    pub conservation: Vec<(String, i64, i64)>,
}

/// Everything after parsing for one trace.
pub fn analyze(set: &TraceSet, rules: &RuleSet, config: &RunConfig) -> Result<Analysis, PipelineError> {
    let Records { records, clipped_ns, conservation } = records_of(set, config)?;
    let (mut records, artifact_ns) = compensate::strip_profiler_artifacts(records, &config.internal_prefixes);
    if artifact_ns > 0 {
        log::info!("{}: removed {artifact_ns} ns of profiler bookkeeping", set.label);
    }
    let mut model = None;
    if let Some(baseline) = config.baseline_wall_ns {
        let profiled = match set.wall_time_ns {
            Some(w) => w,
            None => {
                let extent = set.extent_ns();
                log::warn!("{}: no recorded wall time; using trace extent {extent} ns", set.label);
                extent
            }
        };
        let m = compensate::derive(baseline, profiled)?;
        if config.raw {
            log::info!("{}: --raw given; compensation scale {} not applied", set.label, m.scale);
        } else {
            compensate::apply(&mut records, &m);
        }
        model = Some(m);
    }
    let (records, unmatched) = classify_all(records, rules, config.exec);
    Ok(Analysis {
        label: set.label.clone(),
        records,
        unmatched,
        artifact_ns,
        clipped_ns,
        conservation,
        compensation: model,
    })
}

/// Load and analyze every input. Files are processed concurrently under
/// [`Execution::Parallel`]; results keep argument order.
pub fn run(config: &RunConfig, rules: &RuleSet) -> Result<Vec<Analysis>, PipelineError> {
    let paths = expand_inputs(&config.inputs)?;
    if paths.is_empty() {
        return Err(PipelineError::Usage("no input files".into()));
    }
    let results = exec::map(config.exec, &paths, |p| {
        let set = load_trace(p, config.format, config.strict)?;
        analyze(&set, rules, config)
    });
    results.into_iter().collect()
}

/// One breakdown per analysis, or two (CPU, GPU) when `per_device` is set.
pub fn breakdowns(analyses: &[Analysis], rules: &RuleSet, per_device: bool, exec: Execution) -> Result<Vec<Breakdown>, PipelineError> {
    let taxonomy = rules.taxonomy();
    let mut out = Vec::new();
    for a in analyses {
        if per_device {
            out.extend(report::aggregate_per_device(&a.records, &taxonomy, &a.label, exec)?);
        } else {
            out.push(report::aggregate(&a.records, &taxonomy, &a.label, exec)?);
        }
    }
    Ok(out)
}

/// Intensity of one distinct (name, shapes) pair found in a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensityRow {
    pub name: String,
    pub category: String,
    pub shapes: Vec<Vec<u64>>,
    pub calls: u64,
    pub work_flops: u128,
    pub traffic_bytes: u128,
    /// Exact FLOPs per byte as a reduced fraction.
    pub intensity_exact: String,
    pub intensity: f64,
    pub tall_skinny: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundedness: Option<String>,
}

/// Estimate every classified record that has shapes, merging repeated
/// calls. Element-wise rules may override the operations-per-element count.
pub fn intensity_rows(
    analyses: &[Analysis],
    rules: &RuleSet,
    bytes_per_element: u64,
    machine: Option<&MachineModel>,
) -> Result<Vec<IntensityRow>, PipelineError> {
    let mut rows: indexmap::IndexMap<(String, Vec<Vec<u64>>), IntensityRow> = indexmap::IndexMap::new();
    for record in analyses.iter().flat_map(|a| &a.records) {
        let ops = rules
            .matching_rule(&record.name, record.device, record.shapes.is_some())
            .and_then(|r| r.ops_per_element)
            .unwrap_or(EstimateParams::default().ops_per_element);
        let params = EstimateParams { bytes_per_element, ops_per_element: ops };
        let estimate = match estimate_record(record, &params) {
            Ok(Some(e)) => e,
            Ok(None) => continue,
            Err(IntensityError::ShapeMismatch(shapes)) => {
                log::warn!("{}: shapes {shapes:?} are not conformable; skipped", record.name);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let shapes = record.shapes.clone().unwrap_or_default();
        let key = (record.name.clone(), shapes.clone());
        let category = record.category.as_ref().map(|c| c.category.to_string()).unwrap_or_default();
        rows.entry(key)
            .and_modify(|r| r.calls += record.call_count)
            .or_insert_with(|| intensity_row(&record.name, &category, shapes, record.call_count, &estimate, machine));
    }
    Ok(rows.into_values().collect())
}

pub fn intensity_row(
    name: &str,
    category: &str,
    shapes: Vec<Vec<u64>>,
    calls: u64,
    estimate: &IntensityEstimate,
    machine: Option<&MachineModel>,
) -> IntensityRow {
    IntensityRow {
        name: name.to_string(),
        category: category.to_string(),
        shapes,
        calls,
        work_flops: estimate.work_flops,
        traffic_bytes: estimate.traffic_bytes,
        intensity_exact: estimate.intensity.to_string(),
        intensity: estimate.intensity_f64(),
        tall_skinny: estimate.tall_skinny,
        boundedness: machine.map(|m| boundedness(estimate, m).to_string()),
    }
}

pub fn emit_intensity(rows: &[IntensityRow], format: OutputFormat) -> Result<Vec<u8>, PipelineError> {
    let shapes = |r: &IntensityRow| {
        r.shapes.iter().map(|s| s.iter().map(u64::to_string).collect::<Vec<_>>().join("x")).collect::<Vec<_>>().join(" ")
    };
    match format {
        OutputFormat::Json => {
            let mut out = serde_json::to_vec_pretty(rows).expect("intensity rows serialize");
            out.push(b'\n');
            Ok(out)
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let header = [
                "name", "category", "shapes", "calls", "work_flops", "traffic_bytes", "intensity_exact", "intensity",
                "tall_skinny", "boundedness",
            ];
            w.write_record(header).expect("in-memory CSV write");
            for r in rows {
                w.write_record([
                    r.name.clone(),
                    r.category.clone(),
                    shapes(r),
                    r.calls.to_string(),
                    r.work_flops.to_string(),
                    r.traffic_bytes.to_string(),
                    r.intensity_exact.clone(),
                    format!("{:.6}", r.intensity),
                    r.tall_skinny.to_string(),
                    r.boundedness.clone().unwrap_or_default(),
                ])
                .expect("in-memory CSV write");
            }
            Ok(w.into_inner().expect("in-memory CSV flush"))
        }
        OutputFormat::Table => {
            let mut out = String::from("| Op | Category | Shapes | Calls | W (FLOP) | Q (B) | I (FLOP/B) | Tall-skinny | Bound |\n");
            out.push_str("|---|---|---|---|---|---|---|---|---|\n");
            for r in rows {
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {} | {} ≈ {:.4} | {} | {} |\n",
                    r.name,
                    r.category,
                    shapes(r),
                    r.calls,
                    r.work_flops,
                    r.traffic_bytes,
                    r.intensity_exact,
                    r.intensity,
                    if r.tall_skinny { "yes" } else { "no" },
                    r.boundedness.as_deref().unwrap_or("-"),
                ));
            }
            Ok(out.into_bytes())
        }
        OutputFormat::Svg => Err(ReportError::UnsupportedFormat("svg".into()).into()),
    }
}

/// Whether a [`Boundedness`] string came from a memory-bound verdict.
pub fn is_memory_bound(b: &str) -> bool {
    b == Boundedness::MemoryBound.to_string()
}

//! Per-category runtime breakdowns and the artifacts built from them:
//! summary table rows, proportion heatmaps, stacked-bar charts and diffs.
//!
//! Breakdowns sum *self* time. Summing total time would count nested calls
//! once per ancestor and the category proportions would no longer add up to
//! one.

use crate::calltree::OpRecord;
use crate::exec::{self, Execution};
use crate::taxonomy::{ml8, Taxonomy, OTHER};
use crate::trace::Device;
use crate::units::format_duration;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("records belong to taxonomy {found:?}, expected {expected:?}")]
    MixedTaxonomy { expected: String, found: String },
    #[error("record {0:?} has not been classified")]
    Unclassified(String),
    #[error("category {0:?} is not part of the taxonomy")]
    UnknownCategory(String),
    #[error("breakdown {0:?} has zero total time")]
    EmptyBreakdown(String),
    #[error("table rows need the ml8 taxonomy, got {0:?}")]
    WrongTaxonomy(String),
    #[error("duration arithmetic overflowed")]
    Overflow,
    #[error("unsupported output format {0:?} for this artifact")]
    UnsupportedFormat(String),
    #[error("CSV: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Breakdown {
    pub label: String,
    pub taxonomy: String,
    /// Every category of the taxonomy, in taxonomy order, zero-filled.
    pub entries: IndexMap<String, i64>,
}

impl Breakdown {
    pub fn zero(label: impl Into<String>, taxonomy: &Taxonomy) -> Self {
        Breakdown {
            label: label.into(),
            taxonomy: taxonomy.name.clone(),
            entries: taxonomy.categories.iter().map(|c| (c.clone(), 0)).collect(),
        }
    }

    pub fn total_ns(&self) -> i64 {
        self.entries.values().sum()
    }

    pub fn get(&self, category: &str) -> i64 {
        self.entries.get(category).copied().unwrap_or(0)
    }

    /// Entry-wise sum; both must share a taxonomy.
    pub fn merge(&self, other: &Breakdown) -> Result<Breakdown, ReportError> {
        same_taxonomy(self, other)?;
        let mut out = self.clone();
        for (cat, v) in &other.entries {
            let slot = out.entries.entry(cat.clone()).or_insert(0);
            *slot = slot.checked_add(*v).ok_or(ReportError::Overflow)?;
        }
        Ok(out)
    }

    /// The category with the largest share (first in column order on ties).
    /// `None` for an empty breakdown.
    pub fn dominant(&self, exclude_other: bool) -> Option<&str> {
        let mut best: Option<(&str, i64)> = None;
        for (cat, &v) in &self.entries {
            if exclude_other && cat == OTHER {
                continue;
            }
            if v > 0 && best.is_none_or(|(_, b)| v > b) {
                best = Some((cat, v));
            }
        }
        best.map(|(c, _)| c)
    }
}

fn same_taxonomy(a: &Breakdown, b: &Breakdown) -> Result<(), ReportError> {
    if a.taxonomy != b.taxonomy {
        return Err(ReportError::MixedTaxonomy { expected: a.taxonomy.clone(), found: b.taxonomy.clone() });
    }
    Ok(())
}

/// Sum record self times per category.
pub fn aggregate(records: &[OpRecord], taxonomy: &Taxonomy, label: &str, exec: Execution) -> Result<Breakdown, ReportError> {
    aggregate_by(records, taxonomy, label, exec, |_| true)
}

/// One breakdown per device, CPU first. Labels get a `[cpu]`/`[gpu]` suffix.
pub fn aggregate_per_device(
    records: &[OpRecord],
    taxonomy: &Taxonomy,
    label: &str,
    exec: Execution,
) -> Result<Vec<Breakdown>, ReportError> {
    [Device::Cpu, Device::Gpu]
        .into_iter()
        .map(|d| aggregate_by(records, taxonomy, &format!("{label} [{d}]"), exec, |r| r.device == d))
        .collect()
}

fn aggregate_by(
    records: &[OpRecord],
    taxonomy: &Taxonomy,
    label: &str,
    exec: Execution,
    keep: impl Fn(&OpRecord) -> bool + Sync + Send,
) -> Result<Breakdown, ReportError> {
    let width = taxonomy.categories.len();
    let add = |acc: Result<Vec<i64>, ReportError>, r: &OpRecord| {
        let mut acc = acc?;
        if !keep(r) {
            return Ok(acc);
        }
        let cat = r.category.as_ref().ok_or_else(|| ReportError::Unclassified(r.name.clone()))?;
        if *cat.taxonomy != *taxonomy.name {
            return Err(ReportError::MixedTaxonomy { expected: taxonomy.name.clone(), found: cat.taxonomy.to_string() });
        }
        let i = taxonomy.index_of(&cat.category).ok_or_else(|| ReportError::UnknownCategory(cat.category.to_string()))?;
        acc[i] = acc[i].checked_add(r.self_ns).ok_or(ReportError::Overflow)?;
        Ok(acc)
    };
    let merge = |a: Result<Vec<i64>, ReportError>, b: Result<Vec<i64>, ReportError>| {
        let (mut a, b) = (a?, b?);
        for (x, y) in a.iter_mut().zip(b) {
            *x = x.checked_add(y).ok_or(ReportError::Overflow)?;
        }
        Ok(a)
    };
    let sums = exec::fold_chunks(exec, records, || Ok(vec![0i64; width]), add, merge)?;
    let mut b = Breakdown::zero(label, taxonomy);
    for (slot, v) in b.entries.values_mut().zip(sums) {
        *slot = v;
    }
    Ok(b)
}

/// Each category's share of the total.
pub fn proportions(b: &Breakdown) -> Result<IndexMap<String, f64>, ReportError> {
    let total = b.total_ns();
    if total == 0 {
        return Err(ReportError::EmptyBreakdown(b.label.clone()));
    }
    Ok(b.entries.iter().map(|(c, &v)| (c.clone(), v as f64 / total as f64)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapMatrix {
    pub row_labels: Vec<String>,
    pub column_labels: Vec<String>,
    pub cells: Vec<Vec<f64>>,
}

/// Rows of category proportions, one per breakdown in input order. Empty
/// breakdowns become all-zero rows.
pub fn heatmap(breakdowns: &[Breakdown]) -> Result<HeatmapMatrix, ReportError> {
    let column_labels: Vec<String> = breakdowns.first().map(|b| b.entries.keys().cloned().collect()).unwrap_or_default();
    let mut m = HeatmapMatrix { row_labels: Vec::new(), column_labels, cells: Vec::new() };
    for b in breakdowns {
        same_taxonomy(&breakdowns[0], b)?;
        m.row_labels.push(b.label.clone());
        let row = match proportions(b) {
            Ok(p) => m.column_labels.iter().map(|c| p.get(c).copied().unwrap_or(0.0)).collect(),
            Err(_) => {
                log::warn!("breakdown {:?} is empty; heatmap row is all zero", b.label);
                vec![0.0; m.column_labels.len()]
            }
        };
        m.cells.push(row);
    }
    Ok(m)
}

impl HeatmapMatrix {
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = std::iter::once("label").chain(self.column_labels.iter().map(String::as_str));
        w.write_record(header).expect("in-memory CSV write");
        for (label, row) in self.row_labels.iter().zip(&self.cells) {
            let fields = std::iter::once(label.clone()).chain(row.iter().map(|v| v.to_string()));
            w.write_record(fields).expect("in-memory CSV write");
        }
        w.into_inner().expect("in-memory CSV flush")
    }

    pub fn from_csv(input: &[u8]) -> Result<Self, ReportError> {
        let err = |e: csv::Error| ReportError::Csv(e.to_string());
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = r.headers().map_err(err)?.clone();
        let column_labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut m = HeatmapMatrix { row_labels: Vec::new(), column_labels, cells: Vec::new() };
        for rec in r.records() {
            let rec = rec.map_err(err)?;
            m.row_labels.push(rec.get(0).unwrap_or_default().to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|f| f.parse::<f64>().map_err(|e| ReportError::Csv(format!("{f:?}: {e}"))))
                .collect::<Result<Vec<f64>, _>>()?;
            m.cells.push(row);
        }
        Ok(m)
    }
}

/// Column headings of the summary table, in ml8 category order plus total.
pub const TABLE_HEADER: [&str; 10] = [
    "GEMM",
    "Sparse MM",
    "Conv",
    "Element-Wise",
    "Regional",
    "Embedding",
    "Data Move",
    "Data Transform",
    "Other",
    "Total",
];

/// Significant figures used for table cells.
pub const TABLE_SIG_FIGS: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableRow {
    pub label: String,
    /// Formatted durations in [`TABLE_HEADER`] order.
    pub cells: Vec<String>,
}

impl TableRow {
    pub fn to_markdown(&self) -> String {
        format!("| {} | {} |", self.label, self.cells.join(" | "))
    }
}

pub fn table_row(b: &Breakdown) -> Result<TableRow, ReportError> {
    if b.taxonomy != ml8::NAME {
        return Err(ReportError::WrongTaxonomy(b.taxonomy.clone()));
    }
    let mut cells: Vec<String> = ml8::CATEGORIES.iter().map(|c| format_duration(b.get(c), TABLE_SIG_FIGS)).collect();
    cells.push(format_duration(b.total_ns(), TABLE_SIG_FIGS));
    Ok(TableRow { label: b.label.clone(), cells })
}

/// Per-frame (or per-step) cost multiplied out to a whole pipeline run.
pub fn scale_to_pipeline(b: &Breakdown, multiplier: u64) -> Result<Breakdown, ReportError> {
    let factor = i64::try_from(multiplier).map_err(|_| ReportError::Overflow)?;
    let mut out = b.clone();
    for v in out.entries.values_mut() {
        *v = v.checked_mul(factor).ok_or(ReportError::Overflow)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryDelta {
    pub category: String,
    /// `a − b` in nanoseconds.
    pub delta_ns: i64,
    /// `share_a − share_b`; an empty breakdown has all-zero shares.
    pub delta_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakdownDiff {
    pub a: String,
    pub b: String,
    pub rows: Vec<CategoryDelta>,
    pub total_delta_ns: i64,
}

pub fn diff(a: &Breakdown, b: &Breakdown) -> Result<BreakdownDiff, ReportError> {
    same_taxonomy(a, b)?;
    let shares = |x: &Breakdown| proportions(x).unwrap_or_else(|_| x.entries.keys().map(|c| (c.clone(), 0.0)).collect());
    let (pa, pb) = (shares(a), shares(b));
    let rows = a
        .entries
        .keys()
        .map(|c| CategoryDelta {
            category: c.clone(),
            delta_ns: a.get(c) - b.get(c),
            delta_fraction: pa.get(c).copied().unwrap_or(0.0) - pb.get(c).copied().unwrap_or(0.0),
        })
        .collect();
    Ok(BreakdownDiff { a: a.label.clone(), b: b.label.clone(), rows, total_delta_ns: a.total_ns() - b.total_ns() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
    Table,
}

impl std::str::FromStr for OutputFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "svg" | "svg-stacked-bars" => Ok(OutputFormat::Svg),
            "table" => Ok(OutputFormat::Table),
            other => Err(ReportError::UnsupportedFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SvgOptions {
    pub width: u32,
    pub height: u32,
    pub palette: Vec<String>,
}

impl Default for SvgOptions {
    fn default() -> Self {
        SvgOptions {
            width: 900,
            height: 480,
            palette: [
                "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f",
                "#bab0ac",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }
}

pub fn emit_matrix(m: &HeatmapMatrix, format: OutputFormat, svg: &SvgOptions) -> Result<Vec<u8>, ReportError> {
    match format {
        OutputFormat::Csv => Ok(m.to_csv()),
        OutputFormat::Json => Ok(json_bytes(m)),
        OutputFormat::Svg => Ok(stacked_bars_svg(&m.row_labels, &m.column_labels, &m.cells, svg, "share").into_bytes()),
        OutputFormat::Table => Err(ReportError::UnsupportedFormat("table".into())),
    }
}

#[derive(Serialize)]
struct BreakdownsDoc<'a> {
    taxonomy: &'a str,
    categories: &'a [String],
    rows: Vec<BreakdownDoc<'a>>,
}

#[derive(Serialize)]
struct BreakdownDoc<'a> {
    label: &'a str,
    entries: &'a IndexMap<String, i64>,
    total_ns: i64,
}

pub fn emit_breakdowns(
    rows: &[Breakdown],
    taxonomy: &Taxonomy,
    format: OutputFormat,
    svg: &SvgOptions,
) -> Result<Vec<u8>, ReportError> {
    for b in rows {
        if b.taxonomy != taxonomy.name {
            return Err(ReportError::MixedTaxonomy { expected: taxonomy.name.clone(), found: b.taxonomy.clone() });
        }
    }
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let header = std::iter::once("label")
                .chain(taxonomy.categories.iter().map(String::as_str))
                .chain(std::iter::once("total"));
            w.write_record(header).expect("in-memory CSV write");
            for b in rows {
                let fields = std::iter::once(b.label.clone())
                    .chain(taxonomy.categories.iter().map(|c| b.get(c).to_string()))
                    .chain(std::iter::once(b.total_ns().to_string()));
                w.write_record(fields).expect("in-memory CSV write");
            }
            Ok(w.into_inner().expect("in-memory CSV flush"))
        }
        OutputFormat::Json => Ok(json_bytes(&BreakdownsDoc {
            taxonomy: &taxonomy.name,
            categories: &taxonomy.categories,
            rows: rows.iter().map(|b| BreakdownDoc { label: &b.label, entries: &b.entries, total_ns: b.total_ns() }).collect(),
        })),
        OutputFormat::Svg => {
            let cells: Vec<Vec<f64>> = rows
                .iter()
                .map(|b| taxonomy.categories.iter().map(|c| b.get(c) as f64 / 1e6).collect())
                .collect();
            let labels: Vec<String> = rows.iter().map(|b| b.label.clone()).collect();
            Ok(stacked_bars_svg(&labels, &taxonomy.categories, &cells, svg, "ms").into_bytes())
        }
        OutputFormat::Table => {
            let mut out = String::new();
            if taxonomy.name == ml8::NAME {
                let _ = writeln!(out, "| Model | {} |", TABLE_HEADER.join(" | "));
                let _ = writeln!(out, "|{}", "---|".repeat(TABLE_HEADER.len() + 1));
                for b in rows {
                    let _ = writeln!(out, "{}", table_row(b)?.to_markdown());
                }
            } else {
                let _ = writeln!(out, "| Model | {} | Total |", taxonomy.categories.join(" | "));
                let _ = writeln!(out, "|{}", "---|".repeat(taxonomy.categories.len() + 2));
                for b in rows {
                    let cells: Vec<String> = taxonomy
                        .categories
                        .iter()
                        .map(|c| b.get(c))
                        .chain(std::iter::once(b.total_ns()))
                        .map(|v| format_duration(v, TABLE_SIG_FIGS))
                        .collect();
                    let _ = writeln!(out, "| {} | {} |", b.label, cells.join(" | "));
                }
            }
            Ok(out.into_bytes())
        }
    }
}

pub fn emit_diff(d: &BreakdownDiff, format: OutputFormat) -> Result<Vec<u8>, ReportError> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["category", "delta_ns", "delta_fraction"]).expect("in-memory CSV write");
            for r in &d.rows {
                w.write_record([r.category.clone(), r.delta_ns.to_string(), r.delta_fraction.to_string()])
                    .expect("in-memory CSV write");
            }
            w.write_record(["total".to_string(), d.total_delta_ns.to_string(), "0".to_string()])
                .expect("in-memory CSV write");
            Ok(w.into_inner().expect("in-memory CSV flush"))
        }
        OutputFormat::Json => Ok(json_bytes(d)),
        OutputFormat::Table => {
            let mut out = String::new();
            let _ = writeln!(out, "| Category | {} − {} | Share Δ |", d.a, d.b);
            let _ = writeln!(out, "|---|---|---|");
            for r in &d.rows {
                let _ = writeln!(out, "| {} | {} | {:+.4} |", r.category, signed_duration(r.delta_ns), r.delta_fraction);
            }
            let _ = writeln!(out, "| Total | {} | |", signed_duration(d.total_delta_ns));
            Ok(out.into_bytes())
        }
        OutputFormat::Svg => Err(ReportError::UnsupportedFormat("svg".into())),
    }
}

fn signed_duration(ns: i64) -> String {
    let body = format_duration(ns.saturating_abs(), TABLE_SIG_FIGS);
    match ns.signum() {
        -1 => format!("-{body}"),
        1 => format!("+{body}"),
        _ => body,
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report serializes");
    out.push(b'\n');
    out
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One vertical stacked bar per row, one segment per column, with a legend.
fn stacked_bars_svg(rows: &[String], columns: &[String], cells: &[Vec<f64>], opts: &SvgOptions, unit: &str) -> String {
    let (w, h) = (opts.width as f64, opts.height as f64);
    let (left, right, top, bottom) = (60.0, 170.0, 20.0, 60.0);
    let plot_w = (w - left - right).max(10.0);
    let plot_h = (h - top - bottom).max(10.0);
    let max_total = cells.iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max);
    let scale = if max_total > 0.0 { plot_h / max_total } else { 0.0 };
    let slot = if rows.is_empty() { plot_w } else { plot_w / rows.len() as f64 };
    let bar_w = slot * 0.7;
    let color = |i: usize| opts.palette.get(i % opts.palette.len().max(1)).map(String::as_str).unwrap_or("#888888");

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + plot_h);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="black"/>"#, left + plot_w, y = top + plot_h);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 6.0, top + 4.0, fmt_axis(max_total, unit));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">0</text>"#, left - 6.0, top + plot_h);
    for (i, (label, row)) in rows.iter().zip(cells).enumerate() {
        let x = left + slot * i as f64 + (slot - bar_w) / 2.0;
        let mut y = top + plot_h;
        let _ = writeln!(s, r#"<g class="bar" data-label="{}">"#, escape_xml(label));
        for (j, v) in row.iter().enumerate() {
            let seg = v * scale;
            if seg <= 0.0 {
                continue;
            }
            y -= seg;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{bar_w:.2}" height="{seg:.2}" fill="{}"><title>{}: {}</title></rect>"#,
                color(j),
                escape_xml(columns.get(j).map(String::as_str).unwrap_or("")),
                fmt_axis(*v, unit)
            );
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            x + bar_w / 2.0,
            top + plot_h + 16.0,
            escape_xml(label)
        );
    }
    let lx = left + plot_w + 20.0;
    let _ = writeln!(s, r#"<g class="legend">"#);
    for (j, c) in columns.iter().enumerate() {
        let ly = top + 16.0 * j as f64;
        let _ = writeln!(s, r#"<rect x="{lx}" y="{ly}" width="10" height="10" fill="{}"/>"#, color(j));
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 14.0, ly + 9.0, escape_xml(c));
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

fn fmt_axis(v: f64, unit: &str) -> String {
    if unit == "share" {
        format!("{:.1}%", v * 100.0)
    } else {
        format!("{v:.3}{unit}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::CategoryId;

    fn rec(category: &str, self_ns: i64) -> OpRecord {
        let mut r = OpRecord::new("op", Device::Cpu, self_ns, self_ns);
        r.category = Some(CategoryId::new(ml8::NAME, category));
        r
    }

    fn breakdown(values: &[(&str, i64)]) -> Breakdown {
        let mut b = Breakdown::zero("x", &Taxonomy::ml8());
        for (c, v) in values {
            b.entries[*c] = *v;
        }
        b
    }

    #[test]
    fn aggregate_sums_self_time() {
        let rs = vec![rec(ml8::DENSE_MM, 5), rec(ml8::DENSE_MM, 7), rec(OTHER, 1)];
        for exec in [Execution::Sequential, Execution::Parallel] {
            let b = aggregate(&rs, &Taxonomy::ml8(), "m", exec).unwrap();
            assert_eq!(b.get(ml8::DENSE_MM), 12);
            assert_eq!(b.get(OTHER), 1);
            assert_eq!(b.get(ml8::REGIONAL), 0);
            assert_eq!(b.entries.len(), 9);
            assert_eq!(b.total_ns(), 13);
        }
        let empty = aggregate(&[], &Taxonomy::ml8(), "e", Execution::Sequential).unwrap();
        assert_eq!(empty.total_ns(), 0);
    }

    #[test]
    fn aggregate_errors() {
        let mut r = rec(ml8::DENSE_MM, 1);
        r.category = Some(CategoryId::new("symbolic", "Query"));
        assert!(matches!(
            aggregate(&[r], &Taxonomy::ml8(), "m", Execution::Sequential),
            Err(ReportError::MixedTaxonomy { .. })
        ));
        let mut r = rec(ml8::DENSE_MM, 1);
        r.category = None;
        assert!(matches!(aggregate(&[r], &Taxonomy::ml8(), "m", Execution::Parallel), Err(ReportError::Unclassified(_))));
    }

    #[test]
    fn per_device_split() {
        let mut g = rec(ml8::DENSE_MM, 5);
        g.device = Device::Gpu;
        let rs = vec![g, rec(ml8::DENSE_MM, 3)];
        let split = aggregate_per_device(&rs, &Taxonomy::ml8(), "m", Execution::Sequential).unwrap();
        assert_eq!(split[0].label, "m [cpu]");
        assert_eq!((split[0].total_ns(), split[1].total_ns()), (3, 5));
    }

    #[test]
    fn proportions_and_dominance() {
        let b = breakdown(&[(ml8::ELEMENT_WISE, 10)]);
        let p = proportions(&b).unwrap();
        assert_eq!(p[ml8::ELEMENT_WISE], 1.0);
        assert_eq!(p[ml8::DENSE_MM], 0.0);
        assert!(matches!(proportions(&breakdown(&[])), Err(ReportError::EmptyBreakdown(_))));
        let b = breakdown(&[(ml8::ELEMENT_WISE, 10), (OTHER, 20)]);
        assert_eq!(b.dominant(false), Some(OTHER));
        assert_eq!(b.dominant(true), Some(ml8::ELEMENT_WISE));
        assert_eq!(breakdown(&[]).dominant(false), None);
    }

    #[test]
    fn heatmap_rows() {
        let a = breakdown(&[(ml8::DENSE_MM, 3), (OTHER, 1)]);
        let m = heatmap(&[a.clone(), a.clone(), breakdown(&[])]).unwrap();
        assert_eq!(m.cells[0], m.cells[1]);
        assert_eq!(m.cells[0][0], 0.75);
        assert!(m.cells[2].iter().all(|&v| v == 0.0));
        let mut sym = Breakdown::zero("s", &Taxonomy::symbolic());
        sym.entries["Query"] = 1;
        assert!(matches!(heatmap(&[a, sym]), Err(ReportError::MixedTaxonomy { .. })));
    }

    #[test]
    fn table_rows() {
        let zero = breakdown(&[]);
        let row = table_row(&zero).unwrap();
        assert!(row.cells.iter().all(|c| c == "0"));
        assert_eq!(row.cells.len(), TABLE_HEADER.len());
        let b = breakdown(&[(ml8::DENSE_MM, 39_900), (OTHER, 448_380)]);
        let row = table_row(&b).unwrap();
        assert_eq!(row.cells[0], "39.9us");
        assert_eq!(row.cells[9], "488.3us");
        let b = breakdown(&[(OTHER, 18_300_000_000)]);
        assert_eq!(table_row(&b).unwrap().cells[9], "18.3s");
        assert!(matches!(table_row(&Breakdown::zero("s", &Taxonomy::symbolic())), Err(ReportError::WrongTaxonomy(_))));
    }

    #[test]
    fn pipeline_scaling() {
        let b = breakdown(&[(ml8::CONVOLUTION, 7), (OTHER, 2)]);
        assert_eq!(scale_to_pipeline(&b, 1).unwrap(), b);
        let t = scale_to_pipeline(&b, 3).unwrap();
        assert_eq!((t.get(ml8::CONVOLUTION), t.get(OTHER)), (21, 6));
        assert_eq!(scale_to_pipeline(&breakdown(&[(OTHER, i64::MAX)]), 2), Err(ReportError::Overflow));
    }

    #[test]
    fn diffs() {
        let x = breakdown(&[(ml8::DENSE_MM, 30), (OTHER, 10)]);
        let d = diff(&x, &x).unwrap();
        assert!(d.rows.iter().all(|r| r.delta_ns == 0 && r.delta_fraction == 0.0));
        let d = diff(&x, &breakdown(&[])).unwrap();
        assert_eq!(d.rows[0].delta_ns, 30);
        assert_eq!(d.rows[0].delta_fraction, 0.75);
        assert_eq!(d.total_delta_ns, 40);
    }

    #[test]
    fn csv_shapes() {
        let b = breakdown(&[(ml8::DENSE_MM, 1)]);
        let m = heatmap(&[b]).unwrap();
        let text = String::from_utf8(m.to_csv()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(HeatmapMatrix::from_csv(text.as_bytes()).unwrap(), m);

        let empty = HeatmapMatrix { row_labels: vec![], column_labels: Taxonomy::ml8().categories, cells: vec![] };
        let text = String::from_utf8(empty.to_csv()).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("label,DenseMM"));

        let quoted = HeatmapMatrix { row_labels: vec!["a, \"b\"".into()], column_labels: vec!["c".into()], cells: vec![vec![1.0]] };
        let text = String::from_utf8(quoted.to_csv()).unwrap();
        assert!(text.contains("\"a, \"\"b\"\"\""));
        assert_eq!(HeatmapMatrix::from_csv(text.as_bytes()).unwrap(), quoted);
    }

    #[test]
    fn formats() {
        assert_eq!("csv".parse::<OutputFormat>().unwrap(), OutputFormat::Csv);
        assert!(matches!("xlsx".parse::<OutputFormat>(), Err(ReportError::UnsupportedFormat(_))));
        let b = breakdown(&[(ml8::DENSE_MM, 2_000_000), (OTHER, 1_000_000)]);
        let svg = String::from_utf8(
            emit_breakdowns(std::slice::from_ref(&b), &Taxonomy::ml8(), OutputFormat::Svg, &SvgOptions::default()).unwrap(),
        )
        .unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<rect").count(), 2 + 9);
        assert!(svg.contains("DataTransformation"));
        let json = emit_breakdowns(std::slice::from_ref(&b), &Taxonomy::ml8(), OutputFormat::Json, &SvgOptions::default()).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(v["rows"][0]["total_ns"], 3_000_000);
        let table = emit_breakdowns(&[b], &Taxonomy::ml8(), OutputFormat::Table, &SvgOptions::default()).unwrap();
        assert!(String::from_utf8(table).unwrap().contains("| x | 2ms | 0 |"));
        let m = heatmap(&[]).unwrap();
        assert!(matches!(emit_matrix(&m, OutputFormat::Table, &SvgOptions::default()), Err(ReportError::UnsupportedFormat(_))));
    }
}

//! Parsers turning external profiler output into [`TraceSet`]s.
//!
//! Three inputs are understood:
//! * span traces in the trace-event JSON format written by ML framework
//!   profilers (`ph` = `X`, or `B`/`E` pairs), timestamps in microseconds;
//! * flat per-function statistics (the `ncalls tottime percall cumtime`
//!   table printed by interpreter-level profilers, or the same data as JSON);
//! * the canonical JSON format written by [`emit_canonical`].
//!
//! Gzip-compressed input is detected by its magic bytes and inflated.

mod canonical;
mod flat;
mod span;

pub use canonical::{emit_canonical, parse_canonical};
pub use flat::{parse_flat_entries, parse_flat_profile, FlatProfileEntry};
pub use span::{parse_span_trace, SpanOptions, SHAPE_KEYS};

use crate::trace::TraceSet;
use std::io::Read;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("unknown field {0} (strict mode)")]
    StrictModeUnknownField(String),
    #[error("unmatched span {name:?} on lane {lane:?}")]
    UnmatchedSpan { lane: String, name: String },
    #[error("negative time for {name:?}: {detail}")]
    NegativeTime { name: String, detail: String },
}

/// Which parser to apply to an input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Span,
    Flat,
    Canonical,
}

impl std::str::FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "span" => Ok(InputFormat::Span),
            "flat" => Ok(InputFormat::Flat),
            "canonical" => Ok(InputFormat::Canonical),
            other => Err(format!("unknown input format {other:?} (expected span, flat or canonical)")),
        }
    }
}

/// Dispatch on `format`. `label` is ignored for canonical input, which
/// carries its own.
pub fn parse_any(input: &[u8], format: InputFormat, label: &str, strict: bool) -> Result<TraceSet, IngestError> {
    match format {
        InputFormat::Span => parse_span_trace(input, label, &SpanOptions::default()),
        InputFormat::Flat => parse_flat_profile(input, label),
        InputFormat::Canonical => parse_canonical(input, strict),
    }
}

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

pub(crate) fn read_maybe_gzip(input: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>, IngestError> {
    if input.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        flate2::read::MultiGzDecoder::new(input)
            .read_to_end(&mut out)
            .map_err(|e| IngestError::Malformed(format!("gzip: {e}")))?;
        Ok(out.into())
    } else {
        Ok(input.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn gzip_is_sniffed() {
        let doc = br#"{"label":"z","wall_time_ns":5,"events":[]}"#;
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(doc).unwrap();
        let gz = enc.finish().unwrap();
        let set = parse_canonical(&gz, true).unwrap();
        assert_eq!(set.label, "z");
        assert_eq!(set.wall_time_ns, Some(5));
    }

    #[test]
    fn corrupt_gzip_is_malformed() {
        let bad = [0x1f, 0x8b, 0x08, 0x00, 0x01];
        assert!(matches!(parse_canonical(&bad, false), Err(IngestError::Malformed(_))));
    }
}

//! Runtime characterization of profiler traces.
//!
//! Traces from framework span profilers or flat function profilers are
//! parsed into [`trace::TraceSet`]s, rebuilt into per-lane call trees to get
//! exclusive (self) times, classified into operation categories by a
//! rule file, and aggregated into per-category breakdowns. GEMM and
//! element-wise operational intensity can be estimated from recorded shapes.
//!
//! All durations are integer nanoseconds.

pub mod calltree;
pub mod compensate;
pub mod exec;
pub mod ingest;
pub mod intensity;
pub mod pipeline;
pub mod report;
pub mod taxonomy;
pub mod trace;
pub mod units;

pub use calltree::OpRecord;
pub use exec::Execution;
pub use report::Breakdown;
pub use taxonomy::{CategoryId, RuleSet, Taxonomy};
pub use trace::{Device, TraceEvent, TraceSet};

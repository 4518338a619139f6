//! Profiler-overhead compensation: uniform rescaling of every duration by
//! the ratio of an unprofiled run's wall time to the profiled run's.

use crate::calltree::OpRecord;
use crate::trace::has_internal_prefix;
use crate::units::div_round_half_even;
use num_rational::Ratio;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompensateError {
    #[error("wall times must be positive (baseline {baseline_ns} ns, profiled {profiled_ns} ns)")]
    ZeroWallTime { baseline_ns: i64, profiled_ns: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompensationModel {
    pub baseline_wall_ns: i64,
    pub profiled_wall_ns: i64,
    /// `baseline / profiled`, reduced.
    pub scale: Ratio<i64>,
}

impl CompensationModel {
    /// A baseline slower than the profiled run means the measurements are
    /// noisy; the scale is still applied.
    pub fn is_suspicious(&self) -> bool {
        self.scale > Ratio::from_integer(1)
    }

    pub fn identity() -> Self {
        CompensationModel { baseline_wall_ns: 1, profiled_wall_ns: 1, scale: Ratio::from_integer(1) }
    }

    /// `ns · scale`, rounded half to even.
    pub fn scale_ns(&self, ns: i64) -> i64 {
        let (num, den) = (*self.scale.numer() as i128, *self.scale.denom() as i128);
        div_round_half_even(ns as i128 * num, den) as i64
    }
}

pub fn derive(baseline_wall_ns: i64, profiled_wall_ns: i64) -> Result<CompensationModel, CompensateError> {
    if baseline_wall_ns <= 0 || profiled_wall_ns <= 0 {
        return Err(CompensateError::ZeroWallTime { baseline_ns: baseline_wall_ns, profiled_ns: profiled_wall_ns });
    }
    let model = CompensationModel {
        baseline_wall_ns,
        profiled_wall_ns,
        scale: Ratio::new(baseline_wall_ns, profiled_wall_ns),
    };
    if model.is_suspicious() {
        log::warn!(
            "baseline run ({baseline_wall_ns} ns) is slower than the profiled run ({profiled_wall_ns} ns); \
             scale {} > 1",
            model.scale
        );
    }
    Ok(model)
}

/// Rescale self and total times. The unscaled values are kept in
/// [`OpRecord::raw`]; applying again rescales from those originals.
pub fn apply(records: &mut [OpRecord], model: &CompensationModel) {
    for r in records {
        let (raw_self, raw_total) = *r.raw.get_or_insert((r.self_ns, r.total_ns));
        r.self_ns = model.scale_ns(raw_self);
        r.total_ns = model.scale_ns(raw_total);
    }
}

/// Put the unscaled values back.
pub fn restore_raw(records: &mut [OpRecord]) {
    for r in records {
        if let Some((s, t)) = r.raw.take() {
            r.self_ns = s;
            r.total_ns = t;
        }
    }
}

/// Drop records whose names start with a profiler-internal prefix; returns
/// the survivors and the removed self time.
pub fn strip_profiler_artifacts<S: AsRef<str>>(records: Vec<OpRecord>, prefixes: &[S]) -> (Vec<OpRecord>, i64) {
    let mut removed = 0i64;
    let kept = records
        .into_iter()
        .filter(|r| {
            let internal = has_internal_prefix(&r.name, prefixes);
            if internal {
                removed += r.self_ns;
            }
            !internal
        })
        .collect();
    (kept, removed)
}

//! Operational intensity of shape-annotated operations.
//!
//! GEMM of an `m×k` by a `k×n` matrix: work `W = 2mkn` FLOPs (a fused
//! multiply-add counts as two), compulsory traffic `Q = b(mk + kn + mn)`
//! bytes for element size `b`, intensity `I = W/Q` kept as an exact
//! rational. Because `mk + kn + mn ≥ mkn / min(m,k,n)`, `I ≤ (2/b)·min(m,k,n)`:
//! a single small dimension caps the intensity regardless of the others.

use crate::calltree::OpRecord;
use crate::taxonomy::ml8;
use num_rational::Ratio;
use num_traits::ToPrimitive;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GemmDims {
    pub m: u64,
    pub k: u64,
    pub n: u64,
}

impl GemmDims {
    pub fn new(m: u64, k: u64, n: u64) -> Result<Self, IntensityError> {
        if m == 0 || k == 0 || n == 0 {
            return Err(IntensityError::ZeroDimension);
        }
        Ok(GemmDims { m, k, n })
    }

    pub fn min(&self) -> u64 {
        self.m.min(self.k).min(self.n)
    }

    pub fn max(&self) -> u64 {
        self.m.max(self.k).max(self.n)
    }
}

impl fmt::Display for GemmDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m={} k={} n={}", self.m, self.k, self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IntensityError {
    #[error("{0} overflows 128-bit integer arithmetic")]
    Overflow(&'static str),
    #[error("GEMM dimensions must be at least 1")]
    ZeroDimension,
    #[error("bytes per element must be 1, 2, 4 or 8 (got {0})")]
    BadElementSize(u64),
    #[error("shapes {0:?} are not conformable for matrix multiplication")]
    ShapeMismatch(Vec<Vec<u64>>),
    #[error("machine balance must be positive and finite")]
    BadMachine,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntensityEstimate {
    pub work_flops: u128,
    pub traffic_bytes: u128,
    /// FLOPs per byte, exact.
    pub intensity: Ratio<u128>,
    pub tall_skinny: bool,
}

impl IntensityEstimate {
    fn from_parts(work_flops: u128, traffic_bytes: u128, tall_skinny: bool) -> Self {
        IntensityEstimate {
            work_flops,
            traffic_bytes,
            intensity: Ratio::new(work_flops, traffic_bytes),
            tall_skinny,
        }
    }

    pub fn intensity_f64(&self) -> f64 {
        self.intensity.to_f64().unwrap_or(f64::NAN)
    }
}

fn check_element_size(bytes_per_element: u64) -> Result<(), IntensityError> {
    match bytes_per_element {
        1 | 2 | 4 | 8 => Ok(()),
        other => Err(IntensityError::BadElementSize(other)),
    }
}

/// `2·m·k·n`.
pub fn gemm_work(d: GemmDims) -> Result<u128, IntensityError> {
    2u128
        .checked_mul(d.m as u128)
        .and_then(|x| x.checked_mul(d.k as u128))
        .and_then(|x| x.checked_mul(d.n as u128))
        .ok_or(IntensityError::Overflow("GEMM work"))
}

/// `b·(mk + kn + mn)`.
pub fn gemm_traffic(d: GemmDims, bytes_per_element: u64) -> Result<u128, IntensityError> {
    check_element_size(bytes_per_element)?;
    let (m, k, n) = (d.m as u128, d.k as u128, d.n as u128);
    // Each product of two u64 fits in u128; only the sum and scaling can overflow.
    (m * k)
        .checked_add(k * n)
        .and_then(|s| s.checked_add(m * n))
        .and_then(|s| s.checked_mul(bytes_per_element as u128))
        .ok_or(IntensityError::Overflow("GEMM traffic"))
}

pub fn gemm_intensity(d: GemmDims, bytes_per_element: u64) -> Result<IntensityEstimate, IntensityError> {
    let work = gemm_work(d)?;
    let traffic = gemm_traffic(d, bytes_per_element)?;
    Ok(IntensityEstimate::from_parts(work, traffic, is_tall_skinny(d, DEFAULT_TALL_SKINNY_RATIO)))
}

/// Aspect ratio at or above which a GEMM counts as tall-and-skinny.
pub const DEFAULT_TALL_SKINNY_RATIO: f64 = 64.0;

/// `max(m,k,n) / min(m,k,n) ≥ ratio_threshold`.
pub fn is_tall_skinny(d: GemmDims, ratio_threshold: f64) -> bool {
    debug_assert!(ratio_threshold >= 1.0);
    // max/min ≥ t  ⇔  max ≥ t·min, evaluated without dividing.
    d.max() as f64 >= ratio_threshold * d.min() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineModel {
    pub peak_flops_per_s: f64,
    pub peak_bytes_per_s: f64,
}

impl MachineModel {
    pub fn new(peak_flops_per_s: f64, peak_bytes_per_s: f64) -> Result<Self, IntensityError> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(peak_flops_per_s) || !ok(peak_bytes_per_s) {
            return Err(IntensityError::BadMachine);
        }
        Ok(MachineModel { peak_flops_per_s, peak_bytes_per_s })
    }

    /// A model with the given balance (FLOPs per byte) and unit bandwidth.
    pub fn from_balance(flops_per_byte: f64) -> Result<Self, IntensityError> {
        MachineModel::new(flops_per_byte, 1.0)
    }

    pub fn machine_balance(&self) -> f64 {
        self.peak_flops_per_s / self.peak_bytes_per_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundedness {
    MemoryBound,
    ComputeBound,
    Balanced,
}

impl fmt::Display for Boundedness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundedness::MemoryBound => "memory-bound",
            Boundedness::ComputeBound => "compute-bound",
            Boundedness::Balanced => "balanced",
        })
    }
}

/// Relative band around the machine balance reported as `Balanced`.
pub const BALANCE_TOLERANCE: f64 = 0.05;

pub fn boundedness(estimate: &IntensityEstimate, machine: &MachineModel) -> Boundedness {
    let balance = machine.machine_balance();
    let i = estimate.intensity_f64();
    if i < balance * (1.0 - BALANCE_TOLERANCE) {
        Boundedness::MemoryBound
    } else if i > balance * (1.0 + BALANCE_TOLERANCE) {
        Boundedness::ComputeBound
    } else {
        Boundedness::Balanced
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimateParams {
    pub bytes_per_element: u64,
    /// Operations per element for element-wise ops without a rule override.
    pub ops_per_element: u64,
}

impl Default for EstimateParams {
    fn default() -> Self {
        EstimateParams { bytes_per_element: 4, ops_per_element: 1 }
    }
}

/// Estimate a classified record: DenseMM with two 2-D input shapes uses the
/// GEMM model; ElementWise uses `W = c·N`, `Q = 2b·N` for the largest input
/// of `N` elements. Other categories, and records without shapes, have no
/// estimate.
///
/// When a DenseMM record has more than two 2-D inputs (a bias, as in
/// `addmm`), the last two are the multiplied operands.
pub fn estimate_record(record: &OpRecord, params: &EstimateParams) -> Result<Option<IntensityEstimate>, IntensityError> {
    check_element_size(params.bytes_per_element)?;
    let (Some(category), Some(shapes)) = (&record.category, &record.shapes) else {
        return Ok(None);
    };
    match &*category.category {
        ml8::DENSE_MM => {
            let matrices: Vec<&Vec<u64>> = shapes.iter().filter(|s| s.len() == 2).collect();
            if matrices.len() < 2 {
                return Ok(None);
            }
            let (a, b) = (matrices[matrices.len() - 2], matrices[matrices.len() - 1]);
            if a[1] != b[0] {
                return Err(IntensityError::ShapeMismatch(shapes.clone()));
            }
            let dims = GemmDims::new(a[0], a[1], b[1]).map_err(|_| IntensityError::ShapeMismatch(shapes.clone()))?;
            gemm_intensity(dims, params.bytes_per_element).map(Some)
        }
        ml8::ELEMENT_WISE => {
            let Some(elements) = shapes
                .iter()
                .map(|s| s.iter().try_fold(1u128, |acc, &d| acc.checked_mul(d as u128)))
                .collect::<Option<Vec<_>>>()
                .ok_or(IntensityError::Overflow("element count"))?
                .into_iter()
                .max()
            else {
                return Ok(None);
            };
            if elements == 0 {
                return Ok(None);
            }
            let work = elements
                .checked_mul(params.ops_per_element as u128)
                .ok_or(IntensityError::Overflow("element-wise work"))?;
            let traffic = elements
                .checked_mul(2 * params.bytes_per_element as u128)
                .ok_or(IntensityError::Overflow("element-wise traffic"))?;
            if work == 0 {
                return Ok(None);
            }
            Ok(Some(IntensityEstimate::from_parts(work, traffic, false)))
        }
        _ => Ok(None),
    }
}

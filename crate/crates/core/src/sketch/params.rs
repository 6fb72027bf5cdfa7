use serde::{Deserialize, Serialize};

use super::SketchError;

/// Default logical counter width for data sketches.
pub const DATA_COUNTER_BITS: u32 = 32;
/// Default logical counter width for redundant sum-sketches.
pub const SUM_COUNTER_BITS: u32 = 64;

/// Dimensions and hashing seed shared by every sketch in a deployment.
///
/// All nodes are configured identically, so two sketches built from equal
/// params (including `seed`) hash every identifier to the same cells and can
/// be added cell by cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchParams {
    pub epsilon: f64,
    pub delta: f64,
    pub d: usize,
    pub w: usize,
    pub seed: u64,
    pub counter_bits: u32,
}

impl SketchParams {
    /// Derives `d` and `w` from the accuracy guarantees.
    pub fn from_accuracy(epsilon: f64, delta: f64, seed: u64) -> Result<Self, SketchError> {
        let (d, w) = derive_dims(epsilon, delta)?;
        Ok(Self {
            epsilon,
            delta,
            d,
            w,
            seed,
            counter_bits: DATA_COUNTER_BITS,
        })
    }

    /// Explicit dimensions; `epsilon` and `delta` are back-filled as the
    /// tightest guarantees those dimensions support.
    pub fn with_dims(d: usize, w: usize, seed: u64) -> Result<Self, SketchError> {
        if d == 0 || w == 0 {
            return Err(SketchError::InvalidDims { d, w });
        }
        Ok(Self {
            epsilon: std::f64::consts::E / w as f64,
            delta: (-(d as f64)).exp(),
            d,
            w,
            seed,
            counter_bits: DATA_COUNTER_BITS,
        })
    }

    pub fn with_counter_bits(mut self, bits: u32) -> Self {
        self.counter_bits = bits;
        self
    }

    /// Largest value a counter may hold.
    pub fn counter_max(&self) -> u64 {
        if self.counter_bits >= 64 {
            u64::MAX
        } else {
            (1u64 << self.counter_bits) - 1
        }
    }

    pub fn cells(&self) -> usize {
        self.d * self.w
    }

    /// Params agree on everything that determines cell layout and hashing.
    pub fn compatible(&self, other: &SketchParams) -> bool {
        self.d == other.d && self.w == other.w && self.seed == other.seed
    }

    /// `ceil(log2(w))`: bits needed to address a column.
    pub fn bits_w(&self) -> u32 {
        ceil_log2(self.w as u64)
    }
}

/// `d = ceil(ln(1/delta))`, `w = ceil(e/epsilon)`.
pub fn derive_dims(epsilon: f64, delta: f64) -> Result<(usize, usize), SketchError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(SketchError::InvalidEpsilon(epsilon));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SketchError::InvalidDelta(delta));
    }
    let d = (1.0 / delta).ln().ceil() as usize;
    let w = (std::f64::consts::E / epsilon).ceil() as usize;
    Ok((d.max(1), w.max(1)))
}

/// `ceil(log2(n))` with `ceil_log2(1) == 0`.
pub fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

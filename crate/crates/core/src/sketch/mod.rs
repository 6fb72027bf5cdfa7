//! Count-Min Sketch with exact linear combination.
//!
//! A [`Sketch`] is a `d x w` matrix of counters plus the item total. Point
//! queries return the minimum counter over the `d` rows the identifier hashes
//! to, which never underestimates. Sketches built with equal
//! [`SketchParams`] are linear: adding two of them cell by cell gives the
//! sketch of the concatenated streams, and [`linear_combine`] evaluates any
//! rational combination whose result is a valid sketch.

mod hash;
mod params;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use thiserror::Error;

pub use hash::{id_bytes, mix64, FlowId, HashFamily, MAX_ID_BYTES};
pub use params::{ceil_log2, derive_dims, SketchParams, DATA_COUNTER_BITS, SUM_COUNTER_BITS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SketchError {
    #[error("invalid dimensions d={d} w={w}")]
    InvalidDims { d: usize, w: usize },
    #[error("epsilon must be in (0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("delta must be in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("identifier width {0} bits is not a multiple of 8 in 32..=256")]
    IdWidth(usize),
    #[error("identifier {value} does not fit in {bits} bits")]
    IdOverflow { value: u128, bits: u32 },
    #[error("increment must be at least 1")]
    ZeroIncrement,
    #[error("counter [{row}, {col}] would exceed {max}")]
    Overflow { row: usize, col: usize, max: u64 },
    #[error("item total overflow")]
    TotalOverflow,
    #[error("sketch parameters differ")]
    ParamMismatch,
    #[error("combination needs {expected} coefficients, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("cell [{row}, {col}] of the combination is {value}, not a non-negative integer")]
    InconsistentRecovery { row: usize, col: usize, value: String },
    #[error("coefficients too large for exact combination")]
    CoefficientRange,
}

/// A `d x w` Count-Min Sketch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sketch {
    params: SketchParamsKey,
    hash: HashFamily,
    counts: Vec<u64>,
    total: u64,
    epoch: u64,
}

// `SketchParams` holds floats; equality of sketches only depends on these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SketchParamsKey {
    d: usize,
    w: usize,
    seed: u64,
    counter_bits: u32,
    epsilon_bits: u64,
    delta_bits: u64,
}

impl SketchParamsKey {
    fn of(p: &SketchParams) -> Self {
        Self {
            d: p.d,
            w: p.w,
            seed: p.seed,
            counter_bits: p.counter_bits,
            epsilon_bits: p.epsilon.to_bits(),
            delta_bits: p.delta.to_bits(),
        }
    }

    fn params(&self) -> SketchParams {
        SketchParams {
            epsilon: f64::from_bits(self.epsilon_bits),
            delta: f64::from_bits(self.delta_bits),
            d: self.d,
            w: self.w,
            seed: self.seed,
            counter_bits: self.counter_bits,
        }
    }
}

impl Sketch {
    pub fn new(params: SketchParams) -> Result<Self, SketchError> {
        if params.d == 0 || params.w == 0 {
            return Err(SketchError::InvalidDims {
                d: params.d,
                w: params.w,
            });
        }
        Ok(Self {
            params: SketchParamsKey::of(&params),
            hash: HashFamily::new(params.d, params.w, params.seed),
            counts: vec![0; params.d * params.w],
            total: 0,
            epoch: 0,
        })
    }

    /// Empty sketch sharing `self`'s parameters, with a different counter width.
    pub fn zeroed_with_bits(&self, counter_bits: u32) -> Self {
        let mut params = self.params();
        params.counter_bits = counter_bits;
        Self {
            params: SketchParamsKey::of(&params),
            hash: self.hash.clone(),
            counts: vec![0; self.counts.len()],
            total: 0,
            epoch: self.epoch,
        }
    }

    pub fn zeroed(&self) -> Self {
        self.zeroed_with_bits(self.params.counter_bits)
    }

    pub fn params(&self) -> SketchParams {
        self.params.params()
    }

    pub fn d(&self) -> usize {
        self.params.d
    }

    pub fn w(&self) -> usize {
        self.params.w
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn hash(&self) -> &HashFamily {
        &self.hash
    }

    pub fn counter_max(&self) -> u64 {
        self.params().counter_max()
    }

    /// Row-major counters.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.counts[i * self.w()..(i + 1) * self.w()]
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.w() + col]
    }

    pub fn is_zero(&self) -> bool {
        self.total == 0 && self.counts.iter().all(|&c| c == 0)
    }

    /// Zero-based column of `id` in every row.
    pub fn columns(&self, id: &FlowId) -> Vec<usize> {
        self.hash.columns(id)
    }

    pub fn same_layout(&self, other: &Sketch) -> bool {
        self.params.d == other.params.d
            && self.params.w == other.params.w
            && self.params.seed == other.params.seed
    }

    /// Adds `c` occurrences of `id`.
    pub fn update(&mut self, id: &FlowId, c: u64) -> Result<(), SketchError> {
        let cols = self.columns(id);
        self.update_columns(&cols, c)
    }

    /// Adds `c` at `cols[i]` of every row `i`. Nothing changes on error.
    pub fn update_columns(&mut self, cols: &[usize], c: u64) -> Result<(), SketchError> {
        if c == 0 {
            return Err(SketchError::ZeroIncrement);
        }
        let w = self.w();
        let max = self.counter_max();
        for (row, &col) in cols.iter().enumerate() {
            let cur = self.counts[row * w + col];
            if cur.checked_add(c).map_or(true, |v| v > max) {
                return Err(SketchError::Overflow { row, col, max });
            }
        }
        let total = self.total.checked_add(c).ok_or(SketchError::TotalOverflow)?;
        for (row, &col) in cols.iter().enumerate() {
            self.counts[row * w + col] += c;
        }
        self.total = total;
        Ok(())
    }

    /// Adds `delta` to one cell without touching the total.
    pub fn add_cell(&mut self, row: usize, col: usize, delta: u64) -> Result<(), SketchError> {
        let max = self.counter_max();
        let idx = row * self.w() + col;
        match self.counts[idx].checked_add(delta) {
            Some(v) if v <= max => {
                self.counts[idx] = v;
                Ok(())
            }
            _ => Err(SketchError::Overflow { row, col, max }),
        }
    }

    pub fn add_total(&mut self, delta: u64) -> Result<(), SketchError> {
        self.total = self
            .total
            .checked_add(delta)
            .ok_or(SketchError::TotalOverflow)?;
        Ok(())
    }

    /// Adds `coeff * other` in place.
    pub fn add_scaled(&mut self, other: &Sketch, coeff: u64) -> Result<(), SketchError> {
        if !self.same_layout(other) {
            return Err(SketchError::ParamMismatch);
        }
        let max = self.counter_max();
        let w = self.w();
        let mut next = self.counts.clone();
        for (idx, (dst, &src)) in next.iter_mut().zip(&other.counts).enumerate() {
            *dst = src
                .checked_mul(coeff)
                .and_then(|v| dst.checked_add(v))
                .filter(|&v| v <= max)
                .ok_or(SketchError::Overflow {
                    row: idx / w,
                    col: idx % w,
                    max,
                })?;
        }
        let total = other
            .total
            .checked_mul(coeff)
            .and_then(|v| self.total.checked_add(v))
            .ok_or(SketchError::TotalOverflow)?;
        self.counts = next;
        self.total = total;
        Ok(())
    }

    pub fn merge_in(&mut self, other: &Sketch) -> Result<(), SketchError> {
        self.add_scaled(other, 1)
    }

    /// Element-wise sum.
    pub fn merge(&self, other: &Sketch) -> Result<Sketch, SketchError> {
        let mut out = self.clone();
        out.merge_in(other)?;
        Ok(out)
    }

    /// `min_i Count[i, h_i(x)]`.
    pub fn query(&self, id: &FlowId) -> u64 {
        let key = id.key();
        let w = self.w();
        (0..self.d())
            .map(|r| self.counts[r * w + self.hash.column_of_key(r, key)])
            .min()
            .unwrap_or(0)
    }

    /// Zeroes all counters and starts a new epoch.
    pub fn reset(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.total = 0;
        self.epoch += 1;
    }

    /// Replaces counters and total; lengths and bounds are checked.
    pub fn set_counts(&mut self, counts: Vec<u64>, total: u64) -> Result<(), SketchError> {
        if counts.len() != self.counts.len() {
            return Err(SketchError::ParamMismatch);
        }
        let max = self.counter_max();
        if let Some(idx) = counts.iter().position(|&c| c > max) {
            return Err(SketchError::Overflow {
                row: idx / self.w(),
                col: idx % self.w(),
                max,
            });
        }
        self.counts = counts;
        self.total = total;
        Ok(())
    }
}

/// Scaled integer form of `sum_j coeffs[j] * sketches[j]`.
///
/// Returns `(cells, total, denom)` where each true value is `cells[i] / denom`.
pub fn combine_scaled(
    coeffs: &[BigRational],
    sketches: &[&Sketch],
) -> Result<(Vec<i128>, i128, i128), SketchError> {
    if coeffs.len() != sketches.len() {
        return Err(SketchError::Arity {
            expected: sketches.len(),
            got: coeffs.len(),
        });
    }
    let first = sketches.first().ok_or(SketchError::Arity {
        expected: 1,
        got: 0,
    })?;
    if sketches.iter().any(|s| !s.same_layout(first)) {
        return Err(SketchError::ParamMismatch);
    }
    let denom = coeffs
        .iter()
        .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
    let nums: Vec<i128> = coeffs
        .iter()
        .map(|c| (c.numer() * (&denom / c.denom())).to_i128())
        .collect::<Option<_>>()
        .ok_or(SketchError::CoefficientRange)?;
    let denom = denom.to_i128().ok_or(SketchError::CoefficientRange)?;

    let mut cells = vec![0i128; first.counts.len()];
    let mut total = 0i128;
    for (&n, s) in nums.iter().zip(sketches) {
        if n == 0 {
            continue;
        }
        for (acc, &c) in cells.iter_mut().zip(&s.counts) {
            *acc = (c as i128)
                .checked_mul(n)
                .and_then(|v| acc.checked_add(v))
                .ok_or(SketchError::CoefficientRange)?;
        }
        total = (s.total as i128)
            .checked_mul(n)
            .and_then(|v| total.checked_add(v))
            .ok_or(SketchError::CoefficientRange)?;
    }
    Ok((cells, total, denom))
}

/// `sum_j coeffs[j] * sketches[j]`, which must be a valid sketch.
///
/// Every cell must come out a non-negative integer within the counter width
/// of `sketches[0]`; otherwise the inputs were not consistent and
/// [`SketchError::InconsistentRecovery`] is returned.
pub fn linear_combine(coeffs: &[BigRational], sketches: &[&Sketch]) -> Result<Sketch, SketchError> {
    linear_combine_with_bits(coeffs, sketches, sketches.first().map_or(64, |s| s.params.counter_bits))
}

pub fn linear_combine_with_bits(
    coeffs: &[BigRational],
    sketches: &[&Sketch],
    counter_bits: u32,
) -> Result<Sketch, SketchError> {
    let (cells, total, denom) = combine_scaled(coeffs, sketches)?;
    let mut out = sketches[0].zeroed_with_bits(counter_bits);
    let max = out.counter_max();
    let w = out.w();
    for (idx, &v) in cells.iter().enumerate() {
        let (q, r) = v.div_rem(&denom);
        if r != 0 || q < 0 || q as u128 > max as u128 {
            return Err(SketchError::InconsistentRecovery {
                row: idx / w,
                col: idx % w,
                value: BigRational::new(v.into(), denom.into()).to_string(),
            });
        }
        out.counts[idx] = q as u64;
    }
    let (q, r) = total.div_rem(&denom);
    out.total = if r == 0 && q >= 0 && q <= u64::MAX as i128 {
        q as u64
    } else {
        return Err(SketchError::InconsistentRecovery {
            row: usize::MAX,
            col: usize::MAX,
            value: BigRational::new(total.into(), denom.into()).to_string(),
        });
    };
    Ok(out)
}

/// Integer coefficient shorthand for [`linear_combine`].
pub fn int_combine(coeffs: &[i64], sketches: &[&Sketch]) -> Result<Sketch, SketchError> {
    let c: Vec<BigRational> = coeffs.iter().map(|&c| BigRational::from_integer(c.into())).collect();
    linear_combine(&c, sketches)
}

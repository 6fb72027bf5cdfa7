//! Splitting a sketch's cells into partitions.
//!
//! `Rows` assigns contiguous row ranges and `Cells` contiguous ranges of
//! row-major cell indices. When `p` does not divide the element count the
//! earlier partitions take one extra element each. Partition ids are
//! zero-based.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RedundancyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    Single,
    Rows,
    Cells,
}

impl fmt::Display for PartitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Single => "single",
            Self::Rows => "rows",
            Self::Cells => "cells",
        })
    }
}

impl FromStr for PartitionKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Self::Single),
            "rows" => Ok(Self::Rows),
            "cells" => Ok(Self::Cells),
            _ => Err(format!("unknown partition kind {s:?}")),
        }
    }
}

/// A partition scheme bound to sketch dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionScheme {
    pub kind: PartitionKind,
    pub p: usize,
    pub d: usize,
    pub w: usize,
}

impl PartitionScheme {
    pub fn new(kind: PartitionKind, p: usize, d: usize, w: usize) -> Result<Self, RedundancyError> {
        let limit = match kind {
            PartitionKind::Single => 1,
            PartitionKind::Rows => d,
            PartitionKind::Cells => d * w,
        };
        let ok = p >= 1 && p <= limit && (kind != PartitionKind::Single || p == 1);
        if !ok || d == 0 || w == 0 {
            return Err(RedundancyError::InvalidPartition { kind, p, d, w });
        }
        Ok(Self { kind, p, d, w })
    }

    pub fn single(d: usize, w: usize) -> Self {
        Self {
            kind: PartitionKind::Single,
            p: 1,
            d,
            w,
        }
    }

    fn units(&self) -> usize {
        match self.kind {
            PartitionKind::Single => 1,
            PartitionKind::Rows => self.d,
            PartitionKind::Cells => self.d * self.w,
        }
    }

    /// Partition of the zero-based cell `(row, col)`.
    pub fn partition_of(&self, row: usize, col: usize) -> usize {
        match self.kind {
            PartitionKind::Single => 0,
            PartitionKind::Rows => split_index(self.d, self.p, row),
            PartitionKind::Cells => split_index(self.d * self.w, self.p, row * self.w + col),
        }
    }

    pub fn member(&self, row: usize, col: usize, partition: usize) -> bool {
        self.partition_of(row, col) == partition
    }

    /// Row-major cell indices of `partition`.
    pub fn cell_range(&self, partition: usize) -> Range<usize> {
        let r = split_range(self.units(), self.p, partition);
        match self.kind {
            PartitionKind::Single => 0..self.d * self.w,
            PartitionKind::Rows => r.start * self.w..r.end * self.w,
            PartitionKind::Cells => r,
        }
    }

    /// Rows containing at least one cell of `partition`.
    pub fn rows_of(&self, partition: usize) -> Range<usize> {
        let cells = self.cell_range(partition);
        if cells.is_empty() {
            return 0..0;
        }
        cells.start / self.w..(cells.end - 1) / self.w + 1
    }

    /// Columns of `row` that fall in `partition`.
    pub fn cols_in_row(&self, row: usize, partition: usize) -> Range<usize> {
        let cells = self.cell_range(partition);
        let lo = cells.start.max(row * self.w);
        let hi = cells.end.min((row + 1) * self.w);
        if lo >= hi {
            0..0
        } else {
            lo - row * self.w..hi - row * self.w
        }
    }

    /// Per-cell partition mask: `true` where the cell is in `partition`.
    pub fn mask(&self, partition: usize) -> Vec<bool> {
        let r = self.cell_range(partition);
        (0..self.d * self.w).map(|i| r.contains(&i)).collect()
    }
}

/// Range of element indices of part `i` when `n` elements split into `p`.
pub fn split_range(n: usize, p: usize, i: usize) -> Range<usize> {
    let base = n / p;
    let extra = n % p;
    let start = i * base + i.min(extra);
    let len = base + usize::from(i < extra);
    start..start + len
}

pub fn split_index(n: usize, p: usize, idx: usize) -> usize {
    let base = n / p;
    let extra = n % p;
    let big = extra * (base + 1);
    if idx < big {
        idx / (base + 1)
    } else {
        extra + (idx - big) / base
    }
}

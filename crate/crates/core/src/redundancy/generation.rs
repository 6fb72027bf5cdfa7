//! Generation matrices for the dedicated and distributed strategies.

use serde::{Deserialize, Serialize};

use super::matrix::{mr_generate, RedundantMatrix};
use super::RedundancyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Dedicated,
    Distributed,
}

/// Redundant rows and who holds them.
///
/// `logical[r]` is the coefficient row of redundant vector `r` as a
/// combination of all data sketches; `stored[r]` is what its holder actually
/// sums. They differ only in the distributed strategy, where the holder's own
/// coefficient is zeroed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationMatrix {
    pub strategy: Strategy,
    pub k: usize,
    pub f: usize,
    pub logical: Vec<Vec<i64>>,
    pub stored: Vec<Vec<i64>>,
    pub holders: Vec<usize>,
}

impl GenerationMatrix {
    /// Identity on top of `MR_f`; redundant vector `r` lives on node `k + r`.
    pub fn dedicated(k: usize, f: usize) -> Result<Self, RedundancyError> {
        let mr = mr_generate(k, f)?;
        Ok(Self {
            strategy: Strategy::Dedicated,
            k,
            f,
            logical: mr.rows.clone(),
            stored: mr.rows,
            holders: (k..k + f).collect(),
        })
    }

    /// Node `i` holds the displaced row of `MR_k`, without its own term.
    pub fn distributed(k: usize) -> Result<Self, RedundancyError> {
        if k < 2 {
            return Err(RedundancyError::InvalidK(k));
        }
        let logical = circular_displacement(&mr_generate(k, k)?);
        let stored = logical
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut r = row.clone();
                r[i] = 0;
                r
            })
            .collect();
        Ok(Self {
            strategy: Strategy::Distributed,
            k,
            f: k / 2,
            logical,
            stored,
            holders: (0..k).collect(),
        })
    }

    /// The stacked `(k + f) x k` matrix (dedicated) or `2k x k` (distributed,
    /// logical rows).
    pub fn full(&self) -> Vec<Vec<i64>> {
        let mut g: Vec<Vec<i64>> = (0..self.k)
            .map(|i| (0..self.k).map(|j| i64::from(i == j)).collect())
            .collect();
        g.extend(self.logical.iter().cloned());
        g
    }

    /// Concurrent failures the strategy is designed for.
    pub fn tolerance(&self) -> usize {
        match self.strategy {
            Strategy::Dedicated => self.f,
            Strategy::Distributed => self.k / 2,
        }
    }
}

/// Row of `MR_k` assigned to node `i` is row `(i + floor(k/2)) mod k`.
pub fn circular_displacement(mr: &RedundantMatrix) -> Vec<Vec<i64>> {
    let k = mr.k;
    (0..mr.rows.len())
        .map(|i| mr.rows[(i + k / 2) % mr.rows.len()].clone())
        .collect()
}

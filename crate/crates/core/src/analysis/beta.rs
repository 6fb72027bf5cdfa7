use std::collections::HashSet;

use num_rational::Rational64;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::sketch::FlowId;

pub const PERCENTILES: [u8; 5] = [5, 25, 50, 75, 95];

/// Per-batch frequency-per-flow of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaStats {
    pub trace: String,
    pub capacity: usize,
    pub items: usize,
    /// `(B_i, b_i)` for every batch, the partial tail included.
    pub batches: Vec<(usize, usize)>,
    /// `B / b_i` over full batches.
    pub betas: Vec<Rational64>,
    pub beta_avg: f64,
    /// Nearest-rank percentiles at [`PERCENTILES`].
    pub percentiles: Vec<(u8, Rational64)>,
}

impl BetaStats {
    pub fn percentile(&self, p: u8) -> Option<Rational64> {
        self.percentiles.iter().find(|e| e.0 == p).map(|e| e.1)
    }

    /// Percent of full batches with more than `B / beta_hat` flows.
    pub fn early_pct(&self, beta_hat: Rational64) -> f64 {
        let n = self.betas.iter().filter(|&&b| b < beta_hat).count();
        100.0 * n as f64 / self.betas.len().max(1) as f64
    }

    /// Builds stats from precomputed full-batch betas.
    pub fn from_betas(trace: &str, capacity: usize, betas: Vec<Rational64>) -> Result<Self, AnalysisError> {
        if betas.is_empty() {
            return Err(AnalysisError::TraceTooShort { items: 0, capacity });
        }
        let beta_avg = betas.iter().map(|b| b.to_f64().unwrap_or(0.0)).sum::<f64>() / betas.len() as f64;
        let mut sorted = betas.clone();
        sorted.sort();
        let percentiles = PERCENTILES.iter().map(|&p| (p, nearest_rank(&sorted, p))).collect();
        Ok(Self {
            trace: trace.to_string(),
            capacity,
            items: capacity * betas.len(),
            batches: Vec::new(),
            betas,
            beta_avg,
            percentiles,
        })
    }
}

/// Value at rank `ceil(p/100 * n)` of sorted data.
pub fn nearest_rank<T: Copy>(sorted: &[T], p: u8) -> T {
    let n = sorted.len();
    let rank = ((p as usize * n + 99) / 100).clamp(1, n);
    sorted[rank - 1]
}

pub fn beta_stats(trace_name: &str, trace: &[FlowId], capacity: usize) -> Result<BetaStats, AnalysisError> {
    if capacity == 0 {
        return Err(AnalysisError::Params("B must be at least 1".into()));
    }
    if trace.is_empty() {
        return Err(AnalysisError::EmptyTrace);
    }
    let batches: Vec<(usize, usize)> = trace
        .chunks(capacity)
        .map(|c| (c.len(), c.iter().collect::<HashSet<_>>().len()))
        .collect();
    let betas: Vec<Rational64> = batches
        .iter()
        .filter(|b| b.0 == capacity)
        .map(|&(n, b)| Rational64::new(n as i64, b as i64))
        .collect();
    if betas.is_empty() {
        return Err(AnalysisError::TraceTooShort {
            items: trace.len(),
            capacity,
        });
    }
    let mut s = BetaStats::from_betas(trace_name, capacity, betas)?;
    s.items = trace.len();
    s.batches = batches;
    Ok(s)
}

/// `(bits_mid + bits_B) / bits_mid`.
pub fn theta(bits_mid: u32, bits_b: u32) -> Rational64 {
    Rational64::new((bits_mid + bits_b) as i64, bits_mid.max(1) as i64)
}

/// `1 + bits_B / bits_w`.
pub fn theta_prime(bits_w: u32, bits_b: u32) -> Rational64 {
    Rational64::from_integer(1) + Rational64::new(bits_b as i64, bits_w.max(1) as i64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "choice", rename_all = "snake_case")]
pub enum Recommendation {
    /// Flows repeat too rarely for a table to pay off.
    ItemBuff,
    /// Small batches: an ordinary table sized `2B`.
    StandardTable { capacity: usize },
    /// Compact table sized from `beta_hat`; `space_efficient` when it also
    /// beats a buffer in memory.
    FlwHash {
        percentile: u8,
        beta_hat: Rational64,
        space_efficient: bool,
        early_pct: f64,
    },
}

fn at_most(a: Rational64, b: f64) -> bool {
    a.to_f64().unwrap_or(f64::NAN) <= b
}

/// Traffic-efficient: `beta_hat <= beta_avg` and `beta_hat >= theta`.
pub fn traffic_efficient(beta_hat: Rational64, beta_avg: f64, theta: Rational64) -> bool {
    at_most(beta_hat, beta_avg) && beta_hat >= theta
}

/// Space-efficient: `beta_hat > theta / alpha`.
pub fn space_efficient(beta_hat: Rational64, theta: Rational64, alpha: f64) -> bool {
    beta_hat.to_f64().unwrap_or(0.0) * alpha > theta.to_f64().unwrap_or(f64::INFINITY)
}

pub fn recommend_representation(stats: &BetaStats, theta: Rational64, alpha: f64) -> Recommendation {
    if stats.beta_avg < theta.to_f64().unwrap_or(f64::INFINITY) {
        return Recommendation::ItemBuff;
    }
    if stats.capacity <= 100 {
        return Recommendation::StandardTable {
            capacity: 2 * stats.capacity,
        };
    }
    let pick = |need_space: bool| {
        stats.percentiles.iter().find(|&&(_, b)| {
            traffic_efficient(b, stats.beta_avg, theta) && (!need_space || space_efficient(b, theta, alpha))
        })
    };
    if let Some(&(p, b)) = pick(true) {
        return Recommendation::FlwHash {
            percentile: p,
            beta_hat: b,
            space_efficient: true,
            early_pct: stats.early_pct(b),
        };
    }
    if let Some(&(p, b)) = pick(false) {
        return Recommendation::FlwHash {
            percentile: p,
            beta_hat: b,
            space_efficient: false,
            early_pct: stats.early_pct(b),
        };
    }
    Recommendation::ItemBuff
}

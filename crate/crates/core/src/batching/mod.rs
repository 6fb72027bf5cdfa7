//! Batched incremental shares.
//!
//! A data node records the items of a cycle in one of five batch
//! representations ([`RepKind`]), encodes them into [`Share`]s for the nodes
//! covering it, and merges the batch into its own sketch at share time.
//! Redundant nodes decode shares and add the changes to their sum-sketches.

pub mod cost;
pub mod framework;
pub mod send;
pub mod table;
pub mod wire;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cost::{
    cntbuff_beats_itembuff, cost_model, full_beats_cntbuff, itembuff_beats_full, CostEstimate,
    CostParams,
};
pub use framework::{Batch, LocalOps, SmartCms, UpdateOutcome};
pub use send::{
    alive_encode, apply_share, covering_holders, decode_apply, encode_batch, full_share_encode,
    payload_bits, targets, ApplyStats, EncodeStats, Outgoing, ReceiverState,
};
pub use wire::{Header, Payload, HEADER_LEN, PolicyTag, Share, WireContext, WireWidths, PARTITION_ALL, WIRE_VERSION};

use crate::redundancy::RedundancyError;
use crate::sketch::{ceil_log2, SketchError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepKind {
    ItemBuff,
    CntBuff,
    FlwHash,
    CntHash,
    CntDiff,
}

impl RepKind {
    pub const ALL: [RepKind; 5] = [
        Self::ItemBuff,
        Self::CntBuff,
        Self::FlwHash,
        Self::CntHash,
        Self::CntDiff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ItemBuff => "item_buff",
            Self::CntBuff => "cnt_buff",
            Self::FlwHash => "flw_hash",
            Self::CntHash => "cnt_hash",
            Self::CntDiff => "cnt_diff",
        }
    }

    pub fn is_item_based(self) -> bool {
        matches!(self, Self::ItemBuff | Self::FlwHash)
    }

    /// Wire tag; 0 is reserved for full shares and alive messages.
    pub fn tag(self) -> u8 {
        match self {
            Self::ItemBuff => 1,
            Self::CntBuff => 2,
            Self::FlwHash => 3,
            Self::CntHash => 4,
            Self::CntDiff => 5,
        }
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.tag() == t)
    }
}

impl fmt::Display for RepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RepKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown representation {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Full,
    Incremental,
}

fn default_alpha() -> f64 {
    0.8
}

fn default_beta_hat() -> f64 {
    1.0
}

fn default_bits_n() -> u32 {
    32
}

fn default_bits_mid() -> u32 {
    64
}

/// Batch sizing and field widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    /// Items per cycle, `B`.
    pub capacity: usize,
    pub policy: Policy,
    pub representation: RepKind,
    #[serde(default = "default_bits_mid")]
    pub bits_mid: u32,
    #[serde(default = "default_bits_n")]
    pub bits_n: u32,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta_hat")]
    pub beta_hat: f64,
    /// Per-node `B_l`, defaulting to `capacity`.
    #[serde(default)]
    pub local_capacity: Option<Vec<usize>>,
}

impl BatchConfig {
    pub fn new(capacity: usize, policy: Policy, representation: RepKind) -> Self {
        Self {
            capacity,
            policy,
            representation,
            bits_mid: default_bits_mid(),
            bits_n: default_bits_n(),
            alpha: default_alpha(),
            beta_hat: default_beta_hat(),
            local_capacity: None,
        }
    }

    pub fn validate(&self) -> Result<(), BatchError> {
        let bad = |what: &str| Err(BatchError::Config(what.to_string()));
        if self.capacity == 0 {
            return bad("capacity must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must be in (0, 1]");
        }
        if !(self.beta_hat >= 1.0) {
            return bad("beta_hat must be at least 1");
        }
        if self.bits_mid % 8 != 0 || !(32..=256).contains(&self.bits_mid) {
            return bad("bits_mid must be a multiple of 8 in 32..=256");
        }
        if self.bits_n == 0 || self.bits_n > 64 {
            return bad("bits_n must be in 1..=64");
        }
        if let Some(l) = &self.local_capacity {
            if l.iter().any(|&b| b == 0 || b > self.capacity) {
                return bad("local capacities must be in 1..=capacity");
            }
        }
        Ok(())
    }

    /// `ceil(log2(B + 1))`.
    pub fn bits_b(&self) -> u32 {
        ceil_log2(self.capacity as u64 + 1)
    }

    /// Estimated flows per batch, `ceil(B / beta_hat)`.
    pub fn b_hat(&self) -> usize {
        ceil_ratio(self.capacity as f64, self.beta_hat).clamp(1, self.capacity)
    }

    /// `ceil(b_hat / alpha)`.
    pub fn buckets(&self) -> usize {
        ceil_ratio(self.b_hat() as f64, self.alpha)
    }

    pub fn local(&self, node: usize) -> usize {
        self.local_capacity
            .as_ref()
            .and_then(|l| l.get(node).copied())
            .unwrap_or(self.capacity)
    }
}

/// `ceil(a / b)`, snapping quotients within 1e-9 of an integer.
pub fn ceil_ratio(a: f64, b: f64) -> usize {
    let x = a / b;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BatchError {
    #[error("invalid batch config: {0}")]
    Config(String),
    #[error("batch already holds {0} items")]
    CapacityExceeded(usize),
    #[error("malformed share: {0}")]
    Malformed(String),
    #[error("unsupported wire version {0}")]
    Version(u8),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Redundancy(#[from] RedundancyError),
}

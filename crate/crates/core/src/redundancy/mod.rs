//! Redundancy for linear sketches.
//!
//! Redundant nodes keep integer combinations of data sketches, either whole
//! (dedicated and distributed strategies) or per partition (coverage
//! mappings). Recovery inverts the surviving combinations exactly.

pub mod coverage;
pub mod generation;
pub mod linalg;
pub mod matrix;
pub mod partition;
pub mod recovery;

use serde::Serialize;
use thiserror::Error;

pub use coverage::{build_coverage, mapping_stats, CoverVector, CoverageMapping, MappingKind, MappingStats};
pub use generation::{circular_displacement, GenerationMatrix, Strategy};
pub use matrix::{combinations, mr_generate, pascal_generate, spans_check, subset_determinants, RedundantMatrix};
pub use partition::{PartitionKind, PartitionScheme};
pub use recovery::{
    apply_plan, default_label, format_terms, plan_recovery, stored_sums, NodeRecovery, PartitionPlan, Recovered,
    RecoveryPlan, RecoveryStatus, SemiBound, Source, Term,
};

use crate::sketch::SketchError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RedundancyError {
    #[error("k must be in 1..={max}, got {0}", max = matrix::MAX_K)]
    InvalidK(usize),
    #[error("f must be in 1..=k (k={k}), got {f}")]
    InvalidF { k: usize, f: usize },
    #[error("invalid {kind} partitioning p={p} for a {d}x{w} sketch")]
    InvalidPartition {
        kind: PartitionKind,
        p: usize,
        d: usize,
        w: usize,
    },
    #[error("{kind} mapping needs {needs} partitions, scheme has {got}")]
    PartitionCount {
        kind: MappingKind,
        needs: usize,
        got: usize,
    },
    #[error("{kind} mapping is not defined for k={k}, f={f}")]
    Unsupported { kind: MappingKind, k: usize, f: usize },
    #[error("data node {node} partition {partition} is not covered")]
    Uncovered { node: usize, partition: usize },
    #[error("recovery source {0:?} is unavailable")]
    MissingSource(Source),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

/// JSON with object keys in sorted order.
pub fn to_canonical_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&v)
}

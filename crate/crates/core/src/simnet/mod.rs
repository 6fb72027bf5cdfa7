//! Deterministic cycle-based simulation.
//!
//! `k` data nodes ingest a sharded trace and share their batches with the
//! nodes covering them. Crash failures erase a node's state part way through
//! a cycle; at the cycle boundary the failed nodes are recovered from the
//! surviving sketches and the result is checked against the state the node
//! had last shared.

mod report;
mod world;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{CycleReport, EncodeRecord, FailureOutcome, NodeOps, SimReport};
pub use world::World;

use crate::batching::{BatchConfig, BatchError};
use crate::redundancy::{build_coverage, CoverageMapping, MappingKind, PartitionKind, PartitionScheme, RedundancyError};
use crate::sketch::{FlowId, SketchError, SketchParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error(transparent)]
    Redundancy(#[from] RedundancyError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShardPolicy {
    #[default]
    Hash,
    RoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SketchSpec {
    Dims { d: usize, w: usize },
    Accuracy { epsilon: f64, delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub kind: PartitionKind,
    pub p: usize,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            kind: PartitionKind::Single,
            p: 1,
        }
    }
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub k: usize,
    #[serde(default = "one")]
    pub f: usize,
    pub mapping: MappingKind,
    #[serde(default)]
    pub partition: PartitionSpec,
    pub sketch: SketchSpec,
    pub batch: BatchConfig,
    /// Cycle count `q`.
    pub cycles: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub shard: ShardPolicy,
    /// Check every sum-sketch against the data sketches after each cycle.
    #[serde(default = "yes")]
    pub verify: bool,
}

impl SimConfig {
    pub fn sketch_params(&self) -> Result<SketchParams, SimError> {
        Ok(match self.sketch {
            SketchSpec::Dims { d, w } => SketchParams::with_dims(d, w, self.seed)?,
            SketchSpec::Accuracy { epsilon, delta } => SketchParams::from_accuracy(epsilon, delta, self.seed)?,
        })
    }

    pub fn scheme(&self) -> Result<PartitionScheme, SimError> {
        let p = self.sketch_params()?;
        Ok(PartitionScheme::new(self.partition.kind, self.partition.p, p.d, p.w)?)
    }

    pub fn mapping(&self) -> Result<CoverageMapping, SimError> {
        Ok(build_coverage(self.mapping, self.k, self.f)?.for_scheme(&self.scheme()?)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.k == 0 || self.k > u16::MAX as usize {
            return Err(SimError::Config("k must be in 1..=65535".into()));
        }
        if self.cycles == 0 {
            return Err(SimError::Config("cycles must be at least 1".into()));
        }
        self.batch.validate()?;
        self.mapping()?;
        Ok(())
    }
}

/// One injected crash.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub node: usize,
    pub cycle: usize,
    /// Fraction of the node's items of that cycle processed before the crash.
    #[serde(default)]
    pub point: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureScript {
    pub failures: Vec<Failure>,
}

impl FailureScript {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self, cfg: &SimConfig, nodes: usize) -> Result<(), SimError> {
        let mut seen = std::collections::BTreeSet::new();
        for f in &self.failures {
            if f.node >= nodes {
                return Err(SimError::Config(format!("failure of unknown node {}", f.node)));
            }
            if f.cycle >= cfg.cycles {
                return Err(SimError::Config(format!("failure cycle {} >= {}", f.cycle, cfg.cycles)));
            }
            if !(0.0..=1.0).contains(&f.point) {
                return Err(SimError::Config(format!("failure point {} outside [0, 1]", f.point)));
            }
            if !seen.insert((f.node, f.cycle)) {
                return Err(SimError::Config(format!("node {} fails twice in cycle {}", f.node, f.cycle)));
            }
        }
        Ok(())
    }
}

/// Runs the whole trace and returns the report.
pub fn run(cfg: &SimConfig, trace: &[FlowId], script: &FailureScript) -> Result<SimReport, SimError> {
    let mut world = World::new(cfg.clone(), trace, script.clone())?;
    while !world.finished() {
        world.step_cycle()?;
        world.detect_and_recover()?;
    }
    Ok(world.into_report())
}

#[cfg(test)]
mod tests;

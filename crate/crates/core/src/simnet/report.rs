use serde::{Deserialize, Serialize};

use super::SimConfig;
use crate::batching::RepKind;
use crate::redundancy::RecoveryStatus;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle: usize,
    pub items: u64,
    pub traffic_bits: u64,
    pub wire_bytes: u64,
    pub shares: u64,
    pub alive_shares: u64,
    pub early_shares: u64,
    pub membership_tests: u64,
    pub remote_hashes: u64,
    pub remote_membership_tests: u64,
    pub failures: Vec<usize>,
    pub sum_digest: String,
    pub data_digest: String,
    /// Every sum-sketch equals its combination of data sketches.
    pub consistent: Option<bool>,
}

/// One sender-side encode, for checking the cost model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeRecord {
    pub sender: usize,
    pub cycle: usize,
    pub early: bool,
    /// `None` for full shares.
    pub rep: Option<RepKind>,
    pub fill: u64,
    pub flows: u64,
    pub counters: u64,
    pub r_c: u64,
    /// Shares sent per partition.
    pub copies: u64,
    pub traffic_bits: u64,
    pub membership_tests: u64,
    pub remote_hashes: u64,
    pub remote_membership_tests: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureOutcome {
    pub node: usize,
    pub cycle: usize,
    pub point: f64,
    /// Items ingested but not yet shared when the node crashed.
    pub unshared_items: u64,
    /// Data recovery result; `None` for nodes holding only redundancy.
    pub status: Option<RecoveryStatus>,
    /// Exact: recovered equals the last shared sketch. Semi: dominates it.
    pub verified: bool,
    pub rebuilt_vectors: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeOps {
    pub cms_hashes: u64,
    pub table_hashes: u64,
    pub remote_hashes: u64,
    pub remote_membership_tests: u64,
    pub membership_tests: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub items: u64,
    pub dropped_items: u64,
    pub cycles: Vec<CycleReport>,
    pub failures: Vec<FailureOutcome>,
    pub lost: Vec<usize>,
    pub node_ops: Vec<NodeOps>,
    pub encodes: Vec<EncodeRecord>,
    pub final_sum_digest: String,
    pub final_data_digest: String,
}

impl SimReport {
    pub fn total_traffic_bits(&self) -> u64 {
        self.cycles.iter().map(|c| c.traffic_bits).sum()
    }

    /// All checked cycles consistent and every attempted recovery verified.
    ///
    /// Unrecoverable nodes are reported through [`Self::lost`] instead.
    pub fn verified(&self) -> bool {
        self.cycles.iter().all(|c| c.consistent != Some(false))
            && self
                .failures
                .iter()
                .all(|f| f.verified || f.status == Some(RecoveryStatus::Unrecoverable))
    }

    pub fn any_unrecoverable(&self) -> bool {
        !self.lost.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per cycle.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "cycle",
            "items",
            "traffic_bits",
            "wire_bytes",
            "shares",
            "alive_shares",
            "early_shares",
            "membership_tests",
            "remote_hashes",
            "remote_membership_tests",
            "failures",
            "consistent",
            "sum_digest",
        ])
        .expect("in-memory csv");
        for c in &self.cycles {
            let fails: Vec<String> = c.failures.iter().map(ToString::to_string).collect();
            w.write_record([
                c.cycle.to_string(),
                c.items.to_string(),
                c.traffic_bits.to_string(),
                c.wire_bytes.to_string(),
                c.shares.to_string(),
                c.alive_shares.to_string(),
                c.early_shares.to_string(),
                c.membership_tests.to_string(),
                c.remote_hashes.to_string(),
                c.remote_membership_tests.to_string(),
                fails.join(";"),
                c.consistent.map_or(String::new(), |b| b.to_string()),
                c.sum_digest.clone(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

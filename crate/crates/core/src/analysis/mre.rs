use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::sketch::{FlowId, Sketch, SketchParams};

/// Estimation error of a recovered backup after a mid-batch failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MreReport {
    pub capacity: usize,
    pub fail_at: f64,
    pub point: f64,
    pub failed_batch: usize,
    pub lost_items: usize,
    pub flows: usize,
    /// `c^(t) + B` against the true counts.
    pub mre_plus_b_truth: f64,
    /// `c^(t)` against the true counts.
    pub mre_backup_truth: f64,
    /// `c^(t) + B` against the estimator of a node that did not fail.
    pub mre_plus_b_nonfailed: f64,
    /// `c^(t)` against the estimator of a node that did not fail.
    pub mre_backup_nonfailed: f64,
    /// Flows with `c_x > c^(t) + B`.
    pub one_sided_violations: usize,
    /// Flows with `c^(t) < c_x`.
    pub backup_underestimates: usize,
}

fn mean_rel(pairs: impl Iterator<Item = (u64, u64)>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (est, reference) in pairs {
        sum += (est as f64 - reference as f64).abs() / reference as f64;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Emulates the failure of batch `floor(fail_at * batches)` after
/// `floor(point * B)` of its items.
pub fn mre_experiment(
    trace: &[FlowId],
    capacity: usize,
    params: SketchParams,
    fail_at: f64,
    point: f64,
) -> Result<MreReport, AnalysisError> {
    if capacity == 0 {
        return Err(AnalysisError::Params("B must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&fail_at) || !(0.0..=1.0).contains(&point) {
        return Err(AnalysisError::Params("fractions must be in [0, 1]".into()));
    }
    let batches = trace.len() / capacity;
    if batches == 0 {
        return Err(AnalysisError::TraceTooShort {
            items: trace.len(),
            capacity,
        });
    }
    let failed = ((fail_at * batches as f64).floor() as usize).min(batches - 1);
    let lost = ((point * capacity as f64).floor() as usize).min(capacity);
    let start = failed * capacity;
    let params = params.with_counter_bits(64);
    let mut backup = Sketch::new(params)?;
    let mut truth: HashMap<FlowId, u64> = HashMap::new();
    for x in &trace[..start] {
        backup.update(x, 1)?;
        *truth.entry(*x).or_default() += 1;
    }
    let mut diff = backup.zeroed();
    for x in &trace[start..start + lost] {
        diff.update(x, 1)?;
        *truth.entry(*x).or_default() += 1;
    }
    let live = backup.merge(&diff)?;
    let b = capacity as u64;
    let mut flows: Vec<(&FlowId, &u64)> = truth.iter().collect();
    flows.sort();
    let rows: Vec<(u64, u64, u64)> = flows
        .iter()
        .map(|(x, &c)| (backup.query(x), live.query(x), c))
        .collect();
    Ok(MreReport {
        capacity,
        fail_at,
        point,
        failed_batch: failed,
        lost_items: lost,
        flows: rows.len(),
        mre_plus_b_truth: mean_rel(rows.iter().map(|&(e, _, c)| (e + b, c))),
        mre_backup_truth: mean_rel(rows.iter().map(|&(e, _, c)| (e, c))),
        mre_plus_b_nonfailed: mean_rel(rows.iter().map(|&(e, l, _)| (e + b, l))),
        mre_backup_nonfailed: mean_rel(rows.iter().map(|&(e, l, _)| (e, l))),
        one_sided_violations: rows.iter().filter(|&&(e, _, c)| c > e + b).count(),
        backup_underestimates: rows.iter().filter(|&&(e, _, c)| e < c).count(),
    })
}

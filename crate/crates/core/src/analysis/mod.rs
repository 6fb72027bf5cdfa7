//! Trace measurements: per-batch frequency-per-flow, representation
//! recommendations, and estimation error after recovering a backup.

mod beta;
mod mre;

use thiserror::Error;

pub use beta::{
    beta_stats, nearest_rank, recommend_representation, space_efficient, theta, theta_prime, traffic_efficient,
    BetaStats, Recommendation, PERCENTILES,
};
pub use mre::{mre_experiment, MreReport};

use crate::sketch::SketchError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("trace of {items} items holds no full batch of {capacity}")]
    TraceTooShort { items: usize, capacity: usize },
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

/// Columns: `trace,B,row,batch,items,flows,beta,p5,p25,p50,p75,p95`.
///
/// One `batch` row per batch (the partial tail has an empty `beta`), then a
/// `summary` row with `beta_avg` and the percentiles.
pub fn beta_csv(stats: &[BetaStats]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["trace", "B", "row", "batch", "items", "flows", "beta"];
    let pcols: Vec<String> = PERCENTILES.iter().map(|p| format!("p{p}")).collect();
    head.extend(pcols.iter().map(String::as_str));
    w.write_record(&head).expect("in-memory csv");
    for s in stats {
        for (i, &(n, b)) in s.batches.iter().enumerate() {
            let beta = if n == s.capacity {
                format!("{:.6}", n as f64 / b as f64)
            } else {
                String::new()
            };
            let mut row = vec![
                s.trace.clone(),
                s.capacity.to_string(),
                "batch".into(),
                i.to_string(),
                n.to_string(),
                b.to_string(),
                beta,
            ];
            row.extend(PERCENTILES.iter().map(|_| String::new()));
            w.write_record(&row).expect("in-memory csv");
        }
        let mut row = vec![
            s.trace.clone(),
            s.capacity.to_string(),
            "summary".into(),
            String::new(),
            s.items.to_string(),
            String::new(),
            format!("{:.6}", s.beta_avg),
        ];
        row.extend(s.percentiles.iter().map(|(_, v)| format!("{:.6}", *v.numer() as f64 / *v.denom() as f64)));
        w.write_record(&row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// One row per configuration.
pub fn mre_csv(reports: &[MreReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "B",
        "fail_at",
        "point",
        "failed_batch",
        "lost_items",
        "flows",
        "mre_plus_b_truth",
        "mre_backup_truth",
        "mre_plus_b_nonfailed",
        "mre_backup_nonfailed",
        "one_sided_violations",
        "backup_underestimates",
    ])
    .expect("in-memory csv");
    for r in reports {
        w.write_record([
            r.capacity.to_string(),
            r.fail_at.to_string(),
            r.point.to_string(),
            r.failed_batch.to_string(),
            r.lost_items.to_string(),
            r.flows.to_string(),
            format!("{:.6}", r.mre_plus_b_truth),
            format!("{:.6}", r.mre_backup_truth),
            format!("{:.6}", r.mre_plus_b_nonfailed),
            format!("{:.6}", r.mre_backup_nonfailed),
            r.one_sided_violations.to_string(),
            r.backup_underestimates.to_string(),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

#[cfg(test)]
mod tests {
    use num_rational::Rational64;
    use proptest::prelude::*;

    use super::*;
    use crate::sketch::{FlowId, SketchParams};
    use crate::trace::zipf_trace;

    fn id(v: u64) -> FlowId {
        FlowId::from_u64(v, 64).unwrap()
    }

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn beta_basics() {
        let s = beta_stats("t", &[id(1), id(1), id(2)], 3).unwrap();
        assert_eq!(s.betas, vec![r(3, 2)]);
        assert_eq!(s.beta_avg, 1.5);
        let distinct: Vec<FlowId> = (0..100).map(id).collect();
        assert!(beta_stats("d", &distinct, 10).unwrap().betas.iter().all(|&b| b == r(1, 1)));
        let same = vec![id(4); 95];
        let s = beta_stats("s", &same, 10).unwrap();
        assert!(s.betas.iter().all(|&b| b == r(10, 1)));
        assert_eq!(s.batches.last(), Some(&(5, 1)));
        assert_eq!(beta_stats("e", &[], 3), Err(AnalysisError::EmptyTrace));
        assert!(matches!(beta_stats("x", &[id(1)], 3), Err(AnalysisError::TraceTooShort { .. })));
    }

    #[test]
    fn thetas() {
        assert_eq!(theta(64, 16), r(5, 4));
        assert_eq!(theta(80, 16), r(6, 5));
        assert_eq!(theta_prime(16, 8), r(3, 2));
    }

    #[test]
    fn nearest_rank_definition() {
        let v: Vec<u32> = (1..=20).collect();
        assert_eq!(nearest_rank(&v, 5), 1);
        assert_eq!(nearest_rank(&v, 25), 5);
        assert_eq!(nearest_rank(&v, 50), 10);
        assert_eq!(nearest_rank(&v, 95), 19);
        assert_eq!(nearest_rank(&[7u32], 5), 7);
    }

    #[test]
    fn mre_point_zero_and_one_sided() {
        let t = zipf_trace(2_000, 30_000, 1.0, 64, 4).unwrap();
        let p = SketchParams::from_accuracy(1e-3, 1e-2, 1).unwrap();
        let z = mre_experiment(&t, 500, p, 0.5, 0.0).unwrap();
        assert_eq!(z.mre_backup_nonfailed, 0.0);
        assert_eq!(z.lost_items, 0);
        for point in [0.1, 0.5, 0.9] {
            let m = mre_experiment(&t, 500, p, 0.5, point).unwrap();
            assert_eq!(m.one_sided_violations, 0);
            assert!(m.mre_plus_b_nonfailed > m.mre_backup_nonfailed);
        }
    }

    #[test]
    fn csv_shapes() {
        let s = beta_stats("t", &(0..25).map(|v| id(v % 4)).collect::<Vec<_>>(), 10).unwrap();
        let out = beta_csv(&[s]);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 1 + 3 + 1);
        assert!(lines[0].starts_with("trace,B,row,batch,items,flows,beta,p5"));
        assert!(lines[4].contains(",summary,"));
    }

    proptest! {
        #[test]
        fn composition(items in prop::collection::vec(0u64..40, 1..400), b in 1usize..50) {
            let t: Vec<FlowId> = items.iter().map(|&v| id(v)).collect();
            if let Ok(s) = beta_stats("p", &t, b) {
                prop_assert_eq!(s.batches.iter().map(|x| x.0).sum::<usize>(), t.len());
                let n = items.iter().collect::<std::collections::HashSet<_>>().len();
                prop_assert!(s.batches.iter().map(|x| x.1).sum::<usize>() >= n);
                let ps: Vec<Rational64> = s.percentiles.iter().map(|p| p.1).collect();
                prop_assert!(ps.windows(2).all(|w| w[0] <= w[1]));
                prop_assert!(s.betas.iter().all(|&x| x >= r(1, 1) && x <= r(b as i64, 1)));
            }
        }

        #[test]
        fn alpha_monotone(betas in prop::collection::vec((1i64..50, 1i64..10), 1..30), a1 in 0.1f64..1.0, bump in 0.0f64..0.5) {
            let betas: Vec<Rational64> = betas.into_iter().map(|(n, d)| r(n.max(d), d)).collect();
            let s = BetaStats::from_betas("f", 1000, betas).unwrap();
            let a2 = (a1 + bump).min(1.0);
            let th = theta(64, 10);
            for &(_, b) in &s.percentiles {
                if space_efficient(b, th, a1) {
                    prop_assert!(space_efficient(b, th, a2));
                }
            }
        }
    }
}

use super::*;
use crate::batching::{Policy, RepKind};
use crate::redundancy::RecoveryStatus;
use crate::trace::zipf_trace;

fn cfg(mapping: MappingKind, k: usize, f: usize, part: (PartitionKind, usize), policy: Policy, rep: RepKind) -> SimConfig {
    SimConfig {
        k,
        f,
        mapping,
        partition: PartitionSpec { kind: part.0, p: part.1 },
        sketch: SketchSpec::Dims { d: 4, w: 61 },
        batch: BatchConfig::new(40, policy, rep),
        cycles: 12,
        seed: 7,
        shard: ShardPolicy::Hash,
        verify: true,
    }
}

fn trace() -> Vec<FlowId> {
    zipf_trace(300, 2_000, 1.0, 64, 11).unwrap()
}

fn digests(r: &SimReport) -> Vec<String> {
    r.cycles.iter().map(|c| c.sum_digest.clone()).collect()
}

#[test]
fn incremental_matches_full_share() {
    let t = trace();
    for (mk, k, f, part) in [
        (MappingKind::SweetSpot, 4, 1, (PartitionKind::Rows, 2)),
        (MappingKind::Dedicated, 3, 2, (PartitionKind::Single, 1)),
        (MappingKind::Clique, 4, 1, (PartitionKind::Cells, 3)),
    ] {
        let full = run(&cfg(mk, k, f, part, Policy::Full, RepKind::ItemBuff), &t, &FailureScript::none()).unwrap();
        assert!(full.verified());
        for rep in RepKind::ALL {
            let r = run(&cfg(mk, k, f, part, Policy::Incremental, rep), &t, &FailureScript::none()).unwrap();
            assert!(r.verified(), "{mk} {rep}");
            assert_eq!(digests(&r), digests(&full), "{mk} {rep}");
            assert!(r.cycles.iter().any(|c| c.early_shares > 0));
        }
    }
}

#[test]
fn deterministic_report() {
    let t = trace();
    let c = cfg(MappingKind::SweetSpot, 4, 1, (PartitionKind::Rows, 2), Policy::Incremental, RepKind::FlwHash);
    let s = FailureScript {
        failures: vec![Failure { node: 1, cycle: 3, point: 0.5 }],
    };
    assert_eq!(run(&c, &t, &s).unwrap().to_json(), run(&c, &t, &s).unwrap().to_json());
}

#[test]
fn sweet_spot_single_failure() {
    let t = trace();
    for rep in RepKind::ALL {
        let c = cfg(MappingKind::SweetSpot, 4, 1, (PartitionKind::Rows, 2), Policy::Incremental, rep);
        for node in 0..4 {
            let s = FailureScript {
                failures: vec![Failure { node, cycle: 5, point: 0.6 }],
            };
            let r = run(&c, &t, &s).unwrap();
            let fo = &r.failures[0];
            assert_eq!(fo.status, Some(RecoveryStatus::Exact));
            assert!(fo.verified);
            assert!(fo.unshared_items <= 40);
            assert!(r.verified());
        }
    }
}

#[test]
fn distributed_pairs_and_bound() {
    let t = trace();
    let c = cfg(MappingKind::Distributed, 4, 2, (PartitionKind::Single, 1), Policy::Incremental, RepKind::CntDiff);
    for a in 0..4 {
        for b in a + 1..4 {
            let s = FailureScript {
                failures: vec![Failure { node: a, cycle: 4, point: 0.3 }, Failure { node: b, cycle: 4, point: 0.9 }],
            };
            let r = run(&c, &t, &s).unwrap();
            assert!(r.failures.iter().all(|f| f.status == Some(RecoveryStatus::Exact) && f.verified));
            assert!(r.lost.is_empty());
            assert!(r.verified(), "{a} {b}");
        }
    }
    let s = FailureScript {
        failures: (0..3).map(|node| Failure { node, cycle: 2, point: 0.5 }).collect(),
    };
    let r = run(&c, &t, &s).unwrap();
    assert_eq!(r.lost, vec![0, 1, 2]);
    assert!(r.failures.iter().all(|f| f.status == Some(RecoveryStatus::Unrecoverable)));
}

#[test]
fn dedicated_holder_and_data_failures() {
    let t = trace();
    for policy in [Policy::Full, Policy::Incremental] {
        let c = cfg(MappingKind::Dedicated, 4, 2, (PartitionKind::Rows, 2), policy, RepKind::CntHash);
        let s = FailureScript {
            failures: vec![
                Failure { node: 4, cycle: 2, point: 0.0 },
                Failure { node: 1, cycle: 2, point: 0.4 },
                Failure { node: 5, cycle: 7, point: 0.0 },
                Failure { node: 3, cycle: 9, point: 1.0 },
            ],
        };
        let r = run(&c, &t, &s).unwrap();
        assert!(r.verified(), "{policy:?}");
        assert_eq!(r.failures[0].rebuilt_vectors, vec![0, 2]);
        assert_eq!(r.failures[1].status, Some(RecoveryStatus::Exact));
        let base = run(&c, &t, &FailureScript::none()).unwrap();
        assert!(r.cycles[..2].iter().zip(&base.cycles).all(|(a, b)| a.sum_digest == b.sum_digest));
    }
}

#[test]
fn idle_node_sends_alive() {
    let mut c = cfg(MappingKind::Dedicated, 3, 1, (PartitionKind::Single, 1), Policy::Incremental, RepKind::CntBuff);
    c.shard = ShardPolicy::RoundRobin;
    c.cycles = 4;
    let t: Vec<FlowId> = (0..3u64).map(|v| FlowId::from_u64(v, 64).unwrap()).collect();
    let r = run(&c, &t, &FailureScript::none()).unwrap();
    // 3 items over 4 cycles: three cycles with one active node.
    let alive: u64 = r.cycles.iter().map(|c| c.alive_shares).sum();
    assert_eq!(alive, 4 * 3 - 3);
    assert!(r.verified());
}

#[test]
fn config_errors() {
    let t = trace();
    let mut c = cfg(MappingKind::SweetSpot, 4, 1, (PartitionKind::Rows, 3), Policy::Full, RepKind::ItemBuff);
    assert!(run(&c, &t, &FailureScript::none()).is_err());
    c.partition.p = 2;
    let s = FailureScript {
        failures: vec![Failure { node: 9, cycle: 0, point: 0.0 }],
    };
    assert!(run(&c, &t, &s).is_err());
    let json = serde_json::to_string(&c).unwrap();
    assert_eq!(serde_json::from_str::<SimConfig>(&json).unwrap(), c);
}

use sketchguard::batching::{BatchConfig, Policy, RepKind};
use sketchguard::redundancy::{MappingKind, PartitionKind, RecoveryStatus};
use sketchguard::simnet::{run, Failure, FailureScript, PartitionSpec, ShardPolicy, SimConfig, SketchSpec};
use sketchguard::trace::zipf_trace;

fn config(mapping: MappingKind, k: usize, f: usize, kind: PartitionKind, p: usize, rep: RepKind) -> SimConfig {
    SimConfig {
        k,
        f,
        mapping,
        partition: PartitionSpec { kind, p },
        sketch: SketchSpec::Dims { d: 4, w: 64 },
        batch: BatchConfig::new(40, Policy::Incremental, rep),
        cycles: 20,
        seed: 3,
        shard: ShardPolicy::Hash,
        verify: true,
    }
}

#[test]
fn representations_agree_every_cycle() {
    let trace = zipf_trace(500, 8_000, 1.1, 64, 11).unwrap();
    for (mapping, kind, p) in [
        (MappingKind::Dedicated, PartitionKind::Single, 1),
        (MappingKind::SweetSpot, PartitionKind::Rows, 2),
        (MappingKind::Clique, PartitionKind::Cells, 3),
    ] {
        let mut base = config(mapping, 4, 1, kind, p, RepKind::ItemBuff);
        base.batch.policy = Policy::Full;
        let want = run(&base, &trace, &FailureScript::none()).unwrap();
        assert!(want.verified());
        for rep in RepKind::ALL {
            let got = run(&config(mapping, 4, 1, kind, p, rep), &trace, &FailureScript::none()).unwrap();
            assert!(got.verified(), "{mapping} {rep}");
            let a: Vec<_> = want.cycles.iter().map(|c| &c.sum_digest).collect();
            let b: Vec<_> = got.cycles.iter().map(|c| &c.sum_digest).collect();
            assert_eq!(a, b, "{mapping} {rep}");
            assert_eq!(want.final_data_digest, got.final_data_digest);
        }
    }
}

#[test]
fn mid_cycle_failures_recover_to_last_share() {
    let trace = zipf_trace(500, 8_000, 1.0, 64, 12).unwrap();
    let script = FailureScript {
        failures: vec![
            Failure { node: 1, cycle: 5, point: 0.5 },
            Failure { node: 3, cycle: 12, point: 0.25 },
        ],
    };
    for rep in RepKind::ALL {
        let cfg = config(MappingKind::Dedicated, 4, 2, PartitionKind::Single, 1, rep);
        let r = run(&cfg, &trace, &script).unwrap();
        assert_eq!(r.failures.len(), 2);
        for f in &r.failures {
            assert_eq!(f.status, Some(RecoveryStatus::Exact), "{rep}");
            assert!(f.verified, "{rep}");
        }
        assert!(r.verified(), "{rep}");
        assert!(r.lost.is_empty());
    }
}

#[test]
fn distributed_beyond_tolerance_loses_nodes() {
    let trace = zipf_trace(200, 4_000, 1.0, 64, 13).unwrap();
    let cfg = config(MappingKind::Distributed, 4, 1, PartitionKind::Single, 1, RepKind::CntDiff);
    let script = FailureScript {
        failures: (0..3).map(|node| Failure { node, cycle: 7, point: 0.0 }).collect(),
    };
    let r = run(&cfg, &trace, &script).unwrap();
    assert!(r.failures.iter().any(|f| f.status == Some(RecoveryStatus::Unrecoverable)));
    assert!(!r.lost.is_empty());
}

#[test]
fn runs_are_deterministic() {
    let trace = zipf_trace(300, 5_000, 1.0, 64, 14).unwrap();
    let cfg = config(MappingKind::SweetSpot, 4, 1, PartitionKind::Rows, 2, RepKind::FlwHash);
    let a = run(&cfg, &trace, &FailureScript::none()).unwrap();
    let b = run(&cfg, &trace, &FailureScript::none()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

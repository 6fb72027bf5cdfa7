mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use sketchguard::redundancy::{
    apply_plan, build_coverage, plan_recovery, stored_sums, MappingKind, PartitionScheme, RecoveryStatus, Source,
};
use sketchguard::sketch::{Sketch, SketchParams};

fn data_sketches(seed: u64, params: SketchParams, k: usize, items: usize) -> Vec<Sketch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<Sketch> = (0..k).map(|_| Sketch::new(params).unwrap()).collect();
    for _ in 0..items {
        let x = id(rng.gen_range(0..500));
        data[rng.gen_range(0..k)].update(&x, rng.gen_range(1..4)).unwrap();
    }
    data
}

fn recover(kind: MappingKind, k: usize, f: usize, scheme: PartitionScheme, failed: BTreeSet<usize>, seed: u64) {
    let m = build_coverage(kind, k, f).unwrap().for_scheme(&scheme).unwrap();
    let params = SketchParams::with_dims(scheme.d, scheme.w, seed).unwrap();
    let data = data_sketches(seed, params, k, 2_000);
    let sums = stored_sums(&m, &scheme, &data).unwrap();
    let oracle = oracle_sums(&m, &scheme, &data);
    for (v, s) in sums.iter().enumerate() {
        assert_eq!(s.counts(), oracle[&v].as_slice(), "vector {v}");
    }
    let plan = plan_recovery(&m, &failed);
    let fetch = |s: Source| match s {
        Source::Data(j) if !failed.contains(&j) => data.get(j),
        Source::Redundant(v) if !failed.contains(&m.vectors[v].holder) => sums.get(v),
        _ => None,
    };
    let out = apply_plan(&m, &scheme, &plan, &fetch, &data[0]).unwrap();
    for (j, r) in out {
        match r.status {
            RecoveryStatus::Exact => assert_eq!(r.sketch.counts(), data[j].counts(), "node {j}"),
            RecoveryStatus::Semi => {
                assert!(r.sketch.counts().iter().zip(data[j].counts()).all(|(a, b)| a >= b), "node {j}")
            }
            RecoveryStatus::Unrecoverable => panic!("{kind} k={k} f={f} failed {failed:?}: node {j} lost"),
        }
    }
}

fn failed_set(nodes: usize, n: usize, pick: u64) -> BTreeSet<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(pick);
    let mut ids: Vec<usize> = (0..nodes).collect();
    for i in 0..n {
        let j = rng.gen_range(i..nodes);
        ids.swap(i, j);
    }
    ids[..n].iter().copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dedicated_recovers_up_to_f(k in 1usize..=5, f_off in 0usize..5, n_off in 0usize..5, pick: u64, seed: u64) {
        let f = 1 + f_off % k;
        let n = 1 + n_off % f;
        let scheme = PartitionScheme::single(3, 31);
        let failed = failed_set(k + f, n, pick);
        recover(MappingKind::Dedicated, k, f, scheme, failed, seed);
    }

    #[test]
    fn distributed_recovers_up_to_half(k in 2usize..=6, n_off in 0usize..3, pick: u64, seed: u64) {
        let n = 1 + n_off % (k / 2);
        let scheme = PartitionScheme::single(3, 31);
        recover(MappingKind::Distributed, k, 1, scheme, failed_set(k, n, pick), seed);
    }

    #[test]
    fn partitioned_mappings_recover_single_failures(which in 0usize..3, node in 0usize..4, rows: bool, seed: u64) {
        let (kind, p) = [(MappingKind::SweetSpot, 2), (MappingKind::Clique, 3), (MappingKind::ImbalancedSpace, 3)][which];
        let pk = if rows { sketchguard::redundancy::PartitionKind::Rows } else { sketchguard::redundancy::PartitionKind::Cells };
        let scheme = PartitionScheme::new(pk, p, 4, 30).unwrap();
        recover(kind, 4, 1, scheme, BTreeSet::from([node]), seed);
    }
}

#[test]
fn too_many_distributed_failures_are_reported() {
    let m = build_coverage(MappingKind::Distributed, 4, 1).unwrap();
    let plan = plan_recovery(&m, &BTreeSet::from([0, 1, 2]));
    assert!((0..3).any(|j| plan.node_status(j) == Some(RecoveryStatus::Unrecoverable)));
}

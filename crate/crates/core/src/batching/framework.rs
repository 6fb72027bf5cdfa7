//! The per-node batching framework.
//!
//! [`SmartCms`] keeps the sketch as of the last share plus a batch of the
//! changes since then. Queries combine both. Sharing merges the batch into
//! the sketch and empties it.

use super::table::CompactTable;
use super::{BatchConfig, BatchError, Policy, RepKind};
use crate::sketch::{FlowId, Sketch};

#[derive(Debug, Clone)]
pub enum Batch {
    /// Full-share policy: updates go straight to the sketch.
    Direct,
    ItemBuff(Vec<FlowId>),
    /// `d` rows of column indices, one entry per item.
    CntBuff(Vec<Vec<u32>>),
    FlwHash(CompactTable<FlowId>),
    CntHash(Vec<CompactTable<u32>>),
    /// Row-major difference counters and the number of non-zero cells.
    CntDiff { diff: Vec<u32>, nonzero: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Recorded,
    /// `B'` reached the local capacity; share now.
    Full,
    /// A hash table is at its load threshold and the item was not recorded;
    /// share now and retry.
    Overflow,
}

/// Local hash computations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LocalOps {
    pub cms_hashes: u64,
    pub table_hashes: u64,
}

#[derive(Debug, Clone)]
pub struct SmartCms {
    sketch: Sketch,
    /// Sketch as of the last full share (full-share policy only).
    shared: Option<Sketch>,
    batch: Batch,
    fill: usize,
    capacity: usize,
    pub ops: LocalOps,
}

impl SmartCms {
    pub fn new(sketch: Sketch, cfg: &BatchConfig, node: usize) -> Self {
        let d = sketch.d();
        let w = sketch.w();
        let batch = match cfg.policy {
            Policy::Full => Batch::Direct,
            Policy::Incremental => match cfg.representation {
                RepKind::ItemBuff => Batch::ItemBuff(Vec::new()),
                RepKind::CntBuff => Batch::CntBuff(vec![Vec::new(); d]),
                RepKind::FlwHash => Batch::FlwHash(CompactTable::new(cfg.b_hat(), cfg.alpha)),
                RepKind::CntHash => Batch::CntHash(
                    (0..d)
                        .map(|_| CompactTable::new(cfg.b_hat().min(w), cfg.alpha))
                        .collect(),
                ),
                RepKind::CntDiff => Batch::CntDiff {
                    diff: vec![0; d * w],
                    nonzero: 0,
                },
            },
        };
        let shared = matches!(batch, Batch::Direct).then(|| sketch.clone());
        Self {
            sketch,
            shared,
            batch,
            fill: 0,
            capacity: cfg.local(node),
            ops: LocalOps::default(),
        }
    }

    pub fn sketch(&self) -> &Sketch {
        &self.sketch
    }

    /// State the covering nodes hold for this node.
    pub fn backup(&self) -> &Sketch {
        self.shared.as_ref().unwrap_or(&self.sketch)
    }

    pub fn batch(&self) -> &Batch {
        &self.batch
    }

    /// `B'`.
    pub fn fill(&self) -> usize {
        self.fill
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_empty(&self) -> bool {
        self.fill == 0
    }

    /// Distinct flows recorded (FlwHash) or items (ItemBuff).
    pub fn flows(&self) -> usize {
        match &self.batch {
            Batch::FlwHash(t) => t.len(),
            Batch::ItemBuff(v) => v.len(),
            _ => 0,
        }
    }

    /// Modified counters in the batch (CntHash, CntDiff).
    pub fn modified_counters(&self) -> usize {
        match &self.batch {
            Batch::CntHash(ts) => ts.iter().map(CompactTable::len).sum(),
            Batch::CntDiff { nonzero, .. } => *nonzero,
            _ => 0,
        }
    }

    pub fn update(&mut self, x: &FlowId) -> Result<UpdateOutcome, BatchError> {
        let d = self.sketch.d() as u64;
        let w = self.sketch.w();
        if let Batch::Direct = self.batch {
            self.sketch.update(x, 1)?;
            self.ops.cms_hashes += d;
            self.fill += 1;
            return Ok(UpdateOutcome::Recorded);
        }
        if self.fill >= self.capacity {
            return Err(BatchError::CapacityExceeded(self.fill));
        }
        match &mut self.batch {
            Batch::Direct => unreachable!(),
            Batch::ItemBuff(v) => v.push(*x),
            Batch::FlwHash(t) => {
                self.ops.table_hashes += 1;
                if t.would_overflow(x) {
                    return Ok(UpdateOutcome::Overflow);
                }
                t.add(*x, 1).expect("checked");
            }
            Batch::CntBuff(rows) => {
                self.ops.cms_hashes += d;
                for (r, col) in self.sketch.columns(x).into_iter().enumerate() {
                    rows[r].push(col as u32);
                }
            }
            Batch::CntHash(ts) => {
                self.ops.cms_hashes += d;
                self.ops.table_hashes += d;
                let cols = self.sketch.columns(x);
                if ts.iter().zip(&cols).any(|(t, &c)| t.would_overflow(&(c as u32))) {
                    return Ok(UpdateOutcome::Overflow);
                }
                for (t, &c) in ts.iter_mut().zip(&cols) {
                    t.add(c as u32, 1).expect("checked");
                }
            }
            Batch::CntDiff { diff, nonzero } => {
                self.ops.cms_hashes += d;
                for (r, c) in self.sketch.columns(x).into_iter().enumerate() {
                    let cell = &mut diff[r * w + c];
                    if *cell == 0 {
                        *nonzero += 1;
                    }
                    *cell += 1;
                }
            }
        }
        self.fill += 1;
        Ok(if self.fill == self.capacity {
            UpdateOutcome::Full
        } else {
            UpdateOutcome::Recorded
        })
    }

    /// Estimate combining the shared sketch and the pending batch.
    pub fn smart_query(&self, x: &FlowId) -> u64 {
        let s = &self.sketch;
        let w = s.w();
        let joint = |extra: &dyn Fn(usize, usize) -> u64| -> u64 {
            s.columns(x)
                .into_iter()
                .enumerate()
                .map(|(r, c)| s.get(r, c) + extra(r, c))
                .min()
                .unwrap_or(0)
        };
        match &self.batch {
            Batch::Direct => s.query(x),
            Batch::ItemBuff(v) => s.query(x) + v.iter().filter(|y| *y == x).count() as u64,
            Batch::FlwHash(t) => s.query(x) + t.get(x),
            Batch::CntBuff(rows) => {
                joint(&|r, c| rows[r].iter().filter(|&&v| v as usize == c).count() as u64)
            }
            Batch::CntHash(ts) => joint(&|r, c| ts[r].get(&(c as u32))),
            Batch::CntDiff { diff, .. } => joint(&|r, c| diff[r * w + c] as u64),
        }
    }

    /// Merges the batch into the sketch and empties it.
    pub fn commit(&mut self) -> Result<(), BatchError> {
        let d = self.sketch.d() as u64;
        let w = self.sketch.w();
        let fill = self.fill as u64;
        match &mut self.batch {
            Batch::Direct => {
                self.shared = Some(self.sketch.clone());
            }
            Batch::ItemBuff(v) => {
                for x in v.drain(..) {
                    self.sketch.update(&x, 1)?;
                    self.ops.cms_hashes += d;
                }
            }
            Batch::FlwHash(t) => {
                for (x, f) in t.iter() {
                    self.sketch.update(&x, f)?;
                    self.ops.cms_hashes += d;
                }
                t.clear();
            }
            Batch::CntBuff(rows) => {
                let n = rows.first().map_or(0, Vec::len);
                for i in 0..n {
                    let cols: Vec<usize> = rows.iter().map(|r| r[i] as usize).collect();
                    self.sketch.update_columns(&cols, 1)?;
                }
                rows.iter_mut().for_each(Vec::clear);
            }
            Batch::CntHash(ts) => {
                for (r, t) in ts.iter_mut().enumerate() {
                    for (c, v) in t.iter() {
                        self.sketch.add_cell(r, c as usize, v)?;
                    }
                    t.clear();
                }
                self.sketch.add_total(fill)?;
            }
            Batch::CntDiff { diff, nonzero } => {
                for (i, v) in diff.iter_mut().enumerate() {
                    if *v != 0 {
                        self.sketch.add_cell(i / w, i % w, *v as u64)?;
                        *v = 0;
                    }
                }
                *nonzero = 0;
                self.sketch.add_total(fill)?;
            }
        }
        self.fill = 0;
        Ok(())
    }

    /// Replaces all state with a recovered sketch and an empty batch.
    pub fn restore(&mut self, sketch: Sketch) {
        if self.shared.is_some() {
            self.shared = Some(sketch.clone());
        }
        self.sketch = sketch;
        self.fill = 0;
        match &mut self.batch {
            Batch::Direct => {}
            Batch::ItemBuff(v) => v.clear(),
            Batch::FlwHash(t) => t.clear(),
            Batch::CntBuff(rows) => rows.iter_mut().for_each(Vec::clear),
            Batch::CntHash(ts) => ts.iter_mut().for_each(CompactTable::clear),
            Batch::CntDiff { diff, nonzero } => {
                diff.iter_mut().for_each(|v| *v = 0);
                *nonzero = 0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use proptest::prelude::*;

    use super::*;
    use crate::sketch::SketchParams;

    fn id(v: u64) -> FlowId {
        FlowId::from_u64(v, 64).unwrap()
    }

    fn fw(rep: RepKind, b: usize) -> SmartCms {
        let s = Sketch::new(SketchParams::with_dims(3, 13, 4).unwrap()).unwrap();
        SmartCms::new(s, &BatchConfig::new(b, Policy::Incremental, rep), 0)
    }

    #[test]
    fn b1_always_full() {
        for rep in RepKind::ALL {
            let mut f = fw(rep, 1);
            assert_eq!(f.update(&id(1)).unwrap(), UpdateOutcome::Full);
            assert!(f.update(&id(2)).is_err());
            f.commit().unwrap();
            assert_eq!(f.update(&id(2)).unwrap(), UpdateOutcome::Full);
        }
    }

    #[test]
    fn aggregation() {
        let mut h = fw(RepKind::FlwHash, 10);
        let mut b = fw(RepKind::ItemBuff, 10);
        for f in [&mut h, &mut b] {
            f.update(&id(7)).unwrap();
            f.update(&id(7)).unwrap();
        }
        assert_eq!(h.flows(), 1);
        assert_eq!(b.flows(), 2);
        let Batch::FlwHash(t) = h.batch() else { panic!() };
        assert_eq!(t.get(&id(7)), 2);
    }

    #[test]
    fn flwhash_overflow_signalled() {
        let s = Sketch::new(SketchParams::with_dims(2, 8, 1).unwrap()).unwrap();
        let mut cfg = BatchConfig::new(10, Policy::Incremental, RepKind::FlwHash);
        cfg.beta_hat = 5.0; // b_hat = 2
        let mut f = SmartCms::new(s, &cfg, 0);
        assert_eq!(f.update(&id(1)).unwrap(), UpdateOutcome::Recorded);
        assert_eq!(f.update(&id(2)).unwrap(), UpdateOutcome::Recorded);
        assert_eq!(f.update(&id(3)).unwrap(), UpdateOutcome::Overflow);
        assert_eq!(f.fill(), 2);
        assert_eq!(f.update(&id(1)).unwrap(), UpdateOutcome::Recorded);
    }

    #[test]
    fn flwhash_query_adds_exact() {
        let mut f = fw(RepKind::FlwHash, 100);
        for _ in 0..10 {
            f.update(&id(5)).unwrap();
        }
        f.commit().unwrap();
        for _ in 0..3 {
            f.update(&id(5)).unwrap();
        }
        assert_eq!(f.sketch().query(&id(5)), 10);
        assert_eq!(f.smart_query(&id(5)), 13);
    }

    #[test]
    fn batch_shape_invariants() {
        let items: Vec<FlowId> = (0..40u64).map(|i| id(i % 9)).collect();
        for rep in RepKind::ALL {
            let mut f = fw(rep, 100);
            for x in &items {
                f.update(x).unwrap();
            }
            match f.batch() {
                Batch::FlwHash(t) => assert_eq!(t.iter().map(|e| e.1).sum::<u64>(), 40),
                Batch::CntDiff { diff, .. } => {
                    for r in 0..3 {
                        assert_eq!(diff[r * 13..(r + 1) * 13].iter().sum::<u32>(), 40);
                    }
                }
                Batch::CntBuff(rows) => assert!(rows.iter().all(|r| r.len() == 40)),
                Batch::CntHash(ts) => {
                    assert!(ts.iter().all(|t| t.iter().map(|e| e.1).sum::<u64>() == 40))
                }
                Batch::ItemBuff(v) => assert_eq!(v.len(), 40),
                Batch::Direct => unreachable!(),
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn commit_matches_direct_and_query_never_under(
            items in prop::collection::vec(0u64..30, 1..200), cut in 0usize..200
        ) {
            let ids: Vec<FlowId> = items.iter().map(|&v| id(v)).collect();
            let cut = cut.min(ids.len());
            let mut direct = Sketch::new(SketchParams::with_dims(3, 13, 4).unwrap()).unwrap();
            for x in &ids {
                direct.update(x, 1).unwrap();
            }
            for rep in RepKind::ALL {
                let mut f = fw(rep, 1000);
                let mut exact: HashMap<u64, u64> = HashMap::new();
                for (i, x) in ids.iter().enumerate() {
                    if i == cut {
                        f.commit().unwrap();
                    }
                    f.update(x).unwrap();
                    *exact.entry(items[i]).or_default() += 1;
                    prop_assert!(f.smart_query(x) >= exact[&items[i]]);
                }
                for v in 0u64..30 {
                    prop_assert!(f.smart_query(&id(v)) >= exact.get(&v).copied().unwrap_or(0));
                }
                f.commit().unwrap();
                prop_assert_eq!(f.sketch(), &direct);
            }
        }
    }
}

use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use super::report::{CycleReport, EncodeRecord, FailureOutcome, NodeOps, SimReport};
use super::{Failure, FailureScript, ShardPolicy, SimConfig, SimError};
use crate::batching::{
    covering_holders, decode_apply, encode_batch, targets, Batch, Policy, ReceiverState, SmartCms, UpdateOutcome,
    WireContext, WireWidths,
};
use crate::redundancy::{apply_plan, plan_recovery, CoverageMapping, PartitionScheme, RecoveryStatus, Source};
use crate::sketch::{mix64, FlowId, Sketch, SUM_COUNTER_BITS};

/// Simulation state between cycles.
#[derive(Debug)]
pub struct World {
    cfg: SimConfig,
    template: Sketch,
    mapping: CoverageMapping,
    scheme: PartitionScheme,
    ctx: WireContext,
    nodes: usize,
    /// Items per cycle per data node.
    schedule: Vec<Vec<Vec<FlowId>>>,
    script: FailureScript,
    data: Vec<Option<SmartCms>>,
    receivers: Vec<ReceiverState>,
    /// Encoded shares and the encode record they belong to.
    inbox: Vec<Vec<(Vec<u8>, Option<usize>)>>,
    cycle: usize,
    stepped: bool,
    failed_now: BTreeSet<usize>,
    /// Last shared sketch of each data node that failed this cycle.
    snapshots: BTreeMap<usize, Sketch>,
    /// Indices into `failures` for this cycle's crashes.
    pending: BTreeMap<usize, usize>,
    shared: Vec<bool>,
    lost: BTreeSet<usize>,
    cur: CycleReport,
    cycles: Vec<CycleReport>,
    failures: Vec<FailureOutcome>,
    encodes: Vec<EncodeRecord>,
    node_ops: Vec<NodeOps>,
    items: u64,
    dropped: u64,
}

impl World {
    pub fn new(cfg: SimConfig, trace: &[FlowId], script: FailureScript) -> Result<Self, SimError> {
        cfg.validate()?;
        let params = cfg.sketch_params()?;
        let template = Sketch::new(params)?;
        let scheme = cfg.scheme()?;
        let mapping = cfg.mapping()?;
        let nodes = mapping.node_count();
        script.validate(&cfg, nodes)?;
        let ctx = WireContext::new(scheme, WireWidths::new(&cfg.batch, &params));
        let k = cfg.k;
        let q = cfg.cycles;
        let n = trace.len().max(1) as u128;
        let mut schedule = vec![vec![Vec::new(); k]; q];
        for (t, x) in trace.iter().enumerate() {
            if x.bits() != cfg.batch.bits_mid {
                return Err(SimError::Config(format!(
                    "item {t} is {} bits, expected {}",
                    x.bits(),
                    cfg.batch.bits_mid
                )));
            }
            let c = (t as u128 * q as u128 / n) as usize;
            let j = match cfg.shard {
                ShardPolicy::Hash => (mix64(x.key()) % k as u64) as usize,
                ShardPolicy::RoundRobin => t % k,
            };
            schedule[c][j].push(*x);
        }
        let data = (0..k)
            .map(|j| Some(SmartCms::new(template.clone(), &cfg.batch, j)))
            .collect();
        let receivers = (0..nodes).map(|h| ReceiverState::new(h, &mapping, &template)).collect();
        Ok(Self {
            template,
            scheme,
            ctx,
            nodes,
            schedule,
            script,
            data,
            receivers,
            inbox: vec![Vec::new(); nodes],
            cycle: 0,
            stepped: false,
            failed_now: BTreeSet::new(),
            snapshots: BTreeMap::new(),
            pending: BTreeMap::new(),
            shared: vec![false; k],
            lost: BTreeSet::new(),
            cur: CycleReport::default(),
            cycles: Vec::new(),
            failures: Vec::new(),
            encodes: Vec::new(),
            node_ops: vec![NodeOps::default(); nodes],
            items: trace.len() as u64,
            dropped: 0,
            mapping,
            cfg,
        })
    }

    pub fn finished(&self) -> bool {
        self.cycle >= self.cfg.cycles
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }

    pub fn mapping(&self) -> &CoverageMapping {
        &self.mapping
    }

    /// Last shared sketch of data node `j`, `None` if lost or down.
    pub fn backup(&self, j: usize) -> Option<&Sketch> {
        self.data.get(j)?.as_ref().map(SmartCms::backup)
    }

    pub fn receiver(&self, h: usize) -> &ReceiverState {
        &self.receivers[h]
    }

    /// Ingests one cycle, sends shares and drains every inbox.
    pub fn step_cycle(&mut self) -> Result<(), SimError> {
        if self.stepped {
            return Err(SimError::Config("detect_and_recover must follow step_cycle".into()));
        }
        self.stepped = true;
        let c = self.cycle;
        self.cur = CycleReport {
            cycle: c,
            ..Default::default()
        };
        let k = self.cfg.k;
        let fails: Vec<Failure> = self.script.failures.iter().filter(|f| f.cycle == c).copied().collect();
        for f in fails.iter().filter(|f| f.node >= k) {
            self.crash(f, 0);
        }
        for j in 0..k {
            let items = std::mem::take(&mut self.schedule[c][j]);
            self.cur.items += items.len() as u64;
            if self.data[j].is_none() {
                self.dropped += items.len() as u64;
                continue;
            }
            let fail = fails.iter().find(|f| f.node == j).copied();
            let stop = fail.map_or(items.len(), |f| ((f.point * items.len() as f64).floor() as usize).min(items.len()));
            for x in &items[..stop] {
                loop {
                    let fw = self.data[j].as_mut().expect("live node");
                    match fw.update(x)? {
                        UpdateOutcome::Recorded => break,
                        UpdateOutcome::Full => {
                            self.share(j, true)?;
                            break;
                        }
                        UpdateOutcome::Overflow => self.share(j, true)?,
                    }
                }
            }
            if let Some(f) = fail {
                self.dropped += (items.len() - stop) as u64;
                let unshared = self.data[j].as_ref().map_or(0, |fw| fw.fill() as u64);
                self.crash(&f, unshared);
            }
        }
        for j in 0..k {
            let Some(fw) = &self.data[j] else { continue };
            if self.failed_now.contains(&j) {
                continue;
            }
            let due = match self.cfg.batch.policy {
                Policy::Full => true,
                Policy::Incremental => !fw.is_empty() || !self.shared[j],
            };
            if due {
                self.share(j, false)?;
            }
        }
        for h in 0..self.nodes {
            let msgs = std::mem::take(&mut self.inbox[h]);
            if self.down(h) {
                continue;
            }
            for (bytes, rec) in msgs {
                let st = decode_apply(&mut self.receivers[h], &bytes, &self.mapping, &self.ctx, self.template.hash())?;
                self.cur.remote_hashes += st.hashes;
                self.cur.remote_membership_tests += st.membership_tests;
                self.node_ops[h].remote_hashes += st.hashes;
                self.node_ops[h].remote_membership_tests += st.membership_tests;
                if let Some(r) = rec {
                    self.encodes[r].remote_hashes += st.hashes;
                    self.encodes[r].remote_membership_tests += st.membership_tests;
                }
            }
        }
        Ok(())
    }

    fn down(&self, h: usize) -> bool {
        self.failed_now.contains(&h) || self.lost.contains(&h)
    }

    fn crash(&mut self, f: &Failure, unshared: u64) {
        let n = f.node;
        self.failed_now.insert(n);
        if let Some(Some(fw)) = self.data.get_mut(n).map(Option::take) {
            self.snapshots.insert(n, fw.backup().clone());
            self.node_ops[n].cms_hashes += fw.ops.cms_hashes;
            self.node_ops[n].table_hashes += fw.ops.table_hashes;
        }
        self.receivers[n].reset();
        self.inbox[n].clear();
        self.pending.insert(n, self.failures.len());
        self.failures.push(FailureOutcome {
            node: n,
            cycle: f.cycle,
            point: f.point,
            unshared_items: unshared,
            status: None,
            verified: false,
            rebuilt_vectors: Vec::new(),
        });
    }

    fn share(&mut self, j: usize, early: bool) -> Result<(), SimError> {
        let c = self.cycle;
        let fw = self.data[j].as_ref().expect("live node");
        let (out, st) = encode_batch(fw, j, c as u32, &self.mapping, &self.ctx)?;
        let alive = out.iter().all(|o| o.share.is_alive());
        let rec = if alive {
            None
        } else {
            let rep = match fw.batch() {
                Batch::Direct => None,
                _ => Some(self.cfg.batch.representation),
            };
            self.encodes.push(EncodeRecord {
                sender: j,
                cycle: c,
                early,
                rep,
                fill: fw.fill() as u64,
                flows: fw.flows() as u64,
                counters: fw.modified_counters() as u64,
                r_c: covering_holders(&self.mapping, j).len() as u64,
                copies: (targets(&self.mapping, j).len() / self.scheme.p) as u64,
                traffic_bits: st.traffic_bits,
                membership_tests: st.membership_tests,
                remote_hashes: 0,
                remote_membership_tests: 0,
            });
            Some(self.encodes.len() - 1)
        };
        for o in out {
            if self.down(o.dest) {
                continue;
            }
            let bytes = o.share.encode(&self.ctx)?;
            self.inbox[o.dest].push((bytes, rec));
        }
        self.cur.traffic_bits += st.traffic_bits;
        self.cur.wire_bytes += st.wire_bytes;
        self.cur.shares += st.shares;
        self.cur.membership_tests += st.membership_tests;
        self.node_ops[j].membership_tests += st.membership_tests;
        if alive {
            self.cur.alive_shares += st.shares;
        } else {
            self.shared[j] = true;
        }
        if early {
            self.cur.early_shares += st.shares;
        }
        self.data[j].as_mut().expect("live node").commit()?;
        Ok(())
    }

    /// Recovers this cycle's failures and closes the cycle.
    pub fn detect_and_recover(&mut self) -> Result<(), SimError> {
        if !self.stepped {
            return Err(SimError::Config("step_cycle must run first".into()));
        }
        if !self.failed_now.is_empty() {
            self.recover()?;
        }
        self.close_cycle();
        Ok(())
    }

    fn recover(&mut self) -> Result<(), SimError> {
        let k = self.cfg.k;
        let failed: BTreeSet<usize> = self.failed_now.union(&self.lost).copied().collect();
        let plan = plan_recovery(&self.mapping, &failed);
        let recovered = {
            let data = &self.data;
            let receivers = &self.receivers;
            let mapping = &self.mapping;
            let fetch = |s: Source| -> Option<&Sketch> {
                match s {
                    Source::Data(l) => data.get(l)?.as_ref().map(SmartCms::backup),
                    Source::Redundant(v) => {
                        let h = mapping.vectors.get(v)?.holder;
                        if failed.contains(&h) {
                            None
                        } else {
                            receivers[h].sum(v)
                        }
                    }
                }
            };
            apply_plan(&self.mapping, &self.scheme, &plan, &fetch, &self.template)?
        };
        let mut rebuild: BTreeSet<usize> = BTreeSet::new();
        let newly: Vec<usize> = self.failed_now.iter().copied().collect();
        for &n in &newly {
            let idx = self.pending[&n];
            let Some(snap) = self.snapshots.remove(&n) else {
                self.failures[idx].verified = true;
                continue;
            };
            let status = plan.node_status(n).unwrap_or(RecoveryStatus::Unrecoverable);
            self.failures[idx].status = Some(status);
            let got = recovered.get(&n).filter(|_| status != RecoveryStatus::Unrecoverable);
            match got {
                Some(r) => {
                    self.failures[idx].verified = match status {
                        RecoveryStatus::Exact => r.sketch.counts() == snap.counts() && r.sketch.total() == snap.total(),
                        _ => r.sketch.counts().iter().zip(snap.counts()).all(|(a, b)| a >= b),
                    };
                    if status == RecoveryStatus::Semi {
                        rebuild.extend(
                            self.mapping
                                .vectors
                                .iter()
                                .enumerate()
                                .filter(|(_, v)| v.stored[n] != 0)
                                .map(|(i, _)| i),
                        );
                    }
                    let mut fw = SmartCms::new(self.template.clone(), &self.cfg.batch, n);
                    fw.restore(r.sketch.clone());
                    self.data[n] = Some(fw);
                }
                None => {
                    self.lost.insert(n);
                }
            }
        }
        for &n in &newly {
            if n < k && self.lost.contains(&n) {
                continue;
            }
            let held: Vec<usize> = self.mapping.held_by(n).map(|(i, _)| i).collect();
            rebuild.extend(held.iter().copied());
            let idx = self.pending[&n];
            self.failures[idx].rebuilt_vectors = held;
        }
        for v in rebuild {
            let h = self.mapping.vectors[v].holder;
            if self.lost.contains(&h) {
                continue;
            }
            self.rebuild_vector(v)?;
        }
        for n in newly {
            if n >= k && !self.lost.contains(&n) {
                let idx = self.pending[&n];
                self.failures[idx].verified = true;
            }
        }
        Ok(())
    }

    fn rebuild_vector(&mut self, v: usize) -> Result<(), SimError> {
        let vec = &self.mapping.vectors[v];
        let (h, part) = (vec.holder, vec.partition);
        let range = self.scheme.cell_range(part);
        let w = self.template.w();
        let mut s = self.template.zeroed_with_bits(SUM_COUNTER_BITS);
        for j in vec.members().collect::<Vec<_>>() {
            let coeff = vec.stored[j] as u64;
            let Some(b) = self.data[j].as_ref().map(SmartCms::backup) else { continue };
            for i in range.clone() {
                let x = b.counts()[i];
                if x != 0 {
                    s.add_cell(i / w, i % w, coeff * x)?;
                }
            }
            if self.cfg.batch.policy == Policy::Full {
                let cells = b.counts()[range.clone()].to_vec();
                self.receivers[h].record_full(j, part, cells);
            }
        }
        self.receivers[h].set_sum(v, s);
        Ok(())
    }

    fn consistent(&self) -> bool {
        let w = self.template.w();
        for (vi, v) in self.mapping.vectors.iter().enumerate() {
            if self.lost.contains(&v.holder) || v.members().any(|j| self.lost.contains(&j)) {
                continue;
            }
            let Some(sum) = self.receivers[v.holder].sum(vi) else { return false };
            let range = self.scheme.cell_range(v.partition);
            for (i, &got) in sum.counts().iter().enumerate() {
                let want: u64 = if range.contains(&i) {
                    v.members()
                        .map(|j| v.stored[j] as u64 * self.data[j].as_ref().map_or(0, |f| f.backup().get(i / w, i % w)))
                        .sum()
                } else {
                    0
                };
                if got != want {
                    return false;
                }
            }
        }
        true
    }

    fn sum_digest(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.receivers {
            for (v, s) in r.sums() {
                h.update((*v as u64).to_be_bytes());
                for c in s.counts() {
                    h.update(c.to_be_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }

    fn data_digest(&self) -> String {
        let mut h = Sha256::new();
        for d in &self.data {
            match d {
                Some(fw) => {
                    h.update([1u8]);
                    for c in fw.backup().counts() {
                        h.update(c.to_be_bytes());
                    }
                }
                None => h.update([0u8]),
            }
        }
        hex::encode(h.finalize())
    }

    fn close_cycle(&mut self) {
        let mut cur = std::mem::take(&mut self.cur);
        cur.failures = self.failed_now.iter().copied().collect();
        cur.sum_digest = self.sum_digest();
        cur.data_digest = self.data_digest();
        cur.consistent = self.cfg.verify.then(|| self.consistent());
        self.cycles.push(cur);
        self.failed_now.clear();
        self.pending.clear();
        self.shared.iter_mut().for_each(|s| *s = false);
        self.cycle += 1;
        self.stepped = false;
    }

    pub fn into_report(mut self) -> SimReport {
        for (j, d) in self.data.iter().enumerate() {
            if let Some(fw) = d {
                self.node_ops[j].cms_hashes += fw.ops.cms_hashes;
                self.node_ops[j].table_hashes += fw.ops.table_hashes;
            }
        }
        SimReport {
            items: self.items,
            dropped_items: self.dropped,
            final_sum_digest: self.sum_digest(),
            final_data_digest: self.data_digest(),
            cycles: self.cycles,
            failures: self.failures,
            lost: self.lost.into_iter().collect(),
            node_ops: self.node_ops,
            encodes: self.encodes,
            config: self.cfg,
        }
    }
}

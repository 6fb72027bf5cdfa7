//! Encoding batches into shares and applying them at covering nodes.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::framework::{Batch, SmartCms};
use super::wire::{Header, Payload, PolicyTag, Share, WireContext, PARTITION_ALL, WIRE_VERSION};
use super::{BatchError, RepKind};
use crate::redundancy::{CoverageMapping, PartitionKind, PartitionScheme};
use crate::sketch::{FlowId, HashFamily, Sketch, SUM_COUNTER_BITS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub dest: usize,
    pub share: Share,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EncodeStats {
    pub shares: u64,
    /// Logical payload bits over all shares.
    pub traffic_bits: u64,
    /// Encoded bytes over all shares, headers included.
    pub wire_bytes: u64,
    pub membership_tests: u64,
}

impl EncodeStats {
    pub fn add(&mut self, o: &EncodeStats) {
        self.shares += o.shares;
        self.traffic_bits += o.traffic_bits;
        self.wire_bytes += o.wire_bytes;
        self.membership_tests += o.membership_tests;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ApplyStats {
    pub hashes: u64,
    pub membership_tests: u64,
    pub cells: u64,
}

impl ApplyStats {
    pub fn add(&mut self, o: &ApplyStats) {
        self.hashes += o.hashes;
        self.membership_tests += o.membership_tests;
        self.cells += o.cells;
    }
}

/// (holder, partition) pairs with a vector covering `sender`.
pub fn targets(mapping: &CoverageMapping, sender: usize) -> BTreeSet<(usize, usize)> {
    mapping
        .vectors
        .iter()
        .filter(|v| v.stored.get(sender).is_some_and(|&c| c != 0))
        .map(|v| (v.holder, v.partition))
        .collect()
}

/// Distinct covering nodes, `r_c`.
pub fn covering_holders(mapping: &CoverageMapping, sender: usize) -> BTreeSet<usize> {
    targets(mapping, sender).into_iter().map(|t| t.0).collect()
}

fn header(cycle: u32, sender: usize, policy: PolicyTag, rep: u8, partition: u16, count: usize) -> Header {
    Header {
        version: WIRE_VERSION,
        cycle,
        sender: sender as u16,
        policy,
        rep,
        partition,
        count: count as u32,
    }
}

/// Logical payload size in bits.
pub fn payload_bits(p: &Payload, ctx: &WireContext) -> u64 {
    let wd = &ctx.widths;
    let (mid, bw, bb, bn) = (
        wd.bits_mid as u64,
        wd.bits_w as u64,
        wd.bits_b as u64,
        wd.bits_n as u64,
    );
    match p {
        Payload::Alive => 0,
        Payload::Items(v) => v.len() as u64 * mid,
        Payload::Flows(v) => v.len() as u64 * (mid + bb),
        Payload::Indices(rows) => {
            let n: u64 = rows.iter().map(|r| r.len() as u64).sum();
            let heads = if ctx.fixed_indices() { 0 } else { rows.len() as u64 * bb };
            n * bw + heads
        }
        Payload::Deltas(rows) => {
            let n: u64 = rows.iter().map(|r| r.len() as u64).sum();
            n * (bw + bb) + rows.len() as u64 * bb
        }
        Payload::Counters(v) => v.len() as u64 * bn,
    }
}

fn finish(out: Vec<Outgoing>, ctx: &WireContext, tests: u64) -> Result<(Vec<Outgoing>, EncodeStats), BatchError> {
    let mut st = EncodeStats {
        membership_tests: tests,
        ..Default::default()
    };
    for o in &out {
        st.shares += 1;
        st.traffic_bits += payload_bits(&o.share.payload, ctx);
        st.wire_bytes += o.share.encode(ctx)?.len() as u64;
    }
    Ok((out, st))
}

/// Alive shares to every covering node.
pub fn alive_encode(
    sender: usize,
    cycle: u32,
    mapping: &CoverageMapping,
    ctx: &WireContext,
) -> Result<(Vec<Outgoing>, EncodeStats), BatchError> {
    let out = covering_holders(mapping, sender)
        .into_iter()
        .map(|dest| Outgoing {
            dest,
            share: Share::alive(cycle, sender as u16),
        })
        .collect();
    finish(out, ctx, 0)
}

/// Splits per-row elements into partitions, returning the membership tests used.
fn split_rows(scheme: &PartitionScheme, rows: &[Vec<(u32, u64)>]) -> (Vec<Vec<Vec<(u32, u64)>>>, u64) {
    let mut parts: Vec<Vec<Vec<(u32, u64)>>> = (0..scheme.p)
        .map(|p| vec![Vec::new(); scheme.rows_of(p).len()])
        .collect();
    let mut tests = 0;
    for (r, elems) in rows.iter().enumerate() {
        match scheme.kind {
            PartitionKind::Single => parts[0][r] = elems.clone(),
            PartitionKind::Rows => {
                tests += 1;
                let p = scheme.partition_of(r, 0);
                parts[p][r - scheme.rows_of(p).start] = elems.clone();
            }
            PartitionKind::Cells => {
                for &e in elems {
                    tests += 1;
                    let p = scheme.partition_of(r, e.0 as usize);
                    parts[p][r - scheme.rows_of(p).start].push(e);
                }
            }
        }
    }
    (parts, tests)
}

/// Incremental shares for the current batch, or alive shares when it is empty.
pub fn encode_batch(
    fw: &SmartCms,
    sender: usize,
    cycle: u32,
    mapping: &CoverageMapping,
    ctx: &WireContext,
) -> Result<(Vec<Outgoing>, EncodeStats), BatchError> {
    let batch = fw.batch();
    if let Batch::Direct = batch {
        return full_share_encode(fw.sketch(), sender, cycle, mapping, ctx);
    }
    if fw.is_empty() {
        return alive_encode(sender, cycle, mapping, ctx);
    }
    let inc = PolicyTag::Incremental;
    let item_share = |rep: RepKind, payload: Payload, n: usize| -> Vec<Outgoing> {
        covering_holders(mapping, sender)
            .into_iter()
            .map(|dest| Outgoing {
                dest,
                share: Share {
                    header: header(cycle, sender, inc, rep.tag(), PARTITION_ALL, n),
                    payload: payload.clone(),
                },
            })
            .collect()
    };
    let w = ctx.scheme.w;
    let (rep, rows): (RepKind, Vec<Vec<(u32, u64)>>) = match batch {
        Batch::Direct => unreachable!(),
        Batch::ItemBuff(v) => {
            return finish(item_share(RepKind::ItemBuff, Payload::Items(v.clone()), v.len()), ctx, 0);
        }
        Batch::FlwHash(t) => {
            let flows: Vec<(FlowId, u64)> = t.iter().collect();
            let n = flows.len();
            return finish(item_share(RepKind::FlwHash, Payload::Flows(flows), n), ctx, 0);
        }
        Batch::CntBuff(rows) => (
            RepKind::CntBuff,
            rows.iter()
                .map(|r| r.iter().map(|&c| (c, 1)).collect())
                .collect(),
        ),
        Batch::CntHash(ts) => (
            RepKind::CntHash,
            ts.iter()
                .map(|t| {
                    let mut e: Vec<(u32, u64)> = t.iter().collect();
                    e.sort_unstable();
                    e
                })
                .collect(),
        ),
        Batch::CntDiff { diff, .. } => (
            RepKind::CntDiff,
            diff.chunks(w)
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .filter(|(_, &v)| v != 0)
                        .map(|(c, &v)| (c as u32, v as u64))
                        .collect()
                })
                .collect(),
        ),
    };
    let (parts, tests) = split_rows(&ctx.scheme, &rows);
    let fixed = rep == RepKind::CntBuff && ctx.fixed_indices();
    let mut out = Vec::new();
    for (dest, part) in targets(mapping, sender) {
        let prow = &parts[part];
        let total: usize = prow.iter().map(Vec::len).sum();
        let (payload, count) = if rep == RepKind::CntBuff {
            let idx = prow.iter().map(|r| r.iter().map(|e| e.0).collect()).collect();
            (Payload::Indices(idx), if fixed { fw.fill() } else { total })
        } else {
            (Payload::Deltas(prow.clone()), total)
        };
        out.push(Outgoing {
            dest,
            share: Share {
                header: header(cycle, sender, inc, rep.tag(), part as u16, count),
                payload,
            },
        });
    }
    finish(out, ctx, tests)
}

/// Full shares: each destination gets the counters of the partitions it covers.
pub fn full_share_encode(
    sketch: &Sketch,
    sender: usize,
    cycle: u32,
    mapping: &CoverageMapping,
    ctx: &WireContext,
) -> Result<(Vec<Outgoing>, EncodeStats), BatchError> {
    let s = &ctx.scheme;
    let tests = match s.kind {
        PartitionKind::Single => 0,
        PartitionKind::Rows => s.d as u64,
        PartitionKind::Cells => (s.d * s.w) as u64,
    };
    let out = targets(mapping, sender)
        .into_iter()
        .map(|(dest, part)| {
            let cells = sketch.counts()[s.cell_range(part)].to_vec();
            Outgoing {
                dest,
                share: Share {
                    header: header(cycle, sender, PolicyTag::Full, 0, part as u16, cells.len()),
                    payload: Payload::Counters(cells),
                },
            }
        })
        .collect();
    finish(out, ctx, tests)
}

/// Sum-sketches held by one covering node.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverState {
    pub node: usize,
    sums: BTreeMap<usize, Sketch>,
    /// Last full-share counters per (sender, partition).
    last_full: HashMap<(usize, usize), Vec<u64>>,
}

impl ReceiverState {
    /// Zeroed 64-bit sum-sketches for every vector `node` holds.
    pub fn new(node: usize, mapping: &CoverageMapping, template: &Sketch) -> Self {
        let sums = mapping
            .held_by(node)
            .map(|(i, _)| (i, template.zeroed_with_bits(SUM_COUNTER_BITS)))
            .collect();
        Self {
            node,
            sums,
            last_full: HashMap::new(),
        }
    }

    pub fn sums(&self) -> &BTreeMap<usize, Sketch> {
        &self.sums
    }

    pub fn sum(&self, vector: usize) -> Option<&Sketch> {
        self.sums.get(&vector)
    }

    /// Replaces every sum and forgets full-share history.
    pub fn reset(&mut self) {
        for s in self.sums.values_mut() {
            *s = s.zeroed();
        }
        self.last_full.clear();
    }

    pub fn set_sum(&mut self, vector: usize, sketch: Sketch) {
        self.sums.insert(vector, sketch);
    }

    /// Records `cells` as the last full share of `(sender, partition)`.
    pub fn record_full(&mut self, sender: usize, partition: usize, cells: Vec<u64>) {
        self.last_full.insert((sender, partition), cells);
    }
}

/// Decodes `bytes` and adds its changes to the sum-sketches of `state`.
pub fn decode_apply(
    state: &mut ReceiverState,
    bytes: &[u8],
    mapping: &CoverageMapping,
    ctx: &WireContext,
    hash: &HashFamily,
) -> Result<ApplyStats, BatchError> {
    let share = Share::decode(bytes, ctx)?;
    apply_share(state, &share, mapping, ctx, hash)
}

pub fn apply_share(
    state: &mut ReceiverState,
    share: &Share,
    mapping: &CoverageMapping,
    ctx: &WireContext,
    hash: &HashFamily,
) -> Result<ApplyStats, BatchError> {
    let mut st = ApplyStats::default();
    if share.is_alive() {
        return Ok(st);
    }
    let h = share.header;
    let sender = h.sender as usize;
    let all = h.partition == PARTITION_ALL;
    let vectors: Vec<(usize, usize, u64)> = mapping
        .held_by(state.node)
        .filter_map(|(i, v)| {
            let c = *v.stored.get(sender)?;
            (c != 0 && (all || v.partition == h.partition as usize)).then_some((i, v.partition, c as u64))
        })
        .collect();
    if vectors.is_empty() {
        return Err(BatchError::Malformed(format!(
            "node {} does not cover sender {sender} in partition {}",
            state.node, h.partition
        )));
    }
    let s = ctx.scheme;
    let bad = |what: &str| BatchError::Malformed(what.to_string());
    let flows: Vec<(FlowId, u64)> = match &share.payload {
        Payload::Items(v) => v.iter().map(|&x| (x, 1)).collect(),
        Payload::Flows(v) => v.clone(),
        _ => Vec::new(),
    };
    if matches!(share.payload, Payload::Items(_) | Payload::Flows(_)) {
        let keys: Vec<u64> = flows.iter().map(|(x, _)| x.key()).collect();
        let mut cols: Vec<Option<usize>> = vec![None; s.d];
        for (key, &(_, freq)) in keys.iter().zip(&flows) {
            cols.iter_mut().for_each(|c| *c = None);
            for &(vi, part, coeff) in &vectors {
                for r in s.rows_of(part) {
                    let col = *cols[r].get_or_insert_with(|| {
                        st.hashes += 1;
                        hash.column_of_key(r, *key)
                    });
                    if s.kind == PartitionKind::Cells {
                        st.membership_tests += 1;
                        if !s.member(r, col, part) {
                            continue;
                        }
                    }
                    add(state, vi, r, col, coeff * freq, &mut st)?;
                }
            }
        }
        return Ok(st);
    }
    let part = h.partition as usize;
    let rows = s.rows_of(part);
    match &share.payload {
        Payload::Indices(lists) => {
            for (r, list) in rows.zip(lists) {
                let ok = s.cols_in_row(r, part);
                for &c in list {
                    if !ok.contains(&(c as usize)) {
                        return Err(bad("cell outside partition"));
                    }
                    for &(vi, _, coeff) in &vectors {
                        add(state, vi, r, c as usize, coeff, &mut st)?;
                    }
                }
            }
        }
        Payload::Deltas(lists) => {
            for (r, list) in rows.zip(lists) {
                let ok = s.cols_in_row(r, part);
                for &(c, v) in list {
                    if !ok.contains(&(c as usize)) {
                        return Err(bad("cell outside partition"));
                    }
                    for &(vi, _, coeff) in &vectors {
                        add(state, vi, r, c as usize, coeff * v, &mut st)?;
                    }
                }
            }
        }
        Payload::Counters(cells) => {
            let range = s.cell_range(part);
            let old = state
                .last_full
                .remove(&(sender, part))
                .unwrap_or_else(|| vec![0; range.len()]);
            for (i, (&new, &prev)) in cells.iter().zip(&old).enumerate() {
                if new < prev {
                    return Err(bad("full share counter decreased"));
                }
                if new > prev {
                    let cell = range.start + i;
                    for &(vi, _, coeff) in &vectors {
                        add(state, vi, cell / s.w, cell % s.w, coeff * (new - prev), &mut st)?;
                    }
                }
            }
            state.last_full.insert((sender, part), cells.clone());
        }
        _ => unreachable!(),
    }
    Ok(st)
}

fn add(state: &mut ReceiverState, vi: usize, r: usize, c: usize, delta: u64, st: &mut ApplyStats) -> Result<(), BatchError> {
    let s = state.sums.get_mut(&vi).expect("held vector");
    s.add_cell(r, c, delta)?;
    st.cells += 1;
    Ok(())
}

//! Share wire format.
//!
//! Header (15 bytes, big-endian):
//!
//! | field     | bytes | notes                                      |
//! |-----------|-------|--------------------------------------------|
//! | version   | 1     | [`WIRE_VERSION`]                           |
//! | cycle     | 4     |                                            |
//! | sender    | 2     | zero-based node id                         |
//! | policy    | 1     | 0 full, 1 incremental, 2 alive             |
//! | rep       | 1     | 0 for full/alive, else [`RepKind::tag`]    |
//! | partition | 2     | zero-based, [`PARTITION_ALL`] for items    |
//! | count     | 4     | element count                              |
//!
//! Payload fields are whole bytes: identifiers `ceil(bits_mid/8)`, column
//! indices `ceil(bits_w/8)`, frequencies, deltas and per-row counts
//! `ceil(bits_B/8)`, full-share counters `ceil(bits_N/8)`. Column indices are
//! zero-based.
//!
//! * item buffer: `count` identifiers.
//! * flow table: `count` pairs (identifier, frequency), frequency non-zero.
//! * counter buffer, single or rows partitioning: `count = B'`, then `B'`
//!   indices for each row of the partition in order.
//! * counter buffer under cells partitioning, counter table, difference
//!   matrix: for each row of the partition, a per-row count then that many
//!   elements; `count` is the total. Table and difference elements are
//!   (index, delta) pairs sorted by index with non-zero delta.
//! * full share: `count` counters of the partition in row-major order.
//! * alive: empty.

use super::{BatchConfig, BatchError, RepKind};
use crate::redundancy::{PartitionKind, PartitionScheme};
use crate::sketch::{FlowId, SketchParams};

pub const WIRE_VERSION: u8 = 1;
pub const PARTITION_ALL: u16 = 0xFFFF;
pub const HEADER_LEN: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyTag {
    Full = 0,
    Incremental = 1,
    Alive = 2,
}

impl PolicyTag {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Full),
            1 => Some(Self::Incremental),
            2 => Some(Self::Alive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Header {
    pub version: u8,
    pub cycle: u32,
    pub sender: u16,
    pub policy: PolicyTag,
    pub rep: u8,
    pub partition: u16,
    pub count: u32,
}

impl Header {
    pub fn write(&self, out: &mut Vec<u8>) {
        out.push(self.version);
        out.extend_from_slice(&self.cycle.to_be_bytes());
        out.extend_from_slice(&self.sender.to_be_bytes());
        out.push(self.policy as u8);
        out.push(self.rep);
        out.extend_from_slice(&self.partition.to_be_bytes());
        out.extend_from_slice(&self.count.to_be_bytes());
    }

    pub fn read(bytes: &[u8]) -> Result<Self, BatchError> {
        if bytes.len() < HEADER_LEN {
            return Err(malformed("short header"));
        }
        if bytes[0] != WIRE_VERSION {
            return Err(BatchError::Version(bytes[0]));
        }
        let policy = PolicyTag::from_u8(bytes[7]).ok_or_else(|| malformed("policy tag"))?;
        Ok(Self {
            version: bytes[0],
            cycle: u32::from_be_bytes(bytes[1..5].try_into().unwrap()),
            sender: u16::from_be_bytes(bytes[5..7].try_into().unwrap()),
            policy,
            rep: bytes[8],
            partition: u16::from_be_bytes(bytes[9..11].try_into().unwrap()),
            count: u32::from_be_bytes(bytes[11..15].try_into().unwrap()),
        })
    }
}

fn malformed(what: &str) -> BatchError {
    BatchError::Malformed(what.to_string())
}

/// Logical field widths in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireWidths {
    pub bits_mid: u32,
    pub bits_w: u32,
    pub bits_b: u32,
    pub bits_n: u32,
}

impl WireWidths {
    pub fn new(cfg: &BatchConfig, params: &SketchParams) -> Self {
        Self {
            bits_mid: cfg.bits_mid,
            bits_w: params.bits_w().max(1),
            bits_b: cfg.bits_b(),
            bits_n: cfg.bits_n,
        }
    }

    pub fn mid_bytes(&self) -> usize {
        bytes_for(self.bits_mid)
    }

    pub fn w_bytes(&self) -> usize {
        bytes_for(self.bits_w)
    }

    pub fn b_bytes(&self) -> usize {
        bytes_for(self.bits_b)
    }

    pub fn n_bytes(&self) -> usize {
        bytes_for(self.bits_n)
    }
}

fn bytes_for(bits: u32) -> usize {
    (bits as usize + 7) / 8
}

/// What a receiver needs to parse payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireContext {
    pub scheme: PartitionScheme,
    pub widths: WireWidths,
}

impl WireContext {
    pub fn new(scheme: PartitionScheme, widths: WireWidths) -> Self {
        Self { scheme, widths }
    }

    fn rows(&self, partition: u16) -> Result<std::ops::Range<usize>, BatchError> {
        if partition as usize >= self.scheme.p {
            return Err(malformed("partition out of range"));
        }
        Ok(self.scheme.rows_of(partition as usize))
    }

    /// Counter buffers use the fixed layout unless cells are partitioned.
    pub fn fixed_indices(&self) -> bool {
        self.scheme.kind != PartitionKind::Cells
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Alive,
    Items(Vec<FlowId>),
    Flows(Vec<(FlowId, u64)>),
    /// Counter-buffer indices, one list per row of the partition.
    Indices(Vec<Vec<u32>>),
    /// (index, delta) lists, one per row of the partition.
    Deltas(Vec<Vec<(u32, u64)>>),
    /// Partition counters, row-major.
    Counters(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Share {
    pub header: Header,
    pub payload: Payload,
}

fn put(out: &mut Vec<u8>, v: u64, n: usize, what: &str) -> Result<(), BatchError> {
    if n < 8 && v >> (8 * n) != 0 {
        return Err(BatchError::Malformed(format!("{what} {v} exceeds {n} bytes")));
    }
    out.extend_from_slice(&v.to_be_bytes()[8 - n..]);
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BatchError> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(malformed("truncated payload"));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn uint(&mut self, n: usize) -> Result<u64, BatchError> {
        Ok(self.take(n)?.iter().fold(0u64, |a, &b| (a << 8) | b as u64))
    }
}

impl Share {
    pub fn alive(cycle: u32, sender: u16) -> Self {
        Self {
            header: Header {
                version: WIRE_VERSION,
                cycle,
                sender,
                policy: PolicyTag::Alive,
                rep: 0,
                partition: PARTITION_ALL,
                count: 0,
            },
            payload: Payload::Alive,
        }
    }

    pub fn is_alive(&self) -> bool {
        self.header.policy == PolicyTag::Alive
    }

    pub fn rep(&self) -> Option<RepKind> {
        RepKind::from_tag(self.header.rep)
    }

    pub fn encode(&self, ctx: &WireContext) -> Result<Vec<u8>, BatchError> {
        let wd = &ctx.widths;
        let mut out = Vec::with_capacity(HEADER_LEN);
        self.header.write(&mut out);
        let w = ctx.scheme.w as u64;
        let index = |out: &mut Vec<u8>, c: u32| -> Result<(), BatchError> {
            if c as u64 >= w {
                return Err(malformed("column index out of range"));
            }
            put(out, c as u64, wd.w_bytes(), "index")
        };
        let id = |out: &mut Vec<u8>, x: &FlowId| -> Result<(), BatchError> {
            if x.as_bytes().len() != wd.mid_bytes() {
                return Err(malformed("identifier width"));
            }
            out.extend_from_slice(x.as_bytes());
            Ok(())
        };
        match &self.payload {
            Payload::Alive => {}
            Payload::Items(v) => {
                for x in v {
                    id(&mut out, x)?;
                }
            }
            Payload::Flows(v) => {
                for (x, f) in v {
                    if *f == 0 {
                        return Err(malformed("zero frequency"));
                    }
                    id(&mut out, x)?;
                    put(&mut out, *f, wd.b_bytes(), "frequency")?;
                }
            }
            Payload::Indices(rows) => {
                let fixed = ctx.fixed_indices();
                for r in rows {
                    if !fixed {
                        put(&mut out, r.len() as u64, wd.b_bytes(), "row count")?;
                    }
                    for &c in r {
                        index(&mut out, c)?;
                    }
                }
            }
            Payload::Deltas(rows) => {
                for r in rows {
                    put(&mut out, r.len() as u64, wd.b_bytes(), "row count")?;
                    for &(c, v) in r {
                        if v == 0 {
                            return Err(malformed("zero delta"));
                        }
                        index(&mut out, c)?;
                        put(&mut out, v, wd.b_bytes(), "delta")?;
                    }
                }
            }
            Payload::Counters(v) => {
                for &c in v {
                    put(&mut out, c, wd.n_bytes(), "counter")?;
                }
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], ctx: &WireContext) -> Result<Self, BatchError> {
        let header = Header::read(bytes)?;
        let wd = &ctx.widths;
        let mut rd = Reader {
            buf: bytes,
            pos: HEADER_LEN,
        };
        let count = header.count as usize;
        let w = ctx.scheme.w as u64;
        let index = |rd: &mut Reader| -> Result<u32, BatchError> {
            let c = rd.uint(wd.w_bytes())?;
            if c >= w {
                return Err(malformed("column index out of range"));
            }
            Ok(c as u32)
        };
        let id = |rd: &mut Reader| -> Result<FlowId, BatchError> {
            FlowId::from_bytes(rd.take(wd.mid_bytes())?).map_err(|e| malformed(&e.to_string()))
        };
        let payload = match (header.policy, RepKind::from_tag(header.rep)) {
            (PolicyTag::Alive, _) => {
                if count != 0 || header.rep != 0 {
                    return Err(malformed("alive share with payload"));
                }
                Payload::Alive
            }
            (PolicyTag::Full, _) => {
                if header.rep != 0 {
                    return Err(malformed("full share with representation tag"));
                }
                ctx.rows(header.partition)?;
                let cells = ctx.scheme.cell_range(header.partition as usize).len();
                if count != cells {
                    return Err(malformed("full share size"));
                }
                Payload::Counters(
                    (0..count)
                        .map(|_| rd.uint(wd.n_bytes()))
                        .collect::<Result<_, _>>()?,
                )
            }
            (PolicyTag::Incremental, None) => return Err(malformed("representation tag")),
            (PolicyTag::Incremental, Some(rep)) => match rep {
                RepKind::ItemBuff | RepKind::FlwHash => {
                    if header.partition != PARTITION_ALL {
                        return Err(malformed("item share must address all partitions"));
                    }
                    if rep == RepKind::ItemBuff {
                        Payload::Items((0..count).map(|_| id(&mut rd)).collect::<Result<_, _>>()?)
                    } else {
                        let mut v = Vec::with_capacity(count.min(1 << 16));
                        for _ in 0..count {
                            let x = id(&mut rd)?;
                            let f = rd.uint(wd.b_bytes())?;
                            if f == 0 {
                                return Err(malformed("zero frequency"));
                            }
                            v.push((x, f));
                        }
                        Payload::Flows(v)
                    }
                }
                RepKind::CntBuff if ctx.fixed_indices() => {
                    let rows = ctx.rows(header.partition)?;
                    let mut out = Vec::with_capacity(rows.len());
                    for _ in rows {
                        out.push((0..count).map(|_| index(&mut rd)).collect::<Result<_, _>>()?);
                    }
                    Payload::Indices(out)
                }
                RepKind::CntBuff => {
                    let rows = ctx.rows(header.partition)?;
                    let mut out = Vec::with_capacity(rows.len());
                    let mut total = 0;
                    for _ in rows {
                        let n = rd.uint(wd.b_bytes())? as usize;
                        total += n;
                        if total > count {
                            return Err(malformed("row counts exceed element count"));
                        }
                        out.push((0..n).map(|_| index(&mut rd)).collect::<Result<_, _>>()?);
                    }
                    if total != count {
                        return Err(malformed("element count mismatch"));
                    }
                    Payload::Indices(out)
                }
                RepKind::CntHash | RepKind::CntDiff => {
                    let rows = ctx.rows(header.partition)?;
                    let mut out = Vec::with_capacity(rows.len());
                    let mut total = 0;
                    for _ in rows {
                        let n = rd.uint(wd.b_bytes())? as usize;
                        total += n;
                        if total > count {
                            return Err(malformed("row counts exceed element count"));
                        }
                        let mut row: Vec<(u32, u64)> = Vec::with_capacity(n);
                        for _ in 0..n {
                            let c = index(&mut rd)?;
                            let v = rd.uint(wd.b_bytes())?;
                            if v == 0 {
                                return Err(malformed("zero delta"));
                            }
                            if row.last().is_some_and(|&(p, _)| p >= c) {
                                return Err(malformed("indices not strictly increasing"));
                            }
                            row.push((c, v));
                        }
                        out.push(row);
                    }
                    if total != count {
                        return Err(malformed("element count mismatch"));
                    }
                    Payload::Deltas(out)
                }
            },
        };
        if rd.pos != bytes.len() {
            return Err(malformed("trailing bytes"));
        }
        Ok(Self { header, payload })
    }
}

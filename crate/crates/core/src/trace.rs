//! Synthetic traces and the trace file format.
//!
//! A trace file starts with `#mid=<bits>`. Each further line is one
//! identifier in hex (`0x` prefix) or decimal, or `count,id` for `count`
//! consecutive copies. Blank lines and other `#` lines are skipped.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::sketch::{id_bytes, FlowId, SketchError};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing #mid=<bits> header")]
    MissingHeader,
    #[error("invalid generator parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

/// The `rank`-th identifier of a generated trace.
pub fn synthetic_id(rank: u64, bits: u32, seed: u64) -> Result<FlowId, SketchError> {
    let n = id_bytes(bits)?;
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(rank.to_be_bytes());
    FlowId::from_bytes(&h.finalize()[..n])
}

/// `items` draws over `flows` identifiers with Zipf exponent `s`.
pub fn zipf_trace(flows: u64, items: usize, s: f64, bits: u32, seed: u64) -> Result<Vec<FlowId>, TraceError> {
    if flows == 0 || flows as u128 > items.max(1) as u128 {
        return Err(TraceError::Params(format!("need 1 <= flows <= items, got {flows} flows, {items} items")));
    }
    let zipf = Zipf::new(flows, s).map_err(|e| TraceError::Params(format!("{e:?}")))?;
    let ids: Vec<FlowId> = (0..flows).map(|r| synthetic_id(r, bits, seed)).collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..items)
        .map(|_| ids[(zipf.sample(&mut rng) as u64 - 1).min(flows - 1) as usize])
        .collect())
}

/// Parses one identifier of `bits` bits.
pub fn parse_id(s: &str, bits: u32) -> Result<FlowId, String> {
    let n = id_bytes(bits).map_err(|e| e.to_string())?;
    let s = s.trim();
    if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        let h = if h.len() % 2 == 1 { format!("0{h}") } else { h.to_string() };
        let raw = hex::decode(&h).map_err(|e| format!("bad hex {s:?}: {e}"))?;
        let first = raw.iter().position(|&b| b != 0).unwrap_or(raw.len());
        let raw = &raw[first..];
        if raw.len() > n {
            return Err(format!("{s} does not fit in {bits} bits"));
        }
        let mut buf = vec![0u8; n];
        buf[n - raw.len()..].copy_from_slice(raw);
        FlowId::from_bytes(&buf).map_err(|e| e.to_string())
    } else {
        let v: u128 = s.parse().map_err(|_| format!("bad identifier {s:?}"))?;
        FlowId::from_u128(v, bits).map_err(|e| e.to_string())
    }
}

/// Reads a trace file, returning its identifier width and items.
pub fn read_trace<R: BufRead>(r: R) -> Result<(u32, Vec<FlowId>), TraceError> {
    let mut bits = None;
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        let err = |msg: String| TraceError::Parse { line: i + 1, msg };
        if let Some(v) = t.strip_prefix("#mid=") {
            if bits.is_some() {
                return Err(err("duplicate header".into()));
            }
            let b: u32 = v.trim().parse().map_err(|_| err(format!("bad width {v:?}")))?;
            id_bytes(b).map_err(|e| err(e.to_string()))?;
            bits = Some(b);
            continue;
        }
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let b = bits.ok_or(TraceError::MissingHeader)?;
        match t.split_once(',') {
            Some((c, id)) => {
                let c: usize = c.trim().parse().map_err(|_| err(format!("bad count {c:?}")))?;
                let x = parse_id(id, b).map_err(err)?;
                out.extend(std::iter::repeat(x).take(c));
            }
            None => out.push(parse_id(t, b).map_err(err)?),
        }
    }
    Ok((bits.ok_or(TraceError::MissingHeader)?, out))
}

/// Writes one hex identifier per line under a `#mid=` header.
pub fn write_trace<W: Write>(mut w: W, bits: u32, items: &[FlowId]) -> Result<(), TraceError> {
    writeln!(w, "#mid={bits}")?;
    for x in items {
        if x.bits() != bits {
            return Err(TraceError::Params(format!("{x} is not {bits} bits")));
        }
        writeln!(w, "{x}")?;
    }
    w.flush()?;
    Ok(())
}

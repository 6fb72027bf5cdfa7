#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use sketchguard::batching::{
    decode_apply, encode_batch, BatchConfig, Policy, ReceiverState, RepKind, SmartCms, WireContext, WireWidths,
};
use sketchguard::redundancy::{build_coverage, CoverageMapping, MappingKind, PartitionKind, PartitionScheme};
use sketchguard::sketch::{FlowId, Sketch, SketchParams};

pub fn id(v: u64) -> FlowId {
    FlowId::from_u64(v, 64).unwrap()
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Non-zero cells `(vector, row, col, value)` of every sum held by a receiver.
pub type Deltas = Vec<(usize, usize, usize, u64)>;

pub struct GoldenCase {
    pub name: String,
    pub ctx: WireContext,
    pub mapping: CoverageMapping,
    pub template: Sketch,
    pub dest: usize,
    pub bytes: Vec<u8>,
    /// Sums the receiver should hold after applying the share, from direct updates.
    pub oracle: Deltas,
}

pub const GOLDEN_ITEMS: [u64; 10] = [5, 9, 5, 1, 12, 5, 9, 33, 1, 7];

pub fn partitionings() -> [(PartitionKind, usize); 3] {
    [(PartitionKind::Single, 1), (PartitionKind::Rows, 2), (PartitionKind::Cells, 3)]
}

pub fn golden_cases() -> Vec<GoldenCase> {
    let params = SketchParams::with_dims(3, 17, 9).unwrap();
    let mut out = Vec::new();
    for (kind, p) in partitionings() {
        let scheme = PartitionScheme::new(kind, p, 3, 17).unwrap();
        let mapping = build_coverage(MappingKind::Dedicated, 3, 1).unwrap().for_scheme(&scheme).unwrap();
        let mut sources: Vec<(String, Policy, RepKind)> = vec![("full".into(), Policy::Full, RepKind::ItemBuff)];
        sources.extend(RepKind::ALL.iter().map(|&r| (r.name().to_string(), Policy::Incremental, r)));
        for (name, policy, rep) in sources {
            let cfg = BatchConfig::new(16, policy, rep);
            let ctx = WireContext::new(scheme, WireWidths::new(&cfg, &params));
            let template = Sketch::new(params).unwrap();
            let mut fw = SmartCms::new(template.clone(), &cfg, 0);
            let mut direct = template.clone();
            for &v in &GOLDEN_ITEMS {
                fw.update(&id(v)).unwrap();
                direct.update(&id(v), 1).unwrap();
            }
            let (shares, _) = encode_batch(&fw, 0, 3, &mapping, &ctx).unwrap();
            let last = shares.last().unwrap();
            let bytes = last.share.encode(&ctx).unwrap();
            let partition = last.share.header.partition;
            let mut oracle = Vec::new();
            for (vi, v) in mapping.held_by(last.dest) {
                if partition != sketchguard::batching::PARTITION_ALL && v.partition != partition as usize {
                    continue;
                }
                for i in scheme.cell_range(v.partition) {
                    let c = direct.counts()[i] * v.stored[0] as u64;
                    if c != 0 {
                        oracle.push((vi, i / 17, i % 17, c));
                    }
                }
            }
            out.push(GoldenCase {
                name: format!("{name}_{kind}"),
                ctx,
                mapping: mapping.clone(),
                template,
                dest: last.dest,
                bytes,
                oracle,
            });
        }
    }
    out
}

/// Decodes `bytes` into a fresh receiver and lists its non-zero sum cells.
pub fn apply_golden(c: &GoldenCase, bytes: &[u8]) -> Result<Deltas, String> {
    let mut rs = ReceiverState::new(c.dest, &c.mapping, &c.template);
    decode_apply(&mut rs, bytes, &c.mapping, &c.ctx, c.template.hash()).map_err(|e| e.to_string())?;
    let w = c.template.w();
    let mut out = Vec::new();
    for (&vi, s) in rs.sums() {
        for (i, &v) in s.counts().iter().enumerate() {
            if v != 0 {
                out.push((vi, i / w, i % w, v));
            }
        }
    }
    Ok(out)
}

pub fn deltas_to_json(d: &Deltas) -> String {
    serde_json::to_string(d).unwrap()
}

pub fn deltas_from_json(s: &str) -> Deltas {
    serde_json::from_str(s).unwrap()
}

/// Reads `<name>.bin` and `<name>.deltas.json`, writing them first when
/// `SKETCHGUARD_BLESS` is set.
pub fn load_golden(c: &GoldenCase) -> Result<(Vec<u8>, Deltas), String> {
    let dir = golden_dir();
    let bin = dir.join(format!("{}.bin", c.name));
    let json = dir.join(format!("{}.deltas.json", c.name));
    if std::env::var_os("SKETCHGUARD_BLESS").is_some() {
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        std::fs::write(&bin, &c.bytes).map_err(|e| e.to_string())?;
        std::fs::write(&json, deltas_to_json(&c.oracle) + "\n").map_err(|e| e.to_string())?;
    }
    let bytes = std::fs::read(&bin).map_err(|e| format!("{}: {e}", bin.display()))?;
    let text = std::fs::read_to_string(&json).map_err(|e| format!("{}: {e}", json.display()))?;
    Ok((bytes, deltas_from_json(&text)))
}

/// Exact sum-sketch of every vector from the data sketches.
pub fn oracle_sums(m: &CoverageMapping, s: &PartitionScheme, data: &[Sketch]) -> BTreeMap<usize, Vec<u64>> {
    m.vectors
        .iter()
        .enumerate()
        .map(|(vi, v)| {
            let mask = s.mask(v.partition);
            let cells = (0..s.d * s.w)
                .map(|i| {
                    if !mask[i] {
                        return 0;
                    }
                    data.iter().enumerate().map(|(j, d)| v.stored[j] as u64 * d.counts()[i]).sum()
                })
                .collect();
            (vi, cells)
        })
        .collect()
}

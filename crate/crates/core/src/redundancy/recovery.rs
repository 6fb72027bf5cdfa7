//! Exact recovery of failed data sketches.
//!
//! For each partition, every erased data row `j` (ascending) is replaced by
//! the first available, not yet used redundant vector with a non-zero
//! coefficient at column `j`. If the resulting `k x k` system is invertible,
//! row `j` of its inverse is the plan for `D_j`. Otherwise each failed node is
//! solved individually when possible, and the rest get upper bounds of the
//! form `floor(X / v_j)` where `X` is a known non-negative combination that
//! contains `v_j * D_j`.
//!
//! Plans are expressed over the logical redundant vectors. [`PartitionPlan::stored_terms`]
//! rewrites them over what holders actually store.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::coverage::{CoverageMapping, MappingKind};
use super::linalg::{inverse, left_solve, Q};
use super::partition::PartitionScheme;
use super::RedundancyError;
use crate::sketch::{combine_scaled, Sketch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    /// Data sketch of node `j`.
    Data(usize),
    /// Redundant vector `v` of the mapping.
    Redundant(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub source: Source,
    pub coeff: BigRational,
}

/// `floor(sum(terms) / divisor)` bounds the failed sketch from above.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemiBound {
    pub divisor: i64,
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeRecovery {
    Exact(Vec<Term>),
    /// Minimum over the bounds.
    Semi(Vec<SemiBound>),
    Unrecoverable,
}

impl NodeRecovery {
    pub fn status(&self) -> RecoveryStatus {
        match self {
            Self::Exact(_) => RecoveryStatus::Exact,
            Self::Semi(_) => RecoveryStatus::Semi,
            Self::Unrecoverable => RecoveryStatus::Unrecoverable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryStatus {
    Exact,
    Semi,
    Unrecoverable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub partition: usize,
    /// Rows of the substituted system, when it was square and invertible.
    pub sources: Vec<Source>,
    pub inverse: Option<Vec<Vec<Q>>>,
    pub nodes: BTreeMap<usize, NodeRecovery>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveryPlan {
    pub failed: BTreeSet<usize>,
    pub partitions: Vec<PartitionPlan>,
    /// Vectors whose holder failed and must be rebuilt.
    pub rebuild: Vec<usize>,
}

impl RecoveryPlan {
    pub fn status(&self) -> RecoveryStatus {
        self.partitions
            .iter()
            .flat_map(|p| p.nodes.values().map(NodeRecovery::status))
            .max()
            .unwrap_or(RecoveryStatus::Exact)
    }

    pub fn node_status(&self, j: usize) -> Option<RecoveryStatus> {
        self.partitions
            .iter()
            .filter_map(|p| p.nodes.get(&j).map(NodeRecovery::status))
            .max()
    }

    /// Exact terms for `D_j` in partition `part`.
    pub fn exact_terms(&self, part: usize, j: usize) -> Option<&[Term]> {
        match self.partitions.get(part)?.nodes.get(&j)? {
            NodeRecovery::Exact(t) => Some(t),
            _ => None,
        }
    }
}

/// Plans recovery of every failed data node in every partition.
///
/// `failed` holds node ids; ids `>= k` are dedicated redundant nodes.
pub fn plan_recovery(m: &CoverageMapping, failed: &BTreeSet<usize>) -> RecoveryPlan {
    let failed_data: Vec<usize> = failed.iter().copied().filter(|&j| j < m.k).collect();
    let over_bound = m.kind == MappingKind::Distributed && failed.len() > m.k / 2;
    let partitions = (0..m.p)
        .map(|part| {
            if over_bound {
                PartitionPlan {
                    partition: part,
                    sources: Vec::new(),
                    inverse: None,
                    nodes: failed_data
                        .iter()
                        .map(|&j| (j, NodeRecovery::Unrecoverable))
                        .collect(),
                }
            } else {
                plan_partition(m, part, &failed_data, failed)
            }
        })
        .collect();
    let rebuild = m
        .vectors
        .iter()
        .enumerate()
        .filter(|(_, v)| failed.contains(&v.holder))
        .map(|(i, _)| i)
        .collect();
    RecoveryPlan {
        failed: failed.clone(),
        partitions,
        rebuild,
    }
}

fn plan_partition(
    m: &CoverageMapping,
    part: usize,
    failed_data: &[usize],
    failed: &BTreeSet<usize>,
) -> PartitionPlan {
    let k = m.k;
    let mut plan = PartitionPlan {
        partition: part,
        sources: Vec::new(),
        inverse: None,
        nodes: BTreeMap::new(),
    };
    if failed_data.is_empty() {
        return plan;
    }
    let avail: Vec<usize> = m
        .vectors_of(part)
        .filter(|(_, v)| !failed.contains(&v.holder))
        .map(|(i, _)| i)
        .collect();

    // Substitute first available vectors for erased rows.
    let mut used = BTreeSet::new();
    let mut sources = Vec::with_capacity(k);
    let mut rows: Vec<Vec<Q>> = Vec::with_capacity(k);
    let mut complete = true;
    for j in 0..k {
        if failed_data.contains(&j) {
            let pick = avail
                .iter()
                .copied()
                .find(|v| !used.contains(v) && m.vectors[*v].logical[j] != 0);
            match pick {
                Some(v) => {
                    used.insert(v);
                    sources.push(Source::Redundant(v));
                    rows.push(m.vectors[v].logical.iter().map(|&c| Q::from_integer(c.into())).collect());
                }
                None => {
                    complete = false;
                    break;
                }
            }
        } else {
            sources.push(Source::Data(j));
            rows.push((0..k).map(|c| Q::from_integer(i64::from(c == j).into())).collect());
        }
    }
    if complete {
        if let Some(inv) = inverse(&rows) {
            for &j in failed_data {
                let terms = inv[j]
                    .iter()
                    .zip(&sources)
                    .filter(|(c, _)| !c.is_zero())
                    .map(|(c, &s)| Term {
                        source: s,
                        coeff: c.clone(),
                    })
                    .collect();
                plan.nodes.insert(j, NodeRecovery::Exact(terms));
            }
            plan.sources = sources;
            plan.inverse = Some(inv);
            return plan;
        }
    }

    // Per-node solve over the failed columns.
    let live: Vec<usize> = (0..k).filter(|j| !failed_data.contains(j)).collect();
    let reduced = |v: usize| -> BTreeMap<Source, Q> {
        // R_v - sum over live l of v_l * D_l, which equals the failed part of R_v.
        let mut t = BTreeMap::new();
        t.insert(Source::Redundant(v), Q::one());
        for &l in &live {
            let c = m.vectors[v].logical[l];
            if c != 0 {
                t.insert(Source::Data(l), Q::from_integer((-c).into()));
            }
        }
        t
    };
    let a: Vec<Vec<Q>> = avail
        .iter()
        .map(|&v| {
            failed_data
                .iter()
                .map(|&j| Q::from_integer(m.vectors[v].logical[j].into()))
                .collect()
        })
        .collect();
    let mut exact: BTreeMap<usize, BTreeMap<Source, Q>> = BTreeMap::new();
    for (fi, &j) in failed_data.iter().enumerate() {
        let target: Vec<Q> = (0..failed_data.len())
            .map(|c| Q::from_integer(i64::from(c == fi).into()))
            .collect();
        if avail.is_empty() {
            break;
        }
        if let Some(x) = left_solve(&a, &target) {
            let mut acc = BTreeMap::new();
            for (xi, &v) in x.iter().zip(&avail) {
                if !xi.is_zero() {
                    add_scaled(&mut acc, &reduced(v), xi);
                }
            }
            exact.insert(j, acc);
        }
    }
    for &j in failed_data {
        if let Some(t) = exact.get(&j) {
            plan.nodes.insert(j, NodeRecovery::Exact(to_terms(t)));
            continue;
        }
        let mut bounds = Vec::new();
        for &v in &avail {
            let vj = m.vectors[v].logical[j];
            if vj <= 0 {
                continue;
            }
            let mut acc = reduced(v);
            for (&mj, mt) in &exact {
                let c = m.vectors[v].logical[mj];
                if c != 0 {
                    add_scaled(&mut acc, mt, &Q::from_integer((-c).into()));
                }
            }
            bounds.push(SemiBound {
                divisor: vj,
                terms: to_terms(&acc),
            });
        }
        let rec = if bounds.is_empty() {
            NodeRecovery::Unrecoverable
        } else {
            NodeRecovery::Semi(bounds)
        };
        plan.nodes.insert(j, rec);
    }
    plan
}

fn add_scaled(acc: &mut BTreeMap<Source, Q>, t: &BTreeMap<Source, Q>, s: &Q) {
    for (src, c) in t {
        let e = acc.entry(*src).or_insert_with(Q::zero);
        *e += c * s;
    }
    acc.retain(|_, c| !c.is_zero());
}

fn to_terms(t: &BTreeMap<Source, Q>) -> Vec<Term> {
    t.iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|(&source, c)| Term {
            source,
            coeff: c.clone(),
        })
        .collect()
}

impl PartitionPlan {
    /// Rewrites logical terms over stored sketches: a holder that zeroes its
    /// own coefficient contributes that share through its data sketch.
    pub fn stored_terms(&self, m: &CoverageMapping, terms: &[Term]) -> Vec<Term> {
        let mut acc: BTreeMap<Source, Q> = BTreeMap::new();
        for t in terms {
            *acc.entry(t.source).or_insert_with(Q::zero) += &t.coeff;
            if let Source::Redundant(v) = t.source {
                let vec = &m.vectors[v];
                for (col, (&l, &s)) in vec.logical.iter().zip(&vec.stored).enumerate() {
                    if l != s {
                        *acc.entry(Source::Data(col)).or_insert_with(Q::zero) +=
                            &t.coeff * Q::from_integer((l - s).into());
                    }
                }
            }
        }
        to_terms(&acc)
    }
}

/// A recovered data sketch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recovered {
    pub sketch: Sketch,
    pub status: RecoveryStatus,
}

/// Evaluates `plan` for every failed data node.
///
/// `fetch` returns the stored sketch of a source: a live node's data sketch
/// or a redundant vector's sum-sketch. `template` fixes the output layout and
/// counter width.
pub fn apply_plan<'a>(
    m: &CoverageMapping,
    scheme: &PartitionScheme,
    plan: &RecoveryPlan,
    fetch: &dyn Fn(Source) -> Option<&'a Sketch>,
    template: &Sketch,
) -> Result<BTreeMap<usize, Recovered>, RedundancyError> {
    let mut out = BTreeMap::new();
    for &j in plan.failed.iter().filter(|&&j| j < m.k) {
        let mut cells = vec![0u64; template.d() * template.w()];
        let mut status = RecoveryStatus::Exact;
        for pp in &plan.partitions {
            let Some(rec) = pp.nodes.get(&j) else { continue };
            status = status.max(rec.status());
            let range = scheme.cell_range(pp.partition);
            match rec {
                NodeRecovery::Exact(terms) => {
                    let st = pp.stored_terms(m, terms);
                    let (vals, denom) = evaluate(&st, fetch, template)?;
                    for i in range {
                        cells[i] = exact_cell(vals[i], denom, i, template)?;
                    }
                }
                NodeRecovery::Semi(bounds) => {
                    let mut best: Option<Vec<i128>> = None;
                    for b in bounds {
                        let st = pp.stored_terms(m, &b.terms);
                        let (vals, denom) = evaluate(&st, fetch, template)?;
                        let div = denom * b.divisor as i128;
                        let cur: Vec<i128> = range.clone().map(|i| Integer::div_floor(&vals[i], &div)).collect();
                        best = Some(match best {
                            None => cur,
                            Some(prev) => prev.into_iter().zip(cur).map(|(a, b)| a.min(b)).collect(),
                        });
                    }
                    for (i, v) in range.zip(best.unwrap_or_default()) {
                        cells[i] = exact_cell(v, 1, i, template)?;
                    }
                }
                NodeRecovery::Unrecoverable => {}
            }
        }
        let total = cells[..template.w()].iter().sum();
        let mut sketch = template.zeroed();
        sketch.set_counts(cells, total).map_err(RedundancyError::Sketch)?;
        out.insert(j, Recovered { sketch, status });
    }
    Ok(out)
}

fn evaluate<'a>(
    terms: &[Term],
    fetch: &dyn Fn(Source) -> Option<&'a Sketch>,
    template: &Sketch,
) -> Result<(Vec<i128>, i128), RedundancyError> {
    if terms.is_empty() {
        return Ok((vec![0; template.d() * template.w()], 1));
    }
    let sketches: Vec<&Sketch> = terms
        .iter()
        .map(|t| fetch(t.source).ok_or(RedundancyError::MissingSource(t.source)))
        .collect::<Result<_, _>>()?;
    let coeffs: Vec<BigRational> = terms.iter().map(|t| t.coeff.clone()).collect();
    let (vals, _total, denom) = combine_scaled(&coeffs, &sketches).map_err(RedundancyError::Sketch)?;
    Ok((vals, denom))
}

fn exact_cell(v: i128, denom: i128, idx: usize, template: &Sketch) -> Result<u64, RedundancyError> {
    let (q, r) = v.div_rem(&denom);
    if r != 0 || q < 0 || q > template.counter_max() as i128 {
        return Err(RedundancyError::Sketch(crate::sketch::SketchError::InconsistentRecovery {
            row: idx / template.w(),
            col: idx % template.w(),
            value: BigRational::new(v.into(), denom.into()).to_string(),
        }));
    }
    Ok(q as u64)
}

/// Sum-sketch of every vector of `m`, computed directly from `data`.
///
/// Each covers only its partition's cells, with 64-bit counters.
pub fn stored_sums(m: &CoverageMapping, scheme: &PartitionScheme, data: &[Sketch]) -> Result<Vec<Sketch>, RedundancyError> {
    if data.len() != m.k {
        return Err(RedundancyError::Sketch(crate::sketch::SketchError::Arity {
            expected: m.k,
            got: data.len(),
        }));
    }
    let template = data[0].zeroed_with_bits(64);
    if data.iter().any(|s| !s.same_layout(&template)) {
        return Err(RedundancyError::Sketch(crate::sketch::SketchError::ParamMismatch));
    }
    m.vectors
        .iter()
        .map(|v| {
            let mut cells = vec![0i128; template.d() * template.w()];
            for j in v.members() {
                let c = v.stored[j] as i128;
                for i in scheme.cell_range(v.partition) {
                    cells[i] += c * data[j].counts()[i] as i128;
                }
            }
            let counts: Vec<u64> = cells
                .iter()
                .enumerate()
                .map(|(i, &c)| exact_cell(c, 1, i, &template))
                .collect::<Result<_, _>>()?;
            let total = counts[..template.w()].iter().sum();
            let mut s = template.zeroed();
            s.set_counts(counts, total)?;
            Ok(s)
        })
        .collect()
}

/// Formats terms as `2R1 - 2R2 + R3`, factoring a common denominator.
pub fn format_terms(terms: &[Term], label: &dyn Fn(Source) -> String) -> String {
    if terms.is_empty() {
        return "0".into();
    }
    let denom = terms
        .iter()
        .fold(BigInt::one(), |acc, t| acc.lcm(t.coeff.denom()));
    let mut s = String::new();
    for (i, t) in terms.iter().enumerate() {
        let n = t.coeff.numer() * (&denom / t.coeff.denom());
        let neg = n.is_negative();
        let mag = n.abs();
        if i == 0 {
            if neg {
                s.push('-');
            }
        } else {
            s.push_str(if neg { " - " } else { " + " });
        }
        if !mag.is_one() {
            s.push_str(&mag.to_string());
        }
        s.push_str(&label(t.source));
    }
    if denom.is_one() {
        s
    } else {
        format!("1/{denom} ({s})")
    }
}

/// Default labels: `D1..Dk` for data and the mapping's vector names.
pub fn default_label(m: &CoverageMapping) -> impl Fn(Source) -> String + '_ {
    move |s| match s {
        Source::Data(j) => format!("D{}", j + 1),
        Source::Redundant(v) => m.label(v),
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Data(j) => write!(f, "D{}", j + 1),
            Source::Redundant(v) => write!(f, "V{}", v + 1),
        }
    }
}

/// Coefficient as an `i64` when integral.
pub fn integral(c: &BigRational) -> Option<i64> {
    if c.is_integer() {
        c.to_integer().to_i64()
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::redundancy::coverage::build_coverage;
    use crate::redundancy::linalg::{q, q_frac};

    fn plan_str(kind: MappingKind, k: usize, f: usize, failed: &[usize], j: usize) -> String {
        let m = build_coverage(kind, k, f).unwrap();
        let plan = plan_recovery(&m, &failed.iter().copied().collect());
        let terms = plan.exact_terms(0, j).expect("exact");
        let s = format_terms(terms, &default_label(&m));
        s
    }

    #[test]
    fn dedicated_three_failures() {
        assert_eq!(
            plan_str(MappingKind::Dedicated, 5, 3, &[0, 1, 2], 0),
            "2R1 - 2R2 + R3 - D4 - 3D5"
        );
    }

    #[test]
    fn dedicated_all_failed_inverse() {
        let m = build_coverage(MappingKind::Dedicated, 5, 5).unwrap();
        let plan = plan_recovery(&m, &(0..5).collect());
        let inv = plan.partitions[0].inverse.as_ref().unwrap();
        let expect: [[i64; 5]; 5] = [
            [2, -2, 2, -2, 1],
            [-1, 3, -5, 7, -4],
            [0, -1, 4, -9, 6],
            [0, 0, -1, 5, -4],
            [0, 0, 0, -1, 1],
        ];
        for (row, e) in inv.iter().zip(expect) {
            assert_eq!(row, &e.iter().map(|&v| q(v)).collect::<Vec<_>>());
        }
        assert_eq!(plan_str(MappingKind::Dedicated, 5, 5, &[0, 1, 2, 3, 4], 4), "-R4 + R5");
    }

    #[test]
    fn distributed_fractions() {
        let cases = [
            (0, "R2 - 2D2 - 4D3 - 8D4"),
            (1, "1/2 (-D1 + R1 - 4D3 - 7D4)"),
            (2, "1/4 (-D1 - 2D2 + R1 - 7D4)"),
            (3, "1/7 (-D1 - 2D2 - 4D3 + R1)"),
        ];
        for (j, s) in cases {
            assert_eq!(plan_str(MappingKind::Distributed, 4, 2, &[j], j), s);
        }
        let m = build_coverage(MappingKind::Distributed, 4, 2).unwrap();
        let plan = plan_recovery(&m, &BTreeSet::from([1]));
        let terms = plan.exact_terms(0, 1).unwrap();
        let coeffs: Vec<(Source, Q)> = terms.iter().map(|t| (t.source, t.coeff.clone())).collect();
        assert_eq!(
            coeffs,
            vec![
                (Source::Data(0), q_frac(-1, 2)),
                (Source::Redundant(0), q_frac(1, 2)),
                (Source::Data(2), q_frac(-4, 2)),
                (Source::Data(3), q_frac(-7, 2)),
            ]
        );
    }

    #[test]
    fn semi_example() {
        let m = build_coverage(MappingKind::Dedicated, 5, 3).unwrap();
        let plan = plan_recovery(&m, &BTreeSet::from([0, 1, 5]));
        assert_eq!(plan.status(), RecoveryStatus::Semi);
        let label = default_label(&m);
        let NodeRecovery::Semi(b1) = &plan.partitions[0].nodes[&0] else { panic!() };
        let NodeRecovery::Semi(b2) = &plan.partitions[0].nodes[&1] else { panic!() };
        assert_eq!((b1[0].divisor, format_terms(&b1[0].terms, &label)), (1, "-3D3 - 4D4 - 5D5 + R2".into()));
        assert_eq!((b2[0].divisor, format_terms(&b2[0].terms, &label)), (2, "-3D3 - 4D4 - 5D5 + R2".into()));
    }

    #[test]
    fn distributed_over_bound() {
        let m = build_coverage(MappingKind::Distributed, 4, 2).unwrap();
        let plan = plan_recovery(&m, &BTreeSet::from([0, 1, 2]));
        assert_eq!(plan.status(), RecoveryStatus::Unrecoverable);
    }

    #[test]
    fn stored_basis_adds_self_term() {
        let m = build_coverage(MappingKind::Distributed, 4, 2).unwrap();
        let plan = plan_recovery(&m, &BTreeSet::from([0]));
        let pp = &plan.partitions[0];
        let NodeRecovery::Exact(t) = &pp.nodes[&0] else { panic!() };
        // R2 stores 1,0,4,8 (self term 2 dropped); the D2 coefficient goes -2 + 2 = 0
        let st = pp.stored_terms(&m, t);
        assert!(st.iter().all(|t| t.source != Source::Data(1)));
    }

    #[test]
    fn stored_sums_use_stored_rows() {
        use crate::sketch::{FlowId, SketchParams};
        let m = build_coverage(MappingKind::Distributed, 3, 1).unwrap();
        let scheme = PartitionScheme::single(2, 8);
        let params = SketchParams::with_dims(2, 8, 1).unwrap();
        let mut data: Vec<Sketch> = (0..3).map(|_| Sketch::new(params).unwrap()).collect();
        for (j, d) in data.iter_mut().enumerate() {
            d.update(&FlowId::from_u64(j as u64, 64).unwrap(), 10 + j as u64).unwrap();
        }
        let sums = stored_sums(&m, &scheme, &data).unwrap();
        assert_eq!(sums.len(), m.vectors.len());
        for (v, s) in m.vectors.iter().zip(&sums) {
            let want: u64 = v.stored.iter().enumerate().map(|(j, &c)| c as u64 * (10 + j as u64)).sum();
            assert_eq!(s.total(), want);
            assert_eq!(v.stored[v.holder], 0);
        }
        assert!(stored_sums(&m, &scheme, &data[..2]).is_err());
    }
}

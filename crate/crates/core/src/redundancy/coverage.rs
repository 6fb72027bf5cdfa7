//! Coverage mappings: which holder keeps which sum of which partitions.
//!
//! A mapping is a list of [`CoverVector`]s. Each vector lives on one holder
//! node, covers one partition, and is a non-negative integer combination of
//! the data nodes' sketches restricted to that partition. Data nodes are
//! `0..k`; dedicated redundant nodes are numbered from `k`.
//!
//! Kinds with their own partition count (SweetSpot 2, Clique and
//! ImbalancedSpace `k - 1`) are bound to a [`PartitionScheme`] with the same
//! `p`; under `Single` only their first-partition vectors are kept. Kinds
//! without partitions are replicated across every partition of the scheme.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use super::generation::{GenerationMatrix, Strategy};
use super::partition::{PartitionKind, PartitionScheme};
use super::recovery::{plan_recovery, NodeRecovery, Source};
use super::RedundancyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingKind {
    Dedicated,
    Distributed,
    Replication,
    Clique,
    ImbalancedSpace,
    SweetSpot,
}

impl MappingKind {
    pub const ALL: [MappingKind; 6] = [
        Self::Dedicated,
        Self::Distributed,
        Self::Replication,
        Self::Clique,
        Self::ImbalancedSpace,
        Self::SweetSpot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Dedicated => "dedicated",
            Self::Distributed => "distributed",
            Self::Replication => "replication",
            Self::Clique => "clique",
            Self::ImbalancedSpace => "imbalanced_space",
            Self::SweetSpot => "sweet_spot",
        }
    }

    pub fn strategy(self) -> Strategy {
        match self {
            Self::Dedicated => Strategy::Dedicated,
            _ => Strategy::Distributed,
        }
    }
}

impl fmt::Display for MappingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MappingKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown mapping kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverVector {
    pub holder: usize,
    pub partition: usize,
    /// Coefficient per data node in the recovery equations.
    pub logical: Vec<i64>,
    /// Coefficient per data node actually summed by the holder.
    pub stored: Vec<i64>,
}

impl CoverVector {
    fn plain(holder: usize, partition: usize, coeffs: Vec<i64>) -> Self {
        Self {
            holder,
            partition,
            logical: coeffs.clone(),
            stored: coeffs,
        }
    }

    /// Data nodes with a non-zero stored coefficient.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.stored
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(j, _)| j)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageMapping {
    pub kind: MappingKind,
    pub k: usize,
    pub f: usize,
    pub p: usize,
    pub vectors: Vec<CoverVector>,
}

impl CoverageMapping {
    pub fn strategy(&self) -> Strategy {
        self.kind.strategy()
    }

    /// Total node count including dedicated redundant nodes.
    pub fn node_count(&self) -> usize {
        self.vectors
            .iter()
            .map(|v| v.holder + 1)
            .max()
            .unwrap_or(0)
            .max(self.k)
    }

    /// Concurrent failures the mapping is built for.
    pub fn tolerance(&self) -> usize {
        match self.kind {
            MappingKind::Distributed => self.k / 2,
            _ => self.f,
        }
    }

    pub fn vectors_of(&self, partition: usize) -> impl Iterator<Item = (usize, &CoverVector)> {
        self.vectors
            .iter()
            .enumerate()
            .filter(move |(_, v)| v.partition == partition)
    }

    pub fn held_by(&self, node: usize) -> impl Iterator<Item = (usize, &CoverVector)> {
        self.vectors
            .iter()
            .enumerate()
            .filter(move |(_, v)| v.holder == node)
    }

    /// Distinct holders covering data node `j` with a stored coefficient.
    pub fn covering_nodes(&self, j: usize) -> BTreeSet<usize> {
        self.vectors
            .iter()
            .filter(|v| v.stored[j] != 0)
            .map(|v| v.holder)
            .collect()
    }

    /// Display name of vector `v`, 1-based, e.g. `R3` or `R4^(1)`.
    pub fn label(&self, v: usize) -> String {
        let vec = &self.vectors[v];
        let n = match self.kind {
            MappingKind::Dedicated => vec.holder - self.k + 1,
            _ => vec.holder + 1,
        };
        if self.p == 1 {
            format!("R{n}")
        } else {
            format!("R{n}^({})", vec.partition + 1)
        }
    }

    /// Re-binds the mapping to `scheme`'s partitions.
    pub fn for_scheme(&self, scheme: &PartitionScheme) -> Result<CoverageMapping, RedundancyError> {
        if self.p == scheme.p {
            return Ok(CoverageMapping {
                p: scheme.p,
                ..self.clone()
            });
        }
        let vectors = if self.p == 1 {
            (0..scheme.p)
                .flat_map(|part| {
                    self.vectors.iter().map(move |v| CoverVector {
                        partition: part,
                        ..v.clone()
                    })
                })
                .collect()
        } else if scheme.kind == PartitionKind::Single {
            self.vectors
                .iter()
                .filter(|v| v.partition == 0)
                .cloned()
                .collect()
        } else {
            return Err(RedundancyError::PartitionCount {
                kind: self.kind,
                needs: self.p,
                got: scheme.p,
            });
        };
        let out = CoverageMapping {
            kind: self.kind,
            k: self.k,
            f: self.f,
            p: scheme.p,
            vectors,
        };
        out.check_covered()?;
        Ok(out)
    }

    /// Every (data node, partition) has at least `f` covering vectors.
    pub fn check_covered(&self) -> Result<(), RedundancyError> {
        for part in 0..self.p {
            for j in 0..self.k {
                let n = self
                    .vectors_of(part)
                    .filter(|(_, v)| v.logical[j] != 0)
                    .count();
                if n < self.f {
                    return Err(RedundancyError::Uncovered {
                        node: j,
                        partition: part,
                    });
                }
            }
        }
        Ok(())
    }
}

impl From<&GenerationMatrix> for CoverageMapping {
    fn from(g: &GenerationMatrix) -> Self {
        let vectors = (0..g.logical.len())
            .map(|r| CoverVector {
                holder: g.holders[r],
                partition: 0,
                logical: g.logical[r].clone(),
                stored: g.stored[r].clone(),
            })
            .collect();
        let kind = match g.strategy {
            Strategy::Dedicated => MappingKind::Dedicated,
            Strategy::Distributed => MappingKind::Distributed,
        };
        CoverageMapping {
            kind,
            k: g.k,
            f: g.f,
            p: 1,
            vectors,
        }
    }
}

/// Builds a mapping with its own partition count.
pub fn build_coverage(kind: MappingKind, k: usize, f: usize) -> Result<CoverageMapping, RedundancyError> {
    let unsupported = || RedundancyError::Unsupported { kind, k, f };
    let unit = |members: &[usize]| {
        let mut c = vec![0i64; k];
        for &m in members {
            c[m % k] = 1;
        }
        c
    };
    let m = match kind {
        MappingKind::Dedicated => CoverageMapping::from(&GenerationMatrix::dedicated(k, f)?),
        MappingKind::Distributed => CoverageMapping::from(&GenerationMatrix::distributed(k)?),
        MappingKind::Replication => {
            if k < 2 || f == 0 || f >= k {
                return Err(unsupported());
            }
            let vectors = (0..k)
                .flat_map(|j| (1..=f).map(move |r| (j, r)))
                .map(|(j, r)| CoverVector::plain((j + k - r) % k, 0, unit(&[j])))
                .collect();
            CoverageMapping { kind, k, f, p: 1, vectors }
        }
        MappingKind::SweetSpot => {
            if f != 1 || k < 4 || k % 2 != 0 {
                return Err(unsupported());
            }
            // 1-based node i sums nodes i+1, i+2 in partition 1 when i is even, else 2.
            let vectors = (0..k)
                .map(|i| {
                    let part = if (i + 1) % 2 == 0 { 0 } else { 1 };
                    CoverVector::plain(i, part, unit(&[i + 1, i + 2]))
                })
                .collect();
            CoverageMapping { kind, k, f, p: 2, vectors }
        }
        MappingKind::Clique => {
            if f != 1 || !(3..=4).contains(&k) {
                return Err(unsupported());
            }
            let p = k - 1;
            let mut vectors = Vec::new();
            for i in 0..k {
                vectors.push(CoverVector::plain(i, p - 1, unit(&[i + 1])));
                let others: Vec<usize> = (2..k).map(|s| i + s).collect();
                vectors.push(CoverVector::plain(i, (i + 1) % (k - 2), unit(&others)));
            }
            CoverageMapping { kind, k, f, p, vectors }
        }
        MappingKind::ImbalancedSpace => {
            if f != 1 || k < 4 || k % 2 != 0 {
                return Err(unsupported());
            }
            let mut load = vec![0usize; k];
            let mut vectors = Vec::new();
            for (part, pairs) in one_factorization(k).into_iter().enumerate() {
                for (a, b) in pairs {
                    let holder = (0..k)
                        .filter(|&n| n != a && n != b)
                        .min_by_key(|&n| (load[n], n))
                        .expect("k >= 4 leaves a free holder");
                    load[holder] += 1;
                    vectors.push(CoverVector::plain(holder, part, unit(&[a, b])));
                }
            }
            CoverageMapping { kind, k, f, p: k - 1, vectors }
        }
    };
    m.check_covered()?;
    Ok(m)
}

/// Round-robin pairing of `0..k` (k even) into `k - 1` perfect matchings.
pub fn one_factorization(k: usize) -> Vec<Vec<(usize, usize)>> {
    let n = k - 1;
    (0..n)
        .map(|r| {
            let mut pairs = vec![(r.min(n), r.max(n))];
            for s in 1..k / 2 {
                let a = (r + s) % n;
                let b = (r + n - s) % n;
                pairs.push((a.min(b), a.max(b)));
            }
            pairs.sort();
            pairs
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingStats {
    /// Redundant vectors in sketch-equivalents.
    pub space: Rational64,
    pub space_per_node: Vec<Rational64>,
    /// Sketch-equivalents fetched to recover each data node and rebuild what
    /// it held.
    pub recovery_sketches: Vec<Rational64>,
    pub r_c: Vec<usize>,
}

pub fn mapping_stats(m: &CoverageMapping) -> MappingStats {
    let p = m.p as i64;
    let nodes = m.node_count();
    let space = Rational64::new(m.vectors.len() as i64, p);
    let space_per_node = (0..nodes)
        .map(|n| Rational64::new(m.held_by(n).count() as i64, p))
        .collect();
    let recovery_sketches = (0..m.k)
        .map(|j| {
            let plan = plan_recovery(m, &BTreeSet::from([j]));
            let mut fetched = 0usize;
            for pp in &plan.partitions {
                let mut sources: BTreeSet<Source> = BTreeSet::new();
                if let Some(NodeRecovery::Exact(terms)) = pp.nodes.get(&j) {
                    sources.extend(pp.stored_terms(m, terms).into_iter().map(|t| t.source));
                }
                fetched += sources.len();
            }
            let rebuild: usize = m.held_by(j).map(|(_, v)| v.members().count()).sum();
            Rational64::new((fetched + rebuild) as i64, p)
        })
        .collect();
    let r_c = (0..m.k).map(|j| m.covering_nodes(j).len()).collect();
    MappingStats {
        space,
        space_per_node,
        recovery_sketches,
        r_c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn sweet_spot_k4() {
        let m = build_coverage(MappingKind::SweetSpot, 4, 1).unwrap();
        assert_eq!(m.vectors.len(), 4);
        assert!(m.vectors.iter().all(|v| v.members().count() == 2));
        let find = |holder: usize| m.vectors.iter().find(|v| v.holder == holder).unwrap();
        assert_eq!((find(3).partition, find(3).stored.clone()), (0, vec![1, 1, 0, 0]));
        assert_eq!((find(1).partition, find(1).stored.clone()), (0, vec![0, 0, 1, 1]));
        assert_eq!((find(0).partition, find(0).stored.clone()), (1, vec![0, 1, 1, 0]));
        assert_eq!((find(2).partition, find(2).stored.clone()), (1, vec![1, 0, 0, 1]));
        let s = mapping_stats(&m);
        assert_eq!(s.space, r(2, 1));
        assert!(s.recovery_sketches.iter().all(|&x| x == r(3, 1)));
    }

    #[test]
    fn clique_k4() {
        let m = build_coverage(MappingKind::Clique, 4, 1).unwrap();
        let s = mapping_stats(&m);
        assert_eq!(s.space, r(8, 3));
        assert!(s.space_per_node.iter().all(|&x| x == r(2, 3)));
        assert!(s.recovery_sketches.iter().all(|&x| x == r(8, 3)));
        for n in 0..4 {
            let parts: BTreeSet<usize> = m.held_by(n).map(|(_, v)| v.partition).collect();
            assert_eq!(parts.len(), 2);
            assert!(m.held_by(n).all(|(_, v)| v.stored[n] == 0));
        }
    }

    #[test]
    fn imbalanced_k4() {
        let m = build_coverage(MappingKind::ImbalancedSpace, 4, 1).unwrap();
        assert_eq!(m.vectors.len(), 6);
        let s = mapping_stats(&m);
        assert_eq!(s.space, r(2, 1));
        for x in s.recovery_sketches {
            assert!(x == r(8, 3) || x == r(10, 3), "{x}");
        }
    }

    #[test]
    fn replication_space_one() {
        let m = build_coverage(MappingKind::Replication, 5, 1).unwrap();
        let s = mapping_stats(&m);
        assert_eq!(s.space, r(5, 1));
        assert!(s.space_per_node.iter().all(|&x| x == r(1, 1)));
        assert!(s.r_c.iter().all(|&x| x == 1));
    }

    #[test]
    fn unsupported_rejected() {
        assert!(build_coverage(MappingKind::SweetSpot, 5, 1).is_err());
        assert!(build_coverage(MappingKind::Clique, 5, 1).is_err());
        assert!(build_coverage(MappingKind::ImbalancedSpace, 3, 1).is_err());
        assert!(build_coverage(MappingKind::Replication, 3, 3).is_err());
    }

    #[test]
    fn no_self_coverage_and_covered() {
        for kind in MappingKind::ALL {
            for k in 3..=8 {
                let Ok(m) = build_coverage(kind, k, 1) else { continue };
                m.check_covered().unwrap();
                for v in &m.vectors {
                    if v.holder < k {
                        assert_eq!(v.stored[v.holder], 0, "{kind} k={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn one_factorization_covers_all_pairs() {
        for k in [4, 6, 8] {
            let f = one_factorization(k);
            let mut seen = BTreeSet::new();
            for m in &f {
                let mut nodes = BTreeSet::new();
                for &(a, b) in m {
                    assert!(nodes.insert(a) && nodes.insert(b));
                    assert!(seen.insert((a, b)));
                }
            }
            assert_eq!(seen.len(), k * (k - 1) / 2);
        }
    }

    #[test]
    fn scheme_binding() {
        let m = build_coverage(MappingKind::SweetSpot, 4, 1).unwrap();
        let single = m.for_scheme(&PartitionScheme::single(5, 10)).unwrap();
        assert_eq!(single.vectors.len(), 2);
        let rows3 = PartitionScheme::new(PartitionKind::Rows, 3, 5, 10).unwrap();
        assert!(m.for_scheme(&rows3).is_err());
        let ded = build_coverage(MappingKind::Dedicated, 4, 2).unwrap();
        assert_eq!(ded.for_scheme(&rows3).unwrap().vectors.len(), 6);
    }
}

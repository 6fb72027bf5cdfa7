//! Closed-form costs of one share round.
//!
//! Traffic is counted in logical bits of the payload fields; headers are
//! excluded. `f` is the number of copies of each partition sent, `r_c` the
//! number of distinct covering nodes.

use serde::{Deserialize, Serialize};

use super::{ceil_ratio, RepKind};
use crate::redundancy::{PartitionKind, PartitionScheme};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// `None` for a full share.
    pub rep: Option<RepKind>,
    pub scheme: PartitionScheme,
    /// Capacity `B`.
    pub capacity: u64,
    /// Fill `B'`.
    pub fill: u64,
    /// Distinct flows `b`.
    pub flows: u64,
    /// Modified counters `c`.
    pub counters: u64,
    pub f: u64,
    pub r_c: u64,
    pub bits_mid: u64,
    pub bits_w: u64,
    pub bits_b: u64,
    pub bits_n: u64,
    pub alpha: f64,
    pub b_hat: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub extra_space_bits: u64,
    pub traffic_bits: u64,
    /// Hash computations at the sender.
    pub local_ops: u64,
    /// Hash computations at the receivers.
    pub remote_ops: u64,
    /// Partition membership tests at the sender.
    pub membership_tests: u64,
}

impl CostParams {
    fn d(&self) -> u64 {
        self.scheme.d as u64
    }

    fn w(&self) -> u64 {
        self.scheme.w as u64
    }

    /// Rows summed over partitions: the per-row count fields of one copy.
    pub fn row_headers(&self) -> u64 {
        (0..self.scheme.p)
            .map(|p| self.scheme.rows_of(p).len() as u64)
            .sum()
    }

    fn table_bits(&self, entry: u64) -> u64 {
        ceil_ratio(self.b_hat as f64, self.alpha) as u64 * entry
    }
}

pub fn cost_model(c: &CostParams) -> CostEstimate {
    let (d, w) = (c.d(), c.w());
    let m = c.row_headers();
    let kind = c.scheme.kind;
    let var = |elements: u64, elem_bits: u64| c.f * (elements * elem_bits + m * c.bits_b);
    let tests = |per_cell: u64| match kind {
        PartitionKind::Single => 0,
        PartitionKind::Rows => d,
        PartitionKind::Cells => per_cell,
    };
    match c.rep {
        None => CostEstimate {
            extra_space_bits: 0,
            traffic_bits: c.f * d * w * c.bits_n,
            local_ops: d * c.fill,
            remote_ops: 0,
            membership_tests: tests(d * w),
        },
        Some(RepKind::ItemBuff) => CostEstimate {
            extra_space_bits: c.capacity * c.bits_mid,
            traffic_bits: c.r_c * c.fill * c.bits_mid,
            local_ops: d * c.fill,
            remote_ops: c.fill * c.f * d,
            membership_tests: 0,
        },
        Some(RepKind::FlwHash) => CostEstimate {
            extra_space_bits: c.table_bits(c.bits_mid + c.bits_b),
            traffic_bits: c.r_c * c.flows * (c.bits_mid + c.bits_b),
            local_ops: c.fill + d * c.flows,
            remote_ops: c.flows * c.f * d,
            membership_tests: 0,
        },
        Some(RepKind::CntBuff) => CostEstimate {
            extra_space_bits: d * c.capacity * c.bits_w,
            traffic_bits: if kind == PartitionKind::Cells {
                var(d * c.fill, c.bits_w)
            } else {
                c.f * d * c.fill * c.bits_w
            },
            local_ops: d * c.fill,
            remote_ops: 0,
            membership_tests: tests(d * c.fill),
        },
        Some(RepKind::CntHash) => CostEstimate {
            extra_space_bits: d * c.table_bits(c.bits_w + c.bits_b),
            traffic_bits: var(c.counters, c.bits_w + c.bits_b),
            local_ops: 2 * d * c.fill,
            remote_ops: 0,
            membership_tests: tests(c.counters),
        },
        Some(RepKind::CntDiff) => CostEstimate {
            extra_space_bits: d * w * c.bits_b,
            traffic_bits: var(c.counters, c.bits_w + c.bits_b),
            local_ops: d * c.fill,
            remote_ops: 0,
            membership_tests: tests(c.counters),
        },
    }
}

/// Full share sends fewer bits than a counter buffer: `B >= w * bits_N / bits_w`.
pub fn full_beats_cntbuff(capacity: u64, w: u64, bits_n: u64, bits_w: u64) -> bool {
    capacity * bits_w >= w * bits_n
}

/// Item buffer sends no more than a full share: `B <= d * w * (f / r_c) * bits_N / bits_mid`.
pub fn itembuff_beats_full(capacity: u64, d: u64, w: u64, f: u64, r_c: u64, bits_n: u64, bits_mid: u64) -> bool {
    capacity * r_c * bits_mid <= d * w * f * bits_n
}

/// Counter buffer sends no more than an item buffer: `bits_mid >= d * bits_w` (with `r_c = f`).
pub fn cntbuff_beats_itembuff(d: u64, bits_w: u64, bits_mid: u64, f: u64, r_c: u64) -> bool {
    f * d * bits_w <= r_c * bits_mid
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(rep: Option<RepKind>, kind: PartitionKind, p: usize) -> CostParams {
        CostParams {
            rep,
            scheme: PartitionScheme::new(kind, p, 5, 272).unwrap(),
            capacity: 1000,
            fill: 1000,
            flows: 400,
            counters: 1900,
            f: 2,
            r_c: 2,
            bits_mid: 64,
            bits_w: 9,
            bits_b: 10,
            bits_n: 32,
            alpha: 0.8,
            b_hat: 400,
        }
    }

    #[test]
    fn representative_values() {
        let full = cost_model(&params(None, PartitionKind::Single, 1));
        assert_eq!(full.traffic_bits, 2 * 5 * 272 * 32);
        let ib = cost_model(&params(Some(RepKind::ItemBuff), PartitionKind::Single, 1));
        assert_eq!(ib.extra_space_bits, 64_000);
        assert_eq!(ib.traffic_bits, 2 * 1000 * 64);
        let fh = cost_model(&params(Some(RepKind::FlwHash), PartitionKind::Single, 1));
        assert_eq!(fh.extra_space_bits, 500 * 74);
        let cb = cost_model(&params(Some(RepKind::CntBuff), PartitionKind::Rows, 2));
        assert_eq!(cb.traffic_bits, 2 * 5 * 1000 * 9);
        assert_eq!(cb.membership_tests, 5);
        let cells = cost_model(&params(Some(RepKind::CntBuff), PartitionKind::Cells, 3));
        assert_eq!(cells.traffic_bits, 2 * (5 * 1000 * 9 + 7 * 10));
        assert_eq!(cells.membership_tests, 5000);
        let cd = cost_model(&params(Some(RepKind::CntDiff), PartitionKind::Single, 1));
        assert_eq!(cd.traffic_bits, 2 * (1900 * 19 + 5 * 10));
        assert_eq!(cd.extra_space_bits, 5 * 272 * 10);
    }

    #[test]
    fn break_even_rules() {
        // B >= w * bits_N / bits_w, with w = 272, bits_N = 32, bits_w = 9: 967.1
        assert!(!full_beats_cntbuff(967, 272, 32, 9));
        assert!(full_beats_cntbuff(968, 272, 32, 9));
        // d * w * bits_N / bits_mid = 5 * 272 * 32 / 64 = 680
        assert!(itembuff_beats_full(680, 5, 272, 1, 1, 32, 64));
        assert!(!itembuff_beats_full(681, 5, 272, 1, 1, 32, 64));
        assert!(!cntbuff_beats_itembuff(5, 13, 64, 1, 1));
        assert!(cntbuff_beats_itembuff(4, 16, 64, 1, 1));
    }

    #[test]
    fn break_even_matches_traffic() {
        for b in [1u64, 100, 967, 968, 5000] {
            let mut full = params(None, PartitionKind::Single, 1);
            full.fill = b;
            full.capacity = b;
            let mut cb = full;
            cb.rep = Some(RepKind::CntBuff);
            let fb = cost_model(&full).traffic_bits <= cost_model(&cb).traffic_bits;
            assert_eq!(fb, full_beats_cntbuff(b, 272, 32, 9), "B={b}");
        }
    }
}

//! Redundant coefficient matrices.
//!
//! `MR_f` is the top `f x k` block of a square matrix whose first row and
//! first column are ones and whose other entries follow
//! `M[i][j] = M[i][j-1] + M[i-1][j-1]`. Every `f`-column subset of `MR_f` is
//! nonsingular, so any `f` erasures among `k` data vectors can be undone.

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use super::linalg::det_bareiss;
use super::RedundancyError;

/// Largest `k` for which entries (at most `2^(k-1)`) fit an `i64`.
pub const MAX_K: usize = 62;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedundantMatrix {
    pub k: usize,
    pub f: usize,
    pub rows: Vec<Vec<i64>>,
}

impl RedundantMatrix {
    pub fn row(&self, i: usize) -> &[i64] {
        &self.rows[i]
    }
}

pub fn mr_generate(k: usize, f: usize) -> Result<RedundantMatrix, RedundancyError> {
    if k == 0 || k > MAX_K {
        return Err(RedundancyError::InvalidK(k));
    }
    if f == 0 || f > k {
        return Err(RedundancyError::InvalidF { k, f });
    }
    let mut rows = vec![vec![1i64; k]; f];
    for i in 1..f {
        for j in 1..k {
            rows[i][j] = rows[i][j - 1] + rows[i - 1][j - 1];
        }
    }
    Ok(RedundantMatrix { k, f, rows })
}

/// Symmetric Pascal matrix, `None` if an entry overflows `i64`.
pub fn pascal_generate(k: usize) -> Option<Vec<Vec<i64>>> {
    let mut p = vec![vec![1i64; k]; k];
    for i in 1..k {
        for j in 1..k {
            p[i][j] = p[i - 1][j].checked_add(p[i][j - 1])?;
        }
    }
    Some(p)
}

/// Determinants of every `f`-column submatrix of the first `f` rows, with
/// column subsets in lexicographic order.
pub fn subset_determinants(m: &[Vec<i64>], f: usize) -> Vec<(Vec<usize>, BigInt)> {
    assert!(m.len() >= f, "matrix has fewer than f rows");
    let k = m.first().map_or(0, |r| r.len());
    let mut out = Vec::new();
    for cols in combinations(k, f) {
        let sub: Vec<Vec<BigInt>> = m[..f]
            .iter()
            .map(|r| cols.iter().map(|&c| BigInt::from(r[c])).collect())
            .collect();
        let det = det_bareiss(&sub);
        out.push((cols, det));
    }
    out
}

/// True iff every `f`-column subset of the first `f` rows is nonsingular.
pub fn spans_check(m: &[Vec<i64>], f: usize) -> bool {
    if f == 0 || m.len() < f {
        return false;
    }
    let k = m[0].len();
    combinations(k, f).all(|cols| {
        let sub: Vec<Vec<BigInt>> = m[..f]
            .iter()
            .map(|r| cols.iter().map(|&c| BigInt::from(r[c])).collect())
            .collect();
        det_bareiss(&sub) != BigInt::from(0)
    })
}

/// Lexicographic `f`-subsets of `0..k`.
pub fn combinations(k: usize, f: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut cur: Option<Vec<usize>> = if f <= k { Some((0..f).collect()) } else { None };
    std::iter::from_fn(move || {
        let out = cur.clone()?;
        let next = {
            let c = cur.as_mut().unwrap();
            let mut i = f;
            loop {
                if i == 0 {
                    break None;
                }
                i -= 1;
                if c[i] < k - f + i {
                    c[i] += 1;
                    for j in i + 1..f {
                        c[j] = c[j - 1] + 1;
                    }
                    break Some(());
                }
            }
        };
        if next.is_none() {
            cur = None;
        }
        Some(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mr5() {
        let m = mr_generate(5, 5).unwrap();
        assert_eq!(
            m.rows,
            vec![
                vec![1, 1, 1, 1, 1],
                vec![1, 2, 3, 4, 5],
                vec![1, 2, 4, 7, 11],
                vec![1, 2, 4, 8, 15],
                vec![1, 2, 4, 8, 16],
            ]
        );
    }

    #[test]
    fn f1_is_ones_and_bad_args() {
        assert_eq!(mr_generate(7, 1).unwrap().rows, vec![vec![1; 7]]);
        assert!(mr_generate(3, 4).is_err());
        assert!(mr_generate(3, 0).is_err());
        assert!(mr_generate(0, 0).is_err());
    }

    #[test]
    fn nesting() {
        let small = mr_generate(4, 2).unwrap();
        let big = mr_generate(5, 3).unwrap();
        for i in 0..2 {
            assert_eq!(small.rows[i][..], big.rows[i][..4]);
        }
    }

    #[test]
    fn recurrence_and_bound_to_16() {
        for k in 1..=16 {
            let m = mr_generate(k, k).unwrap();
            for i in 0..k {
                assert_eq!(m.rows[0][i], 1);
                assert_eq!(m.rows[i][0], 1);
                for j in 0..k {
                    assert!(m.rows[i][j] <= 1 << (k - 1));
                    if i > 0 && j > 0 {
                        assert_eq!(m.rows[i][j], m.rows[i][j - 1] + m.rows[i - 1][j - 1]);
                    }
                }
            }
        }
    }

    #[test]
    fn pascal() {
        assert_eq!(pascal_generate(1).unwrap(), vec![vec![1]]);
        assert_eq!(
            pascal_generate(5).unwrap(),
            vec![
                vec![1, 1, 1, 1, 1],
                vec![1, 2, 3, 4, 5],
                vec![1, 3, 6, 10, 15],
                vec![1, 4, 10, 20, 35],
                vec![1, 5, 15, 35, 70],
            ]
        );
    }

    #[test]
    fn spans_small() {
        for k in 1..=6 {
            let p = pascal_generate(k).unwrap();
            for f in 1..=k {
                assert!(spans_check(&mr_generate(k, f).unwrap().rows, f), "MR k={k} f={f}");
                assert!(spans_check(&p, f), "P k={k} f={f}");
            }
        }
        assert!(!spans_check(&[vec![1, 1, 2], vec![2, 2, 3]], 2));
    }

    #[test]
    fn combinations_count() {
        assert_eq!(combinations(5, 2).count(), 10);
        assert_eq!(combinations(6, 3).count(), 20);
        assert_eq!(combinations(3, 3).collect::<Vec<_>>(), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(2, 3).count(), 0);
        assert_eq!(
            combinations(4, 2).collect::<Vec<_>>()[..3],
            [vec![0, 1], vec![0, 2], vec![0, 3]]
        );
    }
}

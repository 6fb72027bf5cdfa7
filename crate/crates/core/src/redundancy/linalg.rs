//! Exact rational and integer linear algebra for small systems.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn q_frac(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Inverse by Gauss-Jordan elimination, `None` when singular.
pub fn inverse(m: &[Vec<Q>]) -> Option<Vec<Vec<Q>>> {
    let n = m.len();
    let mut a: Vec<Vec<Q>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            assert_eq!(row.len(), n, "inverse of a non-square matrix");
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { Q::one() } else { Q::zero() }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        let inv = a[col][col].recip();
        for x in a[col].iter_mut() {
            *x *= &inv;
        }
        let prow = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r == col || row[col].is_zero() {
                continue;
            }
            let factor = row[col].clone();
            for (x, p) in row.iter_mut().zip(&prow) {
                *x -= &factor * p;
            }
        }
    }
    Some(a.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Reduced row echelon form; returns the pivot columns.
pub fn rref(a: &mut [Vec<Q>]) -> Vec<usize> {
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        let inv = a[r][c].recip();
        for x in a[r].iter_mut() {
            *x *= &inv;
        }
        let prow = a[r].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let factor = row[c].clone();
            for (x, p) in row.iter_mut().zip(&prow) {
                *x -= &factor * p;
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

/// Solves `x^T A = target` for `x`, if any solution exists.
///
/// `a` has one row per unknown of `x`. The returned solution sets free
/// variables to zero.
pub fn left_solve(a: &[Vec<Q>], target: &[Q]) -> Option<Vec<Q>> {
    let m = a.len();
    let n = target.len();
    // Transposed system A^T x = target, augmented.
    let mut aug: Vec<Vec<Q>> = (0..n)
        .map(|c| {
            let mut row: Vec<Q> = a.iter().map(|r| r[c].clone()).collect();
            row.push(target[c].clone());
            row
        })
        .collect();
    let pivots = rref(&mut aug);
    if pivots.last() == Some(&m) {
        return None;
    }
    let mut x = vec![Q::zero(); m];
    for (r, &c) in pivots.iter().enumerate() {
        x[c] = aug[r][m].clone();
    }
    Some(x)
}

/// Determinant by fraction-free Bareiss elimination.
pub fn det_bareiss(m: &[Vec<BigInt>]) -> BigInt {
    let n = m.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut a = m.to_vec();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&r| !a[r][k].is_zero()) {
                Some(r) => {
                    a.swap(k, r);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                a[i][j] = v / &prev;
            }
        }
        prev = a[k][k].clone();
    }
    sign * &a[n - 1][n - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qm(rows: &[&[i64]]) -> Vec<Vec<Q>> {
        rows.iter().map(|r| r.iter().map(|&v| q(v)).collect()).collect()
    }

    fn im(rows: &[&[i64]]) -> Vec<Vec<BigInt>> {
        rows.iter()
            .map(|r| r.iter().map(|&v| BigInt::from(v)).collect())
            .collect()
    }

    fn mul(a: &[Vec<Q>], b: &[Vec<Q>]) -> Vec<Vec<Q>> {
        (0..a.len())
            .map(|i| {
                (0..b[0].len())
                    .map(|j| (0..b.len()).fold(Q::zero(), |acc, k| acc + &a[i][k] * &b[k][j]))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn inverse_roundtrip() {
        let m = qm(&[&[2, 1, 0], &[1, 3, 1], &[0, 1, 4]]);
        let inv = inverse(&m).unwrap();
        assert_eq!(mul(&m, &inv), qm(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1]]));
    }

    #[test]
    fn singular_has_no_inverse() {
        assert!(inverse(&qm(&[&[1, 2], &[2, 4]])).is_none());
    }

    #[test]
    fn bareiss_matches_cofactor() {
        assert_eq!(det_bareiss(&im(&[&[0, 2], &[3, 1]])), BigInt::from(-6));
        assert_eq!(
            det_bareiss(&im(&[&[2, -3, 1], &[2, 0, -1], &[1, 4, 5]])),
            BigInt::from(49)
        );
        assert_eq!(det_bareiss(&im(&[&[1, 2], &[2, 4]])), BigInt::zero());
    }

    #[test]
    fn left_solve_finds_combination() {
        let a = qm(&[&[1, 2], &[1, 1]]);
        let x = left_solve(&a, &[q(1), q(0)]).unwrap();
        assert_eq!(x, vec![q(-1), q(2)]);
        let dep = qm(&[&[1, 2], &[2, 4]]);
        assert!(left_solve(&dep, &[q(1), q(0)]).is_none());
        assert!(left_solve(&dep, &[q(3), q(6)]).is_some());
    }
}

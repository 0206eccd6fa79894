//! Partition agreement and connectivity-matrix error under label switching.

use nalgebra::DMatrix;

use crate::error::{Result, SbmError};
use crate::model::BlockAssignment;

fn choose2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index from the contingency table of two partitions.
///
/// When both partitions are trivial (expected and maximum index coincide) the
/// index is 1 if the partitions are the same and 0 otherwise.
pub fn adjusted_rand_index(a: &BlockAssignment, b: &BlockAssignment) -> Result<f64> {
    if a.n() != b.n() {
        return Err(SbmError::DimensionMismatch {
            expected: a.n(),
            found: b.n(),
        });
    }
    let n = a.n();
    let (qa, qb) = (a.q().max(1), b.q().max(1));
    let mut table = vec![0usize; qa * qb];
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        table[x * qb + y] += 1;
    }
    let mut rows = vec![0usize; qa];
    let mut cols = vec![0usize; qb];
    for x in 0..qa {
        for y in 0..qb {
            rows[x] += table[x * qb + y];
            cols[y] += table[x * qb + y];
        }
    }
    let index: f64 = table.iter().map(|&c| choose2(c as f64)).sum();
    let sum_a: f64 = rows.iter().map(|&c| choose2(c as f64)).sum();
    let sum_b: f64 = cols.iter().map(|&c| choose2(c as f64)).sum();
    let total = choose2(n as f64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom.abs() < 1e-12 {
        return Ok(if (index - expected).abs() < 1e-12 && sum_a == sum_b { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

fn permuted_error(pi_hat: &DMatrix<f64>, pi: &DMatrix<f64>, perm: &[usize]) -> f64 {
    let q = pi.nrows();
    let mut s = 0.0;
    for a in 0..q {
        for b in 0..q {
            let d = pi_hat[(perm[a], perm[b])] - pi[(a, b)];
            s += d * d;
        }
    }
    s.sqrt()
}

/// `||P pi_hat P^t - pi||_F / ||pi||_F` for the given alignment, where block `k`
/// of the truth is matched with block `perm[k]` of the estimate.
pub fn frobenius_rel_error_with(pi_hat: &DMatrix<f64>, pi: &DMatrix<f64>, perm: &[usize]) -> Result<f64> {
    check_square_pair(pi_hat, pi)?;
    if perm.len() != pi.nrows() {
        return Err(SbmError::DimensionMismatch {
            expected: pi.nrows(),
            found: perm.len(),
        });
    }
    Ok(permuted_error(pi_hat, pi, perm) / pi.norm())
}

fn check_square_pair(pi_hat: &DMatrix<f64>, pi: &DMatrix<f64>) -> Result<()> {
    if pi_hat.shape() != pi.shape() || pi.nrows() != pi.ncols() {
        return Err(SbmError::DimensionMismatch {
            expected: pi.nrows(),
            found: pi_hat.nrows(),
        });
    }
    Ok(())
}

/// Largest Q for which every permutation is enumerated.
pub const EXHAUSTIVE_ALIGNMENT_MAX_Q: usize = 6;

/// Relative Frobenius error minimized over block permutations, with the
/// minimizing alignment. Exhaustive for `Q <= 6`, greedy row matching beyond.
pub fn frobenius_rel_error(pi_hat: &DMatrix<f64>, pi: &DMatrix<f64>) -> Result<(f64, Vec<usize>)> {
    check_square_pair(pi_hat, pi)?;
    let q = pi.nrows();
    let perm = if q <= EXHAUSTIVE_ALIGNMENT_MAX_Q {
        let mut best = (f64::INFINITY, (0..q).collect::<Vec<_>>());
        for_each_permutation(q, &mut |perm| {
            let e = permuted_error(pi_hat, pi, perm);
            if e < best.0 {
                best = (e, perm.to_vec());
            }
        });
        best.1
    } else {
        greedy_alignment(pi_hat, pi)
    };
    let err = permuted_error(pi_hat, pi, &perm) / pi.norm();
    Ok((err, perm))
}

fn greedy_alignment(pi_hat: &DMatrix<f64>, pi: &DMatrix<f64>) -> Vec<usize> {
    let q = pi.nrows();
    let sorted_hat: Vec<Vec<f64>> = (0..q)
        .map(|a| {
            let mut r: Vec<f64> = pi_hat.row(a).iter().copied().collect();
            r.sort_by(|x, y| x.total_cmp(y));
            r
        })
        .collect();
    let sorted_true: Vec<Vec<f64>> = (0..q)
        .map(|a| {
            let mut r: Vec<f64> = pi.row(a).iter().copied().collect();
            r.sort_by(|x, y| x.total_cmp(y));
            r
        })
        .collect();
    let mut used = vec![false; q];
    let mut perm = vec![0; q];
    for a in 0..q {
        let mut best = (f64::INFINITY, 0);
        for (b, row) in sorted_hat.iter().enumerate() {
            if used[b] {
                continue;
            }
            let d = (pi[(a, a)] - pi_hat[(b, b)]).powi(2)
                + row.iter().zip(&sorted_true[a]).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            if d < best.0 {
                best = (d, b);
            }
        }
        used[best.1] = true;
        perm[a] = best.1;
    }
    perm
}

/// Calls `f` on every permutation of `0..q` (Heap's algorithm).
pub(crate) fn for_each_permutation(q: usize, f: &mut dyn FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..q).collect();
    let mut c = vec![0usize; q];
    f(&perm);
    let mut i = 0;
    while i < q {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            f(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ba(labels: &[usize], q: usize) -> BlockAssignment {
        BlockAssignment::new(labels.to_vec(), q).unwrap()
    }

    /// Rand-index pair counting over all node pairs, adjusted with the
    /// permutation-model expectation.
    fn brute_force_ari(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let mut same_both = 0.0;
        let mut same_a = 0.0;
        let mut same_b = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                same_a += sa as u8 as f64;
                same_b += sb as u8 as f64;
                same_both += (sa && sb) as u8 as f64;
            }
        }
        let pairs = (n * (n - 1) / 2) as f64;
        let expected = same_a * same_b / pairs;
        (same_both - expected) / (0.5 * (same_a + same_b) - expected)
    }

    #[test]
    fn identical_partitions_score_one() {
        let a = ba(&[0, 0, 1, 1, 2, 2], 3);
        assert!((adjusted_rand_index(&a, &a).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn trivial_vs_balanced_scores_zero() {
        let a = ba(&[0, 0, 0, 0], 1);
        let b = ba(&[0, 0, 1, 1], 2);
        assert_eq!(adjusted_rand_index(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn matches_pair_counting_enumeration() {
        let a = [0, 0, 1, 1, 2, 2];
        let b = [0, 0, 1, 2, 2, 2];
        let oracle = brute_force_ari(&a, &b);
        // same_a = 3, same_b = 4, same_both = 2, pairs = 15: (2 - 0.8) / (3.5 - 0.8)
        assert!((oracle - 1.2 / 2.7).abs() < 1e-12);
        let got = adjusted_rand_index(&ba(&a, 3), &ba(&b, 3)).unwrap();
        assert!((got - oracle).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(adjusted_rand_index(&ba(&[0, 1], 2), &ba(&[0, 1, 1], 2)).is_err());
    }

    #[test]
    fn frobenius_zero_on_permuted_copy() {
        let pi = DMatrix::from_row_slice(3, 3, &[0.9, 0.1, 0.2, 0.1, 0.5, 0.05, 0.2, 0.05, 0.3]);
        let perm = [2, 0, 1];
        let permuted = DMatrix::from_fn(3, 3, |a, b| pi[(perm[a], perm[b])]);
        let (e, _) = frobenius_rel_error(&permuted, &pi).unwrap();
        assert!(e < 1e-15);
        assert_eq!(frobenius_rel_error(&pi, &pi).unwrap().0, 0.0);
    }

    #[test]
    fn frobenius_matches_exhaustive_minimum() {
        let pi: DMatrix<f64> = DMatrix::from_row_slice(3, 3, &[0.7, 0.2, 0.1, 0.2, 0.4, 0.3, 0.1, 0.3, 0.9]);
        let hat: DMatrix<f64> = DMatrix::from_row_slice(3, 3, &[0.35, 0.15, 0.25, 0.15, 0.8, 0.05, 0.25, 0.05, 0.6]);
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let oracle = perms
            .iter()
            .map(|p| {
                let mut s: f64 = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        s += (hat[(p[a], p[b])] - pi[(a, b)]).powi(2);
                    }
                }
                s.sqrt() / pi.norm()
            })
            .fold(f64::INFINITY, f64::min);
        let (e, perm) = frobenius_rel_error(&hat, &pi).unwrap();
        assert!((e - oracle).abs() < 1e-14);
        assert!((frobenius_rel_error_with(&hat, &pi, &perm).unwrap() - oracle).abs() < 1e-14);
    }

    #[test]
    fn permutation_enumeration_counts() {
        let mut count = 0;
        for_each_permutation(4, &mut |_| count += 1);
        assert_eq!(count, 24);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let a = DMatrix::<f64>::zeros(2, 2);
        let b = DMatrix::<f64>::zeros(3, 3);
        assert!(frobenius_rel_error(&a, &b).is_err());
    }
}

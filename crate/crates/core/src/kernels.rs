//! Gaussian binomial coefficients and the two dimension-transition kernels.
//!
//! For a fixed `i`-dimensional subspace `A` of `GF(2)^m` and a uniformly
//! random `j`-dimensional subspace `B`:
//!
//! * the intersection kernel is the law of `dim(A ∩ B)`,
//!   `[i;k][m-i;j-k] 2^{(i-k)(j-k)} / [m;j]`;
//! * the sum kernel is the law of `dim(A + B)`,
//!   `[m-i;m-k][i;k-j] 2^{(k-i)(k-j)} / [m;m-j]`.
//!
//! Both are evaluated as sums of base-2 logarithms so that `m = 15` and beyond
//! never forms the raw coefficients in floating point.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Number of `k`-dimensional subspaces of `GF(2)^m`, zero outside `0..=m`.
///
/// Exact; panics if the value does not fit in a `u128` (about `m > 22`).
pub fn gaussian_binomial(m: i64, k: i64) -> u128 {
    if m < 0 || k < 0 || k > m {
        return 0;
    }
    // [n;r] = [n-1;r-1] + 2^r [n-1;r], row by row.
    let m = m as usize;
    let k = k as usize;
    let mut row = vec![0u128; k + 1];
    row[0] = 1;
    for n in 1..=m {
        for r in (1..=k.min(n)).rev() {
            let shifted = row[r]
                .checked_mul(1u128 << r)
                .and_then(|v| v.checked_add(row[r - 1]))
                .unwrap_or_else(|| panic!("gaussian binomial [{m};{k}] overflows u128"));
            row[r] = shifted;
        }
    }
    row[k]
}

/// `log2 [m;k]`, or `-inf` outside `0..=m`.
pub fn log2_gaussian_binomial(m: i64, k: i64) -> f64 {
    if m < 0 || k < 0 || k > m {
        return f64::NEG_INFINITY;
    }
    // Π_{l<k} (2^m - 2^l) / (2^k - 2^l) = Π_{l<k} 2^{m-k} (1 - 2^{l-m}) / (1 - 2^{l-k})
    (0..k)
        .map(|l| {
            let num = (-(2f64.powi((l - m) as i32))).ln_1p();
            let den = (-(2f64.powi((l - k) as i32))).ln_1p();
            (m - k) as f64 + (num - den) / std::f64::consts::LN_2
        })
        .sum()
}

fn exp2_or_zero(log2: f64) -> f64 {
    if log2 == f64::NEG_INFINITY {
        0.0
    } else {
        log2.exp2()
    }
}

/// Law of `dim(A ∩ B)` for fixed `dim A = i` and uniform random `dim B = j`.
pub fn intersection_kernel(m: usize, i: usize, j: usize) -> Vec<f64> {
    assert!(i <= m && j <= m, "kernel indices out of range");
    let (m, i, j) = (m as i64, i as i64, j as i64);
    let denom = log2_gaussian_binomial(m, j);
    (0..=m)
        .map(|k| {
            exp2_or_zero(
                log2_gaussian_binomial(i, k) + log2_gaussian_binomial(m - i, j - k)
                    + ((i - k) * (j - k)) as f64
                    - denom,
            )
        })
        .collect()
}

/// Law of `dim(A + B)` for fixed `dim A = i` and uniform random `dim B = j`.
pub fn sum_kernel(m: usize, i: usize, j: usize) -> Vec<f64> {
    assert!(i <= m && j <= m, "kernel indices out of range");
    let (m, i, j) = (m as i64, i as i64, j as i64);
    let denom = log2_gaussian_binomial(m, m - j);
    (0..=m)
        .map(|k| {
            exp2_or_zero(
                log2_gaussian_binomial(m - i, m - k) + log2_gaussian_binomial(i, k - j)
                    + ((k - i) * (k - j)) as f64
                    - denom,
            )
        })
        .collect()
}

/// Both kernels for one `m`, laid out as `[i][j][k]`.
#[derive(Clone, Debug)]
pub struct KernelTable {
    m: usize,
    intersect: Vec<f64>,
    sum: Vec<f64>,
}

impl KernelTable {
    pub fn new(m: usize) -> Self {
        let n = m + 1;
        let mut intersect = Vec::with_capacity(n * n * n);
        let mut sum = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                intersect.extend(intersection_kernel(m, i, j));
                sum.extend(sum_kernel(m, i, j));
            }
        }
        Self { m, intersect, sum }
    }

    /// Shared table for `m`, built on first use.
    pub fn cached(m: usize) -> Arc<KernelTable> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<KernelTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut guard = cache.lock().expect("kernel cache poisoned");
        guard
            .entry(m)
            .or_insert_with(|| Arc::new(KernelTable::new(m)))
            .clone()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        let n = self.m + 1;
        (i * n + j) * n
    }

    /// `K_var(· | i, j)`.
    pub fn intersect(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j);
        &self.intersect[o..o + self.m + 1]
    }

    /// `K_chk(· | i, j)`.
    pub fn sum(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j);
        &self.sum[o..o + self.m + 1]
    }

    /// `T[i][k] = Σ_j p[j] K_var(k | i, j)`: one intersection with a random
    /// subspace whose dimension law is `p`.
    pub fn intersect_with(&self, p: &[f64]) -> Vec<Vec<f64>> {
        self.mix(p, |i, j| self.intersect(i, j))
    }

    /// `T[i][k] = Σ_j p[j] K_chk(k | i, j)`.
    pub fn sum_with(&self, p: &[f64]) -> Vec<Vec<f64>> {
        self.mix(p, |i, j| self.sum(i, j))
    }

    fn mix<'a>(&'a self, p: &[f64], kernel: impl Fn(usize, usize) -> &'a [f64]) -> Vec<Vec<f64>> {
        let n = self.m + 1;
        assert_eq!(p.len(), n);
        (0..n)
            .map(|i| {
                let mut row = vec![0.0; n];
                for (j, &pj) in p.iter().enumerate() {
                    if pj == 0.0 {
                        continue;
                    }
                    for (r, &kv) in row.iter_mut().zip(kernel(i, j)) {
                        *r += pj * kv;
                    }
                }
                row
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf2::{enumerate_subspaces, SubspaceBasis};

    #[test]
    fn gaussian_binomial_values() {
        // product formula (4 - 1) / (2 - 1)
        assert_eq!(gaussian_binomial(2, 1), 3);
        for m in 0..10 {
            assert_eq!(gaussian_binomial(m, 0), 1);
            assert_eq!(gaussian_binomial(m, m), 1);
        }
        // (15 · 14) / (3 · 2)
        assert_eq!(gaussian_binomial(4, 2), 35);
        assert_eq!(gaussian_binomial(4, 2), enumerate_subspaces(4, 2).unwrap().len() as u128);
        assert_eq!(gaussian_binomial(3, -1), 0);
        assert_eq!(gaussian_binomial(3, 4), 0);
        assert_eq!(gaussian_binomial(-1, 0), 0);
    }

    #[test]
    fn gaussian_binomial_matches_enumeration() {
        for m in 1..=5 {
            for k in 0..=m {
                assert_eq!(
                    gaussian_binomial(m as i64, k as i64),
                    enumerate_subspaces(m, k).unwrap().len() as u128
                );
            }
        }
    }

    #[test]
    fn gaussian_binomial_product_formula() {
        for m in 1..=10i64 {
            for k in 1..m {
                let mut num = 1u128;
                let mut den = 1u128;
                for l in 0..k {
                    num *= (1u128 << m) - (1u128 << l);
                    den *= (1u128 << k) - (1u128 << l);
                }
                assert_eq!(num % den, 0);
                assert_eq!(gaussian_binomial(m, k), num / den);
                let lg = log2_gaussian_binomial(m, k);
                assert!((lg - (gaussian_binomial(m, k) as f64).log2()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn small_kernel_examples() {
        let k = intersection_kernel(2, 1, 1);
        assert!((k[1] - 1.0 / 3.0).abs() < 1e-15 && (k[0] - 2.0 / 3.0).abs() < 1e-15);
        let k = sum_kernel(2, 1, 1);
        assert!((k[1] - 1.0 / 3.0).abs() < 1e-15 && (k[2] - 2.0 / 3.0).abs() < 1e-15);
        for m in 1..=6 {
            for j in 0..=m {
                let full = intersection_kernel(m, m, j);
                let zero = sum_kernel(m, 0, j);
                for k in 0..=m {
                    let delta = if k == j { 1.0 } else { 0.0 };
                    assert!((full[k] - delta).abs() < 1e-14);
                    assert!((zero[k] - delta).abs() < 1e-14);
                }
            }
        }
    }

    /// Exact frequencies over every random subspace for one fixed subspace
    /// per dimension.
    fn brute_force(m: usize) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>) {
        let by_dim: Vec<Vec<SubspaceBasis>> =
            (0..=m).map(|k| enumerate_subspaces(m, k).unwrap()).collect();
        let n = m + 1;
        let mut inter = vec![vec![vec![0.0; n]; n]; n];
        let mut sum = vec![vec![vec![0.0; n]; n]; n];
        for i in 0..n {
            // the kernel is the same for every fixed A; average over all of them anyway
            for a in &by_dim[i] {
                for j in 0..n {
                    let total = (by_dim[i].len() * by_dim[j].len()) as f64;
                    for b in &by_dim[j] {
                        inter[i][j][a.intersection(b).unwrap().dim()] += 1.0 / total;
                        sum[i][j][a.sum(b).unwrap().dim()] += 1.0 / total;
                    }
                }
            }
        }
        (inter, sum)
    }

    #[test]
    fn kernels_match_subspace_enumeration() {
        for m in 1..=4 {
            let (inter, sum) = brute_force(m);
            let table = KernelTable::new(m);
            for i in 0..=m {
                for j in 0..=m {
                    for k in 0..=m {
                        assert!((table.intersect(i, j)[k] - inter[i][j][k]).abs() < 1e-12);
                        assert!((table.sum(i, j)[k] - sum[i][j][k]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn normalization_support_and_symmetry() {
        for m in 1..=15 {
            let t = KernelTable::new(m);
            for i in 0..=m {
                for j in 0..=m {
                    let ki = t.intersect(i, j);
                    let ks = t.sum(i, j);
                    assert!((ki.iter().sum::<f64>() - 1.0).abs() < 1e-10, "m={m} i={i} j={j}");
                    assert!((ks.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                    for k in 0..=m {
                        let inside_i = (i + j).saturating_sub(m) <= k && k <= i.min(j);
                        let inside_s = i.max(j) <= k && k <= (i + j).min(m);
                        assert!(ki[k] >= 0.0 && ks[k] >= 0.0);
                        if !inside_i {
                            assert_eq!(ki[k], 0.0);
                        }
                        if !inside_s {
                            assert_eq!(ks[k], 0.0);
                        }
                        assert!((ki[k] - t.intersect(j, i)[k]).abs() < 1e-10);
                        assert!((ks[k] - t.intersect(m - i, m - j)[m - k]).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn cache_returns_shared_table() {
        let a = KernelTable::cached(5);
        let b = KernelTable::cached(5);
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(a.m(), 5);
    }
}

//! Banded LU factorization with partial pivoting over complex entries,
//! LAPACK band-storage layout. The ring-major node ordering used by the
//! polar meshes keeps the assembled matrices inside a band of width
//! n_theta + 1, so a band solver is the natural direct factorization at
//! this scale. Pivoting fills the upper band to kl + ku; storage is
//! allocated for that from the start.

use num_complex::Complex64;

use crate::sparse::CsrMatrix;

/// Factorization failed: the pivot in `column` fell below the caller's
/// floor, i.e. the matrix is singular to working precision.
#[derive(Debug, Clone, Copy)]
pub struct Singular {
    pub column: usize,
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// Column-major band storage, ldab = 2*kl + ku + 1 rows per column.
    /// A(i, j) lives at row kl + ku + i - j of column j.
    ab: Vec<Complex64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    /// Factors a matrix given by summed (row, col, value) entries.
    /// `pivot_floor` is an absolute magnitude below which a pivot counts
    /// as zero; pass `rel_floor * max_abs_entry`.
    pub fn factor(
        n: usize,
        kl: usize,
        ku: usize,
        entries: impl Iterator<Item = (usize, usize, Complex64)>,
        pivot_floor: f64,
    ) -> Result<Self, Singular> {
        assert!(n > 0);
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![Complex64::new(0.0, 0.0); ldab * n];
        for (i, j, v) in entries {
            debug_assert!((i >= j && i - j <= kl) || (j >= i && j - i <= ku));
            ab[j * ldab + (kl + ku + i - j)] += v;
        }
        let mut ipiv = vec![0usize; n];

        let at = |ab: &Vec<Complex64>, i: usize, j: usize| ab[j * ldab + (kl + ku + i - j)];
        let kuf = kl + ku; // upper bandwidth after fill

        for k in 0..n {
            let i_max = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = at(&ab, k, k).norm();
            for i in (k + 1)..=i_max {
                let mag = at(&ab, i, k).norm();
                if mag > best {
                    best = mag;
                    p = i;
                }
            }
            if !(best > pivot_floor) || !best.is_finite() {
                return Err(Singular { column: k });
            }
            ipiv[k] = p;
            if p != k {
                let j_max = (k + kuf).min(n - 1);
                for j in k..=j_max {
                    let a = j * ldab + (kl + ku + k - j);
                    let b = j * ldab + (kl + ku + p - j);
                    ab.swap(a, b);
                }
            }
            let pivot = at(&ab, k, k);
            for i in (k + 1)..=i_max {
                let idx = k * ldab + (kl + ku + i - k);
                let l = ab[idx] / pivot;
                ab[idx] = l;
                if l != Complex64::new(0.0, 0.0) {
                    let j_max = (k + kuf).min(n - 1);
                    for j in (k + 1)..=j_max {
                        let upd = at(&ab, k, j) * l;
                        ab[j * ldab + (kl + ku + i - j)] -= upd;
                    }
                }
            }
        }
        Ok(BandedLu { n, kl, ku, ab, ipiv })
    }

    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        assert_eq!(b.len(), self.n);
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let ldab = 2 * kl + ku + 1;
        let kuf = kl + ku;
        let at = |i: usize, j: usize| self.ab[j * ldab + (kl + ku + i - j)];
        // forward: apply P and L
        for k in 0..n {
            b.swap(k, self.ipiv[k]);
            let i_max = (k + kl).min(n - 1);
            let bk = b[k];
            for i in (k + 1)..=i_max {
                b[i] -= at(i, k) * bk;
            }
        }
        // backward: U x = y
        for k in (0..n).rev() {
            let j_max = (k + kuf).min(n - 1);
            let mut acc = b[k];
            for j in (k + 1)..=j_max {
                acc -= at(k, j) * b[j];
            }
            b[k] = acc / at(k, k);
        }
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Bandwidth of the union sparsity pattern of `mats`.
pub fn union_bandwidth(mats: &[&CsrMatrix]) -> usize {
    mats.iter().map(|m| m.bandwidth()).max().unwrap_or(0)
}

/// Factors sum_k coeff_k * M_k with all M_k real CSR of equal size.
/// The pivot floor is `rel_floor` times the largest combined magnitude.
pub fn factor_combination(
    terms: &[(Complex64, &CsrMatrix)],
    rel_floor: f64,
) -> Result<BandedLu, Singular> {
    let n = terms[0].1.n;
    let bw = union_bandwidth(&terms.iter().map(|&(_, m)| m).collect::<Vec<_>>());
    let mut scale = 0.0f64;
    for &(c, m) in terms {
        scale = scale.max(c.norm() * m.max_abs());
    }
    let entries = terms
        .iter()
        .flat_map(|&(c, m)| m.iter_entries().map(move |(i, j, v)| (i, j, c * v)));
    BandedLu::factor(n, bw, bw, entries, rel_floor * scale.max(f64::MIN_POSITIVE))
}

//! Minimal compressed sparse row storage for the real symmetric matrices
//! produced by assembly. Rows are sorted by column and duplicate-free;
//! construction from triplets merges duplicates by summation.

use num_complex::Complex64;

#[derive(Debug, Clone, Default)]
pub struct TripletList {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletList {
    pub fn new(n: usize) -> Self {
        TripletList { n, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push((row, col, value));
    }

    /// Adds a dense element block scattered to global indices.
    pub fn push_block<const K: usize>(&mut self, idx: [usize; K], block: [[f64; K]; K]) {
        for (i, &gi) in idx.iter().enumerate() {
            for (j, &gj) in idx.iter().enumerate() {
                if block[i][j] != 0.0 {
                    self.push(gi, gj, block[i][j]);
                }
            }
        }
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.n, &self.entries)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in entries {
            per_row[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut per_row {
            row.sort_unstable_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn zeros(n: usize) -> Self {
        CsrMatrix { n, row_ptr: vec![0; n + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// y = A x over complex vectors; A is real.
    pub fn mul_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
    }

    pub fn mul_complex_alloc(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.n];
        self.mul_complex(x, &mut y);
        y
    }

    pub fn mul_real(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            y[i] = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// x^H A y for real A; the first argument is conjugated.
    pub fn sesquilinear(&self, x: &[Complex64], y: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.n {
            let mut row_acc = Complex64::new(0.0, 0.0);
            for (j, v) in self.row(i) {
                row_acc += v * y[j];
            }
            acc += x[i].conj() * row_acc;
        }
        acc
    }

    /// Entrywise sum; patterns need not match.
    pub fn add(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.n, other.n);
        let entries: Vec<(usize, usize, f64)> =
            self.iter_entries().chain(other.iter_entries()).collect();
        CsrMatrix::from_triplets(self.n, &entries)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest |i - j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut b = 0usize;
        for (i, j, _) in self.iter_entries() {
            b = b.max(i.abs_diff(j));
        }
        b
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.iter_entries().all(|(i, j, v)| (self.get(j, i) - v).abs() <= tol)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.iter_entries() {
            d[(i, j)] = v;
        }
        d
    }
}

//! Compressed sparse row storage over interior degrees of freedom.

use alloc::vec;
use alloc::vec::Vec;

/// Square CSR matrix. Column indices within a row are sorted and the diagonal
/// is always stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl CsrMatrix {
    /// Zero matrix with the given row structure. Each row must be sorted,
    /// duplicate-free and contain the diagonal.
    pub fn from_rows(rows: &[Vec<usize>], symmetric: bool) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            debug_assert!(row.windows(2).all(|w| w[0] < w[1]));
            debug_assert!(row.binary_search(&i).is_ok());
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix { n, row_ptr, col_idx, values: vec![0.0; nnz], symmetric }
    }

    /// Builds a matrix from coordinate triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)], symmetric: bool) -> Self {
        let mut rows = vec![Vec::new(); n];
        for (i, row) in rows.iter_mut().enumerate() {
            row.push(i);
        }
        for &(i, j, _) in triplets {
            rows[i].push(j);
        }
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
        }
        let mut m = Self::from_rows(&rows, symmetric);
        for &(i, j, v) in triplets {
            m.add(i, j, v);
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let rows: Vec<Vec<usize>> = (0..d.len()).map(|i| vec![i]).collect();
        let mut m = Self::from_rows(&rows, true);
        m.values.copy_from_slice(d);
        m
    }

    /// Same structure, all values zero.
    pub fn zeroed_like(&self) -> Self {
        CsrMatrix { values: vec![0.0; self.values.len()], ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn set_symmetric(&mut self, symmetric: bool) {
        self.symmetric = symmetric;
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.col_idx[start..self.row_ptr[i + 1]]
            .binary_search(&j)
            .ok()
            .map(|k| start + k)
    }

    /// Entry `(i, j)`, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds `v` to entry `(i, j)`.
    ///
    /// # Panics
    /// If `(i, j)` is not part of the sparsity pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside the sparsity pattern"));
        self.values[k] += v;
    }

    pub fn diagonal_values(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, v)| v * x[j]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| {
                let (cols, vals) = self.row(i);
                x[i] * cols.iter().zip(vals).map(|(&j, v)| v * y[j]).sum::<f64>()
            })
            .sum()
    }

    /// `self += alpha * other`; both must share the same pattern.
    pub fn add_scaled(&mut self, alpha: f64, other: &CsrMatrix) {
        assert_eq!(self.col_idx, other.col_idx, "patterns differ");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        self.symmetric &= other.symmetric;
    }

    /// Adds `d[i]` to each diagonal entry.
    pub fn add_diagonal(&mut self, d: &[f64]) {
        for (i, di) in d.iter().enumerate() {
            self.add(i, i, *di);
        }
    }

    /// Coordinate listing `(i, j, value)` of the stored entries.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn transpose(&self) -> CsrMatrix {
        let triplets: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        CsrMatrix::from_triplets(self.n, &triplets, self.symmetric)
    }
}

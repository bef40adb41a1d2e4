//! Column-compressed sparse matrices and sparse vectors.

use std::collections::HashMap;

use crate::scalar::Scalar;

/// Sorted `(index, value)` pairs with no explicit zeros.
pub type SparseVec<S> = Vec<(usize, S)>;

/// Column-compressed matrix, built one column at a time.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCols<S> {
    n_rows: usize,
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<S>,
}

impl<S: Scalar> SparseCols<S> {
    pub fn new(n_rows: usize) -> Self {
        SparseCols { n_rows, col_ptr: vec![0], rows: Vec::new(), vals: Vec::new() }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, nnz: usize) -> Self {
        let mut col_ptr = Vec::with_capacity(n_cols + 1);
        col_ptr.push(0);
        SparseCols { n_rows, col_ptr, rows: Vec::with_capacity(nnz), vals: Vec::with_capacity(nnz) }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::with_capacity(n, n, n);
        for j in 0..n {
            m.push_column(vec![(j, S::one())]);
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.rows.len()
    }

    /// Appends a column. Entries must be sorted by row; zeros are dropped.
    pub fn push_column(&mut self, entries: SparseVec<S>) {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0), "column entries must be sorted");
        for (i, v) in entries {
            assert!(i < self.n_rows, "row {i} out of range {}", self.n_rows);
            if !v.is_zero() {
                self.rows.push(i);
                self.vals.push(v);
            }
        }
        self.col_ptr.push(self.rows.len());
    }

    pub fn col(&self, j: usize) -> (&[usize], &[S]) {
        let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
        (&self.rows[a..b], &self.vals[a..b])
    }

    pub fn col_vec(&self, j: usize) -> SparseVec<S> {
        let (r, v) = self.col(j);
        r.iter().copied().zip(v.iter().cloned()).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        let (r, v) = self.col(j);
        match r.binary_search(&i) {
            Ok(p) => v[p].clone(),
            Err(_) => S::zero(),
        }
    }

    /// Dense `y = M x`.
    pub fn matvec(&self, x: &[S]) -> Vec<S> {
        let mut y = vec![S::zero(); self.n_rows];
        for j in 0..self.n_cols() {
            if x[j].is_zero() {
                continue;
            }
            let (r, v) = self.col(j);
            for (i, a) in r.iter().zip(v) {
                y[*i] = y[*i].clone() + a.clone() * x[j].clone();
            }
        }
        y
    }

    /// Dense `y = M^* x` (conjugate transpose).
    pub fn matvec_adjoint(&self, x: &[S]) -> Vec<S> {
        (0..self.n_cols())
            .map(|j| {
                let (r, v) = self.col(j);
                r.iter().zip(v).fold(S::zero(), |acc, (i, a)| acc + a.conj() * x[*i].clone())
            })
            .collect()
    }

    /// `M x` for a sparse `x`.
    pub fn mul_sparse(&self, x: &[(usize, S)]) -> SparseVec<S> {
        let mut acc = Accumulator::new();
        for (j, xj) in x {
            let (r, v) = self.col(*j);
            for (i, a) in r.iter().zip(v) {
                acc.add(*i, a.clone() * xj.clone());
            }
        }
        acc.into_sorted()
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> SparseCols<T> {
        let mut out = SparseCols::with_capacity(self.n_rows, self.n_cols(), self.nnz());
        for j in 0..self.n_cols() {
            let (r, v) = self.col(j);
            out.push_column(r.iter().copied().zip(v.iter().map(&f)).collect());
        }
        out
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, &S)> + '_ {
        (0..self.n_cols()).flat_map(move |j| {
            let (r, v) = self.col(j);
            r.iter().zip(v).map(move |(i, a)| (*i, j, a))
        })
    }
}

/// Scatter-add accumulator for building sparse columns.
pub struct Accumulator<S> {
    map: HashMap<usize, S>,
}

impl<S: Scalar> Default for Accumulator<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Accumulator<S> {
    pub fn new() -> Self {
        Accumulator { map: HashMap::new() }
    }

    pub fn add(&mut self, i: usize, v: S) {
        match self.map.get_mut(&i) {
            Some(cur) => *cur = cur.clone() + v,
            None => {
                self.map.insert(i, v);
            }
        }
    }

    pub fn add_scaled(&mut self, x: &[(usize, S)], s: &S) {
        for (i, v) in x {
            self.add(*i, v.clone() * s.clone());
        }
    }

    pub fn into_sorted(self) -> SparseVec<S> {
        let mut out: SparseVec<S> = self.map.into_iter().filter(|(_, v)| !v.is_zero()).collect();
        out.sort_unstable_by_key(|e| e.0);
        out
    }
}

pub fn sparse_to_dense<S: Scalar>(x: &[(usize, S)], n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); n];
    for (i, v) in x {
        out[*i] = v.clone();
    }
    out
}

pub fn dense_to_sparse<S: Scalar>(x: &[S]) -> SparseVec<S> {
    x.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(|(i, v)| (i, v.clone())).collect()
}

pub fn norm2<S: Scalar>(x: &[S]) -> f64 {
    x.iter().fold(0.0, |a, v| a + v.modulus_sq()).sqrt()
}

pub fn sparse_norm2<S: Scalar>(x: &[(usize, S)]) -> f64 {
    x.iter().fold(0.0, |a, (_, v)| a + v.modulus_sq()).sqrt()
}

pub fn sparse_sub<S: Scalar>(a: &[(usize, S)], b: &[(usize, S)]) -> SparseVec<S> {
    let mut acc = Accumulator::new();
    for (i, v) in a {
        acc.add(*i, v.clone());
    }
    for (i, v) in b {
        acc.add(*i, -v.clone());
    }
    acc.into_sorted()
}

pub fn sparse_add_scaled<S: Scalar>(a: &[(usize, S)], b: &[(usize, S)], s: &S) -> SparseVec<S> {
    let mut acc = Accumulator::new();
    for (i, v) in a {
        acc.add(*i, v.clone());
    }
    acc.add_scaled(b, s);
    acc.into_sorted()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_adjoint() {
        let mut m = SparseCols::<f64>::new(3);
        m.push_column(vec![(0, 1.0), (2, 2.0)]);
        m.push_column(vec![(1, -1.0)]);
        assert_eq!(m.matvec(&[1.0, 2.0]), vec![1.0, -2.0, 2.0]);
        assert_eq!(m.matvec_adjoint(&[1.0, 1.0, 1.0]), vec![3.0, -1.0]);
        assert_eq!(m.get(2, 0), 2.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.mul_sparse(&[(1, 3.0)]), vec![(1, -3.0)]);
    }

    #[test]
    fn zeros_are_not_stored() {
        let mut m = SparseCols::<f64>::new(2);
        m.push_column(vec![(0, 0.0), (1, 1.0)]);
        assert_eq!(m.nnz(), 1);
    }
}

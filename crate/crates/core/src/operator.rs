//! The shift `T` and its relatives as sparse matrices, projections,
//! operator norms, and the block estimates on a truncation.

use std::ops::RangeInclusive;
use std::time::Instant;

use nalgebra::{ComplexField, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::basis::BasisMap;
use crate::error::{LabError, Result};
use crate::polynet::Poly;
use crate::report::Entry;
use crate::scalar::Scalar;
use crate::schedule::StageSchedule;
use crate::sparse::{Accumulator, SparseCols, SparseVec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    E,
    F,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    FullT,
    /// `T_xi e_j = e_{j+1}` for `j < xi`, `T_xi e_xi = 0`.
    TruncatedShift(usize),
    AOperator,
}

#[derive(Clone, Debug)]
pub struct TruncatedOperator<S> {
    pub n_trunc: usize,
    pub frame: Frame,
    pub kind: OperatorKind,
    pub matrix: SparseCols<S>,
}

impl<S: Scalar> TruncatedOperator<S> {
    pub fn apply(&self, x: &[(usize, S)]) -> SparseVec<S> {
        self.matrix.mul_sparse(x)
    }

    /// `M^m x` by repeated sparse products.
    pub fn apply_power(&self, x: &[(usize, S)], m: usize) -> SparseVec<S> {
        let mut y = x.to_vec();
        for _ in 0..m {
            if y.is_empty() {
                break;
            }
            y = self.apply(&y);
        }
        y
    }
}

/// The forward shift in the e-frame on `[0, n]` with the last column zero.
pub fn shift_matrix<S: Scalar>(n: usize) -> SparseCols<S> {
    let mut m = SparseCols::with_capacity(n + 1, n + 1, n);
    for j in 0..=n {
        m.push_column(if j < n { vec![(j + 1, S::one())] } else { vec![] });
    }
    m
}

pub fn full_shift<S: Scalar>(n_trunc: usize) -> TruncatedOperator<S> {
    TruncatedOperator { n_trunc, frame: Frame::E, kind: OperatorKind::FullT, matrix: shift_matrix(n_trunc) }
}

pub fn truncated_shift<S: Scalar>(xi: usize) -> TruncatedOperator<S> {
    TruncatedOperator { n_trunc: xi, frame: Frame::E, kind: OperatorKind::TruncatedShift(xi), matrix: shift_matrix(xi) }
}

/// `T` in the f-frame: column `j` is `E_in_F (shift (F_in_E col j))`, with
/// `e_{N+1}` dropped.
pub fn matrix_of_t_in_f<S: Scalar>(basis: &BasisMap<S>) -> TruncatedOperator<S> {
    let n = basis.n_trunc;
    let cols: Vec<SparseVec<S>> = (0..=n)
        .into_par_iter()
        .map(|j| {
            let mut acc = Accumulator::new();
            let (rows, vals) = basis.f_in_e.col(j);
            for (i, v) in rows.iter().zip(vals) {
                if i + 1 <= n {
                    acc.add_scaled(&basis.e_in_f.col_vec(i + 1), v);
                }
            }
            acc.into_sorted()
        })
        .collect();
    let mut m = SparseCols::with_capacity(n + 1, n + 1, cols.iter().map(|c| c.len()).sum());
    for c in cols {
        m.push_column(c);
    }
    TruncatedOperator { n_trunc: n, frame: Frame::F, kind: OperatorKind::FullT, matrix: m }
}

/// Shift of an e-frame vector by `m`, dropping what leaves `[0, n]`.
pub fn shift_e<S: Scalar>(x: &[(usize, S)], m: usize, n: usize) -> SparseVec<S> {
    x.iter().filter(|(i, _)| i + m <= n).map(|(i, v)| (i + m, v.clone())).collect()
}

/// `T^m x` for an f-frame vector, computed through the e-frame.
pub fn power_f<S: Scalar>(basis: &BasisMap<S>, x: &[(usize, S)], m: usize) -> SparseVec<S> {
    let xe = basis.f_in_e.mul_sparse(x);
    basis.e_in_f.mul_sparse(&shift_e(&xe, m, basis.n_trunc))
}

/// `p(T) x` for an f-frame vector and coefficients `a_u`, through the e-frame.
pub fn poly_f<S: Scalar>(basis: &BasisMap<S>, coeffs: &[S], x: &[(usize, S)]) -> SparseVec<S> {
    let xe = basis.f_in_e.mul_sparse(x);
    let mut acc = Accumulator::new();
    for (u, a) in coeffs.iter().enumerate() {
        if !a.is_zero() {
            acc.add_scaled(&shift_e(&xe, u, basis.n_trunc), a);
        }
    }
    basis.e_in_f.mul_sparse(&acc.into_sorted())
}

/// `p(T) x` for an e-frame vector on `[0, n]`; with `n = xi` this is
/// `p(T_xi) x`.
pub fn apply_poly_e<S: Scalar>(p: &Poly, x: &[(usize, S)], n: usize) -> Result<SparseVec<S>> {
    let a: Vec<S> = p.coeffs_in()?;
    let mut acc = Accumulator::new();
    for (u, c) in a.iter().enumerate() {
        if !c.is_zero() {
            acc.add_scaled(&shift_e(x, u, n), c);
        }
    }
    Ok(acc.into_sorted())
}

/// f-frame norm of an e-frame vector.
pub fn norm_in_f<S: Scalar>(basis: &BasisMap<S>, x: &[(usize, S)]) -> f64 {
    crate::sparse::sparse_norm2(&basis.e_in_f.mul_sparse(x))
}

/// Largest index `j` such that `T^m f_j` stays inside the truncation for
/// every shifted e-coordinate.
pub fn max_column_for_power(n_trunc: usize, m: usize) -> Option<usize> {
    n_trunc.checked_sub(m)
}

/// Columns `T^m f_j` for `j` in `cols`, in the f-frame.
pub fn power_columns<S: Scalar>(basis: &BasisMap<S>, cols: RangeInclusive<usize>, m: usize) -> Vec<(usize, SparseVec<S>)> {
    cols.into_par_iter().map(|j| (j, power_f(basis, &[(j, S::one())], m))).collect()
}

/// Coordinate projection onto `[lo, hi]` in the f-frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Projection {
    pub lo: usize,
    pub hi: usize,
}

impl Projection {
    pub fn new(lo: usize, hi: usize) -> Self {
        Projection { lo, hi }
    }

    pub fn contains(&self, j: usize) -> bool {
        self.lo <= j && j <= self.hi
    }

    pub fn apply<S: Scalar>(&self, x: &[(usize, S)]) -> SparseVec<S> {
        x.iter().filter(|(i, _)| self.contains(*i)).cloned().collect()
    }

    pub fn apply_complement<S: Scalar>(&self, x: &[(usize, S)]) -> SparseVec<S> {
        x.iter().filter(|(i, _)| !self.contains(*i)).cloned().collect()
    }
}

// ---------------------------------------------------------------------------
// Norms

pub const DENSE_CAP: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormMethod {
    /// Exact singular values of each independent block.
    DenseSvd,
    /// Power iteration on `M^* M` from a seeded random start.
    PowerIter { tol: f64, max_iter: usize, seed: u64 },
}

impl NormMethod {
    pub fn power_default() -> Self {
        NormMethod::PowerIter { tol: 1e-10, max_iter: 20_000, seed: 0x5eed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Size (columns) of the largest independent block.
    pub largest_block: usize,
}

/// Columns as `(id, entries)` with arbitrary row indices.
type Columns<F> = Vec<SparseVec<F>>;

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Splits columns into groups with pairwise disjoint row supports.
/// `M^* M` is block diagonal across groups, so the norm is the maximum of
/// the group norms.
fn split_blocks<F: Scalar>(cols: &Columns<F>) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..cols.len()).collect();
    let mut owner: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    for (c, col) in cols.iter().enumerate() {
        for (r, _) in col {
            match owner.get(r) {
                Some(&o) => {
                    let (a, b) = (find(&mut parent, o), find(&mut parent, c));
                    if a != b {
                        parent[a] = b;
                    }
                }
                None => {
                    owner.insert(*r, c);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for c in 0..cols.len() {
        if cols[c].is_empty() {
            continue;
        }
        let root = find(&mut parent, c);
        groups.entry(root).or_default().push(c);
    }
    groups.into_values().collect()
}

fn dense_block<F: Scalar + ComplexField<RealField = f64> + Copy>(cols: &Columns<F>, group: &[usize]) -> DMatrix<F> {
    let mut rows: Vec<usize> = group.iter().flat_map(|&c| cols[c].iter().map(|(r, _)| *r)).collect();
    rows.sort_unstable();
    rows.dedup();
    let mut m = DMatrix::<F>::zeros(rows.len(), group.len());
    for (k, &c) in group.iter().enumerate() {
        for (r, v) in &cols[c] {
            let i = rows.binary_search(r).expect("row present");
            m[(i, k)] = *v;
        }
    }
    m
}

fn dense_norm<F: Scalar + ComplexField<RealField = f64> + Copy>(m: DMatrix<F>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.iter().map(|v| Scalar::modulus_sq(v)).sum::<f64>().sqrt();
    }
    if m.nrows().max(m.ncols()) <= 800 {
        return m.singular_values().max();
    }
    // Gram matrix on the smaller side.
    let g = if m.ncols() <= m.nrows() { m.adjoint() * &m } else { &m * m.adjoint() };
    let ev = g.symmetric_eigenvalues();
    ev.iter().map(|v| v.real()).fold(0.0, f64::max).max(0.0).sqrt()
}

fn power_norm<F: Scalar + ComplexField<RealField = f64> + Copy>(
    cols: &Columns<F>,
    group: &[usize],
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> (f64, bool, usize) {
    let mut rows: Vec<usize> = group.iter().flat_map(|&c| cols[c].iter().map(|(r, _)| *r)).collect();
    rows.sort_unstable();
    rows.dedup();
    let local: Vec<Vec<(usize, F)>> = group
        .iter()
        .map(|&c| cols[c].iter().map(|(r, v)| (rows.binary_search(r).expect("row present"), *v)).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<F> = (0..group.len()).map(|_| F::from_real(rng.gen::<f64>() - 0.5)).collect();
    let mut prev = 0.0;
    for it in 1..=max_iter {
        let nx = crate::sparse::norm2(&x);
        if nx == 0.0 {
            return (0.0, true, it);
        }
        for v in &mut x {
            *v = *v * F::from_real(1.0 / nx);
        }
        let mut y = vec![<F as Scalar>::zero(); rows.len()];
        for (k, col) in local.iter().enumerate() {
            for (r, v) in col {
                y[*r] = y[*r] + *v * x[k];
            }
        }
        let ny = crate::sparse::norm2(&y);
        let z: Vec<F> = local
            .iter()
            .map(|col| col.iter().fold(<F as Scalar>::zero(), |acc, (r, v)| acc + Scalar::conj(v) * y[*r]))
            .collect();
        let est = ny;
        if it > 1 && (est - prev).abs() <= tol * est.max(f64::MIN_POSITIVE) {
            return (est, true, it);
        }
        prev = est;
        x = z;
    }
    (prev, false, max_iter)
}

/// Operator norm of the matrix whose columns are given.
pub fn norm_of_columns<S: Scalar>(cols: &[SparseVec<S>], method: NormMethod) -> Result<NormEstimate> {
    let cols: Columns<S::Float> = cols
        .iter()
        .map(|c| c.iter().map(|(i, v)| (*i, v.to_float())).filter(|(_, v)| !Scalar::is_zero(v)).collect())
        .collect();
    let groups = split_blocks(&cols);
    let largest = groups.iter().map(|g| g.len()).max().unwrap_or(0);
    let results: Vec<Result<(f64, bool, usize)>> = groups
        .par_iter()
        .map(|g| match method {
            NormMethod::DenseSvd => {
                let m = dense_block(&cols, g);
                if m.nrows().min(m.ncols()) > DENSE_CAP {
                    return Err(LabError::CapExceeded { what: "dense block size", cap: DENSE_CAP });
                }
                Ok((dense_norm(m), true, 1))
            }
            NormMethod::PowerIter { tol, max_iter, seed } => {
                if g.len() == 1 {
                    Ok((crate::sparse::sparse_norm2(&cols[g[0]]), true, 1))
                } else {
                    Ok(power_norm(&cols, g, tol, max_iter, seed))
                }
            }
        })
        .collect();
    let mut out = NormEstimate { value: 0.0, converged: true, iterations: 0, largest_block: largest };
    for r in results {
        let (v, conv, it) = r?;
        out.value = out.value.max(v);
        out.converged &= conv;
        out.iterations = out.iterations.max(it);
    }
    Ok(out)
}

/// Dense per block where possible, power iteration on oversized blocks.
pub fn norm_of_columns_auto<S: Scalar>(cols: &[SparseVec<S>]) -> NormEstimate {
    match norm_of_columns(cols, NormMethod::DenseSvd) {
        Ok(n) => n,
        Err(_) => norm_of_columns(cols, NormMethod::power_default()).expect("power iteration has no cap"),
    }
}

pub fn op_norm<S: Scalar>(m: &SparseCols<S>, method: NormMethod) -> Result<NormEstimate> {
    let cols: Vec<SparseVec<S>> = (0..m.n_cols()).map(|j| m.col_vec(j)).collect();
    norm_of_columns(&cols, method)
}

/// `|| pi_rows M pi_cols ||`.
pub fn block_norm<S: Scalar>(
    m: &SparseCols<S>,
    rows: RangeInclusive<usize>,
    cols: RangeInclusive<usize>,
    method: NormMethod,
) -> Result<NormEstimate> {
    let cs: Vec<SparseVec<S>> = cols
        .filter(|&j| j < m.n_cols())
        .map(|j| m.col_vec(j).into_iter().filter(|(i, _)| rows.contains(i)).collect())
        .collect();
    norm_of_columns(&cs, method)
}

fn restrict_rows<S: Scalar>(cols: &[(usize, SparseVec<S>)], rows: &RangeInclusive<usize>) -> Vec<SparseVec<S>> {
    cols.iter().map(|(_, c)| c.iter().filter(|(i, _)| rows.contains(i)).cloned().collect()).collect()
}

// ---------------------------------------------------------------------------
// Block estimates

/// Index ranges of stage `n`: `(xi_n, nu_n, end)` where `end` is
/// `nu_{n+1}` when stage `n+1` is built and the truncation end otherwise.
fn stage_ranges(s: &StageSchedule, n: usize, n_trunc: usize) -> (usize, usize, usize) {
    let st = s.stage(n);
    let end = if n < s.n_stages() { s.stage(n + 1).nu.min(n_trunc) } else { n_trunc };
    (st.xi, st.nu, end)
}

/// Block-norm estimates of `T`, `T^m` and `T^{c_k}` for one stage.
///
/// Claims measured against `[nu_n + 1, nu_{n+1}]` are gated (pass/fail);
/// the remaining ones are reported as measurements.
pub fn block_estimates<S: Scalar>(t: &TruncatedOperator<S>, basis: &BasisMap<S>, s: &StageSchedule, n: usize) -> Result<Vec<Entry>> {
    let st = s.stage(n);
    let delta = st.delta;
    let n_trunc = basis.n_trunc;
    let (xi, nu, end) = stage_ranges(s, n, n_trunc);
    let xi_end = s.xi(n + 1).min(n_trunc);
    let mut out = Vec::new();
    let dense = NormMethod::DenseSvd;

    let start = Instant::now();
    let v = block_norm(&t.matrix, nu + 1..=end, nu + 1..=end, dense).map(|e| e.value).unwrap_or(f64::NAN);
    out.push(
        Entry::upper(&format!("block.s{n}.local_growth"), "||pi[nu+1,end] T x|| <= (1+delta)||x||, x in [nu+1,end]", 1.0 + delta, v, true)
            .timed(start),
    );
    let start = Instant::now();
    let v = block_norm(&t.matrix, 0..=nu, nu + 1..=end, dense).map(|e| e.value).unwrap_or(f64::NAN);
    out.push(
        Entry::upper(&format!("block.s{n}.leak_down"), "||pi[0,nu] T x|| <= delta||x||, x in [nu+1,end]", delta, v, true)
            .timed(start),
    );
    let start = Instant::now();
    let v = block_norm(&t.matrix, xi + 1..=xi_end, xi + 1..=xi_end, dense).map(|e| e.value).unwrap_or(f64::NAN);
    out.push(
        Entry::upper(&format!("block.s{n}.local_growth_xi"), "||pi[xi+1,xi'] T x|| <= (1+delta)||x||, x in [xi+1,xi']", 1.0 + delta, v, false)
            .with_note("the (b)-fan sits inside this range")
            .timed(start),
    );
    let start = Instant::now();
    let v = block_norm(&t.matrix, 0..=xi, xi + 1..=xi_end, dense).map(|e| e.value).unwrap_or(f64::NAN);
    out.push(
        Entry::upper(&format!("block.s{n}.leak_down_xi"), "||pi[0,xi] T x|| <= delta||x||, x in [xi+1,xi']", delta, v, false)
            .with_note("(b)-working columns feed b e_{j-b} back into [0, xi]")
            .timed(start),
    );

    // powers m < xi/2
    let start = Instant::now();
    let (mut up, mut down) = (0.0f64, 0.0f64);
    for m in 1..xi.div_ceil(2) {
        let hi = end.min(n_trunc.saturating_sub(m));
        if hi <= nu {
            continue;
        }
        let cols = power_columns(basis, nu + 1..=hi, m);
        up = up.max(norm_of_columns_auto(&restrict_rows(&cols, &(nu + 1..=end))).value);
        down = down.max(norm_of_columns_auto(&restrict_rows(&cols, &(0..=nu))).value);
    }
    out.push(
        Entry::upper(&format!("power.s{n}.local_growth"), "max_{m<xi/2} ||pi[nu+1,end] T^m x|| <= 1+eps", 1.0 + st.eps, up, false)
            .timed(start),
    );
    out.push(Entry::upper(&format!("power.s{n}.leak_down"), "max_{m<xi/2} ||pi[0,nu] T^m x|| <= eps", st.eps, down, false));

    // T^{c_k}
    for (k, &c) in st.c.iter().enumerate() {
        let start = Instant::now();
        let hi = end.min(n_trunc.saturating_sub(c));
        if hi <= nu {
            out.push(Entry::info(&format!("fan.s{n}.k{}.local_growth", k + 1), "", f64::NAN).with_note("truncation too short"));
            continue;
        }
        let cols = power_columns(basis, nu + 1..=hi, c);
        let a = norm_of_columns_auto(&restrict_rows(&cols, &(nu + 1..=end))).value;
        let b = norm_of_columns_auto(&restrict_rows(&cols, &(0..=nu))).value;
        out.push(
            Entry::upper(&format!("fan.s{n}.k{}.local_growth", k + 1), "||pi[nu+1,end] T^c x|| <= 4||x||, x in [nu+1,end-c]", 4.0, a, false)
                .timed(start),
        );
        out.push(
            Entry::upper(&format!("fan.s{n}.k{}.leak_down", k + 1), "||pi[0,nu] T^c x|| <= delta||x||, x in [nu+1,end-c]", delta, b, false)
                .with_note(format!("h = {}", st.h)),
        );
    }

    // x in [0, nu], m < nu/2
    let start = Instant::now();
    let mut leak_up = 0.0f64;
    for m in 1..nu.div_ceil(2) {
        let cols = power_columns(basis, 0..=nu, m);
        leak_up = leak_up.max(norm_of_columns_auto(&restrict_rows(&cols, &(nu + 1..=end))).value);
    }
    out.push(
        Entry::upper(&format!("power.s{n}.leak_up"), "max_{m<nu/2} ||pi[nu+1,end] T^m x|| <= delta||x||, x in [0,nu]", delta, leak_up, false)
            .timed(start),
    );
    Ok(out)
}

/// `|| T^{c_k} ||` restricted to the f-span of `(nu, N - c_k]`.
pub fn tail_bound_100<S: Scalar>(basis: &BasisMap<S>, s: &StageSchedule, n: usize, k: usize) -> Result<Entry> {
    let st = s.stage(n);
    let c = *st
        .c
        .get(k - 1)
        .ok_or_else(|| LabError::InvalidArgument(format!("k = {k} beyond {} fan offsets", st.c.len())))?;
    let start = Instant::now();
    let id = format!("tail.s{n}.k{k}");
    let anchor = "||T^c x|| <= 100||x|| when pi[0,nu] x = 0";
    if basis.n_trunc == st.nu {
        return Ok(Entry::upper(&id, anchor, 100.0, 0.0, false).with_note("empty tail"));
    }
    let hi = basis
        .n_trunc
        .checked_sub(c)
        .filter(|&h| h > st.nu)
        .ok_or(LabError::TruncationTooShort { needed: st.nu + 1 + c, n_trunc: basis.n_trunc })?;
    let cols = power_columns(basis, st.nu + 1..=hi, c);
    let cols: Vec<SparseVec<S>> = cols.into_iter().map(|(_, v)| v).collect();
    let est = norm_of_columns_auto(&cols);
    Ok(Entry::upper(&id, anchor, 100.0, est.value, false)
        .with_note(format!("columns ({}, {hi}], h = {}", st.nu, st.h))
        .timed(start))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal_norms() {
        let id = SparseCols::<f64>::identity(3);
        assert!((op_norm(&id, NormMethod::DenseSvd).unwrap().value - 1.0).abs() < 1e-14);
        let mut d = SparseCols::<f64>::new(3);
        d.push_column(vec![(0, 2.0)]);
        d.push_column(vec![(1, 1.0)]);
        d.push_column(vec![(2, 0.5)]);
        assert!((op_norm(&d, NormMethod::DenseSvd).unwrap().value - 2.0).abs() < 1e-14);
        let p = op_norm(&d, NormMethod::power_default()).unwrap();
        assert!((p.value - 2.0).abs() < 1e-9 && p.converged);
    }

    #[test]
    fn coupled_block_matches_dense() {
        // [[1, 1], [0, 1]] has norm (1 + sqrt 5)/2
        let mut m = SparseCols::<f64>::new(2);
        m.push_column(vec![(0, 1.0)]);
        m.push_column(vec![(0, 1.0), (1, 1.0)]);
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((op_norm(&m, NormMethod::DenseSvd).unwrap().value - golden).abs() < 1e-12);
        assert!((op_norm(&m, NormMethod::power_default()).unwrap().value - golden).abs() < 1e-8);
    }

    #[test]
    fn truncated_shift_kills_last_vector() {
        let t = truncated_shift::<f64>(2);
        assert_eq!(t.apply(&[(0, 1.0)]), vec![(1, 1.0)]);
        assert_eq!(t.apply(&[(2, 1.0)]), vec![]);
        assert_eq!(t.apply_power(&[(1, 1.0)], 2), vec![]);
    }

    #[test]
    fn projections() {
        let p = Projection::new(2, 4);
        let x = vec![(1, 1.0), (2, 2.0), (5, 3.0)];
        assert_eq!(p.apply(&x), vec![(2, 2.0)]);
        assert_eq!(p.apply(&p.apply(&x)), p.apply(&x));
        assert_eq!(p.apply_complement(&x), vec![(1, 1.0), (5, 3.0)]);
        assert!(Projection::new(0, 1).apply(&p.apply(&x)).is_empty());
    }
}

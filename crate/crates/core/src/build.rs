//! A validated schedule together with its basis and the matrix of `T`.

use crate::basis::{assemble, BasisMap};
use crate::error::{LabError, Result};
use crate::operator::{matrix_of_t_in_f, norm_in_f, TruncatedOperator};
use crate::scalar::Scalar;
use crate::schedule::StageSchedule;
use crate::sparse::SparseVec;

#[derive(Clone, Debug)]
pub struct Build<S> {
    pub schedule: StageSchedule,
    pub basis: BasisMap<S>,
    /// `T` in the f-frame.
    pub t: TruncatedOperator<S>,
}

impl<S: Scalar> Build<S> {
    /// Builds on the full truncation `[0, xi_final]`.
    pub fn new(schedule: StageSchedule) -> Result<Self> {
        let n = schedule.xi_final;
        Self::with_truncation(schedule, n)
    }

    pub fn with_truncation(schedule: StageSchedule, n_trunc: usize) -> Result<Self> {
        let violations = schedule.validate();
        if !violations.is_empty() {
            return Err(LabError::InvalidSchedule(violations));
        }
        let basis = assemble::<S>(&schedule, n_trunc)?;
        let t = matrix_of_t_in_f(&basis);
        Ok(Build { schedule, basis, t })
    }

    pub fn n_trunc(&self) -> usize {
        self.basis.n_trunc
    }

    /// e-coordinates of an f-frame vector.
    pub fn to_e(&self, x: &[(usize, S)]) -> SparseVec<S> {
        self.basis.f_in_e.mul_sparse(x)
    }

    /// e-coordinates of `pi_[lo, hi] x` for an f-frame vector `x`.
    pub fn pi_e(&self, x: &[(usize, S)], lo: usize, hi: usize) -> SparseVec<S> {
        let part: SparseVec<S> = x.iter().filter(|(i, _)| (lo..=hi).contains(i)).cloned().collect();
        self.to_e(&part)
    }

    /// Norm (f-frame) of an e-frame vector.
    pub fn norm_e(&self, x: &[(usize, S)]) -> f64 {
        norm_in_f(&self.basis, x)
    }

    pub fn check_index(&self, j: usize) -> Result<()> {
        if j > self.n_trunc() {
            return Err(LabError::IndexOutOfRange { index: j, n_trunc: self.n_trunc() });
        }
        Ok(())
    }
}

/// Largest index in the support of a sparse vector.
pub fn max_index<S>(x: &[(usize, S)]) -> Option<usize> {
    x.iter().map(|(i, _)| *i).max()
}

/// Fails unless every index of `x` lies in `[lo, hi]`.
pub fn check_support<S>(x: &[(usize, S)], lo: usize, hi: usize) -> Result<()> {
    if x.iter().any(|(i, _)| *i < lo || *i > hi) {
        return Err(LabError::SupportViolation { lo, hi });
    }
    Ok(())
}

//! The operator `A` with `A e_0 = 0` and `A e_i = e_{i+1}` for `i >= 1`,
//! which agrees with `T` off `e_0` when every fan polynomial vanishes at 0.

use serde::{Deserialize, Serialize};

use crate::build::Build;
use crate::error::{LabError, Result};
use crate::hypercyclic::{certify_hypercyclic_step, Certificate};
use crate::operator::{Frame, OperatorKind, TruncatedOperator};
use crate::polynet::NetConstraint;
use crate::scalar::Scalar;
use crate::sparse::{sparse_norm2, sparse_sub, Accumulator, SparseCols, SparseVec};

#[derive(Clone, Debug)]
pub struct AOperator<S> {
    /// e-frame matrix.
    pub e: TruncatedOperator<S>,
    /// f-frame matrix, by conjugating the e-frame one.
    pub f: TruncatedOperator<S>,
}

/// Refuses unless every stage uses nets with vanishing constant term.
pub fn build_a<S: Scalar>(b: &Build<S>) -> Result<AOperator<S>> {
    for (i, st) in b.schedule.stages.iter().enumerate() {
        if st.net.constraint != NetConstraint::ZeroConstantTerm || !st.fan.iter().all(|p| p.vanishes_at_zero()) {
            return Err(LabError::Refused(format!(
                "stage {} fan does not vanish at 0; A would not be bounded",
                i + 1
            )));
        }
    }
    let n = b.n_trunc();
    let mut e = SparseCols::with_capacity(n + 1, n + 1, n);
    for j in 0..=n {
        e.push_column(if j >= 1 && j < n { vec![(j + 1, S::one())] } else { vec![] });
    }
    let mut f = SparseCols::with_capacity(n + 1, n + 1, b.t.matrix.nnz());
    for j in 0..=n {
        let mut acc = Accumulator::new();
        for (i, v) in b.basis.f_in_e.col_vec(j) {
            acc.add_scaled(&b.basis.e_in_f.mul_sparse(&e.col_vec(i)), &v);
        }
        f.push_column(acc.into_sorted());
    }
    let wrap = |m, frame| TruncatedOperator { n_trunc: n, frame, kind: OperatorKind::AOperator, matrix: m };
    Ok(AOperator { e: wrap(e, Frame::E), f: wrap(f, Frame::F) })
}

/// Columns `j >= 1` where the f-frame matrices of `A` and `T` differ.
pub fn column_mismatches<S: Scalar>(a: &AOperator<S>, b: &Build<S>) -> Vec<usize> {
    (1..=b.n_trunc()).filter(|&j| a.f.matrix.col_vec(j) != b.t.matrix.col_vec(j)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Noncommutation<S> {
    /// `T A e_0` in e-coordinates.
    pub ta_e0: SparseVec<S>,
    /// `A T e_0` in e-coordinates.
    pub at_e0: SparseVec<S>,
    /// `|| (AT - TA) e_0 ||`, a lower bound for `|| AT - TA ||`.
    pub commutator_lower: f64,
}

/// `(T A e_0, A T e_0)`, computed with the f-frame matrices.
pub fn noncommutation_witness<S: Scalar>(a: &AOperator<S>, b: &Build<S>) -> Noncommutation<S> {
    let e0 = b.basis.e_in_f.col_vec(0);
    let ta = b.t.apply(&a.f.apply(&e0));
    let at = a.f.apply(&b.t.apply(&e0));
    Noncommutation {
        ta_e0: b.to_e(&ta),
        at_e0: b.to_e(&at),
        commutator_lower: sparse_norm2(&sparse_sub(&at, &ta)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MembershipBranch {
    /// `<x, e_0> = 0`, so `Ax = Tx`.
    ZeroE0,
    /// `<x, e_0> != 0`: some `T^c x` approaches `e_1`.
    Certified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitMembership {
    pub branch: MembershipBranch,
    pub e0_coordinate: f64,
    /// `|| Ax - Tx ||`.
    pub a_minus_t: f64,
    /// `Ax` has no `f_0` component.
    pub ax_in_h0: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
    /// `(j, min_{m <= steps} || T^m x - f_j ||)` for a sample of `j >= 1`.
    pub h0_distances: Vec<(usize, f64)>,
}

pub fn orbit_membership<S: Scalar>(
    a: &AOperator<S>,
    b: &Build<S>,
    x: &[(usize, S)],
    n: usize,
    sample: &[usize],
    steps: usize,
) -> Result<OrbitMembership> {
    let xe = b.to_e(x);
    let e0 = xe.iter().find(|(i, _)| *i == 0).map(|(_, v)| v.modulus()).unwrap_or(0.0);
    let ax = a.f.apply(x);
    let tx = b.t.apply(x);
    let a_minus_t = sparse_norm2(&sparse_sub(&ax, &tx));
    let ax_in_h0 = ax.iter().all(|(i, v)| *i != 0 || v.is_zero());
    let (branch, certificate) = if e0 == 0.0 {
        (MembershipBranch::ZeroE0, None)
    } else {
        (MembershipBranch::Certified, Some(certify_hypercyclic_step(b, n, x, Some(0.0))?))
    };
    let mut best = vec![f64::INFINITY; sample.len()];
    let mut y = x.to_vec();
    for m in 0..=steps {
        if m > 0 {
            y = b.t.apply(&y);
        }
        for (slot, &j) in best.iter_mut().zip(sample) {
            *slot = slot.min(sparse_norm2(&sparse_sub(&y, &[(j, S::one())])));
        }
    }
    Ok(OrbitMembership {
        branch,
        e0_coordinate: e0,
        a_minus_t,
        ax_in_h0,
        certificate,
        h0_distances: sample.iter().copied().zip(best).collect(),
    })
}

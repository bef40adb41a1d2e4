//! The vectors `f_j` in e-coordinates, the triangular change of basis in
//! both directions, and the lattice descent of (c)-working indices.

use crate::error::{LabError, Result};
use crate::geometry::{index_to_coord, Layout, LatticeCoord, RegionTag};
use crate::scalar::{dyadic_round, Scalar};
use crate::schedule::{StageSchedule, WeightMode, DYADIC_BITS};
use crate::sparse::{Accumulator, SparseCols, SparseVec};

/// Coordinates in the orthonormal frame `(e_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorE<S>(pub SparseVec<S>);

/// Coordinates in the constructed frame `(f_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorF<S>(pub SparseVec<S>);

impl<S: Scalar> VectorE<S> {
    pub fn unit(j: usize) -> Self {
        VectorE(vec![(j, S::one())])
    }
}

impl<S: Scalar> VectorF<S> {
    pub fn unit(j: usize) -> Self {
        VectorF(vec![(j, S::one())])
    }

    pub fn norm(&self) -> f64 {
        crate::sparse::sparse_norm2(&self.0)
    }
}

#[derive(Clone, Debug)]
pub struct BasisMap<S> {
    pub n_trunc: usize,
    /// Column `j` holds the e-coordinates of `f_j`.
    pub f_in_e: SparseCols<S>,
    /// Column `j` holds the f-coordinates of `e_j`.
    pub e_in_f: SparseCols<S>,
    pub layout: Layout,
}

impl<S: Scalar> BasisMap<S> {
    pub fn to_e(&self, x: &VectorF<S>) -> VectorE<S> {
        VectorE(self.f_in_e.mul_sparse(&x.0))
    }

    pub fn to_f(&self, x: &VectorE<S>) -> VectorF<S> {
        VectorF(self.e_in_f.mul_sparse(&x.0))
    }
}

/// Lay-off weight as a scalar of the working field, honoring the weight mode.
pub fn weight_scalar<S: Scalar>(layout: &Layout, j: usize, mode: WeightMode) -> Result<S> {
    let w = layout.layoff_weight(j)?;
    Ok(match mode {
        WeightMode::Float => S::from_f64(w),
        WeightMode::RationalApprox => S::from_f64(dyadic_round(w, DYADIC_BITS)),
    })
}

/// `gamma_n` of a stage, refusing an unresolved (uncalibrated) value.
pub fn stage_gamma(s: &StageSchedule, n: usize) -> Result<f64> {
    let g = s.stage(n).gamma;
    if !(g > 0.0) || !g.is_finite() {
        return Err(LabError::InvalidArgument(format!("gamma of stage {n} is not resolved ({g})")));
    }
    Ok(g)
}

/// Scale factor `gamma 4^{|r|-1}` relating `e_j` to `f_j` on a (c)-working index.
fn working_scale<S: Scalar>(s: &StageSchedule, coord: &LatticeCoord) -> Result<S> {
    let g = S::from_f64(stage_gamma(s, coord.stage)?);
    let four = S::from_f64(4.0);
    let mut out = g;
    for _ in 1..coord.abs_r {
        out = out * four.clone();
    }
    Ok(out)
}

fn fan_poly<S: Scalar>(s: &StageSchedule, stage: usize, t: usize) -> Result<Vec<S>> {
    let st = s.stage(stage);
    let p = st
        .fan
        .get(t - 1)
        .ok_or_else(|| LabError::CoordOutOfRange(format!("net index {t} beyond k = {}", st.fan.len())))?;
    p.coeffs_in::<S>()
}

/// e-coordinates of `f_j`.
pub fn build_f<S: Scalar>(j: usize, s: &StageSchedule, layout: &Layout) -> Result<SparseVec<S>> {
    match layout.classify(j)? {
        RegionTag::Seed => Ok(vec![(j, S::one())]),
        RegionTag::BLayOff { .. } | RegionTag::CLayOff { .. } | RegionTag::TailLayOff { .. } => {
            Ok(vec![(j, weight_scalar::<S>(layout, j, s.weight_mode)?)])
        }
        RegionTag::BWorking { stage, .. } => {
            let b = s.stage(stage).b;
            Ok(vec![(j - b, -S::from_f64(b as f64)), (j, S::one())])
        }
        RegionTag::CWorking(coord) => {
            let st = s.stage(coord.stage);
            let a = fan_poly::<S>(s, coord.stage, coord.t)?;
            let inv = S::one() / working_scale::<S>(s, &coord)?;
            let base = j - st.c[coord.t - 1];
            let mut out: SparseVec<S> = a
                .iter()
                .enumerate()
                .filter(|(_, v)| !v.is_zero())
                .map(|(u, v)| (base + u, -(v.clone() * inv.clone())))
                .collect();
            out.push((j, inv));
            Ok(out)
        }
    }
}

/// Builds both triangular maps on `[0, n_trunc]`. The inverse is obtained
/// column by column by forward substitution.
pub fn assemble<S: Scalar>(s: &StageSchedule, n_trunc: usize) -> Result<BasisMap<S>> {
    let layout = Layout::new(s);
    if n_trunc > layout.n_trunc() {
        return Err(LabError::IndexOutOfRange { index: n_trunc, n_trunc: layout.n_trunc() });
    }
    let n = n_trunc + 1;
    let mut f_in_e = SparseCols::with_capacity(n, n, 2 * n);
    let mut e_in_f: SparseCols<S> = SparseCols::with_capacity(n, n, 2 * n);
    for j in 0..n {
        let col = build_f::<S>(j, s, &layout)?;
        let (last, diag) = col.last().cloned().expect("f_j has a diagonal entry");
        debug_assert_eq!(last, j);
        // e_j = (f_j - sum_{i<j} F[i,j] e_i) / F[j,j]
        let inv = S::one() / diag;
        let mut acc = Accumulator::new();
        acc.add(j, inv.clone());
        for (i, v) in &col[..col.len() - 1] {
            let (rows, vals) = e_in_f.col(*i);
            let scale = -(v.clone() * inv.clone());
            for (r, w) in rows.iter().zip(vals) {
                acc.add(*r, w.clone() * scale.clone());
            }
        }
        f_in_e.push_column(col);
        e_in_f.push_column(acc.into_sorted());
    }
    Ok(BasisMap { n_trunc, f_in_e, e_in_f, layout })
}

/// Largest entrywise deviation of `F_in_E * E_in_F` (and the reverse
/// product) from the identity, as `(max deviation, exact)` where `exact`
/// records that every entry matched with no rounding.
pub fn roundtrip_residual<S: Scalar>(basis: &BasisMap<S>) -> (f64, bool) {
    let mut worst = 0.0f64;
    let mut exact = true;
    for (a, b) in [(&basis.f_in_e, &basis.e_in_f), (&basis.e_in_f, &basis.f_in_e)] {
        for j in 0..=basis.n_trunc {
            let col = a.mul_sparse(&b.col_vec(j));
            let mut diag_seen = false;
            for (i, v) in col {
                let dev = if i == j {
                    diag_seen = true;
                    v - S::one()
                } else {
                    v
                };
                if !dev.is_zero() {
                    exact = false;
                    worst = worst.max(dev.modulus());
                }
            }
            if !diag_seen {
                exact = false;
                worst = worst.max(1.0);
            }
        }
    }
    (worst, exact)
}

// ---------------------------------------------------------------------------
// Lattice descent

/// `q(T) f_m` with `q` given by its coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct FTerm<S> {
    pub poly: Vec<S>,
    pub f_index: usize,
}

/// `e_{R + alpha} = sum_i q_i(T) f_{m_i} + P(T) e_alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct Descent<S> {
    pub index: usize,
    pub f_terms: Vec<FTerm<S>>,
    pub e_poly: Vec<S>,
    pub alpha: usize,
}

pub fn poly_mul<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![S::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (k, y) in b.iter().enumerate() {
            out[i + k] = out[i + k].clone() + x.clone() * y.clone();
        }
    }
    out
}

fn poly_scale<S: Scalar>(a: &[S], s: &S) -> Vec<S> {
    a.iter().map(|v| v.clone() * s.clone()).collect()
}

fn pow_scalar<S: Scalar>(base: f64, e: usize) -> S {
    let b = S::from_f64(base);
    (0..e).fold(S::one(), |acc, _| acc * b.clone())
}

/// Unrolls `e_m = gamma 4^{|r|-1} f_m + p_t(T) e_{m - c_t}` one coordinate
/// step at a time until all lattice coordinates vanish.
pub fn lattice_descent<S: Scalar>(coord: &LatticeCoord, s: &StageSchedule) -> Result<Descent<S>> {
    let index = crate::geometry::coord_to_index(coord, s)?;
    let st = s.stage(coord.stage);
    let mut r = coord.r.clone();
    let mut m = index;
    let mut poly = vec![S::one()];
    let mut f_terms = Vec::new();
    while let Some(t0) = r.iter().rposition(|&x| x > 0) {
        let cur = LatticeCoord::new(coord.stage, r.clone(), coord.alpha)?;
        let scale = working_scale::<S>(s, &cur)?;
        f_terms.push(FTerm { poly: poly_scale(&poly, &scale), f_index: m });
        poly = poly_mul(&poly, &fan_poly::<S>(s, coord.stage, t0 + 1)?);
        m -= st.c[t0];
        r[t0] -= 1;
    }
    debug_assert_eq!(m, coord.alpha);
    Ok(Descent { index, f_terms, e_poly: poly, alpha: coord.alpha })
}

/// Upper limit of the inner sum of the closed-form descent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SumLimit {
    /// `s_l` runs over `0..=r_l`.
    AsPrinted,
    /// `s_l` runs over `0..r_l`.
    Corrected,
}

/// The closed-form expansion
/// `sum_l sum_{s_l} gamma 4^{r_1+..+r_{l-1}+(r_l-s_l)-1} p_l^{s_l} p_{l+1}^{r_{l+1}}..p_t^{r_t}
///  f_{r_1 c_1+..+r_{l-1} c_{l-1}+(r_l-s_l) c_l + alpha} + p_1^{r_1}..p_t^{r_t} e_alpha`.
pub fn closed_form_descent<S: Scalar>(coord: &LatticeCoord, s: &StageSchedule, limit: SumLimit) -> Result<Descent<S>> {
    let index = crate::geometry::coord_to_index(coord, s)?;
    let st = s.stage(coord.stage);
    let gamma = S::from_f64(stage_gamma(s, coord.stage)?);
    let polys: Vec<Vec<S>> = (1..=coord.r.len()).map(|k| fan_poly::<S>(s, coord.stage, k)).collect::<Result<_>>()?;
    let pow = |p: &[S], e: usize| (0..e).fold(vec![S::one()], |acc, _| poly_mul(&acc, p));
    let mut f_terms = Vec::new();
    for l in (0..coord.t).rev() {
        let upper = match limit {
            SumLimit::AsPrinted => coord.r[l] + 1,
            SumLimit::Corrected => coord.r[l],
        };
        let tail = (l + 1..coord.t).fold(vec![S::one()], |acc, i| poly_mul(&acc, &pow(&polys[i], coord.r[i])));
        let prefix: usize = coord.r[..l].iter().sum();
        let prefix_idx: usize = coord.r[..l].iter().zip(&st.c).map(|(a, c)| a * c).sum();
        for sl in 0..upper {
            let exp4 = prefix as i64 + (coord.r[l] - sl) as i64 - 1;
            let four = if exp4 >= 0 {
                pow_scalar::<S>(4.0, exp4 as usize)
            } else {
                S::one() / pow_scalar::<S>(4.0, (-exp4) as usize)
            };
            let poly = poly_scale(&poly_mul(&pow(&polys[l], sl), &tail), &(gamma.clone() * four));
            let f_index = prefix_idx + (coord.r[l] - sl) * st.c[l] + coord.alpha;
            f_terms.push(FTerm { poly, f_index });
        }
    }
    let e_poly = (0..coord.t).fold(vec![S::one()], |acc, i| poly_mul(&acc, &pow(&polys[i], coord.r[i])));
    Ok(Descent { index, f_terms, e_poly, alpha: coord.alpha })
}

impl<S: Scalar> Descent<S> {
    /// Evaluates the expansion in the e-frame using only the definition of
    /// `f_m` and the shift. Independent of `E_in_F`.
    pub fn eval_in_e(&self, basis: &BasisMap<S>) -> SparseVec<S> {
        let mut acc = Accumulator::new();
        for term in &self.f_terms {
            let col = basis.f_in_e.col_vec(term.f_index);
            for (u, a) in term.poly.iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                for (i, v) in &col {
                    acc.add(i + u, v.clone() * a.clone());
                }
            }
        }
        for (u, a) in self.e_poly.iter().enumerate() {
            acc.add(self.alpha + u, a.clone());
        }
        acc.into_sorted()
    }

    /// Evaluates the expansion in the f-frame: `T^u f_m = f_{m+u}` while
    /// `m + u` stays in the working interval of `m`, otherwise the power is
    /// taken in the e-frame and converted back.
    pub fn eval_in_f(&self, basis: &BasisMap<S>) -> SparseVec<S> {
        let mut acc = Accumulator::new();
        for term in &self.f_terms {
            let seg_end = basis.layout.segment_of(term.f_index).map(|seg| seg.end).unwrap_or(term.f_index);
            let col = basis.f_in_e.col_vec(term.f_index);
            for (u, a) in term.poly.iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                if term.f_index + u <= seg_end {
                    acc.add(term.f_index + u, a.clone());
                } else {
                    for (i, v) in &col {
                        if i + u <= basis.n_trunc {
                            acc.add_scaled(&basis.e_in_f.col_vec(i + u), &(v.clone() * a.clone()));
                        }
                    }
                }
            }
        }
        for (u, a) in self.e_poly.iter().enumerate() {
            if self.alpha + u <= basis.n_trunc {
                acc.add_scaled(&basis.e_in_f.col_vec(self.alpha + u), a);
            }
        }
        acc.into_sorted()
    }
}

/// Outcome of checking a descent against the unit vector (e-frame) and the
/// `E_in_F` column (f-frame).
#[derive(Clone, Debug, PartialEq)]
pub struct DescentCheck {
    pub index: usize,
    pub e_frame_residual: f64,
    pub f_frame_residual: f64,
    pub exact: bool,
}

pub fn check_descent<S: Scalar>(d: &Descent<S>, basis: &BasisMap<S>) -> DescentCheck {
    let e_eval = d.eval_in_e(basis);
    let e_diff = crate::sparse::sparse_sub(&e_eval, &[(d.index, S::one())]);
    let f_eval = d.eval_in_f(basis);
    let col = basis.e_in_f.col_vec(d.index);
    let f_diff = crate::sparse::sparse_sub(&f_eval, &col);
    let scale = crate::sparse::sparse_norm2(&col).max(1.0);
    DescentCheck {
        index: d.index,
        e_frame_residual: crate::sparse::sparse_norm2(&e_diff),
        f_frame_residual: crate::sparse::sparse_norm2(&f_diff) / scale,
        exact: e_diff.is_empty() && f_diff.is_empty(),
    }
}

/// Start indices `sum r_i c_i` of every (c)-working interval of a stage.
pub fn working_starts(s: &StageSchedule, stage: usize) -> Vec<LatticeCoord> {
    let layout = Layout::new(s);
    layout
        .segments()
        .iter()
        .filter(|seg| seg.stage == stage && seg.kind == crate::geometry::SegmentKind::CWorking)
        .filter_map(|seg| index_to_coord(seg.start, stage, s).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynet::Poly;
    use crate::scalar::Exact;
    use crate::schedule::{NetParams, ScalarField, StageParams};

    fn small(mode: WeightMode) -> StageSchedule {
        StageSchedule {
            stages: vec![StageParams {
                xi: 2,
                nu: 2 * 11,
                b: 10,
                c: vec![40, 150],
                h: 2,
                k: 2,
                d: 1,
                gamma: 0.125,
                delta: 0.25,
                eps: 0.25,
                net: NetParams::default(),
                fan: vec![Poly::from_real(&[1.0]), Poly::from_real(&[0.5, -0.5])],
            }],
            xi_final: 600,
            scalar_field: ScalarField::Real,
            weight_mode: mode,
        }
    }

    #[test]
    fn trivial_truncation_is_identity() {
        let b = assemble::<f64>(&small(WeightMode::Float), 0).unwrap();
        assert_eq!(b.f_in_e, SparseCols::identity(1));
        assert_eq!(b.e_in_f, SparseCols::identity(1));
    }

    #[test]
    fn b_working_vector() {
        let s = small(WeightMode::Float);
        let l = Layout::new(&s);
        assert_eq!(build_f::<f64>(11, &s, &l).unwrap(), vec![(1, -10.0), (11, 1.0)]);
    }

    #[test]
    fn c_working_vector() {
        let s = small(WeightMode::Float);
        let l = Layout::new(&s);
        // j = 40 + 3 = c_1 + 3, |r| = 1, p_1 = 1
        assert_eq!(build_f::<f64>(43, &s, &l).unwrap(), vec![(3, -8.0), (43, 8.0)]);
        // j = 150 + 40 + 1, r = (1,1), t = 2, p_2 = (1 - z)/2, scale 1/(gamma 4)
        assert_eq!(build_f::<f64>(191, &s, &l).unwrap(), vec![(41, -1.0), (42, 1.0), (191, 2.0)]);
    }

    #[test]
    fn exact_roundtrip() {
        let b = assemble::<Exact>(&small(WeightMode::RationalApprox), 600).unwrap();
        let (dev, exact) = roundtrip_residual(&b);
        assert!(exact, "deviation {dev}");
    }

    #[test]
    fn float_roundtrip() {
        let b = assemble::<f64>(&small(WeightMode::Float), 600).unwrap();
        let (dev, _) = roundtrip_residual(&b);
        assert!(dev < 1e-12, "{dev}");
    }

    #[test]
    fn descent_two_steps() {
        let s = small(WeightMode::RationalApprox);
        let coord = LatticeCoord::new(1, vec![2, 0], 5).unwrap();
        let d = lattice_descent::<Exact>(&coord, &s).unwrap();
        assert_eq!(d.f_terms.len(), 2);
        assert_eq!(d.f_terms[0].f_index, 85);
        assert_eq!(d.f_terms[1].f_index, 45);
        assert_eq!(d.f_terms[0].poly, vec![Exact::from_f64(0.5)]);
        assert_eq!(d.f_terms[1].poly, vec![Exact::from_f64(0.125)]);
        let b = assemble::<Exact>(&s, 600).unwrap();
        assert!(check_descent(&d, &b).exact);
    }

    #[test]
    fn printed_form_has_an_extra_term() {
        let s = small(WeightMode::RationalApprox);
        let b = assemble::<Exact>(&s, 600).unwrap();
        let coord = LatticeCoord::new(1, vec![1, 1], 0).unwrap();
        let fixed = closed_form_descent::<Exact>(&coord, &s, SumLimit::Corrected).unwrap();
        assert!(check_descent(&fixed, &b).exact);
        assert_eq!(fixed.e_poly, lattice_descent::<Exact>(&coord, &s).unwrap().e_poly);
        let printed = closed_form_descent::<Exact>(&coord, &s, SumLimit::AsPrinted).unwrap();
        assert!(!check_descent(&printed, &b).exact);
    }
}

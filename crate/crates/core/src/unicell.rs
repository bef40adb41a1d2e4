//! Polynomials solving `p(T_xi) x = y`, large-coordinate indices, and the
//! decision of which of two orbit closures contains the other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::build::Build;
use crate::error::{LabError, Result};
use crate::hypercyclic::{run_chain, Certificate};
use crate::operator::shift_e;
use crate::polynet::Poly;
use crate::scalar::Scalar;
use crate::sparse::{sparse_norm2, SparseVec};

/// Lower-triangular Toeplitz system on `[r, xi]`: `x` has a nonzero
/// coordinate at `r` and none below it, `y` lives on the same range.
#[derive(Clone, Debug, PartialEq)]
pub struct ToeplitzSystem<S> {
    pub xi: usize,
    pub r: usize,
    /// Coordinates `r..=xi` of `x`.
    pub x: Vec<S>,
    /// Coordinates `r..=xi` of `y`.
    pub y: Vec<S>,
}

impl<S: Scalar> ToeplitzSystem<S> {
    /// Coordinates above `xi` are ignored; `r` is the first nonzero index
    /// of `x`.
    pub fn new(xi: usize, x: &[(usize, S)], y: &[(usize, S)]) -> Result<Self> {
        let r = x
            .iter()
            .filter(|(i, v)| *i <= xi && !v.is_zero())
            .map(|(i, _)| *i)
            .min()
            .ok_or(LabError::ZeroLeadingCoefficient)?;
        let mut xs = vec![S::zero(); xi - r + 1];
        let mut ys = vec![S::zero(); xi - r + 1];
        for (i, v) in x.iter().filter(|(i, _)| *i <= xi) {
            xs[i - r] = v.clone();
        }
        for (i, v) in y.iter().filter(|(i, _)| *i <= xi) {
            if *i < r {
                if !v.is_zero() {
                    return Err(LabError::SupportViolation { lo: r, hi: xi });
                }
                continue;
            }
            ys[i - r] = v.clone();
        }
        Ok(ToeplitzSystem { xi, r, x: xs, y: ys })
    }

    /// `p(T_xi) x` on `[r, xi]` for coefficients `a`.
    pub fn apply(&self, a: &[S]) -> Vec<S> {
        let len = self.x.len();
        let mut out = vec![S::zero(); len];
        for (u, au) in a.iter().enumerate().filter(|(u, _)| *u < len) {
            for i in u..len {
                out[i] = out[i].clone() + au.clone() * self.x[i - u].clone();
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solved<S> {
    pub coeffs: Vec<S>,
    pub poly: Poly,
    pub ell1: f64,
}

/// Forward substitution: `a_i = (y_i - sum_{u<i} a_u x_{i-u}) / x_0`,
/// indices relative to `r`. The result has degree at most `xi - r`.
pub fn solve_poly<S: Scalar>(sys: &ToeplitzSystem<S>) -> Result<Solved<S>> {
    let lead = sys.x.first().cloned().ok_or(LabError::ZeroLeadingCoefficient)?;
    if lead.is_zero() {
        return Err(LabError::ZeroLeadingCoefficient);
    }
    let inv = S::one() / lead;
    let mut a: Vec<S> = Vec::with_capacity(sys.x.len());
    for i in 0..sys.x.len() {
        let mut acc = sys.y[i].clone();
        for (u, au) in a.iter().enumerate() {
            acc = acc - au.clone() * sys.x[i - u].clone();
        }
        a.push(acc * inv.clone());
    }
    let poly = Poly::new(a.iter().map(|v| v.to_c64()).collect());
    let ell1 = a.iter().map(|v| v.modulus()).sum();
    Ok(Solved { coeffs: a, poly, ell1 })
}

/// Least-squares slope of `log |p|` against `log (1 / lead)` as the leading
/// coordinate of `x` shrinks through `leads`, other coordinates fixed.
pub fn growth_exponent(xi: usize, rest: &[f64], y: &[f64], leads: &[f64]) -> Result<f64> {
    let pts = leads
        .iter()
        .map(|&l| {
            let mut x = vec![(0usize, l)];
            x.extend(rest.iter().enumerate().map(|(i, &v)| (i + 1, v)));
            let y: Vec<(usize, f64)> = y.iter().enumerate().map(|(i, &v)| (i, v)).collect();
            let sol = solve_poly(&ToeplitzSystem::new(xi, &x, &y)?)?;
            Ok(((1.0 / l).ln(), sol.ell1.ln()))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Empirical `C'`: the largest `|p| * |lead|^{xi-r+1}` over Gaussian unit
/// targets `y` on `[0, xi]`, for a fixed `x` with leading index 0.
pub fn measure_c_prime(xi: usize, x: &[f64], samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<(usize, f64)> = x.iter().enumerate().map(|(i, &v)| (i, v)).collect();
    let lead = x.first().copied().unwrap_or(0.0).abs();
    let mut best = 0.0f64;
    for _ in 0..samples {
        let mut y: Vec<f64> = (0..=xi).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        let ys: Vec<(usize, f64)> = y.into_iter().enumerate().collect();
        let sol = solve_poly(&ToeplitzSystem::new(xi, &xs, &ys)?)?;
        best = best.max(sol.ell1 * lead.powi(xi as i32 + 1));
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LargeCoordIndex {
    pub stage: usize,
    pub base: f64,
    pub index: usize,
    /// `|e_j^{*(n)}(x)|` of the normalized vector.
    pub value: f64,
}

/// e-coordinates of `pi_[0, xi_n] x / ||x||`.
pub fn head_coordinates<S: Scalar>(b: &Build<S>, x: &[(usize, S)], n: usize) -> Result<SparseVec<S>> {
    let norm = sparse_norm2(x);
    if norm == 0.0 {
        return Err(LabError::InvalidArgument("zero vector".into()));
    }
    let inv = S::from_f64(1.0 / norm);
    let head = b.pi_e(x, 0, b.schedule.stage(n).xi);
    Ok(head.into_iter().map(|(i, v)| (i, v * inv.clone())).collect())
}

/// Smallest `j` in `[0, xi_n]` with `|e_j^{*(n)}(x)| >= C^{-(xi_n - j + 1)}`
/// for the normalized `x`.
pub fn large_coord_index<S: Scalar>(b: &Build<S>, x: &[(usize, S)], n: usize, base: f64) -> Result<Option<LargeCoordIndex>> {
    let xi = b.schedule.stage(n).xi;
    let head = head_coordinates(b, x, n)?;
    let mut coords = vec![0.0; xi + 1];
    for (i, v) in &head {
        coords[*i] = v.modulus();
    }
    Ok(coords
        .iter()
        .enumerate()
        .find(|(j, v)| **v >= base.powi(-((xi - j + 1) as i32)))
        .map(|(j, v)| LargeCoordIndex { stage: n, base, index: j, value: *v }))
}

/// `(sup_j ||e_j||, sqrt(C) >= sup)` over `j` in `[0, xi_n]`.
pub fn side_condition<S: Scalar>(b: &Build<S>, n: usize, base: f64) -> (f64, bool) {
    let xi = b.schedule.stage(n).xi;
    let sup = (0..=xi).map(|j| b.norm_e(&[(j, S::one())])).fold(0.0, f64::max);
    (sup, base.sqrt() >= sup)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    XcontainsY,
    YcontainsX,
}

impl Direction {
    pub fn reversed(self) -> Direction {
        match self {
            Direction::XcontainsY => Direction::YcontainsX,
            Direction::YcontainsX => Direction::XcontainsY,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub direction: Direction,
    pub jx: Option<usize>,
    pub jy: Option<usize>,
    pub certificate: Certificate,
}

/// Decides which orbit closure should contain the other from the
/// large-coordinate indices (ties go to `XcontainsY`), then certifies that
/// some `T^c` of the leader approximates `T pi_xi` of the follower.
pub fn compare_orbits<S: Scalar>(b: &Build<S>, x: &[(usize, S)], y: &[(usize, S)], n: usize, base: f64) -> Result<Comparison> {
    let jx = large_coord_index(b, x, n, base)?.map(|l| l.index);
    let jy = large_coord_index(b, y, n, base)?.map(|l| l.index);
    let direction = match (jx, jy) {
        (None, None) => return Err(LabError::Refused("neither vector has a large coordinate".into())),
        (Some(_), None) => Direction::XcontainsY,
        (None, Some(_)) => Direction::YcontainsX,
        (Some(a), Some(b)) => {
            if a <= b {
                Direction::XcontainsY
            } else {
                Direction::YcontainsX
            }
        }
    };
    let (lead, follow, j) = match direction {
        Direction::XcontainsY => (x, y, jx.expect("leader has an index")),
        Direction::YcontainsX => (y, x, jy.expect("leader has an index")),
    };
    let xi = b.schedule.stage(n).xi;
    let lh = head_coordinates(b, lead, n)?;
    let fh = head_coordinates(b, follow, n)?;
    let from: SparseVec<S> = lh.iter().filter(|(i, _)| *i >= j).cloned().collect();
    let to: SparseVec<S> = fh.iter().filter(|(i, _)| *i >= j).cloned().collect();
    let p = solve_poly(&ToeplitzSystem::new(xi, &from, &to)?)?.poly.shift_up(1);
    // Both vectors enter the chain normalized.
    let scale = |v: &[(usize, S)]| -> SparseVec<S> {
        let inv = S::from_f64(1.0 / sparse_norm2(v));
        v.iter().map(|(i, a)| (*i, a.clone() * inv.clone())).collect()
    };
    let target = shift_e(&fh, 1, b.n_trunc());
    let certificate = run_chain(b, n, &scale(lead), &p, &target)?;
    Ok(Comparison { direction, jx, jy, certificate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(xi: usize, x: &[(usize, f64)], y: &[(usize, f64)]) -> ToeplitzSystem<f64> {
        ToeplitzSystem::new(xi, x, y).unwrap()
    }

    #[test]
    fn hand_solved_systems() {
        let s = solve_poly(&sys(2, &[(0, 1.0), (1, 1.0)], &[(2, 1.0)])).unwrap();
        assert_eq!(s.coeffs, vec![0.0, 0.0, 1.0]);
        let s = solve_poly(&sys(2, &[(1, 1.0)], &[(2, 1.0)])).unwrap();
        assert_eq!(s.coeffs, vec![0.0, 1.0]);
        let s = solve_poly(&sys(0, &[(0, 0.5)], &[(0, 1.0)])).unwrap();
        assert_eq!(s.coeffs, vec![2.0]);
        assert_eq!(s.ell1, 2.0);
    }

    #[test]
    fn zero_leading_is_rejected() {
        assert!(matches!(ToeplitzSystem::<f64>::new(2, &[], &[(0, 1.0)]), Err(LabError::ZeroLeadingCoefficient)));
        assert!(matches!(ToeplitzSystem::new(2, &[(1, 1.0)], &[(0, 1.0)]), Err(LabError::SupportViolation { .. })));
    }

    #[test]
    fn apply_matches_targets() {
        let s = sys(3, &[(0, 2.0), (2, -1.0), (3, 0.5)], &[(0, 1.0), (1, 3.0), (3, -2.0)]);
        let a = solve_poly(&s).unwrap().coeffs;
        for (got, want) in s.apply(&a).iter().zip(&s.y) {
            assert!((got - want).abs() < 1e-14);
        }
    }
}

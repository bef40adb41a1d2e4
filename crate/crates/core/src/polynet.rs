//! Polynomials over the scalar field and finite lattice nets of
//! l1-balls of coefficient space.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::scalar::Scalar;
use crate::schedule::ScalarField;

/// Polynomial `a_0 + a_1 z + ... + a_d z^d`. Trailing zero coefficients
/// are trimmed so `degree` is meaningful.
#[derive(Clone, PartialEq, Default)]
pub struct Poly {
    coeffs: Vec<Complex64>,
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Poly{:?}", self.display_coeffs())
    }
}

impl Poly {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        let mut p = Poly { coeffs };
        p.trim();
        p
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_real(&[c])
    }

    /// `z^k`
    pub fn monomial(k: usize) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); k + 1];
        coeffs[k] = Complex64::new(1.0, 0.0);
        Poly { coeffs }
    }

    fn trim(&mut self) {
        while matches!(self.coeffs.last(), Some(c) if c.re == 0.0 && c.im == 0.0) {
            self.coeffs.pop();
        }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, u: usize) -> Complex64 {
        self.coeffs.get(u).copied().unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, with the zero polynomial reported as degree 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// `|p| = sum |a_u|`
    pub fn ell1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    pub fn is_real(&self) -> bool {
        self.coeffs.iter().all(|c| c.im == 0.0)
    }

    pub fn vanishes_at_zero(&self) -> bool {
        let c = self.coeff(0);
        c.re == 0.0 && c.im == 0.0
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        Poly::new((0..n).map(|u| self.coeff(u) + other.coeff(u)).collect())
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        Poly::new((0..n).map(|u| self.coeff(u) - other.coeff(u)).collect())
    }

    pub fn scale(&self, s: Complex64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    /// `z^k p(z)`
    pub fn shift_up(&self, k: usize) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); k];
        coeffs.extend_from_slice(&self.coeffs);
        Poly { coeffs }
    }

    /// Coefficients converted into the scalar field `S`.
    pub fn coeffs_in<S: Scalar>(&self) -> Result<Vec<S>> {
        self.coeffs
            .iter()
            .map(|&c| {
                S::from_c64(c).ok_or_else(|| LabError::FieldMismatch(format!("coefficient {c} is not real")))
            })
            .collect()
    }

    fn display_coeffs(&self) -> Vec<String> {
        self.coeffs
            .iter()
            .map(|c| if c.im == 0.0 { format!("{}", c.re) } else { format!("{}{:+}i", c.re, c.im) })
            .collect()
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (u, c) in self.coeffs.iter().enumerate() {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let c = if c.im == 0.0 { format!("{}", c.re) } else { format!("({}{:+}i)", c.re, c.im) };
            match u {
                0 => write!(f, "{c}")?,
                1 => write!(f, "{c}*z")?,
                _ => write!(f, "{c}*z^{u}")?,
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NetConstraint {
    #[default]
    None,
    ZeroConstantTerm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolyNet {
    pub degree: usize,
    pub radius: f64,
    pub resolution: f64,
    pub constraint: NetConstraint,
    pub field: ScalarField,
    pub members: Vec<Poly>,
}

pub const DEFAULT_NET_CAP: usize = 2_000_000;

/// Lattice points of step `resolution` inside the l1-ball of radius
/// `radius` among polynomials of degree at most `degree`.
///
/// Members are ordered by lattice l1 size, then by coefficient vector.
pub fn generate_net(
    degree: usize,
    radius: f64,
    resolution: f64,
    constraint: NetConstraint,
    field: ScalarField,
    cap: usize,
) -> Result<PolyNet> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(LabError::InvalidArgument(format!("net resolution must be positive, got {resolution}")));
    }
    if !(radius >= 0.0) {
        return Err(LabError::InvalidArgument(format!("net radius must be nonnegative, got {radius}")));
    }
    let budget = radius / resolution + 1e-9;
    let slots = degree + 1;
    let first = usize::from(constraint == NetConstraint::ZeroConstantTerm);
    let mut points: Vec<(f64, Vec<(i64, i64)>)> = Vec::new();
    let mut current = vec![(0i64, 0i64); slots];
    enumerate_slots(field, first, slots, budget, 0.0, &mut current, &mut points, cap)?;

    points.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then_with(|| order_key(&a.1).cmp(&order_key(&b.1)))
    });
    let members = points
        .into_iter()
        .map(|(_, v)| {
            Poly::new(
                v.iter()
                    .map(|&(re, im)| Complex64::new(re as f64 * resolution, im as f64 * resolution))
                    .collect(),
            )
        })
        .collect();
    Ok(PolyNet { degree, radius, resolution, constraint, field, members })
}

fn order_key(v: &[(i64, i64)]) -> Vec<(u64, u64)> {
    // 0, +1, -1, +2, -2, ... per slot, highest degree compared first
    let rank = |x: i64| if x > 0 { (2 * x - 1) as u64 } else { (-2 * x) as u64 };
    v.iter().rev().map(|&(re, im)| (rank(re), rank(im))).collect()
}

#[allow(clippy::too_many_arguments)]
fn enumerate_slots(
    field: ScalarField,
    slot: usize,
    slots: usize,
    budget: f64,
    used: f64,
    current: &mut Vec<(i64, i64)>,
    out: &mut Vec<(f64, Vec<(i64, i64)>)>,
    cap: usize,
) -> Result<()> {
    if slot == slots {
        if out.len() >= cap {
            return Err(LabError::CapExceeded { what: "polynomial net", cap });
        }
        out.push((used, current.clone()));
        return Ok(());
    }
    let left = budget - used;
    let m = left.floor() as i64;
    for re in -m..=m {
        match field {
            ScalarField::Real => {
                let cost = re.unsigned_abs() as f64;
                if cost > left {
                    continue;
                }
                current[slot] = (re, 0);
                enumerate_slots(field, slot + 1, slots, budget, used + cost, current, out, cap)?;
            }
            ScalarField::Complex => {
                for im in -m..=m {
                    let cost = ((re * re + im * im) as f64).sqrt();
                    if cost > left {
                        continue;
                    }
                    current[slot] = (re, im);
                    enumerate_slots(field, slot + 1, slots, budget, used + cost, current, out, cap)?;
                }
            }
        }
    }
    current[slot] = (0, 0);
    Ok(())
}

impl PolyNet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Guaranteed l1 covering radius of the lattice net.
    pub fn covering_radius(&self) -> f64 {
        let per_coeff = match self.field {
            ScalarField::Real => self.resolution,
            ScalarField::Complex => self.resolution * std::f64::consts::SQRT_2,
        };
        (self.degree + 1) as f64 * per_coeff
    }

    pub fn contains(&self, p: &Poly) -> bool {
        self.members.iter().any(|m| m == p)
    }

    /// Index and l1 distance of the member closest to `p`; ties go to the
    /// earlier member.
    pub fn nearest(&self, p: &Poly) -> Option<(usize, f64)> {
        nearest_in(&self.members, p)
    }

    /// One polynomial per row: index, then the real and imaginary parts of
    /// each coefficient.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().flexible(true).from_writer(w);
        let mut header = vec!["index".to_string(), "ell1".to_string()];
        for u in 0..=self.degree {
            header.push(format!("re{u}"));
            header.push(format!("im{u}"));
        }
        wtr.write_record(&header)?;
        for (i, p) in self.members.iter().enumerate() {
            let mut row = vec![i.to_string(), format!("{}", p.ell1())];
            for u in 0..=self.degree {
                let c = p.coeff(u);
                row.push(format!("{}", c.re));
                row.push(format!("{}", c.im));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn nearest_in(members: &[Poly], p: &Poly) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, m) in members.iter().enumerate() {
        let d = m.sub(p).ell1();
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best
}

/// `q(z) = z^b p(z) / b`. Fails when the degree of `q` would exceed
/// `max_degree`.
pub fn b_damped(p: &Poly, b: usize, max_degree: usize) -> Result<Poly> {
    if p.is_zero() {
        return Ok(Poly::zero());
    }
    if b == 0 {
        return Err(LabError::InvalidArgument("damping exponent must be positive".into()));
    }
    let degree = p.degree() + b;
    if degree > max_degree {
        return Err(LabError::DegreeBound { degree, bound: max_degree });
    }
    Ok(p.shift_up(b).scale(Complex64::new(1.0 / b as f64, 0.0)))
}

/// Horner evaluation of `p(M) x` for any linear map given as a closure.
pub fn apply_poly_with<S: Scalar>(p: &Poly, x: &[S], mut apply: impl FnMut(&[S]) -> Vec<S>) -> Result<Vec<S>> {
    let a: Vec<S> = p.coeffs_in()?;
    if a.is_empty() {
        return Ok(vec![S::zero(); x.len()]);
    }
    let mut y: Vec<S> = x.iter().map(|v| v.clone() * a[a.len() - 1].clone()).collect();
    for c in a[..a.len() - 1].iter().rev() {
        let my = apply(&y);
        y = my.into_iter().zip(x).map(|(m, xi)| m + xi.clone() * c.clone()).collect();
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ball_degree_one() {
        let net = generate_net(1, 1.0, 1.0, NetConstraint::None, ScalarField::Real, 100).unwrap();
        let got: Vec<Vec<f64>> = net.members.iter().map(|p| (0..2).map(|u| p.coeff(u).re).collect()).collect();
        assert_eq!(
            got,
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]
        );
    }

    #[test]
    fn zero_constant_term_drops_members() {
        let net = generate_net(1, 1.0, 1.0, NetConstraint::ZeroConstantTerm, ScalarField::Real, 100).unwrap();
        assert_eq!(net.len(), 3);
        assert!(net.members.iter().all(|p| p.vanishes_at_zero()));
        assert!(net.contains(&Poly::from_real(&[0.0, 1.0])));
        assert!(net.contains(&Poly::from_real(&[0.0, -1.0])));
    }

    #[test]
    fn complex_lattice_counts() {
        // Gaussian integers of modulus <= 1: 0, ±1, ±i.
        let net = generate_net(0, 1.0, 1.0, NetConstraint::None, ScalarField::Complex, 100).unwrap();
        assert_eq!(net.len(), 5);
    }

    #[test]
    fn cap_is_enforced() {
        let err = generate_net(4, 2.0, 0.5, NetConstraint::None, ScalarField::Real, 10).unwrap_err();
        assert!(matches!(err, LabError::CapExceeded { cap: 10, .. }));
    }

    #[test]
    fn nonpositive_resolution_rejected() {
        assert!(generate_net(1, 1.0, 0.0, NetConstraint::None, ScalarField::Real, 10).is_err());
    }

    #[test]
    fn damping_examples() {
        let q = b_damped(&Poly::monomial(1), 4, 100).unwrap();
        assert_eq!(q, Poly::monomial(5).scale(Complex64::new(0.25, 0.0)));
        assert_eq!(q.ell1(), 0.25);
        assert_eq!(b_damped(&Poly::zero(), 4, 1).unwrap(), Poly::zero());
        let p = Poly::from_real(&[1.0, -2.0, 0.5]);
        let q = b_damped(&p, 5, 100).unwrap();
        assert!(q.ell1() < 1.0);
        assert!(matches!(b_damped(&p, 5, 6), Err(LabError::DegreeBound { degree: 7, bound: 6 })));
    }

    #[test]
    fn horner_on_plain_shift() {
        let shift = |x: &[f64]| {
            let mut y = vec![0.0; x.len()];
            for i in 0..x.len() - 1 {
                y[i + 1] = x[i];
            }
            y
        };
        let mut e3 = vec![0.0; 6];
        e3[3] = 1.0;
        assert_eq!(apply_poly_with(&Poly::constant(1.0), &e3, shift).unwrap(), e3);
        let mut e4 = vec![0.0; 6];
        e4[4] = 1.0;
        assert_eq!(apply_poly_with(&Poly::monomial(1), &e3, shift).unwrap(), e4);
        // z^2 under the truncated shift on span[e0, e1, e2] kills e1.
        let mut e1 = vec![0.0; 3];
        e1[1] = 1.0;
        assert_eq!(apply_poly_with(&Poly::monomial(2), &e1, shift).unwrap(), vec![0.0; 3]);
    }
}

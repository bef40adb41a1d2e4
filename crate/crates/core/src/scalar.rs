//! Scalar fields the construction can be carried out over.
//!
//! `f64` and `Complex64` are the floating-point fields. `Exact` is an
//! arbitrary-precision rational used for identity checks that must hold
//! with no rounding at all.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Exact = BigRational;

pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// True when arithmetic is free of rounding.
    const EXACT: bool;
    /// True when the field carries an imaginary part.
    const COMPLEX: bool;
    /// Floating-point counterpart used for norms and decompositions.
    type Float: Scalar + nalgebra::ComplexField<RealField = f64> + Copy;

    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn from_f64(v: f64) -> Self;
    /// `None` when `v` has a nonzero imaginary part and the field is real.
    fn from_c64(v: Complex64) -> Option<Self>;
    fn to_c64(&self) -> Complex64;
    fn modulus(&self) -> f64;
    fn conj(&self) -> Self;
    fn to_float(&self) -> Self::Float;
    fn from_float(v: Self::Float) -> Self;

    fn modulus_sq(&self) -> f64 {
        let m = self.modulus();
        m * m
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;
    const COMPLEX: bool = false;
    type Float = f64;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn from_c64(v: Complex64) -> Option<Self> {
        (v.im == 0.0).then_some(v.re)
    }
    fn to_c64(&self) -> Complex64 {
        Complex64::new(*self, 0.0)
    }
    fn modulus(&self) -> f64 {
        self.abs()
    }
    fn conj(&self) -> Self {
        *self
    }
    fn to_float(&self) -> f64 {
        *self
    }
    fn from_float(v: f64) -> Self {
        v
    }
    fn modulus_sq(&self) -> f64 {
        self * self
    }
}

impl Scalar for Complex64 {
    const EXACT: bool = false;
    const COMPLEX: bool = true;
    type Float = Complex64;

    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
    fn from_f64(v: f64) -> Self {
        Complex64::new(v, 0.0)
    }
    fn from_c64(v: Complex64) -> Option<Self> {
        Some(v)
    }
    fn to_c64(&self) -> Complex64 {
        *self
    }
    fn modulus(&self) -> f64 {
        self.norm()
    }
    fn conj(&self) -> Self {
        Complex64::conj(self)
    }
    fn to_float(&self) -> Complex64 {
        *self
    }
    fn from_float(v: Complex64) -> Self {
        v
    }
    fn modulus_sq(&self) -> f64 {
        self.norm_sqr()
    }
}

impl Scalar for Exact {
    const EXACT: bool = true;
    const COMPLEX: bool = false;
    type Float = f64;

    fn zero() -> Self {
        <BigRational as Zero>::zero()
    }
    fn one() -> Self {
        <BigRational as One>::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).expect("finite value")
    }
    fn from_c64(v: Complex64) -> Option<Self> {
        (v.im == 0.0).then(|| Self::from_f64(v.re))
    }
    fn to_c64(&self) -> Complex64 {
        Complex64::new(exact_to_f64(self), 0.0)
    }
    fn modulus(&self) -> f64 {
        exact_to_f64(&self.abs())
    }
    fn conj(&self) -> Self {
        self.clone()
    }
    fn to_float(&self) -> f64 {
        exact_to_f64(self)
    }
    fn from_float(v: f64) -> Self {
        Self::from_f64(v)
    }
}

/// Converts a rational to the nearest double, including values whose
/// numerator and denominator individually overflow `f64`.
pub fn exact_to_f64(v: &Exact) -> f64 {
    if let Some(f) = v.to_f64() {
        if f.is_finite() && (f != 0.0 || Zero::is_zero(v)) {
            return f;
        }
    }
    let num = v.numer();
    let den = v.denom();
    let shift = num.bits() as i64 - den.bits() as i64;
    // Rescale so the quotient sits near 2^60 before converting.
    let scaled = if shift > 60 {
        num / (den << (shift - 60) as usize)
    } else {
        (num << (60 - shift) as usize) / den
    };
    let mantissa = scaled.to_f64().unwrap_or(0.0);
    mantissa * 2f64.powi((shift - 60) as i32)
}

/// Rounds `v` to a dyadic rational with a `bits`-bit mantissa.
pub fn dyadic_round(v: f64, bits: u32) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let e = v.abs().log2().floor() as i32;
    let scale = 2f64.powi(bits as i32 - 1 - e);
    (v * scale).round() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn big(v: i64) -> Exact {
        BigRational::from_integer(BigInt::from(v))
    }

    #[test]
    fn exact_roundtrip_of_doubles() {
        for v in [0.5, -3.25, 1e-300, 7.0e200, 2f64.powi(-1000)] {
            let r = Exact::from_f64(v);
            assert_eq!(exact_to_f64(&r), v);
        }
    }

    #[test]
    fn huge_rational_converts() {
        // numerator and denominator both overflow f64; the quotient does not
        let num = BigInt::from(3) << 1100usize;
        let den = BigInt::from(7) << 1100usize;
        let f = exact_to_f64(&BigRational::new(num, den));
        assert!((f - 3.0 / 7.0).abs() < 1e-15);
        let tiny = big(1) / BigRational::from_integer(BigInt::from(1) << 1100usize);
        assert_eq!(exact_to_f64(&tiny), 0.0);
    }

    #[test]
    fn dyadic_round_keeps_mantissa_bits() {
        let v = 2f64.powf(0.37);
        let d = dyadic_round(v, 40);
        assert!((d - v).abs() <= v * 2f64.powi(-39));
        let m = d * 2f64.powi(39);
        assert_eq!(m, m.round());
        assert_eq!(dyadic_round(0.0, 40), 0.0);
    }

    #[test]
    fn real_field_rejects_imaginary_part() {
        assert!(<f64 as Scalar>::from_c64(Complex64::new(1.0, 0.5)).is_none());
        assert!(<Exact as Scalar>::from_c64(Complex64::new(1.0, 0.5)).is_none());
        assert_eq!(<Complex64 as Scalar>::from_c64(Complex64::new(1.0, 0.5)), Some(Complex64::new(1.0, 0.5)));
    }
}

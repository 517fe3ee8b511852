//! Scalar fields used by the tableau and tree-weight code.
//!
//! Tableau construction and the order oracle are generic over [`Scalar`], so the
//! same code runs in `f64`, in exact rationals, and in the quadratic extension
//! `Q(sqrt r)` (needed for the AVF(4) nodes and for the optimal family parameters).

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub trait Scalar:
    Clone
    + fmt::Debug
    + fmt::Display
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
    /// Whether arithmetic in this type commits no rounding.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_ratio(num: i64, den: i64) -> Self;
    fn to_f64(&self) -> f64;
    fn is_zero(&self) -> bool;

    /// The exact rational value, if it has one (every finite `f64` does).
    fn to_rational(&self) -> Option<BigRational>;

    fn from_int(n: i64) -> Self {
        Self::from_ratio(n, 1)
    }

    /// Exact zero test for exact types; `|x| <= 1e-12` for floats.
    fn near_zero(&self) -> bool {
        if Self::EXACT {
            self.is_zero()
        } else {
            self.to_f64().abs() <= 1e-12
        }
    }

    fn powi(&self, k: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..k {
            acc = acc * self.clone();
        }
        acc
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn to_rational(&self) -> Option<BigRational> {
        BigRational::from_float(*self)
    }

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn powi(&self, k: u32) -> Self {
        f64::powi(*self, k as i32)
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn to_rational(&self) -> Option<BigRational> {
        Some(self.clone())
    }

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn to_f64(&self) -> f64 {
        ratio_to_f64(self)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
}

fn ratio_to_f64(r: &BigRational) -> f64 {
    // Scale so that both parts fit comfortably before dividing.
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            let shift = r.denom().bits().max(r.numer().bits()).saturating_sub(900);
            let n = (r.numer() >> shift).to_f64().unwrap_or(f64::NAN);
            let d = (r.denom() >> shift).to_f64().unwrap_or(f64::NAN);
            n / d
        }
    }
}

/// Parses `"-3"`, `"5/7"` or a decimal such as `"0.125"` / `"1e-3"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let t = text.trim();
    let bad = || Error::InvalidParameter(format!("cannot parse `{text}` as a rational number"));
    if let Some((n, d)) = t.split_once('/') {
        let n = parse_rational(n)?;
        let d = parse_rational(d)?;
        if Zero::is_zero(&d) {
            return Err(bad());
        }
        return Ok(n / d);
    }
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (t, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all: String = format!("{int_part}{frac_part}");
    let num: BigInt = all.parse().map_err(|_| bad())?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    if neg {
        value = -value;
    }
    Ok(value)
}

/// An element `a + b sqrt(r)` of a real quadratic field, with rational `a`, `b`.
///
/// `r == 0` marks a plain rational (and then `b == 0`). Mixing two different
/// radicands in one operation panics: every computation here lives in a single field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadSurd {
    a: BigRational,
    b: BigRational,
    r: u64,
}

impl QuadSurd {
    pub fn rational(a: BigRational) -> Self {
        Self {
            a,
            b: Zero::zero(),
            r: 0,
        }
    }

    /// `sqrt(r)`; collapses to a rational when `r` is a perfect square.
    pub fn sqrt(r: u64) -> Self {
        let root = (r as f64).sqrt().round() as u64;
        for cand in root.saturating_sub(1)..=root + 1 {
            if cand * cand == r {
                return Self::rational(BigRational::from_integer(BigInt::from(cand)));
            }
        }
        Self {
            a: Zero::zero(),
            b: One::one(),
            r,
        }
    }

    pub fn new(a: BigRational, b: BigRational, r: u64) -> Self {
        Self { a, b, r }.normalized()
    }

    pub fn rational_part(&self) -> &BigRational {
        &self.a
    }

    pub fn surd_part(&self) -> &BigRational {
        &self.b
    }

    pub fn radicand(&self) -> u64 {
        self.r
    }

    /// The value as an exact rational, if it has no surd part.
    pub fn as_rational(&self) -> Option<&BigRational> {
        Zero::is_zero(&self.b).then_some(&self.a)
    }

    fn normalized(mut self) -> Self {
        if Zero::is_zero(&self.b) {
            self.r = 0;
        }
        self
    }

    fn radicand_with(&self, other: &Self) -> u64 {
        match (self.r, other.r) {
            (0, r) | (r, 0) => r,
            (r1, r2) if r1 == r2 => r1,
            (r1, r2) => panic!("mixed quadratic fields sqrt({r1}) and sqrt({r2})"),
        }
    }

    fn conjugate(&self) -> Self {
        Self {
            a: self.a.clone(),
            b: -self.b.clone(),
            r: self.r,
        }
    }
}

impl From<BigRational> for QuadSurd {
    fn from(a: BigRational) -> Self {
        Self::rational(a)
    }
}

impl fmt::Display for QuadSurd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if Zero::is_zero(&self.b) {
            return write!(f, "{}", self.a);
        }
        let sign = if self.b.is_negative() { "-" } else { "+" };
        let mag = self.b.abs();
        let surd = if One::is_one(&mag) {
            format!("sqrt({})", self.r)
        } else {
            format!("{}*sqrt({})", mag, self.r)
        };
        if Zero::is_zero(&self.a) {
            if self.b.is_negative() {
                write!(f, "-{surd}")
            } else {
                write!(f, "{surd}")
            }
        } else {
            write!(f, "{} {} {}", self.a, sign, surd)
        }
    }
}

impl Add for QuadSurd {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let r = self.radicand_with(&rhs);
        Self::new(self.a + rhs.a, self.b + rhs.b, r)
    }
}

impl Sub for QuadSurd {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let r = self.radicand_with(&rhs);
        Self::new(self.a - rhs.a, self.b - rhs.b, r)
    }
}

impl Mul for QuadSurd {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let r = self.radicand_with(&rhs);
        let rr = BigRational::from_integer(BigInt::from(r));
        let a = &self.a * &rhs.a + &self.b * &rhs.b * rr;
        let b = &self.a * &rhs.b + &self.b * &rhs.a;
        Self::new(a, b, r)
    }
}

impl Div for QuadSurd {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let r = self.radicand_with(&rhs);
        let rr = BigRational::from_integer(BigInt::from(r));
        let norm = &rhs.a * &rhs.a - &rhs.b * &rhs.b * rr;
        assert!(!Zero::is_zero(&norm), "division by zero in quadratic field");
        let num = self * rhs.conjugate();
        Self::new(num.a / norm.clone(), num.b / norm, r)
    }
}

impl Neg for QuadSurd {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.a, -self.b, self.r)
    }
}

impl Scalar for QuadSurd {
    const EXACT: bool = true;

    fn to_rational(&self) -> Option<BigRational> {
        self.as_rational().cloned()
    }

    fn zero() -> Self {
        Self::rational(Zero::zero())
    }
    fn one() -> Self {
        Self::rational(One::one())
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        Self::rational(BigRational::from_ratio(num, den))
    }
    fn to_f64(&self) -> f64 {
        ratio_to_f64(&self.a) + ratio_to_f64(&self.b) * (self.r as f64).sqrt()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(&self.a) && Zero::is_zero(&self.b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::from_ratio(n, d)
    }

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_rational("5/7").unwrap(), q(5, 7));
        assert_eq!(parse_rational("-0.125").unwrap(), q(-1, 8));
        assert_eq!(parse_rational("1e-3").unwrap(), q(1, 1000));
        assert_eq!(parse_rational("-234").unwrap(), q(-234, 1));
        assert_eq!(parse_rational("2.5e1").unwrap(), q(25, 1));
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1/0").is_err());
    }

    #[test]
    fn surd_arithmetic() {
        let s = QuadSurd::sqrt(15);
        let sq = s.clone() * s.clone();
        assert_eq!(sq, QuadSurd::from_int(15));
        let c1 = QuadSurd::from_ratio(1, 2) - s.clone() / QuadSurd::from_int(10);
        // (2 c1 - 1)^2 = 3/5
        let k = QuadSurd::from_int(2) * c1.clone() - QuadSurd::one();
        assert_eq!(k.clone() * k, QuadSurd::from_ratio(3, 5));
        // c1 (c1 - 1) = -1/10
        assert_eq!(c1.clone() * (c1 - QuadSurd::one()), QuadSurd::from_ratio(-1, 10));
        let inv = QuadSurd::one() / (QuadSurd::from_int(2) + s.clone());
        assert_eq!(inv * (QuadSurd::from_int(2) + s), QuadSurd::one());
        assert_eq!(QuadSurd::sqrt(16), QuadSurd::from_int(4));
    }

    #[test]
    #[should_panic(expected = "mixed quadratic fields")]
    fn mixing_radicands_panics() {
        let _ = QuadSurd::sqrt(3) + QuadSurd::sqrt(15);
    }

    #[test]
    fn surd_display() {
        let x = QuadSurd::from_ratio(1, 2) - QuadSurd::sqrt(15) / QuadSurd::from_int(10);
        assert_eq!(x.to_string(), "1/2 - 1/10*sqrt(15)");
        assert!((x.to_f64() - (0.5 - 15f64.sqrt() / 10.0)).abs() < 1e-15);
    }
}

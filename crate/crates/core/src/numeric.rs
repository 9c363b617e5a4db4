//! Scalars shared by the float and exact-rational solver paths.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::Error;

/// Arbitrary precision rational used for exact solves and Pareto geometry.
pub type Rational = BigRational;

/// Absolute tolerance for float comparisons (distribution sums, Park checks).
pub const FLOAT_TOLERANCE: f64 = 1e-12;

/// Field operations needed by the linear solvers and policy iteration.
///
/// Implemented for `f64` (fast path) and [`Rational`] (exact path).
pub trait Scalar: Clone + PartialOrd + Zero + One + fmt::Debug + Send + Sync + 'static {
    fn plus(&self, other: &Self) -> Self;
    fn minus(&self, other: &Self) -> Self;
    fn times(&self, other: &Self) -> Self;
    fn over(&self, other: &Self) -> Self;
    fn as_f64(&self) -> f64;
    /// Exact conversion from a finite float.
    fn from_f64(x: f64) -> Self;
    /// Picks the exact value when available, else converts the float.
    fn from_parts(exact: Option<&Rational>, approx: f64) -> Self;
    /// Strict improvement test used by policy iteration.
    fn improves(&self, over: &Self) -> bool;

    fn add_assign(&mut self, other: &Self) {
        *self = Scalar::plus(self, other);
    }
    fn sub_assign(&mut self, other: &Self) {
        *self = Scalar::minus(self, other);
    }
}

impl Scalar for f64 {
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn minus(&self, other: &Self) -> Self {
        self - other
    }
    fn times(&self, other: &Self) -> Self {
        self * other
    }
    fn over(&self, other: &Self) -> Self {
        self / other
    }
    fn as_f64(&self) -> f64 {
        *self
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn from_parts(_exact: Option<&Rational>, approx: f64) -> Self {
        approx
    }
    fn improves(&self, over: &Self) -> bool {
        *self > *over + FLOAT_TOLERANCE
    }
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn sub_assign(&mut self, other: &Self) {
        *self -= other;
    }
}

impl Scalar for Rational {
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn minus(&self, other: &Self) -> Self {
        self - other
    }
    fn times(&self, other: &Self) -> Self {
        self * other
    }
    fn over(&self, other: &Self) -> Self {
        self / other
    }
    fn as_f64(&self) -> f64 {
        ratio_to_f64(self)
    }
    fn from_f64(x: f64) -> Self {
        float_to_ratio(x)
    }
    fn from_parts(exact: Option<&Rational>, approx: f64) -> Self {
        match exact {
            Some(q) => q.clone(),
            None => float_to_ratio(approx),
        }
    }
    fn improves(&self, over: &Self) -> bool {
        self > over
    }
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn sub_assign(&mut self, other: &Self) {
        *self -= other;
    }
}

/// Exact rational value of a finite float.
pub fn float_to_ratio(x: f64) -> Rational {
    Rational::from_float(x).expect("non-finite float in exact conversion")
}

/// Nearest float to a rational.
pub fn ratio_to_f64(q: &Rational) -> f64 {
    if let Some(x) = q.to_f64() {
        if x.is_finite() {
            return x;
        }
    }
    // Very large numerator/denominator pairs: scale through the integer parts.
    let n = q.numer().to_f64().unwrap_or(f64::NAN);
    let d = q.denom().to_f64().unwrap_or(f64::NAN);
    n / d
}

/// Largest float not above `q`.
pub fn ratio_to_f64_down(q: &Rational) -> f64 {
    let mut x = ratio_to_f64(q);
    while float_to_ratio(x) > *q {
        x = x.next_down();
    }
    x
}

/// Smallest float not below `q`.
pub fn ratio_to_f64_up(q: &Rational) -> f64 {
    let mut x = ratio_to_f64(q);
    while float_to_ratio(x) < *q {
        x = x.next_up();
    }
    x
}

/// Parses `"num/den"`, an integer, or a decimal literal (`"0.35"`, `"1e-4"`) exactly.
pub fn parse_rational(text: &str) -> Result<Rational, Error> {
    let s = text.trim();
    let bad = || Error::Parse(format!("not a rational number: {text:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
        let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
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
    let mut numer = BigInt::from_str(if all.is_empty() { "0" } else { &all }).map_err(|_| bad())?;
    if negative {
        numer = -numer;
    }
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10u32);
    let value = if scale >= 0 {
        Rational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Ok(value)
}

/// Renders a rational as `"num/den"` (or an integer).
pub fn format_rational(q: &Rational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn is_probability(q: &Rational) -> bool {
    !q.is_negative() && *q <= Rational::one()
}

/// Dot product in exact arithmetic.
pub fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).fold(Rational::zero(), |acc, (x, y)| acc + x * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimals_and_fractions() {
        assert_eq!(parse_rational("0.7").unwrap(), ratio(7, 10));
        assert_eq!(parse_rational("1/2").unwrap(), ratio(1, 2));
        assert_eq!(parse_rational(" 3 / 6 ").unwrap(), ratio(1, 2));
        assert_eq!(parse_rational("1e-4").unwrap(), ratio(1, 10_000));
        assert_eq!(parse_rational("2.5E1").unwrap(), ratio(25, 1));
        assert_eq!(parse_rational(".25").unwrap(), ratio(1, 4));
        assert_eq!(parse_rational("-0.5").unwrap(), ratio(-1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("").is_err());
    }

    #[test]
    fn directed_rounding_brackets_value() {
        let third = ratio(1, 3);
        let lo = ratio_to_f64_down(&third);
        let hi = ratio_to_f64_up(&third);
        assert!(float_to_ratio(lo) <= third);
        assert!(float_to_ratio(hi) >= third);
        assert!(hi.next_down() <= lo);
        assert_eq!(ratio_to_f64_down(&ratio(1, 2)), 0.5);
        assert_eq!(ratio_to_f64_up(&ratio(1, 2)), 0.5);
    }

    #[test]
    fn float_conversion_is_exact() {
        let q = float_to_ratio(0.1);
        assert_ne!(q, ratio(1, 10));
        assert_eq!(ratio_to_f64(&q), 0.1);
    }

    #[test]
    fn format_roundtrip() {
        for s in ["35/79", "0", "1", "-3/4"] {
            let q = parse_rational(s).unwrap();
            assert_eq!(parse_rational(&format_rational(&q)).unwrap(), q);
        }
    }
}

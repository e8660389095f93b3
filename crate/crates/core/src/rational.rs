//! Exact rational helpers shared by every module.
//!
//! All clearing computations run on [`Rational`] (arbitrary precision,
//! always reduced, positive denominator). Decimal strings produced here are
//! display projections only.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

pub use num_rational::BigRational as Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumberError {
    #[error("empty number")]
    Empty,
    #[error("malformed number {0:?}: expected an integer, \"p/q\" or a terminating decimal")]
    Malformed(String),
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
}

/// Shorthand for an integer-valued rational.
pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Shorthand for `num / den`. Panics on a zero denominator.
pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Conversion used by the builder APIs so callers can write `3`, `(1, 2)`
/// or `"0.25"` where a rational is expected. String input panics when it is
/// not a valid number; use [`parse_exact`] for fallible parsing.
pub trait IntoRational {
    fn into_rational(self) -> Rational;
}

impl IntoRational for Rational {
    fn into_rational(self) -> Rational {
        self
    }
}

impl IntoRational for &Rational {
    fn into_rational(self) -> Rational {
        self.clone()
    }
}

impl IntoRational for i64 {
    fn into_rational(self) -> Rational {
        int(self)
    }
}

impl IntoRational for i32 {
    fn into_rational(self) -> Rational {
        int(self as i64)
    }
}

impl IntoRational for (i64, i64) {
    fn into_rational(self) -> Rational {
        ratio(self.0, self.1)
    }
}

impl IntoRational for &str {
    fn into_rational(self) -> Rational {
        parse_exact(self).unwrap_or_else(|e| panic!("{e}"))
    }
}

/// Parses integers (`"12"`), fractions (`"3/4"`) and terminating decimals
/// (`"0.125"`) exactly. Exponents, `inf` and `nan` are rejected.
pub fn parse_exact(text: &str) -> Result<Rational, NumberError> {
    let s = text.trim();
    if s.is_empty() {
        return Err(NumberError::Empty);
    }
    if let Some((num, den)) = s.split_once('/') {
        let num = parse_integer(num.trim()).ok_or_else(|| NumberError::Malformed(s.into()))?;
        let den = parse_integer(den.trim()).ok_or_else(|| NumberError::Malformed(s.into()))?;
        if den.is_zero() {
            return Err(NumberError::ZeroDenominator(s.into()));
        }
        return Ok(Rational::new(num, den));
    }
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (whole, frac) = match body.split_once('.') {
        Some((w, f)) => (w, f),
        None => (body, ""),
    };
    if whole.is_empty() && frac.is_empty() {
        return Err(NumberError::Malformed(s.into()));
    }
    if !whole.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(NumberError::Malformed(s.into()));
    }
    let digits = format!("{whole}{frac}");
    let mantissa: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().map_err(|_| NumberError::Malformed(s.into()))?
    };
    let scale = num_traits::pow(BigInt::from(10), frac.len());
    let value = Rational::new(mantissa, scale);
    Ok(if negative { -value } else { value })
}

fn parse_integer(s: &str) -> Option<BigInt> {
    let digits = s.strip_prefix('-').unwrap_or(s);
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// Canonical exact text: `"p"` for integers, `"p/q"` otherwise.
pub fn to_exact_string(x: &Rational) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Fixed-notation projection with `sig` significant digits, rounded half to
/// even, trailing zeros stripped.
pub fn to_decimal_string(x: &Rational, sig: u32) -> String {
    assert!(sig > 0, "need at least one significant digit");
    if x.is_zero() {
        return "0".to_string();
    }
    let negative = x.is_negative();
    let mag = x.abs();
    // Smallest e with 10^e > |x|, so that |x| in [10^(e-1), 10^e).
    let ten = int(10);
    let mut exp: i64 = 0;
    let mut probe = Rational::one();
    if mag >= probe {
        while mag >= probe {
            probe *= &ten;
            exp += 1;
        }
    } else {
        while mag < probe {
            probe /= &ten;
            exp -= 1;
        }
        probe *= &ten;
        exp += 1;
    }
    // Scale so that the integer part carries exactly `sig` digits.
    let shift = sig as i64 - exp;
    let scaled = if shift >= 0 {
        &mag * Rational::from_integer(num_traits::pow(BigInt::from(10), shift as usize))
    } else {
        &mag / Rational::from_integer(num_traits::pow(BigInt::from(10), (-shift) as usize))
    };
    let mut digits = round_half_even(&scaled);
    let mut shift = shift;
    // Rounding can carry into an extra digit (9.99.. -> 10.0..).
    if digits.to_string().len() as u32 > sig {
        digits = round_half_even(&(Rational::from_integer(digits) / &ten));
        shift -= 1;
    }
    let mut text = digits.to_string();
    let out = if shift <= 0 {
        text.extend(std::iter::repeat_n('0', (-shift) as usize));
        text
    } else {
        let shift = shift as usize;
        if text.len() <= shift {
            let pad = "0".repeat(shift - text.len());
            text = format!("0.{pad}{text}");
        } else {
            text.insert(text.len() - shift, '.');
        }
        let trimmed = text.trim_end_matches('0').trim_end_matches('.');
        trimmed.to_string()
    };
    if negative {
        format!("-{out}")
    } else {
        out
    }
}

fn round_half_even(x: &Rational) -> BigInt {
    let floor = x.floor();
    let frac = x - &floor;
    let half = ratio(1, 2);
    let base = floor.to_integer();
    if frac > half || (frac == half && base.is_odd()) {
        base + 1
    } else {
        base
    }
}

/// Rounds down onto the dyadic grid `2^-bits`.
pub fn floor_to_grid(x: &Rational, bits: u32) -> Rational {
    let scale = Rational::from_integer(BigInt::one() << bits);
    (x * &scale).floor() / scale
}

/// Rounds up onto the dyadic grid `2^-bits`.
pub fn ceil_to_grid(x: &Rational, bits: u32) -> Rational {
    let scale = Rational::from_integer(BigInt::one() << bits);
    (x * &scale).ceil() / scale
}

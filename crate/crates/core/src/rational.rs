//! Exact rational scalars.

use alloc::format;
use alloc::string::String;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

pub type Rational = num_rational::BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

pub fn zero() -> Rational {
    Rational::zero()
}

pub fn one() -> Rational {
    Rational::one()
}

/// Canonical `num/den` text (always with a denominator, reduced).
pub fn to_text(value: &Rational) -> String {
    format!("{}/{}", value.numer(), value.denom())
}

/// Parses `num/den` or a bare integer.
pub fn from_text(text: &str) -> Option<Rational> {
    let text = text.trim();
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text, "1"),
    };
    let num: BigInt = num.parse().ok()?;
    let den: BigInt = den.parse().ok()?;
    if den.is_zero() {
        return None;
    }
    Some(Rational::new(num, den))
}

pub fn is_nonnegative(value: &Rational) -> bool {
    !value.is_negative()
}

/// Smallest integer `k >= 1` with `1 - 1/k >= v`, for `0 <= v < 1`.
pub fn threshold_index(v: &Rational) -> u64 {
    let gap = one() - v;
    let recip = gap.recip();
    let ceil = recip.ceil().to_integer();
    let k: u64 = ceil.try_into().unwrap_or(u64::MAX);
    k.max(1)
}

//! Exact-or-float numeric constants.
//!
//! Integers and ratios of integers stay exact; any operation touching a float
//! yields a float. Rational overflow degrades to float instead of panicking.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, One, Signed, ToPrimitive, Zero};

pub type Rational = Ratio<i64>;

#[derive(Clone, Copy, Debug)]
pub enum Number {
    Rational(Rational),
    Float(f64),
}

impl Number {
    pub fn int(n: i64) -> Self {
        Number::Rational(Rational::from_integer(n))
    }

    pub fn ratio(n: i64, d: i64) -> Self {
        Number::Rational(Rational::new(n, d))
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Number::Rational(r) => r.to_f64().unwrap_or(f64::NAN),
            Number::Float(f) => f,
        }
    }

    pub fn is_zero(self) -> bool {
        match self {
            Number::Rational(r) => r.is_zero(),
            Number::Float(f) => f == 0.0,
        }
    }

    pub fn is_one(self) -> bool {
        match self {
            Number::Rational(r) => r.is_one(),
            Number::Float(f) => f == 1.0,
        }
    }

    pub fn is_negative(self) -> bool {
        match self {
            Number::Rational(r) => r.is_negative(),
            Number::Float(f) => f < 0.0,
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, Number::Float(_))
    }

    /// Integer value when the number is an exact integer.
    pub fn as_integer(self) -> Option<i64> {
        match self {
            Number::Rational(r) if r.is_integer() => Some(*r.numer()),
            _ => None,
        }
    }

    pub fn abs(self) -> Self {
        match self {
            Number::Rational(r) => Number::Rational(r.abs()),
            Number::Float(f) => Number::Float(f.abs()),
        }
    }

    pub fn neg(self) -> Self {
        match self {
            Number::Rational(r) => Number::Rational(-r),
            Number::Float(f) => Number::Float(-f),
        }
    }

    pub fn add(self, other: Self) -> Self {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => match a.checked_add(&b) {
                Some(r) => Number::Rational(r),
                None => Number::Float(self.to_f64() + other.to_f64()),
            },
            _ => Number::Float(self.to_f64() + other.to_f64()),
        }
    }

    pub fn mul(self, other: Self) -> Self {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => match a.checked_mul(&b) {
                Some(r) => Number::Rational(r),
                None => Number::Float(self.to_f64() * other.to_f64()),
            },
            _ => Number::Float(self.to_f64() * other.to_f64()),
        }
    }

    /// Division; `None` on exact division by zero.
    pub fn div(self, other: Self) -> Option<Self> {
        match (self, other) {
            (Number::Rational(_), Number::Rational(b)) if b.is_zero() => None,
            (Number::Rational(a), Number::Rational(b)) => Some(match a.checked_div(&b) {
                Some(r) => Number::Rational(r),
                None => Number::Float(self.to_f64() / other.to_f64()),
            }),
            _ => Some(Number::Float(self.to_f64() / other.to_f64())),
        }
    }

    /// Exact power for integer exponents of rationals; float otherwise.
    /// Returns `None` when the result would not be a real number or when an
    /// exact zero is raised to a negative power.
    pub fn pow(self, exp: Self) -> Option<Self> {
        if let (Number::Rational(base), Some(n)) = (self, exp.as_integer()) {
            if base.is_zero() && n < 0 {
                return None;
            }
            if let Some(r) = checked_rational_pow(base, n) {
                return Some(Number::Rational(r));
            }
            return Some(Number::Float(base.to_f64()?.powi(n as i32)));
        }
        if let Number::Rational(_) = self {
            if let Number::Rational(_) = exp {
                // Non-integer rational exponent of an exact base stays symbolic.
                return None;
            }
        }
        let b = self.to_f64();
        let e = exp.to_f64();
        let v = b.powf(e);
        if v.is_finite() {
            Some(Number::Float(v))
        } else {
            None
        }
    }

    fn rank_key(self) -> f64 {
        self.to_f64()
    }
}

fn checked_rational_pow(base: Rational, n: i64) -> Option<Rational> {
    if n.unsigned_abs() > 64 {
        return None;
    }
    let mut acc = Rational::one();
    for _ in 0..n.unsigned_abs() {
        acc = acc.checked_mul(&base)?;
    }
    if n < 0 {
        Rational::one().checked_div(&acc)
    } else {
        Some(acc)
    }
}

impl PartialEq for Number {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => a == b,
            (Number::Float(a), Number::Float(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl Eq for Number {}

impl Hash for Number {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Number::Rational(r) => {
                0u8.hash(state);
                r.numer().hash(state);
                r.denom().hash(state);
            }
            Number::Float(f) => {
                1u8.hash(state);
                f.to_bits().hash(state);
            }
        }
    }
}

impl PartialOrd for Number {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Number {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => a.cmp(b),
            (Number::Float(a), Number::Float(b)) => a.total_cmp(b),
            (Number::Rational(_), Number::Float(_)) => self
                .rank_key()
                .total_cmp(&other.rank_key())
                .then(Ordering::Less),
            (Number::Float(_), Number::Rational(_)) => self
                .rank_key()
                .total_cmp(&other.rank_key())
                .then(Ordering::Greater),
        }
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Number::Rational(r) if r.is_integer() => write!(f, "{}", r.numer()),
            Number::Rational(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            // Debug keeps a decimal point or exponent so the text re-parses as a float.
            Number::Float(x) => write!(f, "{:?}", x),
        }
    }
}

impl From<i64> for Number {
    fn from(n: i64) -> Self {
        Number::int(n)
    }
}

impl From<f64> for Number {
    fn from(x: f64) -> Self {
        Number::Float(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_arithmetic_stays_exact() {
        let a = Number::ratio(1, 3);
        let b = Number::ratio(2, 3);
        assert_eq!(a.add(b), Number::int(1));
        assert_eq!(a.mul(Number::int(3)), Number::int(1));
        assert_eq!(Number::int(2).pow(Number::int(-2)), Some(Number::ratio(1, 4)));
    }

    #[test]
    fn float_contamination_is_sticky() {
        let a = Number::int(1).add(Number::Float(0.5));
        assert!(a.is_float());
        assert_eq!(a.to_f64(), 1.5);
    }

    #[test]
    fn overflow_degrades_to_float() {
        let big = Number::int(i64::MAX / 2);
        let p = big.mul(Number::int(8));
        assert!(p.is_float());
        assert!((p.to_f64() - (i64::MAX / 2) as f64 * 8.0).abs() / p.to_f64() < 1e-12);
    }

    #[test]
    fn zero_to_negative_power_is_rejected() {
        assert_eq!(Number::int(0).pow(Number::int(-1)), None);
        assert_eq!(Number::int(2).pow(Number::ratio(1, 2)), None);
    }

    #[test]
    fn float_display_reparses_as_float() {
        assert_eq!(Number::Float(2.0).to_string(), "2.0");
        assert_eq!(Number::ratio(-3, 4).to_string(), "-3/4");
    }
}

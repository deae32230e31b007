//! Exact rational money.
//!
//! Every value, price and gain-from-trade in the crate is a [`Money`]. All
//! arithmetic is exact, so budget balance is checked with `==` rather than a
//! tolerance.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// An exact rational amount, always kept in lowest terms with a positive
/// denominator.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Money(BigRational);

impl Money {
    pub fn zero() -> Self {
        Money(BigRational::zero())
    }

    pub fn from_int(n: i64) -> Self {
        Money(BigRational::from_integer(BigInt::from(n)))
    }

    /// `numerator / denominator`; panics on a zero denominator.
    pub fn new(numerator: i64, denominator: i64) -> Self {
        assert!(denominator != 0, "zero denominator");
        Money(BigRational::new(numerator.into(), denominator.into()))
    }

    pub fn from_ratio(r: BigRational) -> Self {
        Money(r)
    }

    pub fn as_ratio(&self) -> &BigRational {
        &self.0
    }

    pub fn numerator(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denominator(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Money {
        Money(self.0.abs())
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    /// Multiply by an integer count (a recipe entry, a deal count).
    pub fn times(&self, n: usize) -> Money {
        Money(&self.0 * BigInt::from(n))
    }

    /// Divide by a positive integer count.
    pub fn over(&self, n: usize) -> Money {
        assert!(n > 0, "division by zero count");
        Money(&self.0 / BigInt::from(n))
    }

    pub fn checked_div(&self, rhs: &Money) -> Option<Money> {
        if rhs.is_zero() {
            None
        } else {
            Some(Money(&self.0 / &rhs.0))
        }
    }

    /// Nearest `f64`; only for reporting, never for decisions.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn min(self, other: Money) -> Money {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Money) -> Money {
        if other > self {
            other
        } else {
            self
        }
    }

    /// Terminating decimal expansion, if the denominator only has factors 2 and 5.
    fn decimal_string(&self) -> Option<String> {
        let den = self.0.denom();
        let two = BigInt::from(2);
        let five = BigInt::from(5);
        let mut rest = den.clone();
        let (mut twos, mut fives) = (0u32, 0u32);
        while rest.is_even() {
            rest /= &two;
            twos += 1;
        }
        while (&rest % &five).is_zero() {
            rest /= &five;
            fives += 1;
        }
        if !rest.is_one() {
            return None;
        }
        let digits = twos.max(fives);
        let scale = num_traits::pow(BigInt::from(10), digits as usize);
        let scaled = self.0.numer().abs() * (&scale / den);
        let mut s = scaled.to_string();
        if digits > 0 {
            let d = digits as usize;
            if s.len() <= d {
                s = format!("{}{}", "0".repeat(d + 1 - s.len()), s);
            }
            s.insert(s.len() - d, '.');
        }
        if self.0.is_negative() {
            s.insert(0, '-');
        }
        Some(s)
    }
}

impl fmt::Display for Money {
    /// Integers and terminating decimals are written in decimal form, anything
    /// else as `p/q`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.decimal_string() {
            Some(s) => f.write_str(&s),
            None => write!(f, "{}/{}", self.0.numer(), self.0.denom()),
        }
    }
}

impl fmt::Debug for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Money({self})")
    }
}

impl FromStr for Money {
    type Err = Error;

    /// Accepts `"17"`, `"-6.5"`, `"1.25e3"`, `"-20/3"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::Parse(format!("not an exact number: {s:?}"));
        let t = s.trim();
        if t.is_empty() {
            return Err(bad());
        }
        if let Some((p, q)) = t.split_once('/') {
            let p: Money = p.parse().map_err(|_| bad())?;
            let q: Money = q.parse().map_err(|_| bad())?;
            return p.checked_div(&q).ok_or_else(bad);
        }
        let (mantissa, exponent) = match t.find(['e', 'E']) {
            Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| bad())?),
            None => (t, 0),
        };
        let (negative, body) = match mantissa.as_bytes().first() {
            Some(b'-') => (true, &mantissa[1..]),
            Some(b'+') => (false, &mantissa[1..]),
            _ => (false, mantissa),
        };
        let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let digits = format!("{int_part}{frac_part}");
        let mut numer: BigInt = digits.parse().map_err(|_| bad())?;
        if negative {
            numer = -numer;
        }
        let shift = exponent - frac_part.len() as i32;
        let pow = num_traits::pow(BigInt::from(10), shift.unsigned_abs() as usize);
        let r = if shift >= 0 {
            BigRational::from_integer(numer * pow)
        } else {
            BigRational::new(numer, pow)
        };
        Ok(Money(r))
    }
}

impl From<i64> for Money {
    fn from(n: i64) -> Self {
        Money::from_int(n)
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Number(serde_json::Number),
        }
        let text = match Repr::deserialize(deserializer)? {
            Repr::Text(s) => s,
            Repr::Number(n) => n.to_string(),
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<Money> for Money {
            type Output = Money;
            fn $method(self, rhs: Money) -> Money {
                Money(self.0 $op rhs.0)
            }
        }
        impl<'a> $trait<&'a Money> for Money {
            type Output = Money;
            fn $method(self, rhs: &'a Money) -> Money {
                Money(self.0 $op &rhs.0)
            }
        }
        impl<'a> $trait<&'a Money> for &'a Money {
            type Output = Money;
            fn $method(self, rhs: &'a Money) -> Money {
                Money(&self.0 $op &rhs.0)
            }
        }
        impl<'a> $trait<Money> for &'a Money {
            type Output = Money;
            fn $method(self, rhs: Money) -> Money {
                Money(&self.0 $op rhs.0)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);

impl Div<&Money> for &Money {
    type Output = Money;
    fn div(self, rhs: &Money) -> Money {
        self.checked_div(rhs).expect("division by zero money")
    }
}

impl Div<Money> for Money {
    type Output = Money;
    fn div(self, rhs: Money) -> Money {
        &self / &rhs
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl Neg for &Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-&self.0)
    }
}

impl AddAssign<&Money> for Money {
    fn add_assign(&mut self, rhs: &Money) {
        self.0 += &rhs.0;
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl SubAssign<&Money> for Money {
    fn sub_assign(&mut self, rhs: &Money) {
        self.0 -= &rhs.0;
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::zero(), |acc, m| acc + m)
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        iter.fold(Money::zero(), |mut acc, m| {
            acc += m;
            acc
        })
    }
}

impl PartialEq<i64> for Money {
    fn eq(&self, other: &i64) -> bool {
        self.0 == BigRational::from_integer(BigInt::from(*other))
    }
}

impl PartialOrd<i64> for Money {
    fn partial_cmp(&self, other: &i64) -> Option<Ordering> {
        self.0.partial_cmp(&BigRational::from_integer(BigInt::from(*other)))
    }
}

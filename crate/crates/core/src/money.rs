//! Exact scalar types used by every mechanism and checker.
//!
//! All amounts are rationals backed by `Ratio<i64>`. Incentive checks compare
//! utilities for strict inequality, so nothing in the exact path ever touches
//! floating point.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ParseError;

pub type Ratio = Rational64;

/// Parses `"3"`, `"-1/4"`, `"0.25"` into an exact rational.
pub fn parse_ratio(text: &str) -> Result<Ratio, ParseError> {
    let s = text.trim();
    let bad = || ParseError::Number(text.to_string());
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: i64 = num.trim().parse().map_err(|_| bad())?;
        let d: i64 = den.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let negative = int.starts_with('-');
        let int_digits = int.trim_start_matches(['-', '+']);
        if frac.is_empty() && int_digits.is_empty() {
            return Err(bad());
        }
        if !frac.chars().all(|c| c.is_ascii_digit()) || frac.len() > 17 {
            return Err(bad());
        }
        let whole: i64 = if int_digits.is_empty() {
            0
        } else {
            int_digits.parse().map_err(|_| bad())?
        };
        let scale = 10i64.checked_pow(frac.len() as u32).ok_or_else(bad)?;
        let frac_part: i64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        let numer = whole
            .checked_mul(scale)
            .and_then(|w| w.checked_add(frac_part))
            .ok_or_else(bad)?;
        let r = Ratio::new(numer, scale);
        return Ok(if negative { -r } else { r });
    }
    s.parse::<i64>().map(Ratio::from_integer).map_err(|_| bad())
}

/// Exact comparison by cross-multiplication; denominators are always positive.
fn cmp_ratio(a: &Ratio, b: &Ratio) -> Ordering {
    if a.denom() == b.denom() {
        return a.numer().cmp(b.numer());
    }
    let lhs = i128::from(*a.numer()) * i128::from(*b.denom());
    let rhs = i128::from(*b.numer()) * i128::from(*a.denom());
    lhs.cmp(&rhs)
}

fn format_ratio(r: &Ratio, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if r.is_integer() {
        write!(f, "{}", r.numer())
    } else {
        write!(f, "{}/{}", r.numer(), r.denom())
    }
}

fn serialize_ratio<S: Serializer>(r: &Ratio, serializer: S) -> Result<S::Ok, S::Error> {
    if r.is_integer() {
        serializer.serialize_i64(*r.numer())
    } else {
        serializer.collect_str(&format_args!("{}/{}", r.numer(), r.denom()))
    }
}

struct RatioVisitor;

impl Visitor<'_> for RatioVisitor {
    type Value = Ratio;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("an integer, a decimal number, or a \"p/q\" string")
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Ratio, E> {
        Ok(Ratio::from_integer(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Ratio, E> {
        i64::try_from(v)
            .map(Ratio::from_integer)
            .map_err(|_| E::custom("integer out of range"))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Ratio, E> {
        // Shortest round-trip formatting recovers the decimal the user typed.
        parse_ratio(&format!("{v}")).map_err(E::custom)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Ratio, E> {
        parse_ratio(v).map_err(E::custom)
    }
}

fn deserialize_ratio<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Ratio, D::Error> {
    deserializer.deserialize_any(RatioVisitor)
}

/// A non-negative amount of currency: a bid, payment, burn, or reserve.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Money(Ratio);

impl Money {
    pub const ZERO: Money = Money(Ratio::new_raw(0, 1));

    pub fn new(value: Ratio) -> Result<Self, ParseError> {
        if value.is_negative() {
            Err(ParseError::Negative(value.to_string()))
        } else {
            Ok(Money(value))
        }
    }

    pub fn from_int(value: u32) -> Self {
        Money(Ratio::from_integer(i64::from(value)))
    }

    /// `numer / denom`; panics on a negative or zero-denominator input.
    pub fn frac(numer: i64, denom: i64) -> Self {
        Money::new(Ratio::new(numer, denom)).expect("money must be non-negative")
    }

    pub fn ratio(self) -> Ratio {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0.is_zero()
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Multiplies by a positive scale factor.
    pub fn scaled(self, factor: Ratio) -> Money {
        debug_assert!(!factor.is_negative());
        Money(self.0 * factor)
    }

    /// `self − other`, clamped at zero.
    pub fn saturating_sub(self, other: Money) -> Money {
        if other >= self {
            Money::ZERO
        } else {
            Money(self.0 - other.0)
        }
    }
}

impl PartialOrd for Money {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Money {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_ratio(&self.0, &other.0)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        format_ratio(&self.0, f)
    }
}

impl fmt::Debug for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Money {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Money::new(parse_ratio(s)?)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Utility;
    fn sub(self, rhs: Money) -> Utility {
        Utility(self.0 - rhs.0)
    }
}

impl Mul<Probability> for Money {
    type Output = Money;
    fn mul(self, rhs: Probability) -> Money {
        if rhs.0.is_one() {
            self
        } else if rhs.0.is_zero() {
            Money::ZERO
        } else {
            Money(self.0 * rhs.0)
        }
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serialize_ratio(&self.0, serializer)
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Money::new(deserialize_ratio(deserializer)?).map_err(de::Error::custom)
    }
}

/// A signed exact amount: utilities, utility differences, and other compared
/// quantities.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Utility(Ratio);

impl Utility {
    pub const ZERO: Utility = Utility(Ratio::new_raw(0, 1));

    pub fn new(value: Ratio) -> Self {
        Utility(value)
    }

    pub fn frac(numer: i64, denom: i64) -> Self {
        Utility(Ratio::new(numer, denom))
    }

    pub fn ratio(self) -> Ratio {
        self.0
    }

    pub fn is_positive(self) -> bool {
        self.0.is_positive()
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl From<Money> for Utility {
    fn from(m: Money) -> Self {
        Utility(m.0)
    }
}

impl From<Probability> for Utility {
    fn from(p: Probability) -> Self {
        Utility(p.0)
    }
}

impl PartialOrd for Utility {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Utility {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_ratio(&self.0, &other.0)
    }
}

impl fmt::Display for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        format_ratio(&self.0, f)
    }
}

impl fmt::Debug for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Utility {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_ratio(s).map(Utility)
    }
}

impl Add for Utility {
    type Output = Utility;
    fn add(self, rhs: Utility) -> Utility {
        Utility(self.0 + rhs.0)
    }
}

impl AddAssign for Utility {
    fn add_assign(&mut self, rhs: Utility) {
        self.0 += rhs.0;
    }
}

impl Sub for Utility {
    type Output = Utility;
    fn sub(self, rhs: Utility) -> Utility {
        Utility(self.0 - rhs.0)
    }
}

impl SubAssign for Utility {
    fn sub_assign(&mut self, rhs: Utility) {
        self.0 -= rhs.0;
    }
}

impl Add<Money> for Utility {
    type Output = Utility;
    fn add(self, rhs: Money) -> Utility {
        Utility(self.0 + rhs.0)
    }
}

impl Sub<Money> for Utility {
    type Output = Utility;
    fn sub(self, rhs: Money) -> Utility {
        Utility(self.0 - rhs.0)
    }
}

impl Neg for Utility {
    type Output = Utility;
    fn neg(self) -> Utility {
        Utility(-self.0)
    }
}

impl Sum for Utility {
    fn sum<I: Iterator<Item = Utility>>(iter: I) -> Utility {
        iter.fold(Utility::ZERO, Add::add)
    }
}

impl Serialize for Utility {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serialize_ratio(&self.0, serializer)
    }
}

impl<'de> Deserialize<'de> for Utility {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserialize_ratio(deserializer).map(Utility)
    }
}

/// An allocation probability in `[0, 1]`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Probability(Ratio);

impl Probability {
    pub const ZERO: Probability = Probability(Ratio::new_raw(0, 1));
    pub const ONE: Probability = Probability(Ratio::new_raw(1, 1));

    pub fn new(value: Ratio) -> Result<Self, ParseError> {
        if value.is_negative() || value > Ratio::one() {
            Err(ParseError::Probability(value.to_string()))
        } else {
            Ok(Probability(value))
        }
    }

    pub fn frac(numer: i64, denom: i64) -> Self {
        Probability::new(Ratio::new(numer, denom)).expect("probability must lie in [0, 1]")
    }

    pub fn ratio(self) -> Ratio {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(self) -> bool {
        self.0.is_one()
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl PartialOrd for Probability {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Probability {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_ratio(&self.0, &other.0)
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        format_ratio(&self.0, f)
    }
}

impl fmt::Debug for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Probability {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serialize_ratio(&self.0, serializer)
    }
}

impl<'de> Deserialize<'de> for Probability {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Probability::new(deserialize_ratio(deserializer)?).map_err(de::Error::custom)
    }
}

/// A reserve or burn threshold that may be infinite.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reserve {
    Finite(Money),
    Infinite,
}

impl Reserve {
    pub fn finite(self) -> Option<Money> {
        match self {
            Reserve::Finite(m) => Some(m),
            Reserve::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Reserve::Infinite)
    }

    /// Whether `bid` clears the threshold (inclusive).
    pub fn admits(self, bid: Money) -> bool {
        match self {
            Reserve::Finite(r) => bid >= r,
            Reserve::Infinite => false,
        }
    }
}

impl Default for Reserve {
    fn default() -> Self {
        Reserve::Finite(Money::ZERO)
    }
}

impl From<Money> for Reserve {
    fn from(m: Money) -> Self {
        Reserve::Finite(m)
    }
}

impl PartialOrd for Reserve {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Reserve {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Reserve::Finite(a), Reserve::Finite(b)) => a.cmp(b),
            (Reserve::Finite(_), Reserve::Infinite) => Ordering::Less,
            (Reserve::Infinite, Reserve::Finite(_)) => Ordering::Greater,
            (Reserve::Infinite, Reserve::Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for Reserve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reserve::Finite(m) => write!(f, "{m}"),
            Reserve::Infinite => f.write_str("inf"),
        }
    }
}

impl fmt::Debug for Reserve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Reserve {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Reserve::Infinite),
            other => other.parse().map(Reserve::Finite),
        }
    }
}

impl Serialize for Reserve {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Reserve::Finite(m) => m.serialize(serializer),
            Reserve::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Reserve {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ReserveVisitor;

        impl Visitor<'_> for ReserveVisitor {
            type Value = Reserve;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative amount or \"inf\"")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Reserve, E> {
                RatioVisitor.visit_i64(v).and_then(finite)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Reserve, E> {
                RatioVisitor.visit_u64(v).and_then(finite)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Reserve, E> {
                if v.is_infinite() && v > 0.0 {
                    return Ok(Reserve::Infinite);
                }
                RatioVisitor.visit_f64(v).and_then(finite)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Reserve, E> {
                v.parse().map_err(E::custom)
            }
        }

        fn finite<E: de::Error>(r: Ratio) -> Result<Reserve, E> {
            Money::new(r).map(Reserve::Finite).map_err(E::custom)
        }

        deserializer.deserialize_any(ReserveVisitor)
    }
}

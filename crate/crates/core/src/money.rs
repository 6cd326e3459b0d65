//! Exact monetary values.
//!
//! Two types live here:
//!
//! - [`Money`]: a nonnegative exact rational, used for balances, fees and
//!   escrow. Subtraction is checked and never goes below zero.
//! - [`Amount`]: a signed exact rational, used for utilities, margins and
//!   balance deltas.
//!
//! Both parse from decimal strings (`"0.165"`) or fractions (`"1/3"`) without
//! passing through binary floating point, and print as exact decimals when the
//! value terminates in base 10 (`p/q` otherwise).

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MoneyError {
    #[error("cannot parse {0:?} as an exact amount")]
    Parse(String),
    #[error("amount {0} is negative")]
    Negative(String),
    #[error("division by zero")]
    DivisionByZero,
}

/// Signed exact rational.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Amount(BigRational);

/// Nonnegative exact rational.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(BigRational);

impl Amount {
    pub fn zero() -> Self {
        Amount(BigRational::zero())
    }

    pub fn from_integer(v: i64) -> Self {
        Amount(BigRational::from_integer(BigInt::from(v)))
    }

    /// `num / den`; panics when `den == 0`.
    pub fn ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Amount(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Amount {
        Amount(self.0.abs())
    }

    pub fn mul_int(&self, k: u64) -> Amount {
        Amount(&self.0 * BigInt::from(k))
    }

    pub fn div_int(&self, k: u64) -> Amount {
        assert!(k != 0, "division by zero");
        Amount(&self.0 / BigInt::from(k))
    }

    pub fn checked_div(&self, rhs: &Amount) -> Result<Amount, MoneyError> {
        if rhs.0.is_zero() {
            return Err(MoneyError::DivisionByZero);
        }
        Ok(Amount(&self.0 / &rhs.0))
    }

    /// Converts to [`Money`], failing on negative values.
    pub fn to_money(&self) -> Result<Money, MoneyError> {
        Money::try_from(self.clone())
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Decimal rendering rounded half away from zero to `places` digits.
    pub fn to_decimal(&self, places: u32) -> String {
        decimal_rounded(&self.0, places)
    }

    pub fn as_ratio(&self) -> &BigRational {
        &self.0
    }
}

impl Money {
    pub fn zero() -> Self {
        Money(BigRational::zero())
    }

    pub fn from_integer(v: u64) -> Self {
        Money(BigRational::from_integer(BigInt::from(v)))
    }

    /// `num / den`; panics when `den == 0`.
    pub fn ratio(num: u64, den: u64) -> Self {
        assert!(den != 0, "zero denominator");
        Money(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn checked_sub(&self, rhs: &Money) -> Option<Money> {
        if rhs.0 > self.0 {
            None
        } else {
            Some(Money(&self.0 - &rhs.0))
        }
    }

    pub fn mul_int(&self, k: u64) -> Money {
        Money(&self.0 * BigInt::from(k))
    }

    pub fn div_int(&self, k: u64) -> Money {
        assert!(k != 0, "division by zero");
        Money(&self.0 / BigInt::from(k))
    }

    /// Scales by a nonnegative rational factor.
    pub fn scale(&self, factor: &Money) -> Money {
        Money(&self.0 * &factor.0)
    }

    pub fn checked_div(&self, rhs: &Money) -> Result<Money, MoneyError> {
        if rhs.0.is_zero() {
            return Err(MoneyError::DivisionByZero);
        }
        Ok(Money(&self.0 / &rhs.0))
    }

    /// Largest multiple of `quantum` not above `self`.
    pub fn floor_to(&self, quantum: &Money) -> Money {
        assert!(!quantum.is_zero(), "zero quantum");
        let units = (&self.0 / &quantum.0).floor();
        Money(units * &quantum.0)
    }

    /// Smallest multiple of `quantum` not below `self`.
    pub fn ceil_to(&self, quantum: &Money) -> Money {
        assert!(!quantum.is_zero(), "zero quantum");
        let units = (&self.0 / &quantum.0).ceil();
        Money(units * &quantum.0)
    }

    /// Number of whole `quantum` units in `self`, rounded down.
    pub fn units(&self, quantum: &Money) -> BigInt {
        (&self.0 / &quantum.0).floor().to_integer()
    }

    /// `units × quantum`; negative unit counts clamp to zero.
    pub fn from_units(units: &BigInt, quantum: &Money) -> Money {
        if units.is_negative() {
            return Money::zero();
        }
        Money(BigRational::from_integer(units.clone()) * &quantum.0)
    }

    pub fn is_multiple_of(&self, quantum: &Money) -> bool {
        (&self.0 / &quantum.0).is_integer()
    }

    pub fn to_amount(&self) -> Amount {
        Amount(self.0.clone())
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn to_decimal(&self, places: u32) -> String {
        decimal_rounded(&self.0, places)
    }
}

impl TryFrom<Amount> for Money {
    type Error = MoneyError;

    fn try_from(a: Amount) -> Result<Self, Self::Error> {
        if a.0.is_negative() {
            Err(MoneyError::Negative(a.to_string()))
        } else {
            Ok(Money(a.0))
        }
    }
}

impl From<Money> for Amount {
    fn from(m: Money) -> Self {
        Amount(m.0)
    }
}

impl From<&Money> for Amount {
    fn from(m: &Money) -> Self {
        Amount(m.0.clone())
    }
}

// ---------------------------------------------------------------------------
// Arithmetic
// ---------------------------------------------------------------------------

macro_rules! forward_binop {
    ($ty:ident, $tr:ident, $method:ident, $op:tt) => {
        impl $tr<$ty> for $ty {
            type Output = $ty;
            fn $method(self, rhs: $ty) -> $ty {
                $ty(self.0 $op rhs.0)
            }
        }
        impl<'a> $tr<&'a $ty> for $ty {
            type Output = $ty;
            fn $method(self, rhs: &'a $ty) -> $ty {
                $ty(self.0 $op &rhs.0)
            }
        }
        impl<'a, 'b> $tr<&'b $ty> for &'a $ty {
            type Output = $ty;
            fn $method(self, rhs: &'b $ty) -> $ty {
                $ty(&self.0 $op &rhs.0)
            }
        }
    };
}

forward_binop!(Amount, Add, add, +);
forward_binop!(Amount, Sub, sub, -);
forward_binop!(Amount, Mul, mul, *);
forward_binop!(Money, Add, add, +);
forward_binop!(Money, Mul, mul, *);

impl Div<&Amount> for &Amount {
    type Output = Amount;
    fn div(self, rhs: &Amount) -> Amount {
        Amount(&self.0 / &rhs.0)
    }
}

impl Neg for Amount {
    type Output = Amount;
    fn neg(self) -> Amount {
        Amount(-self.0)
    }
}

impl AddAssign<&Amount> for Amount {
    fn add_assign(&mut self, rhs: &Amount) {
        self.0 += &rhs.0;
    }
}

impl SubAssign<&Amount> for Amount {
    fn sub_assign(&mut self, rhs: &Amount) {
        self.0 -= &rhs.0;
    }
}

impl AddAssign<&Money> for Money {
    fn add_assign(&mut self, rhs: &Money) {
        self.0 += &rhs.0;
    }
}

impl Sum for Amount {
    fn sum<I: Iterator<Item = Amount>>(iter: I) -> Amount {
        iter.fold(Amount::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Amount> for Amount {
    fn sum<I: Iterator<Item = &'a Amount>>(iter: I) -> Amount {
        iter.fold(Amount::zero(), |acc, x| acc + x)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        iter.fold(Money::zero(), |acc, x| acc + x)
    }
}

impl PartialEq<Money> for Amount {
    fn eq(&self, other: &Money) -> bool {
        self.0 == other.0
    }
}

impl PartialOrd<Money> for Amount {
    fn partial_cmp(&self, other: &Money) -> Option<Ordering> {
        self.0.partial_cmp(&other.0)
    }
}

// ---------------------------------------------------------------------------
// Parsing and formatting
// ---------------------------------------------------------------------------

fn parse_rational(s: &str) -> Result<BigRational, MoneyError> {
    let err = || MoneyError::Parse(s.to_string());
    let t = s.trim();
    if t.is_empty() {
        return Err(err());
    }
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| err())?;
        let d: BigInt = d.trim().parse().map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(BigRational::new(n, d));
    }
    let (neg, body) = match t.as_bytes()[0] {
        b'-' => (true, &t[1..]),
        b'+' => (false, &t[1..]),
        _ => (false, t),
    };
    let (mantissa, exp) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], body[i + 1..].parse::<i32>().map_err(|_| err())?),
        None => (body, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(err());
    }
    let digits = format!("{int_part}{frac_part}");
    let mut num: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().map_err(|_| err())? };
    if neg {
        num = -num;
    }
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10u8);
    let value = if scale >= 0 {
        BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    Ok(value)
}

/// Exact decimal expansion if the denominator is of the form 2^a·5^b.
fn exact_decimal(r: &BigRational) -> Option<String> {
    let mut den = r.denom().clone();
    let two = BigInt::from(2u8);
    let five = BigInt::from(5u8);
    let (mut twos, mut fives) = (0usize, 0usize);
    while den.is_even() {
        den /= &two;
        twos += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() {
        return None;
    }
    let places = twos.max(fives);
    Some(decimal_rounded(r, places as u32))
}

fn decimal_rounded(r: &BigRational, places: u32) -> String {
    let scale = num_traits::pow(BigInt::from(10u8), places as usize);
    let scaled = r * BigRational::from_integer(scale.clone());
    // round half away from zero
    let rounded = if scaled.is_negative() {
        -((-scaled) + BigRational::new(BigInt::one(), BigInt::from(2u8))).floor()
    } else {
        (scaled + BigRational::new(BigInt::one(), BigInt::from(2u8))).floor()
    };
    let n = rounded.to_integer();
    let neg = n.sign() == Sign::Minus;
    let digits = n.magnitude().to_string();
    let places = places as usize;
    let body = if places == 0 {
        digits
    } else if digits.len() <= places {
        format!("0.{}{}", "0".repeat(places - digits.len()), digits)
    } else {
        let (i, f) = digits.split_at(digits.len() - places);
        format!("{i}.{f}")
    };
    if neg && n.sign() != Sign::NoSign {
        format!("-{body}")
    } else {
        body
    }
}

fn render(r: &BigRational) -> String {
    if r.is_integer() {
        return r.to_integer().to_string();
    }
    match exact_decimal(r) {
        Some(s) => s,
        None => format!("{}/{}", r.numer(), r.denom()),
    }
}

impl FromStr for Amount {
    type Err = MoneyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_rational(s).map(Amount)
    }
}

impl FromStr for Money {
    type Err = MoneyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Money::try_from(Amount(parse_rational(s)?))
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(&self.0))
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(&self.0))
    }
}

impl fmt::Debug for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Amount({self})")
    }
}

impl fmt::Debug for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Money({self})")
    }
}

// Serialized as exact strings. Deserialization also accepts numbers so that
// hand-written configs can say `sf = 0.165`; floats go through their shortest
// round-trip decimal form, which is what the author typed.
struct ExactVisitor;

impl<'de> de::Visitor<'de> for ExactVisitor {
    type Value = BigRational;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a decimal string, fraction string or number")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<BigRational, E> {
        parse_rational(v).map_err(E::custom)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<BigRational, E> {
        Ok(BigRational::from_integer(BigInt::from(v)))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<BigRational, E> {
        Ok(BigRational::from_integer(BigInt::from(v)))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<BigRational, E> {
        if !v.is_finite() {
            return Err(E::custom("non-finite amount"));
        }
        parse_rational(&format!("{v}")).map_err(E::custom)
    }
}

impl Serialize for Amount {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Amount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(ExactVisitor).map(Amount)
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = d.deserialize_any(ExactVisitor)?;
        Money::try_from(Amount(r)).map_err(de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(s: &str) -> Money {
        s.parse().unwrap()
    }

    #[test]
    fn decimal_parse_is_exact() {
        assert_eq!(m("0.165"), Money::ratio(165, 1000));
        assert_eq!(m("2.165").checked_sub(&m("0.165")), Some(Money::from_integer(2)));
        assert_eq!("1/3".parse::<Amount>().unwrap(), Amount::ratio(1, 3));
        assert_eq!("-0.5".parse::<Amount>().unwrap(), Amount::ratio(-1, 2));
        assert_eq!("1e-3".parse::<Money>().unwrap(), Money::ratio(1, 1000));
        assert!("abc".parse::<Money>().is_err());
        assert!("-1".parse::<Money>().is_err());
        assert!(".".parse::<Money>().is_err());
    }

    #[test]
    fn display_prefers_exact_decimal() {
        assert_eq!(m("0.1815").to_string(), "0.1815");
        assert_eq!(Money::ratio(1, 3).to_string(), "1/3");
        assert_eq!(Money::from_integer(7).to_string(), "7");
        assert_eq!(Amount::ratio(-13, 200).to_string(), "-0.065");
        assert_eq!(Money::ratio(2, 3).to_decimal(4), "0.6667");
        assert_eq!(Amount::ratio(-2, 3).to_decimal(2), "-0.67");
        assert_eq!(Amount::ratio(-1, 1000).to_decimal(2), "0.00");
    }

    #[test]
    fn checked_sub_never_negative() {
        assert_eq!(m("0.1").checked_sub(&m("0.2")), None);
        assert_eq!(m("0.3").checked_sub(&m("0.1")), Some(m("0.2")));
    }

    #[test]
    fn floor_to_quantum() {
        let q = m("0.001");
        assert_eq!(m("0.0165").floor_to(&q), m("0.016"));
        assert_eq!(m("0.033").floor_to(&q), m("0.033"));
        assert_eq!(m("0.0825").floor_to(&q), m("0.082"));
    }

    #[test]
    fn serde_accepts_strings_and_numbers() {
        #[derive(Deserialize)]
        struct T {
            a: Money,
            b: Money,
            c: Amount,
        }
        let t: T = toml::from_str("a = \"0.165\"\nb = 0.165\nc = -2").unwrap();
        assert_eq!(t.a, t.b);
        assert_eq!(t.c, Amount::from_integer(-2));
        assert_eq!(serde_json::to_string(&m("0.0325")).unwrap(), "\"0.0325\"");
    }
}

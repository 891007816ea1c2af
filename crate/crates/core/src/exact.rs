//! Exact rational quantities for times, costs and memory.
//!
//! Every simulator quantity is a reduced fraction of two `i128`s so that
//! traces compare exactly across runs and platforms. Values print as plain
//! decimals when the denominator has only factors 2 and 5, and as `p/q`
//! otherwise.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Sub, SubAssign};
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParseExactError {
    #[error("empty number")]
    Empty,
    #[error("invalid number `{0}`")]
    Invalid(String),
    #[error("number `{0}` is out of range")]
    OutOfRange(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
}

/// An exact rational quantity.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Exact(Ratio<i128>);

impl Exact {
    pub const ZERO: Exact = Exact(Ratio::new_raw(0, 1));
    pub const ONE: Exact = Exact(Ratio::new_raw(1, 1));

    pub fn from_int(n: i64) -> Self {
        Exact(Ratio::from_integer(n as i128))
    }

    /// Panics if `den` is zero.
    pub fn new(num: i128, den: i128) -> Self {
        Exact(Ratio::new(num, den))
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
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

    pub fn abs(&self) -> Self {
        Exact(self.0.abs())
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Parses `12`, `-0.25`, `1.5e3`, `2E-2` or `p/q`.
    pub fn parse(text: &str) -> Result<Self, ParseExactError> {
        let s = text.trim();
        if s.is_empty() {
            return Err(ParseExactError::Empty);
        }
        if let Some((n, d)) = s.split_once('/') {
            let invalid = || ParseExactError::Invalid(text.to_string());
            let num: i128 = n.trim().parse().map_err(|_| invalid())?;
            let den: i128 = d.trim().parse().map_err(|_| invalid())?;
            if den == 0 {
                return Err(ParseExactError::ZeroDenominator(text.to_string()));
            }
            return Ok(Exact::new(num, den));
        }
        parse_decimal(s).ok_or_else(|| {
            if is_decimal_syntax(s) {
                ParseExactError::OutOfRange(text.to_string())
            } else {
                ParseExactError::Invalid(text.to_string())
            }
        })
    }

    /// Number of decimal places needed for an exact decimal rendering, or
    /// `None` when the expansion does not terminate.
    fn decimal_places(&self) -> Option<u32> {
        let mut den = self.denom();
        let (mut twos, mut fives) = (0u32, 0u32);
        while den % 2 == 0 {
            den /= 2;
            twos += 1;
        }
        while den % 5 == 0 {
            den /= 5;
            fives += 1;
        }
        (den == 1).then_some(twos.max(fives))
    }

    fn write_decimal(&self, f: &mut fmt::Formatter<'_>, min_places: u32) -> fmt::Result {
        let Some(places) = self.decimal_places() else {
            return write!(f, "{}/{}", self.numer(), self.denom());
        };
        let places = places.max(min_places);
        let scale = match 10i128.checked_pow(places) {
            Some(s) => s,
            None => return write!(f, "{}/{}", self.numer(), self.denom()),
        };
        let Some(scaled) = self.numer().checked_mul(scale / self.denom()) else {
            return write!(f, "{}/{}", self.numer(), self.denom());
        };
        let sign = if scaled < 0 { "-" } else { "" };
        let digits = scaled.unsigned_abs();
        if places == 0 {
            return write!(f, "{sign}{digits}");
        }
        let unit = 10u128.pow(places);
        let (int_part, frac_part) = digits.div_rem(&unit);
        write!(
            f,
            "{sign}{int_part}.{frac_part:0width$}",
            width = places as usize
        )
    }

    /// Decimal rendering with at least one fractional digit (`1.0`, `0.25`);
    /// used for dimensionless ratios.
    pub fn ratio_string(&self) -> String {
        struct AsRatio<'a>(&'a Exact);
        impl fmt::Display for AsRatio<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.write_decimal(f, 1)
            }
        }
        AsRatio(self).to_string()
    }
}

/// Digits kept when a value with no finite decimal expansion is rounded.
pub const ROUNDED_PLACES: usize = 6;

impl Exact {
    /// Plain decimal for tabular output: exact when the expansion terminates
    /// (with at least `min_places` fractional digits), otherwise rounded to
    /// [`ROUNDED_PLACES`].
    pub fn plain_decimal(&self, min_places: u32) -> String {
        struct Plain<'a>(&'a Exact, u32);
        impl fmt::Display for Plain<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.write_decimal(f, self.1)
            }
        }
        let exact = Plain(self, min_places).to_string();
        if exact.contains('/') {
            format!("{:.*}", ROUNDED_PLACES, self.to_f64())
        } else {
            exact
        }
    }
}

fn is_decimal_syntax(s: &str) -> bool {
    let body = s.strip_prefix(['-', '+']).unwrap_or(s);
    let (mantissa, exp) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], Some(&body[i + 1..])),
        None => (body, None),
    };
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let digits_ok = !(int.is_empty() && frac.is_empty())
        && int.bytes().all(|b| b.is_ascii_digit())
        && frac.bytes().all(|b| b.is_ascii_digit());
    let exp_ok = exp.is_none_or(|e| {
        let e = e.strip_prefix(['-', '+']).unwrap_or(e);
        !e.is_empty() && e.bytes().all(|b| b.is_ascii_digit())
    });
    digits_ok && exp_ok
}

fn parse_decimal(s: &str) -> Option<Exact> {
    if !is_decimal_syntax(s) {
        return None;
    }
    let negative = s.starts_with('-');
    let body = s.strip_prefix(['-', '+']).unwrap_or(s);
    let (mantissa, exp) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], body[i + 1..].parse::<i32>().ok()?),
        None => (body, 0),
    };
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let digits = format!("{int}{frac}");
    let digits = digits.trim_start_matches('0');
    let mut num: i128 = if digits.is_empty() {
        0
    } else {
        digits.parse().ok()?
    };
    if negative {
        num = -num;
    }
    let shift = exp - frac.len() as i32;
    let value = if shift >= 0 {
        let factor = 10i128.checked_pow(shift as u32)?;
        Ratio::from_integer(num.checked_mul(factor)?)
    } else {
        Ratio::new(num, 10i128.checked_pow(shift.unsigned_abs())?)
    };
    Some(Exact(value))
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_decimal(f, 0)
    }
}

impl fmt::Debug for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Exact({self})")
    }
}

impl FromStr for Exact {
    type Err = ParseExactError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Exact::parse(s)
    }
}

impl From<i64> for Exact {
    fn from(n: i64) -> Self {
        Exact::from_int(n)
    }
}

impl From<i32> for Exact {
    fn from(n: i32) -> Self {
        Exact::from_int(n as i64)
    }
}

impl From<u32> for Exact {
    fn from(n: u32) -> Self {
        Exact::from_int(n as i64)
    }
}

impl From<usize> for Exact {
    fn from(n: usize) -> Self {
        Exact(Ratio::from_integer(n as i128))
    }
}

impl Add for Exact {
    type Output = Exact;
    fn add(self, rhs: Exact) -> Exact {
        Exact(self.0 + rhs.0)
    }
}

impl AddAssign for Exact {
    fn add_assign(&mut self, rhs: Exact) {
        self.0 += rhs.0;
    }
}

impl Sub for Exact {
    type Output = Exact;
    fn sub(self, rhs: Exact) -> Exact {
        Exact(self.0 - rhs.0)
    }
}

impl SubAssign for Exact {
    fn sub_assign(&mut self, rhs: Exact) {
        self.0 -= rhs.0;
    }
}

impl Mul for Exact {
    type Output = Exact;
    fn mul(self, rhs: Exact) -> Exact {
        Exact(self.0 * rhs.0)
    }
}

impl Div for Exact {
    type Output = Exact;
    fn div(self, rhs: Exact) -> Exact {
        Exact(self.0 / rhs.0)
    }
}

impl Sum for Exact {
    fn sum<I: Iterator<Item = Exact>>(iter: I) -> Exact {
        iter.fold(Exact::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Exact> for Exact {
    fn sum<I: Iterator<Item = &'a Exact>>(iter: I) -> Exact {
        iter.copied().sum()
    }
}

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Exact::parse(&s).map_err(serde::de::Error::custom)
    }
}

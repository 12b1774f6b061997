//! Exact numeric inputs: rationals, quadratic surds and finite decimals.
//!
//! Everything the user types is parsed here, once. Consumers that need a
//! float call [`ExactNumber::to_f64`]/[`ExactNumber::to_dd`]; continued-fraction
//! code asks for a rational enclosure via [`ExactNumber::enclosure`].

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::error::{Error, Result};

/// Fractional bits used for irrational enclosures.
pub const ENCLOSURE_BITS: u32 = 256;

#[derive(Debug, Clone, PartialEq)]
pub enum ExactNumber {
    /// Integers and `p/q` literals.
    Rational(BigRational),
    /// `a + b*sqrt(d)` with `d` squarefree, `d > 1`, `b != 0`.
    Surd {
        a: BigRational,
        b: BigRational,
        d: BigInt,
    },
    /// A decimal literal with a fractional part. The stored value is exact, but
    /// when it stands for an irrational coefficient only `digits` significant
    /// digits are trusted.
    Decimal {
        value: BigRational,
        /// Power of ten of the last written digit (e.g. `-3` for `1.234`).
        last_place: i32,
    },
}

/// How much is known about the irrationality of a ratio of two inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioStatus {
    /// Both are elements of quadratic fields and the ratio provably lies outside Q.
    Certified,
    /// At least one side is a truncated decimal.
    UnverifiedIrrational,
    /// The ratio is an exact rational number.
    Rational,
}

fn parse_err(input: &str, reason: impl Into<String>) -> Error {
    Error::Parse {
        input: input.to_string(),
        reason: reason.into(),
    }
}

fn pow10(e: u32) -> BigInt {
    num_traits::pow(BigInt::from(10u32), e as usize)
}

/// Parses a plain decimal (optionally with exponent) into an exact rational
/// and the decimal place of its last written digit.
fn parse_decimal(s: &str) -> Option<(BigRational, i32, bool)> {
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (int_part, frac_part, has_point) = match mant.split_once('.') {
        Some((i, f)) => (i, f, true),
        None => (mant, "", false),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut num = BigInt::from_str(if digits.is_empty() { "0" } else { &digits }).ok()?;
    if neg {
        num = -num;
    }
    let scale = exp - frac_part.len() as i32;
    let value = if scale >= 0 {
        BigRational::from_integer(num * pow10(scale as u32))
    } else {
        BigRational::new(num, pow10((-scale) as u32))
    };
    Some((value, scale, has_point || exp < 0))
}

fn parse_rational_atom(s: &str) -> Option<BigRational> {
    if let Some((p, q)) = s.split_once('/') {
        let (p, _, _) = parse_decimal(p.trim())?;
        let (q, _, _) = parse_decimal(q.trim())?;
        if q.is_zero() {
            return None;
        }
        Some(p / q)
    } else {
        parse_decimal(s).map(|(v, _, _)| v)
    }
}

/// Splits `d` into `s^2 * f` with `f` squarefree.
fn squarefree_split(d: &BigInt) -> (BigInt, BigInt) {
    let mut f = d.clone();
    let mut s = BigInt::one();
    let mut p = BigInt::from(2u32);
    while &p * &p <= f {
        let sq = &p * &p;
        while (&f % &sq).is_zero() {
            f /= &sq;
            s *= &p;
        }
        p += 1u32;
        if p > BigInt::from(1u64 << 24) {
            break;
        }
    }
    (s, f)
}

impl ExactNumber {
    pub fn rational(p: i64, q: i64) -> Self {
        ExactNumber::Rational(BigRational::new(p.into(), q.into()))
    }

    /// `a + b*sqrt(d)`, normalized; collapses to a rational when the radical is exact.
    pub fn surd(a: BigRational, b: BigRational, d: BigInt) -> Result<Self> {
        if d.is_negative() {
            return Err(parse_err(&d.to_string(), "negative radicand"));
        }
        let (s, f) = squarefree_split(&d);
        let b = b * BigRational::from_integer(s);
        if f.is_one() || f.is_zero() || b.is_zero() {
            let v = if f.is_zero() { a } else { a + b };
            return Ok(ExactNumber::Rational(v));
        }
        Ok(ExactNumber::Surd { a, b, d: f })
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ExactNumber::Rational(r) => r.is_zero(),
            ExactNumber::Decimal { value, .. } => value.is_zero(),
            ExactNumber::Surd { .. } => false,
        }
    }

    /// Sign of the value (-1, 0, 1).
    pub fn signum(&self) -> i32 {
        let (lo, hi) = self.enclosure(ENCLOSURE_BITS);
        if lo.is_positive() {
            1
        } else if hi.is_negative() {
            -1
        } else {
            0
        }
    }

    /// Exact rational value, if the input denotes one.
    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            ExactNumber::Rational(r) => Some(r),
            ExactNumber::Decimal { value, .. } => Some(value),
            ExactNumber::Surd { .. } => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.to_dd().to_f64()
    }

    pub fn to_dd(&self) -> Dd {
        let (lo, hi) = self.enclosure(ENCLOSURE_BITS);
        let mid = (lo + hi) / BigRational::from_integer(2.into());
        rational_to_dd(&mid)
    }

    /// A rational interval `[lo, hi]` containing the value. Surds are enclosed
    /// to `bits` fractional bits; decimals and rationals are returned exactly
    /// (decimals are *not* widened here, see [`ExactNumber::trusted_enclosure`]).
    pub fn enclosure(&self, bits: u32) -> (BigRational, BigRational) {
        match self {
            ExactNumber::Rational(r) => (r.clone(), r.clone()),
            ExactNumber::Decimal { value, .. } => (value.clone(), value.clone()),
            ExactNumber::Surd { a, b, d } => {
                let (slo, shi) = sqrt_enclosure(d, bits);
                let (x, y) = (b * &slo, b * &shi);
                let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
                (a + lo, a + hi)
            }
        }
    }

    /// Like [`ExactNumber::enclosure`] but widens decimals by half a unit in
    /// the last written place, treating them as truncations of an unknown real.
    pub fn trusted_enclosure(&self, bits: u32) -> (BigRational, BigRational) {
        match self {
            ExactNumber::Decimal { value, last_place } if *last_place < 0 => {
                let half = BigRational::new(BigInt::one(), pow10((-last_place) as u32) * 2);
                (value - &half, value + half)
            }
            _ => self.enclosure(bits),
        }
    }

    /// Irrationality status of `self / other`.
    pub fn ratio_status(&self, other: &ExactNumber) -> RatioStatus {
        use ExactNumber::*;
        match (self, other) {
            (Decimal { last_place, .. }, _) if *last_place < 0 => RatioStatus::UnverifiedIrrational,
            (_, Decimal { last_place, .. }) if *last_place < 0 => RatioStatus::UnverifiedIrrational,
            (Surd { a, b, d }, Surd { a: c, b: e, d: d2 }) => {
                if d != d2 {
                    RatioStatus::Certified
                } else if b * c - a * e != BigRational::zero() {
                    RatioStatus::Certified
                } else {
                    RatioStatus::Rational
                }
            }
            (Surd { .. }, x) | (x, Surd { .. }) => {
                if x.is_zero() {
                    RatioStatus::Rational
                } else {
                    RatioStatus::Certified
                }
            }
            _ => RatioStatus::Rational,
        }
    }
}

pub fn rational_to_dd(r: &BigRational) -> Dd {
    let hi = r.to_f64().unwrap_or(f64::NAN);
    if !hi.is_finite() {
        return Dd::from_f64(hi);
    }
    let hi_exact = BigRational::from_float(hi).unwrap_or_else(BigRational::zero);
    let lo = (r - hi_exact).to_f64().unwrap_or(0.0);
    Dd::new(hi, lo)
}

/// `[floor(sqrt(d) 2^bits), +1] / 2^bits`.
fn sqrt_enclosure(d: &BigInt, bits: u32) -> (BigRational, BigRational) {
    let scale = BigInt::one() << bits;
    let s = (d * &scale * &scale).sqrt();
    let lo = BigRational::new(s.clone(), scale.clone());
    let hi = if &s * &s == d * &scale * &scale {
        lo.clone()
    } else {
        BigRational::new(s + 1, scale)
    };
    (lo, hi)
}

impl FromStr for ExactNumber {
    type Err = Error;

    fn from_str(raw: &str) -> Result<Self> {
        let s: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(parse_err(raw, "empty"));
        }
        if s.contains("sqrt(") {
            return parse_surd(raw, &s);
        }
        if s.contains('/') {
            let r = parse_rational_atom(&s).ok_or_else(|| parse_err(raw, "bad rational p/q"))?;
            return Ok(ExactNumber::Rational(r));
        }
        let (value, last_place, fractional) =
            parse_decimal(&s).ok_or_else(|| parse_err(raw, "not a decimal, rational or surd"))?;
        if fractional {
            Ok(ExactNumber::Decimal { value, last_place })
        } else {
            Ok(ExactNumber::Rational(value))
        }
    }
}

/// Grammar: `[(] [a (+|-)] [b*] sqrt(d) [)] [/c]`.
fn parse_surd(raw: &str, s: &str) -> Result<ExactNumber> {
    let (body, denom) = match s.rfind(")/") {
        Some(i) if s.starts_with('(') => {
            let c = parse_rational_atom(&s[i + 2..]).ok_or_else(|| parse_err(raw, "bad denominator"))?;
            if c.is_zero() {
                return Err(parse_err(raw, "zero denominator"));
            }
            (&s[1..i], c)
        }
        _ => (s, BigRational::one()),
    };
    let k = body.find("sqrt(").expect("checked by caller");
    let close = body[k..].find(')').map(|j| k + j).ok_or_else(|| parse_err(raw, "unclosed sqrt("))?;
    if close + 1 != body.len() {
        return Err(parse_err(raw, "sqrt(d) must be the last term"));
    }
    let d = BigInt::from_str(&body[k + 5..close]).map_err(|_| parse_err(raw, "radicand must be an integer"))?;
    let head = &body[..k];
    // head is "", "-", "b*", "a+", "a-", "a+b*", "a-b*", ...
    let head = head.strip_suffix('*').unwrap_or(head);
    let split = head
        .char_indices()
        .skip(1)
        .filter(|&(i, c)| (c == '+' || c == '-') && !matches!(head.as_bytes()[i - 1], b'e' | b'E'))
        .map(|(i, _)| i)
        .last();
    let (a_str, b_str) = match split {
        Some(i) => (&head[..i], &head[i..]),
        None if head.is_empty() || head == "+" || head == "-" => ("", head),
        None if head.ends_with(['+', '-']) => (&head[..head.len() - 1], &head[head.len() - 1..]),
        None => ("", head),
    };
    let a = if a_str.is_empty() {
        BigRational::zero()
    } else {
        parse_rational_atom(a_str).ok_or_else(|| parse_err(raw, "bad rational term"))?
    };
    let b = match b_str {
        "" | "+" => BigRational::one(),
        "-" => -BigRational::one(),
        t => parse_rational_atom(t).ok_or_else(|| parse_err(raw, "bad surd coefficient"))?,
    };
    ExactNumber::surd(a / &denom, b / denom, d)
}

impl fmt::Display for ExactNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExactNumber::Rational(r) => write!(f, "{r}"),
            ExactNumber::Decimal { value, .. } => write!(f, "{}", value.to_f64().unwrap_or(f64::NAN)),
            ExactNumber::Surd { a, b, d } => {
                if a.is_zero() {
                    write!(f, "{b}*sqrt({d})")
                } else if b.is_negative() {
                    write!(f, "{a}-{}*sqrt({d})", -b)
                } else {
                    write!(f, "{a}+{b}*sqrt({d})")
                }
            }
        }
    }
}

/// Floor of a rational as a big integer.
pub fn floor_rational(r: &BigRational) -> BigInt {
    let (q, _) = r.numer().div_mod_floor(r.denom());
    q
}

//! Exact rational masses.
//!
//! Every probability weight in the crate is a [`Mass`], an arbitrary-precision
//! rational. Geometry (distances, costs, coordinates) stays in `f64`.

use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};

use crate::error::{OtError, Result};

pub type Mass = BigRational;

pub fn zero() -> Mass {
    Mass::zero()
}

pub fn one() -> Mass {
    Mass::one()
}

pub fn ratio(numer: i64, denom: i64) -> Mass {
    Mass::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn from_int(n: i64) -> Mass {
    Mass::from_integer(BigInt::from(n))
}

/// Exact value of a finite binary float (no decimal rounding).
pub fn from_f64(x: f64) -> Result<Mass> {
    Mass::from_float(x).ok_or_else(|| OtError::InvalidArgument(format!("non-finite mass {x}")))
}

pub fn to_f64(m: &Mass) -> f64 {
    m.to_f64().unwrap_or(f64::NAN)
}

/// Parses `"p/q"`, `"p"` or a plain decimal literal such as `"0.25"`.
/// Decimal strings are read as exact decimal fractions.
pub fn parse(s: &str) -> Result<Mass> {
    let s = s.trim();
    let bad = || OtError::InvalidArgument(format!("cannot parse rational '{s}'"));
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(OtError::InvalidArgument(format!("zero denominator in '{s}'")));
        }
        return Ok(Mass::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = int.starts_with('-');
        let int_part: BigInt = match int {
            "" | "-" | "+" => BigInt::zero(),
            _ => int.parse().map_err(|_| bad())?,
        };
        let frac_part: BigInt = frac.parse().map_err(|_| bad())?;
        let scale = num::pow(BigInt::from(10), frac.len());
        let magnitude = int_part.abs() * &scale + frac_part;
        let numer = if negative { -magnitude } else { magnitude };
        return Ok(Mass::new(numer, scale));
    }
    let p: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Mass::from_integer(p))
}

/// Canonical `"p/q"` form (`"p"` for integers).
pub fn format(m: &Mass) -> String {
    if m.denom().is_one() {
        m.numer().to_string()
    } else {
        format!("{}/{}", m.numer(), m.denom())
    }
}

pub fn sum<'a>(it: impl IntoIterator<Item = &'a Mass>) -> Mass {
    it.into_iter().fold(Mass::zero(), |acc, m| acc + m)
}

/// Best rational approximation with denominator at most `max_denom`
/// (continued-fraction convergents and semiconvergents).
pub fn limit_denominator(x: &Mass, max_denom: u64) -> Mass {
    let max_d = BigInt::from(max_denom);
    if x.denom() <= &max_d {
        return x.clone();
    }
    let (mut p0, mut q0, mut p1, mut q1) = (BigInt::zero(), BigInt::one(), BigInt::one(), BigInt::zero());
    let (mut n, mut d) = (x.numer().clone(), x.denom().clone());
    loop {
        let a = num::Integer::div_floor(&n, &d);
        let q2 = &q0 + &a * &q1;
        if q2 > max_d {
            break;
        }
        let p2 = &p0 + &a * &p1;
        p0 = std::mem::replace(&mut p1, p2);
        q0 = std::mem::replace(&mut q1, q2);
        let r = &n - &a * &d;
        n = std::mem::replace(&mut d, r);
        if d.is_zero() {
            break;
        }
    }
    let k = num::Integer::div_floor(&(&max_d - &q0), &q1);
    let bound1 = Mass::new(&p0 + &k * &p1, &q0 + &k * &q1);
    let bound2 = Mass::new(p1, q1);
    if (&bound2 - x).abs() <= (&bound1 - x).abs() {
        bound2
    } else {
        bound1
    }
}

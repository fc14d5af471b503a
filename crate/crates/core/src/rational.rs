//! Exact rational scalars.
//!
//! Everything tree-side in this crate is computed over the rationals, so the
//! usual "compare within a tolerance" style of numerical testing is replaced
//! by exact equality. This module fixes the scalar type — arbitrary-precision
//! rationals — and collects the small helpers the rest of the crate leans on:
//! integer powers of the branching number, parsing and printing in the
//! `num/den` convention used by the CLI and CSV formats, and exact fractional
//! powers where they exist.

use num::bigint::BigInt;
use num::{One, Signed, ToPrimitive, Zero};

/// Arbitrary-precision rational number, the scalar of all exact computations.
pub type Rat = num::BigRational;

/// `n` as a rational.
pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// `num/den` as a rational. Panics if `den == 0`.
pub fn ratio(num: i64, den: i64) -> Rat {
    assert!(den != 0, "zero denominator");
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// `base^exp` for a (possibly negative) integer exponent.
pub fn ipow(base: u32, exp: i64) -> Rat {
    let b = BigInt::from(base);
    let mag = b.pow(exp.unsigned_abs() as u32);
    if exp >= 0 {
        Rat::from_integer(mag)
    } else {
        Rat::new(BigInt::one(), mag)
    }
}

/// `x^n` for any rational `x` and integer `n` (negative exponents invert;
/// `0^0 = 1`, negative powers of zero panic).
pub fn pow_i(x: &Rat, n: i64) -> Rat {
    let e: u32 = n.unsigned_abs().try_into().expect("exponent fits in u32");
    let num = x.numer().pow(e);
    let den = x.denom().pow(e);
    if n >= 0 {
        Rat::new(num, den)
    } else {
        Rat::new(den, num)
    }
}

/// Rounds to the nearest `f64`. Values far outside the double range saturate.
pub fn to_f64(x: &Rat) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        if x.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Parses `"3/4"`, `"-3/4"` or `"7"` into a rational.
pub fn parse_rat(s: &str) -> Result<Rat, String> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: BigInt = num
        .parse()
        .map_err(|_| format!("bad numerator in rational `{s}`"))?;
    let d: BigInt = den
        .parse()
        .map_err(|_| format!("bad denominator in rational `{s}`"))?;
    if d.is_zero() {
        return Err(format!("zero denominator in rational `{s}`"));
    }
    Ok(Rat::new(n, d))
}

/// Prints in the same `num/den` form `parse_rat` accepts (integers without
/// the `/1`).
pub fn fmt_rat(x: &Rat) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Exact `n`-th root of an integer, if it is a perfect power.
fn int_nth_root(x: &BigInt, n: u32) -> Option<BigInt> {
    if x.is_negative() {
        return None;
    }
    let r = x.nth_root(n);
    if r.pow(n) == *x {
        Some(r)
    } else {
        None
    }
}

/// Exact `x^e` for a rational exponent, when the result is again rational.
///
/// Returns `None` when the required root is not exact (e.g. `2^(1/2)`); the
/// caller is expected to fall back to floating point. `x` must be positive.
pub fn rat_pow(x: &Rat, e: &Rat) -> Option<Rat> {
    assert!(x.is_positive(), "rat_pow needs a positive base");
    let den = e.denom().to_u32()?;
    let num = e.numer().to_i64()?;
    let root = if den == 1 {
        x.clone()
    } else {
        Rat::new(int_nth_root(x.numer(), den)?, int_nth_root(x.denom(), den)?)
    };
    let mag = Rat::new(
        root.numer().pow(num.unsigned_abs() as u32),
        root.denom().pow(num.unsigned_abs() as u32),
    );
    Some(if num >= 0 { mag } else { mag.recip() })
}

/// `x^e` in floating point, for the fallback paths.
pub fn f64_pow(x: f64, e: &Rat) -> f64 {
    x.powf(to_f64(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        for s in ["3/4", "-3/4", "7", "0", "22/7"] {
            let r = parse_rat(s).unwrap();
            assert_eq!(fmt_rat(&r), s);
        }
        assert_eq!(parse_rat("6/8").map(|r| fmt_rat(&r)), Ok("3/4".into()));
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("x").is_err());
    }

    #[test]
    fn integer_powers() {
        assert_eq!(ipow(2, 3), rat(8));
        assert_eq!(ipow(2, -3), ratio(1, 8));
        assert_eq!(ipow(5, 0), rat(1));
        assert_eq!(pow_i(&ratio(3, 2), 2), ratio(9, 4));
        assert_eq!(pow_i(&ratio(3, 2), -2), ratio(4, 9));
        assert_eq!(pow_i(&ratio(-1, 2), 3), ratio(-1, 8));
        assert_eq!(pow_i(&rat(0), 0), rat(1));
    }

    #[test]
    fn exact_fractional_powers() {
        // 4^(1/2) = 2 and (8/27)^(2/3) = 4/9 are exact; 2^(1/2) is not.
        assert_eq!(rat_pow(&rat(4), &ratio(1, 2)), Some(rat(2)));
        assert_eq!(rat_pow(&ratio(8, 27), &ratio(2, 3)), Some(ratio(4, 9)));
        assert_eq!(rat_pow(&rat(4), &ratio(-1, 2)), Some(ratio(1, 2)));
        assert_eq!(rat_pow(&rat(2), &ratio(1, 2)), None);
    }
}

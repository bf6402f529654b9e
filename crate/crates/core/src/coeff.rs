//! Exact rational coefficients with an inline fast path for word-sized values.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// A reduced rational number.
///
/// Values whose numerator and denominator fit in `i64` are stored inline;
/// larger values spill to a [`BigRational`]. The representation is
/// canonical: a value that fits inline is never stored as `Big`.
#[derive(Clone)]
pub enum Coefficient {
    Small(i64, i64),
    Big(BigRational),
}

impl Coefficient {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Self::from_i128(num as i128, den as i128)
    }

    pub fn from_int(n: i64) -> Self {
        Coefficient::Small(n, 1)
    }

    pub fn from_bigint(n: BigInt) -> Self {
        Self::from_big(BigRational::from_integer(n))
    }

    fn from_i128(num: i128, den: i128) -> Self {
        let (mut num, mut den) = (num, den);
        if den < 0 {
            num = -num;
            den = -den;
        }
        let g = num.gcd(&den);
        if g > 1 {
            num /= g;
            den /= g;
        }
        if num == 0 {
            return Coefficient::Small(0, 1);
        }
        match (i64::try_from(num), i64::try_from(den)) {
            (Ok(n), Ok(d)) => Coefficient::Small(n, d),
            _ => Coefficient::Big(BigRational::new_raw(BigInt::from(num), BigInt::from(den))),
        }
    }

    pub fn from_big(r: BigRational) -> Self {
        match (r.numer().to_i64(), r.denom().to_i64()) {
            (Some(n), Some(d)) => Coefficient::Small(n, d),
            _ => Coefficient::Big(r),
        }
    }

    pub fn to_big(&self) -> BigRational {
        match self {
            Coefficient::Small(n, d) => BigRational::new_raw(BigInt::from(*n), BigInt::from(*d)),
            Coefficient::Big(r) => r.clone(),
        }
    }

    pub fn numer(&self) -> BigInt {
        match self {
            Coefficient::Small(n, _) => BigInt::from(*n),
            Coefficient::Big(r) => r.numer().clone(),
        }
    }

    pub fn denom(&self) -> BigInt {
        match self {
            Coefficient::Small(_, d) => BigInt::from(*d),
            Coefficient::Big(r) => r.denom().clone(),
        }
    }

    pub fn zero() -> Self {
        Coefficient::Small(0, 1)
    }

    pub fn one() -> Self {
        Coefficient::Small(1, 1)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Small(0, _))
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Coefficient::Small(1, 1))
    }

    pub fn is_integer(&self) -> bool {
        match self {
            Coefficient::Small(_, d) => *d == 1,
            Coefficient::Big(r) => r.is_integer(),
        }
    }

    pub fn is_negative(&self) -> bool {
        match self {
            Coefficient::Small(n, _) => *n < 0,
            Coefficient::Big(r) => r.is_negative(),
        }
    }

    pub fn abs(&self) -> Self {
        if self.is_negative() {
            -self.clone()
        } else {
            self.clone()
        }
    }

    pub fn recip(&self) -> Self {
        match self {
            Coefficient::Small(n, d) => {
                assert!(*n != 0, "reciprocal of zero");
                Self::from_i128(*d as i128, *n as i128)
            }
            Coefficient::Big(r) => Self::from_big(r.recip()),
        }
    }

    pub fn pow(&self, e: i32) -> Self {
        if e < 0 {
            return self.recip().pow(-e);
        }
        let mut acc = Coefficient::one();
        let mut base = self.clone();
        let mut e = e as u32;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Coefficient::Small(n, d) => *n as f64 / *d as f64,
            Coefficient::Big(r) => r.to_f64().unwrap_or(f64::NAN),
        }
    }

    /// The bit length of the larger of numerator and denominator.
    pub fn height_bits(&self) -> u64 {
        match self {
            Coefficient::Small(n, d) => {
                let m = n.unsigned_abs().max(d.unsigned_abs());
                64 - m.leading_zeros() as u64
            }
            Coefficient::Big(r) => r.numer().bits().max(r.denom().bits()),
        }
    }
}

impl Default for Coefficient {
    fn default() -> Self {
        Coefficient::zero()
    }
}

impl PartialEq for Coefficient {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Coefficient::Small(a, b), Coefficient::Small(c, d)) => a == c && b == d,
            (Coefficient::Big(a), Coefficient::Big(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Coefficient {}

impl Hash for Coefficient {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Coefficient::Small(n, d) => {
                0u8.hash(state);
                n.hash(state);
                d.hash(state);
            }
            Coefficient::Big(r) => {
                1u8.hash(state);
                r.numer().hash(state);
                r.denom().hash(state);
            }
        }
    }
}

impl PartialOrd for Coefficient {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Coefficient {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Coefficient::Small(a, b), Coefficient::Small(c, d)) => {
                (*a as i128 * *d as i128).cmp(&(*c as i128 * *b as i128))
            }
            _ => self.to_big().cmp(&other.to_big()),
        }
    }
}

impl<'a> Add<&'a Coefficient> for &'a Coefficient {
    type Output = Coefficient;
    fn add(self, rhs: &Coefficient) -> Coefficient {
        match (self, rhs) {
            (Coefficient::Small(a, b), Coefficient::Small(c, d)) => {
                if *b == 1 && *d == 1 {
                    return match a.checked_add(*c) {
                        Some(s) => Coefficient::Small(s, 1),
                        None => Coefficient::from_i128(*a as i128 + *c as i128, 1),
                    };
                }
                let num = *a as i128 * *d as i128 + *c as i128 * *b as i128;
                let den = *b as i128 * *d as i128;
                Coefficient::from_i128(num, den)
            }
            _ => Coefficient::from_big(self.to_big() + rhs.to_big()),
        }
    }
}

impl<'a> Sub<&'a Coefficient> for &'a Coefficient {
    type Output = Coefficient;
    fn sub(self, rhs: &Coefficient) -> Coefficient {
        self + &(-rhs.clone())
    }
}

impl<'a> Mul<&'a Coefficient> for &'a Coefficient {
    type Output = Coefficient;
    fn mul(self, rhs: &Coefficient) -> Coefficient {
        match (self, rhs) {
            (Coefficient::Small(a, b), Coefficient::Small(c, d)) => {
                if *b == 1 && *d == 1 {
                    return match a.checked_mul(*c) {
                        Some(p) => Coefficient::Small(p, 1),
                        None => Coefficient::from_i128(*a as i128 * *c as i128, 1),
                    };
                }
                Coefficient::from_i128(*a as i128 * *c as i128, *b as i128 * *d as i128)
            }
            _ => Coefficient::from_big(self.to_big() * rhs.to_big()),
        }
    }
}

impl<'a> Div<&'a Coefficient> for &'a Coefficient {
    type Output = Coefficient;
    fn div(self, rhs: &Coefficient) -> Coefficient {
        self * &rhs.recip()
    }
}

impl Neg for Coefficient {
    type Output = Coefficient;
    fn neg(self) -> Coefficient {
        match self {
            Coefficient::Small(n, d) => match n.checked_neg() {
                Some(m) => Coefficient::Small(m, d),
                None => Coefficient::from_i128(-(n as i128), d as i128),
            },
            Coefficient::Big(r) => Coefficient::from_big(-r),
        }
    }
}

impl Neg for &Coefficient {
    type Output = Coefficient;
    fn neg(self) -> Coefficient {
        -self.clone()
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr<Coefficient> for Coefficient {
            type Output = Coefficient;
            fn $m(self, rhs: Coefficient) -> Coefficient {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

impl AddAssign<&Coefficient> for Coefficient {
    fn add_assign(&mut self, rhs: &Coefficient) {
        *self = &*self + rhs;
    }
}

impl SubAssign<&Coefficient> for Coefficient {
    fn sub_assign(&mut self, rhs: &Coefficient) {
        *self = &*self - rhs;
    }
}

impl MulAssign<&Coefficient> for Coefficient {
    fn mul_assign(&mut self, rhs: &Coefficient) {
        *self = &*self * rhs;
    }
}

impl From<i64> for Coefficient {
    fn from(n: i64) -> Self {
        Coefficient::from_int(n)
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Small(n, 1) => write!(f, "{n}"),
            Coefficient::Small(n, d) => write!(f, "{n}/{d}"),
            Coefficient::Big(r) if r.is_integer() => write!(f, "{}", r.numer()),
            Coefficient::Big(r) => write!(f, "{}/{}", r.numer(), r.denom()),
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Coefficient {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let parse = |t: &str| t.trim().parse::<BigInt>().map_err(|e| format!("{t}: {e}"));
        match s.split_once('/') {
            Some((n, d)) => {
                let d = parse(d)?;
                if d.is_zero() {
                    return Err("zero denominator".into());
                }
                Ok(Coefficient::from_big(BigRational::new(parse(n)?, d)))
            }
            None => Ok(Coefficient::from_bigint(parse(s)?)),
        }
    }
}

/// Least common multiple of the denominators and gcd of the numerators
/// of a coefficient list, as an exact rational `lcm/gcd`; multiplying by
/// it turns the list into coprime integers.
pub fn primitive_scale<'a, I: IntoIterator<Item = &'a Coefficient>>(coeffs: I) -> Coefficient {
    let mut l = BigInt::one();
    let mut g = BigInt::zero();
    let mut all_small = true;
    let (mut ls, mut gs) = (1i128, 0i128);
    for c in coeffs {
        match c {
            Coefficient::Small(n, d) if all_small => {
                let n = (*n as i128).abs();
                let d = *d as i128;
                gs = gs.gcd(&n);
                let nl = ls / ls.gcd(&d) * d;
                if nl > i64::MAX as i128 {
                    all_small = false;
                    l = BigInt::from(ls);
                    g = BigInt::from(gs);
                    l = l.lcm(&BigInt::from(d));
                } else {
                    ls = nl;
                }
            }
            _ => {
                if all_small {
                    all_small = false;
                    l = BigInt::from(ls);
                    g = BigInt::from(gs);
                }
                l = l.lcm(&c.denom());
                g = g.gcd(&c.numer().abs());
            }
        }
    }
    if all_small {
        if gs == 0 {
            return Coefficient::one();
        }
        return Coefficient::from_i128(ls, gs);
    }
    if g.is_zero() {
        return Coefficient::one();
    }
    Coefficient::from_big(BigRational::new(l, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduced_and_canonical_zero() {
        assert_eq!(Coefficient::new(6, -4), Coefficient::new(-3, 2));
        assert_eq!(Coefficient::new(0, 7), Coefficient::zero());
        assert!(matches!(Coefficient::new(0, -7), Coefficient::Small(0, 1)));
    }

    #[test]
    fn overflow_spills_and_returns() {
        let big = Coefficient::from_int(i64::MAX);
        let sq = &big * &big;
        assert!(matches!(sq, Coefficient::Big(_)));
        let back = &sq / &big;
        assert_eq!(back, big);
        assert!(matches!(back, Coefficient::Small(..)));
    }

    #[test]
    fn parse_and_display() {
        let c: Coefficient = "-9/16".parse().unwrap();
        assert_eq!(c.to_string(), "-9/16");
        assert_eq!((&c + &Coefficient::new(9, 16)), Coefficient::zero());
        assert!("1/0".parse::<Coefficient>().is_err());
    }

    #[test]
    fn primitive_scale_clears() {
        let cs = [Coefficient::new(3, 4), Coefficient::new(9, 2)];
        let s = primitive_scale(cs.iter());
        assert_eq!(s, Coefficient::new(4, 3));
        assert_eq!(&cs[1] * &s, Coefficient::from_int(6));
    }
}

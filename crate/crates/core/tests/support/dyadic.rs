//! Exact arithmetic on dyadic rationals `m / 2^k`. Every finite f64 is one.

use std::cmp::Ordering;

use num_bigint::{BigInt, Sign};

#[derive(Debug, Clone)]
pub struct Dyadic {
    m: BigInt,
    k: u32,
}

impl Dyadic {
    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite());
        if x == 0.0 {
            return Self { m: BigInt::ZERO, k: 0 };
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { Sign::Minus } else { Sign::Plus };
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1 << 52) - 1);
        let (mant, e) = if exp == 0 { (frac, -1074) } else { (frac | 1 << 52, exp - 1075) };
        let m = BigInt::from_biguint(sign, mant.into());
        if e >= 0 {
            Self { m: m << e as usize, k: 0 }
        } else {
            Self { m, k: (-e) as u32 }
        }
    }

    pub fn int(i: i64) -> Self {
        Self { m: i.into(), k: 0 }
    }

    fn aligned(&self, other: &Self) -> (BigInt, BigInt, u32) {
        let k = self.k.max(other.k);
        (&self.m << (k - self.k) as usize, &other.m << (k - other.k) as usize, k)
    }

    pub fn add(&self, other: &Self) -> Self {
        let (a, b, k) = self.aligned(other);
        Self { m: a + b, k }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let (a, b, k) = self.aligned(other);
        Self { m: a - b, k }
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self {
            m: &self.m * &other.m,
            k: self.k + other.k,
        }
    }

    pub fn pow(&self, n: u32) -> Self {
        (0..n).fold(Self::int(1), |acc, _| acc.mul(self))
    }

    pub fn abs(&self) -> Self {
        Self {
            m: self.m.magnitude().clone().into(),
            k: self.k,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.m.sign() == Sign::NoSign
    }

    pub fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = self.aligned(other);
        a.cmp(&b)
    }
}

/// `|approx - exact| <= |exact| / 10^digits`, decided exactly.
pub fn within_relative(approx: f64, exact: &Dyadic, digits: u32) -> bool {
    let err = Dyadic::from_f64(approx).sub(exact).abs();
    let scale = Dyadic::int(10).pow(digits);
    err.mul(&scale).cmp(&exact.abs()) != Ordering::Greater
}

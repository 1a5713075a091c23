use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GfError;

/// Trial-division primality test.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n < 4 {
        return true;
    }
    if n.is_multiple_of(2) {
        return false;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// The prime field GF(q).
///
/// Elements are handled as raw `u64` values in `[0, q)` by the methods on this
/// type; [`Fp`] is the self-describing element type for callers that want
/// mismatched fields to be caught.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrimeField {
    q: u64,
}

impl PrimeField {
    pub fn new(q: u64) -> Result<Self, GfError> {
        if !is_prime(q) {
            return Err(GfError::NotPrime(q));
        }
        Ok(Self { q })
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.q
    }

    pub fn element(&self, value: u64) -> Result<Fp, GfError> {
        if value >= self.q {
            return Err(GfError::OutOfRange { value, q: self.q });
        }
        Ok(Fp { value, q: self.q })
    }

    /// Reduces an arbitrary signed integer into `[0, q)`.
    #[inline]
    pub fn reduce(&self, v: i64) -> u64 {
        v.rem_euclid(self.q as i64) as u64
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        ((a as u128 + b as u128) % self.q as u128) as u64
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        self.add(a, self.neg(b))
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.q as u128) as u64
    }

    pub fn pow(&self, mut base: u64, mut e: u64) -> u64 {
        let mut acc = 1 % self.q;
        base %= self.q;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(&self, a: u64) -> Result<u64, GfError> {
        if a.is_multiple_of(self.q) {
            return Err(GfError::NoInverse);
        }
        Ok(self.pow(a, self.q - 2))
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.random_range(0..self.q)
    }
}

/// An element of GF(q) that remembers its modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fp {
    value: u64,
    q: u64,
}

impl Fp {
    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.q
    }

    fn same_field(&self, other: &Fp) -> Result<PrimeField, GfError> {
        if self.q != other.q {
            return Err(GfError::FieldMismatch {
                left: self.q,
                right: other.q,
            });
        }
        Ok(PrimeField { q: self.q })
    }

    pub fn checked_add(&self, other: &Fp) -> Result<Fp, GfError> {
        let f = self.same_field(other)?;
        Ok(Fp {
            value: f.add(self.value, other.value),
            q: self.q,
        })
    }

    pub fn checked_mul(&self, other: &Fp) -> Result<Fp, GfError> {
        let f = self.same_field(other)?;
        Ok(Fp {
            value: f.mul(self.value, other.value),
            q: self.q,
        })
    }

    pub fn inverse(&self) -> Result<Fp, GfError> {
        let f = PrimeField { q: self.q };
        Ok(Fp {
            value: f.inv(self.value)?,
            q: self.q,
        })
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{poly, GfError, PrimeField};

/// An element of GF(q^r) in the polynomial basis, lowest degree first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExtElement {
    coeffs: Vec<u64>,
}

impl ExtElement {
    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }
}

/// The extension field GF(q^r) = GF(q)[x] / (m(x)).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtField {
    base: PrimeField,
    /// Monic modulus, `degree + 1` coefficients, lowest first.
    modulus: Vec<u64>,
    order: u64,
}

/// Trial-free irreducibility test (Ben-Or): a degree-r polynomial `p` is
/// irreducible iff `gcd(x^(q^i) - x, p) = 1` for every `1 <= i <= r/2`.
pub fn is_irreducible(base: &PrimeField, p: &[u64]) -> bool {
    let p = poly::trim(p.to_vec());
    let r = match poly::degree(&p) {
        None | Some(0) => return false,
        Some(r) => r,
    };
    if r == 1 {
        return true;
    }
    let x = vec![0u64, 1];
    let mut frob = x.clone();
    for _ in 1..=r / 2 {
        frob = poly::pow_mod(base, &frob, base.modulus(), &p);
        let diff = poly::sub(base, &frob, &x);
        let g = poly::gcd(base, &diff, &p);
        if poly::degree(&g) != Some(0) {
            return false;
        }
    }
    true
}

/// Lexicographically first monic irreducible polynomial of degree `r` over
/// GF(q). Candidates are ordered by the integer whose base-q digits are the
/// non-leading coefficients, constant term least significant.
pub fn find_irreducible(q: u64, r: usize) -> Result<Vec<u64>, GfError> {
    let base = PrimeField::new(q)?;
    if r == 0 {
        return Err(GfError::ZeroDegree);
    }
    let mut coeffs = vec![0u64; r + 1];
    coeffs[r] = 1;
    loop {
        if is_irreducible(&base, &coeffs) {
            return Ok(coeffs);
        }
        // odometer increment over the r low coefficients
        let mut i = 0;
        loop {
            if i == r {
                unreachable!("an irreducible polynomial of every degree exists");
            }
            coeffs[i] += 1;
            if coeffs[i] < q {
                break;
            }
            coeffs[i] = 0;
            i += 1;
        }
    }
}

impl ExtField {
    /// GF(q^r) with the deterministic modulus from [`find_irreducible`].
    pub fn new(q: u64, r: usize) -> Result<Self, GfError> {
        let modulus = find_irreducible(q, r)?;
        Self::with_modulus(q, modulus)
    }

    pub fn with_modulus(q: u64, modulus: Vec<u64>) -> Result<Self, GfError> {
        let base = PrimeField::new(q)?;
        let r = modulus.len().saturating_sub(1);
        if r == 0 {
            return Err(GfError::ZeroDegree);
        }
        if modulus[r] != 1 || modulus.iter().any(|&c| c >= q) || !is_irreducible(&base, &modulus)
        {
            return Err(GfError::NotIrreducible(r));
        }
        let order = (0..r)
            .try_fold(1u64, |acc, _| acc.checked_mul(q))
            .ok_or(GfError::TooLarge { q, r })?;
        Ok(Self {
            base,
            modulus,
            order,
        })
    }

    pub fn base(&self) -> &PrimeField {
        &self.base
    }

    pub fn characteristic(&self) -> u64 {
        self.base.modulus()
    }

    pub fn degree(&self) -> usize {
        self.modulus.len() - 1
    }

    pub fn modulus_poly(&self) -> &[u64] {
        &self.modulus
    }

    /// Number of field elements, q^r.
    pub fn order(&self) -> u64 {
        self.order
    }

    pub fn zero(&self) -> ExtElement {
        ExtElement {
            coeffs: vec![0; self.degree()],
        }
    }

    pub fn one(&self) -> ExtElement {
        let mut coeffs = vec![0; self.degree()];
        coeffs[0] = 1;
        ExtElement { coeffs }
    }

    /// Builds an element from exactly `r` canonical coefficients. This is also
    /// the identification of GF(q)^r with GF(q^r).
    pub fn element(&self, coeffs: Vec<u64>) -> Result<ExtElement, GfError> {
        let e = ExtElement { coeffs };
        self.check(&e)?;
        Ok(e)
    }

    pub fn check(&self, e: &ExtElement) -> Result<(), GfError> {
        if e.coeffs.len() != self.degree() {
            return Err(GfError::Dimension {
                expected: self.degree(),
                got: e.coeffs.len(),
            });
        }
        let q = self.characteristic();
        if let Some(&value) = e.coeffs.iter().find(|&&c| c >= q) {
            return Err(GfError::OutOfRange { value, q });
        }
        Ok(())
    }

    pub fn to_index(&self, e: &ExtElement) -> u64 {
        let q = self.characteristic();
        e.coeffs.iter().rev().fold(0u64, |acc, &c| acc * q + c)
    }

    pub fn from_index(&self, mut idx: u64) -> ExtElement {
        let q = self.characteristic();
        let coeffs = (0..self.degree())
            .map(|_| {
                let c = idx % q;
                idx /= q;
                c
            })
            .collect();
        ExtElement { coeffs }
    }

    pub fn elements(&self) -> impl Iterator<Item = ExtElement> + '_ {
        (0..self.order).map(move |i| self.from_index(i))
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> ExtElement {
        ExtElement {
            coeffs: (0..self.degree()).map(|_| self.base.random(rng)).collect(),
        }
    }

    pub fn add(&self, a: &ExtElement, b: &ExtElement) -> Result<ExtElement, GfError> {
        self.check(a)?;
        self.check(b)?;
        Ok(ExtElement {
            coeffs: a
                .coeffs
                .iter()
                .zip(&b.coeffs)
                .map(|(&x, &y)| self.base.add(x, y))
                .collect(),
        })
    }

    pub fn neg(&self, a: &ExtElement) -> Result<ExtElement, GfError> {
        self.check(a)?;
        Ok(ExtElement {
            coeffs: a.coeffs.iter().map(|&x| self.base.neg(x)).collect(),
        })
    }

    pub fn sub(&self, a: &ExtElement, b: &ExtElement) -> Result<ExtElement, GfError> {
        self.add(a, &self.neg(b)?)
    }

    /// Polynomial product reduced by the modulus.
    pub fn mul(&self, a: &ExtElement, b: &ExtElement) -> Result<ExtElement, GfError> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.mul_unchecked(a, b))
    }

    fn mul_unchecked(&self, a: &ExtElement, b: &ExtElement) -> ExtElement {
        let prod = poly::mul(&self.base, &a.coeffs, &b.coeffs);
        let mut coeffs = poly::rem(&self.base, &prod, &self.modulus);
        coeffs.resize(self.degree(), 0);
        ExtElement { coeffs }
    }

    /// Square-and-multiply; `a^0 = 1` for every `a`, including zero.
    pub fn pow(&self, a: &ExtElement, mut e: u64) -> Result<ExtElement, GfError> {
        self.check(a)?;
        let mut acc = self.one();
        let mut base = a.clone();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul_unchecked(&acc, &base);
            }
            base = self.mul_unchecked(&base, &base);
            e >>= 1;
        }
        Ok(acc)
    }

    pub fn inv(&self, a: &ExtElement) -> Result<ExtElement, GfError> {
        self.check(a)?;
        if a.is_zero() {
            return Err(GfError::NoInverse);
        }
        self.pow(a, self.order - 2)
    }

    /// Lookup tables indexed by [`ExtField::to_index`]; `None` when the field
    /// has more than `max_order` elements.
    pub fn tables(&self, max_order: u64) -> Option<FieldTables> {
        if self.order > max_order {
            return None;
        }
        let n = self.order as usize;
        let elems: Vec<ExtElement> = self.elements().collect();
        let mut add = vec![0u32; n * n];
        let mut mul = vec![0u32; n * n];
        for (i, a) in elems.iter().enumerate() {
            for (j, b) in elems.iter().enumerate() {
                let s = self.add(a, b).expect("valid elements");
                add[i * n + j] = self.to_index(&s) as u32;
                mul[i * n + j] = self.to_index(&self.mul_unchecked(a, b)) as u32;
            }
        }
        let neg = elems
            .iter()
            .map(|a| self.to_index(&self.neg(a).expect("valid element")) as u32)
            .collect();
        Some(FieldTables { n, add, mul, neg })
    }
}

/// Dense add/mul/neg tables for a small field, for exhaustive censuses.
#[derive(Debug, Clone)]
pub struct FieldTables {
    n: usize,
    add: Vec<u32>,
    mul: Vec<u32>,
    neg: Vec<u32>,
}

impl FieldTables {
    #[inline]
    pub fn order(&self) -> usize {
        self.n
    }
    #[inline]
    pub fn add(&self, a: u32, b: u32) -> u32 {
        self.add[a as usize * self.n + b as usize]
    }
    #[inline]
    pub fn mul(&self, a: u32, b: u32) -> u32 {
        self.mul[a as usize * self.n + b as usize]
    }
    #[inline]
    pub fn neg(&self, a: u32) -> u32 {
        self.neg[a as usize]
    }
    #[inline]
    pub fn sub(&self, a: u32, b: u32) -> u32 {
        self.add(a, self.neg(b))
    }
    pub fn pow(&self, a: u32, e: u64) -> u32 {
        (0..e).fold(1, |acc, _| self.mul(acc, a))
    }
}

//! Self-similar nested lattice pair Λ = αZ^N ⊃ Λc = qΛ.
//!
//! Codewords are the q^N fine points (shifted by a dither) inside the coarse
//! fundamental region V(Λc) = [−qα/2, qα/2)^N. Points are identified by their
//! integer coordinates in `[0, q)^N`, which map isomorphically onto GF(q)^N.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::{is_prime, PrimeField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatticeError {
    #[error("nesting ratio {0} is not a prime")]
    NotPrime(u64),
    #[error("lattice dimension must be at least 1")]
    ZeroDimension,
    #[error("lattice scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("{what}: coordinate {index} = {value} lies outside the coarse fundamental region")]
    OutsideRegion {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("coordinate {value} is not canonical modulo {q}")]
    NotCanonical { value: u64, q: u64 },
    #[error("dimension {0} is too large for a wrap-bit index")]
    TooManyWrapBits(usize),
}

/// Which node's dither a codeword is shifted by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dither {
    /// Node 1 (d1).
    Source,
    /// Node 2, the cooperative jammer (d2).
    Jammer,
    /// The relay (d3).
    Relay,
}

impl Dither {
    fn slot(self) -> usize {
        match self {
            Dither::Source => 0,
            Dither::Jammer => 1,
            Dither::Relay => 2,
        }
    }
}

/// Canonical integer coordinates of a codeword, each entry in `[0, q)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticeCoords(Vec<u64>);

impl LatticeCoords {
    pub fn new(values: Vec<u64>, q: u64) -> Result<Self, LatticeError> {
        if let Some(&value) = values.iter().find(|&&v| v >= q) {
            return Err(LatticeError::NotCanonical { value, q });
        }
        Ok(Self(values))
    }

    /// Reduces arbitrary integer coordinates into canonical form.
    pub fn reduce(values: &[i64], q: u64) -> Self {
        Self(values.iter().map(|v| v.rem_euclid(q as i64) as u64).collect())
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    pub fn values(&self) -> &[u64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<u64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Base-q index with the first coordinate least significant.
    pub fn to_index(&self, q: u64) -> u64 {
        self.0.iter().rev().fold(0, |acc, &c| acc * q + c)
    }

    pub fn from_index(mut index: u64, q: u64, dim: usize) -> Self {
        Self(
            (0..dim)
                .map(|_| {
                    let c = index % q;
                    index /= q;
                    c
                })
                .collect(),
        )
    }
}

/// Real sum of two region points, recorded as its residue plus wrap bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumRepresentation {
    pub sum_mod: Vec<f64>,
    /// `1 + Σ b_i 2^i` where `b_i` is the wrap bit of coordinate `i`.
    pub t: u64,
}

impl SumRepresentation {
    pub fn wrapped(&self, i: usize) -> bool {
        (self.t - 1) >> i & 1 == 1
    }
}

/// A nested lattice pair with three fixed dithers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedLatticePair {
    dim: usize,
    q: u64,
    alpha: f64,
    dithers: [Vec<f64>; 3],
}

impl NestedLatticePair {
    /// A pair with all dithers set to zero.
    pub fn new(dim: usize, q: u64, alpha: f64) -> Result<Self, LatticeError> {
        if dim == 0 {
            return Err(LatticeError::ZeroDimension);
        }
        if !is_prime(q) {
            return Err(LatticeError::NotPrime(q));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(LatticeError::BadScale(alpha));
        }
        Ok(Self {
            dim,
            q,
            alpha,
            dithers: [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]],
        })
    }

    pub fn with_dither(mut self, which: Dither, d: Vec<f64>) -> Result<Self, LatticeError> {
        self.check_len(&d)?;
        self.check_region("dither", &d)?;
        self.dithers[which.slot()] = d;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn q(&self) -> u64 {
        self.q
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn field(&self) -> PrimeField {
        PrimeField::new(self.q).expect("checked at construction")
    }
    pub fn dither(&self, which: Dither) -> &[f64] {
        &self.dithers[which.slot()]
    }

    /// Spacing of the coarse lattice, qα.
    pub fn coarse_step(&self) -> f64 {
        self.q as f64 * self.alpha
    }

    /// Number of codewords, q^N, when it fits in a `u64`.
    pub fn codebook_size(&self) -> Option<u64> {
        self.q.checked_pow(u32::try_from(self.dim).ok()?)
    }

    fn check_len(&self, x: &[f64]) -> Result<(), LatticeError> {
        if x.len() != self.dim {
            return Err(LatticeError::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_region(&self, what: &'static str, x: &[f64]) -> Result<(), LatticeError> {
        let half = self.coarse_step() / 2.0;
        match x.iter().position(|&v| !(v >= -half && v < half)) {
            Some(index) => Err(LatticeError::OutsideRegion {
                what,
                index,
                value: x[index],
            }),
            None => Ok(()),
        }
    }

    /// Whether `x` lies in the half-open region `[−qα/2, qα/2)^N`.
    pub fn in_region(&self, x: &[f64]) -> bool {
        x.len() == self.dim && self.check_region("point", x).is_ok()
    }

    // Integer multiple k of the coarse step with x − k·step in [−step/2, step/2).
    fn coarse_index(&self, x: f64) -> f64 {
        let step = self.coarse_step();
        let mut k = (x / step + 0.5).floor();
        let r = x - k * step;
        if r >= step / 2.0 {
            k += 1.0;
        } else if r < -step / 2.0 {
            k -= 1.0;
        }
        k
    }

    /// Nearest point of Λc, coordinate-wise. Points on a cell boundary go to
    /// the cell whose region contains them (lower edge closed).
    pub fn quantize_coarse(&self, x: &[f64]) -> Vec<f64> {
        let step = self.coarse_step();
        x.iter().map(|&v| self.coarse_index(v) * step).collect()
    }

    /// `x mod Λc`, the residue in `[−qα/2, qα/2)^N`.
    pub fn mod_coarse(&self, x: &[f64]) -> Vec<f64> {
        let step = self.coarse_step();
        x.iter()
            .map(|&v| v - self.coarse_index(v) * step)
            .collect()
    }

    /// The transmitted signal `(α·c + d) mod Λc`.
    pub fn codebook_point(&self, c: &LatticeCoords, which: Dither) -> Vec<f64> {
        let d = self.dither(which);
        let raw: Vec<f64> = c
            .values()
            .iter()
            .zip(d)
            .map(|(&ci, &di)| self.alpha * ci as f64 + di)
            .collect();
        self.mod_coarse(&raw)
    }

    /// The image of a codeword in GF(q)^N.
    pub fn coords_to_field(&self, c: &LatticeCoords) -> Vec<u64> {
        c.values().iter().map(|&v| v % self.q).collect()
    }

    /// Inverse of [`Self::coords_to_field`].
    pub fn field_to_coords(&self, v: &[u64]) -> Result<LatticeCoords, LatticeError> {
        LatticeCoords::new(v.to_vec(), self.q)
    }

    /// Coordinates of `(point(a) + point(b)) mod Λc`, computed in the real
    /// domain on the undithered codebook.
    pub fn lattice_add(&self, a: &LatticeCoords, b: &LatticeCoords) -> LatticeCoords {
        let pa = self.codebook_point(a, Dither::Source);
        let pb = self.codebook_point(b, Dither::Source);
        let offset = self.sum_offset(Dither::Source, Dither::Source);
        let sum: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x + y).collect();
        self.decode_fine_mod_coarse(&sum, &offset)
    }

    /// `a ⊖ b` in coordinates (exact, via the field isomorphism).
    pub fn coords_sub(&self, a: &LatticeCoords, b: &LatticeCoords) -> LatticeCoords {
        let f = self.field();
        LatticeCoords(
            a.values()
                .iter()
                .zip(b.values())
                .map(|(&x, &y)| f.sub(x, y))
                .collect(),
        )
    }

    /// `a ⊕ b` in coordinates (exact, via the field isomorphism).
    pub fn coords_add(&self, a: &LatticeCoords, b: &LatticeCoords) -> LatticeCoords {
        let f = self.field();
        LatticeCoords(
            a.values()
                .iter()
                .zip(b.values())
                .map(|(&x, &y)| f.add(x, y))
                .collect(),
        )
    }

    /// Combined dither offset of the sum of two codewords.
    pub fn sum_offset(&self, a: Dither, b: Dither) -> Vec<f64> {
        self.dither(a)
            .iter()
            .zip(self.dither(b))
            .map(|(x, y)| x + y)
            .collect()
    }

    /// Residue and wrap bits of `u1 + u2` for two points of the region.
    pub fn represent_sum(&self, u1: &[f64], u2: &[f64]) -> Result<SumRepresentation, LatticeError> {
        self.check_len(u1)?;
        self.check_len(u2)?;
        self.check_region("first summand", u1)?;
        self.check_region("second summand", u2)?;
        if self.dim > 63 {
            return Err(LatticeError::TooManyWrapBits(self.dim));
        }
        let step = self.coarse_step();
        let mut sum_mod = Vec::with_capacity(self.dim);
        let mut bits = 0u64;
        for (i, (a, b)) in u1.iter().zip(u2).enumerate() {
            let s = a + b;
            let k = self.coarse_index(s);
            if k != 0.0 {
                bits |= 1 << i;
            }
            sum_mod.push(s - k * step);
        }
        Ok(SumRepresentation {
            sum_mod,
            t: bits + 1,
        })
    }

    /// The real sum encoded by a [`SumRepresentation`].
    pub fn reconstruct_sum(&self, rep: &SumRepresentation) -> Vec<f64> {
        let step = self.coarse_step();
        rep.sum_mod
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if !rep.wrapped(i) {
                    v
                } else if v < 0.0 {
                    v + step
                } else {
                    v - step
                }
            })
            .collect()
    }

    /// Removes `offset`, rounds to the fine lattice (ties toward −∞) and
    /// reduces modulo q.
    pub fn decode_fine_mod_coarse(&self, y: &[f64], offset: &[f64]) -> LatticeCoords {
        let q = self.q as i64;
        LatticeCoords(
            y.iter()
                .zip(offset)
                .map(|(&v, &o)| {
                    let k = ((v - o) / self.alpha - 0.5).ceil();
                    (k as i64).rem_euclid(q) as u64
                })
                .collect(),
        )
    }

    /// R₀ = (1/N) log₂ q^N = log₂ q.
    pub fn codebook_rate(&self) -> f64 {
        (self.q as f64).log2()
    }

    /// Whether R₀ < ½ log₂(½ + P).
    pub fn rate_condition_ok(&self, power: f64) -> bool {
        self.codebook_rate() < 0.5 * (0.5 + power).log2()
    }

    /// Mean squared norm per channel use over the whole codebook.
    pub fn average_codebook_power(&self, which: Dither) -> f64 {
        codebook_power(self.q, self.alpha, self.dither(which))
    }

    pub fn codebook(&self) -> impl Iterator<Item = LatticeCoords> + '_ {
        let size = self.codebook_size().expect("codebook too large to enumerate");
        (0..size).map(move |i| LatticeCoords::from_index(i, self.q, self.dim))
    }

    pub fn random_coords<R: Rng + ?Sized>(&self, rng: &mut R) -> LatticeCoords {
        LatticeCoords((0..self.dim).map(|_| rng.random_range(0..self.q)).collect())
    }
}

/// Average power per channel use of the dithered codebook `(αZ^N + d) mod qαZ^N`.
///
/// The coordinates are independent, so the average is the mean over
/// coordinates of the mean over the q values per coordinate. With α = 0 the
/// codebook collapses onto the dither.
pub fn codebook_power(q: u64, alpha: f64, dither: &[f64]) -> f64 {
    if dither.is_empty() {
        return 0.0;
    }
    let total: f64 = if alpha == 0.0 {
        dither.iter().map(|d| d * d).sum()
    } else {
        let pair = NestedLatticePair {
            dim: 1,
            q,
            alpha,
            dithers: [vec![0.0], vec![0.0], vec![0.0]],
        };
        dither
            .iter()
            .map(|&d| {
                (0..q)
                    .map(|c| {
                        let v = pair.mod_coarse(&[alpha * c as f64 + d])[0];
                        v * v
                    })
                    .sum::<f64>()
                    / q as f64
            })
            .sum()
    };
    total / dither.len() as f64
}

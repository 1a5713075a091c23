//! Privacy amplification by random linear hashing, the invertible binary
//! encoder built from an extractor, entropy utilities, and the rate and
//! leakage-budget formulas that go with them.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::{
    complete_and_invert, sample_matrix, ExtElement, ExtField, FieldMatrix, GfError, PrimeField,
};
use crate::lattice::{Dither, LatticeCoords, LatticeError, NestedLatticePair};

/// Largest codebook the encoder will enumerate to pick its subset.
pub const MAX_ENCODER_CODEBOOK: u64 = 1 << 22;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Field(#[from] GfError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("extractor matrix has rank {rank}, expected full row rank {rows}")]
    RankDeficient { rank: usize, rows: usize },
    #[error("encoder matrix must be over GF(2), got GF({0})")]
    NotBinary(u64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("lattice point {0:?} is not in the encoder subset")]
    NotInSubset(Vec<u64>),
    #[error("codebook of size {0} is too large to enumerate")]
    CodebookTooLarge(u64),
    #[error("no full-rank candidate among {0} samples")]
    NoFullRankCandidate(usize),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

/// A full-row-rank linear map `g: GF(q)^N → GF(q)^r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorMap {
    g: FieldMatrix,
}

impl ExtractorMap {
    pub fn new(g: FieldMatrix) -> Result<Self, ExtractError> {
        let rank = g.rank();
        if rank != g.rows() {
            return Err(ExtractError::RankDeficient {
                rank,
                rows: g.rows(),
            });
        }
        Ok(Self { g })
    }

    /// The map with no output.
    pub fn empty(field: PrimeField, n: usize) -> Self {
        Self {
            g: FieldMatrix::zeros(field, 0, n),
        }
    }

    pub fn matrix(&self) -> &FieldMatrix {
        &self.g
    }
    pub fn output_dim(&self) -> usize {
        self.g.rows()
    }
    pub fn input_dim(&self) -> usize {
        self.g.cols()
    }

    /// `g · t1` over GF(q).
    pub fn extract_seed(&self, t1: &[u64]) -> Result<Vec<u64>, ExtractError> {
        Ok(self.g.mul_vec(t1)?)
    }

    /// The seed as an element of GF(q^r) in the polynomial basis.
    pub fn extract_element(&self, field: &ExtField, t1: &[u64]) -> Result<ExtElement, ExtractError> {
        Ok(field.element(self.extract_seed(t1)?)?)
    }
}

/// Exact output distribution of `t ↦ g·t` for uniform `t ∈ GF(q)^N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedUniformity {
    /// Number of inputs mapped to each output, indexed base q (first entry least significant).
    pub counts: Vec<u64>,
    pub inputs: u64,
}

impl SeedUniformity {
    pub fn is_uniform(&self) -> bool {
        let n = self.counts.len() as u64;
        self.counts.iter().all(|&c| c * n == self.inputs)
    }

    pub fn probability(&self, index: usize) -> f64 {
        self.counts[index] as f64 / self.inputs as f64
    }
}

/// Enumerates all `q^N` inputs. Works for any matrix, including
/// rank-deficient ones, so that the loss of uniformity can be observed.
pub fn seed_uniformity(g: &FieldMatrix) -> Result<SeedUniformity, ExtractError> {
    let q = g.field().modulus();
    let inputs = checked_pow(q, g.cols())?;
    let outputs = checked_pow(q, g.rows())?;
    let mut counts = vec![0u64; outputs as usize];
    for i in 0..inputs {
        let t = LatticeCoords::from_index(i, q, g.cols());
        let out = g.mul_vec(t.values())?;
        counts[LatticeCoords::new(out, q)?.to_index(q) as usize] += 1;
    }
    Ok(SeedUniformity { counts, inputs })
}

fn checked_pow(q: u64, n: usize) -> Result<u64, ExtractError> {
    u32::try_from(n)
        .ok()
        .and_then(|n| q.checked_pow(n))
        .ok_or(ExtractError::CodebookTooLarge(u64::MAX))
}

// floor with a little slack so values like 4·2.0 computed as 7.9999999 land on 8
fn floor_tolerant(x: f64) -> usize {
    (x + 1e-9).floor().max(0.0) as usize
}

/// Largest seed length `r ≤ N(1 − (1+ε)/log₂ q)`; zero when the factor is not positive.
pub fn r_max(n: usize, q: u64, epsilon: f64) -> usize {
    let factor = 1.0 - (1.0 + epsilon) / (q as f64).log2();
    if factor <= 0.0 {
        return 0;
    }
    floor_tolerant(n as f64 * factor)
}

/// Largest binary message length `r₀ ≤ N(R₀ − 1 − ε)`; zero when not positive.
pub fn r0_max(n: usize, rate: f64, epsilon: f64) -> usize {
    let factor = rate - 1.0 - epsilon;
    if factor <= 0.0 {
        return 0;
    }
    floor_tolerant(n as f64 * factor)
}

/// `[R₀ − 1 − ε]⁺`.
pub fn secrecy_rate(rate: f64, epsilon: f64) -> f64 {
    (rate - 1.0 - epsilon).max(0.0)
}

/// `[½ log₂(½ + P) − 1]⁺`, the secrecy rate reachable at power P.
pub fn secrecy_rate_limit(power: f64) -> f64 {
    (0.5 * (0.5 + power).log2() - 1.0).max(0.0)
}

/// A finite probability distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution<K: Ord> {
    probs: BTreeMap<K, f64>,
}

impl<K: Ord> DiscreteDistribution<K> {
    pub fn new(probs: BTreeMap<K, f64>) -> Result<Self, ExtractError> {
        if probs.values().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(ExtractError::InvalidDistribution(
                "negative or non-finite probability".into(),
            ));
        }
        let total: f64 = probs.values().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(ExtractError::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative counts.
    pub fn from_counts(counts: impl IntoIterator<Item = (K, u64)>) -> Result<Self, ExtractError> {
        let counts: Vec<(K, u64)> = counts.into_iter().collect();
        let total: u64 = counts.iter().map(|(_, c)| c).sum();
        if total == 0 {
            return Err(ExtractError::InvalidDistribution("no mass".into()));
        }
        let mut probs = BTreeMap::new();
        for (k, c) in counts {
            *probs.entry(k).or_insert(0.0) += c as f64 / total as f64;
        }
        Self::new(probs)
    }

    pub fn probabilities(&self) -> &BTreeMap<K, f64> {
        &self.probs
    }

    /// Collision entropy `−log₂ Σ p²`.
    pub fn renyi_entropy(&self) -> f64 {
        renyi_entropy(self.probs.values().copied())
    }

    /// `−Σ p log₂ p` with `0 log 0 = 0`.
    pub fn shannon_entropy(&self) -> f64 {
        shannon_entropy(self.probs.values().copied())
    }
}

impl DiscreteDistribution<u64> {
    pub fn uniform(n: u64) -> Self {
        Self {
            probs: (0..n).map(|k| (k, 1.0 / n as f64)).collect(),
        }
    }
}

pub fn renyi_entropy(probs: impl IntoIterator<Item = f64>) -> f64 {
    let collision: f64 = probs.into_iter().map(|p| p * p).sum();
    -collision.log2()
}

pub fn shannon_entropy(probs: impl IntoIterator<Item = f64>) -> f64 {
    -probs
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| p * p.log2())
        .sum::<f64>()
}

/// Lower bound `r_bits − 2^(r_bits − c)/ln 2` on the entropy of a uniformly
/// hashed value when the input has collision entropy above `c`.
pub fn leftover_bound(r_bits: f64, c: f64) -> f64 {
    r_bits - (r_bits - c).exp2() / std::f64::consts::LN_2
}

/// Parameters of the seed extractor and of its leakage analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractorParams {
    pub n: usize,
    pub q: u64,
    /// ε = ε′ + δ.
    pub epsilon: f64,
    /// Smoothing slack s subtracted from the collision entropy.
    pub smoothing: f64,
    pub delta: f64,
    pub epsilon_prime: f64,
}

impl ExtractorParams {
    /// Uses the smoothing `s = ε′N`.
    pub fn new(n: usize, q: u64, epsilon_prime: f64, delta: f64) -> Self {
        Self {
            n,
            q,
            epsilon: epsilon_prime + delta,
            smoothing: epsilon_prime * n as f64,
            delta,
            epsilon_prime,
        }
    }

    pub fn with_smoothing(mut self, smoothing: f64) -> Self {
        self.smoothing = smoothing;
        self
    }

    /// `c = N(log₂ q − 1) − s`.
    pub fn conditional_entropy_floor(&self) -> f64 {
        self.n as f64 * ((self.q as f64).log2() - 1.0) - self.smoothing
    }

    pub fn r_max(&self) -> usize {
        r_max(self.n, self.q, self.epsilon)
    }
}

/// Upper bound on the leakage averaged over all linear maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageBudget {
    pub bits: f64,
    /// Set when the smoothing is too small for the bound to say anything
    /// (s ≤ 2); `bits` is then the trivial `r log₂ q`.
    pub vacuous: bool,
}

impl LeakageBudget {
    /// Whether the budget is tighter than the trivial bound `r log₂ q`.
    pub fn is_informative(&self, r: usize, q: u64) -> bool {
        !self.vacuous && self.bits < r as f64 * (q as f64).log2()
    }
}

/// `r log₂ q − (1 − 2^(−(s/2 − 1))) · leftover_bound(r log₂ q, c)`.
pub fn leakage_budget(params: &ExtractorParams, r: usize) -> LeakageBudget {
    let r_bits = r as f64 * (params.q as f64).log2();
    let s = params.smoothing;
    if s <= 2.0 {
        return LeakageBudget {
            bits: r_bits,
            vacuous: true,
        };
    }
    let prefactor = 1.0 - (-(s / 2.0 - 1.0)).exp2();
    let c = params.conditional_entropy_floor();
    LeakageBudget {
        bits: r_bits - prefactor * leftover_bound(r_bits, c),
        vacuous: false,
    }
}

/// Largest `N₀` with `2^N₀ ≤ q^N`.
pub fn binary_dimension(q: u64, n: usize) -> usize {
    let mut pow: u128 = 1;
    let mut bits = 0usize;
    for _ in 0..n {
        pow = pow.saturating_mul(q as u128);
    }
    while (1u128 << (bits + 1)) <= pow && bits < 126 {
        bits += 1;
    }
    bits
}

/// Binary message encoder on a subset K of a lattice codebook.
///
/// `v` numbers the `2^N₀` points of K by increasing norm (ties broken by
/// coordinates) and writes the rank as `N₀` bits, least significant first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderMap {
    g: FieldMatrix,
    g_prime: FieldMatrix,
    a: FieldMatrix,
    subset: Vec<LatticeCoords>,
    #[serde(skip)]
    rank_of: HashMap<LatticeCoords, u64>,
}

impl EncoderMap {
    pub fn g(&self) -> &FieldMatrix {
        &self.g
    }
    pub fn g_prime(&self) -> &FieldMatrix {
        &self.g_prime
    }
    /// Inverse of `[g′; g]`.
    pub fn a(&self) -> &FieldMatrix {
        &self.a
    }
    pub fn subset(&self) -> &[LatticeCoords] {
        &self.subset
    }
    pub fn n0(&self) -> usize {
        self.g.cols()
    }
    pub fn r0(&self) -> usize {
        self.g.rows()
    }

    /// `v(t)` as bits, or `None` when `t ∉ K`.
    pub fn v(&self, t: &LatticeCoords) -> Option<Vec<u64>> {
        let rank = *self.rank_of.get(t)?;
        Some((0..self.n0()).map(|i| rank >> i & 1).collect())
    }

    /// `v⁻¹`.
    pub fn v_inverse(&self, bits: &[u64]) -> Result<LatticeCoords, ExtractError> {
        if bits.len() != self.n0() {
            return Err(ExtractError::Dimension {
                expected: self.n0(),
                got: bits.len(),
            });
        }
        let rank = bits
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc | (b & 1) << i);
        Ok(self.subset[rank as usize].clone())
    }

    /// `t₁ = v⁻¹(A [S′; S])`.
    pub fn encode_message(&self, s: &[u64], s_prime: &[u64]) -> Result<LatticeCoords, ExtractError> {
        if s.len() != self.r0() {
            return Err(ExtractError::Dimension {
                expected: self.r0(),
                got: s.len(),
            });
        }
        if s_prime.len() != self.n0() - self.r0() {
            return Err(ExtractError::Dimension {
                expected: self.n0() - self.r0(),
                got: s_prime.len(),
            });
        }
        let stacked: Vec<u64> = s_prime.iter().chain(s).copied().collect();
        let w = self.a.mul_vec(&stacked)?;
        self.v_inverse(&w)
    }

    /// `S = g · v(t₁)`.
    pub fn decode_message(&self, t1: &LatticeCoords) -> Result<Vec<u64>, ExtractError> {
        let bits = self
            .v(t1)
            .ok_or_else(|| ExtractError::NotInSubset(t1.values().to_vec()))?;
        Ok(self.g.mul_vec(&bits)?)
    }
}

/// Builds the encoder for a full-row-rank binary `g` of shape `r₀ × N₀`,
/// where `N₀` is the largest power-of-two exponent fitting in the codebook.
pub fn build_encoder(g: FieldMatrix, pair: &NestedLatticePair) -> Result<EncoderMap, ExtractError> {
    if g.field().modulus() != 2 {
        return Err(ExtractError::NotBinary(g.field().modulus()));
    }
    let n0 = binary_dimension(pair.q(), pair.dim());
    if g.cols() != n0 {
        return Err(ExtractError::Dimension {
            expected: n0,
            got: g.cols(),
        });
    }
    let size = pair
        .codebook_size()
        .filter(|&s| s <= MAX_ENCODER_CODEBOOK)
        .ok_or(ExtractError::CodebookTooLarge(pair.codebook_size().unwrap_or(u64::MAX)))?;
    let completion = complete_and_invert(&g).map_err(|e| match e {
        GfError::RankDeficient { rank, rows } => ExtractError::RankDeficient { rank, rows },
        other => ExtractError::Field(other),
    })?;
    let mut points: Vec<(f64, LatticeCoords)> = (0..size)
        .map(|i| {
            let c = LatticeCoords::from_index(i, pair.q(), pair.dim());
            let norm: f64 = pair
                .codebook_point(&c, Dither::Source)
                .iter()
                .map(|x| x * x)
                .sum();
            (norm, c)
        })
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let subset: Vec<LatticeCoords> = points
        .into_iter()
        .take(1usize << n0)
        .map(|(_, c)| c)
        .collect();
    let rank_of = subset
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), i as u64))
        .collect();
    Ok(EncoderMap {
        g,
        g_prime: completion.g_prime,
        a: completion.inverse,
        subset,
        rank_of,
    })
}

/// Outcome of a sampled search for a low-leakage extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorSearch {
    pub best: ExtractorMap,
    pub best_leakage: f64,
    pub average_leakage: f64,
    /// Fraction of full-rank candidates with leakage at most twice the average.
    pub markov_fraction: f64,
    pub full_rank_candidates: usize,
    pub rank_deficient_candidates: usize,
}

/// Samples `candidates` uniform `r × N` matrices over GF(q) from `rng`,
/// scores every full-rank one with `leakage` and keeps the best (first on ties).
pub fn search_good_extractor<R, F>(
    field: PrimeField,
    n: usize,
    r: usize,
    candidates: usize,
    rng: &mut R,
    leakage: F,
) -> Result<ExtractorSearch, ExtractError>
where
    R: Rng + ?Sized,
    F: Fn(&ExtractorMap) -> f64 + Sync,
{
    if r == 0 {
        let best = ExtractorMap::empty(field, n);
        let l = leakage(&best);
        return Ok(ExtractorSearch {
            best,
            best_leakage: l,
            average_leakage: l,
            markov_fraction: 1.0,
            full_rank_candidates: 1,
            rank_deficient_candidates: 0,
        });
    }
    let sampled: Vec<FieldMatrix> = (0..candidates)
        .map(|_| sample_matrix(rng, r, n, field))
        .collect();
    let maps: Vec<ExtractorMap> = sampled
        .into_iter()
        .filter_map(|g| ExtractorMap::new(g).ok())
        .collect();
    if maps.is_empty() {
        return Err(ExtractError::NoFullRankCandidate(candidates));
    }
    let scores: Vec<f64> = maps.par_iter().map(&leakage).collect();
    let (best_idx, &best_leakage) = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("at least one candidate");
    let average_leakage = scores.iter().sum::<f64>() / scores.len() as f64;
    let within = scores
        .iter()
        .filter(|&&l| l <= 2.0 * average_leakage + 1e-12)
        .count();
    Ok(ExtractorSearch {
        best: maps[best_idx].clone(),
        best_leakage,
        average_leakage,
        markov_fraction: within as f64 / scores.len() as f64,
        full_rank_candidates: maps.len(),
        rank_deficient_candidates: candidates - maps.len(),
    })
}

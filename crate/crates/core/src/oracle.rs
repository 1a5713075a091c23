//! Brute-force ground truth: exact mutual information of extracted seeds,
//! exhaustive AMD attack enumeration, and exhaustive censuses of the lattice
//! and linear-algebra facts the scheme relies on.
//!
//! Every census enumerates its whole domain and refuses to run past its size
//! guard instead of sampling.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amd::{AmdError, AmdParams};
use crate::extract::{leftover_bound, seed_uniformity, ExtractError};
use crate::gf::{FieldMatrix, GfError, PrimeField};
use crate::lattice::{Dither, LatticeCoords, LatticeError, NestedLatticePair};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("{what}: enumeration size {size} exceeds the guard {guard}")]
    TooLarge {
        what: &'static str,
        size: f64,
        guard: f64,
    },
    #[error("invalid joint distribution: {0}")]
    InvalidJoint(String),
    #[error(transparent)]
    Field(#[from] GfError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Amd(#[from] AmdError),
}

/// Caps on enumeration sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SizeGuards {
    /// Codeword pairs `q^(2N)` for leakage and representation censuses.
    pub pairs: f64,
    /// Attack tuples `q^(r(2d+2))` for the AMD census.
    pub amd_attacks: f64,
    /// Matrices times vectors for the matrix censuses.
    pub matrices: f64,
}

impl Default for SizeGuards {
    fn default() -> Self {
        Self {
            pairs: 1e8,
            amd_attacks: 1e10,
            matrices: 1e9,
        }
    }
}

fn guard(what: &'static str, size: f64, cap: f64) -> Result<(), OracleError> {
    if size > cap {
        return Err(OracleError::TooLarge {
            what,
            size,
            guard: cap,
        });
    }
    Ok(())
}

fn all_matrices(field: PrimeField, rows: usize, cols: usize) -> impl Iterator<Item = FieldMatrix> {
    let q = field.modulus();
    let total = q.pow((rows * cols) as u32);
    (0..total).map(move |k| {
        let entries = LatticeCoords::from_index(k, q, rows * cols).into_values();
        FieldMatrix::new(field, rows, cols, entries).expect("canonical entries")
    })
}

// -------------------------------------------------------------------------
// Mutual information

/// A joint distribution of two integer-labelled variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    probs: BTreeMap<(u64, u64), f64>,
}

impl JointDistribution {
    pub fn new(probs: BTreeMap<(u64, u64), f64>) -> Result<Self, OracleError> {
        if probs.values().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(OracleError::InvalidJoint("negative or non-finite mass".into()));
        }
        let total: f64 = probs.values().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(OracleError::InvalidJoint(format!("mass sums to {total}")));
        }
        Ok(Self { probs })
    }

    pub fn from_counts(counts: impl IntoIterator<Item = ((u64, u64), u64)>) -> Result<Self, OracleError> {
        let counts: Vec<_> = counts.into_iter().collect();
        let total: u64 = counts.iter().map(|(_, c)| c).sum();
        if total == 0 {
            return Err(OracleError::InvalidJoint("no mass".into()));
        }
        let mut probs = BTreeMap::new();
        for (k, c) in counts {
            *probs.entry(k).or_insert(0.0) += c as f64 / total as f64;
        }
        Self::new(probs)
    }

    /// A random joint on `na × nb` outcomes.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, na: u64, nb: u64) -> Self {
        let weights: Vec<((u64, u64), f64)> = (0..na)
            .flat_map(|a| (0..nb).map(move |b| (a, b)))
            .map(|k| (k, rng.random::<f64>()))
            .collect();
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        let mut probs: BTreeMap<(u64, u64), f64> =
            weights.into_iter().map(|(k, w)| (k, w / total)).collect();
        // absorb rounding into the largest cell so the total is 1 to the last bit
        let drift = 1.0 - probs.values().sum::<f64>();
        if let Some(p) = probs.values_mut().max_by(|a, b| a.total_cmp(b)) {
            *p += drift;
        }
        Self { probs }
    }

    pub fn marginal_a(&self) -> BTreeMap<u64, f64> {
        let mut m = BTreeMap::new();
        for (&(a, _), &p) in &self.probs {
            *m.entry(a).or_insert(0.0) += p;
        }
        m
    }

    pub fn marginal_b(&self) -> BTreeMap<u64, f64> {
        let mut m = BTreeMap::new();
        for (&(_, b), &p) in &self.probs {
            *m.entry(b).or_insert(0.0) += p;
        }
        m
    }

    /// `I(A; B)` in bits.
    pub fn mutual_information(&self) -> f64 {
        let pa = self.marginal_a();
        let pb = self.marginal_b();
        self.probs
            .iter()
            .filter(|(_, &p)| p > 0.0)
            .map(|(&(a, b), &p)| p * (p / (pa[&a] * pb[&b])).log2())
            .sum::<f64>()
            .max(0.0)
    }

    /// `Σ |p(a,b) − p(a)p(b)|` over the product of the supports.
    pub fn variational_distance(&self) -> f64 {
        let pa = self.marginal_a();
        let pb = self.marginal_b();
        let mut d = 0.0;
        for (&a, &x) in &pa {
            for (&b, &y) in &pb {
                let p = self.probs.get(&(a, b)).copied().unwrap_or(0.0);
                d += (p - x * y).abs();
            }
        }
        d
    }
}

/// Both sides of `I(A;B) ≥ D² / (2 ln 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinskerCheck {
    pub mutual_information: f64,
    pub distance: f64,
    pub rhs: f64,
}

impl PinskerCheck {
    pub fn holds(&self) -> bool {
        self.mutual_information + 1e-12 >= self.rhs
    }
}

pub fn pinsker_check(joint: &JointDistribution) -> PinskerCheck {
    let distance = joint.variational_distance();
    PinskerCheck {
        mutual_information: joint.mutual_information(),
        distance,
        rhs: distance * distance / (2.0 * std::f64::consts::LN_2),
    }
}

fn entropy_of_counts(counts: impl Iterator<Item = u64>, total: f64) -> f64 {
    -counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Exact `I(g(t₁); Ȳ)` for independent uniform `t₁, t₂`, where the
/// eavesdropper sees the noiseless sum `Ȳ = x₁ + x₂` of the two dithered
/// codewords, represented as the residue coordinates of `t₁ ⊕ t₂` and the
/// wrap index T.
#[derive(Debug, Clone)]
pub struct LeakageOracle {
    pair: NestedLatticePair,
    /// `codes[i][c1 * q + c2]` = 2·(c1 ⊕ c2) + wrap bit of coordinate i.
    codes: Vec<Vec<u32>>,
    codebook: u64,
}

/// Leakage computed along two independent summation paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageValue {
    /// `Σ p(a,b) log p(a,b)/(p(a)p(b))`.
    pub joint_path: f64,
    /// `H(A) + H(B) − H(A,B)`.
    pub entropy_path: f64,
}

impl LeakageOracle {
    pub fn new(pair: &NestedLatticePair, guards: &SizeGuards) -> Result<Self, OracleError> {
        let q = pair.q();
        let n = pair.dim();
        let pairs = (q as f64).powi(2 * n as i32);
        guard("codeword pairs", pairs, guards.pairs)?;
        let codebook = pair.codebook_size().expect("guarded");
        let offset = pair.sum_offset(Dither::Source, Dither::Jammer);
        let mut codes = Vec::with_capacity(n);
        for i in 0..n {
            let mut table = vec![0u32; (q * q) as usize];
            for c1 in 0..q {
                for c2 in 0..q {
                    let mut t1 = LatticeCoords::zero(n).into_values();
                    let mut t2 = t1.clone();
                    t1[i] = c1;
                    t2[i] = c2;
                    let x1 = pair.codebook_point(&LatticeCoords::new(t1, q)?, Dither::Source);
                    let x2 = pair.codebook_point(&LatticeCoords::new(t2, q)?, Dither::Jammer);
                    let rep = pair.represent_sum(&x1, &x2)?;
                    let digit = pair.decode_fine_mod_coarse(&rep.sum_mod, &offset).values()[i];
                    table[(c1 * q + c2) as usize] = (digit * 2 + rep.wrapped(i) as u64) as u32;
                }
            }
            codes.push(table);
        }
        Ok(Self {
            pair: pair.clone(),
            codes,
            codebook,
        })
    }

    pub fn pair(&self) -> &NestedLatticePair {
        &self.pair
    }

    fn observation(&self, t1: &[u64], t2: &[u64]) -> u64 {
        let q = self.pair.q();
        let radix = 2 * q;
        (0..t1.len()).rev().fold(0u64, |acc, i| {
            acc * radix + self.codes[i][(t1[i] * q + t2[i]) as usize] as u64
        })
    }

    fn joint_counts(&self, g: &FieldMatrix) -> Result<(Vec<u64>, usize, usize), OracleError> {
        let q = self.pair.q();
        let n = self.pair.dim();
        if g.cols() != n || g.field().modulus() != q {
            return Err(OracleError::Extract(ExtractError::Dimension {
                expected: n,
                got: g.cols(),
            }));
        }
        let seeds = q.pow(g.rows() as u32) as usize;
        let obs = (2 * q).pow(n as u32) as usize;
        guard("joint histogram cells", (seeds * obs) as f64, 1e8)?;
        let coords: Vec<Vec<u64>> = (0..self.codebook)
            .map(|i| LatticeCoords::from_index(i, q, n).into_values())
            .collect();
        let counts = coords
            .par_iter()
            .fold(
                || vec![0u64; seeds * obs],
                |mut acc, t1| {
                    let seed = LatticeCoords::reduce(
                        &g.mul_vec(t1)
                            .expect("dimensions checked")
                            .iter()
                            .map(|&v| v as i64)
                            .collect::<Vec<_>>(),
                        q,
                    )
                    .to_index(q) as usize;
                    for t2 in &coords {
                        acc[seed * obs + self.observation(t1, t2) as usize] += 1;
                    }
                    acc
                },
            )
            .reduce(
                || vec![0u64; seeds * obs],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        Ok((counts, seeds, obs))
    }

    /// Exact leakage of an arbitrary (possibly rank-deficient) linear map.
    pub fn leakage_paths(&self, g: &FieldMatrix) -> Result<LeakageValue, OracleError> {
        if g.rows() == 0 {
            return Ok(LeakageValue {
                joint_path: 0.0,
                entropy_path: 0.0,
            });
        }
        let (counts, seeds, obs) = self.joint_counts(g)?;
        let total = (self.codebook * self.codebook) as f64;
        let mut ca = vec![0u64; seeds];
        let mut cb = vec![0u64; obs];
        for a in 0..seeds {
            for b in 0..obs {
                let c = counts[a * obs + b];
                ca[a] += c;
                cb[b] += c;
            }
        }
        let mut joint_path = 0.0;
        for a in 0..seeds {
            for b in 0..obs {
                let c = counts[a * obs + b];
                if c > 0 {
                    let ratio = c as f64 * total / (ca[a] as f64 * cb[b] as f64);
                    joint_path += c as f64 / total * ratio.log2();
                }
            }
        }
        let h_a = entropy_of_counts(ca.into_iter(), total);
        let h_b = entropy_of_counts(cb.into_iter(), total);
        let h_ab = entropy_of_counts(counts.into_iter(), total);
        Ok(LeakageValue {
            joint_path: joint_path.max(0.0),
            entropy_path: (h_a + h_b - h_ab).max(0.0),
        })
    }

    pub fn leakage(&self, g: &FieldMatrix) -> Result<f64, OracleError> {
        Ok(self.leakage_paths(g)?.joint_path)
    }

    /// Leakage averaged uniformly over every `r × N` matrix over GF(q).
    pub fn average_over_all_maps(&self, r: usize, guards: &SizeGuards) -> Result<f64, OracleError> {
        let q = self.pair.q();
        let n = self.pair.dim();
        let maps = (q as f64).powi((r * n) as i32);
        guard(
            "matrices times codeword pairs",
            maps * (self.codebook * self.codebook) as f64,
            guards.matrices,
        )?;
        let mut total = 0.0;
        for g in all_matrices(self.pair.field(), r, n) {
            total += self.leakage(&g)?;
        }
        Ok(total / maps)
    }
}

/// Exact `I(g(t₁); Ȳ)`.
pub fn exact_seed_leakage(pair: &NestedLatticePair, g: &FieldMatrix) -> Result<f64, OracleError> {
    LeakageOracle::new(pair, &SizeGuards::default())?.leakage(g)
}

/// A leakage measurement with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageRecord {
    pub g: FieldMatrix,
    pub exact_mi: f64,
    pub q: u64,
    pub n: usize,
    pub r: usize,
}

// -------------------------------------------------------------------------
// AMD census

/// Exhaustive worst case of additive attacks on the AMD code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmdCensus {
    pub field_order: u64,
    pub d: usize,
    /// Attack tuples `(s, s', Δx, Δh)` examined, the all-zero perturbation excluded.
    pub attacks: u64,
    /// Largest number of seeds `x` for which an attack succeeds.
    pub max_hits: u64,
    /// Same, restricted to attacks that change the message.
    pub max_hits_message_changed: u64,
    /// Number of attack tuples per success count.
    pub histogram: BTreeMap<u64, u64>,
    pub worst_attack: Option<AmdAttack>,
}

/// One attack tuple, elements written as field indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmdAttack {
    pub s: Vec<u64>,
    pub s_prime: Vec<u64>,
    pub dx: u64,
    pub dh: u64,
}

impl AmdCensus {
    pub fn max_probability(&self) -> f64 {
        self.max_hits as f64 / self.field_order as f64
    }

    /// Exact integer form of `max ≤ (d+1)/q^r`.
    pub fn within_bound(&self) -> bool {
        self.max_hits <= self.d as u64 + 1
    }
}

fn message_from_index(mut idx: u64, n: u64, d: usize) -> Vec<u64> {
    (0..d)
        .map(|_| {
            let v = idx % n;
            idx /= n;
            v
        })
        .collect()
}

pub fn exact_amd_win_census(params: &AmdParams, guards: &SizeGuards) -> Result<AmdCensus, OracleError> {
    let field = params.field();
    let d = params.d();
    let n = field.order();
    let attacks = (n as f64).powi(2 * d as i32 + 2);
    guard("AMD attack tuples", attacks, guards.amd_attacks)?;
    let t = field
        .tables(1 << 16)
        .ok_or(OracleError::TooLarge {
            what: "field tables",
            size: n as f64,
            guard: (1u64 << 16) as f64,
        })?;
    let messages = n.pow(d as u32);
    // tags[s * n + x]
    let tags: Vec<u32> = (0..messages)
        .flat_map(|s| {
            let msg = message_from_index(s, n, d);
            let t = &t;
            (0..n as u32).map(move |x| {
                let mut acc = 0u32;
                let mut power = x;
                for &si in &msg {
                    acc = t.add(acc, t.mul(si as u32, power));
                    power = t.mul(power, x);
                }
                t.add(acc, t.mul(power, x))
            })
        })
        .collect();
    let nn = n as usize;

    struct Partial {
        attacks: u64,
        max_hits: u64,
        max_changed: u64,
        histogram: BTreeMap<u64, u64>,
        worst: Option<(u64, u64, u64, u64)>,
    }
    let partials: Vec<Partial> = (0..messages)
        .into_par_iter()
        .map(|s| {
            let mut p = Partial {
                attacks: 0,
                max_hits: 0,
                max_changed: 0,
                histogram: BTreeMap::new(),
                worst: None,
            };
            let mut hist = vec![0u64; nn];
            let row_s = &tags[s as usize * nn..(s as usize + 1) * nn];
            for sp in 0..messages {
                let row_sp = &tags[sp as usize * nn..(sp as usize + 1) * nn];
                for dx in 0..n as u32 {
                    hist.iter_mut().for_each(|h| *h = 0);
                    for x in 0..n as u32 {
                        let xt = t.add(x, dx);
                        let v = t.sub(row_sp[xt as usize], row_s[x as usize]);
                        hist[v as usize] += 1;
                    }
                    for (dh, &hits) in hist.iter().enumerate() {
                        if s == sp && dx == 0 && dh == 0 {
                            continue;
                        }
                        p.attacks += 1;
                        *p.histogram.entry(hits).or_insert(0) += 1;
                        if hits > p.max_hits {
                            p.max_hits = hits;
                            p.worst = Some((s, sp, dx as u64, dh as u64));
                        }
                        if s != sp {
                            p.max_changed = p.max_changed.max(hits);
                        }
                    }
                }
            }
            p
        })
        .collect();
    let mut census = AmdCensus {
        field_order: n,
        d,
        attacks: 0,
        max_hits: 0,
        max_hits_message_changed: 0,
        histogram: BTreeMap::new(),
        worst_attack: None,
    };
    for p in partials {
        census.attacks += p.attacks;
        census.max_hits_message_changed = census.max_hits_message_changed.max(p.max_changed);
        if p.max_hits > census.max_hits {
            census.max_hits = p.max_hits;
            census.worst_attack = p.worst.map(|(s, sp, dx, dh)| AmdAttack {
                s: message_from_index(s, n, d),
                s_prime: message_from_index(sp, n, d),
                dx,
                dh,
            });
        }
        for (k, v) in p.histogram {
            *census.histogram.entry(k).or_insert(0) += v;
        }
    }
    Ok(census)
}

// -------------------------------------------------------------------------
// Lattice censuses

/// Outcome of an exhaustive check, with the first counterexample found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusOutcome {
    pub checked: u64,
    pub failures: u64,
    pub counterexample: Option<String>,
}

impl CensusOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures += 1;
            if self.counterexample.is_none() {
                self.counterexample = Some(detail());
            }
        }
    }

    fn new() -> Self {
        Self {
            checked: 0,
            failures: 0,
            counterexample: None,
        }
    }
}

/// Round trip of the sum representation and `1 ≤ T ≤ 2^N` over all codeword pairs.
pub fn representation_census(pair: &NestedLatticePair, guards: &SizeGuards) -> Result<CensusOutcome, OracleError> {
    let size = pair.codebook_size().map(|s| (s as f64).powi(2)).unwrap_or(f64::INFINITY);
    guard("codeword pairs", size, guards.pairs)?;
    let mut out = CensusOutcome::new();
    let points: Vec<(LatticeCoords, Vec<f64>, Vec<f64>)> = pair
        .codebook()
        .map(|c| {
            let a = pair.codebook_point(&c, Dither::Source);
            let b = pair.codebook_point(&c, Dither::Jammer);
            (c, a, b)
        })
        .collect();
    let max_t = 1u64 << pair.dim();
    for (ca, u1, _) in &points {
        for (cb, _, u2) in &points {
            let rep = pair.represent_sum(u1, u2)?;
            let exact: Vec<f64> = u1.iter().zip(u2).map(|(x, y)| x + y).collect();
            let back = pair.reconstruct_sum(&rep);
            let ok = rep.t >= 1
                && rep.t <= max_t
                && back
                    .iter()
                    .zip(&exact)
                    .all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            out.record(ok, || {
                format!("t1 = {:?}, t2 = {:?}, T = {}, sum = {exact:?}, reconstructed = {back:?}", ca.values(), cb.values(), rep.t)
            });
        }
    }
    Ok(out)
}

/// Bijectivity of the coordinate map onto GF(q)^N and additivity of
/// `lattice_add` over all codeword pairs.
pub fn isomorphism_census(pair: &NestedLatticePair, guards: &SizeGuards) -> Result<CensusOutcome, OracleError> {
    let size = pair.codebook_size().map(|s| (s as f64).powi(2)).unwrap_or(f64::INFINITY);
    guard("codeword pairs", size, guards.pairs)?;
    let f = pair.field();
    let mut out = CensusOutcome::new();
    let codebook: Vec<LatticeCoords> = pair.codebook().collect();
    let images: BTreeSet<Vec<u64>> = codebook.iter().map(|c| pair.coords_to_field(c)).collect();
    // distinct signals for distinct coordinates, and the images cover GF(q)^N
    let signals: BTreeSet<Vec<u64>> = codebook
        .iter()
        .map(|c| {
            pair.codebook_point(c, Dither::Source)
                .iter()
                .map(|v| v.to_bits())
                .collect()
        })
        .collect();
    out.record(
        images.len() == codebook.len() && signals.len() == codebook.len(),
        || format!("{} images and {} signals for {} codewords", images.len(), signals.len(), codebook.len()),
    );
    for a in &codebook {
        for b in &codebook {
            let lhs = pair.coords_to_field(&pair.lattice_add(a, b));
            let rhs: Vec<u64> = pair
                .coords_to_field(a)
                .iter()
                .zip(pair.coords_to_field(b))
                .map(|(&x, y)| f.add(x, y))
                .collect();
            out.record(lhs == rhs, || {
                format!("a = {:?}, b = {:?}: image of sum {lhs:?} != {rhs:?}", a.values(), b.values())
            });
        }
    }
    Ok(out)
}

// -------------------------------------------------------------------------
// Matrix censuses

/// Exact count of full-row-rank `r × N` matrices over GF(q).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullRankCensus {
    pub q: u64,
    pub n: usize,
    pub r: usize,
    pub full_rank: u64,
    pub total: u64,
}

impl FullRankCensus {
    pub fn fraction(&self) -> f64 {
        self.full_rank as f64 / self.total as f64
    }
    /// `1 − q^(r−N)`.
    pub fn bound(&self) -> f64 {
        1.0 - (self.q as f64).powi(self.r as i32 - self.n as i32)
    }
    /// Exact form of `fraction ≥ 1 − q^(r−N)`: `full · q^N ≥ total · (q^N − q^r)`.
    pub fn meets_bound(&self) -> bool {
        let qn = (self.q as u128).pow(self.n as u32);
        let qr = (self.q as u128).pow(self.r as u32);
        self.full_rank as u128 * qn >= self.total as u128 * (qn - qr)
    }
}

// Vector arithmetic on GF(q)^N with vectors encoded as base-q indices.
struct VectorSpace {
    size: usize,
    add: Vec<u32>,
    scale: Vec<u32>,
}

impl VectorSpace {
    fn new(q: u64, n: usize) -> Self {
        let size = q.pow(n as u32) as usize;
        let f = PrimeField::new(q).expect("prime");
        let vecs: Vec<Vec<u64>> = (0..size as u64)
            .map(|i| LatticeCoords::from_index(i, q, n).into_values())
            .collect();
        let index = |v: Vec<u64>| LatticeCoords::new(v, q).expect("canonical").to_index(q) as u32;
        let mut add = vec![0u32; size * size];
        for a in 0..size {
            for b in 0..size {
                add[a * size + b] =
                    index(vecs[a].iter().zip(&vecs[b]).map(|(&x, &y)| f.add(x, y)).collect());
            }
        }
        let mut scale = vec![0u32; q as usize * size];
        for c in 0..q {
            for a in 0..size {
                scale[c as usize * size + a] = index(vecs[a].iter().map(|&x| f.mul(c, x)).collect());
            }
        }
        Self { size, add, scale }
    }

    fn extend(&self, span: &[bool], v: usize, q: u64) -> Vec<bool> {
        let mut next = vec![false; self.size];
        for (s, _) in span.iter().enumerate().filter(|(_, &b)| b) {
            for c in 0..q as usize {
                let cv = self.scale[c * self.size + v] as usize;
                next[self.add[s * self.size + cv] as usize] = true;
            }
        }
        next
    }
}

/// Walks every matrix row by row. A row inside the span of the rows above it
/// makes every completion rank-deficient, so that whole subtree is counted at
/// once; the last row is examined individually.
pub fn full_rank_census(q: u64, n: usize, r: usize, guards: &SizeGuards) -> Result<FullRankCensus, OracleError> {
    PrimeField::new(q)?;
    let total_f = (q as f64).powi((r * n) as i32);
    guard("matrices", total_f, guards.matrices)?;
    let total = q.pow((r * n) as u32);
    if r == 0 {
        return Ok(FullRankCensus { q, n, r, full_rank: 1, total: 1 });
    }
    let space = VectorSpace::new(q, n);
    let mut origin = vec![false; space.size];
    origin[0] = true;

    fn walk(space: &VectorSpace, q: u64, span: &[bool], remaining: usize) -> (u64, u64) {
        let rows_below = (remaining - 1) as u32;
        let subtree = (space.size as u64).pow(rows_below);
        let mut full = 0;
        let mut deficient = 0;
        for v in 0..space.size {
            if span[v] {
                deficient += subtree;
            } else if remaining == 1 {
                full += 1;
            } else {
                let (f, d) = walk(space, q, &space.extend(span, v, q), remaining - 1);
                full += f;
                deficient += d;
            }
        }
        (full, deficient)
    }

    let (full_rank, deficient): (u64, u64) = (0..space.size)
        .into_par_iter()
        .map(|v| {
            let subtree = (space.size as u64).pow((r - 1) as u32);
            if origin[v] {
                (0, subtree)
            } else if r == 1 {
                (1, 0)
            } else {
                walk(&space, q, &space.extend(&origin, v, q), r - 1)
            }
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    debug_assert_eq!(full_rank + deficient, total);
    Ok(FullRankCensus { q, n, r, full_rank, total })
}

/// Same count by Gaussian elimination on every matrix.
pub fn full_rank_census_brute(q: u64, n: usize, r: usize, guards: &SizeGuards) -> Result<FullRankCensus, OracleError> {
    let field = PrimeField::new(q)?;
    guard("matrices", (q as f64).powi((r * n) as i32), guards.matrices)?;
    let total = q.pow((r * n) as u32);
    let full_rank = all_matrices(field, r, n).filter(|m| m.rank() == r).count() as u64;
    Ok(FullRankCensus { q, n, r, full_rank, total })
}

/// Worst collision probability of the family of all linear maps GF(q)^N → GF(q)^r.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniversalHashCensus {
    pub q: u64,
    pub n: usize,
    pub r: usize,
    /// Largest number of maps sending some pair `x₁ ≠ x₂` to the same value.
    pub max_collisions: u64,
    pub maps: u64,
    pub pairs_checked: u64,
}

impl UniversalHashCensus {
    pub fn max_collision_probability(&self) -> f64 {
        self.max_collisions as f64 / self.maps as f64
    }
    /// Exact form of `max ≤ q^(−r)`.
    pub fn is_universal(&self) -> bool {
        self.max_collisions as u128 * (self.q as u128).pow(self.r as u32) <= self.maps as u128
    }
}

/// For every pair `x₁ ≠ x₂` counts the maps `G` with `G x₁ = G x₂`.
///
/// The count only depends on `δ = x₁ − x₂`, and a matrix kills δ iff each of
/// its rows is orthogonal to δ, so the number of colliding maps is
/// `#{rows ⟂ δ}^r`. When the full family is small enough it is also
/// enumerated matrix by matrix and the two counts must agree.
pub fn universal_hash_census(q: u64, n: usize, r: usize, guards: &SizeGuards) -> Result<UniversalHashCensus, OracleError> {
    let field = PrimeField::new(q)?;
    let size = q.pow(n as u32);
    guard("vector pairs", (size as f64).powi(2), guards.pairs)?;
    let maps = q.pow((r * n) as u32);
    let vectors: Vec<Vec<u64>> = (0..size).map(|i| LatticeCoords::from_index(i, q, n).into_values()).collect();
    let dot = |a: &[u64], b: &[u64]| a.iter().zip(b).fold(0, |acc, (&x, &y)| field.add(acc, field.mul(x, y)));
    let killing: Vec<u64> = vectors
        .iter()
        .map(|delta| {
            let rows = vectors.iter().filter(|row| dot(row, delta) == 0).count() as u64;
            rows.pow(r as u32)
        })
        .collect();
    let brute_ok = (maps as f64) * (size as f64) <= guards.matrices.min(1e8);
    let direct: Option<Vec<u64>> = brute_ok.then(|| {
        let mut counts = vec![0u64; size as usize];
        for g in all_matrices(field, r, n) {
            for (i, delta) in vectors.iter().enumerate() {
                if g.mul_vec(delta).expect("dims").iter().all(|&v| v == 0) {
                    counts[i] += 1;
                }
            }
        }
        counts
    });
    if let Some(direct) = &direct {
        assert_eq!(direct, &killing, "row-product count disagrees with enumeration");
    }
    let mut max_collisions = 0;
    let mut pairs_checked = 0;
    let sub = |a: &[u64], b: &[u64]| -> usize {
        let d: Vec<u64> = a.iter().zip(b).map(|(&x, &y)| field.sub(x, y)).collect();
        LatticeCoords::new(d, q).expect("canonical").to_index(q) as usize
    };
    for (i, x1) in vectors.iter().enumerate() {
        for (j, x2) in vectors.iter().enumerate() {
            if i == j {
                continue;
            }
            pairs_checked += 1;
            max_collisions = max_collisions.max(killing[sub(x1, x2)]);
        }
    }
    Ok(UniversalHashCensus { q, n, r, max_collisions, maps, pairs_checked })
}

/// Average entropy of `G(A)` over every linear map G, against the bound
/// `r log₂ q − 2^(r log₂ q − c)/ln 2` with `c = H₂(A)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeftoverCensus {
    pub average_entropy: f64,
    pub collision_entropy: f64,
    pub bound: f64,
    pub maps: u64,
}

impl LeftoverCensus {
    pub fn holds(&self) -> bool {
        self.average_entropy + 1e-12 >= self.bound
    }
}

/// `weights[i]` is the (unnormalized) mass of the vector with base-q index `i`.
pub fn leftover_census(q: u64, n: usize, r: usize, weights: &[f64], guards: &SizeGuards) -> Result<LeftoverCensus, OracleError> {
    let field = PrimeField::new(q)?;
    let size = q.pow(n as u32) as usize;
    if weights.len() != size {
        return Err(OracleError::Extract(ExtractError::Dimension { expected: size, got: weights.len() }));
    }
    let maps = q.pow((r * n) as u32);
    guard("maps times inputs", maps as f64 * size as f64, guards.matrices)?;
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let collision_entropy = -probs.iter().map(|p| p * p).sum::<f64>().log2();
    let vectors: Vec<Vec<u64>> = (0..size as u64).map(|i| LatticeCoords::from_index(i, q, n).into_values()).collect();
    let outputs = q.pow(r as u32) as usize;
    let mut sum_entropy = 0.0;
    for g in all_matrices(field, r, n) {
        let mut out = vec![0.0; outputs];
        for (v, &p) in vectors.iter().zip(&probs) {
            let y = g.mul_vec(v).expect("dims");
            out[LatticeCoords::new(y, q).expect("canonical").to_index(q) as usize] += p;
        }
        sum_entropy += crate::extract::shannon_entropy(out);
    }
    let r_bits = r as f64 * (q as f64).log2();
    Ok(LeftoverCensus {
        average_entropy: sum_entropy / maps as f64,
        collision_entropy,
        bound: leftover_bound(r_bits, collision_entropy),
        maps,
    })
}

/// Uniformity of `g(t)` under uniform t for every listed matrix; the
/// counterexample names the first offending matrix.
pub fn uniformity_census<'a>(matrices: impl IntoIterator<Item = &'a FieldMatrix>) -> Result<CensusOutcome, OracleError> {
    let mut out = CensusOutcome::new();
    for g in matrices {
        let u = seed_uniformity(g)?;
        out.record(u.is_uniform(), || format!("g = {g} gives output counts {:?}", u.counts));
    }
    Ok(out)
}

/// Every full-row-rank `r × N` matrix over GF(q).
pub fn full_rank_matrices(q: u64, n: usize, r: usize) -> Result<Vec<FieldMatrix>, OracleError> {
    let field = PrimeField::new(q)?;
    Ok(all_matrices(field, r, n).filter(|g| g.rank() == r).collect())
}

//! The four-stage detection protocol over the two-hop channel.
//!
//! Stage order: seed `x` and key `k` are extracted from lattice codewords sent
//! by node 1 under jamming from node 2; the padded tag `u = h + k` is sent on
//! an r-dimensional lattice while node 2 is silent; the message `s` is sent
//! in binary blocks through the message encoder. Node 2 recovers
//! `ĥ = û − k̂` and accepts iff `(ŝ, x̂, ĥ)` satisfies the hash rule.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amd::{AmdError, AmdParams};
use crate::channel::{
    phase1, phase2, power_audit, relay_step, ChannelConfig, ChannelError, PhaseRecord, PowerAudit, RelayBehavior,
    RelayContext, Stage, StagePlan,
};
use crate::extract::{binary_dimension, build_encoder, r0_max, r_max, EncoderMap, ExtractError, ExtractorMap};
use crate::gf::{ExtElement, ExtField, FieldMatrix, GfError, PrimeField};
use crate::lattice::{Dither, LatticeCoords, LatticeError, NestedLatticePair};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("invalid protocol configuration: {0}")]
    Config(String),
    #[error("payload of q^(rd) = {q}^{rd} messages does not fit in 128 bits")]
    PayloadTooLarge { q: u64, rd: usize },
    #[error(transparent)]
    Amd(#[from] AmdError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Field(#[from] GfError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Dithers in units of the fine spacing α; omitted dithers are zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DitherConfig {
    pub source: Option<Vec<f64>>,
    pub jammer: Option<Vec<f64>>,
    pub relay: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeStageConfig {
    pub alpha: f64,
    pub dithers: DitherConfig,
}

impl Default for LatticeStageConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            dithers: DitherConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MessageStageConfig {
    pub q: u64,
    pub n: usize,
    /// Message bits per block; defaults to the largest secure value.
    pub r0: Option<usize>,
    /// Binary `r₀ × N₀` encoder rows; defaults to `[I | 0]`.
    pub encoder: Option<Vec<Vec<u64>>>,
    /// Power back-off: the stage runs at `P = P̄(1 − ε_P)`.
    pub epsilon_p: f64,
    pub dithers: DitherConfig,
}

impl Default for MessageStageConfig {
    fn default() -> Self {
        Self {
            q: 5,
            n: 4,
            r0: None,
            encoder: None,
            epsilon_p: 0.05,
            dithers: DitherConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub q: u64,
    pub r: usize,
    pub d: usize,
    /// Lattice dimension of the seed and key stages.
    pub n: usize,
    pub epsilon: f64,
    /// `r × N` extractor rows over GF(q); defaults to `[I | 0]`.
    pub extractor: Option<Vec<Vec<u64>>>,
    pub seed_stage: LatticeStageConfig,
    pub tag_stage: LatticeStageConfig,
    pub message: MessageStageConfig,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            q: 5,
            r: 2,
            d: 2,
            n: 4,
            epsilon: 0.1,
            extractor: None,
            seed_stage: LatticeStageConfig::default(),
            tag_stage: LatticeStageConfig::default(),
            message: MessageStageConfig::default(),
        }
    }
}

fn identity_prefix(field: PrimeField, rows: usize, cols: usize) -> Result<FieldMatrix, GfError> {
    let rows: Vec<Vec<u64>> = (0..rows)
        .map(|i| (0..cols).map(|j| u64::from(i == j)).collect())
        .collect();
    FieldMatrix::from_rows(field, cols, &rows)
}

fn build_pair(dim: usize, q: u64, alpha: f64, dithers: &DitherConfig) -> Result<NestedLatticePair, ProtocolError> {
    let mut pair = NestedLatticePair::new(dim, q, alpha)?;
    for (which, d) in [
        (Dither::Source, &dithers.source),
        (Dither::Jammer, &dithers.jammer),
        (Dither::Relay, &dithers.relay),
    ] {
        if let Some(d) = d {
            pair = pair.with_dither(which, d.iter().map(|v| v * alpha).collect())?;
        }
    }
    Ok(pair)
}

fn subset_power(encoder: &EncoderMap, pair: &NestedLatticePair) -> f64 {
    let total: f64 = encoder
        .subset()
        .iter()
        .map(|c| pair.codebook_point(c, Dither::Source).iter().map(|x| x * x).sum::<f64>())
        .sum();
    total / (encoder.subset().len() * pair.dim()) as f64
}

/// Validated protocol instance.
#[derive(Debug, Clone)]
pub struct ProtocolParams {
    config: ProtocolConfig,
    amd: AmdParams,
    extractor: ExtractorMap,
    seed_pair: NestedLatticePair,
    tag_pair: NestedLatticePair,
    message_pair: NestedLatticePair,
    encoder: EncoderMap,
    message_power: f64,
    payload_bits: usize,
    message_blocks: usize,
    power_limit: f64,
}

impl ProtocolParams {
    pub fn new(config: ProtocolConfig, power_limit: f64) -> Result<Self, ProtocolError> {
        let c = &config;
        if c.n == 0 || c.r == 0 {
            return Err(ProtocolError::Config("N and r must be positive".into()));
        }
        if power_limit.is_nan() || power_limit <= 0.0 {
            return Err(ProtocolError::Config(format!("power limit must be positive, got {power_limit}")));
        }
        let field = ExtField::new(c.q, c.r)?;
        let amd = AmdParams::new(field, c.d)?;
        let limit = r_max(c.n, c.q, c.epsilon);
        if c.r > limit {
            return Err(ProtocolError::Config(format!(
                "r = {} exceeds the secure seed length {limit} for N = {}, q = {}, ε = {}",
                c.r, c.n, c.q, c.epsilon
            )));
        }
        let base = PrimeField::new(c.q)?;
        let g = match &c.extractor {
            Some(rows) => FieldMatrix::from_rows(base, c.n, rows)?,
            None => identity_prefix(base, c.r, c.n)?,
        };
        if g.rows() != c.r {
            return Err(ProtocolError::Config(format!("extractor has {} rows, expected r = {}", g.rows(), c.r)));
        }
        let extractor = ExtractorMap::new(g)?;
        let seed_pair = build_pair(c.n, c.q, c.seed_stage.alpha, &c.seed_stage.dithers)?;
        let tag_pair = build_pair(c.r, c.q, c.tag_stage.alpha, &c.tag_stage.dithers)?;

        let m = &c.message;
        if !(0.0..1.0).contains(&m.epsilon_p) {
            return Err(ProtocolError::Config(format!("ε_P must lie in [0, 1), got {}", m.epsilon_p)));
        }
        let n0 = binary_dimension(m.q, m.n);
        let r0 = match m.r0 {
            Some(r0) => r0,
            None => r0_max(m.n, (m.q as f64).log2(), c.epsilon),
        };
        if r0 == 0 || r0 > n0 {
            return Err(ProtocolError::Config(format!(
                "message block length r0 = {r0} must lie in 1..={n0}"
            )));
        }
        let binary = PrimeField::new(2)?;
        let g0 = match &m.encoder {
            Some(rows) => FieldMatrix::from_rows(binary, n0, rows)?,
            None => identity_prefix(binary, r0, n0)?,
        };
        if g0.rows() != r0 {
            return Err(ProtocolError::Config(format!("encoder has {} rows, expected r0 = {r0}", g0.rows())));
        }
        let unit_pair = build_pair(m.n, m.q, 1.0, &m.dithers)?;
        let unit_encoder = build_encoder(g0.clone(), &unit_pair)?;
        let unit_power = subset_power(&unit_encoder, &unit_pair);
        let message_power = power_limit * (1.0 - m.epsilon_p);
        if unit_power <= 0.0 {
            return Err(ProtocolError::Config("message codebook has zero power".into()));
        }
        let alpha = (message_power / unit_power).sqrt();
        let message_pair = build_pair(m.n, m.q, alpha, &m.dithers)?;
        let encoder = build_encoder(g0, &message_pair)?;
        if !message_pair.rate_condition_ok(message_power) {
            log::debug!(
                "message lattice rate {} is not below ½log₂(½ + {message_power})",
                message_pair.codebook_rate()
            );
        }

        let rd = c.r * c.d;
        let count = payload_count(c.q, rd)?;
        let payload_bits = (128 - (count - 1).leading_zeros()) as usize;
        let message_blocks = payload_bits.div_ceil(r0);

        let params = Self {
            config,
            amd,
            extractor,
            seed_pair,
            tag_pair,
            message_pair,
            encoder,
            message_power,
            payload_bits,
            message_blocks,
            power_limit,
        };
        let expected = params.rate_report();
        if expected.pt > power_limit * (1.0 + 1e-12) {
            return Err(ProtocolError::Config(format!(
                "expected node-1 power {} exceeds the limit {power_limit}",
                expected.pt
            )));
        }
        Ok(params)
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }
    pub fn amd(&self) -> &AmdParams {
        &self.amd
    }
    pub fn field(&self) -> &ExtField {
        self.amd.field()
    }
    pub fn extractor(&self) -> &ExtractorMap {
        &self.extractor
    }
    pub fn seed_pair(&self) -> &NestedLatticePair {
        &self.seed_pair
    }
    pub fn tag_pair(&self) -> &NestedLatticePair {
        &self.tag_pair
    }
    pub fn message_pair(&self) -> &NestedLatticePair {
        &self.message_pair
    }
    pub fn encoder(&self) -> &EncoderMap {
        &self.encoder
    }
    /// `P = P̄(1 − ε_P)`, the average power over the message subset.
    pub fn message_power(&self) -> f64 {
        self.message_power
    }
    pub fn power_limit(&self) -> f64 {
        self.power_limit
    }
    /// `⌈log₂ q^(rd)⌉`.
    pub fn payload_bits(&self) -> usize {
        self.payload_bits
    }
    pub fn message_blocks(&self) -> usize {
        self.message_blocks
    }
    /// `R_e = r₀ / N_msg`.
    pub fn message_rate(&self) -> f64 {
        self.encoder.r0() as f64 / self.message_pair.dim() as f64
    }

    /// The dimension of the lattice carrying `stage`.
    pub fn stage_dim(&self, stage: Stage) -> usize {
        self.stage_pair(stage).dim()
    }

    pub fn stage_pair(&self, stage: Stage) -> &NestedLatticePair {
        match stage {
            Stage::Seed | Stage::Key => &self.seed_pair,
            Stage::Tag => &self.tag_pair,
            Stage::Message => &self.message_pair,
        }
    }

    /// Rate inputs with the expected per-stage powers of node 1.
    pub fn rate_inputs(&self) -> RateInputs {
        RateInputs {
            n: self.config.n,
            r: self.config.r,
            q: self.config.q,
            d: self.config.d,
            re: self.message_rate(),
            block: self.message_pair.dim(),
            p1: self.seed_pair.average_codebook_power(Dither::Source),
            p2: self.tag_pair.average_codebook_power(Dither::Source),
            p: self.message_power,
        }
    }

    pub fn rate_report(&self) -> RateReport {
        rate_report(&self.rate_inputs())
    }

    /// Serializes `s` as `payload_bits` bits, least significant first.
    pub fn message_to_bits(&self, s: &[ExtElement]) -> Result<Vec<u64>, ProtocolError> {
        if s.len() != self.config.d {
            return Err(AmdError::Length {
                expected: self.config.d,
                got: s.len(),
            }
            .into());
        }
        let f = self.field();
        let order = u128::from(f.order());
        let mut index = 0u128;
        for e in s.iter().rev() {
            f.check(e)?;
            index = index * order + u128::from(f.to_index(e));
        }
        Ok((0..self.payload_bits).map(|i| (index >> i & 1) as u64).collect())
    }

    /// Inverse of [`Self::message_to_bits`]; `None` for indices beyond q^(rd).
    pub fn bits_to_message(&self, bits: &[u64]) -> Option<Vec<ExtElement>> {
        let f = self.field();
        let mut index = bits
            .iter()
            .take(self.payload_bits)
            .enumerate()
            .fold(0u128, |acc, (i, &b)| acc | u128::from(b & 1) << i);
        let count = payload_count(self.config.q, self.config.r * self.config.d).ok()?;
        if index >= count {
            return None;
        }
        let order = u128::from(f.order());
        Some(
            (0..self.config.d)
                .map(|_| {
                    let e = f.from_index((index % order) as u64);
                    index /= order;
                    e
                })
                .collect(),
        )
    }

    /// A relay plan attacking `stages` with the same coordinate value in every
    /// position of each stage's lattice.
    pub fn uniform_plan(&self, stages: &[Stage], value: u64) -> StagePlan {
        stages
            .iter()
            .map(|&st| {
                let pair = self.stage_pair(st);
                let coords = vec![value % pair.q(); pair.dim()];
                (st, LatticeCoords::new(coords, pair.q()).expect("reduced"))
            })
            .collect()
    }
}

fn payload_count(q: u64, rd: usize) -> Result<u128, ProtocolError> {
    u32::try_from(rd)
        .ok()
        .and_then(|e| u128::from(q).checked_pow(e))
        .ok_or(ProtocolError::PayloadTooLarge { q, rd })
}

/// Inputs of the rate and power accounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    /// Lattice dimension of the seed and key stages.
    pub n: usize,
    pub r: usize,
    pub q: u64,
    pub d: usize,
    /// Message-stage secrecy rate in bits per channel use.
    pub re: f64,
    /// Channel uses per message block.
    pub block: usize,
    /// Node-1 power per channel use in the seed/key, tag and message stages.
    pub p1: f64,
    pub p2: f64,
    pub p: f64,
}

impl RateInputs {
    /// Message block equal to N, unit powers.
    pub fn uniform(n: usize, r: usize, q: u64, d: usize, re: f64) -> Self {
        Self {
            n,
            r,
            q,
            d,
            re,
            block: n,
            p1: 1.0,
            p2: 1.0,
            p: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// Channel uses per direction.
    pub n: usize,
    pub message_blocks: usize,
    /// Secrecy rate over both directions.
    pub rt: f64,
    /// Node-1 average power.
    pub pt: f64,
}

/// `n = 2N + r + ⌈d r log₂q / (N_b R_e)⌉ N_b`, `R_T = d r log₂q / (2n)` and
/// `P_T = (2N P₁ + r P₂ + (n − 2N − r) P) / n`.
pub fn rate_report(inputs: &RateInputs) -> RateReport {
    let payload = inputs.d as f64 * inputs.r as f64 * (inputs.q as f64).log2();
    let blocks = (payload / (inputs.block as f64 * inputs.re) - 1e-9).ceil().max(0.0) as usize;
    let message_uses = blocks * inputs.block;
    let n = 2 * inputs.n + inputs.r + message_uses;
    let energy = inputs.p1 * (2 * inputs.n) as f64 + inputs.p2 * inputs.r as f64 + inputs.p * message_uses as f64;
    RateReport {
        n,
        message_blocks: blocks,
        rt: payload / (2.0 * n as f64),
        pt: energy / n as f64,
    }
}

/// Independent random streams of one trial.
pub struct TrialStreams {
    pub message: ChaCha8Rng,
    pub source: ChaCha8Rng,
    pub destination: ChaCha8Rng,
    pub relay: ChaCha8Rng,
    pub noise_relay: ChaCha8Rng,
    pub noise_dest: ChaCha8Rng,
}

impl TrialStreams {
    pub fn new(global_seed: u64, trial: u64) -> Self {
        let stream = |sub: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(global_seed);
            rng.set_stream(trial.wrapping_mul(8).wrapping_add(sub));
            rng
        };
        Self {
            message: stream(0),
            source: stream(1),
            destination: stream(2),
            relay: stream(3),
            noise_relay: stream(4),
            noise_dest: stream(5),
        }
    }
}

/// How the message of each trial is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum MessageChoice {
    Uniform,
    Fixed(Vec<ExtElement>),
}

/// Per-stage values at both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub x: ExtElement,
    pub x_hat: ExtElement,
    pub k: ExtElement,
    pub k_hat: ExtElement,
    pub h: ExtElement,
    pub u: ExtElement,
    pub u_hat: ExtElement,
    pub h_hat: ExtElement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    pub s: Vec<ExtElement>,
    /// `None` when a message block fell outside the encoder subset.
    pub s_hat: Option<Vec<ExtElement>>,
    pub accepted: bool,
    pub honest_decode_ok: bool,
    pub diagnostics: StageDiagnostics,
}

/// Everything observed in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub trial: u64,
    pub records: Vec<PhaseRecord>,
    pub outcome: ProtocolOutcome,
}

/// The acceptance rule at node 2.
pub fn decide(amd: &AmdParams, s_hat: Option<&[ExtElement]>, x_hat: &ExtElement, h_hat: &ExtElement) -> bool {
    s_hat.is_some_and(|s| amd.verify(s, x_hat, h_hat))
}

impl Transcript {
    /// Recomputes the decision from the recorded values.
    pub fn replay_decision(&self, amd: &AmdParams) -> bool {
        let d = &self.outcome.diagnostics;
        decide(amd, self.outcome.s_hat.as_deref(), &d.x_hat, &d.h_hat)
    }

    pub fn power_audit(&self, cfg: &ChannelConfig) -> PowerAudit {
        power_audit(&self.records, cfg)
    }

    /// Node-1 power per channel use in the seed/key, tag and message stages.
    pub fn stage_powers(&self) -> (f64, f64, f64) {
        let (mut e1, mut u1, mut e2, mut u2, mut e3, mut u3) = (0.0, 0, 0.0, 0, 0.0, 0);
        for rec in &self.records {
            let e: f64 = rec.x1.iter().map(|v| v * v).sum();
            let uses = rec.channel_uses();
            match rec.stage {
                Stage::Seed | Stage::Key => (e1 += e, u1 += uses),
                Stage::Tag => (e2 += e, u2 += uses),
                Stage::Message => (e3 += e, u3 += uses),
            };
        }
        let avg = |e: f64, u: usize| if u == 0 { 0.0 } else { e / u as f64 };
        (avg(e1, u1), avg(e2, u2), avg(e3, u3))
    }
}

struct Run<'a> {
    params: &'a ProtocolParams,
    cfg: &'a ChannelConfig,
    behavior: &'a RelayBehavior,
    message: &'a [ExtElement],
    streams: TrialStreams,
    records: Vec<PhaseRecord>,
    history: Vec<Vec<f64>>,
}

impl Run<'_> {
    /// Runs one block through both phases and returns node 2's decoded coordinates.
    fn block(
        &mut self,
        stage: Stage,
        block: usize,
        x1: Vec<f64>,
        x2: Option<Vec<f64>>,
    ) -> Result<LatticeCoords, ProtocolError> {
        let pair = self.params.stage_pair(stage);
        let silent;
        let x2_signal = match &x2 {
            Some(x) => x.as_slice(),
            None => {
                silent = vec![0.0; x1.len()];
                silent.as_slice()
            }
        };
        let yr = phase1(self.cfg, &x1, x2_signal, &mut self.streams.noise_relay)?;
        let offset = match x2 {
            Some(_) => pair.sum_offset(Dither::Source, Dither::Jammer),
            None => pair.dither(Dither::Source).to_vec(),
        };
        let ctx = RelayContext {
            stage,
            block,
            pair,
            decode_offset: &offset,
            received: &yr,
            history: &self.history,
            message: self.message,
        };
        let out = relay_step(self.behavior, &ctx, self.cfg, &mut self.streams.relay as &mut dyn RngCore)?;
        let y2 = phase2(self.cfg, &out.xr, &mut self.streams.noise_dest)?;
        let decoded = pair.decode_fine_mod_coarse(&y2, pair.dither(Dither::Relay));
        self.history.push(yr.clone());
        self.records.push(PhaseRecord {
            stage,
            block,
            x1,
            x2,
            yr,
            xr: out.xr,
            y2,
            relay_clipped: out.clipped,
        });
        Ok(decoded)
    }

    /// Seed or key extraction: returns the values at node 1 and node 2.
    fn extraction(&mut self, stage: Stage) -> Result<(ExtElement, ExtElement), ProtocolError> {
        let pair = self.params.seed_pair();
        let t1 = pair.random_coords(&mut self.streams.source);
        let t2 = pair.random_coords(&mut self.streams.destination);
        let x1 = pair.codebook_point(&t1, Dither::Source);
        let x2 = pair.codebook_point(&t2, Dither::Jammer);
        let t_hat = self.block(stage, 0, x1, Some(x2))?;
        let pair = self.params.seed_pair();
        let t1_hat = pair.coords_sub(&t_hat, &t2);
        let g = self.params.extractor();
        let field = self.params.field();
        Ok((
            g.extract_element(field, t1.values())?,
            g.extract_element(field, t1_hat.values())?,
        ))
    }

    fn tag(&mut self, u: &ExtElement) -> Result<ExtElement, ProtocolError> {
        let pair = self.params.tag_pair();
        let coords = LatticeCoords::new(u.coeffs().to_vec(), pair.q())?;
        let x1 = pair.codebook_point(&coords, Dither::Source);
        let u_hat = self.block(Stage::Tag, 0, x1, None)?;
        Ok(self.params.field().element(u_hat.into_values())?)
    }

    fn message_stage(&mut self) -> Result<Option<Vec<ExtElement>>, ProtocolError> {
        let params = self.params;
        let encoder = params.encoder();
        let (r0, n0) = (encoder.r0(), encoder.n0());
        let mut bits = params.message_to_bits(self.message)?;
        bits.resize(params.message_blocks() * r0, 0);
        let mut decoded_bits = Vec::with_capacity(bits.len());
        let mut ok = true;
        for (b, chunk) in bits.chunks(r0).enumerate() {
            let pair = params.message_pair();
            let s_prime: Vec<u64> = (0..n0 - r0).map(|_| self.streams.source.random_range(0..2)).collect();
            let t1 = encoder.encode_message(chunk, &s_prime)?;
            let t2 = pair.random_coords(&mut self.streams.destination);
            let x1 = pair.codebook_point(&t1, Dither::Source);
            let x2 = pair.codebook_point(&t2, Dither::Jammer);
            let t_hat = self.block(Stage::Message, b, x1, Some(x2))?;
            let t1_hat = params.message_pair().coords_sub(&t_hat, &t2);
            match encoder.decode_message(&t1_hat) {
                Ok(block_bits) => decoded_bits.extend(block_bits),
                Err(ExtractError::NotInSubset(_)) => {
                    ok = false;
                    decoded_bits.extend(std::iter::repeat_n(0, r0));
                }
                Err(e) => return Err(e.into()),
            }
        }
        if !ok || decoded_bits[params.payload_bits()..].iter().any(|&b| b != 0) {
            return Ok(None);
        }
        Ok(params.bits_to_message(&decoded_bits))
    }
}

/// Executes one protocol instance with the streams of `(global_seed, trial)`.
pub fn run_trial(
    params: &ProtocolParams,
    cfg: &ChannelConfig,
    behavior: &RelayBehavior,
    choice: &MessageChoice,
    global_seed: u64,
    trial: u64,
) -> Result<Transcript, ProtocolError> {
    let mut streams = TrialStreams::new(global_seed, trial);
    let field = params.field().clone();
    let s = match choice {
        MessageChoice::Uniform => (0..params.config.d).map(|_| field.random(&mut streams.message)).collect(),
        MessageChoice::Fixed(s) => s.clone(),
    };
    params.message_to_bits(&s)?;
    let mut run = Run {
        params,
        cfg,
        behavior,
        message: &s,
        streams,
        records: Vec::new(),
        history: Vec::new(),
    };
    let (x, x_hat) = run.extraction(Stage::Seed)?;
    let (k, k_hat) = run.extraction(Stage::Key)?;
    let h = params.amd().tag(&s, &x)?;
    let u = field.add(&h, &k)?;
    let u_hat = run.tag(&u)?;
    let s_hat = run.message_stage()?;
    let h_hat = field.sub(&u_hat, &k_hat)?;
    let accepted = decide(params.amd(), s_hat.as_deref(), &x_hat, &h_hat);
    let honest_decode_ok = s_hat.as_deref() == Some(s.as_slice());
    let records = run.records;
    Ok(Transcript {
        trial,
        records,
        outcome: ProtocolOutcome {
            s,
            s_hat,
            accepted,
            honest_decode_ok,
            diagnostics: StageDiagnostics {
                x,
                x_hat,
                k,
                k_hat,
                h,
                u,
                u_hat,
                h_hat,
            },
        },
    })
}

/// Compact per-trial result kept by the Monte Carlo driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub decoded_correctly: bool,
    pub accepted: bool,
    pub relay_clipped: bool,
    /// Some node's realized power in this trial exceeded P̄.
    pub power_violation: bool,
    /// Realized powers of node 1, node 2 and the relay.
    pub powers: [f64; 3],
}

/// Wilson score interval with z = 3.
pub fn wilson_interval(successes: u64, total: u64) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    let z: f64 = 3.0;
    let n = total as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub behavior: String,
    pub trials: u64,
    pub seed: u64,
    /// Trials with `ŝ ≠ s`.
    pub decode_errors: u64,
    /// Trials with `ŝ = s` that were rejected.
    pub false_rejects: u64,
    /// Trials with `ŝ ≠ s` that were accepted.
    pub wins: u64,
    pub decode_error_rate: f64,
    pub false_reject_rate: f64,
    /// `wins / decode_errors`.
    pub adversary_win_rate: f64,
    pub decode_error_ci: (f64, f64),
    pub false_reject_ci: (f64, f64),
    pub adversary_win_ci: (f64, f64),
    pub win_bound: f64,
    pub clipped_trials: u64,
    /// Trials in which some node's realized power exceeded P̄.
    pub power_violations: u64,
    /// Realized powers of node 1, node 2 and the relay averaged over trials.
    pub mean_powers: [f64; 3],
    pub rate: RateReport,
    #[serde(skip)]
    pub outcomes: Vec<TrialSummary>,
}

impl SimReport {
    pub fn from_outcomes(
        params: &ProtocolParams,
        behavior: String,
        seed: u64,
        outcomes: Vec<TrialSummary>,
    ) -> Self {
        let trials = outcomes.len() as u64;
        let count = |f: fn(&TrialSummary) -> bool| outcomes.iter().filter(|o| f(o)).count() as u64;
        let decode_errors = count(|o| !o.decoded_correctly);
        let correct = trials - decode_errors;
        let false_rejects = count(|o| o.decoded_correctly && !o.accepted);
        let wins = count(|o| !o.decoded_correctly && o.accepted);
        let mut mean_powers = [0.0; 3];
        for o in &outcomes {
            for (m, p) in mean_powers.iter_mut().zip(o.powers) {
                *m += p / trials as f64;
            }
        }
        Self {
            behavior,
            trials,
            seed,
            decode_errors,
            false_rejects,
            wins,
            decode_error_rate: ratio(decode_errors, trials),
            false_reject_rate: ratio(false_rejects, correct),
            adversary_win_rate: ratio(wins, decode_errors),
            decode_error_ci: wilson_interval(decode_errors, trials),
            false_reject_ci: wilson_interval(false_rejects, correct),
            adversary_win_ci: wilson_interval(wins, decode_errors),
            win_bound: params.amd().win_bound(),
            clipped_trials: count(|o| o.relay_clipped),
            power_violations: count(|o| o.power_violation),
            mean_powers,
            rate: params.rate_report(),
            outcomes,
        }
    }
}

/// Runs `trials` independent trials on `workers` threads (0 = all cores).
/// Results depend only on `seed`, never on the worker count.
pub fn monte_carlo(
    params: &ProtocolParams,
    cfg: &ChannelConfig,
    behavior: &RelayBehavior,
    choice: &MessageChoice,
    trials: u64,
    workers: usize,
    seed: u64,
) -> Result<SimReport, ProtocolError> {
    if trials == 0 {
        return Err(ProtocolError::Config("trials must be at least 1".into()));
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ProtocolError::Config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Result<Vec<TrialSummary>, ProtocolError> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let tr = run_trial(params, cfg, behavior, choice, seed, t)?;
                let audit = tr.power_audit(cfg);
                Ok(TrialSummary {
                    decoded_correctly: tr.outcome.honest_decode_ok,
                    accepted: tr.outcome.accepted,
                    relay_clipped: tr.records.iter().any(|r| r.relay_clipped),
                    power_violation: !audit.violations().is_empty(),
                    powers: [audit.node1, audit.node2, audit.relay],
                })
            })
            .collect()
    });
    Ok(SimReport::from_outcomes(params, behavior.name(), seed, outcomes?))
}

/// Serializable relay behaviours for configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BehaviorSpec {
    Honest,
    /// Fixed codeword in the listed stages.
    Substitute {
        #[serde(default = "all_stages")]
        stages: Vec<Stage>,
        /// Explicit coordinates per stage; otherwise every coordinate is `value`.
        #[serde(default)]
        coords: BTreeMap<Stage, Vec<u64>>,
        #[serde(default = "one")]
        value: u64,
    },
    /// Fine-lattice shift of the decoded codeword in the listed stages.
    Offset {
        #[serde(default = "all_stages")]
        stages: Vec<Stage>,
        #[serde(default)]
        coords: BTreeMap<Stage, Vec<u64>>,
        #[serde(default = "one")]
        value: u64,
    },
    Garble,
}

fn all_stages() -> Vec<Stage> {
    Stage::ALL.to_vec()
}

fn one() -> u64 {
    1
}

impl BehaviorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            BehaviorSpec::Honest => "honest",
            BehaviorSpec::Substitute { .. } => "substitute",
            BehaviorSpec::Offset { .. } => "offset",
            BehaviorSpec::Garble => "garble",
        }
    }

    /// Name plus the attacked stages and value when they differ from the defaults,
    /// e.g. `offset[message]` or `substitute:2`.
    pub fn label(&self) -> String {
        match self {
            BehaviorSpec::Substitute { stages, coords, value } | BehaviorSpec::Offset { stages, coords, value } => {
                let mut label = self.name().to_string();
                if stages.as_slice() != Stage::ALL {
                    let names: Vec<String> = stages.iter().map(Stage::to_string).collect();
                    label += &format!("[{}]", names.join("+"));
                }
                if *value != 1 {
                    label += &format!(":{value}");
                }
                if !coords.is_empty() {
                    label += ":custom";
                }
                label
            }
            _ => self.name().to_string(),
        }
    }

    pub fn build(&self, params: &ProtocolParams) -> Result<RelayBehavior, ProtocolError> {
        let plan = |stages: &[Stage], coords: &BTreeMap<Stage, Vec<u64>>, value: u64| {
            let mut plan = params.uniform_plan(stages, value);
            for (&stage, c) in coords {
                if !stages.contains(&stage) {
                    continue;
                }
                let pair = params.stage_pair(stage);
                if c.len() != pair.dim() {
                    return Err(ProtocolError::Config(format!(
                        "{stage} stage coordinates need {} entries, got {}",
                        pair.dim(),
                        c.len()
                    )));
                }
                plan.insert(stage, LatticeCoords::new(c.clone(), pair.q())?);
            }
            Ok(plan)
        };
        Ok(match self {
            BehaviorSpec::Honest => RelayBehavior::Honest,
            BehaviorSpec::Substitute { stages, coords, value } => {
                RelayBehavior::SubstituteLattice(plan(stages, coords, *value)?)
            }
            BehaviorSpec::Offset { stages, coords, value } => {
                RelayBehavior::AdditiveLatticeOffset(plan(stages, coords, *value)?)
            }
            BehaviorSpec::Garble => RelayBehavior::RandomGarble,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::channel::RelayStrategy;

    fn defaults() -> (ProtocolParams, ChannelConfig) {
        let cfg = ChannelConfig::default();
        (ProtocolParams::new(ProtocolConfig::default(), cfg.power_limit).unwrap(), cfg)
    }

    #[test]
    fn default_parameters() {
        let (p, _) = defaults();
        assert_eq!(p.payload_bits(), 10);
        assert_eq!(p.encoder().r0(), 4);
        assert_eq!(p.encoder().n0(), 9);
        assert_eq!(p.message_blocks(), 3);
        let rep = p.rate_report();
        assert_eq!(rep.n, 2 * 4 + 2 + 3 * 4);
        assert_eq!(rep.message_blocks, p.message_blocks());
        assert!((p.message_power() - 7.125).abs() < 1e-12);
        let measured = subset_power(p.encoder(), p.message_pair());
        assert!((measured - p.message_power()).abs() < 1e-9);
    }

    #[test]
    fn rate_examples() {
        let rep = rate_report(&RateInputs::uniform(100, 20, 11, 4, 1.0));
        assert_eq!(rep.n, 520);
        assert_eq!(rep.message_blocks, 3);
        let payload = 80.0 * 11f64.log2();
        assert!((rep.rt - payload / 1040.0).abs() < 1e-12);
        assert!((rep.rt - 0.266).abs() < 1e-3);
        assert!((rep.pt - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = ProtocolConfig {
            d: 3,
            ..ProtocolConfig::default()
        };
        assert!(matches!(
            ProtocolParams::new(bad, 7.5),
            Err(ProtocolError::Amd(AmdError::DivisibleLength { .. }))
        ));
        let bad = ProtocolConfig {
            r: 3,
            ..ProtocolConfig::default()
        };
        assert!(matches!(ProtocolParams::new(bad, 7.5), Err(ProtocolError::Config(_))));
        let bad = ProtocolConfig {
            extractor: Some(vec![vec![1, 0, 0, 0], vec![2, 0, 0, 0]]),
            ..ProtocolConfig::default()
        };
        assert!(matches!(
            ProtocolParams::new(bad, 7.5),
            Err(ProtocolError::Extract(ExtractError::RankDeficient { .. }))
        ));
    }

    #[test]
    fn message_bits_round_trip() {
        let (p, _) = defaults();
        let f = p.field().clone();
        for a in f.elements() {
            for b in f.elements() {
                let s = vec![a.clone(), b];
                let bits = p.message_to_bits(&s).unwrap();
                assert_eq!(bits.len(), 10);
                assert_eq!(p.bits_to_message(&bits).unwrap(), s);
            }
        }
        assert_eq!(p.bits_to_message(&[1; 10]), None);
    }

    #[test]
    fn honest_noiseless_exhaustive_tiny() {
        let cfg = ChannelConfig::default();
        let config = ProtocolConfig {
            q: 5,
            r: 1,
            d: 1,
            n: 2,
            ..ProtocolConfig::default()
        };
        let p = ProtocolParams::new(config, cfg.power_limit).unwrap();
        for s in p.field().elements() {
            for trial in 0..20 {
                let tr = run_trial(&p, &cfg, &RelayBehavior::Honest, &MessageChoice::Fixed(vec![s.clone()]), 9, trial)
                    .unwrap();
                let o = &tr.outcome;
                assert!(o.accepted && o.honest_decode_ok);
                let dg = &o.diagnostics;
                assert_eq!(dg.x, dg.x_hat);
                assert_eq!(dg.k, dg.k_hat);
                assert_eq!(dg.u, dg.u_hat);
                assert_eq!(dg.h, dg.h_hat);
                assert_eq!(p.field().add(&dg.h, &dg.k).unwrap(), dg.u);
            }
        }
    }

    #[test]
    fn honest_monte_carlo_is_clean() {
        let (p, cfg) = defaults();
        let rep = monte_carlo(&p, &cfg, &RelayBehavior::Honest, &MessageChoice::Uniform, 300, 2, 1).unwrap();
        assert_eq!(rep.decode_errors, 0);
        assert_eq!(rep.false_rejects, 0);
        assert_eq!(rep.wins, 0);
        assert!(rep.mean_powers.iter().all(|&m| m > 0.0 && m <= cfg.power_limit), "{:?}", rep.mean_powers);
        assert!((rep.mean_powers[0] - rep.rate.pt).abs() < 0.2);
    }

    #[test]
    fn seed_substitution_algebra() {
        let (p, cfg) = defaults();
        let behavior = RelayBehavior::SubstituteLattice(p.uniform_plan(&[Stage::Seed], 3));
        for trial in 0..50 {
            let tr = run_trial(&p, &cfg, &behavior, &MessageChoice::Uniform, 4, trial).unwrap();
            // replay the jamming draw: t2 is the first destination draw
            let mut streams = TrialStreams::new(4, trial);
            let t2 = p.seed_pair().random_coords(&mut streams.destination);
            let t3 = LatticeCoords::new(vec![3; 4], 5).unwrap();
            let expected = p
                .extractor()
                .extract_element(p.field(), p.seed_pair().coords_sub(&t3, &t2).values())
                .unwrap();
            assert_eq!(tr.outcome.diagnostics.x_hat, expected);
            assert_eq!(tr.outcome.diagnostics.k, tr.outcome.diagnostics.k_hat);
        }
    }

    #[test]
    fn tag_offset_shifts_u() {
        let (p, cfg) = defaults();
        let delta = LatticeCoords::new(vec![2, 1], 5).unwrap();
        let behavior = RelayBehavior::AdditiveLatticeOffset(StagePlan::from([(Stage::Tag, delta.clone())]));
        let f = p.field();
        let shift = f.element(delta.values().to_vec()).unwrap();
        for trial in 0..50 {
            let tr = run_trial(&p, &cfg, &behavior, &MessageChoice::Uniform, 2, trial).unwrap();
            let dg = &tr.outcome.diagnostics;
            assert_eq!(dg.u_hat, f.add(&dg.u, &shift).unwrap());
            assert_eq!(dg.h_hat, f.add(&dg.h, &shift).unwrap());
            // only the tag moved, so the hash rule fails
            assert!(tr.outcome.honest_decode_ok && !tr.outcome.accepted);
            assert!(tr.replay_decision(p.amd()) == tr.outcome.accepted);
        }
    }

    #[test]
    fn message_substitution_ignores_s() {
        let (p, cfg) = defaults();
        let behavior = RelayBehavior::SubstituteLattice(p.uniform_plan(&[Stage::Message], 2));
        let f = p.field();
        let a = MessageChoice::Fixed(vec![f.from_index(0), f.from_index(0)]);
        let b = MessageChoice::Fixed(vec![f.from_index(7), f.from_index(24)]);
        for trial in 0..30 {
            let ta = run_trial(&p, &cfg, &behavior, &a, 8, trial).unwrap();
            let tb = run_trial(&p, &cfg, &behavior, &b, 8, trial).unwrap();
            assert_eq!(ta.outcome.s_hat, tb.outcome.s_hat);
        }
    }

    #[test]
    fn power_audit_matches_formula() {
        let (p, cfg) = defaults();
        for trial in 0..20 {
            let tr = run_trial(&p, &cfg, &RelayBehavior::Honest, &MessageChoice::Uniform, 3, trial).unwrap();
            let audit = tr.power_audit(&cfg);
            let (p1, p2, pm) = tr.stage_powers();
            let inputs = RateInputs {
                p1,
                p2,
                p: pm,
                ..p.rate_inputs()
            };
            let rep = rate_report(&inputs);
            assert_eq!(audit.channel_uses, rep.n);
            assert!((audit.node1 - rep.pt).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_across_workers() {
        let (p, cfg) = defaults();
        let b = RelayBehavior::RandomGarble;
        let one = monte_carlo(&p, &cfg, &b, &MessageChoice::Uniform, 200, 1, 42).unwrap();
        let four = monte_carlo(&p, &cfg, &b, &MessageChoice::Uniform, 200, 4, 42).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.outcomes, four.outcomes);
    }

    struct Echo;
    impl RelayStrategy for Echo {
        fn name(&self) -> &str {
            "echo"
        }
        fn forward(&self, ctx: &RelayContext<'_>, _rng: &mut dyn RngCore) -> Vec<f64> {
            ctx.received.iter().map(|v| 3.0 * v).collect()
        }
    }

    #[test]
    fn custom_strategy_runs() {
        let (p, cfg) = defaults();
        let b = RelayBehavior::Custom(Arc::new(Echo));
        let rep = monte_carlo(&p, &cfg, &b, &MessageChoice::Uniform, 50, 1, 5).unwrap();
        assert_eq!(rep.behavior, "echo");
        assert!(rep.clipped_trials > 0);
    }

    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn behavior_spec_parses() {
        let (p, _) = defaults();
        let spec: BehaviorSpec = serde_json::from_str(r#"{"kind":"offset","stages":["tag"],"coords":{"tag":[1,2]}}"#).unwrap();
        match spec.build(&p).unwrap() {
            RelayBehavior::AdditiveLatticeOffset(plan) => {
                assert_eq!(plan.len(), 1);
                assert_eq!(plan[&Stage::Tag].values(), &[1, 2]);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(spec.label(), "offset[tag]:custom");
        let spec: BehaviorSpec = serde_json::from_str(r#"{"kind":"substitute"}"#).unwrap();
        assert_eq!(spec.label(), "substitute");
        assert!(matches!(spec.build(&p).unwrap(), RelayBehavior::SubstituteLattice(plan) if plan.len() == 4));
        assert!(serde_json::from_str::<BehaviorSpec>(r#"{"kind":"bogus"}"#).is_err());
        let bad: BehaviorSpec = serde_json::from_str(r#"{"kind":"offset","coords":{"seed":[1]}}"#).unwrap();
        assert!(bad.build(&p).is_err());
    }

    #[test]
    fn seeds_are_uniform() {
        let (p, cfg) = defaults();
        let order = p.field().order() as usize;
        let trials = 10_000;
        let mut counts = vec![0u64; order];
        for t in 0..trials {
            let tr = run_trial(&p, &cfg, &RelayBehavior::Honest, &MessageChoice::Uniform, 6, t).unwrap();
            counts[p.field().to_index(&tr.outcome.diagnostics.x_hat) as usize] += 1;
        }
        let expected = trials as f64 / order as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 24 degrees of freedom, upper 0.1% point
        assert!(chi2 < 51.18, "chi-square {chi2}");
    }

    #[test]
    fn gaussian_mode_with_tiny_noise_decodes() {
        let cfg = ChannelConfig {
            noiseless: false,
            noise_var_relay: 1e-8,
            noise_var_dest: 1e-8,
            ..ChannelConfig::default()
        };
        let p = ProtocolParams::new(ProtocolConfig::default(), cfg.power_limit).unwrap();
        let rep = monte_carlo(&p, &cfg, &RelayBehavior::Honest, &MessageChoice::Uniform, 200, 1, 3).unwrap();
        assert_eq!((rep.decode_errors, rep.false_rejects), (0, 0));
        let noisy = ChannelConfig {
            noiseless: false,
            ..ChannelConfig::default()
        };
        let rep = monte_carlo(&p, &noisy, &RelayBehavior::Honest, &MessageChoice::Uniform, 200, 1, 3).unwrap();
        assert!(rep.decode_errors > 0);
        assert!((0.0..=1.0).contains(&rep.adversary_win_rate));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn acceptance_implies_hash_rule(seed in 0u64..1000, trial in 0u64..1000, stage in 0usize..4, value in 1u64..5) {
            let (p, cfg) = defaults();
            let behavior = RelayBehavior::AdditiveLatticeOffset(p.uniform_plan(&[Stage::ALL[stage]], value));
            let tr = run_trial(&p, &cfg, &behavior, &MessageChoice::Uniform, seed, trial).unwrap();
            let o = &tr.outcome;
            if o.accepted {
                let s_hat = o.s_hat.as_ref().unwrap();
                proptest::prop_assert!(p.amd().verify(s_hat, &o.diagnostics.x_hat, &o.diagnostics.h_hat));
            }
            proptest::prop_assert_eq!(tr.replay_decision(p.amd()), o.accepted);
            let honest = run_trial(&p, &cfg, &RelayBehavior::Honest, &MessageChoice::Uniform, seed, trial).unwrap();
            proptest::prop_assert!(honest.outcome.accepted && honest.outcome.honest_decode_ok);
        }

        #[test]
        fn message_bits_round_trip_random(indices in proptest::collection::vec(0u64..25, 2)) {
            let (p, _) = defaults();
            let s: Vec<ExtElement> = indices.iter().map(|&i| p.field().from_index(i)).collect();
            let bits = p.message_to_bits(&s).unwrap();
            proptest::prop_assert_eq!(p.bits_to_message(&bits), Some(s));
        }
    }
}

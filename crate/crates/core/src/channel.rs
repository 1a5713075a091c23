//! Half-duplex Gaussian two-hop channel with unit gains.
//!
//! Phase 1: `Y_r = X_1 + X_2 + Z_r` at the relay. Phase 2: `Y_2 = X_r + Z_R`
//! at node 2. In noiseless mode both noises are omitted and the relay sees
//! the exact sum of the two lattice signals.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::ExtElement;
use crate::lattice::{Dither, LatticeCoords, NestedLatticePair};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("signal length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("invalid channel configuration: {0}")]
    Config(String),
    #[error("relay behaviour gave {got} coordinates for a {expected}-dimensional {stage} stage")]
    PlanDimension {
        stage: Stage,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// Per-node average power limit P̄.
    pub power_limit: f64,
    pub noise_var_relay: f64,
    pub noise_var_dest: f64,
    pub noiseless: bool,
    /// Scale custom relay outputs down to P̄ when they exceed it.
    pub clip_relay_power: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            power_limit: 7.5,
            noise_var_relay: 1.0,
            noise_var_dest: 1.0,
            noiseless: true,
            clip_relay_power: true,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.power_limit > 0.0 && self.power_limit.is_finite()) {
            return Err(ChannelError::Config(format!(
                "power limit must be positive, got {}",
                self.power_limit
            )));
        }
        for (name, v) in [
            ("relay noise variance", self.noise_var_relay),
            ("destination noise variance", self.noise_var_dest),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ChannelError::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn add_noise<R: Rng + ?Sized>(x: &mut [f64], variance: f64, noiseless: bool, rng: &mut R) {
    if noiseless || variance == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, variance.sqrt()).expect("variance validated");
    for v in x.iter_mut() {
        *v += normal.sample(rng);
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), ChannelError> {
    if expected != got {
        return Err(ChannelError::Length { expected, got });
    }
    Ok(())
}

/// Multiple-access phase: `Y_r = X_1 + X_2 + Z_r`.
pub fn phase1<R: Rng + ?Sized>(
    cfg: &ChannelConfig,
    x1: &[f64],
    x2: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>, ChannelError> {
    check_len(x1.len(), x2.len())?;
    let mut y: Vec<f64> = x1.iter().zip(x2).map(|(a, b)| a + b).collect();
    add_noise(&mut y, cfg.noise_var_relay, cfg.noiseless, rng);
    Ok(y)
}

/// Broadcast phase towards node 2: `Y_2 = X_r + Z_R`.
pub fn phase2<R: Rng + ?Sized>(cfg: &ChannelConfig, xr: &[f64], rng: &mut R) -> Result<Vec<f64>, ChannelError> {
    let mut y = xr.to_vec();
    add_noise(&mut y, cfg.noise_var_dest, cfg.noiseless, rng);
    Ok(y)
}

/// The four transmission stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Extraction of the AMD seed x.
    Seed,
    /// Extraction of the one-time-pad key k.
    Key,
    /// Transfer of the padded tag u = h + k, node 2 silent.
    Tag,
    /// Blocks of the message s.
    Message,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Seed, Stage::Key, Stage::Tag, Stage::Message];
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Seed => "seed",
            Stage::Key => "key",
            Stage::Tag => "tag",
            Stage::Message => "message",
        };
        f.write_str(s)
    }
}

/// Everything the relay may base its output on: its stage position, the
/// public lattice description, what it has received, and the message it is
/// relaying. Destination noise and node-2 internals are not reachable.
pub struct RelayContext<'a> {
    pub stage: Stage,
    /// Block index within the stage (message stage only; otherwise 0).
    pub block: usize,
    pub pair: &'a NestedLatticePair,
    /// Dither offset of the signal superposition received in this block.
    pub decode_offset: &'a [f64],
    pub received: &'a [f64],
    /// Signals received in earlier blocks of the same run.
    pub history: &'a [Vec<f64>],
    pub message: &'a [ExtElement],
}

impl RelayContext<'_> {
    /// The codeword an honest relay would decode from `received`.
    pub fn honest_decode(&self) -> LatticeCoords {
        self.pair.decode_fine_mod_coarse(self.received, self.decode_offset)
    }
}

/// A user-supplied relaying function `X_r = f(M_r, Y_r history, W)`.
/// `rng` is the relay's private randomness.
pub trait RelayStrategy: Send + Sync {
    fn name(&self) -> &str;
    fn forward(&self, ctx: &RelayContext<'_>, rng: &mut dyn RngCore) -> Vec<f64>;
}

/// Per-stage coordinates for the lattice attacks; stages without an entry
/// are relayed honestly.
pub type StagePlan = BTreeMap<Stage, LatticeCoords>;

#[derive(Clone)]
pub enum RelayBehavior {
    Honest,
    /// Ignore the received signal and send a fixed codeword.
    SubstituteLattice(StagePlan),
    /// Relay the decoded codeword shifted by a fine-lattice offset.
    AdditiveLatticeOffset(StagePlan),
    /// Send a fresh uniform codeword in every block.
    RandomGarble,
    Custom(Arc<dyn RelayStrategy>),
}

impl fmt::Debug for RelayBehavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelayBehavior::Honest => f.write_str("Honest"),
            RelayBehavior::SubstituteLattice(p) => f.debug_tuple("SubstituteLattice").field(p).finish(),
            RelayBehavior::AdditiveLatticeOffset(p) => f.debug_tuple("AdditiveLatticeOffset").field(p).finish(),
            RelayBehavior::RandomGarble => f.write_str("RandomGarble"),
            RelayBehavior::Custom(s) => write!(f, "Custom({})", s.name()),
        }
    }
}

impl RelayBehavior {
    pub fn name(&self) -> String {
        match self {
            RelayBehavior::Honest => "honest".into(),
            RelayBehavior::SubstituteLattice(_) => "substitute".into(),
            RelayBehavior::AdditiveLatticeOffset(_) => "offset".into(),
            RelayBehavior::RandomGarble => "garble".into(),
            RelayBehavior::Custom(s) => s.name().to_string(),
        }
    }
}

/// The relay's transmission for one block.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayOutput {
    pub xr: Vec<f64>,
    pub clipped: bool,
}

fn plan_coords<'a>(plan: &'a StagePlan, ctx: &RelayContext<'_>) -> Result<Option<&'a LatticeCoords>, ChannelError> {
    match plan.get(&ctx.stage) {
        Some(c) if c.dim() != ctx.pair.dim() => Err(ChannelError::PlanDimension {
            stage: ctx.stage,
            expected: ctx.pair.dim(),
            got: c.dim(),
        }),
        other => Ok(other),
    }
}

/// Computes `X_r` for one block.
pub fn relay_step(
    behavior: &RelayBehavior,
    ctx: &RelayContext<'_>,
    cfg: &ChannelConfig,
    rng: &mut dyn RngCore,
) -> Result<RelayOutput, ChannelError> {
    let pair = ctx.pair;
    let honest = || pair.codebook_point(&ctx.honest_decode(), Dither::Relay);
    let xr = match behavior {
        RelayBehavior::Honest => honest(),
        RelayBehavior::SubstituteLattice(plan) => match plan_coords(plan, ctx)? {
            Some(c) => pair.codebook_point(c, Dither::Relay),
            None => honest(),
        },
        RelayBehavior::AdditiveLatticeOffset(plan) => match plan_coords(plan, ctx)? {
            Some(delta) => {
                let shifted: Vec<f64> = honest()
                    .iter()
                    .zip(delta.values())
                    .map(|(x, &c)| x + pair.alpha() * c as f64)
                    .collect();
                pair.mod_coarse(&shifted)
            }
            None => honest(),
        },
        RelayBehavior::RandomGarble => pair.codebook_point(&pair.random_coords(rng), Dither::Relay),
        RelayBehavior::Custom(strategy) => {
            let mut xr = strategy.forward(ctx, rng);
            check_len(pair.dim(), xr.len())?;
            let power = xr.iter().map(|v| v * v).sum::<f64>() / xr.len() as f64;
            if cfg.clip_relay_power && power > cfg.power_limit {
                let scale = (cfg.power_limit / power).sqrt();
                xr.iter_mut().for_each(|v| *v *= scale);
                log::info!(
                    "relay strategy '{}' clipped from power {power:.4} to {} in {} stage block {}",
                    strategy.name(),
                    cfg.power_limit,
                    ctx.stage,
                    ctx.block
                );
                return Ok(RelayOutput { xr, clipped: true });
            }
            xr
        }
    };
    Ok(RelayOutput { xr, clipped: false })
}

/// Signals of one block (both phases). A silent node has `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub stage: Stage,
    pub block: usize,
    pub x1: Vec<f64>,
    pub x2: Option<Vec<f64>>,
    pub yr: Vec<f64>,
    pub xr: Vec<f64>,
    pub y2: Vec<f64>,
    pub relay_clipped: bool,
}

impl PhaseRecord {
    pub fn channel_uses(&self) -> usize {
        self.x1.len()
    }
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Average power per node over the n channel uses of its direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerAudit {
    /// Channel uses per direction.
    pub channel_uses: usize,
    pub node1: f64,
    /// Node 2's silent uses count as zero.
    pub node2: f64,
    pub relay: f64,
    pub limit: f64,
}

impl PowerAudit {
    pub fn violations(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (name, p) in [("node1", self.node1), ("node2", self.node2), ("relay", self.relay)] {
            if p > self.limit {
                out.push(name);
            }
        }
        out
    }
}

pub fn power_audit(records: &[PhaseRecord], cfg: &ChannelConfig) -> PowerAudit {
    let uses: usize = records.iter().map(PhaseRecord::channel_uses).sum();
    let (mut e1, mut e2, mut er) = (0.0, 0.0, 0.0);
    for rec in records {
        e1 += energy(&rec.x1);
        e2 += rec.x2.as_deref().map(energy).unwrap_or(0.0);
        er += energy(&rec.xr);
    }
    let avg = |e: f64| if uses == 0 { 0.0 } else { e / uses as f64 };
    PowerAudit {
        channel_uses: uses,
        node1: avg(e1),
        node2: avg(e2),
        relay: avg(er),
        limit: cfg.power_limit,
    }
}

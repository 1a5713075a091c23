//! Run configuration: a JSON file with every key optional, overridden by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::amd::AmdParams;
use crate::channel::{ChannelConfig, Stage};
use crate::gf::ExtField;
use crate::oracle::SizeGuards;
use crate::protocol::{BehaviorSpec, MessageChoice, ProtocolConfig, ProtocolParams};

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core. Never affects results.
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub channel: ChannelConfig,
    pub protocol: ProtocolConfig,
    pub simulate: SimulateConfig,
    pub verify: VerifyConfig,
    pub scan: ScanConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: 0,
            out: None,
            format: OutputFormat::Csv,
            channel: ChannelConfig::default(),
            protocol: ProtocolConfig::default(),
            simulate: SimulateConfig::default(),
            verify: VerifyConfig::default(),
            scan: ScanConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub trials: u64,
    pub behaviors: Vec<BehaviorSpec>,
    /// Fixed messages as field indices, one row per (behaviour, message);
    /// when absent each trial draws a uniform message.
    pub messages: Option<Vec<Vec<u64>>>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let all = Stage::ALL.to_vec();
        Self {
            trials: 10_000,
            behaviors: vec![
                BehaviorSpec::Honest,
                BehaviorSpec::Substitute {
                    stages: all.clone(),
                    coords: Default::default(),
                    value: 1,
                },
                BehaviorSpec::Offset {
                    stages: all,
                    coords: Default::default(),
                    value: 1,
                },
            ],
            messages: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    AmdDetectionBound,
    LatticeFieldIsomorphism,
    SumRepresentation,
    FullRankFraction,
    UniversalHashFamily,
    SeedUniformity,
    LeftoverHash,
    LeakageBudget,
    PinskerInequality,
}

impl CheckKind {
    pub const ALL: [CheckKind; 9] = [
        CheckKind::AmdDetectionBound,
        CheckKind::LatticeFieldIsomorphism,
        CheckKind::SumRepresentation,
        CheckKind::FullRankFraction,
        CheckKind::UniversalHashFamily,
        CheckKind::SeedUniformity,
        CheckKind::LeftoverHash,
        CheckKind::LeakageBudget,
        CheckKind::PinskerInequality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::AmdDetectionBound => "amd-detection-bound",
            CheckKind::LatticeFieldIsomorphism => "lattice-field-isomorphism",
            CheckKind::SumRepresentation => "sum-representation",
            CheckKind::FullRankFraction => "full-rank-fraction",
            CheckKind::UniversalHashFamily => "universal-hash-family",
            CheckKind::SeedUniformity => "seed-uniformity",
            CheckKind::LeftoverHash => "leftover-hash",
            CheckKind::LeakageBudget => "leakage-budget",
            CheckKind::PinskerInequality => "pinsker-inequality",
        }
    }
}

/// `(q, r, d)` of an AMD census.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmdCase {
    pub q: u64,
    pub r: usize,
    pub d: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeakageCase {
    pub q: u64,
    pub n: usize,
    pub r: usize,
    pub smoothing: f64,
    pub epsilon_prime: f64,
    pub delta: f64,
}

impl Default for LeakageCase {
    fn default() -> Self {
        Self {
            q: 11,
            n: 2,
            r: 1,
            smoothing: 6.0,
            epsilon_prime: 0.1,
            delta: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub checks: Vec<CheckKind>,
    pub guards: SizeGuards,
    pub amd_cases: Vec<AmdCase>,
    pub leakage: LeakageCase,
    pub pinsker_joints: usize,
    /// Adds a rank-deficient map to the seed-uniformity census.
    pub inject_rank_deficient: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            checks: CheckKind::ALL.to_vec(),
            guards: SizeGuards::default(),
            amd_cases: vec![AmdCase { q: 5, r: 1, d: 1 }, AmdCase { q: 5, r: 2, d: 2 }],
            leakage: LeakageCase::default(),
            pinsker_joints: 1000,
            inject_rank_deficient: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScanKind {
    /// AMD message length; rate columns.
    #[default]
    D,
    /// Seed length; win bound and rate columns.
    R,
    /// Lattice dimension; exact leakage of the best sampled extractor.
    N,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub kind: ScanKind,
    pub values: Vec<usize>,
    /// Extractor candidates sampled per point of an N scan.
    pub candidates: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            kind: ScanKind::D,
            values: (1..=64).collect(),
            candidates: 32,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(f) = o.format {
            self.format = f;
        }
        self
    }

    /// Protocol instance described by this configuration.
    pub fn protocol_params(&self) -> Result<ProtocolParams, CliError> {
        self.channel.validate().map_err(|e| CliError::Config(e.to_string()))?;
        ProtocolParams::new(self.protocol.clone(), self.channel.power_limit).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn message_choices(&self, params: &ProtocolParams) -> Result<Vec<MessageChoice>, CliError> {
        let Some(messages) = &self.simulate.messages else {
            return Ok(vec![MessageChoice::Uniform]);
        };
        let f = params.field();
        messages
            .iter()
            .map(|m| {
                if m.len() != params.config().d || m.iter().any(|&i| i >= f.order()) {
                    return Err(CliError::Config(format!(
                        "message {m:?} must have {} indices below {}",
                        params.config().d,
                        f.order()
                    )));
                }
                Ok(MessageChoice::Fixed(m.iter().map(|&i| f.from_index(i)).collect()))
            })
            .collect()
    }

    pub fn validate_simulate(&self) -> Result<ProtocolParams, CliError> {
        let params = self.protocol_params()?;
        if self.simulate.trials == 0 {
            return Err(CliError::Config("simulate.trials must be at least 1".into()));
        }
        if self.simulate.behaviors.is_empty() {
            return Err(CliError::Config("simulate.behaviors is empty".into()));
        }
        for b in &self.simulate.behaviors {
            b.build(&params).map_err(|e| CliError::Config(e.to_string()))?;
        }
        self.message_choices(&params)?;
        Ok(params)
    }

    pub fn validate_verify(&self) -> Result<(), CliError> {
        self.protocol_params()?;
        for c in &self.verify.amd_cases {
            let field = ExtField::new(c.q, c.r).map_err(|e| CliError::Config(e.to_string()))?;
            AmdParams::new(field, c.d).map_err(|e| CliError::Config(format!("AMD case {c:?}: {e}")))?;
        }
        let l = &self.verify.leakage;
        if l.n == 0 || l.r == 0 || l.r > l.n {
            return Err(CliError::Config(format!("leakage case needs 1 ≤ r ≤ N, got r = {}, N = {}", l.r, l.n)));
        }
        Ok(())
    }

    pub fn validate_scan(&self) -> Result<(), CliError> {
        if self.scan.kind == ScanKind::N {
            crate::gf::PrimeField::new(self.protocol.q).map_err(|e| CliError::Config(e.to_string()))?;
            if self.protocol.r == 0 {
                return Err(CliError::Config("protocol.r must be positive".into()));
            }
        } else {
            self.protocol_params()?;
        }
        if self.scan.values.is_empty() {
            return Err(CliError::Config("scan.values is empty".into()));
        }
        if self.scan.values.contains(&0) {
            return Err(CliError::Config("scan.values must be positive".into()));
        }
        if self.scan.kind == ScanKind::N && self.scan.candidates == 0 {
            return Err(CliError::Config("scan.candidates must be positive".into()));
        }
        Ok(())
    }

    /// Everything that determines the numbers: excludes workers and output settings.
    pub fn provenance(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "channel": self.channel,
            "protocol": self.protocol,
            "simulate": self.simulate,
            "verify": self.verify,
            "scan": self.scan,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"sead": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"protocol": {"qq": 3}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"channel": {"noise": 3}}"#).is_err());
    }

    #[test]
    fn overrides_win() {
        let c = RunConfig::from_json(r#"{"seed": 3, "workers": 2}"#).unwrap().apply(&Overrides {
            seed: Some(9),
            format: Some(OutputFormat::Json),
            ..Overrides::default()
        });
        assert_eq!((c.seed, c.workers, c.format), (9, 2, OutputFormat::Json));
    }

    #[test]
    fn divisible_length_is_config_error() {
        let c = RunConfig::from_json(r#"{"protocol": {"d": 3}}"#).unwrap();
        assert!(matches!(c.validate_verify(), Err(CliError::Config(_))));
        let c = RunConfig::from_json(r#"{"verify": {"amd_cases": [{"q": 5, "r": 1, "d": 3}]}}"#).unwrap();
        assert!(matches!(c.validate_verify(), Err(CliError::Config(_))));
    }

    #[test]
    fn round_trips_through_json() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
    }
}

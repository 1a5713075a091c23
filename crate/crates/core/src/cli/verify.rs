//! `verify`: exhaustive oracle censuses with one pass/fail record per check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::amd::AmdParams;
use crate::extract::{leakage_budget, ExtractorParams};
use crate::gf::{ExtField, FieldMatrix, PrimeField};
use crate::lattice::NestedLatticePair;
use crate::oracle::{
    exact_amd_win_census, full_rank_census, full_rank_matrices, isomorphism_census, leftover_census, pinsker_check,
    representation_census, uniformity_census, universal_hash_census, CensusOutcome, JointDistribution,
    LeakageOracle, OracleError, SizeGuards,
};

use super::config::{CheckKind, RunConfig};
use super::{render_csv, render_json, CliError, CommandOutput, OutputFormat, EXIT_FAILURE, EXIT_OK};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub description: String,
    pub passed: bool,
    pub cases: u64,
    pub detail: String,
    pub counterexample: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<CheckRecord>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    check: &'a str,
    passed: bool,
    cases: u64,
    detail: &'a str,
    counterexample: &'a str,
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

struct Builder {
    kind: CheckKind,
    description: &'static str,
    cases: u64,
    details: Vec<String>,
    counterexample: Option<String>,
    failed: bool,
}

impl Builder {
    fn new(kind: CheckKind, description: &'static str) -> Self {
        Self {
            kind,
            description,
            cases: 0,
            details: Vec::new(),
            counterexample: None,
            failed: false,
        }
    }

    fn case(&mut self, ok: bool, detail: String, counterexample: impl FnOnce() -> Option<String>) {
        self.cases += 1;
        if !ok {
            self.failed = true;
            if self.counterexample.is_none() {
                self.counterexample = counterexample().or_else(|| Some(detail.clone()));
            }
        }
        self.details.push(detail);
    }

    fn census(&mut self, label: String, out: CensusOutcome) {
        let detail = format!("{label}: {} checked, {} failures", out.checked, out.failures);
        let ce = out.counterexample.clone().map(|c| format!("{label}: {c}"));
        self.case(out.passed(), detail, || ce);
    }

    fn finish(self) -> CheckRecord {
        CheckRecord {
            name: self.kind.name().to_string(),
            description: self.description.to_string(),
            passed: !self.failed,
            cases: self.cases,
            detail: self.details.join("; "),
            counterexample: self.counterexample,
        }
    }
}

fn amd_check(cfg: &RunConfig) -> Result<CheckRecord, CliError> {
    let mut b = Builder::new(
        CheckKind::AmdDetectionBound,
        "every additive attack on the AMD code succeeds for at most d+1 of the q^r seeds",
    );
    for c in &cfg.verify.amd_cases {
        let params = AmdParams::new(ExtField::new(c.q, c.r).map_err(run_err)?, c.d).map_err(run_err)?;
        let census = exact_amd_win_census(&params, &cfg.verify.guards).map_err(run_err)?;
        let detail = format!(
            "q={} r={} d={}: {} attacks, max success {}/{} (bound {}/{})",
            c.q,
            c.r,
            c.d,
            census.attacks,
            census.max_hits,
            census.field_order,
            c.d + 1,
            census.field_order
        );
        let worst = census.worst_attack.clone();
        b.case(census.within_bound(), detail, || worst.map(|w| format!("{w:?}")));
    }
    Ok(b.finish())
}

fn lattice_grid_check(
    kind: CheckKind,
    description: &'static str,
    grid: &[(u64, usize)],
    guards: &SizeGuards,
    census: fn(&NestedLatticePair, &SizeGuards) -> Result<CensusOutcome, OracleError>,
) -> Result<CheckRecord, CliError> {
    let mut b = Builder::new(kind, description);
    for &(q, n) in grid {
        let pair = NestedLatticePair::new(n, q, 1.0).map_err(run_err)?;
        b.census(format!("q={q} N={n}"), census(&pair, guards).map_err(run_err)?);
    }
    Ok(b.finish())
}

fn full_rank_check(guards: &SizeGuards) -> Result<CheckRecord, CliError> {
    let mut b = Builder::new(
        CheckKind::FullRankFraction,
        "fraction of full-row-rank r×N matrices over GF(q) is at least 1 − q^(r−N)",
    );
    let c = full_rank_census(2, 3, 2, guards).map_err(run_err)?;
    b.case(
        c.full_rank == 42 && c.total == 64,
        format!("GF(2) 2x3: {}/{} full rank (expected 42/64)", c.full_rank, c.total),
        || None,
    );
    for q in [2u64, 3] {
        for n in 1..=4 {
            for r in 1..=n {
                let c = full_rank_census(q, n, r, guards).map_err(run_err)?;
                b.case(
                    c.meets_bound(),
                    format!("q={q} N={n} r={r}: {}/{} ≥ {:.6}", c.full_rank, c.total, c.bound()),
                    || None,
                );
            }
        }
    }
    Ok(b.finish())
}

fn universal_check(guards: &SizeGuards) -> Result<CheckRecord, CliError> {
    let mut b = Builder::new(
        CheckKind::UniversalHashFamily,
        "distinct inputs collide under a uniform linear map with probability at most q^(−r)",
    );
    for q in [2u64, 3] {
        for n in 1..=3 {
            for r in 1..=n.min(2) {
                let c = universal_hash_census(q, n, r, guards).map_err(run_err)?;
                b.case(
                    c.is_universal(),
                    format!(
                        "q={q} N={n} r={r}: max collision {}/{}",
                        c.max_collisions, c.maps
                    ),
                    || None,
                );
            }
        }
    }
    Ok(b.finish())
}

fn uniformity_check(cfg: &RunConfig) -> Result<CheckRecord, CliError> {
    let mut b = Builder::new(
        CheckKind::SeedUniformity,
        "g(t) is exactly uniform over GF(q)^r for uniform t and every full-row-rank g",
    );
    for q in [2u64, 3] {
        for n in 1..=3 {
            for r in 1..=n {
                let maps = full_rank_matrices(q, n, r).map_err(run_err)?;
                b.census(format!("q={q} N={n} r={r}"), uniformity_census(&maps).map_err(run_err)?);
            }
        }
    }
    if cfg.verify.inject_rank_deficient {
        let g = FieldMatrix::from_rows(PrimeField::new(2).map_err(run_err)?, 2, &[vec![1, 1], vec![1, 1]])
            .map_err(run_err)?;
        b.census("injected q=2 N=2 r=2".into(), uniformity_census([&g]).map_err(run_err)?);
    }
    Ok(b.finish())
}

fn leftover_check(guards: &SizeGuards) -> Result<CheckRecord, CliError> {
    let mut b = Builder::new(
        CheckKind::LeftoverHash,
        "average output entropy over all linear maps is at least r log₂q − 2^(r log₂q − H₂)/ln 2",
    );
    for (q, n, r) in [(2u64, 3usize, 1usize), (2, 3, 2), (3, 2, 1)] {
        let size = q.pow(n as u32);
        let weights: Vec<f64> = (1..=size).map(|i| i as f64).collect();
        let c = leftover_census(q, n, r, &weights, guards).map_err(run_err)?;
        b.case(
            c.holds(),
            format!(
                "q={q} N={n} r={r}: average {:.6} ≥ {:.6}",
                c.average_entropy, c.bound
            ),
            || None,
        );
    }
    Ok(b.finish())
}

fn leakage_check(cfg: &RunConfig) -> Result<CheckRecord, CliError> {
    let l = cfg.verify.leakage;
    let mut b = Builder::new(
        CheckKind::LeakageBudget,
        "leakage of g(t₁) averaged over all r×N maps stays within the smoothed leftover budget",
    );
    let pair = NestedLatticePair::new(l.n, l.q, 1.0).map_err(run_err)?;
    let oracle = LeakageOracle::new(&pair, &cfg.verify.guards).map_err(run_err)?;
    let average = oracle.average_over_all_maps(l.r, &cfg.verify.guards).map_err(run_err)?;
    let params = ExtractorParams::new(l.n, l.q, l.epsilon_prime, l.delta).with_smoothing(l.smoothing);
    let budget = leakage_budget(&params, l.r);
    b.case(
        !budget.vacuous && average <= budget.bits + 1e-9,
        format!(
            "q={} N={} r={} s={}: average leakage {:.9} bits, budget {:.9} bits (informative: {})",
            l.q,
            l.n,
            l.r,
            l.smoothing,
            average,
            budget.bits,
            budget.is_informative(l.r, l.q)
        ),
        || None,
    );
    Ok(b.finish())
}

fn pinsker_check_record(cfg: &RunConfig) -> CheckRecord {
    let mut b = Builder::new(
        CheckKind::PinskerInequality,
        "I(A;B) ≥ D²/(2 ln 2) for the variational distance D between the joint and the product of marginals",
    );
    let indep = JointDistribution::from_counts([((0, 0), 1), ((0, 1), 1), ((1, 0), 1), ((1, 1), 1)]).expect("valid");
    let c = pinsker_check(&indep);
    b.case(
        c.holds() && c.mutual_information.abs() < 1e-12,
        format!("independent: I={:.3e} rhs={:.3e}", c.mutual_information, c.rhs),
        || None,
    );
    let equal = JointDistribution::from_counts([((0, 0), 1), ((1, 1), 1)]).expect("valid");
    let c = pinsker_check(&equal);
    b.case(
        c.holds() && (c.mutual_information - 1.0).abs() < 1e-12,
        format!("identical bits: I={:.6} rhs={:.6}", c.mutual_information, c.rhs),
        || None,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut failures = 0;
    let mut first = None;
    for i in 0..cfg.verify.pinsker_joints {
        let na = rng.random_range(2..=5);
        let nb = rng.random_range(2..=5);
        let joint = JointDistribution::random(&mut rng, na, nb);
        let c = pinsker_check(&joint);
        if !c.holds() {
            failures += 1;
            first.get_or_insert_with(|| format!("joint {i}: {c:?}"));
        }
    }
    b.case(
        failures == 0,
        format!("{} random joints, {failures} failures", cfg.verify.pinsker_joints),
        || first,
    );
    b.finish()
}

/// Runs every enabled check and renders the report. Exit code 1 when any
/// check fails.
pub fn cmd_verify(cfg: &RunConfig) -> Result<(VerifyReport, CommandOutput), CliError> {
    cfg.validate_verify()?;
    let guards = &cfg.verify.guards;
    let mut checks = Vec::new();
    for &kind in &cfg.verify.checks {
        let start = std::time::Instant::now();
        let record = match kind {
            CheckKind::AmdDetectionBound => amd_check(cfg)?,
            CheckKind::LatticeFieldIsomorphism => lattice_grid_check(
                kind,
                "codeword ↔ GF(q)^N is a bijection that maps lattice addition mod the coarse lattice to vector addition",
                &[2u64, 3, 5]
                    .iter()
                    .flat_map(|&q| (1..=3).map(move |n| (q, n)))
                    .collect::<Vec<_>>(),
                guards,
                isomorphism_census,
            )?,
            CheckKind::SumRepresentation => lattice_grid_check(
                kind,
                "the real sum of two codewords is recovered from its residue and 1 ≤ T ≤ 2^N wrap pattern",
                &[(5, 1), (5, 2), (2, 1), (2, 2), (2, 3)],
                guards,
                representation_census,
            )?,
            CheckKind::FullRankFraction => full_rank_check(guards)?,
            CheckKind::UniversalHashFamily => universal_check(guards)?,
            CheckKind::SeedUniformity => uniformity_check(cfg)?,
            CheckKind::LeftoverHash => leftover_check(guards)?,
            CheckKind::LeakageBudget => leakage_check(cfg)?,
            CheckKind::PinskerInequality => pinsker_check_record(cfg),
        };
        log::info!(
            "{}: {} in {:.2?}",
            record.name,
            if record.passed { "pass" } else { "FAIL" },
            start.elapsed()
        );
        checks.push(record);
    }
    let report = VerifyReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    };
    let text = match cfg.format {
        OutputFormat::Json => render_json("verify", cfg, &report)?,
        OutputFormat::Csv => {
            let rows: Vec<CsvRow<'_>> = report
                .checks
                .iter()
                .map(|c| CsvRow {
                    check: &c.name,
                    passed: c.passed,
                    cases: c.cases,
                    detail: &c.detail,
                    counterexample: c.counterexample.as_deref().unwrap_or(""),
                })
                .collect();
            render_csv("verify", cfg, &rows)?
        }
    };
    let exit_code = if report.passed { EXIT_OK } else { EXIT_FAILURE };
    Ok((report, CommandOutput { text, exit_code }))
}

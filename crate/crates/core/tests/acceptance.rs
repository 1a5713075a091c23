//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero if any fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relaysec::amd::AmdParams;
use relaysec::channel::{ChannelConfig, RelayBehavior, Stage};
use relaysec::cli::{cmd_simulate, RunConfig};
use relaysec::extract::{leakage_budget, search_good_extractor, secrecy_rate_limit, ExtractorParams};
use relaysec::gf::{ExtField, PrimeField};
use relaysec::lattice::{Dither, NestedLatticePair};
use relaysec::oracle::{
    exact_amd_win_census, full_rank_census, full_rank_matrices, isomorphism_census, pinsker_check,
    representation_census, uniformity_census, universal_hash_census, JointDistribution, LeakageOracle, SizeGuards,
};
use relaysec::protocol::{monte_carlo, rate_report, MessageChoice, ProtocolConfig, ProtocolParams, RateInputs};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn criterion(id: u32, title: &str, limit: Duration, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let passed = v.passed && in_time;
    let timing = if in_time {
        format!("{elapsed:.2?}")
    } else {
        format!("{elapsed:.2?} exceeds {limit:?}")
    };
    println!(
        "acceptance {id:>2} {} {title}: {} [{timing}]",
        if passed { "PASS" } else { "FAIL" },
        v.detail
    );
    passed
}

fn guards() -> SizeGuards {
    SizeGuards::default()
}

fn amd_bound() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (q, r, d, max_allowed) in [(5, 1, 1, 2u64), (5, 2, 2, 3)] {
        let p = AmdParams::new(ExtField::new(q, r).unwrap(), d).unwrap();
        let c = exact_amd_win_census(&p, &guards()).unwrap();
        ok &= c.max_hits <= max_allowed && c.within_bound();
        parts.push(format!("q={q} r={r} d={d} max {}/{}", c.max_hits, c.field_order));
    }
    verdict(ok, parts.join(", "))
}

fn isomorphism() -> Verdict {
    let (mut checked, mut failures) = (0, 0);
    for q in [2, 3, 5] {
        for n in 1..=3 {
            let pair = NestedLatticePair::new(n, q, 1.0).unwrap();
            let c = isomorphism_census(&pair, &guards()).unwrap();
            checked += c.checked;
            failures += c.failures;
        }
    }
    verdict(failures == 0, format!("{checked} cases, {failures} failures"))
}

fn representation() -> Verdict {
    let (mut checked, mut failures) = (0, 0);
    for (q, n) in [(5, 1), (5, 2), (2, 1), (2, 2), (2, 3)] {
        let plain = NestedLatticePair::new(n, q, 1.0).unwrap();
        let dithered = NestedLatticePair::new(n, q, 0.7)
            .unwrap()
            .with_dither(Dither::Source, vec![0.31; n])
            .unwrap()
            .with_dither(Dither::Jammer, vec![-0.52; n])
            .unwrap();
        for pair in [plain, dithered] {
            let c = representation_census(&pair, &guards()).unwrap();
            checked += c.checked;
            failures += c.failures;
        }
    }
    verdict(failures == 0, format!("{checked} pairs, {failures} failures"))
}

fn full_rank() -> Verdict {
    let c = full_rank_census(2, 3, 2, &guards()).unwrap();
    let mut ok = c.full_rank == 42 && c.total == 64;
    let mut grid = 0;
    for q in [2, 3] {
        for n in 1..=4 {
            for r in 1..=n {
                let c = full_rank_census(q, n, r, &guards()).unwrap();
                ok &= c.meets_bound();
                grid += 1;
            }
        }
    }
    verdict(ok, format!("GF(2) 2x3 {}/{}, bound holds on {grid} shapes", c.full_rank, c.total))
}

fn universal_hash() -> Verdict {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for q in [2, 3] {
        for n in 1..=3 {
            for r in 1..=n.min(2) {
                let c = universal_hash_census(q, n, r, &guards()).unwrap();
                ok &= c.is_universal();
                worst = worst.max(c.max_collision_probability() * (q as f64).powi(r as i32));
            }
        }
    }
    verdict(ok, format!("max collision probability × q^r = {worst:.6}"))
}

fn seed_uniformity() -> Verdict {
    let (mut checked, mut failures) = (0, 0);
    for q in [2, 3] {
        for n in 1..=3 {
            for r in 1..=n {
                let maps = full_rank_matrices(q, n, r).unwrap();
                let c = uniformity_census(&maps).unwrap();
                checked += c.checked;
                failures += c.failures;
            }
        }
    }
    verdict(failures == 0, format!("{checked} full-rank maps, {failures} non-uniform"))
}

fn leakage_budget_check() -> Verdict {
    let pair = NestedLatticePair::new(2, 11, 1.0).unwrap();
    let oracle = LeakageOracle::new(&pair, &guards()).unwrap();
    let average = oracle.average_over_all_maps(1, &guards()).unwrap();
    let params = ExtractorParams::new(2, 11, 0.1, 0.0).with_smoothing(6.0);
    let budget = leakage_budget(&params, 1);
    verdict(
        !budget.vacuous && average <= budget.bits + 1e-9,
        format!(
            "average leakage {average:.6} bits ≤ budget {:.6} bits (non-vacuous: {})",
            budget.bits, !budget.vacuous
        ),
    )
}

fn leakage_trend() -> Verdict {
    let mut best = Vec::new();
    for n in 1..=3 {
        let pair = NestedLatticePair::new(n, 11, 1.0).unwrap();
        let oracle = LeakageOracle::new(&pair, &guards()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        rng.set_stream(n as u64);
        let search = search_good_extractor(PrimeField::new(11).unwrap(), n, 1, 32, &mut rng, |g| {
            oracle.leakage(g.matrix()).unwrap()
        })
        .unwrap();
        best.push(search.best_leakage);
    }
    let ok = best.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let shown: Vec<String> = best.iter().map(|b| format!("{b:.6}")).collect();
    verdict(ok, format!("best leakage over N=1,2,3: {}", shown.join(" ≥ ")))
}

fn detection() -> Verdict {
    let cfg = ChannelConfig::default();
    let params = ProtocolParams::new(ProtocolConfig::default(), cfg.power_limit).unwrap();
    let trials = 10_000;
    let threshold = 0.12 + 3.0 * (0.12f64 * 0.88 / trials as f64).sqrt();
    let honest = monte_carlo(&params, &cfg, &RelayBehavior::Honest, &MessageChoice::Uniform, trials, 0, 11).unwrap();
    let mut ok = honest.decode_errors == 0 && honest.false_rejects == 0;
    let mut parts = vec![format!(
        "honest decode errors {} false rejects {}",
        honest.decode_errors, honest.false_rejects
    )];
    let attacks = [
        ("substitute", RelayBehavior::SubstituteLattice(params.uniform_plan(&Stage::ALL, 1))),
        ("offset", RelayBehavior::AdditiveLatticeOffset(params.uniform_plan(&Stage::ALL, 1))),
        (
            "substitute[message]",
            RelayBehavior::SubstituteLattice(params.uniform_plan(&[Stage::Message], 1)),
        ),
        (
            "offset[message]",
            RelayBehavior::AdditiveLatticeOffset(params.uniform_plan(&[Stage::Message], 1)),
        ),
    ];
    for (name, behavior) in attacks {
        let rep = monte_carlo(&params, &cfg, &behavior, &MessageChoice::Uniform, trials, 0, 12).unwrap();
        let win = rep.wins as f64 / trials as f64;
        ok &= rep.decode_errors > 0 && rep.adversary_win_rate <= threshold && win <= threshold;
        parts.push(format!(
            "{name} win {:.4} ({} wins, {} altered)",
            rep.adversary_win_rate, rep.wins, rep.decode_errors
        ));
    }
    verdict(ok, format!("threshold {threshold:.4}; {}", parts.join("; ")))
}

fn rate_arithmetic() -> Verdict {
    let re_limit = secrecy_rate_limit(7.5);
    let rep = rate_report(&RateInputs::uniform(100, 20, 11, 4, 1.0));
    let expected_rt = 80.0 * 11f64.log2() / 1040.0;
    let fixed = (re_limit - 0.5).abs() < 1e-9
        && rep.n == 520
        && (rep.rt - expected_rt).abs() < 1e-9
        && (rep.rt - 0.266).abs() < 5e-4;
    let sweep: Vec<f64> = (1..=64)
        .map(|d| rate_report(&RateInputs::uniform(100, 20, 11, d, 1.0)).rt)
        .collect();
    let below = sweep.iter().all(|&rt| rt < 0.5);
    let first_drop = sweep.windows(2).position(|w| w[1] <= w[0]).map(|i| i + 2);
    let monotone = first_drop.is_none();
    let detail = format!(
        "Re(P=7.5) = {re_limit}, n = {}, RT = {:.6}; RT(d=64) = {:.6} < 0.5; {}",
        rep.n,
        rep.rt,
        sweep[63],
        match first_drop {
            None => "RT increasing over d = 1..64".to_string(),
            Some(d) => format!(
                "RT not monotone: RT(d={d}) = {:.6} ≤ RT(d={}) = {:.6}",
                sweep[d - 1],
                d - 1,
                sweep[d - 2]
            ),
        }
    );
    verdict(fixed && below && monotone, detail)
}

fn pinsker() -> Verdict {
    let indep = pinsker_check(&JointDistribution::from_counts([((0, 0), 1), ((0, 1), 1), ((1, 0), 1), ((1, 1), 1)]).unwrap());
    let equal = pinsker_check(&JointDistribution::from_counts([((0, 0), 1), ((1, 1), 1)]).unwrap());
    let mut ok = indep.holds() && indep.mutual_information.abs() < 1e-12 && indep.distance.abs() < 1e-12;
    ok &= equal.holds() && (equal.mutual_information - 1.0).abs() < 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut failures = 0;
    for _ in 0..1000 {
        let na = rng.random_range(2..=6);
        let nb = rng.random_range(2..=6);
        if !pinsker_check(&JointDistribution::random(&mut rng, na, nb)).holds() {
            failures += 1;
        }
    }
    ok &= failures == 0;
    verdict(ok, format!("analytic cases hold, {failures} failures in 1000 random joints"))
}

fn determinism() -> Verdict {
    let base = RunConfig::from_json(r#"{"seed": 4242, "simulate": {"trials": 3000}}"#).unwrap();
    let render = |workers: usize| {
        let cfg = RunConfig { workers, ..base.clone() };
        cmd_simulate(&cfg).unwrap().1.text
    };
    let reference = render(1);
    let library_ok = [1, 2, 4, 0].iter().all(|&w| render(w) == reference);

    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"simulate": {"trials": 3000}}"#).unwrap();
    let run = |workers: &str, name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_relaysec"))
            .args(["simulate", "--seed", "4242", "--workers", workers, "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    let a = run("1", "a.csv");
    let b = run("3", "b.csv");
    let c = run("1", "c.csv");
    let binary_ok = a == b && a == c && a == reference.as_bytes();
    verdict(
        library_ok && binary_ok,
        format!(
            "library identical across workers: {library_ok}; binary identical across runs and workers: {binary_ok} ({} bytes)",
            a.len()
        ),
    )
}

fn main() -> ExitCode {
    let s = Duration::from_secs;
    let results = [
        criterion(1, "AMD exact bound", s(60), amd_bound),
        criterion(2, "lattice/field isomorphism", s(10), isomorphism),
        criterion(3, "sum representation", s(10), representation),
        criterion(4, "full-rank census", s(10), full_rank),
        criterion(5, "universal hash family", s(30), universal_hash),
        criterion(6, "seed uniformity", s(30), seed_uniformity),
        criterion(7, "leakage budget", s(60), leakage_budget_check),
        criterion(8, "leakage trend", s(60), leakage_trend),
        criterion(9, "end-to-end detection", s(120), detection),
        criterion(10, "rate arithmetic", s(1), rate_arithmetic),
        criterion(11, "Pinsker inequality", s(5), pinsker),
        criterion(12, "determinism", s(120), determinism),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

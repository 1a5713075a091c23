use std::path::Path;
use std::process::{Command, Output};

use relaysec::cli::{cmd_scan, cmd_simulate, cmd_verify, CliError, RunConfig, EXIT_CONFIG, EXIT_FAILURE, EXIT_OK};

fn binary(args: &[&str], config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_relaysec"));
    cmd.args(args);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn data_lines(text: &str) -> Vec<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    let mut rows = vec![header];
    rows.extend(reader.records().map(|r| r.unwrap().iter().map(String::from).collect()));
    rows
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<String> {
    let i = rows[0].iter().position(|h| h == name).unwrap();
    rows[1..].iter().map(|r| r[i].clone()).collect()
}

#[test]
fn verify_default_passes() {
    let (report, out) = cmd_verify(&RunConfig::default()).unwrap();
    assert!(report.passed, "{report:#?}");
    assert_eq!(out.exit_code, EXIT_OK);
    assert_eq!(report.checks.len(), 9);
}

#[test]
fn verify_reports_injected_rank_deficient_map() {
    let cfg = RunConfig::from_json(
        r#"{"format": "json", "verify": {"checks": ["seed-uniformity"], "inject_rank_deficient": true}}"#,
    )
    .unwrap();
    let (report, out) = cmd_verify(&cfg).unwrap();
    assert_eq!(out.exit_code, EXIT_FAILURE);
    let check = &report.checks[0];
    assert!(!check.passed);
    let ce = check.counterexample.as_deref().unwrap();
    assert!(ce.contains("[1 1; 1 1]"), "{ce}");
    assert!(out.text.contains("[1 1; 1 1]"));
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), r#"{"protocol": {"d": 3}}"#);
    assert_eq!(binary(&["verify"], Some(&bad)).status.code(), Some(EXIT_CONFIG));
    let unknown = write_config(dir.path(), r#"{"protocl": {}}"#);
    let out = binary(&["simulate"], Some(&unknown));
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));
    let failing = write_config(
        dir.path(),
        r#"{"verify": {"checks": ["seed-uniformity"], "inject_rank_deficient": true}}"#,
    );
    let out = binary(&["verify"], Some(&failing));
    assert_eq!(out.status.code(), Some(EXIT_FAILURE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[1 1; 1 1]"));
    let ok = write_config(dir.path(), r#"{"verify": {"checks": ["pinsker-inequality"]}}"#);
    assert_eq!(binary(&["verify"], Some(&ok)).status.code(), Some(EXIT_OK));
}

#[test]
fn simulate_rows_and_columns() {
    let cfg = RunConfig::from_json(
        r#"{"seed": 5, "simulate": {"trials": 4000, "behaviors": [{"kind": "honest"}, {"kind": "substitute"}, {"kind": "offset", "stages": ["message"]}]}}"#,
    )
    .unwrap();
    let (_, out) = cmd_simulate(&cfg).unwrap();
    assert!(out.text.starts_with("# relaysec simulate\n# seed: 5\n# config: {"));
    assert!(!out.text.contains("workers"));
    let rows = data_lines(&out.text);
    assert_eq!(
        rows[0],
        [
            "behavior",
            "trials",
            "decodeErrRate",
            "falseRejectRate",
            "adversaryWinRate",
            "winBound",
            "n",
            "RT",
            "PT",
            "seed"
        ]
    );
    assert_eq!(column(&rows, "behavior"), ["honest", "substitute", "offset[message]"]);
    let honest = &rows[1];
    assert_eq!(&honest[2..5], ["0.0", "0.0", "0.0"]);
    let bounds = column(&rows, "winBound");
    for (win, bound) in column(&rows, "adversaryWinRate").iter().zip(&bounds) {
        let (w, b): (f64, f64) = (win.parse().unwrap(), bound.parse().unwrap());
        assert!(w <= b + 3.0 * (b * (1.0 - b) / 4000.0).sqrt(), "{w} > {b}");
    }
    assert!(column(&rows, "seed").iter().all(|s| s == "5"));
}

#[test]
fn simulate_fixed_messages() {
    let cfg = RunConfig::from_json(
        r#"{"simulate": {"trials": 2000, "behaviors": [{"kind": "offset", "stages": ["message"]}], "messages": [[0, 0], [3, 24], [17, 9]]}}"#,
    )
    .unwrap();
    let (reports, _) = cmd_simulate(&cfg).unwrap();
    assert_eq!(reports.len(), 3);
    assert_eq!(reports[1].behavior, "offset[message]/s=3.24");
    for r in &reports {
        assert!(r.adversary_win_rate <= r.win_bound, "{r:?}");
    }
    let bad = RunConfig::from_json(r#"{"simulate": {"messages": [[25, 0]]}}"#).unwrap();
    assert!(matches!(cmd_simulate(&bad), Err(CliError::Config(_))));
}

#[test]
fn simulate_json_format() {
    let cfg = RunConfig::from_json(r#"{"format": "json", "simulate": {"trials": 50, "behaviors": [{"kind": "garble"}]}}"#)
        .unwrap();
    let (_, out) = cmd_simulate(&cfg).unwrap();
    let v: serde_json::Value = serde_json::from_str(&out.text).unwrap();
    assert_eq!(v["command"], "simulate");
    assert_eq!(v["result"][0]["behavior"], "garble");
    assert_eq!(v["result"][0]["trials"], 50);
}

#[test]
fn scan_d_rate_column() {
    let (rows, out) = cmd_scan(&RunConfig::default()).unwrap();
    assert_eq!(rows.len(), 64);
    for row in &rows {
        let rt = row.rt.unwrap();
        assert!(rt > 0.0 && rt < row.rt_limit.unwrap());
    }
    let last = rows.last().unwrap();
    assert!(last.rt_limit.unwrap() - last.rt.unwrap() < 0.1);
    assert_eq!(rows[2].status, "no AMD code: q divides d+2");
    assert!(out.text.contains("parameter,value,q,r,d,N,winBound,n,RT,RTLimit,bestLeakage,averageLeakage,status"));
}

#[test]
fn scan_r_win_bound_exact() {
    let cfg = RunConfig::from_json(r#"{"scan": {"kind": "r", "values": [1, 2, 3, 4]}}"#).unwrap();
    let (rows, _) = cmd_scan(&cfg).unwrap();
    for row in rows {
        let expected = 3.0 / 5f64.powi(row.value as i32);
        assert_eq!(row.win_bound.unwrap(), expected);
    }
}

#[test]
fn scan_n_leakage_and_skips() {
    let cfg = RunConfig::from_json(
        r#"{"protocol": {"q": 11, "r": 1}, "scan": {"kind": "n", "values": [1, 2, 3], "candidates": 16}}"#,
    )
    .unwrap();
    let (rows, _) = cmd_scan(&cfg).unwrap();
    let best: Vec<f64> = rows.iter().map(|r| r.best_leakage.unwrap()).collect();
    assert!(best.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{best:?}");

    let guarded = RunConfig::from_json(
        r#"{"protocol": {"q": 11, "r": 1}, "verify": {"guards": {"pairs": 1000}}, "scan": {"kind": "n", "values": [1, 3]}}"#,
    )
    .unwrap();
    let (rows, out) = cmd_scan(&guarded).unwrap();
    assert_eq!(rows[0].status, "ok");
    assert!(rows[1].status.starts_with("skipped"), "{}", rows[1].status);
    assert_eq!(out.exit_code, EXIT_OK);
}

#[test]
fn output_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"seed": 1, "simulate": {"trials": 200}}"#);
    let out = dir.path().join("out.csv");
    let status = binary(
        &["simulate", "--seed", "77", "--workers", "2", "--out", out.to_str().unwrap()],
        Some(&config),
    );
    assert!(status.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("# seed: 77"));
    assert!(column(&data_lines(&text), "seed").iter().all(|s| s == "77"));
    let json = binary(&["scan", "--format", "json"], None);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["result"].as_array().unwrap().len(), 64);
}

fn schema_covers(schema: &serde_json::Value, value: &serde_json::Value, path: &str) {
    let Some(obj) = value.as_object() else { return };
    let props = schema["properties"]
        .as_object()
        .unwrap_or_else(|| panic!("no properties for {path}"));
    assert_eq!(schema["additionalProperties"], false, "{path}");
    for (k, v) in obj {
        let sub = props.get(k).unwrap_or_else(|| panic!("schema lacks {path}.{k}"));
        schema_covers(sub, v, &format!("{path}.{k}"));
    }
    for k in props.keys() {
        assert!(obj.contains_key(k), "schema has extra key {path}.{k}");
    }
}

#[test]
fn shipped_schema_matches_config() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("config.schema.json")).unwrap()).unwrap();
    let defaults = serde_json::to_value(RunConfig::default()).unwrap();
    schema_covers(&schema, &defaults, "");
    let example = RunConfig::load(&root.join("example.config.json")).unwrap();
    example.validate_simulate().unwrap();
}

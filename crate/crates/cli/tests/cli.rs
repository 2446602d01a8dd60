use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use simpleq::{Error, ErrorCategory};
use simpleq_cli::report::format_number;
use simpleq_cli::{parse_config, run, RunConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_simpleq"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn simpleq(args: &[&str]) -> Output {
    bin().args(args).output().expect("run simpleq")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let head = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (head, rows)
}

#[test]
fn example_configs_parse() {
    let mut seen = 0;
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|x| x == "conf") {
            let text = fs::read_to_string(&path).unwrap();
            parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 5);
}

#[test]
fn explicit_validation_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("explicit.conf");
    let out = simpleq(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_csv(&dir.path().join("validate_explicit.csv"));
    assert_eq!(rows.len(), 1);
    assert!(dir.path().join("audit.csv").exists());
    assert!(dir.path().join("metadata.json").exists());
}

#[test]
fn under_resolved_grid_exits_with_invariant_code() {
    let out = simpleq(&[
        "--mode", "solve", "--potential", "gaussian", "--amp", "1", "--width", "1", "--e", "0.001", "--grid-n", "64",
    ]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("grid-n"), "no remediation hint in: {err}");
    let cfg = configs().join("underresolved.conf");
    assert_eq!(simpleq(&["--config", cfg.to_str().unwrap()]).status.code(), Some(4));
}

#[test]
fn configuration_errors_exit_with_two() {
    let out = simpleq(&["--mode", "solve"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("'e'") && err.contains("'potential'"), "{err}");
    assert_eq!(simpleq(&["--mode", "bogus"]).status.code(), Some(2));
    assert_eq!(simpleq(&["--set", "noequals"]).status.code(), Some(2));
    let out = simpleq(&["--mode", "solve", "--potential", "gaussian", "--e", "1", "--set", "colour=red"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_table_file_exits_with_io_code() {
    let out = simpleq(&["--mode", "solve", "--potential", "table", "--table", "/nonexistent/v.txt", "--e", "1"]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn identical_runs_write_identical_tables() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = simpleq(&[
            "--mode", "sweep", "--potential", "gaussian", "--amp", "1", "--width", "1", "--e-min", "0.01", "--e-max",
            "0.1", "--e-steps", "4", "--out", d.path().to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let mut compared = 0;
    for entry in fs::read_dir(a.path()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|x| x == "csv") {
            let other = b.path().join(path.file_name().unwrap());
            assert_eq!(fs::read(&path).unwrap(), fs::read(&other).unwrap(), "{}", path.display());
            compared += 1;
        }
    }
    assert!(compared >= 2);
}

#[test]
fn single_row_sweep_warns_and_succeeds() {
    let cfg = RunConfig::from_pairs([
        ("mode", "sweep"),
        ("potential", "gaussian"),
        ("amp", "1"),
        ("width", "1"),
        ("e", "0.1"),
    ])
    .unwrap();
    let bundle = run(&cfg).unwrap();
    assert_eq!(bundle.exit_code, 0);
    assert_eq!(bundle.table.rows.len(), 1);
    assert!(bundle.warnings.iter().any(|w| w.contains("insufficient rows")));
    let col = bundle.table.column("convexity_indicator").unwrap();
    assert!(bundle.table.rows[0][col].as_f64().is_none());
}

#[test]
fn twenty_row_sweep_writes_twenty_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("gaussian_sweep.conf");
    let out = simpleq(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (head, rows) = read_csv(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 20);
    let e = head.iter().position(|h| h == "e").unwrap();
    let rho = head.iter().position(|h| h == "rho").unwrap();
    let e_rho = head.iter().position(|h| h == "e_rho").unwrap();
    let mut last = 0.0;
    for row in &rows {
        let (e, rho, er): (f64, f64, f64) = (row[e].parse().unwrap(), row[rho].parse().unwrap(), row[e_rho].parse().unwrap());
        assert!((e * rho - er).abs() <= 1e-15 * er);
        assert!(er > last);
        last = er;
    }
}

#[test]
fn json_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = simpleq(&[
        "--mode", "solve", "--potential", "gaussian", "--amp", "1", "--width", "1", "--e", "0.1", "--format", "json",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["metadata"]["mode"], "solve");
    assert_eq!(v["status"]["exit_code"], 0);
    let again = serde_json::to_string_pretty(&v).unwrap() + "\n";
    assert_eq!(text, again);
    // Numbers are strings that read back to the same double.
    let cols = v["table"]["columns"].as_array().unwrap();
    let j = cols.iter().position(|c| c == "rho").unwrap();
    let rho = v["table"]["rows"][0][j].as_str().unwrap();
    let x: f64 = rho.parse().unwrap();
    assert!(x > 0.0);
    assert_eq!(format_number(x), rho);
}

#[test]
fn warnings_are_reported_once() {
    let cfg = RunConfig::from_pairs([
        ("mode", "sweep"),
        ("potential", "gaussian"),
        ("amp", "1"),
        ("width", "1"),
        ("e-min", "0.01"),
        ("e-max", "1"),
        ("e-steps", "5"),
    ])
    .unwrap();
    let bundle = run(&cfg).unwrap();
    let unique: HashSet<&String> = bundle.warnings.iter().collect();
    assert_eq!(unique.len(), bundle.warnings.len());
}

#[test]
fn every_error_category_has_a_distinct_code() {
    let cases = [
        (Error::Config("x".into()), ErrorCategory::Config, 2),
        (
            Error::NonConvergence {
                what: "x".into(),
                iterations: 1,
                last: 1.0,
                history: vec![],
            },
            ErrorCategory::Convergence,
            3,
        ),
        (Error::InvariantViolation("x".into()), ErrorCategory::Invariant, 4),
        (Error::Io(std::io::Error::other("x")), ErrorCategory::Io, 5),
    ];
    let mut codes = HashSet::new();
    for (err, cat, code) in cases {
        assert_eq!(err.category(), cat);
        assert_eq!(err.exit_code(), code);
        assert!(codes.insert(code));
    }
}

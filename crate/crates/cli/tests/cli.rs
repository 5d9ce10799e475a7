use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ifock"))
}

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn tmp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("ifock-cli-test-{}-{name}", std::process::id()))
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn partition_reports_trivial_word() {
    let out = bin().args(["partition", "--epsilon", "1,0,0,1"]).output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("trivial: true"), "{text}");
    assert!(text.contains("pairings: 0"), "{text}");
}

#[test]
fn partition_reports_noncrossing_pairing() {
    let out = bin().args(["partition", "--epsilon", "1,1,0,0"]).output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("trivial: false"), "{text}");
    assert!(text.contains("pairing: {(4,1),(3,2)}"), "{text}");
    assert!(text.contains("pairings: 2"), "{text}");
}

#[test]
fn epsilon_flag_overrides_config() {
    let out = bin()
        .args(["partition", "--config", &fixture("twopoint.json"), "--epsilon", "1,0,0,1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(stdout(&out).contains("trivial: true"));
}

#[test]
fn crosscheck_two_point_reference_agrees() {
    let out = bin().args(["crosscheck", "--config", &fixture("twopoint.json")]).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let line = text.lines().find(|l| l.starts_with("crosscheck:")).unwrap();
    let dev: f64 = line.split_whitespace().rev().nth(3).unwrap().parse().unwrap();
    assert!(dev < 1e-6, "{line}");
}

#[test]
fn moment_csv_is_deterministic() {
    let (p1, p2) = (tmp("moment-a.csv"), tmp("moment-b.csv"));
    for p in [&p1, &p2] {
        let out = bin()
            .args(["moment", "--config", &fixture("twopoint.json"), "--out"])
            .arg(p)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let (a, b) = (std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert_eq!(a, b, "identical config must give byte-identical CSV");
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "p,re,im,route");
    // 2 probes x 3 routes, shell/fock/noise order within each probe.
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    for (i, row) in rows.iter().enumerate() {
        let route = row.rsplit(',').next().unwrap();
        assert_eq!(route, ["shell", "fock", "noise"][i % 3], "{row}");
    }
    std::fs::remove_file(p1).ok();
    std::fs::remove_file(p2).ok();
}

#[test]
fn kernel_scan_flags_tangent_shells() {
    let out = bin().args(["kernel-scan", "--config", &fixture("tangency_scan.json")]).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().next().unwrap(), "p,re,im,degenerate");
    let flagged = text.lines().filter(|l| l.ends_with(",,true")).count();
    let resolved = text.lines().filter(|l| l.ends_with(",false")).count();
    assert!(flagged >= 1, "no degenerate rows:\n{text}");
    assert!(resolved >= 2, "no resolved rows:\n{text}");
}

#[test]
fn moment_on_tangent_shell_exits_3() {
    let out = bin().args(["moment", "--config", &fixture("degenerate_probe.json")]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(err.contains("degenerate shell"), "{err}");
    assert!(err.contains("p = 1.414"), "{err}");
}

#[test]
fn config_validation_failures_exit_2() {
    let wrong_schema = tmp("schema.json");
    std::fs::write(&wrong_schema, r#"{"schema": 2, "dispersion": {"type": "constant", "omega0": 1.0}}"#).unwrap();
    let out = bin().args(["moment", "--config"]).arg(&wrong_schema).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let unknown = tmp("unknown.json");
    std::fs::write(&unknown, r#"{"schema": 1, "dispersion": {"type": "constant", "omega0": 1.0}, "knob": 3}"#).unwrap();
    let out = bin().args(["moment", "--config"]).arg(&unknown).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown field"));

    let out = bin().args(["moment", "--config", &fixture("bose.json")]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "missing probe_p must be a config error");

    std::fs::remove_file(wrong_schema).ok();
    std::fs::remove_file(unknown).ok();
}

#[test]
fn prelimit_emits_total_and_pairing_rows_per_lambda() {
    let out = bin().args(["prelimit", "--config", &fixture("prelimit_n1.json")]).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "lambda,pairing_id,re,im,crossing_flag");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // Two lambdas, each a total row followed by the single pairing row.
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][1], "total");
    assert_eq!(rows[1][1], "1");
    assert_eq!(rows[1][4], "false");
    assert_eq!(rows[2][1], "total");
    assert_eq!(rows[3][1], "1");
    // n = 1 has one pairing, so the total equals it.
    assert_eq!(rows[0][2], rows[1][2]);
    // Pinned two-point value at lambda = 0.5.
    let v: f64 = rows[0][2].parse().unwrap();
    assert!((v - 2.5981235397752984).abs() < 1e-8, "{v}");
}

#[test]
fn bose_moment_emits_frequency_shell_value() {
    let out = bin().args(["bose-moment", "--config", &fixture("bose.json")]).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "omega_probe,re,im");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let v: f64 = row[1].parse().unwrap();
    // Closed form 4 pi e^{-1} for this configuration.
    assert!((v - 4.622909399163687).abs() < 1e-12, "{v}");
}

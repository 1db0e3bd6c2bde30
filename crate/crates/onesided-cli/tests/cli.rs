//! End-to-end tests of the command-line interface: fixture analyses, exit
//! codes, the monitoring pipeline, simulation determinism, and the
//! analyze/monitor round trip.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use onesided::datagen::NormalScenario;
use onesided::rng::RngStream;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_onesided"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Extract the p-value column of a method line in an analyze/monitor report.
fn pvalue_for(report: &str, method: &str) -> f64 {
    for line in report.lines() {
        let mut toks = line.split_whitespace();
        if toks.next() == Some(method) {
            let fields: Vec<&str> = line.split_whitespace().collect();
            return fields[2].parse().unwrap();
        }
    }
    panic!("no line for method {method} in:\n{report}");
}

#[test]
fn analyze_reproduces_the_monitoring_fixture() {
    let out = run(&["analyze", fixture("mor_summary.txt").to_str().unwrap(), "--asymptotic"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("T_n     = 59.346518"), "{text}");
    assert!(text.contains("rho_hat = 0.698455"));
    let lrt = pvalue_for(&text, "LRT");
    let mlr = pvalue_for(&text, "mLR");
    let pw = pvalue_for(&text, "PW");
    assert!((lrt - 7.147971e-14).abs() < 1e-19);
    assert!((mlr - 2.307909e-14).abs() < 1e-19);
    assert_eq!(lrt, pw, "the quadratic stage binds, so PW matches the least-favorable p");
}

#[test]
fn analyze_inflated_fixture_pvalues_and_exit_code() {
    let path = fixture("mor_summary_inflated.txt");
    let out = run(&["analyze", path.to_str().unwrap(), "--asymptotic"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("T_n     = 3.401975"), "{text}");
    assert!((pvalue_for(&text, "LRT") - 0.123811).abs() < 1e-6);
    assert!((pvalue_for(&text, "PW") - 0.032643).abs() < 1e-6);
    assert!((pvalue_for(&text, "mLR") - 0.053880).abs() < 1e-6);

    // only PW rejects at 5%, so --exit-on-reject yields status 2
    let out = run(&["analyze", path.to_str().unwrap(), "--asymptotic", "--exit-on-reject"]);
    assert_eq!(out.status.code(), Some(2));
    // restricted to methods that do not reject, the flag keeps status 0
    let out = run(&[
        "analyze",
        path.to_str().unwrap(),
        "--asymptotic",
        "--exit-on-reject",
        "--methods",
        "lrt,mlr",
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn analyze_inside_null_cone_caps_pvalues_at_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("null.txt");
    std::fs::write(&path, "theta_hat = 0.4, 0.2\nn = 100\ncov = 0.04, 0.0; 0.0, 0.04\n").unwrap();
    let out = run(&["analyze", path.to_str().unwrap(), "--exit-on-reject"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("T_n     = 0.000000"));
    for m in ["LRT", "PW", "mLR"] {
        assert_eq!(pvalue_for(&text, m), 1.0, "{m}");
    }
}

#[test]
fn analyze_error_exit_codes() {
    let out = run(&["analyze", fixture("malformed.txt").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(64));
    let out = run(&["analyze", fixture("bad_matrix.txt").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(65));
    let out = run(&["analyze", "/nonexistent/file.txt"]);
    assert_eq!(out.status.code(), Some(64));
    let out = run(&["bogus-subcommand"]);
    assert_eq!(out.status.code(), Some(64));
}

fn write_clustered_csv(path: &Path, mus: &[(&str, f64)], seed: u64) {
    let scenario = NormalScenario {
        mu: mus.iter().map(|m| m.1).collect(),
        sigma_gamma: vec![1.0; mus.len()],
        sigma_e: 1.5,
        n_clusters: vec![30; mus.len()],
        d: 5,
    };
    let mut rng = RngStream::new(seed, 0);
    let data = scenario.generate(&mut rng).unwrap();
    let mut text = String::from("population,cluster,value\n");
    for (k, pop) in data.populations().iter().enumerate() {
        for (j, cluster) in pop.clusters.iter().enumerate() {
            for v in cluster {
                text.push_str(&format!("{},{j},{v}\n", mus[k].0));
            }
        }
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn monitor_flags_a_shifted_population_and_roundtrips_through_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("shift.csv");
    write_clustered_csv(&csv, &[("base", 15.5), ("drop", 13.8)], 11);
    let outdir = dir.path().join("out");
    let out = run(&[
        "monitor",
        csv.to_str().unwrap(),
        "--seed",
        "7",
        "--boot",
        "199",
        "--out",
        outdir.to_str().unwrap(),
        "--exit-on-reject",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stdout(&out));
    let text = stdout(&out);
    let p_mlr = pvalue_for_label(&text, "drop", 6);
    assert!(p_mlr < 0.05, "shifted population must be flagged: {text}");

    // round trip: analyze on the emitted summary reproduces the p-values
    // exactly
    let summary = outdir.join("summary_drop.txt");
    let out2 = run(&["analyze", summary.to_str().unwrap()]);
    assert!(out2.status.success());
    let text2 = stdout(&out2);
    for (m, col) in [("LRT", 4), ("PW", 5), ("mLR", 6)] {
        let from_monitor = pvalue_for_label(&text, "drop", col);
        let from_analyze = pvalue_for(&text2, m);
        assert_eq!(from_monitor, from_analyze, "{m} differs between monitor and analyze");
    }
}

/// p-value column (0-based field index) of a population row in the monitor
/// table.
fn pvalue_for_label(report: &str, label: &str, field: usize) -> f64 {
    for line in report.lines() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.first() == Some(&label) {
            return fields[field].parse().unwrap();
        }
    }
    panic!("no row for {label} in:\n{report}");
}

#[test]
fn monitor_identical_populations_do_not_reject() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("null.csv");
    write_clustered_csv(&csv, &[("base", 15.5), ("same", 15.5)], 23);
    let out = run(&[
        "monitor",
        csv.to_str().unwrap(),
        "--seed",
        "9",
        "--boot",
        "199",
        "--exit-on-reject",
        "--methods",
        "mlr",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
}

#[test]
fn monitor_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("single.csv");
    write_clustered_csv(&csv, &[("only", 15.5)], 5);
    let out = run(&["monitor", csv.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(64), "baseline-only file is a usage error");

    let ragged = dir.path().join("ragged.csv");
    std::fs::write(
        &ragged,
        "population,cluster,value\na,1,1.0\na,1,2.0\na,2,3.0\nb,1,4.0\nb,2,5.0\n",
    )
    .unwrap();
    let out = run(&["monitor", ragged.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(64));

    let out = run(&["monitor", csv.to_str().unwrap(), "--basis", "cubic", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn monitor_prints_drawn_seed_when_not_given() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("two.csv");
    write_clustered_csv(&csv, &[("base", 15.5), ("other", 15.4)], 17);
    let out = run(&["monitor", csv.to_str().unwrap(), "--boot", "49"]);
    assert!(stdout(&out).contains("rerun with --seed"), "{}", stdout(&out));
}

#[test]
fn simulate_smoke_config_is_deterministic_and_seed_overridable() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    let cfg = fixture("smoke_mvn.toml");
    let r1 = run(&["simulate", cfg.to_str().unwrap(), "--out", out1.to_str().unwrap()]);
    assert!(r1.status.success(), "{}", String::from_utf8_lossy(&r1.stderr));
    let r2 = run(&["simulate", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert!(r2.status.success());
    let csv1 = std::fs::read_to_string(out1.join("report.csv")).unwrap();
    let csv2 = std::fs::read_to_string(out2.join("report.csv")).unwrap();
    assert_eq!(csv1, csv2, "same config and seed give byte-identical reports");
    for line in csv1.lines().skip(1) {
        let pct: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!((0.0..=100.0).contains(&pct));
    }

    let out3 = dir.path().join("c");
    let r3 = run(&[
        "simulate",
        cfg.to_str().unwrap(),
        "--seed",
        "777",
        "--out",
        out3.to_str().unwrap(),
    ]);
    assert!(r3.status.success());
    let csv3 = std::fs::read_to_string(out3.join("report.csv")).unwrap();
    assert_ne!(csv1, csv3, "a different seed changes the Monte Carlo draws");
}

#[test]
fn simulate_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "experiment = \"mvn_grid\"\nn_reps = 10\nseed = 1\n").unwrap();
    let out = run(&["simulate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn monitor_supports_a_single_quantile_level() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("one_level.csv");
    write_clustered_csv(&csv, &[("base", 15.5), ("low", 14.0)], 29);
    let out = run(&[
        "monitor",
        csv.to_str().unwrap(),
        "--levels",
        "0.5",
        "--seed",
        "3",
        "--boot",
        "99",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    // defaults drop the bivariate-only method when one level is monitored
    assert!(text.contains("p[LRT]") && text.contains("p[mLR]") && !text.contains("p[PW]"));
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        onesided::sim::SimulationConfig::from_toml(&text)
            .unwrap_or_else(|e| panic!("{} does not validate: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 8, "expected the shipped configuration set, found {seen}");
}

#[test]
fn critvals_prints_the_reference_row() {
    let out = run(&["critvals", "--n", "50", "--p", "2", "--alpha", "0.05"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let line = text.lines().find(|l| l.starts_with("c ")).unwrap();
    let values: Vec<f64> =
        line.split_whitespace().skip(1).map(|v| v.parse().unwrap()).collect();
    let want = [5.64, 5.37, 4.98, 4.58, 4.12, 3.47];
    for (v, w) in values.iter().zip(want) {
        assert!((v - w).abs() < 0.01, "{v} vs {w}");
    }
    // unsupported dimension is a usage error
    let out = run(&["critvals", "--p", "3"]);
    assert_eq!(out.status.code(), Some(64));
}

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tmsprt"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run_with_stdin(args: &[&str], stdin: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const TEST_ARGS: [&str; 11] = [
    "test", "--variant", "trunc-nested", "--delta", "0.5", "--tau", "1", "--sigma", "1", "--alpha", "0.05",
];

#[test]
fn fixture_stream_matches_golden_record() {
    let input = fixture("normal_100_seed7.txt");
    let out = bin()
        .args(TEST_ARGS)
        .args(["--max-n", "100", "--input", input.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let got: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    let want: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixture("normal_100_seed7.golden.json")).unwrap()).unwrap();
    assert_eq!(got["verdict"], want["verdict"]);
    assert_eq!(got["n"], want["n"]);
    for key in ["relative_stop", "log_lambda", "p_value"] {
        let (g, w) = (got[key].as_f64().unwrap(), want[key].as_f64().unwrap());
        assert!((g - w).abs() <= 1e-8 * w.abs().max(1.0), "{key}: {g} vs {w}");
    }
}

#[test]
fn stdin_stream_with_comments_and_verbose_trace() {
    let out = run_with_stdin(
        &[&TEST_ARGS[..], &["--max-n", "3", "--verbose"]].concat(),
        "# warm-up\n0.1\n\n-0.2 # note\n0.3\n",
    );
    assert_eq!(out.status.code(), Some(0));
    let rec: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(rec["verdict"], "accept-at-horizon");
    assert_eq!(rec["n"], 3);
    let keys: Vec<&str> = rec.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys.len(), 5);
    for k in ["verdict", "n", "relative_stop", "log_lambda", "p_value"] {
        assert!(keys.contains(&k));
    }
    assert_eq!(stderr(&out).lines().count(), 3);
}

#[test]
fn rejection_stops_reading() {
    let out = run_with_stdin(&[&TEST_ARGS[..], &["--max-n", "100"]].concat(), "10\nnot-a-number\n");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rec: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(rec["verdict"], "reject-null");
    assert_eq!(rec["n"], 1);
}

#[test]
fn empty_input_exits_two() {
    let out = run_with_stdin(&[&TEST_ARGS[..], &["--max-n", "10"]].concat(), "");
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("0 observations"));
}

#[test]
fn malformed_line_is_named() {
    let out = run_with_stdin(&[&TEST_ARGS[..], &["--max-n", "10"]].concat(), "0.1\n# ok\nabc\n");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_one() {
    let bad: &[&[&str]] = &[
        &["test", "--delta", "0.5", "--alpha", "1.5", "--max-n", "10"],
        &["test", "--delta", "0.5", "--alpha", "0.05", "--max-n", "0"],
        &["test", "--alpha", "0.05", "--max-n", "10"],
        &["test", "--variant", "classic-sprt", "--alpha", "0.05", "--max-n", "10"],
        &["test", "--delta", "0.5", "--alpha", "0.05", "--max-n", "10", "--beta", "0.2"],
        &["expectation", "--delta", "1", "--true-mean", "0", "--n-draws", "0", "--seed", "1"],
        &["oracle-check", "--samples", "0"],
        &["simulate", "--preset", "two-sided-null", "--scale", "0", "--seed", "1", "--out", "x.csv"],
        &["simulate", "--preset", "nope", "--seed", "1", "--out", "x.csv"],
        &["simulate", "--preset", "disjoint", "--out", "x.csv"],
    ];
    for args in bad {
        let out = run_with_stdin(args, "");
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn classic_sprt_two_boundary() {
    let out = run_with_stdin(
        &[
            "test", "--variant", "classic-sprt", "--theta1", "1", "--alpha", "0.05", "--beta", "0.2", "--max-n", "100",
        ],
        &"0\n".repeat(10),
    );
    assert_eq!(out.status.code(), Some(0));
    let rec: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(rec["verdict"], "accept-null-early");
    assert_eq!(rec["n"], 4);
}

#[test]
fn help_lists_every_flag_with_units() {
    let expect: &[(&str, &[&str])] = &[
        ("test", &["--variant", "--delta", "--tau", "--sigma", "--alpha", "--max-n", "--beta", "--input", "--verbose"]),
        ("simulate", &["--preset", "--config", "--scale", "--desk", "--seed", "--out", "--jobs", "--compare"]),
        ("expectation", &["--true-mean", "--mode", "--n-draws", "--n-inner", "--seed", "--out"]),
        ("martingale", &["--true-mean", "--prefix-n", "--prefix-sum", "--n-draws", "--tail-ratio", "--seed"]),
        ("oracle-check", &["--samples", "--seed", "--variant", "--tolerance"]),
    ];
    for (cmd, flags) in expect {
        let out = bin().args([cmd, "--help"]).output().unwrap();
        assert_eq!(out.status.code(), Some(0));
        let help = stdout(&out);
        for f in *flags {
            assert!(help.contains(f), "{cmd} help lacks {f}");
        }
        assert!(help.contains('['), "{cmd} help lacks unit annotations");
    }
}

#[test]
fn oracle_check_passes_and_skips_sprt() {
    let out = bin().args(["oracle-check", "--samples", "30"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("classic-sprt") && text.contains("skipped"));
    assert_eq!(text.lines().filter(|l| l.ends_with("ok")).count(), 6);
    let out = bin().args(["oracle-check", "--variant", "classic-sprt"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(str::to_owned).collect()
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("grid.toml");
    fs::write(
        &path,
        r#"
[[scenario]]
scenario_id = "null-centre"
variant = "trunc-nested"
theta_over_delta = 0.0
delta_over_tau = 1.0
tau2 = 1.0
alpha = 0.05
max_n = 50
n_replicates = 40

[[scenario]]
scenario_id = "alt-far"
variant = "trunc-nested"
theta_over_delta = 1.8
delta_over_tau = 0.5
tau2 = 1.0
alpha = 0.05
max_n = 50
n_replicates = 40
"#,
    )
    .unwrap();
    path
}

#[test]
fn simulate_config_schema_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_path = dir.path().join("grid.csv");
    let out = bin()
        .args(["simulate", "--config", cfg.to_str().unwrap(), "--seed", "7", "--jobs", "2"])
        .args(["--out", out_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(
        header(&out_path),
        [
            "scenario_id", "variant", "theta_over_delta", "delta_over_tau", "tau2", "alpha", "max_n",
            "n_replicates", "rejection_rate", "rejection_se", "mean_relative_stop", "stop_se", "master_seed",
        ]
    );
    let mut reader = csv::Reader::from_path(&out_path).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let rate: f64 = row[8].parse().unwrap();
        assert!((0.0..=1.0).contains(&rate));
        let stop: f64 = row[10].parse().unwrap();
        assert!(stop > 0.0 && stop <= 1.0);
        assert_eq!(&row[12], "7");
        row[6].parse::<u64>().unwrap();
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("grid.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["master_seed"], 7);
    for k in ["resolved_parameters", "toolkit_version", "started_at", "finished_at", "config_path"] {
        assert!(manifest.get(k).is_some(), "manifest lacks {k}");
    }

    // same config, comparison mode: only the alternative row is allowed
    let cmp_path = dir.path().join("cmp.csv");
    let out = bin()
        .args(["simulate", "--config", cfg.to_str().unwrap(), "--seed", "7", "--compare"])
        .args(["--out", cmp_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("null-centre"));
}

#[test]
fn simulate_is_deterministic_across_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let mut bytes = Vec::new();
    for jobs in ["1", "8"] {
        let p = dir.path().join(format!("j{jobs}.csv"));
        let out = bin()
            .args(["simulate", "--config", cfg.to_str().unwrap(), "--seed", "11", "--jobs", jobs])
            .args(["--out", p.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        bytes.push(fs::read(&p).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn misspec_preset_schema() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("misspec.csv");
    let out = bin()
        .args(["simulate", "--preset", "misspec", "--desk", "--scale", "0.01", "--seed", "3"])
        .args(["--out", p.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let h = header(&p);
    assert_eq!(h.len(), 17);
    assert_eq!(&h[13..], ["gamma2", "tau_over_gamma", "delta_over_x", "side"]);
    let rows = csv::Reader::from_path(&p).unwrap().records().count();
    assert_eq!(rows, 2 * 5 * 5 * 2 * 2);
}

#[test]
fn comparison_preset_schema() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cmp.csv");
    let out = bin()
        .args(["simulate", "--preset", "msprt-comparison", "--desk", "--scale", "0.01", "--seed", "3"])
        .args(["--out", p.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(
        header(&p),
        ["scenario_id", "power_trunc", "power_msprt", "power_ratio", "stop_ratio", "flags"]
    );
}

#[test]
fn diagnostics_schema_and_reproducibility() {
    let args = ["expectation", "--delta", "1", "--true-mean", "-0.5,0,0.5", "--n-draws", "2000", "--seed", "5"];
    let a = bin().args(args).output().unwrap();
    let b = bin().args(args).output().unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "theta0,variant,mode,estimate,std_error,n_draws,seed");
    assert_eq!(lines.count(), 3);

    let out = bin()
        .args(["martingale", "--delta", "1", "--true-mean", "0.3", "--prefix-n", "10", "--prefix-sum", "3"])
        .args(["--tail-ratio", "--n-draws", "2000", "--seed", "5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains(",tail-ratio,"));
}

#[test]
fn wide_rope_expectation_is_one() {
    let out = bin()
        .args(["expectation", "--delta", "50", "--true-mean", "0,10", "--n-draws", "5000", "--seed", "2"])
        .output()
        .unwrap();
    let text = stdout(&out);
    for line in text.lines().skip(1) {
        let est: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!((est - 1.0).abs() < 1e-6, "{line}");
    }
}

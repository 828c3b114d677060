//! End-to-end tests of the command-line surface: file formats, verdicts,
//! exit codes, and bit-reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nobacktrack"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn analyze_line_walk_reports_reversible_and_irreducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["export", "line:5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run_in(dir.path(), &["analyze", "line_5.json"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("reversible: true"));
    assert!(text.contains("irreducible: true"));
    assert!(text.contains("stationary: [0.200000"));
}

#[test]
fn analyze_counterexample_reports_non_reversible() {
    let dir = tempfile::tempdir().unwrap();
    run_in(
        dir.path(),
        &["export", "counterexample-old", "--out", "cx.json"],
    );
    let out = run_in(dir.path(), &["analyze", "cx.json"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("reversible: false"));
}

#[test]
fn malformed_row_exits_with_io_error_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"states": ["a", "b"], "T": [[0.5, 0.4], [0.5, 0.5]]}"#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["analyze", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sums to 0.9"));
}

#[test]
fn unknown_example_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["export", "klein-bottle:7"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn lift_line_walk_writes_deterministic_ten_state_chain() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), &["export", "line:5"]);
    let out = run_in(
        dir.path(),
        &[
            "lift",
            "line_5.json",
            "--kernel",
            "liu",
            "--out",
            "lifted.json",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("pairs: 10"));
    let file: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("lifted.json")).unwrap())
            .unwrap();
    let states = file["states"].as_array().unwrap();
    assert_eq!(states.len(), 10);
    assert_eq!(states[1], "(1|2)");
    // Every row of the modified line walk is a point mass.
    for row in file["T"].as_array().unwrap() {
        let ones = row
            .as_array()
            .unwrap()
            .iter()
            .filter(|v| v.as_f64().unwrap() == 1.0)
            .count();
        assert_eq!(ones, 1);
    }
    // Provenance map sits next to the chain.
    let pairs: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("lifted.json.pairs.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(pairs["pairs"].as_array().unwrap().len(), 10);
    assert_eq!(pairs["base_states"].as_array().unwrap().len(), 5);
}

#[test]
fn identity_kernel_keeps_backtracking_probability() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), &["export", "line:5"]);
    let out = run_in(
        dir.path(),
        &[
            "lift",
            "line_5.json",
            "--kernel",
            "identity",
            "--out",
            "plain.json",
        ],
    );
    assert!(out.status.success());
    let file: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("plain.json")).unwrap())
            .unwrap();
    let states: Vec<String> = file["states"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let row_of = |label: &str| states.iter().position(|s| s == label).unwrap();
    let from = row_of("(1|2)");
    let back = row_of("(2|1)");
    let on = row_of("(2|3)");
    let t = file["T"].as_array().unwrap();
    assert_eq!(t[from][back].as_f64().unwrap(), 0.5);
    assert_eq!(t[from][on].as_f64().unwrap(), 0.5);
}

#[test]
fn lift_flags_two_state_exemption() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("flip.json"),
        r#"{"states": ["a", "b"], "T": [[0.0, 1.0], [1.0, 0.0]]}"#,
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &[
            "lift",
            "flip.json",
            "--kernel",
            "liu",
            "--out",
            "flip.lifted.json",
        ],
    );
    assert!(out.status.success());
    assert!(stdout(&out).contains("two-state exemption"));
}

#[test]
fn lift_rejects_non_reversible_chain_with_check_failure() {
    let dir = tempfile::tempdir().unwrap();
    run_in(
        dir.path(),
        &["export", "counterexample-old", "--out", "cx.json"],
    );
    let out = run_in(dir.path(), &["lift", "cx.json", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("not reversible"));
}

#[test]
fn compare_line_walk_reports_zero_modified_variance() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), &["export", "line:5"]);
    let out = run_in(
        dir.path(),
        &[
            "compare",
            "line_5.json",
            "--n",
            "5000",
            "--reps",
            "40",
            "--seed",
            "1",
            "--out",
            "cmp.json",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("ordering holds: true"));
    assert!(text.contains("infinite"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cmp.json")).unwrap())
            .unwrap();
    assert!(report["modified"]["exact"].as_f64().unwrap().abs() <= 1e-10);
    assert!(report.get("exact_ratio").is_none());
    assert_eq!(report["seed"], 1);
    assert!(report["base"]["stderr"].as_f64().unwrap() > 0.0);
}

#[test]
fn compare_rectangle_reports_finite_ratio_above_one() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), &["export", "rectangle:4x3"]);
    let out = run_in(
        dir.path(),
        &[
            "compare",
            "rectangle_4_3.json",
            "--n",
            "4000",
            "--reps",
            "30",
            "--seed",
            "2",
            "--out",
            "cmp.json",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cmp.json")).unwrap())
            .unwrap();
    assert!(report["exact_ratio"].as_f64().unwrap() > 1.0);
    assert_eq!(report["ordering_holds"], true);
}

#[test]
fn compare_random_chains_always_satisfy_the_ordering() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..3 {
        let name = format!("r{seed}.json");
        let out = run_in(
            dir.path(),
            &[
                "export",
                "random:6:0.5",
                "--seed",
                &seed.to_string(),
                "--out",
                &name,
            ],
        );
        assert!(out.status.success());
        let out = run_in(
            dir.path(),
            &[
                "compare", &name, "--n", "2000", "--reps", "20", "--seed", "7",
            ],
        );
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stdout(&out).contains("ordering holds: true"));
    }
}

#[test]
fn compare_csv_format_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), &["export", "line:3"]);
    let out = run_in(
        dir.path(),
        &[
            "compare",
            "line_3.json",
            "--n",
            "2000",
            "--reps",
            "20",
            "--seed",
            "0",
            "--format",
            "csv",
            "--out",
            "cmp.csv",
        ],
    );
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("cmp.csv")).unwrap();
    assert!(csv.starts_with("chain,exact,empirical,stderr,n,reps,seed"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn blocks_counterexample_emits_typed_csv_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "blocks",
            "counterexample",
            "--n",
            "100000",
            "--seed",
            "3",
            "--out",
            "cx",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("|N_AA - N_BB| <= 1 on the new trace: true"));
    assert!(text.contains("old boundaries keep the state: true"));
    assert!(text.contains("new boundaries flip the state: true"));
    for side in ["old", "new"] {
        let csv = std::fs::read_to_string(dir.path().join(format!("cx.{side}.csv"))).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "type,H,L");
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            let h: f64 = fields[1].parse().unwrap();
            match fields[0] {
                "AB" => assert_eq!(h, 1.0),
                "BA" => assert_eq!(h, -1.0),
                "AA" | "BB" => assert_eq!(h, 0.0),
                other => panic!("unexpected type {other}"),
            }
        }
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cx.json")).unwrap())
            .unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["seed"], 3);
}

#[test]
fn blocks_accepts_custom_elementary_pair_file() {
    let dir = tempfile::tempdir().unwrap();
    // The printed 3x3 matrices: T and the middle matrix differ on one state
    // pair, so they form an elementary dominated pair.
    let pair = r#"{
        "old": {"states": ["1", "2", "3"],
                "T": [[0.4, 0.4, 0.2], [0.4, 0.4, 0.2], [0.4, 0.4, 0.2]],
                "pi": [0.4, 0.4, 0.2]},
        "new": {"states": ["1", "2", "3"],
                "T": [[0.3, 0.5, 0.2], [0.5, 0.3, 0.2], [0.4, 0.4, 0.2]]},
        "a": "1",
        "b": "2"
    }"#;
    std::fs::write(dir.path().join("pair.json"), pair).unwrap();
    let out = run_in(
        dir.path(),
        &[
            "blocks",
            "pair.json",
            "--n",
            "50000",
            "--seed",
            "5",
            "--out",
            "pm",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("pm.json")).unwrap())
            .unwrap();
    assert_eq!(report["classic"], true);
    assert_eq!(report["stratification_bound_holds"], true);
}

#[test]
fn reproduce_targets_pass_and_are_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for target in ["counterexample", "peskun-matrices", "rectangle"] {
        let out = run_in(
            dir.path(),
            &["reproduce", target, "--seed", "0", "--out", "a"],
        );
        assert!(out.status.success(), "{target}: {}", stderr(&out));
        assert!(stdout(&out).contains("PASS"));
        let out = run_in(
            dir.path(),
            &["reproduce", target, "--seed", "0", "--out", "b"],
        );
        assert!(out.status.success());
    }
    for entry in std::fs::read_dir(dir.path().join("a")).unwrap() {
        let name = entry.unwrap().file_name();
        let a = std::fs::read(dir.path().join("a").join(&name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs between identical invocations");
    }
    let counterexample: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("a/counterexample.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(counterexample["pass"], true);
    assert!(counterexample["v_old"].as_f64().unwrap() <= 1e-10);
    assert!(counterexample["v_new"].as_f64().unwrap() >= 0.01);
}

#[test]
fn reproduce_line_emits_scaling_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["reproduce", "line", "--out", "r"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r/line.json")).unwrap())
            .unwrap();
    assert_eq!(report["pass"], true);
    let slope = report["inflation_slope"].as_f64().unwrap();
    assert!((slope - 2.0).abs() <= 0.2);
    let csv = std::fs::read_to_string(dir.path().join("r/line.csv")).unwrap();
    assert!(csv.starts_with("N,v_original,v_modified,var_pi_f,inflation"));
    assert_eq!(csv.lines().count(), 9);
}

#[test]
fn reproduce_unknown_target_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["reproduce", "everything"]);
    assert_eq!(out.status.code(), Some(2));
}

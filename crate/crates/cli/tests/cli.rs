use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_schurmult"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).expect("output file")
}

#[test]
fn check_triangular_has_unit_constants() {
    let out = run(&["check", "--catalog", "triangular", "--nmax", "10"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["report"]["single_direction"], 1.0);
    assert_eq!(v["report"]["sup_bound"], 1.0);
    assert_eq!(v["config"]["n_max"], 10);
}

#[test]
fn check_constant_one() {
    let out = run(&["check", "--catalog", "constant_one"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["report"]["sup_bound"], 1.0);
    assert_eq!(v["report"]["single_direction"], 0.0);
    assert_eq!(v["report"]["left_sup"], 0.0);
    assert_eq!(v["report"]["right_sup"], 0.0);
}

#[test]
fn check_threshold_breach_exits_one() {
    let out = run(&["check", "--catalog", "triangular", "--threshold", "0.5"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn malformed_spec_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{bad").unwrap();
    let out = run(&["check", "--spec", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 1 column 2"), "{err}");
}

#[test]
fn unknown_catalog_name_is_an_input_error() {
    assert_eq!(code(&run(&["check", "--catalog", "no_such_symbol"])), 2);
}

#[test]
fn verify_default_passes() {
    let out = run(&["verify"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_zero_trials_warns() {
    let out = run(&["verify", "--trials", "0"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn verify_detects_planted_fault() {
    assert_eq!(code(&run(&["verify", "--inject-fault"])), 1);
}

#[test]
fn estimate_constant_symbol_is_one() {
    let out = run(&["estimate", "--catalog", "constant_one", "--p", "3", "--n", "16"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let est = v["results"][0]["estimate"].as_f64().unwrap();
    assert!((est - 1.0).abs() <= 1e-12, "{est}");
}

#[test]
fn estimate_triangular_at_two_is_sup() {
    let out = run(&["estimate", "--catalog", "triangular", "--p", "2", "--n", "32"]);
    assert_eq!(code(&out), 0);
    let est = json(&out)["results"][0]["estimate"].as_f64().unwrap();
    assert!((est - 1.0).abs() <= 1e-6, "{est}");
}

#[test]
fn growth_writes_table_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("growth.csv");
    let out = run(&[
        "growth",
        "--catalog",
        "triangular",
        "--p",
        "4/3,2,4",
        "--n",
        "16,32,64",
        "--format",
        "csv",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(&csv_path);
    let (first, body) = text.split_once('\n').unwrap();
    assert!(first.starts_with("# config: "));
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["symbol", "d", "p", "N", "k_amp", "estimate", "reference", "ratio", "restarts", "iterations", "seed"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 9);
    for block in rows.chunks(3) {
        let est: Vec<f64> = block.iter().map(|r| r[5].parse().unwrap()).collect();
        assert!(est.windows(2).all(|w| w[1] >= w[0]), "{est:?}");
    }
    let dat = read(&csv_path.with_extension("dat"));
    assert!(dat.starts_with("# config: "));
    assert_eq!(dat.matches("# p = ").count(), 3);
}

#[test]
fn discretize_linear_symbol_matches_cell_average() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("lin.json");
    std::fs::write(&spec, r#"{"kind":"continuous","expr":"x1-y1"}"#).unwrap();
    let dense = dir.path().join("dense.json");
    let out = run(&[
        "discretize",
        "--spec",
        spec.to_str().unwrap(),
        "--k",
        "3",
        "--window",
        "0,8",
        "--out",
        dense.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&read(&dense)).unwrap();
    assert_eq!(v["config"]["command"], "discretize");
    let entries = v["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 8);
    for (s, row) in entries.iter().enumerate() {
        for (t, z) in row.as_array().unwrap().iter().enumerate() {
            let want = (s as f64 - t as f64) / 8.0 - 1.0 / 16.0;
            assert!((z[0].as_f64().unwrap() - want).abs() <= 1e-12, "({s},{t})");
            assert_eq!(z[1].as_f64().unwrap(), 0.0);
        }
    }
    let check = run(&["check", "--spec", dense.to_str().unwrap()]);
    assert_eq!(code(&check), 2);
    assert!(String::from_utf8_lossy(&check.stderr).contains("outside the dense window"));
}

#[test]
fn discretize_constant_has_zero_variation() {
    let out = run(&["discretize", "--catalog", "continuous_constant(0.5)", "--k", "4"]);
    assert_eq!(code(&out), 0);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("C1=0.5 C2=0"), "{err}");
}

#[test]
fn arctan_discretization_stays_below_continuous_constant() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("transfer.json");
    let out = run(&["discretize", "--catalog", "arctan_diff", "--k", "3", "--report", report.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_str(&read(&report)).unwrap();
    let a = v["continuous_A"].as_f64().unwrap();
    assert!((a - 0.6435).abs() < 1e-3, "{a}");
    assert!(v["discrete_variation"].as_f64().unwrap() <= a + 1e-6, "{v}");
    assert_eq!(v["within_A"], true);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = run(&[
            "estimate",
            "--catalog",
            "lacunary_toeplitz(3)",
            "--p",
            "3",
            "--n",
            "8",
            "--seed",
            "7",
            "--format",
            "csv",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
    }
    let (ta, tb) = (read(&a), read(&b));
    let body = |t: &str| t.lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&ta), body(&tb));
    assert_eq!(ta.replace("a.csv", "b.csv"), tb);
}

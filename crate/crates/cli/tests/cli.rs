//! End-to-end tests of the `skewlab` binary: exit codes, output formats,
//! and reproducibility.

use std::process::Command;

fn skewlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_skewlab"))
}

fn strip_timestamp(json: &str) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(json).expect("valid json");
    v.as_object_mut().unwrap().remove("timestamp_unix");
    v
}

#[test]
fn analyze_su3_exits_zero_with_expected_report() {
    let out = skewlab()
        .args(["analyze", "--form", "catalog:su3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = strip_timestamp(&String::from_utf8(out.stdout).unwrap());
    let report = &v["result"]["report"];
    assert_eq!(report["simple"], true);
    assert_eq!(report["rank"], 2);
    assert_eq!(report["invariant_threeform_dim"], 1);
    assert_eq!(report["stht_implication"], "passed");
}

#[test]
fn analyze_e123_r4_is_reducible() {
    let out = skewlab()
        .args(["analyze", "--form", "catalog:e123_r4"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v = strip_timestamp(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(v["result"]["report"]["irreducible"], false);
    assert_eq!(v["result"]["closure_dim"], 3);
}

#[test]
fn analyze_bad_json_exits_one_naming_the_triple() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"dim": 4, "terms": [{"i": 2, "j": 1, "k": 3, "c": 1.0}]}"#,
    )
    .unwrap();
    let out = skewlab()
        .args(["analyze", "--form", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("(2,1,3)"), "stderr: {stderr}");
}

#[test]
fn analyze_valid_json_file_round_trips_through_export() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("su2.json");
    let export = skewlab()
        .args(["catalog", "export", "su2"])
        .output()
        .unwrap();
    assert!(export.status.success());
    std::fs::write(&path, &export.stdout).unwrap();
    let out = skewlab()
        .args(["analyze", "--form", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v = strip_timestamp(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(v["result"]["closure_dim"], 3);
}

#[test]
fn flat_scan_lambda_zero_exits_one() {
    let out = skewlab()
        .args(["flat-scan", "--group", "su2", "--lambda", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn flat_scan_csv_zero_rows_at_half() {
    let out = skewlab()
        .args([
            "flat-scan", "--group", "su2", "--lambda", "2", "--grid", "-2:2:401",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("f,max_curv_norm"));
    let zeros: Vec<f64> = lines
        .filter_map(|l| {
            let (f, norm) = l.split_once(',')?;
            (norm.parse::<f64>().ok()? < 1e-10).then(|| f.parse::<f64>().unwrap())
        })
        .collect();
    assert_eq!(zeros, vec![-0.5, 0.5]);
}

#[test]
fn transport_csv_has_expected_columns_and_small_residuals() {
    let out = skewlab()
        .args([
            "transport", "--group", "su3", "--lambda", "1.5", "--f", "const:0.3", "--tmax", "1",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("t,residual_lemma,residual_corollary,orthogonality_defect")
    );
    let mut max_residual: f64 = 0.0;
    let mut rows = 0;
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols.len(), 4);
        max_residual = max_residual.max(cols[1]).max(cols[2]);
        rows += 1;
    }
    assert_eq!(rows, 1001);
    assert!(max_residual < 1e-7, "max residual {max_residual:.3e}");
}

#[test]
fn holonomy_report_hol_dim_eight_on_su3() {
    let out = skewlab()
        .args([
            "holonomy", "--group", "su3", "--lambda", "2", "--f", "trace:1,0.5", "--samples", "8",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v = strip_timestamp(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(v["result"]["hol_dim"], 8);
}

#[test]
fn reports_are_byte_identical_modulo_timestamp() {
    let run = || {
        skewlab()
            .args([
                "holonomy", "--group", "su2", "--lambda", "2", "--f", "trace:1,0.5",
                "--samples", "4", "--seed", "7",
            ])
            .output()
            .unwrap()
    };
    let a = run();
    let b = run();
    assert!(a.status.success() && b.status.success());
    let va = strip_timestamp(&String::from_utf8(a.stdout).unwrap());
    let vb = strip_timestamp(&String::from_utf8(b.stdout).unwrap());
    assert_eq!(
        serde_json::to_string(&va).unwrap(),
        serde_json::to_string(&vb).unwrap()
    );
}

#[test]
fn seed_env_var_is_honored_and_flag_wins() {
    let with_env = skewlab()
        .env("SKEWLAB_SEED", "5")
        .args(["analyze", "--form", "catalog:su2"])
        .output()
        .unwrap();
    let v = strip_timestamp(&String::from_utf8(with_env.stdout).unwrap());
    assert_eq!(v["config"]["seed"], 5);

    let with_flag = skewlab()
        .env("SKEWLAB_SEED", "5")
        .args(["analyze", "--form", "catalog:su2", "--seed", "9"])
        .output()
        .unwrap();
    let v = strip_timestamp(&String::from_utf8(with_flag.stdout).unwrap());
    assert_eq!(v["config"]["seed"], 9);
}

#[test]
fn unknown_subcommand_and_bad_flags_exit_one() {
    let out = skewlab().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = skewlab()
        .args(["transport", "--group", "su2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn curvature_with_loop_check() {
    let out = skewlab()
        .args([
            "curvature", "--group", "su2", "--lambda", "2", "--f", "const:1", "--loop-s", "0.01",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v = strip_timestamp(&String::from_utf8(out.stdout).unwrap());
    let rel = v["result"]["loop_check"]["relative_error"].as_f64().unwrap();
    assert!(rel < 0.05, "relative error {rel}");
    assert_eq!(v["result"]["antisymmetry_defect"], 0.0);
}

#[test]
fn tolerance_flags_reach_the_report() {
    let out = skewlab()
        .args([
            "analyze", "--form", "catalog:e123_r4", "--tol-rank", "1e-8", "--ode-step", "0.002",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v = strip_timestamp(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(v["config"]["tolerances"]["rank_rtol"], 1e-8);
    assert_eq!(v["config"]["tolerances"]["ode_step"], 0.002);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scan.csv");
    let out = skewlab()
        .args([
            "flat-scan", "--group", "su2", "--lambda", "1", "--grid", "-2:2:41", "--out",
            path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(&path).unwrap();
    assert!(csv.starts_with("f,max_curv_norm"));
    assert_eq!(csv.lines().count(), 42);
}

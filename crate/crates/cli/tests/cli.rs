use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ssb-erasure"))
}

fn ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: &str = r#"
replicas = 20
bootstrap_resamples = 20
trotter_p = 4
[lattice]
rows = 4
cols = 4
[schedule]
duration_us = 20.0
"#;

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn run_verify_compare_and_rerun_from_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let a = tmp.path().join("a");
    ok(bin()
        .args(["run", "--experiment", "classical_bit", "--seed", "4", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&a));
    for f in ["histograms.csv", "forces.csv", "ledger.csv", "report.json", "manifest.json"] {
        assert!(a.join(f).exists(), "{f} missing");
    }
    assert!(ok(bin().arg("verify").arg(&a)).contains("4 files verified"));

    let self_cmp = ok(bin().arg("compare").arg(&a).arg(&a));
    let v: serde_json::Value = serde_json::from_str(&self_cmp).unwrap();
    assert_eq!(v["max_tv"].as_f64(), Some(0.0));

    let b = tmp.path().join("b");
    ok(bin().args(["run", "--config"]).arg(a.join("manifest.json")).arg("--out").arg(&b));
    for f in ["histograms.csv", "forces.csv", "ledger.csv", "report.json"] {
        assert_eq!(read(&a, f), read(&b, f), "{f} differs");
    }

    // existing output directories are never reused
    let again = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&a).output().unwrap();
    assert!(!again.status.success());

    std::fs::write(a.join("ledger.csv"), b"tampered\n").unwrap();
    assert!(!bin().arg("verify").arg(&a).output().unwrap().status.success());
}

#[test]
fn quantum_and_classical_runs_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let c = tmp.path().join("c");
    let q = tmp.path().join("q");
    ok(bin().args(["run", "--experiment", "classical_cooperative", "--config"]).arg(&cfg).arg("--out").arg(&c));
    ok(bin()
        .args(["run", "--experiment", "quantum_cooperative", "--engine", "sqa", "--replicas", "20", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&q));
    let out = ok(bin().arg("compare").arg(&c).arg(&q).args(["--metric", "switching"]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["switching"].as_array().unwrap().len(), 4);
    assert!(v["total_variation"].is_null());
}

#[test]
fn oracle_suite_and_scan_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("o.toml");
    std::fs::write(&cfg, "[oracle]\npaths = 3\nmax_sites = 2\n").unwrap();
    let o = tmp.path().join("o");
    ok(bin().args(["oracle-suite", "--config"]).arg(&cfg).arg("--out").arg(&o));
    let r: serde_json::Value = serde_json::from_slice(&read(&o, "report.json")).unwrap();
    assert_eq!(r["all_pass"], true);

    let scan_cfg = tmp.path().join("s.toml");
    std::fs::write(
        &scan_cfg,
        "replicas = 4\n[lattice]\nrows = 4\ncols = 4\nboundary = \"periodic\"\n[jc_scan]\npoints = 4\ntau_us = 100.0\n",
    )
    .unwrap();
    let s = tmp.path().join("s");
    ok(bin().args(["jc-scan", "--config"]).arg(&scan_cfg).arg("--out").arg(&s));
    let csv = String::from_utf8(read(&s, "scan.csv")).unwrap();
    assert!(csv.starts_with("J_GHz,mean_abs_mz,stderr\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn rejects_bad_arguments() {
    assert!(!bin().args(["run", "--engine", "warp"]).output().unwrap().status.success());
    assert!(!bin().args(["run", "--experiment", "jc_scan"]).output().unwrap().status.success());
}

use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
seed = 2
dense_angles = 90
[phantom]
kind = "modified-shepp-logan"
size = 16
[simulation]
configs = ["i", "ii"]
[method.fbp]
[method.dps]
strategy = "dcgrad"
steps = 5
[prior]
training = 4
[tune]
method = "dps"
param = "eta"
values = [0.1, 1]
holdouts = 2
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_ctdiff"))
        .args(args)
        .arg("--config")
        .arg(dir.join("plan.toml"))
        .arg("--set")
        .arg(format!("output={}", dir.join("out").display()))
        .output()
        .unwrap();
    out
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn every_subcommand_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("plan.toml"), CONFIG).unwrap();
    let out = dir.join("out");

    ok(dir, &["simulate"]);
    assert!(out.join("truth.raw").exists());
    assert!(out.join("observed_ii.raw.geom").exists());

    ok(dir, &["reconstruct"]);
    assert!(out.join("dps_i.raw").exists());

    let bench = ok(dir, &["benchmark"]);
    assert!(bench.contains("4 cells (0 failed)"), "{bench}");
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    let tuned = ok(dir, &["tune", "--set", "tune.values=0.5"]);
    assert!(tuned.contains("dps.eta = 0.5"), "{tuned}");

    let input = out.join("fbp_i_r0.raw");
    let m = ok(dir, &[
        "metrics",
        "--set", &format!("metrics.recon={}", input.display()),
        "--set", &format!("metrics.reference={}", out.join("truth.raw").display()),
        "--set", &format!("metrics.observed={}", out.join("observed_i.raw").display()),
    ]);
    assert!(m.starts_with("psnr="), "{m}");

    let d = ok(dir, &[
        "decompose",
        "--set", &format!("decompose.input={}", input.display()),
        "--set", "decompose.config=ii",
        "--set", "decompose.max_iterations=100000",
    ]);
    assert!(d.contains("null_energy_fraction="), "{d}");
    assert!(out.join("x_null.raw").exists());

    let bad = run(dir, &["benchmark", "--set", "method.dps.wobble=1"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("wobble"));
}

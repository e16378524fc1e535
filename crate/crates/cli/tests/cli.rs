use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn maxprod(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxprod"))
        .current_dir(dir)
        .env_remove("MAXPROD_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn bound_real_writes_reports_under_the_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reports");
    let status = Command::new(env!("CARGO_BIN_EXE_maxprod"))
        .current_dir(dir.path())
        .env("MAXPROD_OUT_DIR", &out)
        .args([
            "bound-real",
            "--kernel",
            "bspline:2",
            "--phi",
            "p:1",
            "--signal",
            "hat",
            "--n-grid",
            "4,8,16",
        ])
        .output()
        .unwrap();
    assert_eq!(
        status.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let csv = std::fs::read_to_string(out.join("bound-real.csv")).unwrap();
    assert!(csv.starts_with("n,lhs,term1,term2,term3,slack\n"));
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("bound-real.json")).unwrap())
            .unwrap();
    assert_eq!(json["verdict"]["passed"], true);
}

#[test]
fn shipped_interval_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("bound-interval-fejer-p2-sin2.toml");
    let out = maxprod(
        dir.path(),
        &["bound-interval", "--config", &cfg, "--out-dir", "r"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let csv =
        std::fs::read_to_string(dir.path().join("r/bound-interval-fejer-p2-sin2.csv")).unwrap();
    assert!(csv.starts_with("n,lhs,k_functional,rhs,witness_rhs,slack\n"));
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"bad\"\nkernel = \"nope\"\nphi = \"p:1\"\nsignal = \"hat\"\ndomain = \"real:R=8\"\nn_grid = [4]\n").unwrap();
    let out = maxprod(
        dir.path(),
        &["bound-real", "--config", bad.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "name = \"u\"\nkernel = \"fejer\"\nphi = \"p:1\"\nsignal = \"hat\"\ndomain = \"real:R=8\"\nn_grid = [4]\ncolour = 1\n").unwrap();
    let out = maxprod(
        dir.path(),
        &["bound-real", "--config", unknown.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reconstruct_writes_the_sampled_operator() {
    let dir = tempfile::tempdir().unwrap();
    let out = maxprod(
        dir.path(),
        &[
            "reconstruct",
            "--kernel",
            "bspline:4",
            "--signal",
            "hat",
            "--n",
            "16",
            "--domain",
            "interval:0:1",
            "--points",
            "11",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,K_n(f)(x),f(x)"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0][0], 0.0);
    assert_eq!(rows[10][0], 1.0);
    assert!(rows.iter().all(|r| (r[1] - r[2]).abs() < 0.1));

    // At x = b the nearest shift in J_n is one cell away, where the hat kernel vanishes.
    let out = maxprod(
        dir.path(),
        &[
            "reconstruct",
            "--kernel",
            "bspline:2",
            "--signal",
            "hat",
            "--n",
            "16",
            "--domain",
            "interval:0:1",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn smoothness_matches_the_hat_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = maxprod(
        dir.path(),
        &[
            "smoothness",
            "--phi",
            "p:1",
            "--signal",
            "hat",
            "--deltas",
            "dyadic:4",
            "--out",
            "w.csv",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("w.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("delta,omega"));
    let mut count = 0;
    for line in lines {
        let (d, w) = line.split_once(',').unwrap();
        let (d, w): (f64, f64) = (d.parse().unwrap(), w.parse().unwrap());
        assert!((w - (2.0 * d - d * d / 2.0)).abs() < 1e-9, "{line}");
        count += 1;
    }
    assert_eq!(count, 4);
}

#[test]
fn verify_kernel_prints_constants() {
    let dir = tempfile::tempdir().unwrap();
    let out = maxprod(
        dir.path(),
        &["verify-kernel", "--kernel", "bspline:2", "--out", "k.json"],
    );
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let file: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("k.json")).unwrap()).unwrap();
    assert_eq!(json, file);
}

#[test]
fn kfun_reports_estimate_below_the_modular() {
    let dir = tempfile::tempdir().unwrap();
    let out = maxprod(
        dir.path(),
        &[
            "kfun", "--phi", "p:2", "--signal", "sin2", "--delta", "0.01",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("kfun.json")).unwrap())
            .unwrap();
    let k = json["estimate"]["value"].as_f64().unwrap();
    let plain = json["modular_of_f"]["value"].as_f64().unwrap();
    assert!(k >= 0.0 && k <= plain);
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvquant"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn curvquant")
}

fn ok(dir: &Path, args: &[&str]) {
    let o = run(dir, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn qmp_on_polar_chart() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["qmp", "--chart", "polar2", "--at", "1.0,0.0"]);
    let rows = csv_rows(&d.path().join("qmp.csv"));
    assert_eq!(rows[0], ["q1", "q2", "v_dw", "nu_correction_density"]);
    let v: f64 = rows[1][2].parse().unwrap();
    assert!((v - 0.125).abs() < 1e-12);
}

#[test]
fn conformal_table() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["conformal", "--n", "3", "--format", "json"]);
    let v: Value = serde_json::from_str(&fs::read_to_string(d.path().join("conformal.json")).unwrap()).unwrap();
    assert_eq!(v[0]["conformal"], "1/6");
    assert_eq!(v[0]["normal_coordinate"], "1/6");
    assert_eq!(v[0]["equal"], true);

    ok(d.path(), &["conformal", "--out", "all.csv"]);
    let rows = csv_rows(&d.path().join("all.csv"));
    let equal: Vec<&str> = rows[1..].iter().filter(|r| r[3] == "true").map(|r| r[0].as_str()).collect();
    assert_eq!(equal, ["3"]);
}

#[test]
fn circle_spectrum() {
    let d = tempfile::tempdir().unwrap();
    ok(
        d.path(),
        &["spectrum", "--chart", "circle-deformed:0", "--variant", "SCH", "--N", "256", "--k", "5", "--mass", "0.5"],
    );
    let rows = csv_rows(&d.path().join("spectrum.csv"));
    assert_eq!(rows[0], ["index", "eigenvalue", "variant", "chart", "N"]);
    for (row, want) in rows[1..].iter().zip([0.0, 1.0, 1.0, 4.0, 4.0]) {
        let e: f64 = row[1].parse().unwrap();
        assert!((e - want).abs() < 1e-3, "{e} vs {want}");
        assert_eq!(row[2], "SCH");
        assert_eq!(row[3], "circle-deformed:0");
        assert_eq!(row[4], "256");
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let d = tempfile::tempdir().unwrap();
    let args = ["qmp", "--chart", "sphere2:1", "--grid", "5,3", "--nu", "0.5"];
    ok(d.path(), &[&args[..], &["--out", "a.csv"]].concat());
    ok(d.path(), &[&args[..], &["--out", "b.csv"]].concat());
    let a = fs::read(d.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(d.path().join("b.csv")).unwrap());
    assert_eq!(csv_rows(&d.path().join("a.csv")).len(), 16);
}

#[test]
fn manifest_reruns_the_experiment() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["deform", "--eps", "0.02,0.01", "--at", "0.4,0.1", "--out", "first.csv"]);
    let m: Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("first.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "deform");
    assert_eq!(m["output"]["rows"], 2);
    assert!(m["timings"]["total_seconds"].as_f64().unwrap() >= 0.0);
    fs::write(d.path().join("rerun.toml"), m["config_toml"].as_str().unwrap()).unwrap();
    ok(d.path(), &["deform", "--config", "rerun.toml", "--out", "second.csv"]);
    assert_eq!(
        fs::read(d.path().join("first.csv")).unwrap(),
        fs::read(d.path().join("second.csv")).unwrap()
    );
}

#[test]
fn flags_override_config_file() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("c.toml"), "chart = \"polar2\"\nmass = 2.0\nat = [[2.0, 0.0]]\n").unwrap();
    ok(d.path(), &["qmp", "--config", "c.toml"]);
    let from_file: f64 = csv_rows(&d.path().join("qmp.csv"))[1][2].parse().unwrap();
    assert!((from_file - 1.0 / 64.0).abs() < 1e-15);
    ok(d.path(), &["qmp", "--config", "c.toml", "--mass", "0.5"]);
    let overridden: f64 = csv_rows(&d.path().join("qmp.csv"))[1][2].parse().unwrap();
    assert!((overridden - 1.0 / 16.0).abs() < 1e-15);
}

#[test]
fn errors_exit_nonzero_with_one_line() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        vec!["qmp", "--chart", "no-such-chart", "--at", "1"],
        vec!["qmp", "--chart", "polar2", "--at", "-1,0"],
        vec!["qmp", "--chart", "cartesian:2"],
        vec!["spectrum", "--chart", "circle-deformed:0", "--hbar", "-1"],
        vec!["spectrum", "--chart", "circle-deformed:0", "--variant", "XYZ"],
        vec!["qmp", "--chart", "missing-file.chart", "--at", "1"],
        vec!["qmp", "--bogus-flag"],
    ] {
        let o = run(d.path(), &args);
        assert!(!o.status.success(), "{args:?} should fail");
        let err = String::from_utf8_lossy(&o.stderr);
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("error: "), "{err}");
    }
}

#[test]
fn expression_file_chart() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("cone.chart"),
        "# flat cone of half-angle 30 degrees\nomega_11 = 1\nomega_22 = q1^2/4\ndomain_1 = 0, inf\n",
    )
    .unwrap();
    ok(d.path(), &["curvature", "--chart", "cone.chart", "--at", "1.5,0.3"]);
    let rows = csv_rows(&d.path().join("curvature.csv"));
    let r: f64 = rows[1][2].parse().unwrap();
    assert!(r.abs() < 1e-12, "{r}");
}

#[test]
fn propagator_and_normal_reports() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["propagator", "--chart", "cartesian:2", "--at", "0,0", "--seps", "0.5", "--dt", "0.5", "--mass", "2"]);
    let rows = csv_rows(&d.path().join("propagator.csv"));
    assert_eq!(rows[0][..5], ["s", "dt", "action", "van_vleck", "v_tilde"]);
    let s: f64 = rows[1][2].parse().unwrap();
    let dd: f64 = rows[1][3].parse().unwrap();
    assert!((s - 0.5).abs() < 1e-12);
    assert!((dd / 16.0 - 1.0).abs() < 1e-6);

    ok(d.path(), &["normal", "--chart", "cartesian:2", "--at", "0.5,0.5", "--count", "3"]);
    let rows = csv_rows(&d.path().join("normal.csv"));
    let ext = rows.iter().find(|r| r[0] == "extrapolated").unwrap();
    assert!(ext[2].parse::<f64>().unwrap().abs() < 1e-6);
}

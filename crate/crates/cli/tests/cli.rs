use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hyperid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperid")).args(args).output().expect("binary runs")
}

const SMALL: &str = "# small plate\nsurface_knots = 6\nthickness_knots = 2\nsteps = 8\ndamage = 2,2,2; 2,3,3\n";

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.cfg");
    fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_writes_outputs_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let outs = [dir.path().join("a"), dir.path().join("b")];
    for out in &outs {
        let o = hyperid(&["run", "--scenario", &cfg, "--method", "resesop", "--seed", "4", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("discrepancy_satisfied"));
    }
    for name in ["residuals.csv", "alpha_final.csv", "alpha_heatmap.pgm", "run.json", "displacement.csv"] {
        let a = fs::read(outs[0].join(name)).unwrap();
        assert!(!a.is_empty(), "{name} empty");
        assert_eq!(a, fs::read(outs[1].join(name)).unwrap(), "{name} differs");
    }
    let pgm = fs::read(outs[0].join("alpha_heatmap.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n41 41\n255\n"));
    let alpha = fs::read_to_string(outs[0].join("alpha_final.csv")).unwrap();
    assert_eq!(alpha.lines().count(), 6);
    let json = fs::read_to_string(outs[0].join("run.json")).unwrap();
    assert!(json.contains("\"reason\": \"discrepancy_satisfied\""));
    assert!(json.contains("\"seed\": 4"));
}

#[test]
fn compare_writes_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("cmp");
    let o = hyperid(&["compare", "--scenario", &cfg, "--max-iter", "400", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["resesop/run.json", "landweber/run.json", "comparison.csv", "summary.csv", "comparison.json"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("resesop,"));
    assert!(summary.lines().nth(2).unwrap().starts_with("landweber,"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("o");
    let o = hyperid(&[
        "run", "--scenario", &cfg, "--method", "landweber", "--max-iter", "3", "--set", "name=tiny", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json = fs::read_to_string(out.join("run.json")).unwrap();
    assert!(json.contains("\"name\": \"tiny\""));
    assert!(json.contains("\"reason\": \"iteration_limit\""));
    assert_eq!(fs::read_to_string(out.join("residuals.csv")).unwrap().lines().count(), 5);
}

#[test]
fn bad_configuration_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.cfg");
    fs::write(&p, "surface_knots = 6\ncolour = red\n").unwrap();
    let out = dir.path().join("o");
    let o = hyperid(&["run", "--scenario", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
    assert!(!out.exists());

    let o = hyperid(&["run", "--scenario", "exp1", "--delta", "1", "--relative-noise", "0.1", "--out", "x"]);
    assert!(!o.status.success());
    let o = hyperid(&["run", "--scenario", "exp1", "--method", "gauss", "--out", "x"]);
    assert!(!o.status.success());
}

#[test]
fn selftest_passes() {
    let o = hyperid(&["selftest"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}");
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 7);
    assert!(!stdout.contains("FAIL"));
}

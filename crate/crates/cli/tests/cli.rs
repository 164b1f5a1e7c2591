use std::path::Path;
use std::process::{Command, Output};

fn hgtlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgtlab"))
        .args(args)
        .output()
        .expect("spawn hgtlab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in\n{text}"))
}

#[test]
fn thresholds_for_unit_parameters() {
    let o = hgtlab(&["thresholds"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert_eq!(value(&s, "regime"), "monomorphic-convergence");
    let d1: f64 = value(&s, "d1").parse().unwrap();
    let mu1: f64 = value(&s, "mu1").parse().unwrap();
    assert!((d1 - 1.6061).abs() < 1e-3);
    assert!((mu1 - 1.8870).abs() < 1e-3);
}

#[test]
fn thresholds_beyond_mu1() {
    let o = hgtlab(&["thresholds", "--set", "g=0.065", "--set", "tau=0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert_eq!(value(&s, "regime"), "beyond-mu1");
    let mu: f64 = value(&s, "mu").parse().unwrap();
    assert!((mu - 0.5 / 0.13).abs() < 1e-12);
}

#[test]
fn raw_arctan_is_a_hypothesis_violation() {
    let o = hgtlab(&["thresholds", "--set", "kernel=arctan-raw"]);
    assert_eq!(o.status.code(), Some(2));
    let s = stdout(&o);
    assert!(s.contains("violated: HT.origin"), "{s}");
    assert!(s.contains("H'(0)"), "{s}");
}

#[test]
fn coarse_grid_is_a_config_error() {
    let o = hgtlab(&["simulate-eps", "--set", "N=8"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("grid-resolution invariant violated"));
}

#[test]
fn unparsable_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.cfg");
    std::fs::write(&p, "g = 1\ntau = oops\n").unwrap();
    let o = hgtlab(&["thresholds", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_config_error() {
    let o = hgtlab(&["classify", "--set", "gamma=3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn classify_suicide_regime() {
    let o = hgtlab(&["classify", "--set", "tau=2.2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert_eq!(value(&s, "regime"), "suicide-finite-time");
    let z: f64 = value(&s, "predicted_extinction_trait").parse().unwrap();
    assert!((z - 1.0).abs() < 1e-12);
}

fn limit_run(dir: &Path, extra: &[&str]) -> (Output, String) {
    let mut args = vec!["simulate-limit", "--out", dir.to_str().unwrap(), "--set", "N=257"];
    args.extend_from_slice(extra);
    let o = hgtlab(&args);
    let csv = std::fs::read_to_string(dir.join("limit_record.csv")).unwrap_or_default();
    (o, csv)
}

#[test]
fn limit_run_converges() {
    let dir = tempfile::tempdir().unwrap();
    let (o, csv) = limit_run(dir.path(), &["--snapshots", "100"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let last = csv.lines().last().unwrap();
    assert!(last.contains("converged"), "{last}");
    assert!(dir.path().join("snapshots").read_dir().unwrap().count() > 0);
}

#[test]
fn limit_run_goes_extinct() {
    let dir = tempfile::tempdir().unwrap();
    let (o, csv) = limit_run(dir.path(), &["--set", "tau=2.2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let last = csv.lines().last().unwrap();
    assert!(last.contains("extinction"), "{last}");
    let zbar: f64 = last.rsplit("zbar=").next().unwrap().parse().unwrap();
    assert!((zbar - 1.0).abs() < 1e-2);
}

#[test]
fn records_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let strip = |s: String| -> Vec<String> {
        s.lines().filter(|l| !l.starts_with("# generated_unix=")).map(str::to_string).collect()
    };
    let (_, ca) = limit_run(a.path(), &["--set", "T=2"]);
    let (_, cb) = limit_run(b.path(), &["--set", "T=2"]);
    assert!(!ca.is_empty());
    assert_eq!(strip(ca), strip(cb));
}

#[test]
fn cross_check_requires_convergent_regime() {
    let o = hgtlab(&["cross-check", "--set", "tau=2.2"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

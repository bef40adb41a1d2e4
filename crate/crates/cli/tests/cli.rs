use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn fanlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fanlab")).args(args).output().expect("binary runs")
}

fn build(profile: &str, dir: &Path) {
    let out = fanlab(&["build", "--config", profile, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

/// CSV text with the runtime column removed.
fn without_runtime(csv_text: &str) -> String {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let skip = headers.iter().position(|h| h == "runtime_ms").unwrap();
    let mut out = String::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let kept: Vec<&str> = rec.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, v)| v).collect();
        out.push_str(&kept.join("|"));
        out.push('\n');
    }
    out
}

#[test]
fn build_writes_matrices_and_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    build("thm1", a.path());
    build("thm1", b.path());
    for f in ["F_in_E.mtx", "E_in_F.mtx", "T.mtx", "schedule.toml"] {
        assert!(a.path().join(f).exists(), "{f}");
    }
    let ma = fs::read_to_string(a.path().join("manifest.toml")).unwrap();
    let mb = fs::read_to_string(b.path().join("manifest.toml")).unwrap();
    assert_eq!(ma, mb);
    assert!(ma.contains("n_trunc = 400000"));
    assert_eq!(ma.matches("sha256").count(), 3);
}

#[test]
fn invalid_config_is_rejected_with_violations() {
    let dir = TempDir::new().unwrap();
    let text = fanlab::profiles::THM1.replace("xi = 4\n", "xi = 4\nnu = 250\n");
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, text).unwrap();
    let out = fanlab(&["build", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nu"), "{err}");
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = fanlab(&["verify", "--build", dir.path().to_str().unwrap(), "--suite", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}

#[test]
fn boundedness_report_and_exit_code() {
    let dir = TempDir::new().unwrap();
    build("thm1", dir.path());
    let out = fanlab(&["verify", "--build", dir.path().to_str().unwrap(), "--suite", "boundedness"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv_text = fs::read_to_string(dir.path().join("report-boundedness.csv")).unwrap();
    for id in ["block.s1.local_growth", "block.s1.leak_down", "norm.t", "basis.roundtrip"] {
        assert!(csv_text.contains(id), "{id}");
    }
    assert!(dir.path().join("report-boundedness.toml").exists());
}

#[test]
fn reflexivity_is_refused_on_the_hypercyclic_profile() {
    let dir = TempDir::new().unwrap();
    build("thm1", dir.path());
    let out = fanlab(&["verify", "--build", dir.path().to_str().unwrap(), "--suite", "reflexivity"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("refused"));
}

#[test]
fn all_suites_on_the_reflexive_profile_are_reproducible() {
    let dir = TempDir::new().unwrap();
    build("orbit-reflexive", dir.path());
    let args = |out: &Path| {
        vec![
            "verify".to_string(),
            "--build".into(),
            dir.path().to_str().unwrap().into(),
            "--suite".into(),
            "all".into(),
            "--seed".into(),
            "3".into(),
            "--trials".into(),
            "20000".into(),
            "--pairs".into(),
            "6".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    for r in [&r1, &r2] {
        let a = args(r);
        let out = fanlab(&a.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    }
    let a = fs::read_to_string(r1.join("report-all.csv")).unwrap();
    let b = fs::read_to_string(r2.join("report-all.csv")).unwrap();
    assert_eq!(without_runtime(&a), without_runtime(&b));
    assert!(a.contains("refl.ta_e0") && a.contains("unicell.s2.compare"));
}

#[test]
fn stale_build_is_detected() {
    let dir = TempDir::new().unwrap();
    build("thm1", dir.path());
    let sched = dir.path().join("schedule.toml");
    let text: String = fs::read_to_string(&sched)
        .unwrap()
        .lines()
        .map(|l| if l.starts_with("gamma =") { "gamma = 0.003\n".to_string() } else { format!("{l}\n") })
        .collect();
    fs::write(&sched, text).unwrap();
    let out = fanlab(&["verify", "--build", dir.path().to_str().unwrap(), "--suite", "fan"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));
}

#[test]
fn orbit_distances() {
    let dir = TempDir::new().unwrap();
    build("thm1", dir.path());
    let d = dir.path().to_str().unwrap();

    let out = fanlab(&["orbit", "--build", d, "--x", "f:", "--targets", "e:1=1;f:2=3", "--steps", "5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 7);
    for row in &rows[1..] {
        let cols: Vec<f64> = row.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert_eq!(cols, vec![1.0, 3.0]);
    }

    let out = fanlab(&["orbit", "--build", d, "--x", "f:0=1", "--targets", "e:1=1", "--steps", "0"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("0,"));

    let out = fanlab(&["orbit", "--build", d, "--x", "f:0=1", "--targets", "e:1=1", "--steps", "2"]);
    let second: f64 = String::from_utf8(out.stdout).unwrap().lines().nth(2).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(second, 0.0);

    let out = fanlab(&["orbit", "--build", d, "--x", "f:0=abc", "--targets", "e:1=1", "--steps", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

use std::path::Path;
use std::process::{Command, Output};

fn camab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn invalid_config_exits_with_one_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[algorithm]\ndelta = -0.5\n");
    let out = camab(dir.path(), &["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("algorithm.delta"));

    let out = camab(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(dir.path(), "ok.toml", "[verify]\nmc_runs = 20\n");
    let out = camab(dir.path(), &["verify", "--config", &ok, "--out", "ok.csv", "--no-timestamp"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("ok.csv")).unwrap();
    assert!(report.starts_with("suite,spec,check,arm,lhs,rhs,holds,note\n"));
    assert!(!report.contains(",false,"));

    let halved = write(dir.path(), "halved.toml", "[verify]\nepsilon_scale = 0.5\nmc_runs = 20\n");
    let out = camab(dir.path(), &["verify", "--config", &halved, "--out", "halved.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let report = std::fs::read_to_string(dir.path().join("halved.csv")).unwrap();
    assert!(report.lines().any(|l| l.contains(",prop1_lower,") && l.contains(",false,")));
}

#[test]
fn run_writes_steps_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "two.toml",
        "environment = \"synthetic\"\n[algorithm]\nkind = \"ucb\"\nn = 10\n[synthetic]\nbase = [{ mean = 1.0, std = 0.0 }, { mean = 0.0, std = 0.0 }]\nabstract = [{ mean = 1.0, std = 0.0 }]\nomega = [0, 0]\n",
    );
    let out = camab(dir.path(), &["run", "--config", &cfg, "--out", "r.csv", "--no-timestamp"]);
    assert!(out.status.success());
    let steps = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let arms: Vec<&str> = steps.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(arms.iter().filter(|&&a| a == "0").count(), 8);
    assert_eq!(arms.len(), 10);
    let summary = std::fs::read_to_string(dir.path().join("r.summary.csv")).unwrap();
    assert!(summary.contains("cumulative_regret,2\n"));
}

#[test]
fn simulate_dumps_a_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = camab(dir.path(), &["simulate", "--seed", "3", "--no-timestamp"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("simulate.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,community,s,i,r"));
    assert_eq!(lines.next(), Some("0,0,90,10,0"));
    assert_eq!(text.lines().count(), 1 + 101 * 10);
}

#[test]
fn measure_on_default_sirs_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = camab(dir.path(), &["measure", "--seed", "2024", "--out", "m.csv", "--no-timestamp"]);
    assert!(out.status.success());
    let got = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/measure_sirs_default.csv");
    if std::env::var_os("CAMAB_BLESS").is_some() {
        std::fs::write(&golden, &got).unwrap();
    }
    let want = std::fs::read_to_string(golden).expect("golden file; regenerate with CAMAB_BLESS=1");
    assert_eq!(got, want);
    let fields: Vec<f64> = got.lines().nth(1).unwrap().split(',').take(3).map(|x| x.parse().unwrap()).collect();
    assert!(fields.iter().all(|v| v.is_finite() && *v > 0.0));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn lmex(args: &[&str], out_dir: &Path, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lmex"));
    cmd.args(args).env("LMEX_OUTPUT_DIR", out_dir).env_remove("LMEX_THREADS");
    if let Some(t) = threads {
        cmd.env("LMEX_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn stderr_line(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr).into_owned();
    assert_eq!(text.lines().count(), 1, "{text}");
    text.trim_end().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_group_on_three_site_pseudorotation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("g3.toml");
    let out = lmex(&["verify-group", cfg.to_str().unwrap()], dir.path(), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("g3_verify.json"));
    let gamma = report["groups"][0]["checks"][0]["head_gamma"].as_f64().unwrap();
    assert!((gamma + 1.0).abs() < 1e-10);
    assert!(dir.path().join("g3_verify.manifest.json").exists());
}

#[test]
fn verify_group_rejects_path_topology() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("path3.toml");
    let out = lmex(&["verify-group", cfg.to_str().unwrap()], dir.path(), None);
    assert_eq!(out.status.code(), Some(4));
    let line = stderr_line(&out);
    assert!(line.starts_with("error kind=verification code=4:"), "{line}");
    assert!(line.contains("eigenrelation violated"));
}

#[test]
fn non_abelian_groups_verify() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["g3_minus_g2.toml", "g4_minus_g3.toml"] {
        let cfg = configs().join(name);
        let out = lmex(&["verify-group", cfg.to_str().unwrap()], dir.path(), None);
        assert_eq!(out.status.code(), Some(0), "{name}");
    }
}

#[test]
fn sweep_shape_on_two_site_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("two_site.toml");
    let out = lmex(&["sweep", cfg.to_str().unwrap()], dir.path(), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("two_site_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 41);
    assert_eq!(csv.lines().next(), Some("t_over_tau,sigma_traditional,sigma_lmex"));
    let report = json(&dir.path().join("two_site_sweep.json"));
    let r2 = report["radius_traditional"].as_f64().unwrap();
    let rx = report["radius_lmex"].as_f64().unwrap();
    assert!(rx > 5.0 * r2 && r2 > 0.0);
    assert!(report["sigma_definition"].as_str().unwrap().starts_with("relative-frobenius"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.toml", "[system]\nsites = 3\n[exchange]\n[[exchange.groups]]\nh = 3\nn = 2\n");
    let out = lmex(&["sweep", &bad], dir.path(), None);
    assert_eq!(out.status.code(), Some(2));
    let line = stderr_line(&out);
    assert!(line.contains("N must equal (h²−h)/2 for complete head group"), "{line}");

    let typo = write_config(
        dir.path(),
        "typo.toml",
        "[system]\nsites = 2\n[exchange]\n[[exchange.distinguishable]]\nsites = [0, 1]\ntua = 1e-5\n",
    );
    let out = lmex(&["simulate", &typo], dir.path(), None);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error kind=config code=2:"));

    let out = lmex(&["simulate", "/nonexistent/config.toml"], dir.path(), None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "div.toml",
        "[system]\nsites = 2\n[exchange]\n[[exchange.distinguishable]]\nsites = [0, 1]\n[method]\nvariant = \"lme2\"\nstep_over_tau = 3.0\nduration_over_tau = 60.0\n",
    );
    let out = lmex(&["simulate", &cfg], dir.path(), None);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_line(&out).starts_with("error kind=divergence code=3:"));
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let text = r#"
name = "det"
[system]
sites = 3
shifts_hz = [200.0, -120.0]
couplings_hz = [[0.0, 9.0], [9.0, 0.0]]
[exchange]
[[exchange.groups]]
h = 3
[analysis]
family = "G3-G2"
trials = 4
study_spins = 2
duration_over_tau = 1.0
grid = { values = [0.05, 0.1, 0.2] }
"#;
    let cfg = write_config(a.path(), "det.toml", text);
    for cmd in ["sweep", "study", "simulate"] {
        assert_eq!(lmex(&[cmd, &cfg], a.path(), Some("1")).status.code(), Some(0), "{cmd}");
        assert_eq!(lmex(&[cmd, &cfg], b.path(), Some("3")).status.code(), Some(0), "{cmd}");
    }
    for file in ["det_sweep.csv", "det_sweep.json", "det_study.csv", "det_study.json", "det_simulate_trajectory.csv", "det_simulate.json"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file} differs");
    }
    let manifest = json(&a.path().join("det_study.manifest.json"));
    assert_eq!(manifest["rng_seeds"][0].as_u64(), Some(0));
    assert_eq!(manifest["threads"].as_u64(), Some(1));
    assert_eq!(manifest["config"]["analysis"]["trials"].as_u64(), Some(4));
}

#[test]
fn check_config_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("two_site.toml");
    let out = lmex(&["check-config", cfg.to_str().unwrap()], dir.path(), None);
    assert_eq!(out.status.code(), Some(0));
    let echo = String::from_utf8(out.stdout).unwrap();
    assert!(echo.contains("variant = \"lmex\""));
    assert!(echo.contains("points = 40"));
    let first = lmex_cli::parse_config(&echo).unwrap();
    assert_eq!(lmex_cli::parse_config(&first.to_toml()).unwrap(), first);
}

#[test]
fn output_dir_override() {
    let dir = tempfile::tempdir().unwrap();
    let nested = dir.path().join("nested/out");
    let cfg = configs().join("two_site.toml");
    let out = lmex(&["simulate", cfg.to_str().unwrap()], &nested, None);
    assert_eq!(out.status.code(), Some(0));
    assert!(nested.join("two_site_simulate_trajectory.csv").exists());
}
